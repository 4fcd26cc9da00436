"""Model configuration files.

A model is described by JSON of the form::

    {
      "group": "R2xU1",
      "chart": {"space": "R2", "chi": 0.0},
      "field": {"kind": "constant", "coeffs": [1, 0]},
      "connection": {"kind": "wang", "coeffs": [["pi", 1, 1]]},
      "rep": {"rep": "rot2", "n": 1},
      "n_steps": 1024
    }

Numbers may be given as strings understood by sympy (``"pi"``, ``"-pi/2"``).
Field kinds: ``constant``, ``rotation``, ``net`` and ``expression``.
Connection kinds: ``wang`` (coefficient matrix) and ``coefficient``
(one expression per algebra direction in the base coordinates).
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import sympy

from .bundle import SectionChart, quotient_for
from .connection import coefficient_connection, wang_connection
from .features import Representation
from .fields import field_from_json
from .groups import GroupSpec
from .transport import DEFAULT_STEPS, SteerableModel, model_summary


class ConfigError(ValueError):
    """The configuration file is malformed."""


def number(x) -> float:
    if isinstance(x, (int, float)):
        return float(x)
    try:
        return float(sympy.sympify(str(x)))
    except (sympy.SympifyError, TypeError, ValueError):
        raise ConfigError(f"not a number: {x!r}") from None


def numbers(xs) -> np.ndarray:
    arr = np.asarray(xs, dtype=object)
    return np.vectorize(number, otypes=[float])(arr) if arr.size else arr.astype(float)


def read_json(path: str | Path) -> dict[str, Any]:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def group_of(cfg: dict[str, Any]) -> GroupSpec:
    try:
        return GroupSpec.from_name(cfg["group"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad group entry: {exc}") from None


def model_from_json(cfg: dict[str, Any]) -> SteerableModel:
    """Build a model; malformed entries raise ConfigError, domain problems
    (such as an unsupported combination) propagate unchanged."""
    group = group_of(cfg)
    try:
        chart_cfg = dict(cfg.get("chart") or {"space": quotient_for(group).space})
        if "p0" in chart_cfg:
            chart_cfg["p0"] = numbers(chart_cfg["p0"]).tolist()
        if "chi" in chart_cfg:
            chart_cfg["chi"] = number(chart_cfg["chi"])
        chart = SectionChart.from_json(chart_cfg, group)
        fcfg = dict(cfg["field"])
        if fcfg.get("kind") in ("constant", "rotation", "net") and "coeffs" in fcfg:
            fcfg["coeffs"] = numbers(fcfg["coeffs"]).tolist()
        fld = field_from_json(fcfg, chart.space)
        ccfg = cfg.get("connection", {"kind": "wang"})
        if ccfg.get("kind", "wang") == "wang":
            coeffs = numbers(ccfg["coeffs"]) if "coeffs" in ccfg else chart.quotient.h_embedding.T
            conn = wang_connection(chart.quotient, coeffs)
        elif ccfg["kind"] == "coefficient":
            conn = coefficient_connection(chart.quotient, [str(c) for c in ccfg["coeffs"]])
        else:
            raise ConfigError(f"unknown connection kind {ccfg['kind']!r}")
        rep = Representation.from_json(cfg.get("rep", {"rep": "rot2"}))
        n_steps = int(cfg.get("n_steps", DEFAULT_STEPS))
        return SteerableModel(chart, fld, conn, rep, n_steps)
    except ConfigError:
        raise
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed model configuration: {exc!r}") from None


def load_model(path: str | Path) -> SteerableModel:
    return model_from_json(read_json(path))


def model_to_json(model: SteerableModel, **extra) -> dict[str, Any]:
    d = model_summary(model)
    d.pop("quotient")
    d.update(extra)
    return d
