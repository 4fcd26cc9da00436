"""Fitting vector-field and connection coefficients to transport data.

Parameters are gathered from a :class:`SteerableModel` by name:

* ``"field"``: the field's parameter vector (constant coefficients, rotation
  generator, or network weights);
* ``"wang"``: coordinates of the Wang map along :func:`wang_free_basis`, so
  every iterate satisfies both Wang conditions and the connection stays
  G-invariant.

A mask maps each name to the list of indices to learn (``None`` for all).
Gradients are central finite differences; the optimiser is plain gradient
descent with a fixed step.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .bundle import base_distance
from .connection import canonical_wang, wang_connection, wang_free_basis
from .errors import Diverged, Stalled
from .transport import SteerableModel, run_batch

DIVERGENCE_LIMIT = 1e6
STALL_WINDOW = 50


@dataclass
class TrainConfig:
    mask: dict[str, list[int] | None] = field(default_factory=lambda: {"wang": None})
    lr: float = 0.1
    iterations: int = 500
    fd_step: float = 1e-5
    weights: tuple[float, float] = (1.0, 1.0)  # (base term, fibre term)
    seed: int = 0
    jitter: float = 1e-2
    raise_on_stall: bool = False

    def __post_init__(self):
        if not 1e-7 <= self.fd_step <= 1e-3:
            raise ValueError("finite-difference step must lie in [1e-7, 1e-3]")
        wb, wf = self.weights
        if wb < 0 or wf < 0 or (wb == 0 and wf == 0):
            raise ValueError("loss weights must be nonnegative and not both zero")
        unknown = set(self.mask) - {"field", "wang"}
        if unknown:
            raise ValueError(f"unknown parameter groups {sorted(unknown)}")

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "TrainConfig":
        d = dict(d)
        if "weights" in d:
            d["weights"] = tuple(d["weights"])
        return cls(**d)

    def to_json(self) -> dict[str, Any]:
        return {"mask": self.mask, "lr": self.lr, "iterations": self.iterations, "fd_step": self.fd_step,
                "weights": list(self.weights), "seed": self.seed, "jitter": self.jitter,
                "raise_on_stall": self.raise_on_stall}


@dataclass
class Dataset:
    p: np.ndarray
    v: np.ndarray
    p_out: np.ndarray
    v_out: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.p, self.v = np.atleast_2d(self.p).astype(float), np.atleast_2d(self.v).astype(float)
        self.p_out, self.v_out = np.atleast_2d(self.p_out).astype(float), np.atleast_2d(self.v_out).astype(float)
        if not (len(self.p) == len(self.v) == len(self.p_out) == len(self.v_out)):
            raise ValueError("dataset columns have different lengths")

    def __len__(self):
        return len(self.p)

    def check_chart(self, model: SteerableModel) -> None:
        model.chart.require(self.p)
        model.chart.require(self.p_out)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"meta": self.meta})]
        for row in zip(self.p, self.v, self.p_out, self.v_out):
            lines.append(json.dumps({k: r.tolist() for k, r in zip(("p", "v", "p_out", "v_out"), row)}))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Dataset":
        """Parse JSON lines; a leading ``{"meta": ...}`` line is optional.
        Errors name the offending line number."""
        meta: dict[str, Any] = {}
        cols: dict[str, list] = {"p": [], "v": [], "p_out": [], "v_out": []}
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if "meta" in rec and len(rec) == 1:
                    meta = rec["meta"]
                    continue
                for k in cols:
                    cols[k].append([float(x) for x in rec[k]])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"dataset line {lineno}: {exc}") from None
        if not cols["p"]:
            raise ValueError("dataset is empty")
        try:
            return cls(*(np.array(cols[k]) for k in ("p", "v", "p_out", "v_out")), meta=meta)
        except ValueError as exc:
            raise ValueError(f"dataset rows are inconsistent: {exc}") from None


def make_dataset(model: SteerableModel, size: int = 64, seed: int = 0, noise: float = 0.0,
                 scale: float = 2.0) -> Dataset:
    """Pairs ((p, v), Psi(p, v)) with unit features; optional Gaussian noise on
    the outputs followed by retraction onto S2."""
    from .equivariance import sample_features, sample_points

    rng = np.random.default_rng(seed)
    chart = model.chart
    pts = []
    while sum(len(x) for x in pts) < size:
        cand = sample_points(chart.space, rng, size, scale)
        pts.append(cand[chart.contains(cand)])
    p = np.concatenate(pts)[:size]
    v = sample_features(model.rep, rng, size)
    p_out, v_out = run_batch(model, p, v)
    if noise > 0:
        p_out = p_out + noise * rng.normal(size=p_out.shape)
        v_out = v_out + noise * rng.normal(size=v_out.shape)
        if chart.space == "S2":
            p_out = p_out / np.linalg.norm(p_out, axis=1, keepdims=True)
    return Dataset(p, v, p_out, v_out, meta={"generator": "model", "noise": noise, "seed": seed})


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def _wang_coords(model: SteerableModel) -> np.ndarray:
    conn = model.connection
    if conn.kind != "wang":
        raise ValueError("only Wang connections have learnable coefficients")
    basis = wang_free_basis(model.quotient)
    delta = conn.wang.coeffs - canonical_wang(model.quotient)
    return basis @ delta[0] if len(basis) else np.zeros(0)


def _indices(mask_entry, n: int) -> list[int]:
    return list(range(n)) if mask_entry is None else list(mask_entry)


def get_params(model: SteerableModel, mask: dict[str, list[int] | None]) -> np.ndarray:
    out = []
    if "field" in mask:
        theta = model.field.params()
        out.append(theta[_indices(mask["field"], len(theta))])
    if "wang" in mask:
        w = _wang_coords(model)
        out.append(w[_indices(mask["wang"], len(w))])
    return np.concatenate(out) if out else np.zeros(0)


def set_params(model: SteerableModel, mask: dict[str, list[int] | None], theta) -> SteerableModel:
    theta = np.asarray(theta, dtype=float)
    pos = 0
    kw: dict[str, Any] = {}
    if "field" in mask:
        full = model.field.params()
        idx = _indices(mask["field"], len(full))
        full[idx] = theta[pos: pos + len(idx)]
        pos += len(idx)
        kw["field"] = model.field.with_params(full)
    if "wang" in mask:
        w = _wang_coords(model)
        idx = _indices(mask["wang"], len(w))
        w[idx] = theta[pos: pos + len(idx)]
        pos += len(idx)
        basis = wang_free_basis(model.quotient)
        coeffs = canonical_wang(model.quotient) + (w @ basis if len(basis) else 0.0)
        kw["connection"] = wang_connection(model.quotient, coeffs)
    if pos != len(theta):
        raise ValueError(f"expected {pos} parameters, got {len(theta)}")
    return model.replace(**kw)


# ---------------------------------------------------------------------------
# loss and fitting
# ---------------------------------------------------------------------------

def loss(model: SteerableModel, data: Dataset, weights: tuple[float, float] = (1.0, 1.0)) -> float:
    """w_base * mean |Phi_p(1) - p'|^2 + w_fibre * mean |rho(h_p(1)) v - v'|^2."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    p1, v1 = run_batch(model, data.p, data.v)
    base = np.mean(base_distance(model.chart.space, p1, data.p_out) ** 2)
    fibre = np.mean(np.sum((v1 - data.v_out) ** 2, axis=1))
    return float(weights[0] * base + weights[1] * fibre)


def gradient(model: SteerableModel, data: Dataset, mask, theta, weights, step: float) -> np.ndarray:
    g = np.zeros(len(theta))
    for i in range(len(theta)):
        up, dn = theta.copy(), theta.copy()
        up[i] += step
        dn[i] -= step
        g[i] = (loss(set_params(model, mask, up), data, weights)
                - loss(set_params(model, mask, dn), data, weights)) / (2.0 * step)
    return g


@dataclass
class FitResult:
    model: SteerableModel
    trace: list[float]
    params: list[np.ndarray]
    stalled: bool = False
    jitters: int = 0

    @property
    def final_loss(self) -> float:
        return self.trace[-1]


def fit(model: SteerableModel, data: Dataset, config: TrainConfig) -> FitResult:
    """Gradient descent on the masked parameters.

    ``trace[k]`` is the loss of the k-th iterate (``trace[0]`` is the initial
    model).  When the gradient vanishes while the loss is not yet at zero
    (a stationary point that is not a global minimum, such as the symmetric
    maximum of a periodic fibre loss), the iterate is perturbed by seeded
    Gaussian noise of size ``jitter``.  If no 50-iteration window shows a
    decrease the run halts with ``stalled`` set, or raises Stalled when
    ``raise_on_stall`` is set.
    """
    mask = config.mask
    rng = np.random.default_rng(config.seed)
    theta = get_params(model, mask)
    if len(theta) > 32:
        raise ValueError("finite-difference fitting supports at most 32 parameters")
    current = model
    value = loss(current, data, config.weights)
    trace, params = [value], [theta.copy()]
    jitters = 0
    stalled = False
    for it in range(config.iterations):
        if value <= 1e-24:
            trace.append(value)
            params.append(theta.copy())
            continue
        g = gradient(current, data, mask, theta, config.weights, config.fd_step)
        if np.linalg.norm(g) <= 1e-12 and value > 1e-12 and config.jitter > 0:
            theta = theta + config.jitter * rng.normal(size=theta.shape)
            jitters += 1
        else:
            theta = theta - config.lr * g
        current = set_params(model, mask, theta)
        value = loss(current, data, config.weights)
        if not np.isfinite(value) or value > DIVERGENCE_LIMIT:
            raise Diverged(f"loss {value:.3e} at iteration {it + 1}")
        trace.append(value)
        params.append(theta.copy())
        if len(trace) > STALL_WINDOW and value > 1e-12 and trace[-1] >= trace[-1 - STALL_WINDOW]:
            stalled = True
            if config.raise_on_stall:
                raise Stalled(f"no decrease over {STALL_WINDOW} iterations (loss {value:.3e})")
            break
    return FitResult(current, trace, params, stalled, jitters)


def gradient_check(model: SteerableModel, data: Dataset, mask, weights=(1.0, 1.0),
                   steps: Iterable[float] = (1e-5, 1e-6)) -> list[np.ndarray]:
    theta = get_params(model, mask)
    return [gradient(model, data, mask, theta, weights, s) for s in steps]
