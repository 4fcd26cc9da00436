"""Command-line interface: ``steerable-node <command> --config FILE ...``.

Exit codes: 0 success, 1 verification failure, 2 unreadable input,
3 domain error (chart, group support), 4 training diverged.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import density as D
from . import equivariance as E
from . import features as Fe
from . import learn as L
from . import transport as T
from .bundle import get_quotient, quotient_for
from .config import ConfigError, group_of, model_from_json, model_to_json, number, numbers, read_json
from .connection import canonical_wang, invariance_check, principal_check, wang_check, wang_free_basis
from .errors import (ChartExhausted, Diverged, NoQuotientRegistered, NormalizationDrift, NotClosed, OutsideChart,
                     UnsupportedGroup)
from .expressions import compile_expressions
from .fields import field_from_json

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_DOMAIN, EXIT_DIVERGED = 0, 1, 2, 3, 4
DOMAIN_ERRORS = (OutsideChart, UnsupportedGroup, ChartExhausted, NoQuotientRegistered, NormalizationDrift, NotClosed)


def write_csv(path: Path, header: Sequence[str], rows: np.ndarray) -> None:
    np.savetxt(path, np.atleast_2d(rows), fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def parse_input(text: str) -> tuple[np.ndarray, np.ndarray]:
    """``"x,y;v1,v2"`` -> (point, feature)."""
    try:
        p_txt, v_txt = text.split(";")
        return numbers(p_txt.split(",")), numbers(v_txt.split(","))
    except ValueError:
        raise ConfigError(f"--input must look like 'p1,p2;v1,v2', got {text!r}") from None


def _manifest(args, out: Path, outputs: list[str], started: float, residuals: dict[str, Any]) -> None:
    write_json(out / "manifest.json", {
        "command": args.command,
        "config": str(args.config) if getattr(args, "config", None) else None,
        "seed": args.seed,
        "outputs": outputs,
        "wall_clock_seconds": round(time.perf_counter() - started, 6),
        "residuals": residuals,
    })


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args, out: Path, started: float) -> int:
    cfg = read_json(args.config)
    model = model_from_json(cfg)
    outputs, summary = [], {}
    if args.input:
        p, v = parse_input(args.input)
        res = T.transport(model, p, v)
        header, rows = res.to_rows(model.rep)
        write_csv(out / "trajectory.csv", header, rows)
        summary["input"] = {"p": p.tolist(), "v": v.tolist()}
        summary["output"] = {"p": res.base_path[-1].tolist(), "v": res.final_feature.tolist()}
        summary["horizontality"] = T.lift_horizontality(model, res) if model.n_steps >= 4 else None
        outputs.append("trajectory.csv")
    if args.latitude_loop is not None:
        if model.chart.space != "S2":
            raise UnsupportedGroup("latitude loops need an S2 model")
        p0, loop = T.latitude_loop(args.latitude_loop)
        summary["holonomy"] = {"colatitude": args.latitude_loop, "start": p0.tolist(),
                               "angle": T.holonomy_angle(model, p0, [loop])}
    if not summary:
        raise ConfigError("simulate needs --input or --latitude-loop")
    write_json(out / "summary.json", summary)
    outputs.append("summary.json")
    _manifest(args, out, outputs, started, {k: summary[k] for k in ("horizontality",) if k in summary})
    return EXIT_OK


def _suite_wang(cfg: dict[str, Any], args) -> dict[str, Any]:
    group = group_of(cfg)
    q = get_quotient(cfg["quotient"]) if "quotient" in cfg else quotient_for(group)
    coeffs = numbers(cfg["connection"]["coeffs"])
    rep = wang_check(q, coeffs)
    rep["quotient"] = q.name
    rep["coeffs"] = np.atleast_2d(coeffs).tolist()
    return rep


def _suite_equivariance(cfg: dict[str, Any], args) -> dict[str, Any]:
    model = model_from_json(cfg)
    tol = float(cfg.get("tol", 1e-6))
    report = E.check_equivariance(model, int(cfg.get("samples", 100)), args.seed)
    d = report.to_json()
    d["tol"] = tol
    d["pass"] = report.passed(tol)
    return d


def _suite_connection(cfg: dict[str, Any], args) -> dict[str, Any]:
    model = model_from_json(cfg)
    tol = float(cfg.get("tol", 1e-9))
    prin = principal_check(model.connection, int(cfg.get("samples", 100)), args.seed)
    inv = invariance_check(model.connection, int(cfg.get("samples", 100)), args.seed)
    return {"principal": prin, "invariance": inv, "tol": tol,
            "pass": bool(prin["pass"] and inv["residual"] <= tol)}


def _suite_mackey(cfg: dict[str, Any], args) -> dict[str, Any]:
    model = model_from_json(cfg)
    dim = model.rep.dim
    exprs = cfg.get("feature") or [f"{k + 1}" for k in range(dim)]
    f = compile_expressions(exprs, model.chart.space)
    k = Fe.MackeyFunction(f, model.chart, model.rep)
    tol = float(cfg.get("tol", 1e-10))
    samples = int(cfg.get("samples", 100))
    mc = Fe.mackey_check(k, samples, args.seed, tol=tol)
    gc, p = Fe.sample_action_inputs(model.chart, samples, args.seed)
    rows = Fe.table_rows(model.chart, model.rep, f, gc, p)
    spread = max(float(np.abs(rows[r] - rows["local"]).max()) for r in rows)
    return {"mackey": mc, "table_rows_max_difference": spread, "tol": tol,
            "pass": bool(mc["pass"] and spread <= tol)}


def _suite_counterexample(cfg: dict[str, Any], args) -> dict[str, Any]:
    rep = E.counterexample_suite(str(cfg.get("f", "sin(y)")), int(cfg.get("samples", 100)), args.seed,
                                 int(cfg.get("n_steps", 1024)))
    rep["pass"] = rep["node_equivariant"]
    return rep


SUITES = {
    "equivariance": _suite_equivariance,
    "wang": _suite_wang,
    "mackey": _suite_mackey,
    "connection": _suite_connection,
    "counterexample": _suite_counterexample,
}


def cmd_verify(args, out: Path, started: float) -> int:
    cfg = read_json(args.config) if args.config else {}
    try:
        report = SUITES[args.suite](cfg, args)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"configuration lacks what the {args.suite} suite needs: {exc!r}") from None
    report["suite"] = args.suite
    write_json(out / "report.json", report)
    status = "PASS" if report["pass"] else "FAIL"
    print(f"{args.suite:<16}{status}")
    for key, val in _flat_residuals(report):
        print(f"  {key:<44}{val:.3e}")
    _manifest(args, out, ["report.json"], started, dict(_flat_residuals(report)))
    return EXIT_OK if report["pass"] else EXIT_FAIL


def _flat_residuals(report: dict[str, Any], prefix: str = ""):
    for k, v in report.items():
        if isinstance(v, dict) and k != "witnesses" and k != "witness":
            yield from _flat_residuals(v, f"{prefix}{k}.")
        elif isinstance(v, float) and k != "tol":
            yield f"{prefix}{k}", v


def cmd_classify(args, out: Path, started: float) -> int:
    cfg = read_json(args.config)
    group = group_of(cfg)
    q = get_quotient(cfg["quotient"]) if "quotient" in cfg else quotient_for(group)
    basis = wang_free_basis(q)
    result = {"quotient": q.name, "canonical": canonical_wang(q).tolist(),
              "free_basis": basis.tolist(), "family_dimension": len(basis)}
    write_json(out / "classification.json", result)
    print(f"{q.name}: Wang maps form a {len(basis)}-parameter family")
    _manifest(args, out, ["classification.json"], started, {})
    return EXIT_OK


def cmd_dataset(args, out: Path, started: float) -> int:
    model = model_from_json(read_json(args.config))
    data = L.make_dataset(model, args.size, args.seed, args.noise)
    data.meta["config"] = str(args.config)
    (out / "dataset.jsonl").write_text(data.to_jsonl())
    _manifest(args, out, ["dataset.jsonl"], started, {})
    return EXIT_OK


def cmd_train(args, out: Path, started: float) -> int:
    cfg = read_json(args.config)
    model = model_from_json(cfg)
    try:
        data = L.Dataset.from_jsonl(Path(args.dataset).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read dataset: {exc}") from None
    data.check_chart(model)
    try:
        tcfg = L.TrainConfig.from_json({"seed": args.seed, **cfg.get("train", {})})
    except TypeError as exc:
        raise ConfigError(f"bad train section: {exc}") from None
    result = L.fit(model, data, tcfg)
    fitted = model_to_json(result.model, fitted=True, final_loss=result.final_loss, stalled=result.stalled,
                           params=result.params[-1].tolist())
    write_json(out / "fitted_model.json", fitted)
    rows = np.column_stack([np.arange(len(result.trace)), result.trace])
    write_csv(out / "trace.csv", ["iteration", "loss"], rows)
    _manifest(args, out, ["fitted_model.json", "trace.csv"], started, {"final_loss": result.final_loss})
    return EXIT_OK


def cmd_cnf(args, out: Path, started: float) -> int:
    cfg = read_json(args.config)
    group = group_of(cfg)
    if group.kind not in ("U1", "SO2", "Rn") or (group.kind == "Rn" and group.n > 2):
        raise UnsupportedGroup(f"no density support for {group.name}")
    space = "S1" if group.kind in ("U1", "SO2") else group.name
    phi = field_from_json(cfg["field"], space)
    init = cfg.get("initial", "uniform")
    nodes = int(cfg.get("nodes", 1024 if space == "S1" else 128))
    if space == "S1" and init == "uniform":
        state = D.uniform_circle(nodes, group)
    elif space == "S1":
        logpdf = compile_expressions([init["logpdf"]], "S1")
        state = D.circle_state(lambda th: logpdf(th[:, None])[:, 0], nodes, group)
    else:
        g = init.get("gaussian", {}) if isinstance(init, dict) else {}
        state = D.gaussian_state(numbers(g.get("mean", [0.0] * group.n)), number(g.get("std", 1.0)), nodes)
    times = [number(t) for t in args.times.split(",")] if args.times else [1.0]
    snaps = D.cnf_snapshots(phi, state, times, int(cfg.get("n_steps", 1024)))
    outputs, masses = [], {}
    for t, s in zip(sorted(times), snaps):
        name = f"density_t{t:g}.csv"
        header, rows = D.snapshot_rows(s)
        write_csv(out / name, header, rows)
        outputs.append(name)
        masses[f"{t:g}"] = s.mass()
    _manifest(args, out, outputs, started, {"mass": masses})
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "classify": cmd_classify,
    "dataset": cmd_dataset,
    "train": cmd_train,
    "cnf": cmd_cnf,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steerable-node", description="Steerable neural ODEs on homogeneous spaces")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="model or task JSON")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("simulate", help="run the steerable NODE on one input")
    common(p)
    p.add_argument("--input", help="'p1,p2,...;v1,v2,...'")
    p.add_argument("--latitude-loop", type=float, default=None, metavar="COLATITUDE",
                   help="report holonomy around the latitude circle at this colatitude (S2 models)")

    p = sub.add_parser("verify", help="run a verification suite")
    common(p, config_required=False)
    p.add_argument("--suite", required=True, choices=sorted(SUITES))

    p = sub.add_parser("classify", help="list the Wang maps of a quotient")
    common(p)

    p = sub.add_parser("dataset", help="generate transport pairs from a model")
    common(p)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.0)

    p = sub.add_parser("train", help="fit model parameters to a dataset")
    common(p)
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("cnf", help="continuous normalizing flow snapshots")
    common(p)
    p.add_argument("--times", default="1", help="comma separated output times")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    try:
        return COMMANDS[args.command](args, out, started)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DOMAIN_ERRORS as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except Diverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except KeyError as exc:
        print(f"error: configuration entry missing: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        # remaining ValueErrors come from malformed inputs (dataset lines, shapes)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
