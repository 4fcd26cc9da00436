"""Sampling-based verification of G-equivariance of steerable NODEs.

``check_equivariance`` compares ``L_g Psi(p, v)`` with ``Psi(L_g(p, v))``
under the induced action ``L_g(p, v) = (g p, rho(c(g, p)) v)`` on random
triples, and also reports the local steering condition

    c(g, Phi_p(1)) h_p(1)  vs  h_{gp}(1) c(g, p)

both as raw stabiliser parameters and after applying rho (so elements of
the kernel of rho are quotiented out).
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import groups as G
from .bundle import SPACE_DIMS, SectionChart, base_distance
from .connection import coefficient_connection, invariance_check
from .errors import ChartExhausted
from .features import ROT2, Representation
from .fields import ConstantField, VectorField, push_field
from .transport import SteerableModel, integrate_base, run_batch, steering_endpoint

SEED = 42
MAX_REJECTIONS = 1000


@dataclass
class EquivarianceReport:
    samples: int
    base_residual: float
    fibre_residual: float
    local_condition_residual: float
    local_raw_residual: float
    witnesses: dict[str, dict[str, list]] = field(default_factory=dict)

    def passed(self, tol: float) -> bool:
        return max(self.base_residual, self.fibre_residual, self.local_condition_residual) <= tol

    def to_json(self) -> dict[str, Any]:
        return {
            "samples": self.samples,
            "base_residual": self.base_residual,
            "fibre_residual": self.fibre_residual,
            "local_condition_residual": self.local_condition_residual,
            "local_raw_residual": self.local_raw_residual,
            "witnesses": self.witnesses,
        }


def sample_points(space: str, rng: np.random.Generator, size: int, scale: float = 2.0) -> np.ndarray:
    if space == "S2":
        x = rng.normal(size=(size, 3))
        return x / np.linalg.norm(x, axis=1, keepdims=True)
    if space == "S1":
        return rng.uniform(0.0, G.TWO_PI, size=(size, 1))
    return rng.uniform(-scale, scale, size=(size, SPACE_DIMS[space]))


def sample_features(rho: Representation, rng: np.random.Generator, size: int) -> np.ndarray:
    """Unit vectors of V (uniform on the circle or sphere; signs in one dimension)."""
    x = rng.normal(size=(size, rho.dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _paths_inside(model: SteerableModel, points: np.ndarray) -> np.ndarray:
    """Per-sample flag: the whole base path stays in the chart."""
    nodes = integrate_base(model.field, points, model.n_steps)
    return np.all(model.chart.contains(nodes), axis=0)


_DRAWS: OrderedDict = OrderedDict()
_DRAW_CACHE_SIZE = 16


def _draw(model: SteerableModel, samples: int, seed: int):
    """Rejection-sample (g, p, v) so that every point the check touches is in the chart.

    The draw does not depend on the connection, so it is memoised on the
    remaining model data; refitting a connection reuses the same samples.
    """
    key = (model.field.key(), repr(model.chart.to_json()), model.group.name, model.n_steps,
           model.rep.dim, samples, seed)
    if key in _DRAWS:
        _DRAWS.move_to_end(key)
        return _DRAWS[key]
    out = _draw_uncached(model, samples, seed)
    for arr in out:
        arr.setflags(write=False)
    _DRAWS[key] = out
    if len(_DRAWS) > _DRAW_CACHE_SIZE:
        _DRAWS.popitem(last=False)
    return out


def _draw_uncached(model: SteerableModel, samples: int, seed: int):
    rng = np.random.default_rng(seed)
    chart, q = model.chart, model.quotient
    got_g, got_p, got_v = [], [], []
    have = rejected = 0
    while have < samples:
        n = samples - have
        gc = G.random_coords(model.group, rng, n)
        p = sample_points(chart.space, rng, n)
        v = sample_features(model.rep, rng, n)
        ok = chart.contains(p) & chart.contains(q.act(gc, p))
        if ok.any():
            idx = np.flatnonzero(ok)
            ok[idx] &= _paths_inside(model, p[idx]) & _paths_inside(model, q.act(gc[idx], p[idx]))
        if ok.any():
            idx = np.flatnonzero(ok)
            end = integrate_base(model.field, p[idx], model.n_steps)[-1]
            ok[idx] &= chart.contains(q.act(gc[idx], end))
        rejected += int((~ok).sum())
        if rejected > MAX_REJECTIONS:
            raise ChartExhausted(f"rejected {rejected} draws while sampling inside the chart")
        got_g.append(gc[ok])
        got_p.append(p[ok])
        got_v.append(v[ok])
        have += int(ok.sum())
    return np.concatenate(got_g), np.concatenate(got_p), np.concatenate(got_v)


def local_condition_residuals(model: SteerableModel, c_end, h_p, h_gp, c_start):
    """Raw and rho-quotiented mismatch of c(g, Phi_p(1)) h_p(1) against h_gp(1) c(g, p)."""
    lhs = np.asarray(c_end) + np.asarray(h_p)
    rhs = np.asarray(h_gp) + np.asarray(c_start)
    if model.quotient.h_periodic:
        raw = np.abs(G.circle_diff(lhs, rhs))
    else:
        raw = np.abs(lhs - rhs)
    rho = model.rep
    quotiented = np.linalg.norm(rho.matrix(lhs) - rho.matrix(rhs), axis=(-2, -1))
    return raw, quotiented


def evaluate_triples(model: SteerableModel, gc, p, v, steer_shift: float = 0.0) -> dict[str, np.ndarray]:
    """Per-sample residuals of the equivariance check on given triples.

    ``steer_shift`` right-multiplies h_p(1) by the stabiliser element with that
    parameter (used to plant a mismatch in the local condition).
    """
    chart, q, rho = model.chart, model.quotient, model.rep
    gc = np.asarray(gc, dtype=float)
    p = np.atleast_2d(np.asarray(p, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))

    end_p, _ = run_batch(model, p, v)
    h_p = steering_endpoint(model, p) + steer_shift
    w_p = rho.apply(h_p, v)
    # L_g Psi(p, v)
    left_base = q.act(gc, end_p)
    c_end = chart.cocycle_param(gc, end_p)
    left_feat = rho.apply(c_end, w_p)
    # Psi(L_g(p, v))
    gp = q.act(gc, p)
    c_start = chart.cocycle_param(gc, p)
    right_base, right_feat = run_batch(model, gp, rho.apply(c_start, v))
    h_gp = steering_endpoint(model, gp)

    raw, quot = local_condition_residuals(model, c_end, h_p, h_gp, c_start)
    return {
        "base": base_distance(chart.space, left_base, right_base),
        "fibre": np.linalg.norm(left_feat - right_feat, axis=-1),
        "local": quot,
        "local_raw": raw,
    }


def _witness(gc, p, v, i) -> dict[str, list]:
    return {"g": np.asarray(gc[i]).reshape(-1).tolist(), "p": p[i].tolist(), "v": v[i].tolist()}


def check_equivariance(model: SteerableModel, samples: int = 100, seed: int = SEED,
                       witnesses: Sequence[tuple] = (), steer_shift: float = 0.0) -> EquivarianceReport:
    """Sampled comparison of L_g Psi and Psi L_g.

    ``witnesses`` are extra (g coordinates, p, v) triples evaluated alongside
    the random draws.  Raises ChartExhausted when sampling inside the chart
    keeps failing.
    """
    gc, p, v = _draw(model, samples, seed) if samples > 0 else (
        np.zeros((0,) + model.group.coord_shape), np.zeros((0, SPACE_DIMS[model.chart.space])), np.zeros((0, model.rep.dim)))
    if witnesses:
        gw = G.canonical_coords(model.group, np.stack([np.asarray(w[0], dtype=float) for w in witnesses]))
        pw = np.stack([np.asarray(w[1], dtype=float) for w in witnesses])
        vw = np.stack([np.asarray(w[2], dtype=float) for w in witnesses])
        gc, p, v = np.concatenate([gw, gc]), np.concatenate([pw, p]), np.concatenate([vw, v])
    res = evaluate_triples(model, gc, p, v, steer_shift)
    wit = {name: _witness(gc, p, v, int(np.argmax(r))) for name, r in res.items()}
    return EquivarianceReport(
        samples=len(p),
        base_residual=float(res["base"].max()),
        fibre_residual=float(res["fibre"].max()),
        local_condition_residual=float(res["local"].max()),
        local_raw_residual=float(res["local_raw"].max()),
        witnesses=wit,
    )


def replay_witness(model: SteerableModel, witness: dict[str, list], steer_shift: float = 0.0) -> dict[str, float]:
    """Re-evaluate one stored witness; returns its residuals."""
    g = np.asarray(witness["g"], dtype=float)
    g = g.reshape(model.group.coord_shape)[None]
    res = evaluate_triples(model, g, [witness["p"]], [witness["v"]], steer_shift)
    return {k: float(val[0]) for k, val in res.items()}


def check_local_condition(model: SteerableModel, samples: int = 100, seed: int = SEED,
                          steer_shift: float = 0.0) -> dict[str, float]:
    rep = check_equivariance(model, samples, seed, steer_shift=steer_shift)
    return {"residual": rep.local_condition_residual, "raw_residual": rep.local_raw_residual}


def field_invariance_residual(field: VectorField, chart: SectionChart, samples: int = 100, seed: int = SEED) -> float:
    """max |(L_g)_* phi_p - phi_{gp}| over sampled g and p."""
    rng = np.random.default_rng(seed)
    q = chart.quotient
    gc = G.random_coords(chart.group, rng, samples)
    p = sample_points(chart.space, rng, samples)
    pushed = push_field(gc, field(p), chart.group.kind)
    return float(np.linalg.norm(pushed - field(q.act(gc, p)), axis=-1).max())


def counterexample_suite(f: str = "sin(y)", samples: int = 100, seed: int = SEED, n_steps: int = 1024) -> dict[str, Any]:
    """omega = d theta + f(y) dy with phi = d/dx on R^2 x U(1).

    Reports the invariance residual of omega (with a planted witness that
    shifts y from 0 to pi/2) and the equivariance report of the resulting
    steerable NODE.
    """
    chart = SectionChart(G.R2xU1, "R2")
    conn = coefficient_connection(chart.quotient, ["0", f, "1"])
    model = SteerableModel(chart, ConstantField("R2", [1.0, 0.0]), conn, ROT2, n_steps)
    inv = invariance_check(conn, samples, seed, witnesses=[((0.0, np.pi / 2, 0.0), (0.0, 0.0, 0.0))])
    eq = check_equivariance(model, samples, seed)
    invariant = inv["residual"] <= 1e-9
    equivariant = eq.passed(1e-7)
    return {
        "f": f,
        "invariance": inv,
        "equivariance": eq.to_json(),
        "connection_invariant": bool(invariant),
        "node_equivariant": bool(equivariant),
        "verdict": "split" if (equivariant and not invariant) else ("both" if equivariant else "neither"),
    }
