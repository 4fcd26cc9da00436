"""Base flow, steering curve, horizontal lifts and the steerable NODE map.

The base ODE ``dPhi/dt = phi(Phi)`` is integrated with classical RK4 and a
post-step retraction (renormalisation on S2, angle wrapping on S1).  The
steering ODE ``dh/dt = -A(t) h`` with ``A = omega(sigma_* phi)`` lives on a
one-dimensional abelian stabiliser, so the Munthe-Kaas RK4 update
``h <- exp(Omega) h`` reduces to adding the stage-weighted sum
``Omega = -dt/6 (A1 + 2 A2 + 2 A3 + A4)`` to the stabiliser parameter.  The
stage values of A are evaluated at the RK4 stage points of the base flow,
so both integrators share one set of stages.

Stabiliser elements along a path are stored as their scalar parameter
(angle or translation), unwrapped in time.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from . import groups as G
from .bundle import BasePoint, SectionChart
from .connection import ConnectionForm
from .errors import DimMismatch, LeftChartDomain, NotClosed, SpecMismatch
from .features import Representation
from .fields import VectorField
from .groups import GroupElement

DEFAULT_STEPS = 1024
RK4_WEIGHTS = np.array([1.0, 2.0, 2.0, 1.0]) / 6.0


@dataclass(frozen=True, eq=False)
class SteerableModel:
    chart: SectionChart
    field: VectorField
    connection: ConnectionForm
    rep: Representation
    n_steps: int = DEFAULT_STEPS

    def __post_init__(self):
        if self.field.space != self.chart.space:
            raise SpecMismatch(f"{self.field.space} field with a {self.chart.space} chart")
        if self.connection.quotient != self.chart.quotient:
            raise SpecMismatch(f"connection on {self.connection.quotient.name}, chart on {self.chart.quotient.name}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")

    @property
    def group(self):
        return self.chart.group

    @property
    def quotient(self):
        return self.chart.quotient

    def replace(self, **kw) -> "SteerableModel":
        d = dict(chart=self.chart, field=self.field, connection=self.connection, rep=self.rep, n_steps=self.n_steps)
        d.update(kw)
        return SteerableModel(**d)


# ---------------------------------------------------------------------------
# base flow
# ---------------------------------------------------------------------------

def _retract(space: str, y: np.ndarray) -> np.ndarray:
    if space == "S2":
        return y / np.linalg.norm(y, axis=-1, keepdims=True)
    if space == "S1":
        return G.wrap_angle(y)
    return y


def _rk4_flow(field: VectorField, y0: np.ndarray, n: int, horizon: float):
    """Nodes (n+1, B, d) plus stage points and velocities (n, 4, B, d)."""
    dt = horizon / n
    y = np.array(y0, dtype=float)
    nodes = np.empty((n + 1,) + y.shape)
    stages = np.empty((n, 4) + y.shape)
    vels = np.empty((n, 4) + y.shape)
    nodes[0] = y
    for k in range(n):
        k1 = field(y)
        y2 = y + 0.5 * dt * k1
        k2 = field(y2)
        y3 = y + 0.5 * dt * k2
        k3 = field(y3)
        y4 = y + dt * k3
        k4 = field(y4)
        stages[k] = (y, y2, y3, y4)
        vels[k] = (k1, k2, k3, k4)
        y = _retract(field.space, y + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0)
        nodes[k + 1] = y
    return nodes, stages, vels


def integrate_base(field: VectorField, p, n_steps: int = DEFAULT_STEPS, horizon: float = 1.0,
                   chart: SectionChart | None = None) -> np.ndarray:
    """Base path Phi_p at the n_steps + 1 grid nodes of [0, horizon].

    ``p`` is a BasePoint or a coordinate array (a stack of points is
    allowed).  With a chart, raises LeftChartDomain if a node leaves it.
    """
    coords = p.coords if isinstance(p, BasePoint) else np.asarray(p, dtype=float)
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    nodes, _, _ = _rk4_flow(field, coords, n_steps, horizon)
    if chart is not None:
        chart.require(nodes, LeftChartDomain)
    return nodes


class _FlowCache:
    """Small LRU cache of base flows together with the section data at the
    stage points, which do not depend on the connection."""

    def __init__(self, size: int = 8):
        self.size = size
        self.data: OrderedDict = OrderedDict()

    def get(self, key):
        if key in self.data:
            self.data.move_to_end(key)
            return self.data[key]
        return None

    def put(self, key, value):
        self.data[key] = value
        if len(self.data) > self.size:
            self.data.popitem(last=False)

    def clear(self):
        self.data.clear()


_CACHE = _FlowCache()


def clear_cache() -> None:
    _CACHE.clear()


def _stage_sections(chart: SectionChart, field: VectorField, stages: np.ndarray, vels: np.ndarray):
    """sigma and sigma_* phi at every stage point (normalised onto S2)."""
    if chart.space == "S2":
        pts = stages / np.linalg.norm(stages, axis=-1, keepdims=True)
        v = field(pts)
    else:
        pts, v = stages, vels
    return chart.section_coords(pts), chart.section_push(pts, v)


def _flow_with_sections(model: SteerableModel, points: np.ndarray, n: int, horizon: float):
    key = (model.field.key(), model.group.name, repr(model.chart.to_json()),
           points.tobytes(), points.shape, n, float(horizon))
    hit = _CACHE.get(key)
    if hit is not None:
        return hit
    nodes, stages, vels = _rk4_flow(model.field, points, n, horizon)
    model.chart.require(nodes, LeftChartDomain)
    sig, push = _stage_sections(model.chart, model.field, stages, vels)
    out = (nodes, sig, push)
    if sig.size <= 2_000_000:
        _CACHE.put(key, out)
    return out


def _stage_A(model: SteerableModel, sig: np.ndarray, push: np.ndarray) -> np.ndarray:
    """A = omega(sigma_* phi) at every stage, as a scalar stabiliser component."""
    if model.quotient.dim_h == 0:
        return np.zeros(sig.shape[: sig.ndim - len(model.group.coord_shape)])
    return model.connection(sig, push)[..., 0]


def _steer_from_A(A: np.ndarray, dt: float, h0) -> np.ndarray:
    """Munthe-Kaas RK4 on the one-dimensional stabiliser: cumulative Omega."""
    omega = -dt * np.tensordot(RK4_WEIGHTS, np.moveaxis(A, 1, 0), axes=1)  # (n, B)
    out = np.empty((A.shape[0] + 1,) + A.shape[2:])
    out[0] = h0
    out[1:] = h0 + np.cumsum(omega, axis=0)
    return out


def _flow(model: SteerableModel, points, horizon: float = 1.0, n: int | None = None, h0=0.0):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = model.n_steps if n is None else n
    model.chart.require(points)
    nodes, sig, push = _flow_with_sections(model, points, n, horizon)
    A = _stage_A(model, sig, push)
    steer = _steer_from_A(A, horizon / n, np.broadcast_to(np.asarray(h0, dtype=float), points.shape[:-1]))
    return nodes, steer, A


def integrate_steering(model: SteerableModel, base_path, h0: float = 0.0, horizon: float = 1.0) -> np.ndarray:
    """Stabiliser parameters h_p at every node of a base path from integrate_base.

    The RK4 stages are rebuilt from the nodes, so the path must come from the
    model's field on the same uniform grid.
    """
    path = np.asarray(base_path.base_path if isinstance(base_path, TransportResult) else base_path, dtype=float)
    n = len(path) - 1
    dt = horizon / n
    model.chart.require(path, LeftChartDomain)
    y = path[:-1]
    k1 = model.field(y)
    y2 = y + 0.5 * dt * k1
    k2 = model.field(y2)
    y3 = y + 0.5 * dt * k2
    k3 = model.field(y3)
    y4 = y + dt * k3
    k4 = model.field(y4)
    stages = np.stack([y, y2, y3, y4], axis=1)
    vels = np.stack([k1, k2, k3, k4], axis=1)
    sig, push = _stage_sections(model.chart, model.field, stages, vels)
    A = _stage_A(model, sig, push)
    if A.ndim == 2:
        return _steer_from_A(A[..., None], dt, np.asarray([h0]))[:, 0]
    return _steer_from_A(A, dt, h0)


# ---------------------------------------------------------------------------
# the steerable NODE
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransportResult:
    times: np.ndarray
    base_path: np.ndarray  # (N+1, d)
    steer_path: np.ndarray  # (N+1,) stabiliser parameters, unwrapped
    stage_A: np.ndarray  # (N, 4) values of omega(sigma_* phi) at the RK4 stages
    input_feature: np.ndarray
    final_feature: np.ndarray
    space: str

    @property
    def final_point(self) -> BasePoint:
        return BasePoint(self.space, self.base_path[-1])

    def features(self, rho: Representation) -> np.ndarray:
        """rho(h_p(t)) v at every node."""
        return rho.apply(self.steer_path, self.input_feature)

    def to_rows(self, rho: Representation) -> tuple[list[str], np.ndarray]:
        d = self.base_path.shape[1]
        header = ["t"] + [f"p{i}" for i in range(d)] + ["h"] + [f"v{i}" for i in range(rho.dim)]
        rows = np.column_stack([self.times, self.base_path, self.steer_path, self.features(rho)])
        return header, rows


def _check_feature(model: SteerableModel, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != model.rep.dim:
        raise DimMismatch(f"feature of dimension {v.shape[-1]} for a {model.rep.dim}-dimensional representation")
    return v


def transport(model: SteerableModel, p, v, horizon: float = 1.0) -> TransportResult:
    coords = p.coords if isinstance(p, BasePoint) else np.asarray(p, dtype=float)
    v = _check_feature(model, v)
    nodes, steer, A = _flow(model, coords[None, :], horizon)
    times = np.linspace(0.0, horizon, model.n_steps + 1)
    return TransportResult(
        times=times,
        base_path=nodes[:, 0],
        steer_path=steer[:, 0],
        stage_A=A[:, :, 0],
        input_feature=v,
        final_feature=model.rep.apply(steer[-1, 0], v),
        space=model.chart.space,
    )


def run_batch(model: SteerableModel, points, vs, horizon: float = 1.0):
    """Psi on a stack of inputs; outputs keep the input order."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    vs = _check_feature(model, np.atleast_2d(vs))
    nodes, steer, _ = _flow(model, points, horizon)
    return nodes[-1], model.rep.apply(steer[-1], vs)


def run_steerable_node(model: SteerableModel, p: BasePoint, v) -> tuple[BasePoint, np.ndarray]:
    """Psi(p, v) = (Phi_p(1), rho(h_p(1)) v)."""
    out, w = run_batch(model, p.coords[None, :], np.asarray(v, dtype=float)[None, :])
    return BasePoint(p.space, out[0]), w[0]


def steering_endpoint(model: SteerableModel, points, horizon: float = 1.0) -> np.ndarray:
    _, steer, _ = _flow(model, points, horizon)
    return steer[-1]


# ---------------------------------------------------------------------------
# lifts, horizontality and covariant constancy
# ---------------------------------------------------------------------------

def lift_coords(model: SteerableModel, base_path, steer_path, unwrap: bool = False) -> np.ndarray:
    """sigma(Phi(t)) h(t) at every node.  With ``unwrap`` the angle coordinates
    are made continuous in time (for finite differencing)."""
    q = model.quotient
    spec = model.group
    sig = model.chart.section_coords(np.asarray(base_path))
    if spec.kind == "SO3":
        return G.compose_coords(spec, sig, q.h_coords(np.asarray(steer_path)))
    lift = np.asarray(sig, dtype=float) + q.h_embedding[:, 0] * np.asarray(steer_path)[..., None] if q.dim_h else np.array(sig)
    if unwrap:
        mask = spec.angle_mask
        if mask.any():
            lift[..., mask] = np.unwrap(lift[..., mask], axis=0)
        return lift
    return G.canonical_coords(spec, lift)


def horizontal_lift(model: SteerableModel, p, n_steps: int | None = None) -> np.ndarray:
    coords = p.coords if isinstance(p, BasePoint) else np.asarray(p, dtype=float)
    m = model if n_steps is None else model.replace(n_steps=n_steps)
    res = transport(m, coords, np.zeros(m.rep.dim))
    return lift_coords(m, res.base_path, res.steer_path)


def lift_horizontality(model: SteerableModel, result: TransportResult) -> float:
    """max |omega(lift tangent)| over interior nodes, with the lift tangent from
    a five-point fourth-order central difference."""
    lift = lift_coords(model, result.base_path, result.steer_path, unwrap=True)
    if len(lift) < 5:
        raise ValueError("need at least four steps to difference the lift")
    dt = result.times[1] - result.times[0]
    tangent = (-lift[4:] + 8.0 * lift[3:-1] - 8.0 * lift[1:-3] + lift[:-4]) / (12.0 * dt)
    if model.quotient.dim_h == 0:
        return 0.0
    return float(np.abs(model.connection(lift[2:-2], tangent)).max())


def covariant_drift(model: SteerableModel, result: TransportResult) -> float:
    """Drift of rho(h(t))^-1 f(t), where f solves the covariant-constancy ODE
    df/dt = -A(t) drho f in the section frame (RK4 on the same stages)."""
    rho = model.rep
    gen = rho.generator()
    dt = result.times[1] - result.times[0]
    f = np.array(result.input_feature, dtype=float)
    worst = 0.0
    for k, a in enumerate(result.stage_A):
        k1 = -a[0] * gen @ f
        k2 = -a[1] * gen @ (f + 0.5 * dt * k1)
        k3 = -a[2] * gen @ (f + 0.5 * dt * k2)
        k4 = -a[3] * gen @ (f + dt * k3)
        f = f + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        frame = rho.apply(-result.steer_path[k + 1], f)
        worst = max(worst, float(np.linalg.norm(frame - result.input_feature)))
    return worst


# ---------------------------------------------------------------------------
# holonomy and the parallel-transport flow
# ---------------------------------------------------------------------------

def holonomy(model: SteerableModel, p, segments: Sequence[VectorField | tuple[VectorField, float]],
             tol: float = 1e-9) -> GroupElement:
    """Stabiliser element from transporting around a closed loop.

    The loop is the concatenation of integral curves of ``segments`` (each a
    field, or a (field, duration) pair) starting at ``p``.
    """
    coords = p.coords if isinstance(p, BasePoint) else np.asarray(p, dtype=float)
    y = coords.copy()
    h = 0.0
    for seg in segments:
        fld, horizon = seg if isinstance(seg, tuple) else (seg, 1.0)
        m = model.replace(field=fld)
        nodes, steer, _ = _flow(m, y[None, :], horizon, h0=h)
        y, h = nodes[-1, 0], float(steer[-1, 0])
    gap = float(np.abs(G.circle_diff(y, coords)).max() if model.chart.space == "S1" else np.abs(y - coords).max())
    if gap > tol:
        raise NotClosed(f"loop does not close: endpoint gap {gap:.3e}")
    return GroupElement(model.group, model.quotient.h_coords(h))


def holonomy_angle(model: SteerableModel, p, segments, tol: float = 1e-9) -> float:
    """Holonomy as a stabiliser parameter reduced to (-pi, pi]."""
    h = holonomy(model, p, segments, tol)
    b = float(model.quotient.h_param(h.coords))
    return -float(G.circle_diff(-b, 0.0)) if model.quotient.h_periodic else b


def latitude_loop(colatitude: float, axis: int = 2) -> tuple[np.ndarray, VectorField]:
    """Start point and generating field of the circle at ``colatitude`` from e_axis,
    traversed once over unit time."""
    from .fields import RotationField

    w = np.zeros(3)
    w[axis] = 2.0 * np.pi
    p = np.zeros(3)
    p[axis] = np.cos(colatitude)
    p[(axis + 1) % 3] = np.sin(colatitude)
    return p, RotationField(w)


def parallel_transport_flow(model: SteerableModel, t: float, g: GroupElement, v) -> tuple[GroupElement, np.ndarray]:
    """Gamma(t, [g, v]) = [horizontal lift through g at time t, v]."""
    v = _check_feature(model, v)
    q = model.quotient
    if t == 0.0:
        return g, v
    p = q.project(g.coords)
    model.chart.require(p)
    hg = model.chart.fibre_param(g.coords)
    nodes, steer, _ = _flow(model, p[None, :], t, h0=hg)
    lift = lift_coords(model, nodes[-1:, 0], steer[-1:, 0])[0]
    return GroupElement(model.group, lift), v


def parallel_transport_batch(model: SteerableModel, t: float, gc) -> np.ndarray:
    """Group part of Gamma(t, .) on stacked group coordinates."""
    q = model.quotient
    gc = np.asarray(gc, dtype=float)
    if t == 0.0:
        return gc
    p = q.project(gc)
    hg = model.chart.fibre_param(gc)
    nodes, steer, _ = _flow(model, p, t, h0=hg)
    return lift_coords(model, nodes[-1], steer[-1])


def readout(model: SteerableModel, g: GroupElement, v) -> tuple[BasePoint, np.ndarray]:
    """Local pair (p, rho(h(g)) v) of the class [g, v] in the model's chart."""
    q = model.quotient
    p = q.project(g.coords)
    return BasePoint(model.chart.space, p), model.rep.apply(model.chart.fibre_param(g.coords), v)


def model_summary(model: SteerableModel) -> dict[str, Any]:
    return {
        "group": model.group.name,
        "quotient": model.quotient.name,
        "chart": model.chart.to_json(),
        "field": model.field.to_json(),
        "connection": model.connection.to_json(),
        "rep": model.rep.to_json(),
        "n_steps": model.n_steps,
    }
