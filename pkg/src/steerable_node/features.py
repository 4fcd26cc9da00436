"""Representations of the stabiliser, the induced action on M x V, and
Mackey functions.

Every stabiliser in the registry is one-dimensional and abelian, so a
representation is determined by where it sends the stabiliser parameter
``b``: the trivial representation, the rotation ``R(b)`` of R^2, or the
weighted rotation ``R(n b)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import groups as G
from .bundle import BasePoint, SectionChart, stabiliser_param
from .errors import DimMismatch, SpecMismatch
from .groups import GroupElement

J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


def rotation2(angle) -> np.ndarray:
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


@dataclass(frozen=True)
class Representation:
    kind: str  # "trivial" | "rot2" | "weighted"
    n: int = 1  # dimension for the trivial kind, weight for the weighted kind

    def __post_init__(self):
        if self.kind not in ("trivial", "rot2", "weighted"):
            raise ValueError(f"unknown representation {self.kind!r}")
        if self.kind == "trivial" and not 1 <= self.n <= 3:
            raise ValueError("trivial representations have dimension 1, 2 or 3")

    @property
    def dim(self) -> int:
        return self.n if self.kind == "trivial" else 2

    @property
    def weight(self) -> int:
        return {"trivial": 0, "rot2": 1, "weighted": self.n}[self.kind]

    def matrix(self, b) -> np.ndarray:
        """rho of the stabiliser element with parameter ``b`` (vectorised)."""
        b = np.asarray(b, dtype=float)
        if self.kind == "trivial":
            return np.broadcast_to(np.eye(self.n), b.shape + (self.n, self.n)).copy()
        return rotation2(self.weight * b)

    def generator(self) -> np.ndarray:
        """Derivative of rho at the identity along the unit stabiliser direction."""
        if self.kind == "trivial":
            return np.zeros((self.n, self.n))
        return self.weight * J2

    def apply(self, b, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise DimMismatch(f"feature of dimension {v.shape[-1]} for a {self.dim}-dimensional representation")
        return np.einsum("...ij,...j->...i", self.matrix(b), v)

    def to_json(self) -> dict[str, Any]:
        return {"rep": self.kind, "n": self.n}

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "Representation":
        kind = d["rep"]
        return cls(kind, int(d.get("n", 2 if kind == "weighted" else 1)))


TRIVIAL = Representation("trivial", 1)
ROT2 = Representation("rot2")


def weighted(n: int) -> Representation:
    return Representation("weighted", n)


def rep_apply(rho: Representation, h: GroupElement, v) -> np.ndarray:
    return rho.apply(stabiliser_param(h), v)


# ---------------------------------------------------------------------------
# induced action on M x V
# ---------------------------------------------------------------------------

def induced_action_arrays(chart: SectionChart, rho: Representation, gc, points, vs):
    """(g p, rho(c(g, p)) v) for stacks of inputs."""
    q = chart.quotient
    chart.require(points)
    gp = q.act(gc, points)
    chart.require(gp)
    c = chart.cocycle_param(gc, points)
    return gp, rho.apply(c, vs)


def induced_left_action(chart: SectionChart, rho: Representation, g: GroupElement, p: BasePoint, v):
    if not g.spec.same_group(chart.group) or p.space != chart.space:
        raise SpecMismatch("group element or point does not match the chart")
    gp, w = induced_action_arrays(chart, rho, g.coords, p.coords, v)
    return BasePoint(p.space, gp), w


def section_readout(chart: SectionChart, rho: Representation, gc, v) -> np.ndarray:
    """Feature in the section frame of the class [g, v]: rho(h(g)) v."""
    return rho.apply(chart.fibre_param(gc), v)


# ---------------------------------------------------------------------------
# Mackey functions
# ---------------------------------------------------------------------------

class MackeyFunction:
    """k(g) = rho(h(g)^-1) f(pi(g)) built from a feature field ``f`` in the
    section frame of ``chart``."""

    def __init__(self, base_map: Callable[[np.ndarray], np.ndarray], chart: SectionChart, rho: Representation):
        self.base_map = base_map
        self.chart = chart
        self.rho = rho

    def __call__(self, gc) -> np.ndarray:
        gc = np.asarray(gc, dtype=float)
        p = self.chart.quotient.project(gc)
        self.chart.require(p)
        return self.rho.apply(-self.chart.fibre_param(gc), self.base_map(p))

    def at(self, g: GroupElement) -> np.ndarray:
        return self(g.coords)


def _sample_in_chart(chart: SectionChart, rng, samples: int) -> np.ndarray:
    spec = chart.group
    out = []
    total = 0
    while total < samples:
        gc = G.random_coords(spec, rng, samples)
        ok = chart.contains(chart.quotient.project(gc))
        out.append(gc[ok])
        total += int(ok.sum())
    return np.concatenate(out)[:samples]


def sample_action_inputs(chart: SectionChart, samples: int, seed: int = 42, scale: float = 2.0):
    """Random (g, p) with both p and g p inside the chart."""
    rng = np.random.default_rng(seed)
    q = chart.quotient
    gs, ps = [], []
    have = 0
    while have < samples:
        gc = G.random_coords(chart.group, rng, samples)
        if chart.space == "S2":
            p = rng.normal(size=(samples, 3))
            p /= np.linalg.norm(p, axis=1, keepdims=True)
        elif chart.space == "S1":
            p = rng.uniform(0.0, G.TWO_PI, size=(samples, 1))
        else:
            p = rng.uniform(-scale, scale, size=(samples, q.reference_point().shape[-1]))
        ok = chart.contains(p) & chart.contains(q.act(gc, p))
        gs.append(gc[ok])
        ps.append(p[ok])
        have += int(ok.sum())
    return np.concatenate(gs)[:samples], np.concatenate(ps)[:samples]


def _sample_stabiliser(chart: SectionChart, rng, samples: int) -> np.ndarray:
    if chart.quotient.h_periodic:
        return rng.uniform(0.0, G.TWO_PI, size=samples)
    return rng.uniform(-2.0, 2.0, size=samples)


def mackey_check(k: Callable[[np.ndarray], np.ndarray], samples: int = 100, seed: int = 42,
                 witnesses=(), tol: float = 1e-10,
                 chart: SectionChart | None = None, rho: Representation | None = None) -> dict[str, Any]:
    """Max of |k(g h) - rho(h^-1) k(g)| over sampled g and stabiliser h.

    ``k`` is any callable on stacked group coordinates; chart and
    representation default to those of a :class:`MackeyFunction`.
    ``witnesses`` are extra (g coordinates, h parameter) pairs.
    """
    chart = chart or k.chart
    rho = rho or k.rho
    q = chart.quotient
    rng = np.random.default_rng(seed)
    gc = _sample_in_chart(chart, rng, samples)
    hb = _sample_stabiliser(chart, rng, samples)
    if witnesses:
        gw = G.canonical_coords(chart.group, np.stack([np.asarray(w[0], dtype=float) for w in witnesses]))
        gc = np.concatenate([gw, gc])
        hb = np.concatenate([[float(w[1]) for w in witnesses], hb])
    ghc = G.compose_coords(chart.group, gc, q.h_coords(hb))
    res = np.linalg.norm(k(ghc) - rho.apply(-hb, k(gc)), axis=-1)
    i = int(np.argmax(res))
    return {
        "pass": bool(res[i] <= tol),
        "max_residual": float(res[i]),
        "witness": {"g": gc[i].reshape(-1).tolist(), "h": float(hb[i])},
    }


def induced_rep_apply(g: GroupElement, k: Callable[[np.ndarray], np.ndarray], g_eval) -> np.ndarray:
    """(Ind rho(g) k)(g') = k(g^-1 g')."""
    spec = g.spec
    ge = g_eval.coords if isinstance(g_eval, GroupElement) else np.asarray(g_eval, dtype=float)
    return k(G.compose_coords(spec, G.inverse_coords(spec, g.coords), ge))


def table_rows(chart: SectionChart, rho: Representation, f: Callable[[np.ndarray], np.ndarray],
               gc, points, shift=None) -> dict[str, np.ndarray]:
    """Transformed feature at g p computed through four equivalent descriptions.

    * ``local``: the pair (p, f(p)) mapped to (g p, rho(c(g, p)) f(p));
    * ``mackey``: the induced representation, k(g^-1 sigma(g p));
    * ``class``: the class [g sigma(p), f(p)] read out in the section frame;
    * ``representative``: the same class through the representative
      (g sigma(p) h, rho(h^-1) f(p)) for stabiliser parameters ``shift``.
    """
    q = chart.quotient
    spec = chart.group
    gc = np.asarray(gc, dtype=float)
    points = np.asarray(points, dtype=float)
    fp = f(points)
    _, local = induced_action_arrays(chart, rho, gc, points, fp)

    k = MackeyFunction(f, chart, rho)
    gp = q.act(gc, points)
    s_gp = chart.section_coords(gp)
    mackey = k(G.compose_coords(spec, G.inverse_coords(spec, gc), s_gp))

    lifted = G.compose_coords(spec, gc, chart.section_coords(points))
    cls = section_readout(chart, rho, lifted, fp)

    if shift is None:
        shift = np.full(points.shape[:-1], 0.731)
    rep = G.compose_coords(spec, lifted, q.h_coords(shift))
    representative = section_readout(chart, rho, rep, rho.apply(-np.asarray(shift), fp))
    return {"local": local, "mackey": mackey, "class": cls, "representative": representative}
