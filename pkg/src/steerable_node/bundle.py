"""Homogeneous-space structure of G -> G/H.

A :class:`Quotient` registers how a group fibres over a base space: the
projection, the left action on the base, and the embedding of the
stabiliser H.  A :class:`SectionChart` picks a local section of that
bundle.  All stabilisers in the registry are at most one-dimensional, so an
element of H is described by a single real parameter (an angle for the
circle stabilisers, a translation for R^2 -> R).

Most functions come in two flavours: an array version operating on stacks of
coordinates (used by the integrators) and an object version taking
:class:`~steerable_node.groups.GroupElement` and :class:`BasePoint` values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import groups as G
from .errors import NoQuotientRegistered, NotInFibre, OutsideChart, SpecMismatch
from .groups import GroupElement, GroupSpec

SPACE_DIMS = {"R1": 1, "R2": 2, "S2": 3, "S1": 1}

E1 = np.array([1.0, 0.0, 0.0])
FIBRE_TOL = 1e-8
SECTION_FD_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class BasePoint:
    space: str
    coords: np.ndarray

    def __post_init__(self):
        if self.space not in SPACE_DIMS:
            raise ValueError(f"unknown base space {self.space!r}")
        c = np.array(self.coords, dtype=float).reshape(-1)
        if c.shape != (SPACE_DIMS[self.space],):
            raise ValueError(f"{self.space} points have {SPACE_DIMS[self.space]} coordinates")
        if self.space == "S2" and abs(np.linalg.norm(c) - 1.0) > 1e-10:
            raise ValueError("S2 points must have unit norm")
        if self.space == "S1":
            c = G.wrap_angle(c)
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    def __repr__(self):
        return f"BasePoint({self.space}, {self.coords.tolist()})"


def base_distance(space: str, a, b):
    """Ambient Euclidean distance; circular distance on S1.  Vectorised."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if space == "S1":
        return np.abs(G.circle_diff(a, b))[..., 0]
    return np.linalg.norm(a - b, axis=-1)


# ---------------------------------------------------------------------------
# quotients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Quotient:
    name: str
    group: GroupSpec
    space: str
    h_index: int | None  # index of the stabiliser generator in the algebra basis

    @property
    def dim_h(self) -> int:
        return 0 if self.h_index is None else 1

    @property
    def h_embedding(self) -> np.ndarray:
        """(dim_g, dim_h) matrix embedding h-components into g-components."""
        emb = np.zeros((self.group.dim_g, self.dim_h))
        if self.h_index is not None:
            emb[self.h_index, 0] = 1.0
        return emb

    @property
    def h_periodic(self) -> bool:
        return self.group.kind in ("SO3", "R2xU1")

    def project(self, gc) -> np.ndarray:
        gc = np.asarray(gc, dtype=float)
        kind = self.group.kind
        if kind == "SO3":
            return gc[..., :, 0]
        if self.name == "R2xU1/U1":
            return gc[..., :2]
        if self.name == "R2/R":
            return gc[..., :1]
        return gc

    def act(self, gc, points) -> np.ndarray:
        gc = np.asarray(gc, dtype=float)
        points = np.asarray(points, dtype=float)
        if self.group.kind == "SO3":
            return np.einsum("...ij,...j->...i", gc, points)
        if self.space == "S1":
            return G.wrap_angle(points + gc)
        return points + self.project(gc)

    def h_coords(self, b) -> np.ndarray:
        """Group coordinates of the stabiliser element with parameter ``b``."""
        b = np.asarray(b, dtype=float)
        if self.group.kind == "SO3":
            return G.so3_exp(b[..., None] * E1)
        if self.h_index is None:
            return np.zeros(b.shape + (self.group.dim_g,))
        comps = np.zeros(b.shape + (self.group.dim_g,))
        comps[..., self.h_index] = b
        return G.canonical_coords(self.group, comps)

    def h_param(self, hc) -> np.ndarray:
        hc = np.asarray(hc, dtype=float)
        if self.group.kind == "SO3":
            return np.arctan2(hc[..., 2, 1], hc[..., 1, 1])
        if self.h_index is None:
            return np.zeros(hc.shape[:-1])
        return hc[..., self.h_index]

    def h_residual(self, gc) -> np.ndarray:
        """How far coordinates are from the stabiliser: zero iff g lies in H."""
        gc = np.asarray(gc, dtype=float)
        if self.group.kind == "SO3":
            return np.linalg.norm(gc[..., :, 0] - E1, axis=-1)
        if self.h_index is None:
            d = gc.copy()
            mask = self.group.angle_mask
            d[..., mask] = G.circle_diff(d[..., mask], 0.0)
            return np.linalg.norm(d, axis=-1)
        others = [i for i in range(self.group.dim_g) if i != self.h_index]
        return np.linalg.norm(gc[..., others], axis=-1)

    def reference_point(self) -> np.ndarray:
        return self.project(G.identity(self.group).coords)


_QUOTIENTS = {
    q.name: q
    for q in (
        Quotient("R2xU1/U1", G.R2xU1, "R2", 2),
        Quotient("R2/R", G.R2, "R1", 1),
        Quotient("SO3/SO2", G.SO3, "S2", 0),
        Quotient("R1/e", G.R1, "R1", None),
        Quotient("R2/e", G.R2, "R2", None),
        Quotient("U1/e", G.U1, "S1", None),
        Quotient("SO2/e", G.SO2, "S1", None),
    )
}

_DEFAULT = {"R2xU1": "R2xU1/U1", "R2": "R2/R", "SO3": "SO3/SO2", "R1": "R1/e", "U1": "U1/e", "SO2": "SO2/e"}


def registered_quotients() -> list[Quotient]:
    return list(_QUOTIENTS.values())


def get_quotient(name: str) -> Quotient:
    try:
        return _QUOTIENTS[name]
    except KeyError:
        raise NoQuotientRegistered(name) from None


def quotient_for(group: GroupSpec, space: str | None = None) -> Quotient:
    """Registered quotient of ``group`` onto ``space`` (the default one if omitted)."""
    if space is None:
        if group.name not in _DEFAULT:
            raise NoQuotientRegistered(group.name)
        return _QUOTIENTS[_DEFAULT[group.name]]
    for q in _QUOTIENTS.values():
        if q.group == group and q.space == space:
            return q
    raise NoQuotientRegistered(f"{group.name} -> {space}")


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------

# Named fibre offsets for the R^2 -> R section sigma(x) = (x, chi + f(x)).
OFFSETS: dict[str, tuple[Callable, Callable]] = {
    "sin": (np.sin, np.cos),
    "zero": (np.zeros_like, np.zeros_like),
}


def register_offset(name: str, f: Callable, fprime: Callable) -> None:
    OFFSETS[name] = (f, fprime)


def minimal_rotation(a, b) -> np.ndarray:
    """Rotation about a x b taking unit vector(s) ``a`` to ``b`` (undefined at b = -a)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    k = G.hat(np.cross(a, b))
    c = np.sum(a * b, axis=-1)
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + k + (k @ k) / (1.0 + c)[..., None, None]


def _frame_for(q0: np.ndarray) -> np.ndarray:
    """A fixed rotation taking e1 to the chart reference point q0."""
    if np.allclose(q0, E1, atol=1e-14):
        return np.eye(3)
    if np.allclose(q0, -E1, atol=1e-14):
        return np.diag([-1.0, -1.0, 1.0])
    return minimal_rotation(E1, q0)


@dataclass(frozen=True, eq=False)
class SectionChart:
    """Local section of a registered quotient.

    ``chi`` is the constant fibre offset for the flat quotients; ``offset``
    names an additional x-dependent offset for R^2 -> R.  For S2 the section
    is the minimal rotation from ``p0`` (composed with a fixed frame taking
    e1 to ``p0``), undefined within ``exclusion`` radians of ``-p0``.
    """

    group: GroupSpec
    space: str
    chi: float = 0.0
    p0: tuple[float, ...] | None = None
    exclusion: float = 1e-3
    offset: str | None = None
    _frame: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        q = quotient_for(self.group, self.space)
        if self.space == "S2":
            p0 = E1 if self.p0 is None else np.asarray(self.p0, dtype=float)
            if abs(np.linalg.norm(p0) - 1.0) > 1e-10:
                raise ValueError("chart reference point must be a unit vector")
            object.__setattr__(self, "p0", tuple(float(x) for x in p0))
            object.__setattr__(self, "_frame", _frame_for(p0))
        else:
            object.__setattr__(self, "_frame", np.eye(3))
        if self.offset is not None and (q.name != "R2/R" or self.offset not in OFFSETS):
            raise ValueError(f"offset {self.offset!r} not available for {q.name}")

    @property
    def quotient(self) -> Quotient:
        return quotient_for(self.group, self.space)

    # -- array interface ----------------------------------------------------

    def contains(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.space != "S2":
            return np.ones(points.shape[:-1], dtype=bool)
        cosang = -(points @ np.asarray(self.p0)) / np.linalg.norm(points, axis=-1)
        return np.arccos(np.clip(cosang, -1.0, 1.0)) > self.exclusion

    def require(self, points, exc=OutsideChart) -> None:
        if not np.all(self.contains(points)):
            raise exc(f"point outside the chart around {self.p0} (exclusion {self.exclusion})")

    def section_coords(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        name = self.quotient.name
        if name == "SO3/SO2":
            q0 = np.asarray(self.p0)
            return minimal_rotation(q0, points) @ self._frame
        if name == "R2xU1/U1":
            chi = np.full(points.shape[:-1] + (1,), self.chi)
            return G.canonical_coords(self.group, np.concatenate([points, chi], axis=-1))
        if name == "R2/R":
            y = self.chi + self._offset_value(points[..., 0])
            return np.stack([points[..., 0], y], axis=-1)
        return np.array(points)

    def _offset_value(self, x):
        if self.offset is None:
            return np.zeros_like(x)
        return OFFSETS[self.offset][0](x)

    def _offset_slope(self, x):
        if self.offset is None:
            return np.zeros_like(x)
        return OFFSETS[self.offset][1](x)

    def section_push(self, points, velocities) -> np.ndarray:
        """sigma_* applied to base tangent vectors, as group tangent representatives.

        Exact for the flat charts; central differences of step 1e-6 on S2,
        where the section is evaluated on the radial projection of the input
        (so off-sphere stage points of an integrator are handled smoothly).
        """
        points = np.asarray(points, dtype=float)
        velocities = np.asarray(velocities, dtype=float)
        name = self.quotient.name
        if name == "SO3/SO2":
            eps = SECTION_FD_STEP
            fwd = points + eps * velocities
            bwd = points - eps * velocities
            fwd = fwd / np.linalg.norm(fwd, axis=-1, keepdims=True)
            bwd = bwd / np.linalg.norm(bwd, axis=-1, keepdims=True)
            return (self.section_coords(fwd) - self.section_coords(bwd)) / (2.0 * eps)
        if name == "R2xU1/U1":
            zero = np.zeros(velocities.shape[:-1] + (1,))
            return np.concatenate([velocities, zero], axis=-1)
        if name == "R2/R":
            v = velocities[..., 0]
            return np.stack([v, self._offset_slope(points[..., 0]) * v], axis=-1)
        return np.array(velocities)

    def fibre_param(self, gc) -> np.ndarray:
        """Parameter of h(g) = sigma(pi(g))^-1 g."""
        q = self.quotient
        s = self.section_coords(q.project(gc))
        return q.h_param(G.compose_coords(q.group, G.inverse_coords(q.group, s), gc))

    def cocycle_coords(self, gc, points) -> np.ndarray:
        """Coordinates of c(g, p) = sigma(g p)^-1 g sigma(p); raises NotInFibre."""
        q = self.quotient
        gp = q.act(gc, points)
        s_gp = self.section_coords(gp)
        s_p = self.section_coords(points)
        grp = q.group
        c = G.compose_coords(grp, G.inverse_coords(grp, s_gp), G.compose_coords(grp, gc, s_p))
        if np.any(q.h_residual(c) > FIBRE_TOL):
            raise NotInFibre("cocycle left the stabiliser; the section is inconsistent")
        return c

    def cocycle_param(self, gc, points) -> np.ndarray:
        return self.quotient.h_param(self.cocycle_coords(gc, points))

    # -- serialisation ------------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        if self.space == "S2":
            return {"space": "S2", "p0": list(self.p0), "exclusion": self.exclusion}
        d: dict[str, Any] = {"space": self.space, "chi": self.chi}
        if self.offset is not None:
            d["offset"] = self.offset
        return d

    @classmethod
    def from_json(cls, d: dict[str, Any], group: GroupSpec) -> "SectionChart":
        if d["space"] == "S2":
            return cls(group, "S2", p0=tuple(d.get("p0", E1)), exclusion=float(d.get("exclusion", 1e-3)))
        return cls(group, d["space"], chi=float(d.get("chi", 0.0)), offset=d.get("offset"))


def antipodal_atlas(exclusion: float = 1e-3) -> tuple[SectionChart, SectionChart]:
    """Two S2 charts with antipodal reference points covering the sphere."""
    return (SectionChart(G.SO3, "S2", p0=(1.0, 0.0, 0.0), exclusion=exclusion),
            SectionChart(G.SO3, "S2", p0=(-1.0, 0.0, 0.0), exclusion=exclusion))


# ---------------------------------------------------------------------------
# object interface
# ---------------------------------------------------------------------------

def project(g: GroupElement, quotient: Quotient | None = None) -> BasePoint:
    q = quotient or quotient_for(g.spec)
    if not q.group.same_group(g.spec):
        raise SpecMismatch(f"{g.spec.name} element with quotient {q.name}")
    return BasePoint(q.space, q.project(g.coords))


def left_act(g: GroupElement, p: BasePoint) -> BasePoint:
    q = quotient_for(g.spec, p.space)
    return BasePoint(p.space, q.act(g.coords, p.coords))


def section(chart: SectionChart, p: BasePoint) -> GroupElement:
    if p.space != chart.space:
        raise SpecMismatch(f"{p.space} point with a {chart.space} chart")
    chart.require(p.coords)
    return GroupElement(chart.group, chart.section_coords(p.coords))


def cocycle(chart: SectionChart, g: GroupElement, p: BasePoint) -> GroupElement:
    """The stabiliser element c(g, p) with g sigma(p) = sigma(g p) c(g, p)."""
    if not g.spec.same_group(chart.group) or p.space != chart.space:
        raise SpecMismatch("cocycle arguments do not match the chart")
    q = chart.quotient
    chart.require(p.coords)
    chart.require(q.act(g.coords, p.coords))
    return GroupElement(chart.group, chart.cocycle_coords(g.coords, p.coords))


def fibre_coordinate(chart: SectionChart, g: GroupElement) -> GroupElement:
    """The unique h(g) in H with g = sigma(pi(g)) h(g)."""
    q = chart.quotient
    chart.require(q.project(g.coords))
    return GroupElement(chart.group, q.h_coords(chart.fibre_param(g.coords)))


def in_stabiliser(h: GroupElement, quotient: Quotient | None = None, tol: float = FIBRE_TOL) -> bool:
    q = quotient or quotient_for(h.spec)
    return bool(q.h_residual(h.coords) <= tol)


def stabiliser_param(h: GroupElement, quotient: Quotient | None = None) -> float:
    """Scalar parameter of an element of the (one-dimensional) stabiliser."""
    if h.spec.kind in ("U1", "SO2"):
        return float(h.coords[0])
    q = quotient or quotient_for(h.spec)
    if q.dim_h == 0:
        return 0.0
    if q.h_residual(h.coords) > FIBRE_TOL:
        raise NotInFibre(f"{h!r} is not in the stabiliser of {q.name}")
    return float(q.h_param(h.coords))


def stabiliser_element(quotient: Quotient, b: float) -> GroupElement:
    return GroupElement(quotient.group, quotient.h_coords(b))


def transitive_element(p: BasePoint, q: BasePoint, group: GroupSpec | None = None) -> GroupElement:
    """Some g with g p = q (minimal rotation on S2, pure translation on flat spaces)."""
    if p.space != q.space:
        raise SpecMismatch("points on different spaces")
    if p.space == "S2":
        return GroupElement(G.SO3, minimal_rotation(p.coords, q.coords))
    if p.space == "S1":
        return GroupElement(group or G.U1, q.coords - p.coords)
    grp = group or {"R1": G.R1, "R2": G.R2xU1}[p.space]
    comps = np.zeros(grp.dim_g)
    comps[: len(p.coords)] = q.coords - p.coords
    return GroupElement(grp, comps)
