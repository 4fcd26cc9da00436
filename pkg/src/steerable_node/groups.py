"""Lie-group kernel for the concrete groups used by the package.

Supported groups are the translation groups R^n, the circle group (encoded
either as SO(2) or U(1), which behave identically), SO(3), and the product
R^2 x U(1).  Elements carry their coordinates in a per-group canonical
encoding:

* translations: the translation vector,
* SO(2)/U(1): a single angle reduced to [0, 2*pi),
* SO(3): a 3x3 rotation matrix,
* R^2 x U(1): ``(x, y, angle)``.

Lie algebra elements are component vectors in a frozen basis.  For so(3)
the basis is ``X1, X2, X3`` with ``hat(e_i) = X_i``; for the product group
it is ``(d/dx, d/dy, d/dtheta)``.

The array helpers (``so3_exp``, ``so3_log``, ``hat``, ``vee``,
``wrap_angle``) are vectorised over leading axes and are used directly by
the integrators.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import BranchCut, SpecMismatch

TWO_PI = 2.0 * np.pi

_KINDS = ("Rn", "SO2", "U1", "SO3", "R2xU1")


@dataclass(frozen=True)
class GroupSpec:
    """Identifies one of the supported groups.

    ``n`` is only meaningful for the translation groups ``Rn``.
    """

    kind: str
    n: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown group kind {self.kind!r}")
        if self.kind == "Rn" and self.n < 1:
            raise ValueError("translation group needs n >= 1")

    @property
    def name(self) -> str:
        return f"R{self.n}" if self.kind == "Rn" else self.kind

    @property
    def dim_g(self) -> int:
        return {"Rn": self.n, "SO2": 1, "U1": 1, "SO3": 3, "R2xU1": 3}[self.kind]

    @property
    def dim_h_of_canonical_subgroup(self) -> int:
        # R^n (n >= 2) fibres over R^{n-1} along its last coordinate; the circle
        # groups are used with the trivial stabiliser.
        if self.kind == "Rn":
            return 1 if self.n >= 2 else 0
        return {"SO2": 0, "U1": 0, "SO3": 1, "R2xU1": 1}[self.kind]

    @property
    def is_matrix(self) -> bool:
        return self.kind == "SO3"

    @property
    def abelian(self) -> bool:
        return self.kind != "SO3"

    @property
    def angle_mask(self) -> np.ndarray:
        """Boolean mask over coordinates marking the periodic (angle) ones."""
        if self.kind in ("SO2", "U1"):
            return np.array([True])
        if self.kind == "R2xU1":
            return np.array([False, False, True])
        return np.zeros(self.dim_g, dtype=bool)

    @property
    def coord_shape(self) -> tuple[int, ...]:
        return (3, 3) if self.kind == "SO3" else (self.dim_g,)

    def same_group(self, other: "GroupSpec") -> bool:
        """SO(2) and U(1) are two encodings of the same group."""
        circle = ("SO2", "U1")
        if self.kind in circle and other.kind in circle:
            return True
        return self == other

    @classmethod
    def from_name(cls, name: str) -> "GroupSpec":
        if name in ("SO2", "U1", "SO3", "R2xU1"):
            return cls(name)
        if name.startswith("R") and name[1:].isdigit():
            return cls("Rn", int(name[1:]))
        raise ValueError(f"unknown group name {name!r}")


R1 = GroupSpec("Rn", 1)
R2 = GroupSpec("Rn", 2)
SO2 = GroupSpec("SO2")
U1 = GroupSpec("U1")
SO3 = GroupSpec("SO3")
R2xU1 = GroupSpec("R2xU1")


# ---------------------------------------------------------------------------
# array helpers
# ---------------------------------------------------------------------------

def wrap_angle(theta):
    """Reduce angles to [0, 2*pi)."""
    r = np.mod(theta, TWO_PI)
    return np.where(r >= TWO_PI, r - TWO_PI, r)


def circle_diff(a, b):
    """Signed shortest circular difference a - b in [-pi, pi)."""
    return np.mod(np.asarray(a) - np.asarray(b) + np.pi, TWO_PI) - np.pi


def hat(w):
    """Map so(3) components (..., 3) to skew matrices (..., 3, 3)."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def vee(m):
    """Components of the skew part of (..., 3, 3) matrices."""
    m = np.asarray(m, dtype=float)
    return 0.5 * np.stack(
        [m[..., 2, 1] - m[..., 1, 2],
         m[..., 0, 2] - m[..., 2, 0],
         m[..., 1, 0] - m[..., 0, 1]],
        axis=-1,
    )


def so3_exp(w):
    """Rodrigues formula, with a Taylor fallback below angle 1e-4."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    small = theta < 1e-4
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(t) / t)
    b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, (1.0 - np.cos(t)) / (t * t))
    k = hat(w)
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + a[..., None, None] * k + b[..., None, None] * (k @ k)


def rotation_angle(r):
    """Rotation angle in [0, pi] of (..., 3, 3) rotation matrices."""
    r = np.asarray(r, dtype=float)
    s = np.linalg.norm(vee(r), axis=-1)
    c = 0.5 * (np.trace(r, axis1=-2, axis2=-1) - 1.0)
    return np.arctan2(s, c)


def so3_log(r, margin: float = 1e-6):
    """Principal logarithm of rotation matrices.

    Raises BranchCut when the rotation angle is within ``margin`` of pi.
    """
    r = np.asarray(r, dtype=float)
    u = vee(r)
    s = np.linalg.norm(u, axis=-1)
    c = 0.5 * (np.trace(r, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)
    if np.any(np.pi - theta < margin):
        raise BranchCut("rotation angle too close to pi for the principal logarithm")
    small = theta < 1e-4
    scale = np.where(small, 1.0 + theta * theta / 6.0, theta / np.where(small, 1.0, s))
    return scale[..., None] * u


def polar_step(r):
    """One step of the iterative polar correction R <- (3R - R R^T R) / 2."""
    return 0.5 * (3.0 * r - r @ np.swapaxes(r, -1, -2) @ r)


def quaternion_to_matrix(q):
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


def canonical_coords(spec: GroupSpec, coords) -> np.ndarray:
    """Reduce raw coordinates of ``spec`` to the canonical encoding (vectorised)."""
    c = np.array(coords, dtype=float)
    if spec.kind == "SO3":
        return c.reshape(c.shape[:-1] + (3, 3)) if c.shape[-1] == 9 else c
    mask = spec.angle_mask
    if mask.any():
        c[..., mask] = wrap_angle(c[..., mask])
    return c


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------

def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GroupElement:
    spec: GroupSpec
    coords: np.ndarray

    def __post_init__(self):
        c = canonical_coords(self.spec, self.coords)
        if c.shape != self.spec.coord_shape:
            raise ValueError(f"{self.spec.name} coordinates must have shape {self.spec.coord_shape}")
        if self.spec.kind == "SO3":
            err = np.linalg.norm(c.T @ c - np.eye(3))
            det = np.linalg.det(c)
            if err > 1e-10 or abs(det - 1.0) > 1e-10:
                raise ValueError(f"not a rotation matrix (orthogonality error {err:.2e}, det {det:.12f})")
        object.__setattr__(self, "coords", _frozen(c))

    def __repr__(self):
        return f"GroupElement({self.spec.name}, {self.coords.tolist()})"

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.spec.name, "coords": self.coords.reshape(-1).tolist()}

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "GroupElement":
        return cls(GroupSpec.from_name(d["kind"]), np.asarray(d["coords"], dtype=float))


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    spec: GroupSpec
    comps: np.ndarray

    def __post_init__(self):
        c = np.array(self.comps, dtype=float).reshape(-1)
        if c.shape != (self.spec.dim_g,):
            raise ValueError(f"{self.spec.name} algebra elements have {self.spec.dim_g} components")
        object.__setattr__(self, "comps", _frozen(c))

    def __repr__(self):
        return f"AlgebraElement({self.spec.name}, {self.comps.tolist()})"

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        _check(self.spec, other.spec)
        return AlgebraElement(self.spec, self.comps + other.comps)

    def __mul__(self, s: float) -> "AlgebraElement":
        return AlgebraElement(self.spec, s * self.comps)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Tangent vector at ``base``.

    For SO(3) ``value`` is the ambient 3x3 matrix representative (``g @ hat(X)``
    for a left-trivialised ``X``); for the other groups it is the coordinate
    component vector.
    """

    base: GroupElement
    value: np.ndarray

    def __post_init__(self):
        v = np.array(self.value, dtype=float)
        if v.shape != self.base.spec.coord_shape:
            raise ValueError("tangent representative has the wrong shape")
        object.__setattr__(self, "value", _frozen(v))


def _check(a: GroupSpec, b: GroupSpec):
    if not a.same_group(b):
        raise SpecMismatch(f"{a.name} vs {b.name}")


# ---------------------------------------------------------------------------
# group operations
# ---------------------------------------------------------------------------

def identity(spec: GroupSpec) -> GroupElement:
    if spec.kind == "SO3":
        return GroupElement(spec, np.eye(3))
    return GroupElement(spec, np.zeros(spec.dim_g))


def compose_coords(spec: GroupSpec, a, b):
    if spec.kind == "SO3":
        return polar_step(np.asarray(a) @ np.asarray(b))
    return canonical_coords(spec, np.asarray(a) + np.asarray(b))


def inverse_coords(spec: GroupSpec, a):
    if spec.kind == "SO3":
        return np.swapaxes(np.asarray(a), -1, -2)
    return canonical_coords(spec, -np.asarray(a))


def compose(a: GroupElement, b: GroupElement) -> GroupElement:
    """Group product ``a b``.  SO(3) products are re-orthonormalised."""
    _check(a.spec, b.spec)
    return GroupElement(a.spec, compose_coords(a.spec, a.coords, b.coords))


def inverse(g: GroupElement) -> GroupElement:
    return GroupElement(g.spec, inverse_coords(g.spec, g.coords))


def exp_coords(spec: GroupSpec, comps):
    if spec.kind == "SO3":
        return so3_exp(comps)
    return canonical_coords(spec, comps)


def exp(a: AlgebraElement) -> GroupElement:
    return GroupElement(a.spec, exp_coords(a.spec, a.comps))


def log(g: GroupElement) -> AlgebraElement:
    if g.spec.kind == "SO3":
        return AlgebraElement(g.spec, so3_log(g.coords))
    c = g.coords.copy()
    mask = g.spec.angle_mask
    c[mask] = circle_diff(c[mask], 0.0)
    return AlgebraElement(g.spec, c)


def adjoint_matrix(h: GroupElement) -> np.ndarray:
    """Matrix of Ad_h in the frozen algebra basis."""
    if h.spec.kind == "SO3":
        # h hat(w) h^T = hat(h w)
        return np.array(h.coords)
    return np.eye(h.spec.dim_g)


def adjoint(h: GroupElement, x: AlgebraElement) -> AlgebraElement:
    _check(h.spec, x.spec)
    if h.spec.kind == "SO3":
        return AlgebraElement(x.spec, vee(h.coords @ hat(x.comps) @ h.coords.T))
    return AlgebraElement(x.spec, x.comps)


def bracket(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
    _check(x.spec, y.spec)
    if x.spec.kind == "SO3":
        return AlgebraElement(x.spec, np.cross(x.comps, y.comps))
    return AlgebraElement(x.spec, np.zeros(x.spec.dim_g))


def tangent_at_identity(a: AlgebraElement) -> TangentVector:
    value = hat(a.comps) if a.spec.kind == "SO3" else a.comps
    return TangentVector(identity(a.spec), value)


def push_left(g: GroupElement, v: TangentVector) -> TangentVector:
    """(L_g)_* : T_{g'}G -> T_{g g'}G."""
    _check(g.spec, v.base.spec)
    base = compose(g, v.base)
    if g.spec.kind == "SO3":
        return TangentVector(base, g.coords @ v.value)
    return TangentVector(base, v.value)


def push_right(h: GroupElement, v: TangentVector) -> TangentVector:
    """(R_h)_* : T_{g'}G -> T_{g' h}G."""
    _check(h.spec, v.base.spec)
    base = compose(v.base, h)
    if h.spec.kind == "SO3":
        return TangentVector(base, v.value @ h.coords)
    return TangentVector(base, v.value)


def left_trivialize_coords(spec: GroupSpec, g, value):
    """(L_{g^-1})_* applied to tangent representatives, returning algebra components."""
    if spec.kind == "SO3":
        return vee(np.swapaxes(np.asarray(g), -1, -2) @ np.asarray(value))
    return np.asarray(value, dtype=float)


def left_trivialize(v: TangentVector) -> AlgebraElement:
    return AlgebraElement(v.base.spec, left_trivialize_coords(v.base.spec, v.base.coords, v.value))


def distance_coords(spec: GroupSpec, a, b) -> np.ndarray:
    """Vectorised :func:`distance` on stacked coordinates."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if spec.kind == "SO3":
        return np.linalg.norm(a - b, axis=(-2, -1))
    d = a - b
    mask = spec.angle_mask
    d[..., mask] = circle_diff(a[..., mask], b[..., mask])
    return np.linalg.norm(d, axis=-1)


def distance(a: GroupElement, b: GroupElement) -> float:
    """Frobenius distance on SO(3); Euclidean with circular angle differences otherwise."""
    _check(a.spec, b.spec)
    return float(distance_coords(a.spec, a.coords, b.coords))


def random_coords(spec: GroupSpec, rng: np.random.Generator, size: int, scale: float = 2.0):
    """Sample ``size`` coordinate arrays: translations uniform in [-scale, scale],
    angles uniform in [0, 2 pi), rotations from normalised Gaussian quaternions."""
    if spec.kind == "SO3":
        return quaternion_to_matrix(rng.normal(size=(size, 4)))
    c = rng.uniform(-scale, scale, size=(size, spec.dim_g))
    mask = spec.angle_mask
    c[:, mask] = rng.uniform(0.0, TWO_PI, size=(size, int(mask.sum())))
    return canonical_coords(spec, c)


def random_element(spec: GroupSpec, rng: np.random.Generator, scale: float = 2.0) -> GroupElement:
    return GroupElement(spec, random_coords(spec, rng, 1, scale)[0])
