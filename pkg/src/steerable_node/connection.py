"""Principal connections on G -> G/H.

Two kinds of connection form are supported:

* ``wang``: built from a linear map ``Lambda: g -> h`` (a Wang map) via
  ``omega_g(X) = Lambda((L_{g^-1})_* X)``.  These are G-invariant by
  construction once the map passes :func:`wang_check`.
* ``coefficient``: ``omega_g(X) = sum_i a_i(pi(g)) X^i`` with coefficient
  functions of the base point.  Only available for abelian groups, where the
  coordinate components of X are already left-trivialised.

Array methods (``ConnectionForm.__call__``) work on stacks of group
coordinates and tangent representatives and return h-components with a
trailing axis of length ``dim_h``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import groups as G
from .bundle import Quotient, get_quotient, quotient_for
from .errors import ShapeMismatch, SpecMismatch, UnsupportedGroup, WangViolation
from .expressions import compile_expressions
from .groups import AlgebraElement, GroupElement, GroupSpec, TangentVector

COND_II_TOL = 1e-12
COND_I_TOL = 1e-9
WANG_SAMPLES = 100
WANG_SEED = 7


@dataclass(frozen=True, eq=False)
class WangMap:
    quotient: Quotient
    coeffs: np.ndarray  # (dim_h, dim_g)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        want = (self.quotient.dim_h, self.quotient.group.dim_g)
        if c.size == 0:
            c = c.reshape(want)
        elif c.ndim == 1:
            c = c[None, :]
        if c.shape != want:
            raise ShapeMismatch(f"Wang map for {self.quotient.name} must be {want}, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def spec(self) -> GroupSpec:
        return self.quotient.group

    def to_json(self) -> dict[str, Any]:
        return {"group": self.spec.name, "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, d: dict[str, Any], quotient: Quotient | None = None) -> "WangMap":
        q = quotient or quotient_for(GroupSpec.from_name(d["group"]))
        return cls(q, np.asarray(d["coeffs"], dtype=float))


def _stabiliser_samples(q: Quotient, samples: int, seed: int) -> np.ndarray:
    """Stabiliser parameters: the quarter turns first, then seeded draws."""
    rng = np.random.default_rng(seed)
    fixed = np.array([0.5 * np.pi, np.pi, 1.5 * np.pi]) if q.h_periodic else np.array([1.0, -1.0])
    if q.h_periodic:
        rand = rng.uniform(0.0, G.TWO_PI, size=samples)
    else:
        rand = rng.uniform(-2.0, 2.0, size=samples)
    return np.concatenate([fixed, rand])


def _adjoint_matrices(q: Quotient, params: np.ndarray) -> np.ndarray:
    """Ad_h matrices in the algebra basis, stacked over stabiliser parameters."""
    if q.group.kind == "SO3":
        return q.h_coords(params)  # Ad_R is R itself in the hat basis
    return np.broadcast_to(np.eye(q.group.dim_g), params.shape + (q.group.dim_g,) * 2)


def _condition_i_residuals(q: Quotient, L: np.ndarray, params: np.ndarray) -> np.ndarray:
    # Ad_h restricted to the one-dimensional, Ad-fixed subalgebra h is the identity
    ad = _adjoint_matrices(q, params)
    diff = np.einsum("ij,njk->nik", L, ad) - L[None]
    return np.abs(diff).reshape(len(params), -1).max(axis=1) if diff.size else np.zeros(len(params))


def wang_check(quotient: Quotient | str, L, samples: int = WANG_SAMPLES, seed: int = WANG_SEED) -> dict[str, Any]:
    """Test a candidate coefficient matrix against the two Wang conditions.

    Condition (ii), identity on h, is checked entrywise; condition (i),
    commuting with Ad_h, is checked on sampled stabiliser elements.  The
    report carries the largest residual of each condition and a violating
    stabiliser parameter.
    """
    q = get_quotient(quotient) if isinstance(quotient, str) else quotient
    L = np.array(L, dtype=float)
    want = (q.dim_h, q.group.dim_g)
    if L.size == 0 and q.dim_h == 0:
        L = L.reshape(want)
    elif L.ndim == 1 and q.dim_h == 1:
        L = L[None, :]
    if L.shape != want:
        raise ShapeMismatch(f"expected a {want} matrix for {q.name}, got {L.shape}")
    cond_ii = float(np.abs(L @ q.h_embedding - np.eye(q.dim_h)).max()) if q.dim_h else 0.0
    params = _stabiliser_samples(q, samples, seed)
    res = _condition_i_residuals(q, L, params)
    worst = int(np.argmax(res)) if len(res) else 0
    cond_i = float(res[worst]) if len(res) else 0.0
    # the witness is the first violating sample (quarter turns come first);
    # the maximising sample is reported separately
    bad = np.flatnonzero(res > COND_I_TOL)
    first = int(bad[0]) if len(bad) else worst
    violations = []
    if cond_ii > COND_II_TOL:
        violations.append("cond_ii")
    if cond_i > COND_I_TOL:
        violations.append("cond_i")
    return {
        "pass": not violations,
        "violations": violations,
        "residuals": {"cond_i": cond_i, "cond_ii": cond_ii},
        "witness": {"h": float(params[first]) if len(res) else 0.0,
                    "worst_h": float(params[worst]) if len(res) else 0.0},
    }


def wang_free_basis(quotient: Quotient, samples: int = 16, seed: int = WANG_SEED) -> np.ndarray:
    """Basis (k, dim_g) of the perturbations of the canonical Wang map that keep
    both conditions: supported off the h column and annihilated by Ad_h - I."""
    q = quotient
    if q.dim_h == 0:
        return np.zeros((0, q.group.dim_g))
    off = [i for i in range(q.group.dim_g) if i != q.h_index]
    params = _stabiliser_samples(q, samples, seed)
    ad = _adjoint_matrices(q, params) - np.eye(q.group.dim_g)
    # row vector x on the off columns must satisfy x @ (Ad - I)[off, :] = 0
    system = np.concatenate([m[off, :] for m in ad], axis=1).T
    _, s, vt = np.linalg.svd(system)
    rank = int(np.sum(s > 1e-10))
    null = vt[rank:]
    basis = np.zeros((len(null), q.group.dim_g))
    if len(null) == len(off):
        # every off-h entry is free: use the coordinate directions themselves
        basis[np.arange(len(off)), off] = 1.0
    else:
        basis[:, off] = null
    return basis


def canonical_wang(quotient: Quotient) -> np.ndarray:
    """The Wang map that is the identity on h and zero on the chosen complement."""
    return quotient.h_embedding.T.copy()


# ---------------------------------------------------------------------------
# connection forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConnectionForm:
    quotient: Quotient
    kind: str  # "wang" | "coefficient"
    wang: WangMap | None = None
    coefficients: Callable[[np.ndarray], np.ndarray] | None = None
    expressions: tuple[str, ...] | None = None
    _key: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind == "wang":
            if self.wang is None:
                raise ValueError("wang connection needs a WangMap")
            key = ("wang", self.wang.coeffs.tobytes())
        elif self.kind == "coefficient":
            if not self.quotient.group.abelian:
                raise UnsupportedGroup("coefficient connections are only available for abelian groups")
            if self.coefficients is None:
                raise ValueError("coefficient connection needs coefficient functions")
            key = ("coefficient", self.expressions if self.expressions is not None else self.coefficients)
        else:
            raise ValueError(f"unknown connection kind {self.kind!r}")
        object.__setattr__(self, "_key", key)

    @property
    def spec(self) -> GroupSpec:
        return self.quotient.group

    @property
    def dim_h(self) -> int:
        return self.quotient.dim_h

    def key(self) -> tuple:
        return self._key

    def __call__(self, gc, value) -> np.ndarray:
        """h-components of omega_g(X) for stacked coordinates and representatives."""
        spec = self.spec
        if self.kind == "wang":
            x = G.left_trivialize_coords(spec, gc, value)
            return x @ self.wang.coeffs.T
        gc = np.asarray(gc, dtype=float)
        coeff = self.coefficients(self.quotient.project(gc))
        return np.sum(coeff * np.asarray(value, dtype=float), axis=-1, keepdims=True)

    def to_json(self) -> dict[str, Any]:
        if self.kind == "wang":
            return {"kind": "wang", "coeffs": self.wang.coeffs.tolist()}
        if self.expressions is None:
            raise ValueError("only expression-based coefficient connections serialise")
        return {"kind": "coefficient", "coeffs": list(self.expressions)}


def connection_from_wang(L: WangMap, check: bool = True) -> ConnectionForm:
    if check:
        report = wang_check(L.quotient, L.coeffs)
        if not report["pass"]:
            raise WangViolation(f"Wang conditions violated: {report['residuals']}")
    return ConnectionForm(L.quotient, "wang", wang=L)


def wang_connection(quotient: Quotient | str, coeffs, check: bool = True) -> ConnectionForm:
    q = get_quotient(quotient) if isinstance(quotient, str) else quotient
    return connection_from_wang(WangMap(q, coeffs), check=check)


def coefficient_connection(quotient: Quotient | str, coeffs: Sequence[str | float] | Callable) -> ConnectionForm:
    """Connection with base-dependent coefficients, one per algebra direction.

    ``coeffs`` is either a callable ``points -> (..., dim_g)`` or a list of
    expression strings in the base coordinates (``x``, ``y``).
    """
    q = get_quotient(quotient) if isinstance(quotient, str) else quotient
    if callable(coeffs):
        return ConnectionForm(q, "coefficient", coefficients=coeffs)
    exprs = tuple(str(c) for c in coeffs)
    if len(exprs) != q.group.dim_g:
        raise ShapeMismatch(f"{q.name} needs {q.group.dim_g} coefficients, got {len(exprs)}")
    return ConnectionForm(q, "coefficient", coefficients=compile_expressions(exprs, q.space), expressions=exprs)


def connection_from_json(d: dict[str, Any], quotient: Quotient) -> ConnectionForm:
    kind = d.get("kind", "wang")
    if kind == "wang":
        return wang_connection(quotient, np.asarray(d["coeffs"], dtype=float))
    if kind == "coefficient":
        return coefficient_connection(quotient, d["coeffs"])
    raise ValueError(f"unknown connection kind {kind!r}")


def evaluate(w: ConnectionForm, g: GroupElement, x: TangentVector) -> AlgebraElement:
    """omega_g(X) as an element of g (lying in the stabiliser subalgebra)."""
    if not w.spec.same_group(g.spec) or not g.spec.same_group(x.base.spec):
        raise SpecMismatch("connection, base point and tangent vector belong to different groups")
    comps = w(g.coords, x.value)
    return AlgebraElement(w.spec, w.quotient.h_embedding @ comps)


def restrict_at_identity(w: ConnectionForm) -> np.ndarray:
    """Matrix of omega_e in the algebra basis, shape (dim_h, dim_g)."""
    spec = w.spec
    e = G.identity(spec).coords
    basis = np.eye(spec.dim_g)
    values = G.hat(basis) if spec.kind == "SO3" else basis
    cols = w(np.broadcast_to(e, (spec.dim_g,) + e.shape), values)
    return cols.T


def vertical_lift(quotient: Quotient, gc, a) -> np.ndarray:
    """Fundamental vector field A^#(g) = (L_g)_* A for A in h (h-components ``a``)."""
    comps = np.asarray(a, dtype=float) @ quotient.h_embedding.T
    if quotient.group.kind == "SO3":
        return np.asarray(gc) @ G.hat(comps)
    return comps


def horizontal_part(w: ConnectionForm, gc, value) -> np.ndarray:
    return np.asarray(value) - vertical_lift(w.quotient, gc, w(gc, value))


def _tangent_basis(spec: GroupSpec, gc: np.ndarray) -> np.ndarray:
    """Left-translated basis vectors at each g: shape (n, dim_g, *coord_shape)."""
    basis = np.eye(spec.dim_g)
    if spec.kind == "SO3":
        return np.einsum("nij,kjl->nkil", gc, G.hat(basis))
    return np.broadcast_to(basis, (len(gc),) + basis.shape)


def principal_check(w: ConnectionForm, samples: int = 100, seed: int = 42) -> dict[str, Any]:
    """Vertical normalisation and right-equivariance residuals on random samples."""
    q = w.quotient
    rng = np.random.default_rng(seed)
    gc = G.random_coords(q.group, rng, samples)
    if q.dim_h == 0:
        return {"pass": True, "residuals": {"vertical": 0.0, "equivariance": 0.0}}
    a = rng.normal(size=(samples, q.dim_h))
    vert = np.abs(w(gc, vertical_lift(q, gc, a)) - a).max()

    hp = rng.uniform(0.0, G.TWO_PI, size=samples) if q.h_periodic else rng.uniform(-2, 2, size=samples)
    hc = q.h_coords(hp)
    ghc = G.compose_coords(q.group, gc, hc)
    worst = 0.0
    for k in range(q.group.dim_g):
        x = _tangent_basis(q.group, gc)[:, k]
        moved = x @ hc if q.group.kind == "SO3" else x  # (R_h)_*
        # Ad_{h^-1} acts trivially on the one-dimensional stabiliser algebra
        worst = max(worst, float(np.abs(w(ghc, moved) - w(gc, x)).max()))
    ok = vert <= COND_I_TOL and worst <= COND_I_TOL
    return {"pass": bool(ok), "residuals": {"vertical": float(vert), "equivariance": worst}}


def invariance_check(w: ConnectionForm, samples: int = 100, seed: int = 42,
                     witnesses: Sequence[tuple[np.ndarray, np.ndarray]] = ()) -> dict[str, Any]:
    """Max over sampled (g, g', X) of |omega_{g g'}((L_g)_* X) - omega_{g'}(X)|.

    ``witnesses`` are extra (g, g') coordinate pairs evaluated alongside the
    random draws; X ranges over the left-translated basis at g'.
    """
    spec = w.spec
    rng = np.random.default_rng(seed)
    g = G.random_coords(spec, rng, samples)
    gp = G.random_coords(spec, rng, samples)
    if witnesses:
        g = np.concatenate([np.stack([np.asarray(a, dtype=float) for a, _ in witnesses]), g])
        gp = np.concatenate([np.stack([np.asarray(b, dtype=float) for _, b in witnesses]), gp])
        g = G.canonical_coords(spec, g)
        gp = G.canonical_coords(spec, gp)
    ggp = G.compose_coords(spec, g, gp)
    basis = _tangent_basis(spec, gp)
    res = np.zeros((len(g), spec.dim_g))
    for k in range(spec.dim_g):
        x = basis[:, k]
        pushed = g @ x if spec.kind == "SO3" else x
        d = w(ggp, pushed) - w(gp, x)
        res[:, k] = np.linalg.norm(d, axis=-1)
    i, k = np.unravel_index(int(np.argmax(res)), res.shape)
    return {
        "residual": float(res[i, k]),
        "witness": {"g": g[i].reshape(-1).tolist(), "g_prime": gp[i].reshape(-1).tolist(), "direction": int(k)},
    }
