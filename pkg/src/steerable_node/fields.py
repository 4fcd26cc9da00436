"""Vector fields on the base space M.

Every field is a callable ``field(points) -> velocities`` vectorised over
leading axes.  On S2 the velocity is tangent to the sphere at unit-norm
inputs.  Fields expose ``key()`` (a hashable identity used for caching base
flows), a flat parameter vector for fitting, and a JSON form.
"""
from __future__ import annotations

from typing import Any, Callable, Sequence

import numpy as np

from .bundle import SPACE_DIMS
from .expressions import compile_expressions


class VectorField:
    space: str

    def __call__(self, points) -> np.ndarray:
        raise NotImplementedError

    def key(self) -> tuple:
        raise NotImplementedError

    # parameters exposed to the fitting code
    def params(self) -> np.ndarray:
        return np.zeros(0)

    def with_params(self, theta) -> "VectorField":
        if len(theta):
            raise ValueError(f"{type(self).__name__} has no parameters")
        return self

    def to_json(self) -> dict[str, Any]:
        raise NotImplementedError


class ConstantField(VectorField):
    """Constant coefficients in the coordinate frame of a flat base (R1, R2, S1)."""

    def __init__(self, space: str, coeffs: Sequence[float]):
        if space == "S2":
            raise ValueError("constant coordinate fields are only defined on flat bases")
        self.space = space
        self.coeffs = np.array(coeffs, dtype=float).reshape(-1)
        if self.coeffs.shape != (SPACE_DIMS[space],):
            raise ValueError(f"{space} fields need {SPACE_DIMS[space]} coefficients")

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        return np.broadcast_to(self.coeffs, points.shape).copy()

    def key(self):
        return ("constant", self.space, self.coeffs.tobytes())

    def params(self):
        return self.coeffs.copy()

    def with_params(self, theta):
        return ConstantField(self.space, theta)

    def to_json(self):
        return {"kind": "constant", "coeffs": self.coeffs.tolist()}

    def __repr__(self):
        return f"ConstantField({self.space}, {self.coeffs.tolist()})"


class RotationField(VectorField):
    """Infinitesimal rotation p -> w x p on S2 generated by so(3) components ``w``."""

    space = "S2"

    def __init__(self, w: Sequence[float]):
        self.w = np.array(w, dtype=float).reshape(3)

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        return np.cross(np.broadcast_to(self.w, points.shape), points)

    def key(self):
        return ("rotation", self.w.tobytes())

    def params(self):
        return self.w.copy()

    def with_params(self, theta):
        return RotationField(theta)

    def to_json(self):
        return {"kind": "rotation", "coeffs": self.w.tolist()}

    def __repr__(self):
        return f"RotationField({self.w.tolist()})"


class NetField(VectorField):
    """Two-layer tanh network on ambient coordinates.

    ``params`` packs ``W1 (hidden, d), b1 (hidden), W2 (d, hidden), b2 (d)``.
    On S2 the output is projected onto the tangent plane of the input.
    """

    def __init__(self, space: str, hidden: int, theta: Sequence[float] | None = None, seed: int = 0, scale: float = 0.5):
        self.space = space
        self.hidden = int(hidden)
        d = SPACE_DIMS[space]
        n = self.hidden * d * 2 + self.hidden + d
        if theta is None:
            theta = np.random.default_rng(seed).normal(scale=scale, size=n)
        self.theta = np.array(theta, dtype=float).reshape(-1)
        if self.theta.shape != (n,):
            raise ValueError(f"net field on {space} with {hidden} hidden units needs {n} parameters")

    def _unpack(self):
        d, h, t = SPACE_DIMS[self.space], self.hidden, self.theta
        w1 = t[: h * d].reshape(h, d)
        b1 = t[h * d: h * d + h]
        w2 = t[h * d + h: 2 * h * d + h].reshape(d, h)
        b2 = t[2 * h * d + h:]
        return w1, b1, w2, b2

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        w1, b1, w2, b2 = self._unpack()
        out = np.tanh(points @ w1.T + b1) @ w2.T + b2
        if self.space == "S2":
            out = out - np.sum(out * points, axis=-1, keepdims=True) * points / np.sum(points * points, axis=-1, keepdims=True)
        return out

    def key(self):
        return ("net", self.space, self.hidden, self.theta.tobytes())

    def params(self):
        return self.theta.copy()

    def with_params(self, theta):
        return NetField(self.space, self.hidden, theta)

    def to_json(self):
        return {"kind": "net", "hidden": self.hidden, "coeffs": self.theta.tolist()}


class FunctionField(VectorField):
    """Field given by expressions in the base coordinates, or by a callable."""

    def __init__(self, space: str, exprs: Sequence[str] | Callable[[np.ndarray], np.ndarray]):
        self.space = space
        if callable(exprs):
            self.exprs = None
            self._f = exprs
        else:
            self.exprs = tuple(str(e) for e in exprs)
            if len(self.exprs) != SPACE_DIMS[space]:
                raise ValueError(f"{space} fields need {SPACE_DIMS[space]} components")
            self._f = compile_expressions(self.exprs, space)

    def __call__(self, points):
        out = np.asarray(self._f(np.asarray(points, dtype=float)), dtype=float)
        if self.space == "S2":
            p = np.asarray(points, dtype=float)
            out = out - np.sum(out * p, axis=-1, keepdims=True) * p / np.sum(p * p, axis=-1, keepdims=True)
        return out

    def key(self):
        return ("function", self.space, self.exprs if self.exprs is not None else self._f)

    def to_json(self):
        if self.exprs is None:
            raise ValueError("callable fields do not serialise")
        return {"kind": "expression", "coeffs": list(self.exprs)}

    def __repr__(self):
        return f"FunctionField({self.space}, {self.exprs})"


def zero_field(space: str) -> VectorField:
    if space == "S2":
        return RotationField([0.0, 0.0, 0.0])
    return ConstantField(space, np.zeros(SPACE_DIMS[space]))


def field_from_json(d: dict[str, Any], space: str) -> VectorField:
    kind = d.get("kind")
    if kind == "constant":
        return ConstantField(space, d["coeffs"])
    if kind == "rotation":
        return RotationField(d["coeffs"])
    if kind == "net":
        return NetField(space, int(d["hidden"]), d.get("coeffs"), seed=int(d.get("seed", 0)))
    if kind == "expression":
        return FunctionField(space, d["coeffs"])
    raise ValueError(f"unknown field kind {kind!r}")


def push_field(gc, velocities, group_kind: str) -> np.ndarray:
    """(L_g)_* of base tangent vectors: rotation on S2, identity for translations."""
    if group_kind == "SO3":
        return np.einsum("...ij,...j->...i", np.asarray(gc), np.asarray(velocities))
    return np.asarray(velocities, dtype=float)

