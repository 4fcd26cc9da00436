"""Continuous normalizing flows on abelian Lie groups with trivial stabiliser.

A density is carried along characteristics: every quadrature node g_0 of
the initial grid is transported by ``dg/dt = phi(g)`` while its log-density
obeys ``d log p / dt = -div phi(g)``.  Both are integrated together with
RK4.  Mass at a later time is computed by change of variables back to the
initial grid, ``sum_j w_j p_t(g_t(x_j)) |det D g_t(x_j)|``, where the
Jacobian of the pushed nodes is obtained by spectral differentiation (FFT
on the circle, a Legendre collocation matrix on truncated R^n).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import groups as G
from .errors import NormalizationDrift, UnsupportedGroup
from .groups import GroupElement, GroupSpec

DIV_STEP = 1e-5
MASS_TOL = 1e-4
R_HALF_WIDTH = 8.0

FieldFn = Callable[[np.ndarray], np.ndarray]


def _space_of(spec: GroupSpec) -> str:
    if spec.kind in ("U1", "SO2"):
        return "S1"
    if spec.kind == "Rn" and spec.n <= 2:
        return f"R{spec.n}"
    raise UnsupportedGroup(f"no density quadrature for {spec.name}")


@dataclass(frozen=True, eq=False)
class DensityState:
    group: GroupSpec
    grid: np.ndarray  # initial quadrature nodes (n, d)
    weights: np.ndarray  # Haar quadrature weights of the initial grid (n,)
    positions: np.ndarray  # current position of each characteristic, unwrapped (n, d)
    log_p: np.ndarray  # log density at ``positions`` (n,)
    time: float = 0.0
    shape: tuple[int, ...] = ()  # tensor-grid shape for R^2

    @property
    def wrapped_positions(self) -> np.ndarray:
        if self.group.kind in ("U1", "SO2"):
            return G.wrap_angle(self.positions)
        return self.positions

    def mass(self) -> float:
        return float(np.sum(self.weights * np.exp(self.log_p) * jacobian(self)))


def uniform_circle(n: int = 1024, group: GroupSpec = G.U1) -> DensityState:
    theta = G.TWO_PI * np.arange(n) / n
    grid = theta[:, None]
    return DensityState(group, grid, np.full(n, G.TWO_PI / n), grid.copy(), np.full(n, -np.log(G.TWO_PI)))


def circle_state(logpdf: Callable[[np.ndarray], np.ndarray], n: int = 1024, group: GroupSpec = G.U1) -> DensityState:
    """Circle grid with a user log-density, renormalised on the grid."""
    st = uniform_circle(n, group)
    lp = logpdf(st.grid[:, 0])
    lp = lp - np.log(np.sum(st.weights * np.exp(lp)))
    return replace(st, log_p=lp)


def _legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return R_HALF_WIDTH * x, R_HALF_WIDTH * w


def gaussian_state(mean: Sequence[float] = (0.0,), std: float = 1.0, n: int = 128) -> DensityState:
    """Gaussian on R^1 or R^2 with Gauss-Legendre nodes on [-8, 8]^d."""
    mean = np.asarray(mean, dtype=float).reshape(-1)
    d = len(mean)
    x, w = _legendre(n)
    if d == 1:
        grid, weights, shape = x[:, None], w, (n,)
    elif d == 2:
        xx, yy = np.meshgrid(x, x, indexing="ij")
        grid = np.stack([xx.ravel(), yy.ravel()], axis=1)
        weights = np.outer(w, w).ravel()
        shape = (n, n)
    else:
        raise UnsupportedGroup("Gaussian states are provided for R1 and R2")
    lp = -0.5 * np.sum((grid - mean) ** 2, axis=1) / std**2 - d * np.log(std * np.sqrt(G.TWO_PI))
    return DensityState(GroupSpec("Rn", d), grid, weights, grid.copy(), lp, 0.0, shape)


# ---------------------------------------------------------------------------
# divergence
# ---------------------------------------------------------------------------

def divergence_coords(phi: FieldFn, spec: GroupSpec, points, step: float = DIV_STEP) -> np.ndarray:
    """Haar divergence by central differences: z'(theta) on the circle, the
    coordinate divergence on R^n."""
    _space_of(spec)
    points = np.asarray(points, dtype=float)
    total = np.zeros(points.shape[:-1])
    for i in range(points.shape[-1]):
        e = np.zeros(points.shape[-1])
        e[i] = step
        total += (phi(points + e)[..., i] - phi(points - e)[..., i]) / (2.0 * step)
    return total


def divergence(phi: FieldFn, g: GroupElement) -> float:
    if g.spec.kind == "SO3":
        raise UnsupportedGroup("divergence on SO(3) is not provided")
    return float(divergence_coords(phi, g.spec, g.coords[None, :])[0])


# ---------------------------------------------------------------------------
# Jacobian of the pushed grid
# ---------------------------------------------------------------------------

def _spectral_derivative(f: np.ndarray) -> np.ndarray:
    """Derivative of a periodic sample sequence on the uniform 2 pi grid."""
    n = len(f)
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return np.real(np.fft.ifft(1j * k * np.fft.fft(f)))


def _legendre_diff_matrix(x: np.ndarray) -> np.ndarray:
    """Collocation differentiation matrix on nodes ``x`` of [-L, L]."""
    n = len(x)
    t = x / R_HALF_WIDTH
    v = np.polynomial.legendre.legvander(t, n - 1)
    dv = np.zeros_like(v)
    for k in range(n):
        c = np.zeros(n)
        c[k] = 1.0
        dv[:, k] = np.polynomial.legendre.legval(t, np.polynomial.legendre.legder(c))
    return dv @ np.linalg.inv(v) / R_HALF_WIDTH


def jacobian(state: DensityState) -> np.ndarray:
    """|det d g_t / d g_0| at every initial node."""
    disp = state.positions - state.grid
    if not np.any(disp):
        return np.ones(len(state.grid))
    if state.group.kind in ("U1", "SO2"):
        return np.abs(1.0 + _spectral_derivative(disp[:, 0]))
    if state.grid.shape[1] == 1:
        d = _legendre_diff_matrix(state.grid[:, 0])
        return np.abs(1.0 + d @ disp[:, 0])
    n = state.shape[0]
    x = state.grid.reshape(n, n, 2)[:, 0, 0]
    d = _legendre_diff_matrix(x)
    u = disp.reshape(n, n, 2)
    jac = np.empty((n, n, 2, 2))
    for comp in range(2):
        jac[..., comp, 0] = np.einsum("ij,jk->ik", d, u[..., comp])
        jac[..., comp, 1] = np.einsum("kj,ij->ik", d, u[..., comp])
    jac += np.eye(2)
    return np.abs(np.linalg.det(jac)).ravel()


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

def _cnf_rhs(phi: FieldFn, spec: GroupSpec, y: np.ndarray):
    return phi(y), -divergence_coords(phi, spec, y)


def integrate_cnf(phi: FieldFn, state: DensityState, n_steps: int = 1024, horizon: float = 1.0,
                  check: bool = True, tol: float = MASS_TOL) -> DensityState:
    """Transport every characteristic over ``horizon`` and accumulate log p.

    Raises NormalizationDrift when the change-of-variables mass leaves
    ``1 +- tol``.
    """
    spec = state.group
    _space_of(spec)
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    dt = horizon / n_steps
    y = np.array(state.positions, dtype=float)
    lp = np.array(state.log_p, dtype=float)
    for _ in range(n_steps):
        v1, d1 = _cnf_rhs(phi, spec, y)
        v2, d2 = _cnf_rhs(phi, spec, y + 0.5 * dt * v1)
        v3, d3 = _cnf_rhs(phi, spec, y + 0.5 * dt * v2)
        v4, d4 = _cnf_rhs(phi, spec, y + dt * v3)
        y = y + dt * (v1 + 2.0 * v2 + 2.0 * v3 + v4) / 6.0
        lp = lp + dt * (d1 + 2.0 * d2 + 2.0 * d3 + d4) / 6.0
    out = replace(state, positions=y, log_p=lp, time=state.time + horizon)
    if check:
        m = out.mass()
        if abs(m - 1.0) > tol:
            raise NormalizationDrift(f"mass {m:.8f} at t = {out.time:g}")
    return out


def cnf_snapshots(phi: FieldFn, state: DensityState, times: Sequence[float], n_steps: int = 1024,
                  check: bool = True) -> list[DensityState]:
    """States at the requested times (sorted, >= the initial time).  Each leg
    uses a step count proportional to its length at the unit-horizon rate."""
    out = []
    current = state
    for t in sorted(times):
        span = t - current.time
        if span < -1e-15:
            raise ValueError("snapshot times must not precede the initial state")
        if span <= 1e-15:
            out.append(current)
            continue
        steps = max(1, int(round(n_steps * span)))
        current = integrate_cnf(phi, current, steps, span, check=check)
        out.append(current)
    return out


def equivariant_cnf_check(phi: FieldFn, g: GroupElement, samples: int = 100, seed: int = 42) -> float:
    """max |phi(g g') - (L_g)_* phi(g')| over sampled g'; (L_g)_* is the identity
    on coordinate components for these abelian groups."""
    spec = g.spec
    _space_of(spec)
    rng = np.random.default_rng(seed)
    gp = G.random_coords(spec, rng, samples)
    ggp = G.compose_coords(spec, g.coords, gp)
    return float(np.abs(phi(ggp) - phi(gp)).max())


def snapshot_rows(state: DensityState) -> tuple[list[str], np.ndarray]:
    d = state.grid.shape[1]
    header = [f"g{i}" for i in range(d)] + ["log_p"]
    return header, np.column_stack([state.wrapped_positions, state.log_p])


def tangent_half_angle(theta0, t):
    """Exact characteristics of d theta / dt = sin theta."""
    theta0 = np.asarray(theta0, dtype=float)
    return 2.0 * np.arctan2(np.exp(t) * np.sin(theta0 / 2.0), np.cos(theta0 / 2.0))
