import numpy as np
import pytest
from scipy.integrate import solve_ivp

from steerable_node import groups as G
from steerable_node.bundle import SectionChart
from steerable_node.connection import coefficient_connection, wang_connection
from steerable_node.features import ROT2
from steerable_node.fields import ConstantField, RotationField
from steerable_node.transport import SteerableModel


def translation_model(a=np.pi, chi=0.0, n_steps=1024, rep=ROT2, field=None):
    """R^2 x U(1) over R^2 with omega = a dx + dy + d theta and phi = d/dx."""
    chart = SectionChart(G.R2xU1, "R2", chi=chi)
    fld = field if field is not None else ConstantField("R2", [1.0, 0.0])
    return SteerableModel(chart, fld, wang_connection(chart.quotient, [a, 1.0, 1.0]), rep, n_steps)


def sphere_model(w=(0.0, 0.0, 1.0), n_steps=1024, rep=ROT2, p0=(1.0, 0.0, 0.0)):
    """SO(3) over S^2 with the canonical connection and a rotation field."""
    chart = SectionChart(G.SO3, "S2", p0=p0)
    return SteerableModel(chart, RotationField(w), wang_connection(chart.quotient, [1.0, 0.0, 0.0]), rep, n_steps)


def pushforward_model(n_steps=1024):
    """R^2 over R with section x -> (x, sin x) and omega = -cos(x) dx + dy."""
    chart = SectionChart(G.R2, "R1", offset="sin")
    conn = coefficient_connection(chart.quotient, ["-cos(x)", "1"])
    return SteerableModel(chart, ConstantField("R1", [1.0]), conn, ROT2, n_steps)


def unit_sphere(rng, n):
    x = rng.normal(size=(n, 3))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def levi_civita_holonomy(colatitude):
    """Rotation angle of a tangent vector carried once around a latitude
    circle, integrating v' = -(gamma' . v) gamma with an adaptive solver."""
    w = np.array([0.0, 0.0, 2 * np.pi])
    p = np.array([np.sin(colatitude), 0.0, np.cos(colatitude)])
    e_theta = np.array([np.cos(colatitude), 0.0, -np.sin(colatitude)])
    e_phi = np.array([0.0, 1.0, 0.0])

    def rhs(_, y):
        gamma, v = y[:3], y[3:]
        gdot = np.cross(w, gamma)
        return np.concatenate([gdot, -(gdot @ v) * gamma])

    sol = solve_ivp(rhs, (0.0, 1.0), np.concatenate([p, e_theta]), method="DOP853", rtol=1e-12, atol=1e-13)
    v = sol.y[3:, -1]
    return np.arctan2(v @ e_phi, v @ e_theta)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ex39():
    return translation_model()


@pytest.fixture
def sphere():
    return sphere_model()


# criterion number -> (passed, detail), filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
