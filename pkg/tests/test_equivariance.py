import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import sphere_model, translation_model, unit_sphere
from steerable_node import equivariance as E
from steerable_node import groups as G
from steerable_node.bundle import SectionChart
from steerable_node.connection import coefficient_connection, wang_connection
from steerable_node.errors import ChartExhausted
from steerable_node.features import ROT2, weighted
from steerable_node.fields import ConstantField, zero_field
from steerable_node.transport import SteerableModel


def axis_witnesses(seed, count=6):
    """Rotations about the z axis with random points and features."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        g = G.so3_exp(np.array([0.0, 0.0, rng.uniform(0.0, 2 * np.pi)]))
        out.append((g, unit_sphere(rng, 1)[0], rng.normal(size=2)))
    return out


def test_translation_model_is_equivariant(ex39):
    rep = E.check_equivariance(ex39, samples=100)
    assert rep.samples == 100
    assert rep.passed(1e-9), rep.to_json()
    assert rep.local_raw_residual <= 1e-9


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2), st.floats(-2, 2), st.floats(-3, 3))
def test_left_invariant_data_give_equivariance(a, b, fx, fy, chi):
    chart = SectionChart(G.R2xU1, "R2", chi=chi)
    model = SteerableModel(chart, ConstantField("R2", [fx, fy]), wang_connection(chart.quotient, [a, b, 1.0]), ROT2, 8)
    assert E.check_equivariance(model, samples=20, seed=1).passed(1e-9)


def test_zero_field_on_sphere_is_equivariant():
    model = sphere_model(n_steps=16).replace(field=zero_field("S2"))
    rep = E.check_equivariance(model, samples=50)
    assert rep.passed(1e-12)


def test_sphere_equivariant_under_symmetries_of_the_field():
    model = sphere_model(w=(0.0, 0.0, 1.0), n_steps=128)
    rep = E.check_equivariance(model, samples=0, witnesses=axis_witnesses(0))
    assert rep.samples == 6
    assert rep.passed(1e-8), rep.to_json()


def test_sphere_rotation_field_breaks_full_equivariance():
    model = sphere_model(w=(0.0, 0.0, 1.0), n_steps=64)
    rep = E.check_equivariance(model, samples=30)
    # a rotation field is only invariant under rotations about its own axis
    assert rep.base_residual > 0.1
    assert E.field_invariance_residual(model.field, model.chart) > 0.1
    assert E.field_invariance_residual(zero_field("S2"), model.chart) == 0.0


def test_tilted_wang_map_breaks_equivariance():
    model = sphere_model(w=(0.0, 0.0, 1.0), n_steps=128)
    tilted = model.replace(connection=wang_connection(model.quotient, [1.0, 0.2, 0.0], check=False))
    rep = E.check_equivariance(tilted, samples=0, witnesses=axis_witnesses(0))
    assert rep.base_residual <= 1e-12
    assert rep.fibre_residual > 0.05
    assert rep.local_condition_residual > 0.05


def test_non_invariant_connection_breaks_equivariance():
    chart = SectionChart(G.R2xU1, "R2")
    model = SteerableModel(chart, ConstantField("R2", [1.0, 0.0]),
                           coefficient_connection(chart.quotient, ["x", "0", "1"]), ROT2, 32)
    # h_p(1) = -(x + 1/2), so a translation by s in x changes the steering by -s
    wit = [([0.5, 0.0, 0.0], [0.0, 0.0], [1.0, 0.0])]
    rep = E.check_equivariance(model, samples=0, witnesses=wit)
    assert rep.local_raw_residual == pytest.approx(0.5, abs=1e-12)
    assert rep.fibre_residual == pytest.approx(np.linalg.norm(ROT2.apply(0.5, [1.0, 0.0]) - [1.0, 0.0]), abs=1e-12)


def test_kernel_of_rho_is_quotiented():
    model = translation_model(rep=weighted(2))
    rep = E.check_equivariance(model, samples=30, steer_shift=np.pi)
    assert rep.local_condition_residual <= 1e-12
    assert rep.fibre_residual <= 1e-12
    assert rep.local_raw_residual == pytest.approx(np.pi, abs=1e-12)
    # a shift outside the kernel is visible in both
    bad = E.check_local_condition(model, samples=30, steer_shift=np.pi / 2)
    assert bad["residual"] > 1.0 and bad["raw_residual"] == pytest.approx(np.pi / 2, abs=1e-12)


def test_witness_replays(ex39):
    model = translation_model(rep=weighted(2))
    rep = E.check_equivariance(model, samples=10, steer_shift=0.3)
    wit = rep.witnesses["local_raw"]
    again = E.replay_witness(model, wit, steer_shift=0.3)
    assert again["local_raw"] == pytest.approx(rep.local_raw_residual, abs=1e-14)


def test_counterexample_split():
    out = E.counterexample_suite(samples=50, n_steps=64)
    assert out["verdict"] == "split"
    assert out["invariance"]["residual"] >= 1.0
    assert out["node_equivariant"] and not out["connection_invariant"]
    assert out["equivariance"]["fibre_residual"] <= 1e-12


def test_chart_exhaustion():
    chart = SectionChart(G.SO3, "S2", exclusion=np.pi - 1e-3)
    model = SteerableModel(chart, zero_field("S2"), wang_connection(chart.quotient, [1.0, 0.0, 0.0]), ROT2, 4)
    with pytest.raises(ChartExhausted):
        E.check_equivariance(model, samples=10)


def test_sampling_is_seeded(ex39):
    a = E.check_equivariance(ex39, samples=5, seed=3).witnesses
    b = E.check_equivariance(ex39, samples=5, seed=3).witnesses
    assert a == b


def test_samples_stay_in_chart(sphere):
    model = sphere_model(w=(0.3, 0.2, 0.9), n_steps=64)
    gc, p, _ = E._draw(model, 40, 5)
    assert np.all(model.chart.contains(p))
    assert np.all(model.chart.contains(model.quotient.act(gc, p)))
    assert len(p) == 40
