import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import unit_sphere
from steerable_node import features as F
from steerable_node import groups as G
from steerable_node.bundle import BasePoint, SectionChart
from steerable_node.errors import DimMismatch, OutsideChart
from steerable_node.features import ROT2, TRIVIAL, MackeyFunction, Representation, weighted
from steerable_node.groups import GroupElement

angle = st.floats(-10.0, 10.0, allow_nan=False)


def sphere_feature(p):
    return np.stack([p[..., 1] * p[..., 2] + 0.3, np.sin(p[..., 0])], axis=-1)


def plane_feature(p):
    return np.stack([np.cos(p[..., 0]) + p[..., 1], p[..., 0] * p[..., 1]], axis=-1)


@settings(max_examples=60, deadline=None)
@given(angle, angle, st.integers(0, 4))
def test_representation_is_homomorphism(a, b, n):
    rho = weighted(n) if n else TRIVIAL
    np.testing.assert_allclose(rho.matrix(a + b), rho.matrix(a) @ rho.matrix(b), atol=1e-12)
    np.testing.assert_allclose(rho.matrix(0.0), np.eye(rho.dim), atol=0)


def test_weighted_and_rotation_match():
    b = np.linspace(-3, 3, 7)
    np.testing.assert_array_equal(weighted(1).matrix(b), ROT2.matrix(b))
    np.testing.assert_allclose(weighted(3).matrix(0.4), ROT2.matrix(1.2))


def test_generator_is_derivative():
    for rho in (TRIVIAL, ROT2, weighted(2), Representation("trivial", 3)):
        eps = 1e-6
        fd = (rho.matrix(eps) - rho.matrix(-eps)) / (2 * eps)
        np.testing.assert_allclose(rho.generator(), fd, atol=1e-9)


def test_representation_validation_and_json():
    with pytest.raises(ValueError):
        Representation("spin")
    with pytest.raises(DimMismatch):
        ROT2.apply(0.3, [1.0, 0.0, 0.0])
    for rho in (TRIVIAL, ROT2, weighted(2)):
        assert Representation.from_json(json.loads(json.dumps(rho.to_json()))) == rho


@pytest.mark.parametrize("chart", [SectionChart(G.R2xU1, "R2", chi=0.3), SectionChart(G.SO3, "S2")],
                         ids=["product", "sphere"])
def test_induced_action_is_an_action(chart):
    q = chart.quotient
    rng = np.random.default_rng(0)
    gs1, ps = F.sample_action_inputs(chart, 200, seed=1)
    gs2 = G.random_coords(q.group, rng, 200)
    vs = rng.normal(size=(200, 2))
    mid = q.act(gs2, ps)
    end = q.act(gs1, mid)
    ok = chart.contains(mid) & chart.contains(end)
    gs1, gs2, ps, vs = gs1[ok], gs2[ok], ps[ok], vs[ok]
    p1, w1 = F.induced_action_arrays(chart, ROT2, gs2, ps, vs)
    p2, w2 = F.induced_action_arrays(chart, ROT2, gs1, p1, w1)
    p3, w3 = F.induced_action_arrays(chart, ROT2, G.compose_coords(q.group, gs1, gs2), ps, vs)
    np.testing.assert_allclose(p2, p3, atol=1e-12)
    np.testing.assert_allclose(w2, w3, atol=1e-9)


def test_induced_action_of_identity():
    chart = SectionChart(G.SO3, "S2")
    p = BasePoint("S2", [0.0, 0.6, 0.8])
    out, w = F.induced_left_action(chart, ROT2, G.identity(G.SO3), p, [0.2, -0.4])
    np.testing.assert_allclose(out.coords, p.coords)
    np.testing.assert_allclose(w, [0.2, -0.4], atol=1e-15)


def test_induced_action_outside_chart():
    chart = SectionChart(G.SO3, "S2")
    with pytest.raises(OutsideChart):
        F.induced_left_action(chart, ROT2, G.GroupElement(G.SO3, np.diag([-1.0, -1.0, 1.0])),
                              BasePoint("S2", [1.0, 0.0, 0.0]), [1.0, 0.0])


@pytest.mark.parametrize("chart,f", [(SectionChart(G.R2xU1, "R2", chi=0.5), plane_feature),
                                     (SectionChart(G.SO3, "S2", p0=(0.0, 0.6, 0.8)), sphere_feature)],
                         ids=["product", "sphere"])
@pytest.mark.parametrize("rho", [ROT2, weighted(3)], ids=["rot2", "weighted3"])
def test_mackey_property(chart, f, rho):
    k = MackeyFunction(f, chart, rho)
    rep = F.mackey_check(k, samples=200, seed=3)
    assert rep["pass"], rep
    assert rep["max_residual"] <= 1e-10


def test_broken_mackey_function_is_caught():
    chart = SectionChart(G.R2xU1, "R2")

    def not_mackey(gc):
        # ignores the fibre coordinate
        return plane_feature(gc[..., :2])

    rep = F.mackey_check(not_mackey, samples=50, chart=chart, rho=ROT2, witnesses=[([0.0, 0.0, 0.0], np.pi)])
    assert not rep["pass"]
    # at the witness k(0) = (1, 0) and rho(-pi) k(0) = (-1, 0)
    assert rep["max_residual"] >= 2.0 - 1e-12


def test_mackey_value_on_section_is_feature():
    chart = SectionChart(G.SO3, "S2")
    k = MackeyFunction(sphere_feature, chart, ROT2)
    pts = unit_sphere(np.random.default_rng(4), 20)
    pts = pts[chart.contains(pts)]
    np.testing.assert_allclose(k(chart.section_coords(pts)), sphere_feature(pts), atol=1e-14)


@pytest.mark.parametrize("chart,f", [(SectionChart(G.R2xU1, "R2", chi=0.5), plane_feature),
                                     (SectionChart(G.SO3, "S2"), sphere_feature),
                                     (SectionChart(G.R2, "R1", offset="sin"), lambda p: np.stack([p[..., 0], np.ones_like(p[..., 0])], -1))],
                         ids=["product", "sphere", "line"])
def test_four_descriptions_agree(chart, f):
    gs, ps = F.sample_action_inputs(chart, 100, seed=5)
    rows = F.table_rows(chart, ROT2, f, gs, ps, shift=np.linspace(-2, 2, len(ps)))
    for name in ("mackey", "class", "representative"):
        np.testing.assert_allclose(rows[name], rows["local"], atol=1e-10, err_msg=name)


def test_induced_representation_is_homomorphism():
    chart = SectionChart(G.SO3, "S2")
    k = MackeyFunction(sphere_feature, chart, ROT2)
    rng = np.random.default_rng(6)
    g1 = GroupElement(G.SO3, G.so3_exp(np.array([0.1, 0.2, -0.1])))
    g2 = GroupElement(G.SO3, G.so3_exp(np.array([-0.2, 0.1, 0.15])))
    gs = G.random_coords(G.SO3, rng, 40)
    g12 = G.compose(g1, g2)

    def shifted(gc):
        return F.induced_rep_apply(g2, k, gc)

    keep = chart.contains(G.compose_coords(G.SO3, G.inverse(g12).coords, gs)[:, :, 0])
    keep &= chart.contains(G.compose_coords(G.SO3, G.inverse(g1).coords, gs)[:, :, 0])
    gs = gs[keep]
    np.testing.assert_allclose(F.induced_rep_apply(g1, shifted, gs), F.induced_rep_apply(g12, k, gs), atol=1e-12)
