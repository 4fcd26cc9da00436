import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steerable_node import connection as C
from steerable_node import groups as G
from steerable_node.bundle import get_quotient
from steerable_node.errors import ShapeMismatch, UnsupportedGroup, WangViolation
from steerable_node.groups import AlgebraElement, GroupElement, TangentVector

SO3Q = get_quotient("SO3/SO2")
PRODQ = get_quotient("R2xU1/U1")
small = st.floats(-2.0, 2.0, allow_nan=False)


def rot_x(b):
    c, s = np.cos(b), np.sin(b)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def cond_i_oracle(row, betas):
    """max over the given angles of |row R_x(beta) - row|, entrywise."""
    return max(np.abs(row @ rot_x(b) - row).max() for b in betas)


def test_canonical_so3_map_passes():
    rep = C.wang_check(SO3Q, [1.0, 0.0, 0.0])
    assert rep["pass"] and rep["violations"] == []
    assert rep["residuals"]["cond_i"] <= 1e-12
    assert rep["residuals"]["cond_ii"] == 0.0


def test_tilted_so3_map_fails_condition_i():
    rep = C.wang_check("SO3/SO2", [1.0, 0.2, 0.0])
    assert not rep["pass"]
    assert rep["violations"] == ["cond_i"]
    # closed form: the row (1, a, 0) moves by a (cos b - 1, -sin b), whose
    # sup-norm peaks at 2 a for b = pi
    assert rep["residuals"]["cond_i"] == pytest.approx(0.4, abs=1e-12)
    row = np.array([1.0, 0.2, 0.0])
    assert cond_i_oracle(row, [np.pi]) == pytest.approx(0.4, abs=1e-15)
    assert cond_i_oracle(row, np.linspace(0.0, 2 * np.pi, 401)) <= 0.4 + 1e-12
    assert rep["witness"]["h"] == pytest.approx(np.pi / 2)
    assert rep["witness"]["worst_h"] == pytest.approx(np.pi)


def test_condition_ii_failure():
    rep = C.wang_check(SO3Q, [0.5, 0.0, 0.0])
    assert rep["violations"] == ["cond_ii"]
    assert rep["residuals"]["cond_ii"] == pytest.approx(0.5)


@settings(max_examples=60, deadline=None)
@given(small, small)
def test_so3_maps_pass_exactly_when_untilted(a, b):
    rep = C.wang_check(SO3Q, [1.0, a, b])
    # the entrywise residual at b = pi is 2 max(|a|, |b|)
    assert rep["residuals"]["cond_i"] >= 2 * max(abs(a), abs(b)) - 1e-12
    assert rep["pass"] == (max(abs(a), abs(b)) <= C.COND_I_TOL / 2)


@settings(max_examples=60, deadline=None)
@given(small, small, small)
def test_product_group_maps_depend_only_on_h_entry(a, b, c):
    rep = C.wang_check(PRODQ, [a, b, c])
    assert rep["residuals"]["cond_i"] == 0.0
    assert rep["pass"] == (abs(c - 1.0) <= C.COND_II_TOL)


def test_shape_checks():
    with pytest.raises(ShapeMismatch):
        C.wang_check(SO3Q, [1.0, 0.0])
    with pytest.raises(ShapeMismatch):
        C.WangMap(PRODQ, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    C.WangMap(get_quotient("R2/e"), [])


def test_construction_enforces_wang_conditions():
    with pytest.raises(WangViolation):
        C.wang_connection(SO3Q, [1.0, 0.2, 0.0])
    C.wang_connection(SO3Q, [1.0, 0.2, 0.0], check=False)


def test_free_basis():
    np.testing.assert_array_equal(C.wang_free_basis(SO3Q), np.zeros((0, 3)))
    np.testing.assert_array_equal(C.wang_free_basis(PRODQ), [[1, 0, 0], [0, 1, 0]])
    np.testing.assert_array_equal(C.wang_free_basis(get_quotient("R2/R")), [[1, 0]])
    rng = np.random.default_rng(0)
    for q in (SO3Q, PRODQ, get_quotient("R2/R")):
        basis = C.wang_free_basis(q)
        for _ in range(5):
            cand = C.canonical_wang(q) + rng.normal(size=len(basis)) @ basis if len(basis) else C.canonical_wang(q)
            assert C.wang_check(q, cand)["pass"]


def test_restriction_at_identity_recovers_wang_map():
    for q, coeffs in ((SO3Q, [1.0, 0.0, 0.0]), (PRODQ, [np.pi, 1.0, 1.0]), (get_quotient("R2/R"), [-0.3, 1.0])):
        w = C.wang_connection(q, coeffs)
        np.testing.assert_allclose(C.restrict_at_identity(w), [coeffs], atol=1e-15)


def test_wang_connection_values():
    w = C.wang_connection(PRODQ, [np.pi, 1.0, 1.0])
    g = GroupElement(G.R2xU1, [0.3, -2.0, 1.0])
    out = C.evaluate(w, g, TangentVector(g, [1.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.comps, [0.0, 0.0, np.pi])


def test_so3_connection_reads_first_component():
    w = C.wang_connection(SO3Q, [1.0, 0.0, 0.0])
    rng = np.random.default_rng(1)
    g = G.random_element(G.SO3, rng)
    x = rng.normal(size=3)
    v = G.push_left(g, G.tangent_at_identity(AlgebraElement(G.SO3, x)))
    assert C.evaluate(w, g, v).comps == pytest.approx([x[0], 0.0, 0.0], abs=1e-14)


@pytest.mark.parametrize("q,coeffs", [(SO3Q, [1.0, 0.0, 0.0]), (PRODQ, [np.pi, 1.0, 1.0]),
                                      (get_quotient("R2/R"), [0.7, 1.0])])
def test_wang_connections_are_principal_and_invariant(q, coeffs):
    w = C.wang_connection(q, coeffs)
    rep = C.principal_check(w, samples=200, seed=3)
    assert rep["pass"], rep
    assert C.invariance_check(w, samples=200, seed=3)["residual"] <= 1e-12


def test_tilted_so3_form_is_not_right_equivariant():
    w = C.wang_connection(SO3Q, [1.0, 0.2, 0.0], check=False)
    rep = C.principal_check(w, samples=200, seed=0)
    assert rep["residuals"]["vertical"] <= 1e-12
    assert rep["residuals"]["equivariance"] > 0.1
    assert not rep["pass"]


def test_coefficient_connection_value():
    w = C.coefficient_connection(PRODQ, ["0", "y**2", "1"])
    g = GroupElement(G.R2xU1, [0.0, 2.0, 0.0])
    out = C.evaluate(w, g, TangentVector(g, [0.0, 1.0, 0.0]))
    np.testing.assert_allclose(out.comps, [0.0, 0.0, 4.0])


def test_coefficient_connection_principal_but_not_invariant():
    w = C.coefficient_connection(PRODQ, ["0", "y**2", "1"])
    assert C.principal_check(w, samples=100)["pass"]
    rep = C.invariance_check(w, samples=100, witnesses=[([0.0, 1.0, 0.0], [0.0, 1.0, 0.0])])
    # at g = g' = (0, 1, 0) along d/dy: 2^2 - 1^2 = 3
    assert rep["residual"] >= 3.0 - 1e-12


def test_coefficient_connection_rejects_nonabelian():
    with pytest.raises(UnsupportedGroup):
        C.coefficient_connection(SO3Q, ["1", "0", "0"])


def test_unknown_symbol_in_expression():
    with pytest.raises(ValueError):
        C.coefficient_connection(PRODQ, ["0", "q", "1"])


def test_horizontal_part_is_horizontal():
    rng = np.random.default_rng(5)
    for q, coeffs in ((SO3Q, [1.0, 0.0, 0.0]), (PRODQ, [0.5, -1.0, 1.0])):
        w = C.wang_connection(q, coeffs)
        gc = G.random_coords(q.group, rng, 40)
        vals = C._tangent_basis(q.group, gc)[:, 0] + C._tangent_basis(q.group, gc)[:, -1]
        assert np.abs(w(gc, C.horizontal_part(w, gc, vals))).max() <= 1e-13


def test_json_round_trip():
    for w in (C.wang_connection(PRODQ, [np.pi, 1.0, 1.0]), C.coefficient_connection(PRODQ, ["0", "y**2", "1"])):
        d = json.loads(json.dumps(w.to_json()))
        back = C.connection_from_json(d, PRODQ)
        assert back.key() == w.key()
        gc = G.random_coords(G.R2xU1, np.random.default_rng(0), 10)
        vals = np.random.default_rng(1).normal(size=(10, 3))
        np.testing.assert_array_equal(back(gc, vals), w(gc, vals))
    with pytest.raises(ValueError):
        C.coefficient_connection(PRODQ, lambda p: np.zeros(p.shape[:-1] + (3,))).to_json()
