import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import sphere_model, translation_model
from steerable_node import learn as L
from steerable_node.connection import wang_check
from steerable_node.errors import Diverged, Stalled
from steerable_node.fields import ConstantField

A_ONLY = {"wang": [0]}


def fibre_loss_oracle(a):
    """Mean |R(-a) v - R(-pi) v|^2 over unit v equals 2 + 2 cos a."""
    return 2.0 + 2.0 * np.cos(a)


@pytest.fixture(scope="module")
def ex39_data():
    return L.make_dataset(translation_model(), 64, seed=0)


def test_config_validation_and_json():
    with pytest.raises(ValueError):
        L.TrainConfig(fd_step=1e-2)
    with pytest.raises(ValueError):
        L.TrainConfig(weights=(0.0, 0.0))
    with pytest.raises(ValueError):
        L.TrainConfig(mask={"bias": None})
    cfg = L.TrainConfig(mask={"field": [0], "wang": None}, lr=0.05, weights=(2.0, 0.5))
    assert L.TrainConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg


def test_dataset_round_trip(ex39_data):
    back = L.Dataset.from_jsonl(ex39_data.to_jsonl())
    for name in ("p", "v", "p_out", "v_out"):
        np.testing.assert_array_equal(getattr(back, name), getattr(ex39_data, name))
    assert back.meta["seed"] == 0
    assert len(back) == 64


def test_dataset_parse_errors_name_the_line(ex39_data):
    lines = ex39_data.to_jsonl().splitlines()
    lines[3] = '{"p": [0, 0], "v": [1, 0]}'
    with pytest.raises(ValueError, match="line 4"):
        L.Dataset.from_jsonl("\n".join(lines))
    with pytest.raises(ValueError, match="line 1"):
        L.Dataset.from_jsonl("not json")
    with pytest.raises(ValueError, match="empty"):
        L.Dataset.from_jsonl("")


def test_noiseless_dataset_is_exact(ex39_data):
    np.testing.assert_allclose(ex39_data.p_out, ex39_data.p + [1.0, 0.0], atol=1e-13)
    np.testing.assert_allclose(ex39_data.v_out, -ex39_data.v, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(ex39_data.v, axis=1), 1.0)


def test_noisy_sphere_dataset_stays_on_sphere():
    data = L.make_dataset(sphere_model(n_steps=32), 16, seed=1, noise=0.05)
    np.testing.assert_allclose(np.linalg.norm(data.p_out, axis=1), 1.0)


def test_params_round_trip():
    model = translation_model(a=0.4)
    theta = L.get_params(model, {"field": None, "wang": None})
    np.testing.assert_allclose(theta, [1.0, 0.0, 0.4, 1.0])
    moved = L.set_params(model, {"field": None, "wang": None}, [0.5, -0.5, 2.0, 3.0])
    np.testing.assert_allclose(moved.connection.wang.coeffs, [[2.0, 3.0, 1.0]])
    np.testing.assert_allclose(moved.field.params(), [0.5, -0.5])
    with pytest.raises(ValueError):
        L.set_params(model, A_ONLY, [1.0, 2.0])


@settings(max_examples=30, deadline=None)
@given(st.floats(-6.0, 6.0))
def test_loss_matches_closed_form(a):
    data = L.make_dataset(translation_model(n_steps=8), 32, seed=2)
    model = translation_model(a=a, n_steps=8)
    assert L.loss(model, data) == pytest.approx(fibre_loss_oracle(a), abs=1e-10)


def test_gradient_matches_closed_form(ex39_data):
    for a in (-1.0, 0.3, 2.0):
        model = translation_model(a=a)
        g = L.gradient_check(model, ex39_data, A_ONLY)
        for est in g:
            assert est[0] == pytest.approx(-2.0 * np.sin(a), abs=1e-6)


def test_fit_recovers_pi(ex39_data):
    res = L.fit(translation_model(a=0.0), ex39_data, L.TrainConfig(mask=A_ONLY))
    a = res.params[-1][0]
    assert abs(a - np.pi) <= 1e-2
    assert res.trace[0] == pytest.approx(4.0, abs=1e-9)
    assert res.final_loss <= 1e-12
    assert res.jitters == 1 and not res.stalled
    # every iterate is a valid Wang map
    for th in res.params:
        model = L.set_params(translation_model(), A_ONLY, th)
        assert wang_check(model.quotient, model.connection.wang.coeffs)["pass"]


def test_symmetric_start_without_jitter_stalls(ex39_data):
    cfg = L.TrainConfig(mask=A_ONLY, jitter=0.0, iterations=200)
    res = L.fit(translation_model(a=0.0), ex39_data, cfg)
    # a = 0 is an exact maximum of 2 + 2 cos a, so the gradient vanishes
    assert res.stalled
    assert res.params[-1][0] == 0.0
    with pytest.raises(Stalled):
        L.fit(translation_model(a=0.0), ex39_data, L.TrainConfig(mask=A_ONLY, jitter=0.0, raise_on_stall=True))


def test_field_fit_recovers_translation():
    target = translation_model(field=ConstantField("R2", [0.7, -0.4]), n_steps=8)
    data = L.make_dataset(target, 32, seed=3)
    start = translation_model(field=ConstantField("R2", [0.0, 0.0]), n_steps=8)
    # the base term alone is convex in the coefficients: |f - f*|^2
    res = L.fit(start, data, L.TrainConfig(mask={"field": None}, lr=0.1, iterations=300, weights=(1.0, 0.0)))
    np.testing.assert_allclose(res.model.field.params(), [0.7, -0.4], atol=1e-4)


def test_divergence_is_reported():
    target = translation_model(field=ConstantField("R2", [0.7, -0.4]), n_steps=4)
    data = L.make_dataset(target, 8, seed=4)
    start = translation_model(field=ConstantField("R2", [0.0, 0.0]), n_steps=4)
    with pytest.raises(Diverged):
        L.fit(start, data, L.TrainConfig(mask={"field": None}, lr=10.0, iterations=50))


def test_too_many_parameters_rejected(ex39_data):
    from steerable_node.fields import NetField

    big = translation_model(field=NetField("R2", hidden=16))
    with pytest.raises(ValueError):
        L.fit(big, ex39_data, L.TrainConfig(mask={"field": None}))
