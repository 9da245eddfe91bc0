import numpy as np
import pytest

from delta6.seqnet import autodiff as ad
from delta6.seqnet.autodiff import Tensor, gradcheck
from delta6.seqnet.models import (KINDS, ModelSpec, SpecMismatch, WeightSet, forward, init_weights,
                                  macs, param_count, weight_shapes)

REFERENCE_SIZES = {"transformer": (102.4, 2627.6), "lstm": (202.5, 4992.8), "gru": (152.1, 3744.8)}
TINY = {"transformer": ModelSpec("transformer", 8, 2, 2, 0.0, 4),
        "lstm": ModelSpec("lstm", 8, 1, 2, 0.0, 4),
        "gru": ModelSpec("gru", 8, 1, 2, 0.0, 4)}


@pytest.mark.parametrize("kind", KINDS)
def test_param_count_table(kind):
    spec = ModelSpec.default(kind)
    k_params, k_macs = REFERENCE_SIZES[kind]
    assert abs(param_count(spec) / 1e3 - k_params) <= 0.02 * k_params
    assert init_weights(spec).count == param_count(spec)
    # MAC counting rule reproduces the reference figures
    assert macs(spec) / 1e3 == pytest.approx(k_macs, abs=0.1)


@pytest.mark.parametrize("kind", KINDS)
def test_defaults(kind):
    s = ModelSpec.default(kind)
    want = {"transformer": (64, 4, 2, 0.2, 25), "lstm": (128, 1, 2, 0.3, 25),
            "gru": (128, 1, 2, 0.2, 25)}[kind]
    assert (s.d_model, s.n_heads, s.n_layers, s.p_drop, s.T_w) == want


@pytest.mark.parametrize("kind", KINDS)
def test_gradcheck_tiny(kind, rng):
    spec = TINY[kind]
    ws = init_weights(spec, seed=3)
    names = list(ws.tensors)
    X = rng.normal(size=(3, spec.T_w, spec.n_in))
    Y = rng.normal(size=(3, spec.n_out))

    def loss(ts):
        return ad.mse_loss(forward(spec, dict(zip(names, ts)), X), Y)
    ts = [Tensor(ws.tensors[k].copy()) for k in names]
    assert gradcheck(loss, ts) < 1e-6


@pytest.mark.parametrize("kind", KINDS)
def test_zero_weights_give_head_bias(kind, rng):
    spec = TINY[kind]
    ws = init_weights(spec)
    z = {k: np.zeros_like(v) for k, v in ws.tensors.items()}
    if kind == "transformer":
        for k in z:
            if k.endswith("_g"):
                z[k] = np.ones_like(z[k])
    z["head_b"] = np.arange(6.0)
    for X in (rng.normal(size=(4, 4, 6)), np.zeros((1, 4, 6))):
        out = forward(spec, z, X).data
        assert np.allclose(out, np.arange(6.0), atol=1e-15)


@pytest.mark.parametrize("kind", KINDS)
def test_inference_deterministic_and_dropout(kind, rng):
    spec = ModelSpec(kind, 8, 2, 2, 0.5, 4)
    ws = init_weights(spec, seed=1)
    X = rng.normal(size=(5, 4, 6))
    a = forward(spec, ws.tensors, X).data
    assert np.array_equal(a, forward(spec, ws.tensors, X).data)
    t1 = forward(spec, ws.tensors, X, training=True, rng=np.random.default_rng(0)).data
    assert not np.allclose(t1, a)
    with pytest.raises(ValueError):
        forward(spec, ws.tensors, X, training=True)


def test_causal_batch_independence(rng):
    # rows of a batch do not interact
    spec = TINY["transformer"]
    ws = init_weights(spec, seed=2)
    X = rng.normal(size=(4, 4, 6))
    full = forward(spec, ws.tensors, X).data
    assert np.allclose(forward(spec, ws.tensors, X[2:3]).data, full[2:3], atol=1e-14)


def test_shape_errors(rng):
    spec = TINY["gru"]
    ws = init_weights(spec)
    with pytest.raises(ad.ShapeError):
        forward(spec, ws.tensors, rng.normal(size=(2, 5, 6)))
    bad = dict(ws.tensors)
    del bad["head_b"]
    with pytest.raises(SpecMismatch):
        forward(spec, bad, rng.normal(size=(2, 4, 6)))
    with pytest.raises(SpecMismatch):
        WeightSet(spec, bad)
    with pytest.raises(SpecMismatch):
        WeightSet(spec, {**ws.tensors, "head_b": np.zeros(5)})


def test_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec("transformer", 10, 4)
    with pytest.raises(ValueError):
        ModelSpec("cnn", 8)
    with pytest.raises(ValueError):
        ModelSpec("gru", 8, p_drop=1.0)
    assert ModelSpec.from_dict(ModelSpec.default("lstm").to_dict()) == ModelSpec.default("lstm")


def test_init(rng):
    ws = init_weights(ModelSpec.default("lstm"), seed=4)
    b = ws.tensors["rnn0.b_ih"]
    d = 128
    # forget gate bias sits at +1 on top of the uniform(1/sqrt(fan_in)) draw, fan_in = 6
    assert np.all(np.abs(b[d:2 * d] - 1) <= 1 / np.sqrt(6))
    assert np.all(np.abs(b[:d]) <= 1 / np.sqrt(6))
    assert np.abs(ws.tensors["rnn1.w_hh"]).max() <= 1 / np.sqrt(d)
    again = init_weights(ModelSpec.default("lstm"), seed=4)
    assert all(np.array_equal(v, again.tensors[k]) for k, v in ws.tensors.items())
    assert list(weight_shapes(ws.spec)) == list(ws.tensors)
    assert init_weights(TINY["gru"], dtype=np.float32).tensors["head_w"].dtype == np.float32
