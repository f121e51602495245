import numpy as np
import pytest

from hopkinsloss.autodiff import DimensionError, Tape, make_rng
from hopkinsloss.models import (AutoencoderSpec, LinearProbeSpec, MLPClassifierSpec, bind,
                                forward, init_params, load_params, param_count, save_params)
from hopkinsloss.train import TrainConfig
from gradcheck import check


def run(spec, params, x, train=False, rng=None):
    tape = Tape()
    out, tap = forward(tape, bind(tape, params), tape.constant(x), spec, train, rng)
    return tape.value(out), (None if tap is None else tape.value(tap))


def test_classifier_param_count():
    for d, c in ((16, 3), (784, 10), (88, 8)):
        spec = MLPClassifierSpec(d, c)
        assert param_count(spec) == d * 128 + 128 + 128 * 128 + 128 + 128 * c + c
        assert sum(p.size for p in init_params(spec, make_rng(0))) == param_count(spec)


def test_init_bounds_and_zero_bias():
    params = init_params(MLPClassifierSpec(50, 3), make_rng(0))
    w0, b0 = params[0], params[1]
    assert np.abs(w0).max() <= np.sqrt(1 / 50)
    assert not b0.any()


def test_zero_weights_give_zero_outputs():
    spec = MLPClassifierSpec(5, 3)
    params = [np.zeros_like(p) for p in init_params(spec, make_rng(0))]
    logits, tap = run(spec, params, make_rng(1).normal(size=(7, 5)))
    assert not logits.any() and not tap.any() and tap.shape == (7, 128)
    ae = AutoencoderSpec(6, 2)
    params = [np.zeros_like(p) for p in init_params(ae, make_rng(0))]
    recon, code = run(ae, params, make_rng(1).normal(size=(7, 6)))
    assert recon.shape == (7, 6) and code.shape == (7, 2)
    assert not recon.any() and not code.any()


def test_eval_mode_is_deterministic_and_train_mode_is_not():
    spec = MLPClassifierSpec(5, 3)
    params = init_params(spec, make_rng(0))
    x = make_rng(1).normal(size=(10, 5))
    a, ta = run(spec, params, x)
    b, tb = run(spec, params, x)
    assert a.tobytes() == b.tobytes() and ta.tobytes() == tb.tobytes()
    c, _ = run(spec, params, x, True, make_rng(3))
    assert not np.array_equal(a, c)
    nodrop = MLPClassifierSpec(5, 3, dropout=0.0)
    d, td = run(nodrop, params, x, True, make_rng(3))
    np.testing.assert_array_equal(a, d)
    np.testing.assert_array_equal(ta, td)


def test_identity_autoencoder_reconstructs():
    spec = AutoencoderSpec(4, 4, hidden=())
    params = [np.eye(4), np.zeros((1, 4)), np.eye(4), np.zeros((1, 4))]
    x = make_rng(0).normal(size=(9, 4))
    recon, code = run(spec, params, x)
    np.testing.assert_array_equal(recon, x)
    np.testing.assert_array_equal(code, x)


def test_decoder_mirrors_encoder():
    spec = AutoencoderSpec(32, 2)
    assert spec.layer_dims == [(32, 128), (128, 128), (128, 2), (2, 128), (128, 128), (128, 32)]


def test_probe_and_dimension_errors():
    spec = LinearProbeSpec(3, 2)
    out, tap = run(spec, init_params(spec, make_rng(0)), np.ones((4, 3)))
    assert out.shape == (4, 2) and tap is None
    with pytest.raises(DimensionError):
        run(spec, init_params(spec, make_rng(0)), np.ones((4, 5)))
    with pytest.raises(ValueError):
        MLPClassifierSpec(3, 1)


def test_classifier_gradients():
    spec = MLPClassifierSpec(4, 3, hidden=(12, 12))
    params = init_params(spec, make_rng(0))
    x = make_rng(1).normal(size=(40, 4))
    y = np.arange(40) % 3
    rep = check(spec, params, x, y, TrainConfig(weight=1.0))
    assert rep.passed == rep.total, rep


def test_autoencoder_gradients():
    spec = AutoencoderSpec(8, 2, hidden=(12, 12))
    params = init_params(spec, make_rng(0))
    x = make_rng(1).normal(size=(40, 8))
    rep = check(spec, params, x, None, TrainConfig(weight=1.0))
    assert rep.passed == rep.total, rep


def test_params_round_trip(tmp_path):
    params = init_params(AutoencoderSpec(7, 3, hidden=(5,)), make_rng(2))
    save_params(tmp_path / "p.bin", params)
    back = load_params(tmp_path / "p.bin")
    assert len(back) == len(params)
    for a, b in zip(params, back):
        assert a.tobytes() == b.tobytes()
    raw = (tmp_path / "p.bin").read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"NOTPARAM" + raw[8:])
    with pytest.raises(ValueError, match="magic"):
        load_params(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="truncated"):
        load_params(tmp_path / "short.bin")
