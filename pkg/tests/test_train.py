import json
from dataclasses import replace

import numpy as np
import pytest

from hopkinsloss import hopkins as hop
from hopkinsloss import train as tr
from hopkinsloss.autodiff import DimensionError, Tape, cross_entropy, make_rng, mse
from hopkinsloss.hopkins import HopkinsConfig, hopkins_statistic
from hopkinsloss.io import make_dataset
from hopkinsloss.models import (AutoencoderSpec, MLPClassifierSpec, bind, forward,
                                init_params)
from hopkinsloss.synth import SynthSpec, generate
from hopkinsloss.train import (AdamState, Dataset, RunRecord, Split, TrainConfig, adam_step,
                               composite_ae_loss, composite_classification_loss,
                               extract_features, fit, run_autoencoder, run_classifier,
                               train_probe)


@pytest.fixture(scope="module")
def blobs():
    x, y = generate(SynthSpec("clusters", 3000, 16, seed=0, num_clusters=3, spread=0.05,
                              labelled=True))
    return make_dataset(x, y)


def test_adam_zero_gradient_keeps_params():
    p = [np.array([[1.5, -2.0]])]
    new, st = adam_step(p, [np.zeros((1, 2))], AdamState.zeros(p), 0.1)
    np.testing.assert_array_equal(new[0], p[0])
    assert st.t == 1


def test_adam_first_step_is_lr_sized():
    p = [np.array([[0.0]])]
    new, _ = adam_step(p, [np.array([[1.0]])], AdamState.zeros(p), 0.001)
    assert new[0][0, 0] == pytest.approx(-0.001, rel=1e-6)


def test_adam_matches_hand_rolled_oracle():
    # f(p) = 0.5 * a * p^2, gradient a * p
    a, lr = 3.0, 0.05
    p = [np.array([[2.0, -1.0]])]
    st = AdamState.zeros(p)
    q = [2.0, -1.0]
    m = [0.0, 0.0]
    v = [0.0, 0.0]
    for t in range(1, 6):
        p, st = adam_step(p, [a * p[0]], st, lr)
        for j in range(2):
            g = a * q[j]
            m[j] = 0.9 * m[j] + 0.1 * g
            v[j] = 0.999 * v[j] + 0.001 * g * g
            mh = m[j] / (1 - 0.9 ** t)
            vh = v[j] / (1 - 0.999 ** t)
            q[j] -= lr * mh / (vh ** 0.5 + 1e-8)
    assert np.abs(p[0][0] - np.array(q)).max() < 1e-12
    assert st.t == 5


def test_adam_shape_mismatch():
    with pytest.raises(DimensionError):
        adam_step([np.zeros((2, 2))], [np.zeros((1, 2))], AdamState.zeros([np.zeros((2, 2))]), 0.1)


def _cls_setup(n=40):
    spec = MLPClassifierSpec(4, 3, hidden=(16, 16), dropout=0.0)
    params = init_params(spec, make_rng(0))
    x = make_rng(1).normal(size=(n, 4))
    y = np.arange(n) % 3
    tape = Tape()
    logits, tap = forward(tape, bind(tape, params), tape.constant(x), spec)
    return tape, logits, tap, y


def test_classification_composite_extremes():
    tape, logits, tap, y = _cls_setup()
    ce = cross_entropy(tape.value(logits), y)
    before = hop.invocation_count()
    loss = composite_classification_loss(tape, logits, y, tap, TrainConfig(weight=1.0), make_rng(0))
    assert tape.value(loss)[0, 0] == ce
    assert hop.invocation_count() == before
    assert not any(n.op == "hopkins" for n in tape.nodes)

    cfg = TrainConfig(weight=0.0, hopkins=HopkinsConfig(target=0.3))
    loss = composite_classification_loss(tape, logits, y, tap, cfg, make_rng(4))
    h = hopkins_statistic(tape.value(tap), cfg.hopkins, make_rng(4)).H
    assert tape.value(loss)[0, 0] == abs(h - 0.3)


def test_classification_composite_two_pass_oracle():
    tape, logits, tap, y = _cls_setup()
    cfg = TrainConfig(weight=0.75, hopkins=HopkinsConfig(target=0.5))
    loss = composite_classification_loss(tape, logits, y, tap, cfg, make_rng(6))
    ce = cross_entropy(tape.value(logits), y)
    lh = abs(hopkins_statistic(tape.value(tap), cfg.hopkins, make_rng(6)).H - 0.5)
    assert abs(tape.value(loss)[0, 0] - (0.75 * ce + 0.25 * lh)) < 1e-12


def test_short_batch_skips_hopkins():
    tape, logits, tap, y = _cls_setup(n=19)
    before = hop.invocation_count()
    cfg = TrainConfig(weight=0.75)
    loss = composite_classification_loss(tape, logits, y, tap, cfg, make_rng(0))
    assert hop.invocation_count() == before
    assert tape.value(loss)[0, 0] == pytest.approx(0.75 * cross_entropy(tape.value(logits), y))


def _ae_setup():
    spec = AutoencoderSpec(8, 2, hidden=(16,), dropout=0.0)
    params = init_params(spec, make_rng(0))
    xv = make_rng(1).normal(size=(40, 8))
    tape = Tape()
    x = tape.constant(xv)
    recon, code = forward(tape, bind(tape, params), x, spec)
    return tape, x, recon, code


def test_ae_composite():
    tape, x, recon, code = _ae_setup()
    rec = mse(tape.value(recon), tape.value(x))
    loss = composite_ae_loss(tape, recon, x, code, TrainConfig(weight=1.0), make_rng(0))
    assert tape.value(loss)[0, 0] == rec
    cfg = TrainConfig(weight=0.75, hopkins=HopkinsConfig(target=0.5))
    loss = composite_ae_loss(tape, recon, x, code, cfg, make_rng(3))
    lh = abs(hopkins_statistic(tape.value(code), cfg.hopkins, make_rng(3)).H - 0.5)
    assert abs(tape.value(loss)[0, 0] - (0.75 * rec + 0.25 * lh)) < 1e-12
    # perfect reconstruction
    loss = composite_ae_loss(tape, x, x, code, TrainConfig(weight=1.0), make_rng(0))
    assert tape.value(loss)[0, 0] == 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(weight=1.2)
    with pytest.raises(ValueError):
        TrainConfig(plateau_patience=0)
    assert TrainConfig(seed=1).config_hash() == TrainConfig(seed=1).config_hash()
    assert TrainConfig(seed=1).config_hash() != TrainConfig(seed=2).config_hash()


def test_fit_single_epoch(blobs):
    spec = MLPClassifierSpec(16, 3)
    params, rec = fit(spec, blobs.train, blobs.val, TrainConfig(max_epochs=1))
    assert rec.epochs == 1 and rec.best_epoch == 1 and len(rec.epoch_ms) == 1
    with pytest.raises(ValueError):
        fit(spec, blobs.train, Split(np.empty((0, 16)), np.empty(0, int)), TrainConfig())


def _scripted_fit(monkeypatch, blobs, losses, **kw):
    seq = iter(losses)
    monkeypatch.setattr(tr, "evaluation_loss", lambda *a: next(seq))
    logs = []
    small = Split(blobs.train.x[:50], blobs.train.y[:50])
    cfg = TrainConfig(batch_size=64, **kw)
    _, rec = fit(MLPClassifierSpec(16, 3, hidden=(4, 4)), small, blobs.val, cfg, logs.append)
    return rec, logs


def test_improving_run_keeps_lr(monkeypatch, blobs):
    rec, logs = _scripted_fit(monkeypatch, blobs, [5, 4, 3, 2, 1], max_epochs=5)
    assert [l["lr"] for l in logs] == [1e-4] * 5
    assert rec.epochs == 5 and rec.best_epoch == 5 and rec.best_val_loss == 1


def test_plateau_halves_lr_and_early_stops(monkeypatch, blobs):
    rec, logs = _scripted_fit(monkeypatch, blobs, [1.0] * 200)
    lrs = [l["lr"] for l in logs]
    assert rec.epochs == 101 and rec.best_epoch == 1
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))
    # epochs 2..31 are the first 30 non-improving epochs
    assert lrs[29] == 1e-4 and lrs[30] == 5e-5
    assert lrs[60] == 2.5e-5 and lrs[90] == 1.25e-5
    changes = [b / a for a, b in zip(lrs, lrs[1:]) if b != a]
    assert changes == [0.5, 0.5, 0.5]


def test_improvement_resets_counters(monkeypatch, blobs):
    losses = [1.0] * 25 + [0.5] + [0.5] * 200
    rec, logs = _scripted_fit(monkeypatch, blobs, losses)
    assert rec.best_epoch == 26 and rec.epochs == 126
    assert logs[54]["lr"] == 1e-4 and logs[55]["lr"] == 5e-5


def test_baseline_never_touches_hopkins(blobs):
    before = hop.invocation_count()
    _, rec = fit(MLPClassifierSpec(16, 3), blobs.train, blobs.val, TrainConfig(max_epochs=2))
    assert hop.invocation_count() == before
    fit(MLPClassifierSpec(16, 3), blobs.train, blobs.val, TrainConfig(max_epochs=1, weight=0.75))
    assert hop.invocation_count() > before


def test_blob_accuracy_and_separability_oracle(blobs):
    # nearest-centroid classifier confirms the classes are linearly separable
    cents = np.stack([blobs.train.x[blobs.train.y == c].mean(axis=0) for c in range(3)])
    d = ((blobs.test.x[:, None, :] - cents[None]) ** 2).sum(-1)
    assert np.mean(d.argmin(1) == blobs.test.y) >= 0.95
    _, rec = run_classifier(blobs, TrainConfig(max_epochs=40, seed=0))
    assert rec.accuracy >= 0.95
    assert 0.0 <= rec.hopkins <= 1.0


def test_returned_snapshot_has_lowest_val_loss(blobs):
    logs = []
    spec = MLPClassifierSpec(16, 3)
    params, rec = fit(spec, blobs.train, blobs.val, TrainConfig(max_epochs=15, weight=0.75),
                      logs.append)
    assert rec.best_val_loss <= min(l["val_loss"] for l in logs)
    again = tr.evaluation_loss(spec, params, blobs.val, TrainConfig(weight=0.75))
    assert again == pytest.approx(rec.best_val_loss, abs=1e-12)


def test_run_is_deterministic(blobs):
    cfg = TrainConfig(max_epochs=3, weight=0.75, seed=4)
    _, a = run_classifier(blobs, cfg)
    _, b = run_classifier(blobs, cfg)
    a.epoch_ms = b.epoch_ms = []
    assert a.to_json() == b.to_json()


def test_record_json_round_trip():
    r = RunRecord("classify", 3, 0.75, 0.5, None, 0.9, 0.6, 10, 7, 0.25, "abc", [1.0, 2.0])
    assert RunRecord.from_json(r.to_json()) == r
    assert r.condition == "H_T=0.5"
    assert json.loads(r.to_json())["seed"] == 3


def _features(x, y):
    n = len(y)
    a, b = int(0.6 * n), int(0.8 * n)
    return Dataset(Split(x[:a], y[:a]), Split(x[a:b], y[a:b]), Split(x[b:], y[b:]), 2)


def test_probe_on_separable_feature():
    rng = make_rng(0)
    y = rng.integers(0, 2, 600)
    x = (2.0 * y - 1.0)[:, None] + 0.05 * rng.normal(size=(600, 1))
    _, rec = train_probe(_features(x, y), TrainConfig(lr=0.05, max_epochs=60, batch_size=128))
    assert rec.accuracy >= 0.99


def test_probe_on_constant_feature():
    y = (make_rng(1).random(600) < 0.7).astype(int)
    feats = _features(np.ones((600, 1)), y)
    _, rec = train_probe(feats, TrainConfig(lr=0.05, max_epochs=60, batch_size=128))
    majority = max(np.mean(feats.test.y), 1 - np.mean(feats.test.y))
    assert rec.accuracy == pytest.approx(majority, abs=0.05)


def test_extract_features_and_probe_determinism(blobs):
    spec = AutoencoderSpec(16, 2)
    cfg = TrainConfig(lr=4e-4, max_epochs=3, seed=1)
    params, _ = fit(spec, blobs.train, blobs.val, cfg)
    f1 = extract_features(params, spec, blobs.test.x)
    f2 = extract_features(params, spec, blobs.test.x)
    assert f1.shape == (len(blobs.test), 2) and f1.tobytes() == f2.tobytes()
    tape = Tape()
    _, code = forward(tape, bind(tape, params), tape.constant(blobs.test.x[:40]), spec)
    assert np.abs(tape.value(code) - f1[:40]).max() <= 1e-15

    _, _, r1 = run_autoencoder(blobs, 2, cfg, replace(cfg, max_epochs=5))
    _, _, r2 = run_autoencoder(blobs, 2, cfg, replace(cfg, max_epochs=5))
    assert abs(r1.accuracy - r2.accuracy) < 1e-9 and r1.hopkins == r2.hopkins
    assert r1.bottleneck == 2 and r1.condition == "B=2 baseline"
