import numpy as np
import pytest
import torch

from diagforge import BinaryMask, ImageGrid, LabeledSample
from diagforge.classifier import (
    SCORE_EPS,
    DefectClassifier,
    Prediction,
    TrainConfig,
    bce_loss,
    init_backbone,
    predict,
    train,
)
from diagforge.exceptions import ConfigurationError, ValidationError


def test_bce_hand_values():
    # perfect confidence at the eps clamp: -log(1-1e-7) per term
    assert bce_loss([1.0], [0.5]) == pytest.approx(np.log(2.0), abs=1e-12)
    y = [1.0, 0.0]
    yhat = [0.8, 0.4]
    expected = -(np.log(0.8) + np.log(0.6)) / 2.0
    assert bce_loss(y, yhat) == pytest.approx(expected, abs=1e-12)


def test_bce_clamps_and_stays_finite(caplog):
    with caplog.at_level("WARNING"):
        v = bce_loss([1.0, 0.0], [1.0, 0.0])
    assert np.isfinite(v)
    assert v == pytest.approx(-np.log(1.0 - SCORE_EPS), rel=1e-6)
    assert any("clamped" in r.message for r in caplog.records)


def test_bce_shape_mismatch():
    with pytest.raises(ValidationError):
        bce_loss([1.0, 0.0], [0.5])


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(epochs=0)
    with pytest.raises(ValidationError):
        TrainConfig(learning_rate=-1.0)


def test_prediction_open_interval():
    Prediction(score=0.5)
    for bad in (0.0, 1.0, -0.1, 1.1):
        with pytest.raises(ValidationError):
            Prediction(score=bad)


def _grad_check(model, xb, yb, n_slots=60, h=1e-5, seed=0):
    """Central finite differences vs autograd on a random parameter slice."""
    scores = model(xb).clamp(SCORE_EPS, 1.0 - SCORE_EPS)
    loss = -(yb * torch.log(scores) + (1.0 - yb) * torch.log(1.0 - scores)).mean()
    model.zero_grad()
    loss.backward()
    params = [p for p in model.parameters() if p.requires_grad]
    flat_g = torch.cat([p.grad.flatten() for p in params])
    total = int(flat_g.numel())
    rng = np.random.default_rng(seed)
    idxs = rng.choice(total, size=min(n_slots, total), replace=False)

    def loss_value():
        with torch.no_grad():
            s = model(xb).clamp(SCORE_EPS, 1.0 - SCORE_EPS)
            return float((-(yb * torch.log(s) + (1.0 - yb) * torch.log(1.0 - s))).mean())

    worst = 0.0
    offsets = np.cumsum([0] + [int(p.numel()) for p in params])
    for flat_idx in idxs:
        pi = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        local = int(flat_idx - offsets[pi])
        p = params[pi]
        view = p.data.flatten()
        orig = float(view[local])
        view[local] = orig + h
        up = loss_value()
        view[local] = orig - h
        down = loss_value()
        view[local] = orig
        fd = (up - down) / (2.0 * h)
        auto = float(flat_g[flat_idx])
        rel = abs(fd - auto) / max(abs(fd) + abs(auto), 1e-10)
        worst = max(worst, rel)
    return worst


def test_gradient_matches_finite_differences_float64():
    torch.set_num_threads(1)
    model = init_backbone(width=4, seed=3, dtype="float64")
    # nonzero head so the loss actually depends on every stage
    with torch.no_grad():
        model.head.weight.normal_(0, 0.3, generator=torch.Generator().manual_seed(5))
        model.head.bias.normal_(0, 0.1, generator=torch.Generator().manual_seed(6))
    g = torch.Generator().manual_seed(7)
    xb = torch.rand(4, 1, 8, 8, dtype=torch.float64, generator=g)
    yb = torch.tensor([1.0, 0.0, 1.0, 0.0], dtype=torch.float64)
    worst = _grad_check(model, xb, yb)
    assert worst < 1e-4


def _separable_set(n_per_class=8, size=16, seed=0):
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for _ in range(n_per_class):
        xs.append(ImageGrid(np.clip(rng.normal(0.2, 0.03, (size, size, 1)), 0, 1)))
        ys.append(0)
        xs.append(ImageGrid(np.clip(rng.normal(0.8, 0.03, (size, size, 1)), 0, 1)))
        ys.append(1)
    return xs, ys


def test_fit_learns_separable_data():
    xs, ys = _separable_set()
    clf = DefectClassifier(width=4, epochs=30, learning_rate=3e-3, seed=0)
    clf.fit(xs, ys)
    assert clf.history_[-1] < clf.history_[0]
    assert np.array_equal(clf.predict(xs), np.asarray(ys))
    scores = clf.predict_scores(xs)
    assert np.all((scores > 0) & (scores < 1))


def test_fit_is_seed_deterministic():
    xs, ys = _separable_set(n_per_class=4)
    a = DefectClassifier(width=4, epochs=2, seed=9).fit(xs, ys)
    b = DefectClassifier(width=4, epochs=2, seed=9).fit(xs, ys)
    sa, sb = a.model_.state_dict(), b.model_.state_dict()
    assert all(torch.equal(sa[k], sb[k]) for k in sa)
    assert a.history_ == b.history_


def test_fit_rejects_single_class_and_bad_labels():
    xs, _ = _separable_set(n_per_class=4)
    with pytest.raises(ConfigurationError):
        DefectClassifier(width=4, epochs=1).fit(xs, [0] * len(xs))
    with pytest.raises(ConfigurationError):
        DefectClassifier(width=4, epochs=1).fit(xs, [0, 2] * (len(xs) // 2))
    with pytest.raises(ValidationError):
        DefectClassifier(width=4, epochs=1).fit(xs, [0, 1])


def test_predict_resolution_guard():
    xs, ys = _separable_set(n_per_class=4)
    clf = DefectClassifier(width=4, epochs=1).fit(xs, ys)
    with pytest.raises(ValidationError):
        clf.predict_scores([ImageGrid(np.zeros((8, 8, 1)))])


def test_predict_proba_sums_to_one():
    xs, ys = _separable_set(n_per_class=4)
    clf = DefectClassifier(width=4, epochs=1).fit(xs, ys)
    proba = clf.predict_proba(xs)
    assert proba.shape == (len(xs), 2)
    assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-12)


def test_checkpoint_round_trip(tmp_path):
    xs, ys = _separable_set(n_per_class=4)
    clf = DefectClassifier(width=4, epochs=2, seed=1).fit(xs, ys)
    path = tmp_path / "clf.npz"
    clf.save(path)
    loaded = DefectClassifier.load(path)
    assert loaded.get_params() == clf.get_params()
    assert np.array_equal(loaded.predict_scores(xs), clf.predict_scores(xs))


def _fake_generated(positives, n):
    out = []
    for i, p in enumerate(positives[:n]):
        out.append(
            LabeledSample(
                image=p.image, label=1, origin="generated",
                mask=p.mask, sample_id=f"gen-test-{i:05d}",
            )
        )
    return out


def test_train_which_contract(tiny_bundle):
    with pytest.raises(ConfigurationError):
        train(tiny_bundle, "everything")
    # zero-shot with no augmented positives has a single class
    with pytest.raises(ConfigurationError):
        train(tiny_bundle, "neg+aug", TrainConfig(epochs=1), width=4)
    bundle = tiny_bundle.with_augmented(_fake_generated(tiny_bundle.positives_train, 4))
    clf = train(bundle, "neg+aug", TrainConfig(epochs=1), width=4)
    preds = predict(clf, bundle.test_samples())
    assert len(preds) == len(bundle.test_samples())
    assert all(isinstance(p, Prediction) for p in preds)
    assert preds[0].sample_id == bundle.test_samples()[0].sample_id


def test_predict_accepts_raw_images(tiny_bundle):
    bundle = tiny_bundle.with_augmented(_fake_generated(tiny_bundle.positives_train, 4))
    clf = train(bundle, "neg+pos+aug", TrainConfig(epochs=1), width=4)
    preds = predict(clf, [s.image for s in bundle.test_samples()[:3]])
    assert [p.sample_id for p in preds] == ["sample-0", "sample-1", "sample-2"]
