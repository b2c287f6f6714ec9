import math

import numpy as np
import pytest

from sdmvsum import synth
from sdmvsum.model import ModelConfig, init_params
from sdmvsum.numerics import Graph
from sdmvsum.training import (AdamState, DivergenceError, TrainConfig, TrainingError, adam_step,
                              bce_loss, mse_loss, sample_grads, train)

TINY = dict(dim=8, heads=2, scorer_ffn_dim=16, dropout_rate=0.0)


def loss_value(fn, pred, target):
    g = Graph(np.float64)
    return float(fn(g.constant(np.reshape(pred, (-1, 1))), target).value[0, 0])


def loss_grad(fn, pred, target):
    g = Graph(np.float64)
    p = g.param("p", np.reshape(np.asarray(pred, dtype=float), (-1, 1)))
    return g.backward(fn(p, target))["p"].ravel()


def test_bce_examples():
    assert loss_value(bce_loss, [0.5, 0.5], [1, 0]) == pytest.approx(math.log(2), abs=1e-12)
    assert loss_value(bce_loss, [0.5, 0.5], [1, 0]) == pytest.approx(0.69315, abs=1e-5)
    prev = math.inf
    for eps in (1e-1, 1e-3, 1e-5, 1e-9):
        v = loss_value(bce_loss, [1 - eps, eps], [1, 0])
        assert v <= prev
        prev = v
    assert prev == pytest.approx(-math.log(1 - 1e-7), rel=1e-6)
    with pytest.raises(ValueError):
        loss_value(bce_loss, [0.5], [1, 0])


def test_bce_gradient_zero_at_match():
    # at p = t (interior) the BCE derivative (p - t) / (p (1 - p)) vanishes
    assert np.allclose(loss_grad(bce_loss, [0.3, 0.7], [0.3, 0.7]), 0.0, atol=1e-12)


def test_mse_examples(rng):
    assert loss_value(mse_loss, [0.2, 0.4], [0.2, 0.4]) == 0.0
    assert loss_value(mse_loss, [0, 1], [1, 0]) == 1.0
    p, t = rng.random(13), rng.random(13)
    total = 0.0
    for a, b in zip(p, t):
        total += (a - b) ** 2
    assert abs(loss_value(mse_loss, p, t) - total / 13) <= 1e-9


def test_adam_examples(rng):
    params = {"w": np.array([[1.0]])}
    adam_step(params, {"w": np.array([[1.0]])}, AdamState.zeros_like(params), lr=0.1)
    # bias-corrected first step: m_hat = 1, v_hat = 1, update = 0.1 / (1 + 1e-8)
    assert params["w"][0, 0] == pytest.approx(1 - 0.1 / (1 + 1e-8), abs=1e-12)
    assert params["w"][0, 0] == pytest.approx(0.9, abs=1e-6)

    params = {"w": rng.standard_normal((3, 2))}
    before = params["w"].copy()
    adam_step(params, {"w": np.zeros((3, 2))}, AdamState.zeros_like(params), lr=0.1, weight_decay=0)
    assert np.array_equal(params["w"], before)


def test_adam_coupled_l2():
    # zero loss gradient: the update comes from the weight-decay term alone, sign(theta)
    params = {"w": np.array([[2.0, -3.0]])}
    adam_step(params, {"w": np.zeros((1, 2))}, AdamState.zeros_like(params), lr=0.01, weight_decay=0.5)
    assert np.allclose(params["w"], [[1.99, -2.99]], atol=1e-8)


def test_adam_stable_over_many_steps(rng):
    params = {"w": rng.standard_normal((4, 4))}
    state = AdamState.zeros_like(params)
    for _ in range(10_000):
        adam_step(params, {"w": rng.standard_normal((4, 4)) * 10}, state, lr=1e-3, weight_decay=1e-4)
    assert all(np.all(np.isfinite(a)) for a in (params["w"], state.m["w"], state.v["w"]))
    assert state.step == 10_000


def corpus(n=6, seed=0, **kw):
    return synth.build(synth.SynthSpec(n_videos=n, frames_range=(12, 18), dim=8, seed=seed, **kw))


def test_zero_lr_keeps_validation_constant():
    c = corpus(5, splits=(1, 2, 2))
    res = train(c, TrainConfig(epochs=4, lr=0.0, batch_size=1), ModelConfig(**TINY))
    assert len(res.history) == 4
    assert len({h["val_f"] for h in res.history}) == 1
    assert res.best_epoch == 1
    assert [h["epoch"] for h in res.history] == [1, 2, 3, 4]


def test_best_epoch_is_argmax_with_earliest_tie():
    c = corpus(8)
    res = train(c, TrainConfig(epochs=6, lr=3e-3, batch_size=2), ModelConfig(**TINY))
    fs = [h["val_f"] for h in res.history]
    assert res.best_epoch == fs.index(max(fs)) + 1
    assert res.best_metric == max(fs)


def test_batch_update_uses_mean_gradient():
    c = corpus(3, splits=(2, 1, 0))
    cfg = ModelConfig(**TINY)
    init = init_params(cfg, seed=4)
    res = train(c, TrainConfig(epochs=1, lr=1e-3, batch_size=2, weight_decay=0.0), cfg, init=init)

    grads = []
    for video, script, gt in c.samples("train"):
        _, g = sample_grads(init, video.frames, script.sentences, c.expanded_transcripts(video.video_id),
                            gt.summary_mask, training=False, dtype=np.float64)
        grads.append(g)
    mean = {k: (grads[0][k] + grads[1][k]) / 2 for k in grads[0]}
    manual = {k: v.astype(np.float64) for k, v in init.tensors.items()}
    adam_step(manual, mean, AdamState.zeros_like(manual), lr=1e-3)
    for k in manual:
        assert np.allclose(res.final.tensors[k], manual[k], atol=1e-6), k


def test_single_step_decreases_sample_loss():
    c = corpus(1, splits=(1, 0, 0))
    (video, script, gt), = c.samples("train")
    tr = c.expanded_transcripts(video.video_id)
    for seed in range(20):
        p = init_params(ModelConfig(**TINY), seed)
        before, grads = sample_grads(p, video.frames, script.sentences, tr, gt.summary_mask,
                                     training=False, dtype=np.float64)
        adam_step(p.tensors, grads, AdamState.zeros_like(p.tensors), lr=1e-4)
        after, _ = sample_grads(p, video.frames, script.sentences, tr, gt.summary_mask,
                                training=False, dtype=np.float64)
        assert after < before, seed


def test_training_is_deterministic():
    c = corpus(6)
    cfg = ModelConfig(**{**TINY, "dropout_rate": 0.5})
    a = train(c, TrainConfig(epochs=3, lr=1e-3, seed=11), cfg)
    b = train(c, TrainConfig(epochs=3, lr=1e-3, seed=11), cfg)
    assert a.history_jsonl() == b.history_jsonl()
    assert all(a.best.tensors[k].tobytes() == b.best.tensors[k].tobytes() for k in a.best.tensors)


def test_variants_train_and_differ():
    c = corpus(5)
    finals = {}
    for name in ("full", "no-transcript", "no-scaling"):
        res = train(c, TrainConfig(epochs=1, lr=1e-3), ModelConfig.variant(name, **TINY))
        finals[name] = res.final.tensors
    assert set(finals["no-transcript"]) < set(finals["full"])
    assert set(finals["no-scaling"]) == set(finals["full"])
    assert any(not np.array_equal(finals["full"][k], finals["no-scaling"][k]) for k in finals["full"])


def test_mse_training_uses_importance():
    c = corpus(5)
    res = train(c, TrainConfig(loss="mse", epochs=1, protocol="single-gt", lr=1e-3), ModelConfig(**TINY))
    assert res.history[0]["val_tau"] is not None
    for gt in c.ground_truths.values():
        gt.frame_importance = None
    with pytest.raises(TrainingError, match="importance"):
        train(c, TrainConfig(loss="mse", epochs=1, protocol="single-gt"), ModelConfig(**TINY))


def test_errors():
    c = corpus(5, splits=(5, 0, 0))
    with pytest.raises(TrainingError, match="val"):
        train(c, TrainConfig(epochs=1), ModelConfig(**TINY))
    with pytest.raises(TrainingError, match="dim"):
        train(corpus(5), TrainConfig(epochs=1), ModelConfig(dim=16, heads=2))
    with pytest.raises(ValueError):
        TrainConfig(loss="hinge")
    bad = corpus(5)
    for v in bad.videos.values():
        v.frames[:] = np.nan
    with pytest.raises(DivergenceError) as info:
        train(bad, TrainConfig(epochs=2), ModelConfig(**TINY))
    assert info.value.epoch == 1
