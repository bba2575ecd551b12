# Copyright (c) 2026 The X-Prompt Desk Authors
# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest

import xprompt

SMALL = {"num_sequences": 2, "frames": 3, "height": 32, "width": 32, "min_size": 8.0, "max_size": 14.0,
         "max_objects": 1, "corruption": "low-contrast", "severity": 0.9, "seed": 3}


def test_synth_shapes_and_determinism():
    a = xprompt.synth(SMALL)
    b = xprompt.synth(SMALL)
    assert len(a) == 2
    s = a[0]
    assert s["frames"].shape == (3, 32, 32, 3)
    assert s["xmaps"].shape == (3, 32, 32, 1)
    assert s["masks"].shape == (3, 32, 32)
    assert s["masks"].dtype == np.uint8
    assert np.array_equal(s["frames"], b[0]["frames"])
    assert 0.0 <= s["frames"].min() and s["frames"].max() <= 1.0


def test_metrics_against_numpy():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 3, size=(16, 16)).astype(np.uint8)
    b = rng.integers(0, 3, size=(16, 16)).astype(np.uint8)
    inter = np.logical_and(a == 1, b == 1).sum()
    union = np.logical_or(a == 1, b == 1).sum()
    assert xprompt.metric_j(a, b, 1) == inter / union
    assert xprompt.metric_f(a, a, 1, 0.0) == 1.0
    assert xprompt.metric_jf(81.7, 86.7) == pytest.approx(84.2, abs=1e-12)
    assert xprompt.default_boundary_tol(480, 854) == 8.0


def test_boundary_map_of_square():
    m = np.zeros((6, 6), np.uint8)
    m[1:5, 1:5] = 1
    b = xprompt.boundary_map(m, 1)
    assert b.sum() == 12
    assert b[2, 2] == 0 and b[1, 1] == 1


def test_losses():
    rng = np.random.default_rng(1)
    gt = rng.integers(0, 3, size=(5, 6)).astype(np.uint8)
    logits = rng.normal(size=(5, 6, 3))
    z = logits - logits.max(axis=2, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=2, keepdims=True))
    ce = -np.take_along_axis(logp, gt[..., None].astype(np.int64), axis=2).squeeze(2)
    assert xprompt.cross_entropy(logits, gt) == pytest.approx(ce.mean(), abs=1e-12)
    assert xprompt.bootstrapped_ce_loss(logits, gt, 1.0) == pytest.approx(ce.mean(), abs=1e-12)
    k = int(np.ceil(0.3 * ce.size))
    assert xprompt.bootstrapped_ce_loss(logits, gt, 0.3) == pytest.approx(np.sort(ce.ravel())[::-1][:k].mean(), abs=1e-12)
    onehot = np.eye(3)[gt]
    assert xprompt.soft_jaccard_loss(onehot, gt) == 0.0


def test_config_round_trip_and_errors():
    cfg = xprompt.default_config()
    assert xprompt.validate_config(cfg) == cfg
    assert len(xprompt.config_hash(cfg)) == 16
    with pytest.raises(xprompt.ConfigError):
        xprompt.validate_config({"model": {"embed_dims": 8}})
    with pytest.raises(ValueError):
        xprompt.parse_variant("mvp+magic")
    assert xprompt.parse_variant("mvp+maes(K=3)") == "mvp+maes(K=3)"


def test_model_train_adapt_save_load(tmp_path):
    data = xprompt.synth(SMALL)
    model = xprompt.Model({"embed_dim": 32, "layers": 1}, seed=1)
    losses = model.pretrain(data, {"pretrain_steps": 5}, seed=1)
    assert len(losses) == 5 and all(np.isfinite(losses))
    before = {n: model.parameter(n).copy() for n in model.parameter_names()}
    model.adapt(data, "mvp+maes", {"adapt_steps": 5}, seed=2)
    assert model.adapting and model.variant == "mvp+maes"
    rep = model.report()
    assert rep["trainable_foundation"] == 0 and rep["experts"] > 0
    for name, value in before.items():
        if model.is_frozen(name):
            assert np.array_equal(model.parameter(name), value)
    masks = model.segment(data[0])
    assert masks.shape == (3, 32, 32)
    assert np.array_equal(masks[0], data[0]["masks"][0])
    model.save(str(tmp_path / "ckpt"))
    back = xprompt.Model.load(str(tmp_path / "ckpt"))
    assert np.array_equal(back.segment(data[0]), masks)
    scores = back.evaluate(data)
    assert 0.0 <= scores["JF"] <= 1.0 and len(scores["per_sequence"]) == 2
    with pytest.raises(xprompt.IoError):
        xprompt.Model.load(str(tmp_path / "missing"))


def test_cli_exit_codes(tmp_path):
    code, _, err = xprompt.run_cli(["frobnicate"])
    assert code == 1 and "synth" in err
    code, _, _ = xprompt.run_cli(["eval", "--checkpoint", str(tmp_path / "none"), "--out", str(tmp_path / "e")])
    assert code == 2


def test_op_gradchecks_small():
    results = xprompt.op_gradchecks(2, 5)
    assert results
    assert max(err for _, err, _ in results) < 1e-4
