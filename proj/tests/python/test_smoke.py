# Copyright 2026 The omnihybrid Authors
# SPDX-License-Identifier: Apache-2.0

import math

import numpy as np
import pytest

import omnihybrid as oh


def test_version():
    assert oh.__version__ == "0.1.0"


def test_params_layout_and_roundtrip(tmp_path):
    cfg = oh.ModelConfig()
    p = oh.PolicyParams.initialize(cfg)
    names = [name for name, _ in p.layers()]
    assert names == ["embedding", "hidden", "output"]
    v = p.values()
    assert v.shape == (len(p),)
    path = str(tmp_path / "p.ckpt")
    oh.save_checkpoint(path, p)
    assert oh.load_checkpoint(path) == p
    assert oh.git_blob_sha1(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_sampling_schema_and_logprobs():
    p = oh.PolicyParams.initialize(oh.ModelConfig())
    group = oh.sample_group(p, [0, 1], 4, 0.9, 0.9, 3)
    assert len(group) == 4
    for seq in group:
        seq.validate(p.config.vocab)
        text, speech = oh.logprob_partitioned(p, seq)
        assert math.isclose(text + speech, sum(oh.token_logprobs(p, seq)), rel_tol=1e-12)
    assert oh.sample_group(p, [0, 1], 4, 0.9, 0.9, 3) == group


def test_sampling_distribution():
    d = oh.sampling_distribution(list(np.log([0.6, 0.3, 0.1])), top_p=0.5)
    assert d == pytest.approx([1.0, 0.0, 0.0])


def test_sft_grad_matches_finite_difference():
    p = oh.PolicyParams.initialize(oh.ModelConfig())
    seq = oh.sample_group(p, [2, 3], 1, 1.0, 1.0, 5)[0]
    g = oh.sft_grad(p, seq)
    v = p.values()
    rng = np.random.default_rng(0)
    for i in rng.choice(len(v), size=10, replace=False):
        up, down = v.copy(), v.copy()
        up[i] += 1e-5
        down[i] -= 1e-5
        p.set_values(up)
        fp = oh.sft_loss(p, seq)
        p.set_values(down)
        fm = oh.sft_loss(p, seq)
        assert (fp - fm) / 2e-5 == pytest.approx(g[i], rel=1e-4, abs=1e-8)


def test_gate_and_stats():
    assert oh.normalized_variance([1, 5, 1, 5]) == 1.0
    assert oh.raw_lambda([3.0, 3.0]) == 0.0
    lam, state = oh.gate_step(oh.GateState(), [1, 5, 1, 5])
    assert 0.0 < lam <= 0.08
    assert state.lambda_prev == lam
    assert oh.sign_test(3, 1) == 0.625
    assert oh.spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert oh.pearson([1, 1], [2, 3]) is None
    assert oh.select_pair_indices([oh.JudgeScore(3, 3), oh.JudgeScore(5, 1), oh.JudgeScore(1, 2)],
                                  oh.JudgeConfig()) == (1, 2)
    assert oh.dpo_loss(0.0) == pytest.approx(math.log(2.0))


def test_config_errors():
    text = oh.default_config()
    assert "train.learning_rate = 1e-06" in text
    assert oh.normalize_config(text) == text
    with pytest.raises(ValueError):
        oh.normalize_config("train.bogus = 1\n")


def test_short_training_run(tmp_path):
    overrides = ["train.steps=5", "train.pretrain_steps=5", "train.learning_rate=0.05"]
    r = oh.train(oh.default_config(), overrides)
    assert r["steps"] == 5
    assert len(r["lambda_trajectory"]) == 5
    assert all(0.0 <= x <= 0.8 for x in r["lambda_trajectory"])
    assert 1.0 <= r["final_eval"]["mean_semantic"] <= 5.0
    sha = oh.run_training(oh.default_config(), overrides, str(tmp_path / "run"))
    ckpt = (tmp_path / "run" / "checkpoints" / "final.ckpt").read_bytes()
    assert oh.git_blob_sha1(ckpt) == sha
    assert oh.load_checkpoint(str(tmp_path / "run" / "checkpoints" / "final.ckpt")) == r["final_params"]
