import numpy as np
import pytest

from polyvox.acoustic import AcousticModel, micro_config
from polyvox.synthetic import make_utterances, synthetic_phoneset
from polyvox.tensor import Tensor
from polyvox.training import (Adam, MomentumSGD, StageConfig, TrainingDiverged,
                              TrainPlan, clip_gradients, config_hash, finetune,
                              pretrain, pretraining_parts)
from polyvox.weighting import uniform_weights


def tiny_setup(mel_bins=6, n_utts=4, seed=2, dtype="float32"):
    ps = synthetic_phoneset("en", 6)
    utts = make_utterances("spk", "en", ps, n_utts, seed=seed, mel_bins=mel_bins,
                           phonemes_per_utterance=3, frames_per_phoneme=3)
    cfg = micro_config({"en": len(ps)}, ("spk",), mel_bins=mel_bins, dtype=dtype)
    return cfg, utts


def tiny_plan(steps1=5, steps2=5, seed=1, **kwargs):
    return TrainPlan(
        stage1=StageConfig(optimizer="sgd", steps=steps1, batch_size=4,
                           learning_rate=kwargs.pop("lr1", 0.01), momentum=0.75),
        stage2=StageConfig(optimizer="adam", steps=steps2, batch_size=4,
                           learning_rate=kwargs.pop("lr2", 1e-3), beta1=0.9, beta2=0.98),
        seed=seed, **kwargs)


class TestOptimizerOracles:
    """Updates on a single parameter with gradient g = x (quadratic loss),
    against an independently coded closed-form recurrence."""

    def test_momentum_sgd_matches_recurrence(self):
        lr, mu = 0.1, 0.5
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = MomentumSGD(lr, mu)
        # oracle recurrence
        x, v = 1.0, 0.0
        for _ in range(6):
            g = x
            v = mu * v + g
            x = x - lr * v
            opt.step({"p": p}, {p: p.data.copy()})
            assert p.data[0] == pytest.approx(x, rel=1e-12)

    def test_adam_matches_recurrence(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.98, 1e-8
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam(lr, b1, b2, eps)
        x, m, v = 1.0, 0.0, 0.0
        for t in range(1, 7):
            g = x
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1 ** t)
            vhat = v / (1 - b2 ** t)
            x = x - lr * mhat / (np.sqrt(vhat) + eps)
            opt.step({"p": p}, {p: p.data.copy()})
            assert p.data[0] == pytest.approx(x, rel=1e-12)

    def test_adam_first_step_size(self):
        # bias correction makes the very first step lr-sized regardless of g scale
        for scale in (1e-3, 1.0, 1e3):
            p = Tensor(np.array([0.0]), requires_grad=True)
            Adam(0.01).step({"p": p}, {p: np.array([scale])})
            assert abs(p.data[0]) == pytest.approx(0.01, rel=1e-5)


class TestClipping:
    def test_clip_scales_to_max_norm(self):
        grads = {1: np.array([3.0, 4.0])}
        norm = clip_gradients(grads, 1.0)
        assert norm == pytest.approx(5.0)
        assert np.linalg.norm(grads[1]) == pytest.approx(1.0)

    def test_no_clip_below_threshold(self):
        grads = {1: np.array([0.3, 0.4])}
        clip_gradients(grads, 1.0)
        assert np.allclose(grads[1], [0.3, 0.4])

    def test_zero_max_norm_disables(self):
        grads = {1: np.array([30.0, 40.0])}
        clip_gradients(grads, 0.0)
        assert np.allclose(grads[1], [30.0, 40.0])


class TestStages:
    def test_zero_learning_rate_leaves_parameters_unchanged(self):
        cfg, utts = tiny_setup()
        model = AcousticModel(cfg, seed=0)
        before = {k: v.data.copy() for k, v in model.parameters().items()}
        plan = tiny_plan(steps1=3, lr1=0.0)
        pretrain(model, utts, plan)
        for name, tensor in model.parameters().items():
            assert np.array_equal(tensor.data, before[name]), name

    def test_same_seed_bit_identical_checkpoints(self, tmp_path):
        cfg, utts = tiny_setup()
        paths = []
        logs = []
        for run in range(2):
            model = AcousticModel(cfg, seed=3)
            plan = tiny_plan(steps1=4, steps2=4, seed=9)
            log1 = pretrain(model, utts, plan)
            log2 = finetune(model, utts, plan)
            path = tmp_path / f"run{run}.ckpt"
            model.save(path)
            paths.append(path)
            logs.append((log1.losses(), log2.losses(), log1.records[-1]["per_class"]))
        assert paths[0].read_bytes() == paths[1].read_bytes()
        assert logs[0] == logs[1]

    def test_weighted_equals_unweighted_when_balanced(self, tmp_path):
        cfg, utts = tiny_setup()
        results = []
        for weights in (None, uniform_weights()):
            model = AcousticModel(cfg, seed=5)
            pretrain(model, utts, tiny_plan(steps1=4), weights=weights)
            path = tmp_path / f"w{weights is None}.ckpt"
            model.save(path)
            results.append(path.read_bytes())
        assert results[0] == results[1]

    def test_pretrain_excludes_long_sentences(self):
        cfg, utts = tiny_setup()
        plan = tiny_plan()
        parts = pretraining_parts(utts, plan)
        assert len(parts) == len(utts)          # all short here
        long_plan = TrainPlan(stage1=plan.stage1, stage2=plan.stage2, seed=0,
                              max_sentence_frames=5, max_part_frames=5)
        assert pretraining_parts(utts, long_plan) == []
        model = AcousticModel(cfg, seed=0)
        with pytest.raises(ValueError, match="no training samples"):
            pretrain(model, utts, long_plan)

    def test_chunked_parts_bounded(self):
        cfg, utts = tiny_setup()
        plan = TrainPlan(seed=0, max_sentence_frames=9, max_part_frames=4)
        parts = pretraining_parts(utts, plan)
        assert parts and all(p.frames <= 4 for p in parts)

    def test_divergence_guard_aborts(self):
        cfg, utts = tiny_setup()
        model = AcousticModel(cfg, seed=1)
        plan = TrainPlan(
            stage1=StageConfig(optimizer="sgd", steps=300, batch_size=4,
                               learning_rate=30.0, momentum=0.9),
            stage2=TrainPlan().stage2, seed=2,
            grad_clip_norm=0.0, divergence_factor=2.0, divergence_patience=5)
        with pytest.raises(TrainingDiverged, match="consecutive"):
            pretrain(model, utts, plan)

    def test_smoothed_loss_decreases(self):
        cfg, utts = tiny_setup()
        model = AcousticModel(cfg, seed=4)
        plan = tiny_plan(steps1=150, lr1=0.02)
        log = pretrain(model, utts, plan)
        losses = np.array(log.losses())
        window = 50
        smoothed = np.convolve(losses, np.ones(window) / window, mode="valid")
        sampled = smoothed[::window]
        assert all(b < a for a, b in zip(sampled, sampled[1:]))
        assert smoothed[-1] < smoothed[0]


class TestLogAndHash:
    def test_betas_feed_config_hash(self):
        cfg, _ = tiny_setup()
        plan_a = tiny_plan()
        plan_b = TrainPlan(
            stage1=plan_a.stage1,
            stage2=StageConfig(**{**plan_a.stage2.to_dict(), "beta2": 0.999}),
            seed=plan_a.seed)
        assert config_hash(cfg.to_dict(), plan_a) != config_hash(cfg.to_dict(), plan_b)

    def test_log_meta_echoes_stage_hyperparameters(self, tmp_path):
        cfg, utts = tiny_setup()
        model = AcousticModel(cfg, seed=0)
        plan = tiny_plan(steps2=3)
        log = finetune(model, utts, plan)
        assert log.stage_config["beta1"] == 0.9
        assert log.stage_config["beta2"] == 0.98
        path = tmp_path / "log.jsonl"
        log.write_jsonl(path)
        import json
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert lines[0]["meta"] and lines[0]["config_hash"] == log.config_hash
        assert len(lines) == 1 + len(log.records)
        assert all("loss" in rec and "per_class" in rec for rec in lines[1:])

    def test_per_class_means_in_log(self):
        cfg, utts = tiny_setup()
        model = AcousticModel(cfg, seed=0)
        log = pretrain(model, utts, tiny_plan(steps1=2))
        assert all("spk/en" in rec["per_class"] for rec in log.records)
