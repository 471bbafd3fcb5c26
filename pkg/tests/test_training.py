import math

import numpy as np
import pytest
import torch

from cemtm.checkpoint import load_checkpoint, save_checkpoint
from cemtm.errors import CorruptHeader, DivergedLoss, EmptyCorpus
from cemtm.model import ModelConfig, TopicModel, infer_theta, loss_parts, total_loss
from cemtm.training import TrainConfig, gradient_check, train

from conftest import make_record


def small_corpus(rng, n_docs=12, dim=6, tokens=4):
    return [
        make_record(f"d{i:02d}", [f"w{j}" for j in range(tokens)], rng.normal(size=(tokens, dim)))
        for i in range(n_docs)
    ]


def small_config(**overrides):
    base = dict(D=6, K=3, encoder_hidden=5, imp_model_dim=4, imp_layers=1, imp_heads=2)
    base.update(overrides)
    return ModelConfig(**base)


class TestAdamStep:
    def test_one_step_matches_hand_update(self):
        # single parameter, fixed gradient c: after one Adam step
        # m_hat = c, v_hat = c^2, theta -> theta - lr * m_hat / (sqrt(v_hat) + eps)
        theta0, c, lr, eps = 0.5, 0.3, 1e-2, 1e-8
        param = torch.nn.Parameter(torch.tensor([theta0], dtype=torch.float64))
        opt = torch.optim.Adam([param], lr=lr, betas=(0.9, 0.999), eps=eps)
        loss = c * param
        loss.backward()
        opt.step()
        m_hat = c  # (1-b1)*c / (1-b1)
        v_hat = c * c
        want = theta0 - lr * m_hat / (math.sqrt(v_hat) + eps)
        assert param.item() == pytest.approx(want, abs=1e-12)


class TestTrainLoop:
    def test_zero_epochs_returns_initial_params(self, rng):
        corpus = small_corpus(rng)
        cfg = small_config()
        tc = TrainConfig(epochs=0, seed=5)
        model, report = train(corpus, cfg, tc)
        fresh = TopicModel(cfg, seed=5)
        for (name, a), (_, b) in zip(
            sorted(model.state_dict().items()), sorted(fresh.state_dict().items())
        ):
            assert torch.equal(a, b), name
        assert report.epochs == []

    def test_same_seed_is_bitwise_deterministic(self, rng):
        corpus = small_corpus(rng)
        cfg = small_config()
        tc = TrainConfig(epochs=3, seed=11, batch_size=5, learning_rate=1e-3)
        m1, r1 = train(corpus, cfg, tc)
        m2, r2 = train(corpus, cfg, tc)
        for (name, a), (_, b) in zip(
            sorted(m1.state_dict().items()), sorted(m2.state_dict().items())
        ):
            assert torch.equal(a, b), name
        assert [e.total for e in r1.epochs] == [e.total for e in r2.epochs]

    def test_loss_descends_on_clustered_corpus(self, rng):
        centers = rng.normal(size=(3, 6)) * 2
        corpus = []
        for i in range(30):
            c = i % 3
            H = (centers[c] + rng.normal(size=(4, 6)) * 0.2).astype(np.float32)
            corpus.append(make_record(f"d{i:02d}", ["a", "b", "c", "d"], H))
        _, report = train(
            corpus, small_config(), TrainConfig(epochs=25, seed=0, learning_rate=1e-3)
        )
        assert report.epochs[-1].total < report.epochs[0].total

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            train([], small_config(), TrainConfig(epochs=1, seed=0))

    def test_diverged_loss_reports_context(self, rng):
        corpus = small_corpus(rng, n_docs=4)
        # finite forward, but a squared residual of ~1e60 overflows float32
        huge = make_record("dbad", ["x", "y"], rng.normal(size=(2, 6)), np.full(6, 1e30))
        corpus.append(huge)
        with pytest.raises(DivergedLoss, match="epoch 0"):
            train(corpus, small_config(), TrainConfig(epochs=1, seed=0, batch_size=8))

    def test_report_has_component_means(self, rng):
        corpus = small_corpus(rng, n_docs=6)
        _, report = train(corpus, small_config(), TrainConfig(epochs=2, seed=3, batch_size=4))
        assert len(report.epochs) == 2
        for stats in report.epochs:
            combined = stats.rec + 0.05 * stats.ent + 0.1 * stats.kl
            assert combined == pytest.approx(stats.total, rel=1e-4)

    def test_restarts_pick_lowest_final_loss(self, rng):
        corpus = small_corpus(rng)
        cfg = small_config()
        singles = []
        for r in range(3):
            _, rep = train(corpus, cfg, TrainConfig(epochs=3, seed=20 + r, learning_rate=1e-3))
            singles.append(rep.epochs[-1].total)
        best_seed = 20 + int(np.argmin(singles))
        _, rep = train(corpus, cfg, TrainConfig(epochs=3, seed=20, learning_rate=1e-3, restarts=3))
        assert rep.selected_seed == best_seed
        assert rep.epochs[-1].total == pytest.approx(min(singles), rel=1e-9)

    def test_plateau_stop_flag(self, rng):
        corpus = small_corpus(rng, n_docs=6)
        tc = TrainConfig(
            epochs=30, seed=1, learning_rate=1e-6, plateau_patience=2, plateau_tol=1e9
        )
        _, report = train(corpus, small_config(), tc)
        assert len(report.epochs) <= 3

    def test_normalize_doc_embeddings_flag(self, rng):
        corpus = small_corpus(rng, n_docs=6)
        _, raw = train(corpus, small_config(), TrainConfig(epochs=1, seed=2))
        _, normed = train(
            corpus, small_config(), TrainConfig(epochs=1, seed=2, normalize_doc_embeddings=True)
        )
        assert raw.epochs[0].rec != normed.epochs[0].rec


class TestCheckpoints:
    def test_round_trip_reproduces_forward_bitwise(self, tmp_path, rng):
        corpus = small_corpus(rng, n_docs=5)
        model, _ = train(corpus, small_config(), TrainConfig(epochs=2, seed=4))
        path = tmp_path / "model.cemp"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        record = corpus[0]
        a = infer_theta(record, model, deterministic=True)
        b = infer_theta(record, loaded, deterministic=True)
        assert torch.equal(a.theta, b.theta)
        assert torch.equal(a.e_recon, b.e_recon)
        assert loaded.config == model.config

    def test_epoch_snapshots_written(self, tmp_path, rng):
        corpus = small_corpus(rng, n_docs=5)
        tc = TrainConfig(epochs=4, seed=0, checkpoint_every=2)
        _, report = train(corpus, small_config(), tc, checkpoint_dir=tmp_path)
        assert (tmp_path / "checkpoint_epoch0001.cemp").exists()
        assert (tmp_path / "checkpoint_epoch0003.cemp").exists()
        assert (tmp_path / "checkpoint_final.cemp").exists()
        assert report.final_checkpoint.endswith("checkpoint_final.cemp")

    def test_corrupt_checkpoint_rejected(self, tmp_path):
        model = TopicModel(small_config(), seed=0)
        path = tmp_path / "model.cemp"
        save_checkpoint(model, path)
        data = bytearray(path.read_bytes())
        data[:4] = b"JUNK"
        path.write_bytes(bytes(data))
        with pytest.raises(CorruptHeader):
            load_checkpoint(path)

    def test_truncated_checkpoint_rejected(self, tmp_path):
        model = TopicModel(small_config(), seed=0)
        path = tmp_path / "model.cemp"
        save_checkpoint(model, path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(CorruptHeader):
            load_checkpoint(path)


class TestGradientCheck:
    def test_small_run_within_tolerance(self):
        err = gradient_check(None, trial_count=3, seed=123)
        assert err <= 1e-4

    def test_fixed_config_accepted(self):
        cfg = small_config(D=3, K=2, encoder_hidden=3, imp_model_dim=2, imp_heads=1)
        err = gradient_check(cfg, trial_count=2, seed=5)
        assert err <= 1e-4

    def test_central_difference_definition(self):
        # the quotient on one coordinate reproduces (f(+h) - f(-h)) / 2h
        cfg = small_config(D=2, K=2, encoder_hidden=2, imp_model_dim=2, imp_heads=1)
        model = TopicModel(cfg, seed=0).double()
        gen = torch.Generator().manual_seed(0)
        H = torch.randn(3, 2, generator=gen, dtype=torch.float64)
        e_d = torch.randn(2, generator=gen, dtype=torch.float64)
        noise = torch.randn(3, generator=gen, dtype=torch.float64)

        def f():
            rec, ent, kl = loss_parts(model, H, e_d, noise)
            return total_loss(rec, ent, kl, cfg).item()

        h = 1e-4
        weight = model.decoder
        with torch.no_grad():
            orig = weight[0, 0].item()
            weight[0, 0] = orig + h
            hi = f()
            weight[0, 0] = orig - h
            lo = f()
            weight[0, 0] = orig
        fd = (hi - lo) / (2 * h)

        model.zero_grad()
        rec, ent, kl = loss_parts(model, H, e_d, noise)
        total_loss(rec, ent, kl, cfg).backward()
        assert model.decoder.grad[0, 0].item() == pytest.approx(fd, abs=1e-7)
