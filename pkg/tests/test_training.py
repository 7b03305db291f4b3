"""Losses, example construction, the similarity cache, and the train loop."""

from __future__ import annotations

import csv
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import tiny_model
from evstory.model import save_checkpoint
from evstory.providers import HashingSentenceEmbedder
from evstory.training import (
    TrainConfig,
    TrainingDiverged,
    WarmStartError,
    batch_losses,
    build_example,
    build_similarity_cache,
    build_training_vocab,
    collate,
    evaluate_loss,
    lm_loss,
    read_similarity_cache,
    sent_loss,
    similarity_targets,
    target_template,
    train,
    warm_start,
    write_similarity_cache,
)
from evstory.vocab import EOS, sentence_sep


class TestTrainConfig:
    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(sent_loss_mode="soft").validate()

    def test_bad_sizes_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0).validate()
        with pytest.raises(ValueError):
            TrainConfig(lr=0.0).validate()

    def test_dict_round_trip(self):
        cfg = TrainConfig(batch_size=4, lambda_sent=0.5, max_steps=10)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg


class TestLosses:
    def test_lm_loss_matches_manual_nll(self):
        g = torch.Generator().manual_seed(0)
        logits = torch.randn(2, 3, 5, generator=g)
        labels = torch.tensor([[1, 4, 0], [2, 0, 0]])  # pad id 0 ignored
        loss = lm_loss(logits, labels, pad_id=0)
        logp = torch.log_softmax(logits.double(), dim=-1)
        terms = [
            -logp[0, 0, 1],
            -logp[0, 1, 4],
            -logp[1, 0, 2],
        ]
        expected = sum(terms) / 3
        assert abs(float(loss) - float(expected)) < 1e-6

    def test_sent_loss_floor_frozen_values(self):
        pred = torch.tensor([0.50, 0.90])
        target = torch.tensor([0.45, 0.20])
        # diffs 0.05, 0.70 -> floored to 0.10, 0.70 -> mean 0.40
        assert abs(float(sent_loss(pred, target, delta=0.1, mode="floor")) - 0.40) < 1e-6

    def test_sent_loss_hinge_frozen_values(self):
        pred = torch.tensor([0.50, 0.90])
        target = torch.tensor([0.45, 0.20])
        # diffs 0.05, 0.70 -> hinged to 0.00, 0.60 -> mean 0.30
        assert abs(float(sent_loss(pred, target, delta=0.1, mode="hinge")) - 0.30) < 1e-6

    def test_sent_loss_unknown_mode(self):
        with pytest.raises(ValueError):
            sent_loss(torch.zeros(2), torch.zeros(2), mode="mean")

    @given(
        arrays(np.float32, (4,), elements=st.floats(0, 1, width=32)),
        arrays(np.float32, (4,), elements=st.floats(0, 1, width=32)),
    )
    @settings(max_examples=200, deadline=None)
    def test_floor_mode_never_below_delta(self, pred, target):
        value = float(sent_loss(torch.tensor(pred), torch.tensor(target), delta=0.1))
        assert value >= 0.1 - 1e-7

    @given(
        arrays(np.float32, (4,), elements=st.floats(0, 1, width=32)),
        arrays(np.float32, (4,), elements=st.floats(0, 1, width=32)),
    )
    @settings(max_examples=200, deadline=None)
    def test_hinge_mode_nonnegative_and_below_floor(self, pred, target):
        p, t = torch.tensor(pred), torch.tensor(target)
        hinge = float(sent_loss(p, t, delta=0.1, mode="hinge"))
        floor = float(sent_loss(p, t, delta=0.1, mode="floor"))
        assert 0.0 <= hinge <= floor + 1e-7

    def test_overall_is_lm_plus_scaled_sent(self, toy_vocab, toy_examples):
        model = tiny_model(toy_vocab, seed=1)
        model.eval()
        examples = []
        for ex in toy_examples[:4]:
            assert ex.sim_target is None
            examples.append(ex)
        cfg = TrainConfig(batch_size=4, lambda_sent=0.25)
        batch = collate(examples, toy_vocab.pad_id)
        with torch.no_grad():
            overall, lm, sent = batch_losses(model, batch, cfg)
        assert float(sent) == 0.0  # no targets attached
        assert abs(float(overall) - float(lm)) < 1e-7

    def test_sent_term_activates_with_targets(self, toy_records, toy_sequences, toy_vocab):
        cfg = TrainConfig(batch_size=4, lambda_sent=0.25)
        embedder = HashingSentenceEmbedder(dimension=16)
        examples = []
        for rec in toy_records["train"][:4]:
            sim = similarity_targets(rec.sentences, embedder)
            examples.append(
                build_example(rec, toy_sequences["train"][rec.id], toy_vocab, cfg, sim)
            )
        model = tiny_model(toy_vocab, seed=2)
        model.eval()
        batch = collate(examples, toy_vocab.pad_id)
        with torch.no_grad():
            overall, lm, sent = batch_losses(model, batch, cfg)
        assert float(sent) >= 0.1  # floor mode saturates at delta
        assert abs(float(overall) - (float(lm) + 0.25 * float(sent))) < 1e-6


class TestExamples:
    def test_target_template_layout(self):
        sents = [["a", "b"], ["c"]]
        assert target_template(sents) == ["a", "b", sentence_sep(1), "c", sentence_sep(2), EOS]

    def test_build_example_alignment(self, toy_records, toy_sequences, toy_vocab):
        rec = toy_records["train"][0]
        cfg = TrainConfig()
        ex = build_example(rec, toy_sequences["train"][rec.id], toy_vocab, cfg)
        assert ex.story_id == rec.id
        assert ex.decoder_input[0] == toy_vocab.bos_id
        # teacher forcing: labels are the decoder input shifted left by one
        assert ex.labels[:-1] == ex.decoder_input[1:]
        assert ex.labels[-1] == toy_vocab.eos_id
        assert len(ex.sep_positions) == len(rec.sentences)
        sep_ids = set(toy_vocab.sep_ids())
        for pos in ex.sep_positions:
            assert ex.decoder_input[pos] in sep_ids
        assert ex.context_ids[0] == toy_vocab.bos_id
        assert ex.context_ids[-1] == toy_vocab.eos_id

    def test_truncation_drops_sim_target(self, toy_records, toy_sequences, toy_vocab):
        rec = toy_records["train"][0]
        m = len(rec.sentences)
        sim = np.eye(m, dtype=np.float32)
        short = TrainConfig(max_target_length=5)
        ex = build_example(rec, toy_sequences["train"][rec.id], toy_vocab, short, sim)
        assert len(ex.sep_positions) < m
        assert ex.sim_target is None
        full = build_example(
            rec, toy_sequences["train"][rec.id], toy_vocab, TrainConfig(), sim
        )
        assert full.sim_target is not None
        np.testing.assert_array_equal(full.sim_target, sim)

    def test_wrong_sim_shape_rejected(self, toy_records, toy_sequences, toy_vocab):
        rec = toy_records["train"][0]
        with pytest.raises(ValueError):
            build_example(
                rec,
                toy_sequences["train"][rec.id],
                toy_vocab,
                TrainConfig(),
                np.zeros((2, 2), dtype=np.float32),
            )

    def test_collate_pads_to_batch_max(self, toy_examples, toy_vocab):
        batch = collate(toy_examples[:6], toy_vocab.pad_id)
        for tensor, field in (
            (batch.context_ids, "context_ids"),
            (batch.event_ids, "event_ids"),
            (batch.decoder_input, "decoder_input"),
            (batch.labels, "labels"),
        ):
            lengths = [len(getattr(e, field)) for e in toy_examples[:6]]
            assert tensor.shape == (6, max(lengths))
            for i, n in enumerate(lengths):
                row = tensor[i]
                assert torch.all(row[n:] == toy_vocab.pad_id)

    def test_vocab_covers_event_markers(self, toy_vocab):
        for marker in ("<e_s>", "<e_sep>", "<e_e>", "<e_none>"):
            assert toy_vocab.id_of(marker) != toy_vocab.unk_id


class TestSimilarityTargets:
    def test_symmetric_with_unit_diagonal(self):
        embedder = HashingSentenceEmbedder(dimension=32)
        sents = [["the", "dog", "ran"], ["the", "dog", "slept"], ["rain", "fell"]]
        sim = similarity_targets(sents, embedder)
        assert sim.shape == (3, 3)
        np.testing.assert_array_equal(sim, sim.T)
        np.testing.assert_allclose(np.diag(sim), 1.0, atol=1e-6)
        # shared words raise similarity above the unrelated pair
        assert sim[0, 1] > sim[0, 2]

    def test_cache_round_trip(self, tmp_path):
        targets = {
            "a": np.random.default_rng(0).random((4, 4)).astype(np.float32),
            "b": np.random.default_rng(1).random((2, 2)).astype(np.float32),
        }
        path = tmp_path / "targets.simt"
        write_similarity_cache(path, targets)
        loaded = read_similarity_cache(path)
        assert set(loaded) == {"a", "b"}
        for key in targets:
            np.testing.assert_array_equal(loaded[key], targets[key])

    def test_cache_rejects_non_square(self, tmp_path):
        with pytest.raises(ValueError):
            write_similarity_cache(
                tmp_path / "bad.simt", {"a": np.zeros((2, 3), dtype=np.float32)}
            )

    def test_cache_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "junk.simt"
        path.write_bytes(b"JUNKxxxxxxxxxxxx")
        with pytest.raises(ValueError):
            read_similarity_cache(path)

    def test_build_cache_covers_all_records(self, toy_records):
        embedder = HashingSentenceEmbedder(dimension=16)
        cache = build_similarity_cache(toy_records["dev"], embedder)
        assert set(cache) == {r.id for r in toy_records["dev"]}
        for rec in toy_records["dev"]:
            m = len(rec.sentences)
            assert cache[rec.id].shape == (m, m)


def _examples_with_targets(records, sequences, vocab, cfg, embedder):
    out = []
    for rec in records:
        sim = similarity_targets(rec.sentences, embedder)
        out.append(build_example(rec, sequences[rec.id], vocab, cfg, sim))
    return out


class TestTrainLoop:
    def test_short_run_writes_artifacts(self, toy_records, toy_sequences, toy_vocab, tmp_path):
        cfg = TrainConfig(batch_size=8, epochs=2, lr=1e-3, log_every=1, seed=3)
        embedder = HashingSentenceEmbedder(dimension=16)
        train_ex = _examples_with_targets(
            toy_records["train"], toy_sequences["train"], toy_vocab, cfg, embedder
        )
        dev_ex = _examples_with_targets(
            toy_records["dev"], toy_sequences["dev"], toy_vocab, cfg, embedder
        )
        model = tiny_model(toy_vocab, seed=3)
        logs = []
        result = train(model, train_ex, dev_ex, cfg, out_dir=tmp_path, log=logs.append)
        assert result.steps == 2 * math.ceil(len(train_ex) / 8)
        assert result.best_path.exists() and result.last_path.exists()
        assert math.isfinite(result.best_dev_loss)
        assert 0 <= result.best_epoch < 2
        with open(tmp_path / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["phase"] for r in rows} == {"train", "dev"}
        dev_rows = [r for r in rows if r["phase"] == "dev"]
        assert len(dev_rows) == 2
        assert min(float(r["overall"]) for r in dev_rows) == pytest.approx(
            result.best_dev_loss
        )
        assert logs

    def test_max_steps_cuts_run_short(self, toy_vocab, toy_examples):
        cfg = TrainConfig(batch_size=8, epochs=10, lr=1e-3, max_steps=3, seed=4)
        model = tiny_model(toy_vocab, seed=4)
        result = train(model, toy_examples, [], cfg)
        assert result.steps == 3

    def test_divergence_raises(self, toy_vocab, toy_examples):
        model = tiny_model(toy_vocab, seed=5)
        with torch.no_grad():
            model.lm_head.weight.fill_(float("inf"))
        cfg = TrainConfig(batch_size=8, epochs=1, seed=5)
        with pytest.raises(TrainingDiverged):
            train(model, toy_examples, [], cfg)

    def test_same_seed_reproduces_history(self, toy_vocab, toy_examples):
        cfg = TrainConfig(batch_size=8, epochs=1, lr=1e-3, log_every=1, seed=6)
        a = train(tiny_model(toy_vocab, seed=6), toy_examples, [], cfg)
        b = train(tiny_model(toy_vocab, seed=6), toy_examples, [], cfg)
        assert [r["overall"] for r in a.history] == [r["overall"] for r in b.history]

    def test_lambda_zero_matches_disabled_head_bitwise(
        self, toy_records, toy_sequences, toy_vocab
    ):
        """The auxiliary loss scaled by zero must not leave any trace."""
        embedder = HashingSentenceEmbedder(dimension=16)
        cfg_zero = TrainConfig(batch_size=8, epochs=2, lr=1e-3, log_every=1,
                               seed=7, lambda_sent=0.0)
        cfg_off = TrainConfig(batch_size=8, epochs=2, lr=1e-3, log_every=1, seed=7)
        train_ex = _examples_with_targets(
            toy_records["train"], toy_sequences["train"], toy_vocab, cfg_zero, embedder
        )
        dev_ex = _examples_with_targets(
            toy_records["dev"], toy_sequences["dev"], toy_vocab, cfg_zero, embedder
        )
        # dropout > 0 so the test also proves the RNG streams stay aligned
        with_head = tiny_model(toy_vocab, seed=7, dropout=0.1)
        without = tiny_model(toy_vocab, seed=7, dropout=0.1, disable_sen=True)
        ra = train(with_head, train_ex, dev_ex, cfg_zero)
        rb = train(without, train_ex, dev_ex, cfg_off)
        la = [(r["phase"], r["lm"]) for r in ra.history]
        lb = [(r["phase"], r["lm"]) for r in rb.history]
        assert la == lb  # bit-identical loss curves
        for key, value in without.state_dict().items():
            assert torch.equal(with_head.state_dict()[key], value), key

    def test_evaluate_loss_is_deterministic(self, toy_vocab, toy_examples):
        model = tiny_model(toy_vocab, seed=8)
        cfg = TrainConfig(batch_size=8)
        a = evaluate_loss(model, toy_examples, cfg)
        b = evaluate_loss(model, toy_examples, cfg)
        assert a == b
        assert set(a) == {"overall", "lm", "sent"}


class TestWarmStart:
    def _save(self, tmp_path, name, model):
        path = tmp_path / name
        save_checkpoint(path, model)
        return path

    def test_weights_come_from_the_right_checkpoints(self, toy_vocab, tmp_path):
        base = tiny_model(toy_vocab, seed=10)
        stage1 = tiny_model(toy_vocab, seed=11)
        target = tiny_model(toy_vocab, seed=12)
        base_path = self._save(tmp_path, "base.pt", base)
        stage1_path = self._save(tmp_path, "stage1.pt", stage1)
        warm_start(target, base_path, stage1_path)

        def layers(encoder):
            return {
                k: v for k, v in encoder.state_dict().items()
                if "token_embedding" not in k
            }

        for key, value in layers(target.context_encoder).items():
            assert torch.equal(value, layers(base.context_encoder)[key]), key
        for key, value in layers(target.event_encoder).items():
            assert torch.equal(value, layers(stage1.context_encoder)[key]), key
        for key, value in layers(target.decoder).items():
            assert torch.equal(value, layers(stage1.decoder)[key]), key
        # the shared embedding table is loaded last, from stage 1
        assert torch.equal(target.embedding.weight, stage1.embedding.weight)
        assert torch.equal(
            target.context_encoder.token_embedding.weight, stage1.embedding.weight
        )
        assert torch.equal(target.lm_head.weight, stage1.lm_head.weight)

    def test_rejects_model_without_both_encoders(self, toy_vocab, tmp_path):
        target = tiny_model(toy_vocab, seed=13, disable_events=True)
        path = self._save(tmp_path, "any.pt", tiny_model(toy_vocab, seed=14))
        with pytest.raises(WarmStartError):
            warm_start(target, path, path)

    def test_rejects_dimension_mismatch(self, toy_vocab, tmp_path):
        target = tiny_model(toy_vocab, seed=15)
        small = tiny_model(toy_vocab, seed=16, d_model=16, d_ff=32)
        path = self._save(tmp_path, "small.pt", small)
        with pytest.raises(WarmStartError):
            warm_start(target, path, path)

    def test_rejects_checkpoint_without_context_encoder(self, toy_vocab, tmp_path):
        target = tiny_model(toy_vocab, seed=17)
        headless = tiny_model(toy_vocab, seed=18, disable_leading=True)
        good = self._save(tmp_path, "good.pt", tiny_model(toy_vocab, seed=19))
        bad = self._save(tmp_path, "bad.pt", headless)
        with pytest.raises(WarmStartError):
            warm_start(target, bad, good)


class TestVocabBuild:
    def test_includes_all_streams(self, toy_records, toy_sequences):
        vocab = build_training_vocab(
            toy_records["train"], list(toy_sequences["train"].values()), max_sentences=4
        )
        assert vocab.id_of("<e_s>") != vocab.unk_id
        # leading-context word
        assert vocab.id_of("wanted") != vocab.unk_id
        assert len(vocab.sep_ids()) == 4

    def test_size_cap_respected(self, toy_records, toy_sequences):
        capped = build_training_vocab(
            toy_records["train"],
            list(toy_sequences["train"].values()),
            size=40,
            max_sentences=4,
        )
        assert len(capped) == 40
