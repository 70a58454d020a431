"""Training loop, early stopping and evaluation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_toy_lexicon
from g2pstudio import training as tr
from g2pstudio.errors import ConfigError, EvalError, TrainingDiverged
from g2pstudio.g2p_models import CnnGenome, TransformerGenome, build_cnn, build_transformer
from g2pstudio.lexicon import build_vocabularies
from g2pstudio.training import TrainConfig, evaluate, should_stop, train

SMALL_CNN = CnnGenome(2, 32, 2, 32, 2, 32, "relu", "adam", 32)
SMALL_TRF = TransformerGenome(2, 2, 32, 2, 0.01, 32, 32)


class TestShouldStop:
    def test_fifty_identical_losses(self):
        assert should_stop([0.5] * 50, window=50, threshold=0.01) is True

    def test_ten_percent_span_does_not_stop(self):
        series = list(np.linspace(1.00, 0.90, 50))
        assert should_stop(series, window=50, threshold=0.01) is False

    def test_insufficient_window(self):
        assert should_stop([0.5] * 49, window=50, threshold=0.01) is False

    def test_just_below_threshold_stops(self):
        series = list(np.linspace(1.0, 1.0 - 0.009, 50))
        assert should_stop(series, window=50, threshold=0.01) is True

    def test_direct_ratio_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            series = (1 + rng.random(60) * rng.choice([0.001, 0.5])).tolist()
            tail = series[-50:]
            expected = (max(tail) - min(tail)) / max(tail) < 0.01
            assert should_stop(series, 50, 0.01) == expected

    @given(st.lists(st.floats(min_value=0.01, max_value=10.0),
                    min_size=50, max_size=80),
           st.lists(st.floats(min_value=0.01, max_value=10.0), max_size=30))
    @settings(max_examples=200)
    def test_prefix_never_changes_decision(self, tail, prefix):
        assert should_stop(tail, 50, 0.01) == should_stop(prefix + tail, 50, 0.01)

    def test_window_too_small(self):
        with pytest.raises(ConfigError):
            should_stop([1.0], window=1)


class TestTrainConfig:
    def test_zero_epochs_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(max_epochs=0)

    def test_bad_threshold_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(max_epochs=1, early_stop_threshold=0.0)


@pytest.fixture(scope="module")
def tiny():
    return make_toy_lexicon(24, seed=7)


@pytest.fixture(scope="module")
def overfit():
    lex = make_toy_lexicon(24, seed=7)
    gv, pv = build_vocabularies(lex)
    model = build_cnn(SMALL_CNN, gv, pv, max_len=16, seed=1)
    train(model, lex, TrainConfig(max_epochs=220, seed=3, early_stop=False))
    return model, lex


class TestTrain:
    def test_deterministic_for_fixed_seed(self, tiny):
        gv, pv = build_vocabularies(tiny)
        results = []
        for _ in range(2):
            model = build_cnn(SMALL_CNN, gv, pv, max_len=16, seed=1)
            _, hist = train(model, tiny, TrainConfig(max_epochs=5, seed=3))
            blob = b"".join(p.data.tobytes() for p in model.parameters())
            results.append((blob, hist.losses, hist.batch_fingerprints))
        assert results[0][0] == results[1][0]  # bitwise-identical parameters
        assert results[0][1] == results[1][1]
        assert results[0][2] == results[1][2]

    def test_divergence_raises_with_step(self, tiny):
        gv, pv = build_vocabularies(tiny)
        model = build_cnn(SMALL_CNN, gv, pv, max_len=16, seed=1)
        model.params["proj.bias"].data[0] = np.nan
        with pytest.raises(TrainingDiverged) as exc:
            train(model, tiny, TrainConfig(max_epochs=50, seed=0))
        assert exc.value.step == 0

    def test_does_not_mutate_lexicon(self, tiny):
        gv, pv = build_vocabularies(tiny)
        before_entries = tuple(tiny.entries)
        before_counts = dict(tiny.phoneme_counts)
        model = build_cnn(SMALL_CNN, gv, pv, max_len=16, seed=1)
        train(model, tiny, TrainConfig(max_epochs=2, seed=0))
        assert tiny.entries == before_entries
        assert tiny.phoneme_counts == before_counts

    def test_missing_phoneme_vocab_rejected(self, tiny):
        gv, _ = build_vocabularies(tiny)
        wrong_pv = build_vocabularies(make_toy_lexicon(5, seed=1))[1]
        from g2pstudio.lexicon import Vocab
        tiny_pv = Vocab.from_symbols(["X9"])
        model = build_cnn(SMALL_CNN, gv, tiny_pv, max_len=16, seed=1)
        with pytest.raises(ConfigError):
            train(model, tiny, TrainConfig(max_epochs=1))

    def test_history_csv(self, tiny, tmp_path):
        gv, pv = build_vocabularies(tiny)
        model = build_cnn(SMALL_CNN, gv, pv, max_len=16, seed=1)
        _, hist = train(model, tiny, TrainConfig(max_epochs=2, seed=0))
        path = tmp_path / "history.csv"
        hist.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,loss"
        assert len(lines) == hist.steps_run + 1
        assert hist.summary()["epochs_run"] == 2

    def test_early_stop_triggers_on_plateau(self, tiny):
        gv, pv = build_vocabularies(tiny)
        model = build_cnn(SMALL_CNN, gv, pv, max_len=16, seed=1)
        # lr 0 keeps the loss perfectly flat: must stop as soon as the
        # smoothed window fills
        cfg = TrainConfig(max_epochs=1000, seed=0, learning_rate=1e-12)
        _, hist = train(model, tiny, cfg)
        assert hist.stopped_early
        assert hist.steps_run < 100

    def test_checkpoint_written(self, tiny, tmp_path):
        gv, pv = build_vocabularies(tiny)
        model = build_cnn(SMALL_CNN, gv, pv, max_len=16, seed=1)
        out = tmp_path / "m.ckpt"
        train(model, tiny, TrainConfig(max_epochs=1, seed=0,
                                       checkpoint_path=str(out)))
        assert out.exists()


class TestEvaluate:
    def test_perfect_model_scores_zero(self, overfit):
        model, lex = overfit
        report = evaluate(model, lex)
        assert report.wer == 0.0 and report.per == 0.0

    def test_word_count_matches_entries(self, overfit):
        model, lex = overfit
        report = evaluate(model, lex)
        assert report.n_words == len(lex.entries)

    def test_single_word_one_substitution(self, overfit, monkeypatch):
        model, lex = overfit
        entry = lex.entries[0]
        ref = entry.pronunciations[0]
        wrong = ("Z9",) + ref[1:]

        monkeypatch.setattr(tr, "greedy_decode", lambda m, w: list(wrong))
        from g2pstudio.lexicon import Lexicon
        single = Lexicon.from_entries(lex.spec, [entry])
        report = tr.evaluate(model, single)
        assert report.wer == pytest.approx(100.0)
        assert report.per == pytest.approx(100.0 / len(ref))

    def test_empty_test_set(self, overfit):
        model, lex = overfit
        from g2pstudio.lexicon import Lexicon
        with pytest.raises(EvalError):
            evaluate(model, Lexicon.from_entries(lex.spec, []))

    def test_overlap_assertion(self, overfit):
        model, lex = overfit
        with pytest.raises(EvalError):
            evaluate(model, lex, train_words={lex.entries[0].word})


class TestTransformerTraining:
    def test_loss_decreases(self):
        lex = make_toy_lexicon(24, seed=7)
        gv, pv = build_vocabularies(lex)
        model = build_transformer(SMALL_TRF, gv, pv, max_len=16, seed=1)
        _, hist = train(model, lex, TrainConfig(max_epochs=120, seed=3,
                                                early_stop=False))
        assert hist.losses[-1] < hist.losses[0] / 2
