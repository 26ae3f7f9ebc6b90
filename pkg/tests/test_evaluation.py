import numpy as np
import pytest

from outfitgraph.data import CompatPair, FITBQuestion, Outfit
from outfitgraph.errors import FormatError
from outfitgraph.evaluation import (
    EvalReport,
    auc,
    compat_auc,
    emit_report,
    fitb_accuracy,
    format_table,
    read_report,
)


def brute_force_auc(pos, neg):
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


class TestAUC:
    def test_textbook_values(self):
        assert auc([2.0, 3.0], [0.0, 1.0]) == 1.0
        assert auc([0.0, 1.0], [2.0, 3.0]) == 0.0
        assert auc([1.0, 1.0], [1.0, 1.0]) == 0.5
        assert auc([0.0, 2.0], [1.0, 3.0]) == 0.25
        # one tie between groups counts half: (3 wins + 0.5) / 4
        assert auc([1.0, 2.0], [1.0, 0.0]) == 0.875

    def test_matches_brute_force(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            n_pos = int(rng.integers(1, 40))
            n_neg = int(rng.integers(1, 40))
            # coarse grid forces plenty of ties
            pos = rng.integers(0, 6, size=n_pos).astype(float)
            neg = rng.integers(0, 6, size=n_neg).astype(float)
            assert auc(pos, neg) == pytest.approx(
                brute_force_auc(pos, neg), abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(5)
        pos = rng.standard_normal(30)
        neg = rng.standard_normal(25)
        base = auc(pos, neg)
        assert auc(np.exp(pos), np.exp(neg)) == pytest.approx(base, abs=1e-12)
        assert auc(3 * pos + 7, 3 * neg + 7) == pytest.approx(base, abs=1e-12)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            auc([], [1.0])
        with pytest.raises(ValueError):
            auc([1.0], [])


def question(answer_index=1):
    choices = ("n0", "truth", "n1", "n2")
    rolled = choices[-answer_index:] + choices[:-answer_index] \
        if answer_index else choices
    # simpler: place "truth" at the given index explicitly
    items = ["n0", "n1", "n2"]
    items.insert(answer_index, "truth")
    return FITBQuestion(
        partial=Outfit("q", ("a", "b")),
        masked_position=1,
        choices=tuple(items),
        answer_index=answer_index,
    )


class TestFITBAccuracy:
    def scorer_preferring(self, wanted):
        def scorer(outfit):
            return 1.0 if wanted in outfit.items else 0.0
        return scorer

    def test_perfect_scorer(self):
        qs = [question(i) for i in range(4)]
        assert fitb_accuracy(self.scorer_preferring("truth"), qs) == 1.0

    def test_wrong_scorer(self):
        qs = [question(i) for i in range(4)]
        assert fitb_accuracy(self.scorer_preferring("n1"), qs) == 0.0

    def test_tie_breaks_to_lowest_index(self):
        # constant scorer: argmax picks choice 0, so only answer_index=0 wins
        qs = [question(i) for i in range(4)]
        assert fitb_accuracy(lambda o: 0.5, qs) == 0.25

    def test_threads_match_serial(self):
        rng = np.random.default_rng(9)
        qs = [question(int(rng.integers(0, 4))) for _ in range(40)]
        table = {q.choices[int(rng.integers(0, 4))]: float(rng.random())
                 for q in qs}

        def scorer(outfit):
            return sum(table.get(i, 0.0) for i in outfit.items)

        assert fitb_accuracy(scorer, qs, threads=4) == fitb_accuracy(scorer, qs)


class TestCompatAUC:
    def make_pairs(self, n, rng):
        pairs = []
        for k in range(n):
            pos = Outfit(f"p{k}", (f"p{k}_a", f"p{k}_b", f"p{k}_c"))
            neg = Outfit(f"p{k}", (f"p{k}_a", f"p{k}_b", f"x{k}"))
            pairs.append(CompatPair(pos, neg, replaced_position=2))
        return pairs

    def test_separating_scorer(self):
        rng = np.random.default_rng(0)
        pairs = self.make_pairs(20, rng)
        scorer = lambda o: 0.0 if any(i.startswith("x") for i in o.items) else 1.0
        assert compat_auc(scorer, pairs) == 1.0

    def test_threads_match_serial(self):
        rng = np.random.default_rng(1)
        pairs = self.make_pairs(30, rng)
        values = {}
        scorer = lambda o: values.setdefault(o.items, rng.random()) \
            if o.items not in values else values[o.items]
        # pre-populate so threading cannot race the rng
        for pair in pairs:
            scorer(pair.positive)
            scorer(pair.negative)
        assert compat_auc(scorer, pairs, threads=3) == compat_auc(scorer, pairs)


class TestReports:
    def report(self):
        return EvalReport(
            model_id="best.ckpt", modality="multimodal",
            n_fitb_questions=480, fitb_accuracy=0.6125,
            n_compat_pairs=480, auc=0.8132, seed=7,
            timestamp="1970-01-01T00:00:00Z",
        )

    def test_round_trip(self, tmp_path):
        path = tmp_path / "report.json"
        emit_report(self.report(), path)
        assert read_report(path) == self.report()

    def test_schema_mismatch(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"model_id": "x", "auc": 0.5}')
        with pytest.raises(FormatError):
            read_report(path)

    def test_emission_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        emit_report(self.report(), a)
        emit_report(self.report(), b)
        assert a.read_bytes() == b.read_bytes()


def test_format_table():
    text = format_table([("ngnn-multimodal", 0.614, 0.8132),
                         ("random", 0.25, 0.5)])
    lines = text.strip().split("\n")
    assert "Method" in lines[0] and "AUC" in lines[0]
    assert "61.4%" in lines[2] and "0.8132" in lines[2]
    assert "25.0%" in lines[3]
