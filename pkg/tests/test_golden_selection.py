"""Certainty selection, bucket accuracy, and annotator group analysis."""

import json
import math
import random

import numpy as np
import pytest

from annotation_incentives.behavior_models import BehaviorModel
from annotation_incentives.golden_selection import (
    INSTRUCTED,
    REAL,
    AnnotatorRecord,
    ScoredSample,
    bucket_accuracy,
    certainty,
    group_gap_analysis,
    read_annotator_records,
    read_scored_samples,
    select_golden,
    simulate_annotator_population,
)

LATENT = BehaviorModel.latent_factor(1.0)


class TestCertainty:
    def test_equal_rewards_maximal_uncertainty(self):
        assert certainty(1.3, 1.3) == 0.0

    def test_ln9_gap(self):
        # p_hat = 0.9, so 2 * |1/2 - p_hat| = 0.8
        assert abs(certainty(math.log(9.0), 0.0) - 0.8) < 1e-15

    def test_extreme_gap_saturates_exactly(self):
        assert certainty(1e3, 0.0) == 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(12)
        for _ in range(10000):
            r1, r2 = rng.normal(0, 5, 2)
            assert certainty(r1, r2) == certainty(r2, r1)

    def test_monotone_in_gap(self):
        gaps = np.linspace(0.0, 20.0, 50)
        cs = [certainty(g, 0.0) for g in gaps]
        assert all(cs[i + 1] >= cs[i] for i in range(len(cs) - 1))

    def test_matches_logistic_definition(self):
        for gap in (0.1, 1.0, 3.0, 10.0):
            p_hat = 1.0 / (1.0 + math.exp(-gap))
            assert abs(certainty(gap, 0.0) - 2.0 * abs(0.5 - p_hat)) < 1e-12


def _three_samples():
    return [
        ScoredSample("flat", 1.0, 1.0),
        ScoredSample("nine", math.log(9.0), 0.0),
        ScoredSample("wide", 10.0, 0.0),
    ]


class TestSelectGolden:
    def test_top_two_ordering(self):
        golden = select_golden(_three_samples(), 2)
        assert golden.ids == ["wide", "nine"]
        assert golden.certainties[0] > golden.certainties[1]

    def test_full_selection_sorted(self):
        golden = select_golden(_three_samples(), 3)
        assert golden.ids == ["wide", "nine", "flat"]

    def test_tie_broken_by_ascending_id(self):
        samples = [ScoredSample("b", 2.0, 0.0), ScoredSample("a", 2.0, 0.0),
                   ScoredSample("c", 0.5, 0.0)]
        golden = select_golden(samples, 2)
        assert golden.ids == ["a", "b"]

    def test_order_invariance_under_shuffles(self):
        rng = random.Random(7)
        samples = [ScoredSample(f"s{i:03d}", rng.gauss(0, 3), rng.gauss(0, 3))
                   for i in range(50)]
        base = select_golden(samples, 10)
        for _ in range(100):
            shuffled = samples[:]
            rng.shuffle(shuffled)
            got = select_golden(shuffled, 10)
            assert got.ids == base.ids
            assert got.certainties == base.certainties

    def test_oversized_request_rejected(self):
        with pytest.raises(ValueError):
            select_golden(_three_samples(), 4)

    def test_min_certainty_filter(self):
        golden = select_golden(_three_samples(), 1, min_certainty=0.9)
        assert golden.ids == ["wide"]
        with pytest.raises(ValueError):
            select_golden(_three_samples(), 3, min_certainty=0.5)


class TestBucketAccuracy:
    def test_scorer_generated_labels_are_perfect(self):
        rng = np.random.default_rng(3)
        samples = [ScoredSample(f"s{i}", float(g), 0.0, human_label=int(g > 0))
                   for i, g in enumerate(rng.normal(0, 2, 100)) if g != 0]
        for row in bucket_accuracy(samples, [0.1, 0.5, 1.0]):
            assert row.accuracy == 1.0

    def test_full_fraction_is_agreement_rate(self):
        samples = [
            ScoredSample("a", 1.0, 0.0, human_label=1),
            ScoredSample("b", 2.0, 0.0, human_label=0),
            ScoredSample("c", -1.0, 0.0, human_label=0),
            ScoredSample("d", -2.0, 0.0, human_label=0),
        ]
        rows = bucket_accuracy(samples, [1.0])
        assert rows[0].accuracy == 0.75
        assert rows[0].count == 4

    def test_certainty_noise_monotone(self):
        # labels flipped with probability (1 - c) / 2: most-certain bucket
        # beats the full set except for binomial noise
        worse = 0
        for s in range(100):
            rng = np.random.default_rng(500 + s)
            samples = []
            for i, g in enumerate(rng.normal(0, 2.0, 400)):
                c = math.tanh(abs(g) / 2.0)
                true = 1 if g > 0 else 0
                label = true if rng.random() >= (1 - c) / 2 else 1 - true
                samples.append(ScoredSample(f"s{i:03d}", float(g), 0.0, label))
            rows = bucket_accuracy(samples, [0.1, 1.0])
            se = math.sqrt(0.25 / rows[0].count) + math.sqrt(0.25 / rows[1].count)
            if rows[0].accuracy < rows[1].accuracy - 2 * se:
                worse += 1
        assert worse == 0

    def test_ties_are_flagged_and_predicted_one(self):
        samples = [ScoredSample("a", 1.0, 1.0, human_label=1),
                   ScoredSample("b", 1.0, 1.0, human_label=0)]
        rows = bucket_accuracy(samples, [1.0])
        assert rows[0].ties == 2
        assert rows[0].accuracy == 0.5

    def test_labels_required(self):
        with pytest.raises(ValueError):
            bucket_accuracy(_three_samples(), [0.5])

    def test_fraction_validation(self):
        samples = [ScoredSample("a", 1.0, 0.0, human_label=1)]
        with pytest.raises(ValueError):
            bucket_accuracy(samples, [0.5, 0.1])
        with pytest.raises(ValueError):
            bucket_accuracy(samples, [0.0, 0.5])


def _paper_fixture():
    records = []
    for i in range(30):
        records.append(AnnotatorRecord(f"rc{i}", 2, 2, 922, 1000, condition=REAL))
    for i in range(15):
        records.append(AnnotatorRecord(f"ri{i}", 1, 2, 811, 1000, condition=REAL))
    for i in range(28):
        records.append(AnnotatorRecord(f"ic{i}", 2, 2, 903, 1000,
                                       condition=INSTRUCTED))
    for i in range(17):
        records.append(AnnotatorRecord(f"ii{i}", 0, 2, 833, 1000,
                                       condition=INSTRUCTED))
    return records


class TestGroupGap:
    def test_reproduces_reported_aggregates(self):
        reports = group_gap_analysis(_paper_fixture())
        real = reports[REAL]
        assert abs(real.mean_acc_correct - 0.922) < 1e-12
        assert abs(real.mean_acc_incorrect - 0.811) < 1e-12
        assert abs(real.gap - 0.111) < 1e-12
        instructed = reports[INSTRUCTED]
        assert abs(instructed.mean_acc_correct - 0.903) < 1e-12
        assert abs(instructed.mean_acc_incorrect - 0.833) < 1e-12
        assert abs(instructed.gap - 0.070) < 1e-12

    def test_group_sizes_partition_records(self):
        reports = group_gap_analysis(_paper_fixture())
        assert reports[REAL].n_correct_group + reports[REAL].n_incorrect_group == 45
        assert (reports[INSTRUCTED].n_correct_group
                + reports[INSTRUCTED].n_incorrect_group) == 45

    def test_empty_incorrect_group_leaves_gap_absent(self):
        records = [AnnotatorRecord(f"a{i}", 3, 3, 9, 10) for i in range(5)]
        rep = group_gap_analysis(records)[REAL]
        assert rep.mean_acc_incorrect is None
        assert rep.gap is None
        assert rep.n_incorrect_group == 0

    def test_counts_validated(self):
        with pytest.raises(ValueError):
            AnnotatorRecord("x", 3, 2, 5, 10)


class TestPopulationSimulation:
    def test_committed_population_accuracy(self):
        records = simulate_annotator_population(
            LATENT, 0.8, 0.0, frac_lazy=0.0, q_golden=8, q_nongolden=200,
            n_annotators=50, seed=21)
        acc = np.mean([r.nongolden_accuracy for r in records])
        p = 0.5 + 0.5 * 0.8
        assert abs(acc - p) < 4 * math.sqrt(p * (1 - p) / (200 * 50))

    def test_fully_lazy_coin_flipping(self):
        records = simulate_annotator_population(
            LATENT, 0.9, 0.0, frac_lazy=1.0, q_golden=8, q_nongolden=200,
            n_annotators=50, seed=22)
        acc = np.mean([r.nongolden_accuracy for r in records])
        assert abs(acc - 0.5) < 4 * math.sqrt(0.25 / (200 * 50))

    def test_mixed_population_positive_gap(self):
        positives = 0
        for s in range(50):
            records = simulate_annotator_population(
                LATENT, 0.9, 0.2, frac_lazy=0.4, q_golden=7, q_nongolden=7,
                n_annotators=90, seed=s)
            rep = group_gap_analysis(records)[REAL]
            if rep.gap is not None and rep.gap > 0:
                positives += 1
        assert positives >= 49

    def test_deterministic_under_seed(self):
        a = simulate_annotator_population(LATENT, 0.9, 0.1, 0.3, 5, 9, 40, seed=5)
        b = simulate_annotator_population(LATENT, 0.9, 0.1, 0.3, 5, 9, 40, seed=5)
        assert a == b


class TestIngestion:
    def test_csv_roundtrip(self, tmp_path):
        path = tmp_path / "samples.csv"
        path.write_text("id,reward1,reward2,human_label\n"
                        "a,1.5,0.5,1\n"
                        "b,0.1,0.9,\n",
                        encoding="utf-8")
        samples = read_scored_samples(path)
        assert samples[0] == ScoredSample("a", 1.5, 0.5, 1)
        assert samples[1].human_label is None

    def test_jsonl_roundtrip(self, tmp_path):
        path = tmp_path / "samples.jsonl"
        rows = [{"id": "a", "reward1": 2.0, "reward2": 0.0, "human_label": 1},
                {"id": "b", "reward1": 0.0, "reward2": 0.5}]
        path.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")
        samples = read_scored_samples(path)
        assert samples[0].human_label == 1
        assert samples[1].human_label is None

    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,reward1,human_label\na,1.0,1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="reward2"):
            read_scored_samples(path)

    def test_bad_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,reward1,reward2,human_label\n"
                        "a,1.0,0.0,1\n"
                        "b,x,0.0,1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="line 3"):
            read_scored_samples(path)

    def test_annotator_records_csv(self, tmp_path):
        path = tmp_path / "records.csv"
        path.write_text(
            "annotator_id,condition,golden_correct,golden_total,"
            "nongolden_correct,nongolden_total\n"
            "a,REAL,2,2,6,7\n"
            "b,INSTRUCTED,1,2,5,7\n", encoding="utf-8")
        records = read_annotator_records(path)
        assert records[0].all_golden_correct
        assert not records[1].all_golden_correct

    def test_annotator_bad_line_reported(self, tmp_path):
        path = tmp_path / "records.csv"
        path.write_text(
            "annotator_id,condition,golden_correct,golden_total,"
            "nongolden_correct,nongolden_total\n"
            "a,REAL,5,2,6,7\n", encoding="utf-8")
        with pytest.raises(ValueError, match="line 2"):
            read_annotator_records(path)
