import json
import math
import random

import numpy as np
import pytest

from stance.corpus import Corpus, DatasetDescriptor
from stance.errors import StanceError
from stance.evaluation import (
    EvalReport,
    aggregate_report,
    correlate_features,
    dataset_features,
    dataset_scatter_2d,
    macro_f1,
    majority_baseline,
    pearson_correlation,
    random_baseline,
    render_report,
    tfidf_logreg_baseline,
)
from stance.model import HashEncoder

import synth
from conftest import make_example


class TestMacroF1:
    def test_half_right_binary(self):
        score = macro_f1(["a", "b", "a", "b"], ["a", "a", "b", "b"], ["a", "b"])
        assert score == pytest.approx(50.0)

    def test_perfect(self):
        assert macro_f1(["a", "b"], ["a", "b"], ["a", "b"]) == pytest.approx(100.0)

    def test_absent_inventory_label_scores_zero(self):
        # Label "c" never occurs; its F1 of 0 drags the macro average down.
        score = macro_f1(["a", "b"], ["a", "b"], ["a", "b", "c"])
        assert score == pytest.approx(200.0 / 3.0)

    def test_out_of_inventory_prediction_only_hurts(self):
        score = macro_f1(["zzz", "b"], ["a", "b"], ["a", "b"])
        assert score == pytest.approx(50.0)

    def test_errors(self):
        with pytest.raises(StanceError):
            macro_f1(["a"], ["a", "b"], ["a", "b"])
        with pytest.raises(StanceError):
            macro_f1([], [], ["a"])
        with pytest.raises(StanceError):
            macro_f1(["a"], ["a"], [])

    def test_matches_sklearn_fuzz(self):
        from sklearn.metrics import f1_score

        rng = random.Random(67)
        for _ in range(100):
            inventory = [f"l{i}" for i in range(rng.randint(2, 6))]
            n = rng.randint(1, 40)
            gold = [rng.choice(inventory) for _ in range(n)]
            predicted = [rng.choice(inventory) for _ in range(n)]
            ours = macro_f1(predicted, gold, inventory)
            reference = 100.0 * f1_score(
                gold, predicted, labels=inventory, average="macro", zero_division=0
            )
            assert ours == pytest.approx(reference, abs=1e-9)


class TestMajorityBaseline:
    def test_most_frequent_label_wins(self):
        predictions = majority_baseline(["x", "y", "y"], test_size=4, inventory=["x", "y"])
        assert predictions == ["y"] * 4

    def test_tie_takes_inventory_order(self):
        predictions = majority_baseline(["y", "x"], test_size=2, inventory=["x", "y"])
        assert predictions == ["x", "x"]

    def test_balanced_binary_scores_a_third(self):
        gold = ["x", "y"] * 25
        predictions = majority_baseline(gold, test_size=len(gold), inventory=["x", "y"])
        score = macro_f1(predictions, gold, ["x", "y"])
        assert score == pytest.approx(100.0 / 3.0)

    def test_observed_outside_inventory_rejected(self):
        with pytest.raises(StanceError):
            majority_baseline(["zzz"], test_size=1, inventory=["x"])

    def test_empty_observed_rejected(self):
        with pytest.raises(StanceError):
            majority_baseline([], test_size=1, inventory=["x"])


class TestRandomBaseline:
    def test_balanced_binary_hovers_at_fifty(self):
        gold = ["x", "y"] * 5000
        score = random_baseline(gold, ["x", "y"], seed=13, trials=10)
        assert score == pytest.approx(50.0, abs=2.0)

    def test_single_label_inventory_is_perfect(self):
        gold = ["x"] * 20
        assert random_baseline(gold, ["x"], seed=13) == pytest.approx(100.0)

    def test_deterministic_per_seed(self):
        gold = ["x", "y", "z"] * 10
        inventory = ["x", "y", "z"]
        assert random_baseline(gold, inventory, seed=3) == random_baseline(
            gold, inventory, seed=3
        )
        assert random_baseline(gold, inventory, seed=3) != random_baseline(
            gold, inventory, seed=4
        )

    def test_trials_validated(self):
        with pytest.raises(StanceError):
            random_baseline(["x"], ["x"], seed=1, trials=0)


def separable_corpus(train_n=40, test_n=20):
    # Each label has its own giveaway token, so unigrams suffice.
    desc = DatasetDescriptor("alpha", "debates", "topic", "post", ("yes", "no"))
    signature = {"yes": "sunshine", "no": "thunder"}
    examples = {}
    for split, count in (("train", train_n), ("test", test_n)):
        rows = []
        for i in range(count):
            label = ("yes", "no")[i % 2]
            rows.append(
                make_example(
                    "alpha",
                    split,
                    i,
                    label,
                    context=f"plain filler words {signature[label]} more filler",
                )
            )
        examples[("alpha", split)] = rows
    return Corpus([desc], examples)


class TestTfidfBaseline:
    def test_separable_data_is_solved(self):
        corpus = separable_corpus()
        predictions = tfidf_logreg_baseline(corpus, "alpha")
        gold = [ex.label for ex in corpus.examples("alpha", "test")]
        assert macro_f1(predictions, gold, ["yes", "no"]) == pytest.approx(100.0)

    def test_single_class_train_predicts_constantly(self):
        desc = DatasetDescriptor("alpha", "debates", "topic", "post", ("yes", "no"))
        examples = {
            ("alpha", "train"): [
                make_example("alpha", "train", i, "yes", context=f"words {i}") for i in range(5)
            ],
            ("alpha", "test"): [
                make_example("alpha", "test", i, "no", context=f"words {i}") for i in range(3)
            ],
        }
        corpus = Corpus([desc], examples)
        assert tfidf_logreg_baseline(corpus, "alpha") == ["yes", "yes", "yes"]

    def test_empty_train_rejected(self):
        desc = DatasetDescriptor("alpha", "debates", "topic", "post", ("yes",))
        examples = {
            ("alpha", "test"): [make_example("alpha", "test", 0, "yes", context="words")]
        }
        with pytest.raises(StanceError):
            tfidf_logreg_baseline(Corpus([desc], examples), "alpha")

    def test_deterministic(self):
        corpus = separable_corpus()
        assert tfidf_logreg_baseline(corpus, "alpha", seed=3) == tfidf_logreg_baseline(
            corpus, "alpha", seed=3
        )


REFERENCE_ROW = {
    "arc": 63.17,
    "iac1": 38.50,
    "perspectrum": 85.27,
    "poldeb": 50.76,
    "scd": 65.91,
    "emergent": 83.74,
    "fnc1": 75.82,
    "snopes": 75.07,
    "mtsd": 65.08,
    "rumor": 67.24,
    "semeval2016t6": 70.05,
    "semeval2019t7": 57.78,
    "wtwt": 68.37,
    "argmin": 63.73,
    "ibmcs": 79.38,
    "vast": 38.92,
}


class TestReports:
    def test_average_of_the_reference_row(self):
        report = aggregate_report(REFERENCE_ROW)
        assert report.average == pytest.approx(65.55, abs=0.01)

    def test_scores_follow_registry_order(self):
        report = aggregate_report(REFERENCE_ROW)
        names = list(report.scores)
        assert names[0] == "arc"
        assert names.index("fnc1") < names.index("snopes")
        assert set(names) == set(REFERENCE_ROW)

    def test_unknown_datasets_sort_last_alphabetically(self):
        report = aggregate_report({"zeta": 1.0, "arc": 2.0, "beta": 3.0})
        assert list(report.scores) == ["arc", "beta", "zeta"]

    def test_json_round_trip(self):
        report = aggregate_report({"arc": 50.0}, metadata={"split": "test"})
        parsed = json.loads(report.to_json())
        assert parsed == {
            "scores": {"arc": 50.0},
            "average": 50.0,
            "metadata": {"split": "test"},
        }

    def test_render_mentions_every_dataset(self):
        report = aggregate_report({"arc": 50.0, "vast": 25.0})
        text = render_report(report)
        assert "arc" in text and "vast" in text and "average" in text
        assert "37.50" in text

    def test_empty_scores_rejected(self):
        with pytest.raises(StanceError):
            aggregate_report({})


class TestPearson:
    def test_exact_positive_and_negative(self):
        assert pearson_correlation([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
        assert pearson_correlation([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0)

    def test_known_value(self):
        # r = cov / (sx * sy) for x=[0,1,2], y=[0,0,3] is sqrt(3)/2.
        assert pearson_correlation([0, 1, 2], [0, 0, 3]) == pytest.approx(math.sqrt(3) / 2)

    def test_constant_feature_is_nan(self):
        assert math.isnan(pearson_correlation([1, 1, 1], [1, 2, 3]))

    def test_errors(self):
        with pytest.raises(StanceError):
            pearson_correlation([1], [1])
        with pytest.raises(StanceError):
            pearson_correlation([1, 2], [1, 2, 3])

    def test_matches_numpy_fuzz(self):
        rng = np.random.default_rng(71)
        for _ in range(50):
            x = rng.normal(size=8)
            y = rng.normal(size=8)
            assert pearson_correlation(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1])


@pytest.fixture(scope="module")
def suite():
    return synth.build_suite(train_n=12, dev_n=4, test_n=4)


class TestDatasetFeatures:
    def test_sizes_and_one_hots(self, suite):
        features = dataset_features(suite, "syn_a")
        assert features["train_size"] == 12.0
        assert features["dev_size"] == 4.0
        assert features["test_size"] == 4.0
        assert features["num_labels"] == 2.0
        assert features["group_debates"] == 1.0
        assert features["group_news"] == 0.0
        assert 0.0 <= features["target_overlap_pct"] <= 100.0

    def test_same_keys_for_every_dataset(self, suite):
        keys = {name: set(dataset_features(suite, name)) for name in suite.datasets}
        reference = keys["syn_a"]
        assert all(k == reference for k in keys.values())

    def test_correlate_features_picks_up_a_planted_signal(self, suite):
        features = {name: dataset_features(suite, name) for name in suite.datasets}
        scores = {name: features[name]["num_labels"] * 10.0 for name in features}
        correlations = correlate_features(features, scores)
        assert correlations["num_labels"] == pytest.approx(1.0)
        assert math.isnan(correlations["train_size"])

    def test_correlate_needs_two_datasets(self, suite):
        features = {"syn_a": dataset_features(suite, "syn_a")}
        with pytest.raises(StanceError):
            correlate_features(features, {"syn_a": 1.0})


class TestScatter:
    def test_shapes_and_centroids(self):
        corpus = synth.build_suite(train_n=6, dev_n=2, test_n=2)
        encoder = HashEncoder(hidden_size=8, num_layers=1, num_heads=2, max_length=16, vocab_size=101)
        names, points, centroids = dataset_scatter_2d(corpus, encoder, n=40, seed=13)
        assert len(names) == 40
        assert points.shape == (40, 2)
        for name, centroid in centroids.items():
            rows = [i for i, n in enumerate(names) if n == name]
            np.testing.assert_allclose(centroid, points[rows].mean(axis=0))

    def test_deterministic(self):
        corpus = synth.build_suite(train_n=6, dev_n=2, test_n=2)
        encoder = HashEncoder(hidden_size=8, num_layers=1, num_heads=2, max_length=16, vocab_size=101)
        _, first, _ = dataset_scatter_2d(corpus, encoder, n=30, seed=13)
        _, second, _ = dataset_scatter_2d(corpus, encoder, n=30, seed=13)
        np.testing.assert_array_equal(first, second)
