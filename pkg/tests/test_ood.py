import random

import numpy as np
import pytest
import torch

from stance.corpus import REGISTRY
from stance.errors import StanceError
from stance.labelspace import GROUPS, build_label_space
from stance.model import HashEncoder, StanceMoLE, label_table_from_encoder
from stance.ood import (
    OODPrediction,
    hard_map,
    predict_in_domain,
    predict_ood,
    read_prediction_records,
    soft_map,
    weak_map,
    write_predictions,
)

import synth
from conftest import make_example


@pytest.fixture(scope="module")
def full_space():
    return build_label_space(REGISTRY)


@pytest.fixture(scope="module")
def suite_space():
    return synth.suite_space()


@pytest.fixture(scope="module")
def name_table():
    return synth.name_table()


def zeroed_model(space, seed=0):
    torch.manual_seed(seed)
    encoder = HashEncoder(hidden_size=16, num_layers=1, num_heads=2, max_length=16, vocab_size=211)
    model = StanceMoLE(encoder, space, num_heads=2)
    with torch.no_grad():
        model.label_matrix.zero_()
    return model


class TestPredictInDomain:
    def test_uniform_tie_takes_the_lowest_index(self, suite_space):
        model = zeroed_model(suite_space)
        examples = [make_example("syn_a", "test", i, "approve", context="blah blah") for i in range(3)]
        predictions = predict_in_domain(examples, model, suite_space)
        first = suite_space.labels[int(np.flatnonzero(suite_space.union_mask(suite_space.datasets))[0])]
        assert all(pred is first for pred in predictions)

    def test_restrict_to_narrows_the_mask(self, suite_space):
        model = zeroed_model(suite_space)
        examples = [make_example("syn_a", "test", 0, "approve", context="words")]
        predictions = predict_in_domain(examples, model, suite_space, restrict_to="syn_c")
        assert predictions[0].dataset == "syn_c"

    def test_one_prediction_per_example_across_batches(self, suite_space):
        model = zeroed_model(suite_space)
        examples = [
            make_example("syn_a", "test", i, "approve", context=f"word{i}") for i in range(7)
        ]
        predictions = predict_in_domain(examples, model, suite_space, batch_size=3)
        assert len(predictions) == 7

    def test_dataset_subset_mask(self, suite_space):
        model = zeroed_model(suite_space)
        examples = [make_example("syn_a", "test", 0, "approve", context="words")]
        predictions = predict_in_domain(examples, model, suite_space, datasets=["syn_b", "syn_c"])
        assert predictions[0].dataset in ("syn_b", "syn_c")


class TestHardMap:
    def test_direct_hit(self, full_space):
        held_out = full_space.inventory("perspectrum")
        label = hard_map("positive", held_out, full_space)
        assert label.qualified() == "perspectrum/support"

    def test_neighborhood_walk(self, full_space):
        # perspectrum has no "discuss" label; the walk tries neutral and
        # other first (also empty) and lands on negative.
        held_out = full_space.inventory("perspectrum")
        label = hard_map("discuss", held_out, full_space)
        assert label.qualified() == "perspectrum/undermine"

    def test_several_candidates_keep_inventory_order(self, suite_space):
        held_out = suite_space.inventory("syn_d")
        label = hard_map("positive", held_out, suite_space)
        assert label.name == "approval"

    def test_unknown_group_rejected(self, full_space):
        with pytest.raises(StanceError):
            hard_map("agreeable", full_space.inventory("perspectrum"), full_space)

    def test_empty_inventory_rejected(self, full_space):
        with pytest.raises(StanceError):
            hard_map("positive", [], full_space)

    def test_closure_fuzz(self, full_space):
        rng = random.Random(53)
        datasets = [d.name for d in REGISTRY]
        for _ in range(100):
            held_out = full_space.inventory(rng.choice(datasets))
            group = rng.choice(GROUPS)
            label = hard_map(group, held_out, full_space)
            assert label in held_out


class TestSoftMap:
    def test_flavor_axis_decides(self, suite_space, name_table):
        # "applaud" carries the praise flavor, so between the two positive
        # names of syn_d it lands on "praising" rather than "approval".
        predicted = suite_space.label_of("syn_e", "applaud")
        held_out = suite_space.inventory("syn_d")
        mapped, score = soft_map(predicted, held_out, name_table)
        assert mapped.name == "praising"
        assert score > 0

    def test_matches_brute_force(self, suite_space, name_table):
        from stance.embeddings import cosine, embed_label

        rng = random.Random(59)
        all_labels = list(suite_space.labels)
        for _ in range(50):
            predicted = rng.choice(all_labels)
            held_out_name = rng.choice(list(suite_space.datasets))
            held_out = suite_space.inventory(held_out_name)
            mapped, score = soft_map(predicted, held_out, name_table)
            query = embed_label(name_table, predicted.name)
            scores = [cosine(query, embed_label(name_table, c.name)) for c in held_out]
            assert score == pytest.approx(max(scores))
            assert mapped is held_out[int(np.argmax(scores))]

    def test_empty_inventory_rejected(self, suite_space, name_table):
        with pytest.raises(StanceError):
            soft_map(suite_space.labels[0], [], name_table)

    def test_multi_word_names_average(self, suite_space, name_table):
        # "off topic" is two words; its mean vector still lands in the
        # unrelated flavor among syn_e's candidates.
        predicted = suite_space.label_of("syn_f", "off topic")
        held_out = suite_space.inventory("syn_e")
        mapped, _ = soft_map(predicted, held_out, name_table)
        assert mapped.name == "wander"


class TestWeakMap:
    def test_singleton_group_skips_similarity(self, full_space):
        # No table is consulted for a lone candidate, so passing None
        # proves the similarity short-circuit.
        predicted = full_space.label_of("fnc1", "agree")
        held_out = full_space.inventory("perspectrum")
        mapped, score = weak_map(predicted, held_out, full_space, table=None)
        assert mapped.qualified() == "perspectrum/support"
        assert score is None

    def test_group_constrains_the_candidates(self, suite_space, name_table):
        # "uphold" is approval-flavored, but inside the positive group of
        # syn_d the praise-flavored "applaud" of syn_e is not a candidate.
        predicted = suite_space.label_of("syn_f", "uphold")
        held_out = suite_space.inventory("syn_d")
        mapped, score = weak_map(predicted, held_out, suite_space, name_table)
        assert mapped.name == "approval"
        assert score is not None

    def test_similarity_decides_among_group_mates(self, suite_space, name_table):
        predicted = suite_space.label_of("syn_e", "applaud")
        held_out = suite_space.inventory("syn_d")
        mapped, score = weak_map(predicted, held_out, suite_space, name_table)
        assert mapped.name == "praising"
        assert score is not None

    def test_walks_when_group_is_unpopulated(self, suite_space, name_table):
        # syn_g has no discuss label; the walk leaves the group before any
        # similarity comparison.
        predicted = suite_space.label_of("syn_c", "probes")
        held_out = suite_space.inventory("syn_g")
        mapped, _ = weak_map(predicted, held_out, suite_space, name_table)
        assert mapped.dataset == "syn_g"

    def test_closure_fuzz(self, suite_space, name_table):
        rng = random.Random(61)
        all_labels = list(suite_space.labels)
        for _ in range(100):
            predicted = rng.choice(all_labels)
            held_out = suite_space.inventory(rng.choice(list(suite_space.datasets)))
            mapped, _ = weak_map(predicted, held_out, suite_space, name_table)
            assert mapped in held_out


@pytest.fixture(scope="module")
def fine_model(suite_space):
    return zeroed_model(suite_space)


class TestPredictOOD:
    def _examples(self, n=4):
        return [
            make_example("syn_d", "test", i, "approval", context=f"aprvsig words {i}")
            for i in range(n)
        ]

    def test_weak_and_soft_land_in_the_held_out_inventory(
        self, suite_space, fine_model, name_table
    ):
        train_space = build_label_space(
            [d for d in synth.suite_descriptors() if d.name != "syn_d"],
            group_table=synth.suite_group_table(),
        )
        model = zeroed_model(train_space)
        held_out_labels = set(suite_space.inventory("syn_d"))
        for strategy in ("weak", "soft"):
            predictions = predict_ood(
                self._examples(),
                model,
                train_space,
                suite_space,
                held_out="syn_d",
                strategy=strategy,
                table=name_table,
            )
            assert len(predictions) == 4
            assert all(p.mapped in held_out_labels for p in predictions)
            assert all(p.strategy == strategy for p in predictions)
            assert all(p.in_domain.dataset != "syn_d" for p in predictions)

    def test_weak_without_table_rejected(self, suite_space, fine_model):
        with pytest.raises(StanceError, match="embeddings"):
            predict_ood(
                self._examples(1),
                fine_model,
                suite_space,
                suite_space,
                held_out="syn_d",
                strategy="weak",
            )

    def test_unknown_strategy_rejected(self, suite_space, fine_model, name_table):
        with pytest.raises(StanceError, match="strategy"):
            predict_ood(
                self._examples(1),
                fine_model,
                suite_space,
                suite_space,
                held_out="syn_d",
                strategy="fuzzy",
                table=name_table,
            )

    def test_hard_requires_a_group_labeled_model(self, suite_space, fine_model):
        with pytest.raises(StanceError, match="group"):
            predict_ood(
                self._examples(1),
                fine_model,
                suite_space,
                suite_space,
                held_out="syn_d",
                strategy="hard",
            )

    def test_hard_with_a_group_labeled_model(self, suite_space):
        from stance.labelspace import meta_relabel

        corpus = synth.build_suite(train_n=4, dev_n=2, test_n=2)
        without = corpus.subset([n for n in corpus.datasets if n != "syn_d"])
        meta = meta_relabel(without, suite_space)
        meta_space = build_label_space(
            list(meta.descriptors.values()),
            group_table={
                (name, group): group
                for name in meta.datasets
                for group in meta.descriptor(name).labels
            },
        )
        model = zeroed_model(meta_space)
        predictions = predict_ood(
            self._examples(3),
            model,
            meta_space,
            suite_space,
            held_out="syn_d",
            strategy="hard",
        )
        held_out_labels = set(suite_space.inventory("syn_d"))
        assert all(p.mapped in held_out_labels for p in predictions)
        assert all(p.score is None for p in predictions)
        assert all(p.in_domain.name in GROUPS for p in predictions)

    def test_contextual_table_from_encoder_closes_the_loop(self, suite_space):
        train_space = build_label_space(
            [d for d in synth.suite_descriptors() if d.name != "syn_d"],
            group_table=synth.suite_group_table(),
        )
        model = zeroed_model(train_space)
        table = label_table_from_encoder(model.encoder)
        predictions = predict_ood(
            self._examples(2),
            model,
            train_space,
            suite_space,
            held_out="syn_d",
            strategy="soft",
            table=table,
        )
        held_out_labels = set(suite_space.inventory("syn_d"))
        assert all(p.mapped in held_out_labels for p in predictions)


class TestPredictionFiles:
    def test_round_trip(self, suite_space, tmp_path):
        predictions = [
            OODPrediction(
                example_id="syn_d-test-0",
                in_domain=suite_space.label_of("syn_e", "applaud"),
                mapped=suite_space.label_of("syn_d", "praising"),
                strategy="weak",
                score=0.75,
            ),
            OODPrediction(
                example_id="syn_d-test-1",
                in_domain=suite_space.label_of("syn_a", "approve"),
                mapped=suite_space.label_of("syn_d", "approval"),
                strategy="weak",
                score=None,
            ),
        ]
        path = tmp_path / "predictions.jsonl"
        write_predictions(predictions, path)
        records = read_prediction_records(path)
        assert records == [
            {
                "id": "syn_d-test-0",
                "in_domain_label": "syn_e/applaud",
                "mapped_label": "praising",
                "strategy": "weak",
                "score": 0.75,
            },
            {
                "id": "syn_d-test-1",
                "in_domain_label": "syn_a/approve",
                "mapped_label": "approval",
                "strategy": "weak",
                "score": None,
            },
        ]
