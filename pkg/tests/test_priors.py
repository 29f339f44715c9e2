import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from scenemem.priors import (RELATIONS, PriorsError, load_priors, parse_priors, prior_prob,
                             top_k_prior_locations)


class TestLoad:
    def test_bundled_counts(self, priors):
        assert (len(priors.rooms), len(priors.furniture), len(priors.objects)) == (4, 22, 108)

    def test_out_of_range_probability_rejected(self, tiny_doc):
        tiny_doc["furniture_object_edges"][0]["prob"] = 1.3
        with pytest.raises(PriorsError, match="outside"):
            parse_priors(tiny_doc)

    def test_near_one_sum_renormalised(self, tiny_doc):
        tiny_doc["room_furniture_edges"][0]["prob"] = 0.499999
        p = parse_priors(tiny_doc)
        assert math.fsum(p.room_furniture.values()) == pytest.approx(1.0, abs=1e-15)

    def test_bad_sum_rejected(self, tiny_doc):
        tiny_doc["room_furniture_edges"][0]["prob"] = 0.4
        with pytest.raises(PriorsError, match="sum"):
            parse_priors(tiny_doc)

    def test_dangling_label(self, tiny_doc):
        tiny_doc["furniture_object_edges"][0]["object"] = "teapot"
        with pytest.raises(PriorsError, match="dangling"):
            parse_priors(tiny_doc)

    def test_missing_format(self, tiny_doc):
        del tiny_doc["priors_format"]
        with pytest.raises(PriorsError):
            parse_priors(tiny_doc)

    def test_unreadable_path_names_file(self, tmp_path):
        with pytest.raises(PriorsError, match="nope.json"):
            load_priors(tmp_path / "nope.json")

    def test_roundtrip_through_file(self, tmp_path, tiny_doc):
        path = tmp_path / "p.json"
        path.write_text(json.dumps(tiny_doc))
        assert load_priors(path) == parse_priors(tiny_doc)

    def test_sparse_filter_drops_low_degree_furniture(self, tiny_doc):
        tiny_doc["furniture_object_edges"].append(
            {"room": "kitchen", "furniture": "shelf", "object": "plate", "relation": "under", "prob": 0.0})
        p = parse_priors(tiny_doc, filter_sparse_furniture=True)
        assert {f for (_, f) in p.room_furniture} == {"shelf"}
        assert p.room_furniture[("kitchen", "shelf")] == pytest.approx(1.0)


class TestLookup:
    def test_existing_tuple(self, tiny_priors):
        assert prior_prob(tiny_priors, "kitchen", "shelf", "cup", "onTop") == pytest.approx(0.8)

    def test_absent_tuple_is_zero(self, tiny_priors):
        assert prior_prob(tiny_priors, "kitchen", "shelf", "cup", "under") == 0.0

    def test_unknown_label_raises(self, tiny_priors):
        with pytest.raises(KeyError):
            prior_prob(tiny_priors, "garage", "shelf", "cup", "in")

    def test_normalised_per_room_object(self, priors):
        for room in priors.rooms:
            for obj in priors.objects:
                total = math.fsum(prior_prob(priors, room, f, obj, r)
                                  for f in priors.furniture for r in RELATIONS)
                assert total == pytest.approx(1.0, abs=1e-9) or total == 0.0

    def test_top1_is_argmax(self, tiny_priors):
        assert top_k_prior_locations(tiny_priors, "plate", 1) == [("kitchen", "cabinet", "in", pytest.approx(0.7))]

    def test_k_beyond_count_truncates(self, tiny_priors):
        assert len(top_k_prior_locations(tiny_priors, "cup", 10)) == 2

    def test_ties_lexicographic(self, tiny_doc):
        for e in tiny_doc["furniture_object_edges"]:
            if e["object"] == "cup":
                e["prob"] = 0.5
        out = top_k_prior_locations(parse_priors(tiny_doc), "cup", 2)
        assert [(r, f, rel) for r, f, rel, _ in out] == [("kitchen", "cabinet", "in"), ("kitchen", "shelf", "onTop")]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=1, max_value=40), st.integers(min_value=0, max_value=107))
    def test_top_k_sorted(self, k, i):
        p = load_priors()
        out = top_k_prior_locations(p, p.objects[i], k)
        probs = [t[3] for t in out]
        assert probs == sorted(probs, reverse=True)
        assert len(out) == min(k, len(p.object_locations(p.objects[i])))

    def test_pickles(self, priors):
        import pickle
        assert pickle.loads(pickle.dumps(priors)) == priors
