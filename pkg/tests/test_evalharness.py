import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scenemem.dhs import SceneDims, evolve, make_env
from scenemem.evalharness import (HeuristicScorer, TaskConfig, aggregate, collect_dataset, collect_records,
                                  find_object_episode, metrics_csv, ndcg, paired_gap, read_dataset, run_task,
                                  run_traces, sample_query, smooth, write_dataset)
from scenemem.policies import PolicyParams
from scenemem.priors import parse_priors
from scenemem.scenegraph import true_locations
from scenemem.sgm import SceneGraphMemory

from conftest import NO_NOISE, TINY_DOC

QUICK = TaskConfig(n_envs=3, steps_per_env=8, seed=1)


class TestAggregate:
    def test_identical_traces(self):
        s = aggregate([[0.2, 0.4, 0.6]] * 4)
        assert s.std == 0.0 and np.all(s.step_std == 0)

    def test_zero_and_one(self):
        s = aggregate([[0.0] * 5, [1.0] * 5])
        assert (s.mean, s.std) == (0.5, 0.5)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.floats(0, 1), min_size=4, max_size=4), min_size=2, max_size=8), st.randoms())
    def test_permutation_invariant(self, runs, rnd):
        shuffled = list(runs)
        rnd.shuffle(shuffled)
        a, b = aggregate(runs), aggregate(shuffled)
        assert a.mean == pytest.approx(b.mean) and a.std == pytest.approx(b.std)
        np.testing.assert_allclose(a.step_mean, b.step_mean)

    def test_smoothing_window(self):
        x = np.arange(1, 21, dtype=float)
        s = smooth(x, 10)
        assert s[0] == 1.0 and s[19] == pytest.approx(np.mean(x[10:]))

    def test_paired_gap(self):
        d, se = paired_gap([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
        assert d == 2.0 and se == pytest.approx(1.0 / math.sqrt(3))


class TestNDCG:
    def test_relevant_first(self):
        assert ndcg([0.9, 0.1, 0.3, 0.2], [1, 0, 0, 0]) == 1.0

    def test_relevant_second_of_two(self):
        assert ndcg([0.9, 0.1], [0, 1]) == pytest.approx(1 / math.log2(3))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=10))
    def test_all_relevant(self, scores):
        assert ndcg(scores, [1] * len(scores)) == pytest.approx(1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.booleans(), min_size=1, max_size=10).filter(any))
    def test_exact_relevance_scores_are_ideal(self, rel):
        assert ndcg([float(r) for r in rel], rel) == pytest.approx(1.0)

    def test_nothing_relevant(self):
        assert ndcg([0.1, 0.2], [0, 0]) == 0.0


class TestSampleQuery:
    def test_empty_moved_set_uses_weighted_branch(self, env):
        for s in range(50):
            a = sample_query(env, frozenset(), s, moved_prob=1.0)
            assert a == sample_query(env, frozenset(), s, moved_prob=0.0)

    def test_equal_weights_uniform(self, tiny_doc):
        p = parse_priors(tiny_doc)
        dims = SceneDims(rooms=("kitchen",), objects_per_furniture=4, furniture_plan={"kitchen": ("shelf", "cabinet")})
        env = make_env(p, NO_NOISE, dims, seed=1)
        descs = [env.scene.nodes[o].description for o in env.scene.objects()]
        draws = [sample_query(env, frozenset(), s) for s in range(6000)]
        for d in set(descs):
            share = descs.count(d) / len(descs)
            got = draws.count(d) / len(draws)
            assert abs(got - share) < 3 * math.sqrt(share * (1 - share) / len(draws)) + 1e-9

    def test_heavy_object_tenfold(self, tiny_doc):
        for o in tiny_doc["objects"]:
            o["move_frequency"] = 1.0 if o["label"] == "cup" else 0.1
            o["max_count"] = 1 if o["label"] == "cup" else 8
            o["adjective_categories"] = []
        p = parse_priors(tiny_doc)
        dims = SceneDims(rooms=("kitchen",), objects_per_furniture=2, furniture_plan={"kitchen": ("shelf", "cabinet")})
        env = make_env(p, NO_NOISE, dims, seed=2)
        labels = [env.scene.nodes[o].class_label for o in env.scene.objects()]
        assert labels.count("cup") == 1
        n = 10_000
        cups = sum(sample_query(env, frozenset(), s) == "cup" for s in range(n))
        peers = labels.count("plate")
        p_cup = 10 / (10 + peers)
        assert abs(cups - n * p_cup) < 3 * math.sqrt(n * p_cup * (1 - p_cup))
        ratio = cups / ((n - cups) / peers)
        assert 8.5 < ratio < 11.5

    def test_moved_branch(self, env):
        env = evolve(env)
        moved = {env.scene.nodes[o].description for o in env.last_moved}
        assert moved
        assert all(sample_query(env, env.last_moved, s, moved_prob=1.0) in moved for s in range(30))


def six_shelves():
    p = parse_priors(TINY_DOC)
    dims = SceneDims(rooms=("kitchen",), objects_per_furniture=1, furniture_plan={"kitchen": ("shelf",) * 6})
    return p, make_env(p, NO_NOISE, dims, seed=0)


class TestFindObject:
    def test_first_choice_hit_is_one_action(self, env):
        m = SceneGraphMemory(env.priors)
        m.seed_structure(env.scene)
        o = env.scene.objects()[0]
        desc = env.scene.nodes[o].description
        cheat = HeuristicScorer("oracle", PolicyParams(oracle_cheat=True))
        assert find_object_episode(env, m, cheat, desc, 0, 0.25) == (True, 1)

    def test_random_expected_actions(self):
        p, env = six_shelves()
        descs = [env.scene.nodes[o].description for o in env.scene.objects()]
        desc = next(d for d in descs if len(true_locations(env.scene, d)) == 1)
        actions = []
        for s in range(3000):
            m = SceneGraphMemory(p)
            m.seed_structure(env.scene)
            ok, a = find_object_episode(env, m, HeuristicScorer("random"), desc, s, 0.25)
            assert ok
            actions.append(a)
        c = 6
        assert len(m.candidate_edges(desc)) == c
        var = (c * c - 1) / 12
        assert abs(np.mean(actions) - (c + 1) / 2) < 3 * math.sqrt(var / len(actions))

    def test_cap_reports_budget_plus_one(self):
        p, env = six_shelves()
        desc = env.scene.nodes[env.scene.objects()[0]].description
        results = set()
        for s in range(40):
            m = SceneGraphMemory(p)
            m.seed_structure(env.scene)
            results.add(find_object_episode(env, m, HeuristicScorer("random"), desc, s, 0.25, max_actions=2))
        assert results <= {(True, 1), (True, 2), (False, 3)} and (False, 3) in results

    def test_uncapped_always_terminates(self, priors):
        cfg = replace(QUICK, task="find_object", policy="random")
        for trace in run_traces(cfg, priors, "random"):
            assert all(1 <= a <= 32 for a in trace)


class TestRunners:
    def test_cheating_oracle_is_perfect(self, priors):
        s = run_task(QUICK, priors, HeuristicScorer("oracle", PolicyParams(oracle_cheat=True)))
        assert s.mean == 1.0

    def test_deterministic(self, priors):
        a = metrics_csv(run_task(QUICK, priors, "bayesian"))
        assert a == metrics_csv(run_task(QUICK, priors, "bayesian"))

    def test_workers_match_serial(self, priors):
        assert run_traces(QUICK, priors, "frequentist", workers=2) == run_traces(QUICK, priors, "frequentist")

    def test_metrics_csv_layout(self, priors):
        lines = metrics_csv(run_task(QUICK, priors, "priors")).splitlines()
        assert lines[0] == "step,mean,std,smoothed_mean"
        assert len(lines) == 1 + 8 + 1 + 3
        assert lines[-1] == "summary,envs,3"

    @pytest.mark.parametrize("task", ["relative_likelihood", "find_object"])
    def test_other_tasks_run(self, priors, task):
        s = run_task(replace(QUICK, task=task, n_envs=2, steps_per_env=4), priors, "bayesian")
        assert len(s.step_mean) == 4

    def test_bad_config(self):
        with pytest.raises(ValueError):
            TaskConfig(task="teleport")
        with pytest.raises(ValueError):
            TaskConfig(detection_dropout=1.5)

    def test_random_ndcg_stationary(self, priors):
        cfg = TaskConfig(task="relative_likelihood", n_envs=12, steps_per_env=30, seed=8, queries_per_step=4)
        traces = np.array(run_traces(cfg, priors, "random"))
        d, se = paired_gap(traces[:, 15:].mean(axis=1), traces[:, :15].mean(axis=1))
        assert abs(d) < 3 * se + 1e-9

    def test_adaptive_accuracy_non_decreasing(self, priors):
        cfg = TaskConfig(n_envs=50, steps_per_env=50, seed=21, dynamic_nodes=False)
        traces = np.array(run_traces(cfg, priors, "bayesian"))
        d, se = paired_gap(traces[:, 25:].mean(axis=1), traces[:, :25].mean(axis=1))
        assert d > -2 * se


class TestDataset:
    CFG = TaskConfig(n_envs=2, steps_per_env=5, seed=4)

    def test_record_count_and_labels(self, priors):
        records = collect_records(self.CFG, priors)
        assert len(records) == 10
        for r in records:
            m = SceneGraphMemory.from_dict(r["memory"], priors)
            (q,) = r["query_ids"]
            cands = m.candidate_edges(q)
            assert cands and set(m.labels) == set(cands)

    def test_labels_match_ground_truth(self, priors):
        for r in collect_records(self.CFG, priors):
            env = make_env(priors, self.CFG.noise, self.CFG.dims, self.CFG.env_seed(r["env"]))
            while env.t < r["t"]:
                env = evolve(env)
            m = SceneGraphMemory.from_dict(r["memory"], priors)
            here = true_locations(env.scene, r["query_ids"][0])
            assert all(v == (k[0] in here) for k, v in m.labels.items())

    def test_file_roundtrip(self, priors, tmp_path):
        path = collect_dataset(self.CFG, priors, "bayesian", tmp_path / "d.jsonl.gz")
        header, records = read_dataset(path)
        assert header["records"] == 10
        assert records == collect_records(self.CFG, priors)
        again = write_dataset(records, tmp_path / "e.jsonl.gz", header["meta"])
        assert again.read_bytes() == path.read_bytes()

    def test_missing_file_named(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nothere"):
            read_dataset(tmp_path / "nothere.gz")


class TestFindObjectOrdering:
    def test_reduced_scale_ordering(self, priors):
        cfg = TaskConfig(task="find_object", n_envs=30, steps_per_env=10, seed=0)
        means = {k: np.array(run_traces(cfg, priors, k)).mean(axis=1)
                 for k in ("oracle", "bayesian", "frequentist", "random")}
        # fewer actions is better; oracle must not be significantly worse than anyone
        for other in ("bayesian", "frequentist", "random"):
            d, se = paired_gap(means[other], means["oracle"])
            assert d > -2 * se, other
        for better, worse in (("bayesian", "frequentist"), ("frequentist", "random")):
            d, se = paired_gap(means[worse], means[better])
            assert d > 2 * se, (better, worse)
