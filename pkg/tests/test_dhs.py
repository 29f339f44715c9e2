import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scenemem.dhs import (EnvInstance, EnvProbs, NoiseSpec, SamplingError, SceneDims, apply_class_noise,
                          apply_instance_noise, evolve, make_env, sample_scene)
from scenemem.priors import parse_priors

from conftest import NO_NOISE


def kitchen_dims(*furniture, objects=1):
    return SceneDims(rooms=("kitchen",), objects_per_furniture=objects, furniture_plan={"kitchen": furniture})


class TestClassNoise:
    def test_identity_noise_keeps_priors(self, priors):
        assert apply_class_noise(priors, NO_NOISE, 3) == EnvProbs.from_priors(priors)

    def test_single_survivor_gets_everything(self, tiny_priors):
        spec = NoiseSpec(zero_prob=0.5, scale_limit=0.25)
        hits = 0
        for seed in range(200):
            ep = apply_class_noise(tiny_priors, spec, seed)
            cup = {k: v for k, v in ep.furniture_object.items() if k[2] == "cup"}
            nonzero = [v for v in cup.values() if v > 0]
            if len(nonzero) == 1 and len(cup) == 2:
                assert nonzero[0] == pytest.approx(1.0)
                hits += 1
        assert hits > 0

    def test_groups_stay_normalised(self, priors):
        ep = apply_class_noise(priors, NoiseSpec(), 11)
        totals = {}
        for (room, _, obj, _), v in ep.furniture_object.items():
            totals[(room, obj)] = totals.get((room, obj), 0.0) + v
        assert all(t == pytest.approx(1.0, abs=1e-9) for t in totals.values())

    def test_deterministic(self, priors):
        assert apply_class_noise(priors, NoiseSpec(), 4) == apply_class_noise(priors, NoiseSpec(), 4)


class TestSceneSampling:
    def test_default_composition(self, priors):
        sg = make_env(priors, seed=0).scene
        assert (len(sg.rooms()), len(sg.furniture()), len(sg.objects())) == (4, 32, 192)

    def test_minimal_chain(self, tiny_priors):
        sg = sample_scene(tiny_priors, EnvProbs.from_priors(tiny_priors), kitchen_dims("shelf"), seed=1)
        assert sorted(n.node_type for n in sg.nodes.values()) == ["floor", "furniture", "house", "object", "room"]
        sg.check_tree()

    def test_same_seed_same_scene(self, priors):
        a = make_env(priors, seed=9).scene
        b = make_env(priors, seed=9).scene
        assert a.to_dict() == b.to_dict()
        assert [n.description for n in a.nodes.values()] == [n.description for n in b.nodes.values()]

    def test_overfull_plan_fails(self, tiny_priors):
        with pytest.raises(SamplingError):
            sample_scene(tiny_priors, EnvProbs.from_priors(tiny_priors), kitchen_dims("shelf", objects=40), 0)

    def test_unknown_room(self, tiny_priors):
        with pytest.raises(SamplingError, match="garage"):
            sample_scene(tiny_priors, EnvProbs.from_priors(tiny_priors), SceneDims(rooms=("garage",)), 0)


def _brute_force_dynamics(tiny_priors, scene, obj_class):
    """Class mass split evenly over instances of each furniture class, then normalised."""
    count = {}
    for f in scene.furniture():
        count[scene.nodes[f].class_label] = count.get(scene.nodes[f].class_label, 0) + 1
    raw = {}
    for (_, furn, obj, rel), pr in tiny_priors.furniture_object.items():
        if obj != obj_class:
            continue
        for f in scene.furniture():
            if scene.nodes[f].class_label == furn:
                raw[(f, rel)] = pr / count[furn]
    total = sum(raw.values())
    return {k: v / total for k, v in raw.items() if v > 0}


class TestInstanceNoise:
    def test_identity_one_instance_per_class(self, tiny_priors):
        ep = EnvProbs.from_priors(tiny_priors)
        sg = sample_scene(tiny_priors, ep, kitchen_dims("shelf", "cabinet", objects=2), 3)
        dyn = apply_instance_noise(ep, sg, NO_NOISE, 0)
        for o in sg.objects():
            want = _brute_force_dynamics(tiny_priors, sg, sg.nodes[o].class_label)
            assert dyn[o] == pytest.approx(want)

    def test_two_shelves_split_class_mass(self, tiny_priors):
        ep = EnvProbs.from_priors(tiny_priors)
        sg = sample_scene(tiny_priors, ep, kitchen_dims("shelf", "shelf", "cabinet", objects=2), 3)
        dyn = apply_instance_noise(ep, sg, NO_NOISE, 0)
        cup = next(o for o in sg.objects() if sg.nodes[o].class_label == "cup")
        shelves = [f for f in sg.furniture() if sg.nodes[f].class_label == "shelf"]
        assert [dyn[cup][(f, "onTop")] for f in shelves] == pytest.approx([0.4, 0.4])
        assert dyn[cup] == pytest.approx(_brute_force_dynamics(tiny_priors, sg, "cup"))

    def test_deterministic(self, priors, env):
        again = apply_instance_noise(env.env_probs, env.scene, env.noise, env.dynamics_seed)
        assert again == env.dynamics


class TestEvolve:
    def test_only_the_mobile_object_moves(self, tiny_doc):
        for o in tiny_doc["objects"]:
            o["move_frequency"] = 0.5 if o["label"] == "cup" else 0.0
            if o["label"] == "cup":
                o["max_count"] = 1
        p = parse_priors(tiny_doc)
        env = make_env(p, NO_NOISE, kitchen_dims("shelf", "cabinet", objects=3), seed=2)
        cup = next(o for o in env.scene.objects() if env.scene.nodes[o].class_label == "cup")
        start = {o: env.scene.location_of(o) for o in env.scene.objects()}
        moved = set()
        for _ in range(60):
            env = evolve(env)
            moved |= env.last_moved
            for o in env.scene.objects():
                if o != cup:
                    assert env.scene.location_of(o) == start[o]
        assert moved == {cup}

    def test_count_bounds(self, priors):
        env = make_env(priors, seed=3)
        assert (env.min_objects, env.max_objects) == (math.ceil(0.95 * 192), math.floor(1.05 * 192)) == (183, 201)
        for _ in range(300):
            env = evolve(env)
            assert 183 <= env.scene.count_objects() <= 201

    def test_static_nodes_keep_node_set(self, priors):
        env = make_env(priors, seed=4, dynamic_nodes=False)
        ids = set(env.scene.nodes)
        for _ in range(100):
            env = evolve(env)
        assert set(env.scene.nodes) == ids

    def test_input_untouched(self, env):
        before = env.to_json()
        evolve(env)
        assert env.to_json() == before

    @settings(max_examples=15, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_tree_invariant_holds(self, seed):
        from scenemem.priors import load_priors
        env = make_env(load_priors(), seed=seed)
        for _ in range(5):
            env = evolve(env)
            env.scene.check_tree()
            assert len(env.last_moved) <= env.last_move_draws


class TestEnvironments:
    def test_distinct_across_seeds(self, priors):
        sigs = {repr(make_env(priors, seed=s).scene.to_dict()) for s in range(100)}
        assert len(sigs) == 100

    def test_same_seed_bit_identical(self, priors):
        assert make_env(priors, seed=12).to_json() == make_env(priors, seed=12).to_json()

    def test_zero_noise_shares_priors(self, priors):
        envs = [make_env(priors, NO_NOISE, seed=s) for s in range(3)]
        assert all(e.env_probs == EnvProbs.from_priors(priors) for e in envs)

    def test_snapshot_roundtrip(self, priors, env):
        env = evolve(evolve(env))
        back = EnvInstance.from_json(env.to_json(), priors)
        assert back.to_json() == env.to_json()
        assert evolve(back).to_json() == evolve(env).to_json()

    def test_move_probability_bounded(self, env):
        probs = np.array([env.move_probability(o) for o in env.scene.objects()])
        assert np.all((probs >= 0) & (probs <= 1))
