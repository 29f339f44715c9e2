"""Dynamic house simulator: noisy environment probabilities, scene sampling and evolution."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from ._rng import child_seed, rng_for, round_half_up, sample_without_replacement, weighted_choice
from .priors import PriorsGraph
from .scenegraph import SceneGraph, SceneNode

DEFAULT_ROOMS = ("kitchen", "living room", "bedroom", "bathroom")
SNAPSHOT_FORMAT = 1


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    zero_prob: float = 0.25
    scale_limit: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.zero_prob < 1.0:
            raise ValueError("zero_prob must lie in [0, 1)")
        if not 0.0 <= self.scale_limit < 1.0:
            raise ValueError("scale_limit must lie in [0, 1)")

    @property
    def is_identity(self) -> bool:
        return self.zero_prob == 0.0 and self.scale_limit == 0.0


@dataclass(frozen=True)
class SceneDims:
    rooms: tuple[str, ...] = DEFAULT_ROOMS
    furniture_per_room: int = 8
    objects_per_furniture: int = 6
    furniture_plan: Mapping[str, tuple[str, ...]] | None = None
    """Explicit furniture classes per room; overrides ``furniture_per_room``."""


@dataclass(frozen=True)
class EnvProbs:
    room_furniture: Mapping[tuple[str, str], float]
    furniture_object: Mapping[tuple[str, str, str, str], float]
    _by_object: dict = field(default=None, repr=False, compare=False)
    _by_slot: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        by_object: dict = {}
        by_slot: dict = {}
        for (room, furn, obj, rel), p in sorted(self.furniture_object.items()):
            if p > 0:
                by_object.setdefault(obj, {}).setdefault((room, furn), []).append((rel, p))
                by_slot.setdefault((room, furn), []).append((obj, rel, p))
        object.__setattr__(self, "_by_object", by_object)
        object.__setattr__(self, "_by_slot", by_slot)

    def locations(self, obj: str) -> dict[tuple[str, str], list[tuple[str, float]]]:
        """Nonzero (room, furniture) → [(relation, prob)] for an object class."""
        return self._by_object.get(obj, {})

    def slot_objects(self, room: str, furniture: str) -> list[tuple[str, str, float]]:
        return self._by_slot.get((room, furniture), [])

    @classmethod
    def from_priors(cls, p: PriorsGraph) -> "EnvProbs":
        return cls(dict(p.room_furniture), dict(p.furniture_object))


Dynamics = dict  # object id -> {(furniture id, relation): prob}


def _perturb(rng: np.random.Generator, spec: NoiseSpec, value: float) -> float:
    u, v = rng.random(), rng.random()
    if u < spec.zero_prob:
        return 0.0
    return value * (1.0 - spec.scale_limit + 2.0 * spec.scale_limit * v)


def apply_class_noise(p: PriorsGraph, spec: NoiseSpec, seed: int) -> EnvProbs:
    """Sparsify and rescale every furniture-object edge, then renormalise per (room, object)."""
    groups: dict[tuple[str, str], list] = {}
    for key in sorted(p.furniture_object):
        groups.setdefault((key[0], key[2]), []).append(key)
    out: dict = {}
    for keys in groups.values():
        noisy = {k: _perturb(rng_for(seed, "class", *k), spec, p.furniture_object[k]) for k in keys}
        if all(noisy[k] == p.furniture_object[k] for k in keys):
            out.update(noisy)
            continue
        total = math.fsum(noisy.values())
        if total <= 0.0:
            best = min(keys, key=lambda k: (-p.furniture_object[k], k))
            out.update({k: (1.0 if k == best else 0.0) for k in keys})
        else:
            out.update({k: v / total for k, v in noisy.items()})
    return EnvProbs(dict(p.room_furniture), out)


def _describe(p: PriorsGraph, label: str, rng: np.random.Generator) -> tuple[str, ...]:
    cats = p.labels[label].adjective_categories
    if not cats:
        return ()
    k = int(rng.integers(1, len(cats) + 1))
    chosen = sorted(int(i) for i in rng.choice(len(cats), size=k, replace=False))
    return tuple(p.adjective_lexicon[cats[i]][int(rng.integers(len(p.adjective_lexicon[cats[i]])))]
                 for i in chosen)


def sample_scene(p: PriorsGraph, ep: EnvProbs, dims: SceneDims = SceneDims(), seed: int = 0) -> SceneGraph:
    """Sample the initial scene graph: rooms, furniture per room, objects per furniture."""
    sg = SceneGraph()
    sg.add_node(SceneNode(0, "house", "house"))
    sg.add_node(SceneNode(1, "floor", "floor"), parent=0)
    next_id = 2
    counts: dict[str, int] = {}

    room_ids = {}
    for room in dims.rooms:
        if p.labels.get(room) is None or p.labels[room].category != "room":
            raise SamplingError(f"unknown room label {room!r}")
        sg.add_node(SceneNode(next_id, "room", room), parent=1)
        room_ids[room] = next_id
        next_id += 1

    placed: list[tuple[int, str, str]] = []
    for room in dims.rooms:
        rng = rng_for(seed, "furniture", room)
        if dims.furniture_plan is not None:
            classes = list(dims.furniture_plan.get(room, ()))
            for f in classes:
                if f not in p.labels or p.labels[f].category != "furniture":
                    raise SamplingError(f"room {room!r}: unknown furniture label {f!r}")
        else:
            options = sorted(f for (r, f) in ep.room_furniture if r == room and ep.room_furniture[(r, f)] > 0)
            classes = []
            for _ in range(dims.furniture_per_room):
                avail = [f for f in options if counts.get(f, 0) < p.labels[f].max_count]
                weights = [ep.room_furniture[(room, f)] * p.labels[f].sample_prob for f in avail]
                if not avail or sum(weights) <= 0:
                    raise SamplingError(f"room {room!r}: not enough eligible furniture for "
                                        f"{dims.furniture_per_room} items")
                f = avail[weighted_choice(rng, weights)]
                counts[f] = counts.get(f, 0) + 1
                classes.append(f)
        for f in classes:
            fid = next_id
            next_id += 1
            sg.add_node(SceneNode(fid, "furniture", f, _describe(p, f, rng_for(seed, "describe", fid))),
                        parent=room_ids[room])
            placed.append((fid, room, f))

    for fid, room, fclass in placed:
        rng = rng_for(seed, "objects", fid)
        slot = ep.slot_objects(room, fclass)
        mass: dict[str, float] = {}
        for obj, _rel, pr in slot:
            mass[obj] = mass.get(obj, 0.0) + pr
        labels = sorted(mass)
        for _ in range(dims.objects_per_furniture):
            avail = [o for o in labels if counts.get(o, 0) < p.labels[o].max_count]
            weights = [mass[o] * p.labels[o].sample_prob for o in avail]
            if not avail or sum(weights) <= 0:
                raise SamplingError(f"room {room!r}: furniture {fclass!r} cannot host "
                                    f"{dims.objects_per_furniture} objects")
            o = avail[weighted_choice(rng, weights)]
            counts[o] = counts.get(o, 0) + 1
            rels = [(rel, pr) for obj, rel, pr in slot if obj == o]
            rel = rels[weighted_choice(rng, [pr for _, pr in rels])][0]
            oid = next_id
            next_id += 1
            sg.add_node(SceneNode(oid, "object", o, _describe(p, o, rng_for(seed, "describe", oid))),
                        parent=fid, relation=rel)
    return sg


def _furniture_index(scene: SceneGraph) -> list[tuple[int, str, str, int]]:
    """(furniture id, room label, furniture class, instances of that class in the room)."""
    rows = []
    per_slot: dict[tuple[str, str], int] = {}
    for f in scene.furniture():
        room = scene.nodes[scene.room_of(f)].class_label
        key = (room, scene.nodes[f].class_label)
        per_slot[key] = per_slot.get(key, 0) + 1
        rows.append((f, key[0], key[1]))
    return [(f, r, c, per_slot[(r, c)]) for f, r, c in rows]


def location_distribution(ep: EnvProbs, furniture_index, obj_class: str, description: str,
                          spec: NoiseSpec | None, seed: int) -> dict[tuple[int, str], float]:
    """Per-instance distribution over (furniture id, relation).

    Class mass for (room, furniture class, relation) is split evenly across the
    instances of that furniture class in that room, optionally perturbed with
    instance-level noise, then renormalised over the whole house.
    """
    locs = ep.locations(obj_class)
    base: dict[tuple[int, str], float] = {}
    for f, room, fclass, n_inst in furniture_index:
        for rel, pr in locs.get((room, fclass), ()):
            base[(f, rel)] = pr / n_inst
    if not base:
        return {}
    if spec is None or spec.is_identity:
        noisy = dict(base)
    else:
        noisy = {k: _perturb(rng_for(seed, "instance", description, k[0], k[1]), spec, v)
                 for k, v in base.items()}
    total = math.fsum(noisy.values())
    if total <= 0.0:
        best = min(base, key=lambda k: (-base[k], k))
        return {best: 1.0}
    return {k: v / total for k, v in sorted(noisy.items()) if v > 0.0}


def apply_instance_noise(ep: EnvProbs, scene: SceneGraph, spec: NoiseSpec, seed: int) -> Dynamics:
    index = _furniture_index(scene)
    dyn: Dynamics = {}
    for o in scene.objects():
        node = scene.nodes[o]
        dist = location_distribution(ep, index, node.class_label, node.description, spec, seed)
        dyn[o] = dist if dist else {scene.location_of(o): 1.0}
    return dyn


@dataclass
class EnvInstance:
    env_probs: EnvProbs
    dynamics: Dynamics
    scene: SceneGraph
    t: int
    initial_object_count: int
    rng_seed: int
    noise: NoiseSpec
    dynamic_nodes: bool
    next_id: int
    priors: PriorsGraph = field(repr=False, compare=False)
    last_moved: frozenset = frozenset()
    last_move_draws: int = 0

    @property
    def min_objects(self) -> int:
        return -(-95 * self.initial_object_count // 100)

    @property
    def max_objects(self) -> int:
        return 105 * self.initial_object_count // 100

    @property
    def dynamics_seed(self) -> int:
        return child_seed(self.rng_seed, "dynamics")

    def move_probability(self, object_id: int) -> float:
        """Chance that ``object_id`` is picked in one movement phase (first-order)."""
        objs = self.scene.objects()
        w = [self.priors.labels[self.scene.nodes[o].class_label].move_frequency for o in objs]
        total = sum(w)
        if total <= 0:
            return 0.0
        m = max(1, round_half_up(0.05 * len(objs)))
        mine = self.priors.labels[self.scene.nodes[object_id].class_label].move_frequency
        return min(1.0, m * mine / total)

    # snapshots -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "snapshot_format": SNAPSHOT_FORMAT,
            "t": self.t,
            "rng_seed": self.rng_seed,
            "initial_object_count": self.initial_object_count,
            "noise": {"zero_prob": self.noise.zero_prob, "scale_limit": self.noise.scale_limit},
            "dynamic_nodes": self.dynamic_nodes,
            "next_id": self.next_id,
            "last_moved": sorted(self.last_moved),
            "last_move_draws": self.last_move_draws,
            "env_probs": {
                "room_furniture": [[r, f, pr] for (r, f), pr in sorted(self.env_probs.room_furniture.items())],
                "furniture_object": [[*k, pr] for k, pr in sorted(self.env_probs.furniture_object.items())],
            },
            "dynamics": [[o, [[f, rel, pr] for (f, rel), pr in sorted(d.items())]]
                         for o, d in sorted(self.dynamics.items())],
            "scene": self.scene.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, priors: PriorsGraph) -> "EnvInstance":
        if d.get("snapshot_format") != SNAPSHOT_FORMAT:
            raise ValueError("unsupported environment snapshot format")
        ep = EnvProbs(
            {(r, f): pr for r, f, pr in d["env_probs"]["room_furniture"]},
            {(r, f, o, rel): pr for r, f, o, rel, pr in d["env_probs"]["furniture_object"]},
        )
        return cls(
            env_probs=ep,
            dynamics={int(o): {(int(f), rel): pr for f, rel, pr in rows} for o, rows in d["dynamics"]},
            scene=SceneGraph.from_dict(d["scene"]),
            t=int(d["t"]),
            initial_object_count=int(d["initial_object_count"]),
            rng_seed=int(d["rng_seed"]),
            noise=NoiseSpec(**d["noise"]),
            dynamic_nodes=bool(d["dynamic_nodes"]),
            next_id=int(d["next_id"]),
            priors=priors,
            last_moved=frozenset(d["last_moved"]),
            last_move_draws=int(d["last_move_draws"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str, priors: PriorsGraph) -> "EnvInstance":
        return cls.from_dict(json.loads(text), priors)


def make_env(p: PriorsGraph, spec: NoiseSpec = NoiseSpec(), dims: SceneDims = SceneDims(),
             seed: int = 0, dynamic_nodes: bool = True) -> EnvInstance:
    ep = apply_class_noise(p, spec, child_seed(seed, "class_noise"))
    scene = sample_scene(p, ep, dims, child_seed(seed, "scene"))
    dyn = apply_instance_noise(ep, scene, spec, child_seed(seed, "dynamics"))
    return EnvInstance(
        env_probs=ep, dynamics=dyn, scene=scene, t=0,
        initial_object_count=scene.count_objects(), rng_seed=seed, noise=spec,
        dynamic_nodes=dynamic_nodes, next_id=max(scene.nodes) + 1, priors=p,
    )


def evolve(env: EnvInstance, seed: int | None = None) -> EnvInstance:
    """Advance one timestep: removals, movements, then additions.

    Returns a new EnvInstance; ``env`` is left untouched.
    """
    if seed is None:
        seed = child_seed(env.rng_seed, "evolve", env.t + 1)
    p = env.priors
    scene = env.scene.copy()
    dyn = dict(env.dynamics)
    next_id = env.next_id
    count = scene.count_objects()

    if env.dynamic_nodes:
        rng = rng_for(seed, "remove")
        for o in scene.objects():
            u = rng.random()
            if count - 1 < env.min_objects:
                continue
            if u < p.labels[scene.nodes[o].class_label].remove_prob:
                scene.remove_object(o)
                dyn.pop(o, None)
                count -= 1

    objs = scene.objects()
    m = max(1, round_half_up(0.05 * len(objs)))
    weights = [p.labels[scene.nodes[o].class_label].move_frequency for o in objs]
    rng = rng_for(seed, "move")
    picked = sample_without_replacement(rng, weights, m)
    moved = set()
    for i in picked:
        o = objs[i]
        dist = dyn[o]
        keys = sorted(dist)
        f, rel = keys[weighted_choice(rng, [dist[k] for k in keys])]
        if (f, rel) != scene.location_of(o):
            scene.move_object(o, f, rel)
            moved.add(o)

    if env.dynamic_nodes:
        rng = rng_for(seed, "add")
        index = _furniture_index(scene)
        per_class: dict[str, int] = {}
        for o in scene.objects():
            per_class[scene.nodes[o].class_label] = per_class.get(scene.nodes[o].class_label, 0) + 1
        for label in p.objects:
            if count >= env.max_objects:
                break
            u = rng.random()
            meta = p.labels[label]
            if u >= meta.add_prob or per_class.get(label, 0) >= meta.max_count:
                continue
            spawn = location_distribution(env.env_probs, index, label, label, None, 0)
            if not spawn:
                continue
            keys = sorted(spawn)
            f, rel = keys[weighted_choice(rng, [spawn[k] for k in keys])]
            node = SceneNode(next_id, "object", label, _describe(p, label, rng_for(seed, "describe", next_id)))
            next_id += 1
            scene.add_node(node, parent=f, relation=rel)
            d = location_distribution(env.env_probs, index, label, node.description, env.noise,
                                      env.dynamics_seed)
            dyn[node.id] = d if d else {(f, rel): 1.0}
            per_class[label] = per_class.get(label, 0) + 1
            count += 1

    return replace(env, scene=scene, dynamics=dyn, t=env.t + 1, next_id=next_id,
                   last_moved=frozenset(moved), last_move_draws=len(picked))
