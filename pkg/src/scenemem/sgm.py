"""Scene Graph Memory: observations accumulated into one graph, plus hypothetical query edges.

Object nodes are keyed by their full description (the agent cannot tell two
identical-looking instances apart); furniture, room and structural nodes
keep their scene ids. Nothing is ever deleted from the memory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ._rng import rng_for, stable_hash
from .priors import RELATIONS, PriorsGraph
from .scenegraph import NODE_TYPES, STRUCTURAL_RELATION, Observation, SceneGraph

EMBED_DIM = 96
NODE_FEATURES = EMBED_DIM + 4 + len(NODE_TYPES)
EDGE_FEATURES = 9 + len(RELATIONS)
# multipliers applied to the count- and time-valued feature slots
NODE_TIME_SCALE = 0.2
EDGE_TIME_SCALE = 0.5
OBJECT_RELATIONS = ("in", "onTop", "under")

NodeId = int | str
EdgeKey = tuple  # (parent id, child id, relation)


class HashEmbedding:
    """Deterministic stand-in for word vectors: label → unit-norm 96-vector."""

    name = "hash"

    def __init__(self, dim: int = EMBED_DIM):
        self.dim = dim
        self._cached = lru_cache(maxsize=None)(self._compute)

    def _compute(self, label: str) -> np.ndarray:
        v = np.random.default_rng(stable_hash(label)).standard_normal(self.dim)
        v /= np.linalg.norm(v)
        v.setflags(write=False)
        return v

    def __call__(self, label: str) -> np.ndarray:
        return self._cached(label)


class FileEmbedding:
    """Label → vector table loaded from JSON ``{"label": [floats...]}``; rows are normalised."""

    name = "file"

    def __init__(self, path: str | Path, dim: int = EMBED_DIM):
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        self.dim = dim
        self._table = {}
        for label, vec in raw.items():
            v = np.asarray(vec, dtype=np.float64)
            if v.shape != (dim,):
                raise ValueError(f"embedding for {label!r} has shape {v.shape}, expected ({dim},)")
            v = v / np.linalg.norm(v)
            v.setflags(write=False)
            self._table[label] = v

    def __call__(self, label: str) -> np.ndarray:
        try:
            return self._table[label]
        except KeyError:
            raise KeyError(f"no embedding for label {label!r}") from None


@dataclass
class SGMNode:
    id: NodeId
    node_type: str
    class_label: str
    description: str
    text_embedding: np.ndarray = field(repr=False, compare=False)
    is_query: bool = False
    last_observed_t: int | None = None
    times_observed: int = 0
    last_moved_t: int | None = None
    moves: int = 0
    last_locations: tuple = ()
    room: str | None = None

    @property
    def observed_move_frequency(self) -> float:
        return self.moves / max(1, self.times_observed - 1)


@dataclass
class SGMEdge:
    parent: NodeId
    child: NodeId
    relation: str
    is_hypothetical: bool = False
    times_observed: int = 0
    times_true: int = 0
    times_changed: int = 0
    last_observed_t: int | None = None
    last_state_change_t: int | None = None
    last_state: bool | None = None
    prior_prob: float = 0.0
    last_true_t: int | None = None

    @property
    def key(self) -> EdgeKey:
        return (self.parent, self.child, self.relation)

    @property
    def true_frequency(self) -> float:
        return self.times_true / self.times_observed if self.times_observed else 0.0


_NODE_FIELDS = ("id", "node_type", "class_label", "description", "is_query", "last_observed_t",
                "times_observed", "last_moved_t", "moves", "last_locations", "room")
_EDGE_FIELDS = ("parent", "child", "relation", "is_hypothetical", "times_observed", "times_true",
                "times_changed", "last_observed_t", "last_state_change_t", "last_state", "prior_prob",
                "last_true_t")


class SceneGraphMemory:
    def __init__(self, priors: PriorsGraph, embedding=None, *, threshold: float = 0.05, min_k: int = 5,
                 hypothesis_mode: str = "priors", seed: int = 0):
        if hypothesis_mode not in ("priors", "random"):
            raise ValueError(f"unknown hypothesis_mode {hypothesis_mode!r}")
        self.priors = priors
        self.embedding = embedding or HashEmbedding()
        self.threshold = threshold
        self.min_k = min_k
        self.hypothesis_mode = hypothesis_mode
        self.seed = seed
        self.t = 0
        self.nodes: dict[NodeId, SGMNode] = {}
        self.edges: dict[EdgeKey, SGMEdge] = {}
        self.labels: dict[EdgeKey, bool] = {}
        self.query_ids: set[NodeId] = set()
        self._by_parent: dict[NodeId, set[EdgeKey]] = {}
        self._by_child: dict[NodeId, set[EdgeKey]] = {}

    # --- node / edge plumbing ------------------------------------------------

    def _node(self, node_id, node_type, class_label, description, room=None) -> SGMNode:
        n = self.nodes.get(node_id)
        if n is None:
            n = SGMNode(node_id, node_type, class_label, description,
                        self.embedding(class_label), room=room)
            self.nodes[node_id] = n
        return n

    def _edge(self, parent, child, relation, **kw) -> SGMEdge:
        key = (parent, child, relation)
        e = self.edges.get(key)
        if e is None:
            e = SGMEdge(parent, child, relation, **kw)
            self.edges[key] = e
            self._by_parent.setdefault(parent, set()).add(key)
            self._by_child.setdefault(child, set()).add(key)
        return e

    def _prior_for(self, furniture_id, obj_class: str, relation: str) -> float:
        f = self.nodes[furniture_id]
        return self.priors.furniture_object.get((f.room, f.class_label, obj_class, relation), 0.0)

    def furniture_ids(self) -> list[int]:
        return sorted(i for i, n in self.nodes.items() if n.node_type == "furniture")

    def advance(self, t: int) -> None:
        if t < self.t:
            raise ValueError("memory time cannot go backwards")
        self.t = t

    def seed_structure(self, sg: SceneGraph) -> None:
        """Register the static house layout (rooms, furniture) without observing any objects."""
        for nid in sorted(sg.nodes):
            n = sg.nodes[nid]
            if n.node_type == "object":
                continue
            room = None
            if n.node_type == "furniture":
                room = sg.nodes[sg.room_of(nid)].class_label
            self._node(nid, n.node_type, n.class_label, n.description, room=room)
            if nid in sg.parent_edge:
                e = sg.parent_edge[nid]
                self._edge(e.parent, nid, e.relation)

    # --- observation --------------------------------------------------------

    @staticmethod
    def _mark_seen(n: SGMNode, t: int) -> None:
        if n.last_observed_t != t:
            n.times_observed += 1
        n.last_observed_t = t

    @staticmethod
    def _observe_edge(e: SGMEdge, state: bool, t: int) -> None:
        if e.last_observed_t == t:
            return
        e.is_hypothetical = False
        e.times_observed += 1
        if state:
            e.times_true += 1
            e.last_true_t = t
        if e.last_state is not None and e.last_state != state:
            e.times_changed += 1
            e.last_state_change_t = t
        e.last_state = state
        e.last_observed_t = t

    def integrate_observation(self, o: Observation) -> None:
        if o.t != self.t:
            raise ValueError(f"observation at t={o.t} but memory is at t={self.t}")
        t = o.t
        for f in sorted(o.observed_furniture):
            fn, rn = o.furniture_nodes[f], o.rooms[f]
            room = self._node(rn.id, "room", rn.class_label, rn.description)
            self._mark_seen(room, t)
            furn = self._node(f, "furniture", fn.class_label, fn.description, room=rn.class_label)
            self._mark_seen(furn, t)
            self._observe_edge(self._edge(rn.id, f, STRUCTURAL_RELATION), True, t)

        visible: set[EdgeKey] = set()
        seen_at: dict[str, set[int]] = {}
        for node, edge in o.visible:
            desc = node.description
            self._node(desc, "object", node.class_label, desc)
            visible.add((edge.parent, desc, edge.relation))
            seen_at.setdefault(desc, set()).add(edge.parent)

        for key in sorted(visible, key=_edge_sort_key):
            parent, child, rel = key
            obj_class = self.nodes[child].class_label
            e = self._edge(parent, child, rel, prior_prob=self._prior_for(parent, obj_class, rel))
            self._observe_edge(e, True, t)
        for f in sorted(o.observed_furniture):
            for key in sorted(self._by_parent.get(f, ()), key=_edge_sort_key):
                if key not in visible and self.nodes[key[1]].node_type == "object":
                    self._observe_edge(self.edges[key], False, t)

        for desc in sorted(seen_at):
            n = self.nodes[desc]
            locs = seen_at[desc]
            if n.last_observed_t is not None and n.last_observed_t < t:
                if n.last_locations and locs.isdisjoint(n.last_locations):
                    n.moves += 1
                    n.last_moved_t = t
                n.last_locations = tuple(sorted(locs))
            else:
                n.last_locations = tuple(sorted(set(n.last_locations) | locs))
            self._mark_seen(n, t)

    # --- queries ------------------------------------------------------------

    def add_query(self, description: str, threshold: float | None = None, min_k: int | None = None,
                  cover_all: bool = False) -> str:
        """Flag the node for ``description`` as a query and attach hypothetical edges.

        Returns the query node id. With ``cover_all`` every known furniture node
        ends up with at least one candidate edge to the query.
        """
        threshold = self.threshold if threshold is None else threshold
        min_k = self.min_k if min_k is None else min_k
        obj_class = self.priors.object_label_of(description)
        n = self._node(description, "object", obj_class, description)
        n.is_query = True
        self.query_ids.add(description)

        existing = {(k[0], k[2]) for k in self._by_child.get(description, ())}
        ranked = []
        for f in self.furniture_ids():
            for rel in RELATIONS:
                pr = self._prior_for(f, obj_class, rel)
                if pr > 0 and (f, rel) not in existing:
                    ranked.append((pr, f, rel))
        ranked.sort(key=lambda r: (-r[0], r[1], r[2]))
        chosen = [r for r in ranked if r[0] >= threshold]
        shortfall = min_k - len(existing) - len(chosen)
        if shortfall > 0:
            chosen += ranked[len(chosen):len(chosen) + shortfall]

        if self.hypothesis_mode == "random" and chosen:
            pool = [(f, rel) for f in self.furniture_ids() for rel in OBJECT_RELATIONS
                    if (f, rel) not in existing]
            rng = rng_for(self.seed, "hypothetical", description, self.t)
            idx = sorted(int(i) for i in rng.choice(len(pool), size=min(len(chosen), len(pool)),
                                                    replace=False))
            chosen = [(self._prior_for(pool[i][0], obj_class, pool[i][1]), *pool[i]) for i in idx]

        for pr, f, rel in chosen:
            self._edge(f, description, rel, is_hypothetical=True, prior_prob=pr)

        if cover_all:
            covered = {k[0] for k in self._by_child.get(description, ())}
            for f in self.furniture_ids():
                if f in covered:
                    continue
                rel = max(OBJECT_RELATIONS, key=lambda r: (self._prior_for(f, obj_class, r), -RELATIONS.index(r)))
                self._edge(f, description, rel, is_hypothetical=True,
                           prior_prob=self._prior_for(f, obj_class, rel))
        return description

    def candidate_edges(self, query_id) -> list[EdgeKey]:
        if query_id not in self.query_ids:
            raise KeyError(f"unknown query id {query_id!r}")
        return sorted(self._by_child.get(query_id, ()), key=_edge_sort_key)

    # --- features -----------------------------------------------------------

    def featurize_node(self, node_id, t: int | None = None) -> np.ndarray:
        return featurize_node(self.nodes[node_id], self.t if t is None else t)

    def featurize_edge(self, key: EdgeKey, t: int | None = None) -> np.ndarray:
        return featurize_edge(self.edges[key], self, self.t if t is None else t)

    # --- serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "threshold": self.threshold,
            "min_k": self.min_k,
            "hypothesis_mode": self.hypothesis_mode,
            "seed": self.seed,
            "nodes": [[_enc(getattr(n, f)) for f in _NODE_FIELDS]
                      for n in sorted(self.nodes.values(), key=lambda n: _id_sort_key(n.id))],
            "edges": [[_enc(getattr(e, f)) for f in _EDGE_FIELDS]
                      for e in sorted(self.edges.values(), key=lambda e: _edge_sort_key(e.key))],
            "query_ids": sorted(self.query_ids, key=_id_sort_key),
            "labels": [[*_enc(list(k)), v] for k, v in sorted(self.labels.items(),
                                                            key=lambda kv: _edge_sort_key(kv[0]))],
        }

    @classmethod
    def from_dict(cls, d: dict, priors: PriorsGraph, embedding=None) -> "SceneGraphMemory":
        m = cls(priors, embedding, threshold=d["threshold"], min_k=d["min_k"],
                hypothesis_mode=d["hypothesis_mode"], seed=d["seed"])
        m.t = d["t"]
        for row in d["nodes"]:
            kw = dict(zip(_NODE_FIELDS, row))
            kw["last_locations"] = tuple(kw["last_locations"])
            n = SGMNode(text_embedding=m.embedding(kw["class_label"]), **kw)
            m.nodes[n.id] = n
        for row in d["edges"]:
            kw = dict(zip(_EDGE_FIELDS, row))
            e = m._edge(kw.pop("parent"), kw.pop("child"), kw.pop("relation"))
            for k, v in kw.items():
                setattr(e, k, v)
        m.query_ids = set(d["query_ids"])
        m.labels = {(p, c, r): v for p, c, r, v in d["labels"]}
        return m

    def __eq__(self, other) -> bool:
        if not isinstance(other, SceneGraphMemory):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _enc(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def _id_sort_key(node_id) -> tuple:
    return (0, node_id, "") if isinstance(node_id, int) else (1, 0, node_id)


def _edge_sort_key(key: EdgeKey) -> tuple:
    parent, child, rel = key
    return (_id_sort_key(parent), rel, _id_sort_key(child))


# --- module-level operations ---------------------------------------------------

def integrate_observation(m: SceneGraphMemory, o: Observation) -> SceneGraphMemory:
    m.integrate_observation(o)
    return m


def add_query(m: SceneGraphMemory, query_description: str, p: PriorsGraph | None = None,
              threshold: float = 0.05, min_k: int = 5) -> SceneGraphMemory:
    if p is not None and p is not m.priors:
        raise ValueError("memory was built against a different priors graph")
    m.add_query(query_description, threshold, min_k)
    return m


def candidate_edges(m: SceneGraphMemory, query_id) -> list[EdgeKey]:
    return m.candidate_edges(query_id)


def _since(t: int, then: int | None) -> int:
    return t + 1 if then is None else t - then


def featurize_node(n: SGMNode, t: int) -> np.ndarray:
    out = np.zeros(NODE_FEATURES)
    out[:EMBED_DIM] = n.text_embedding
    out[EMBED_DIM] = NODE_TIME_SCALE * _since(t, n.last_observed_t)
    out[EMBED_DIM + 1] = NODE_TIME_SCALE * n.times_observed
    out[EMBED_DIM + 2] = NODE_TIME_SCALE * _since(t, n.last_moved_t)
    out[EMBED_DIM + 3] = n.observed_move_frequency
    out[EMBED_DIM + 4 + NODE_TYPES.index(n.node_type)] = 1.0
    return out


def featurize_edge(e: SGMEdge, m: SceneGraphMemory, t: int) -> np.ndarray:
    a = m.nodes[e.parent].text_embedding
    b = m.nodes[e.child].text_embedding
    out = np.zeros(EDGE_FEATURES)
    out[0] = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
    out[1] = EDGE_TIME_SCALE * _since(t, e.last_observed_t)
    out[2] = EDGE_TIME_SCALE * _since(t, e.last_state_change_t)
    out[3] = EDGE_TIME_SCALE * e.times_observed
    out[4] = EDGE_TIME_SCALE * e.times_true
    out[5] = e.true_frequency
    out[6] = EDGE_TIME_SCALE * e.times_changed
    out[7] = 0.5 if e.last_state is None else float(e.last_state)
    out[8] = e.prior_prob
    out[9 + RELATIONS.index(e.relation)] = 1.0
    return out


# slots zeroed by the feature ablations
NODE_TEMPORAL = slice(EMBED_DIM, EMBED_DIM + 4)
NODE_SEMANTIC = slice(0, EMBED_DIM)
EDGE_TEMPORAL = slice(1, 8)
EDGE_SEMANTIC = slice(0, 1)
EDGE_PRIOR = slice(8, 9)
