"""Hierarchical scene graphs and the partial-observation operator."""

from __future__ import annotations

from dataclasses import dataclass, field

from ._rng import rng_for
from .priors import RELATIONS

NODE_TYPES = ("house", "floor", "room", "furniture", "object")
_LEVEL = {t: i for i, t in enumerate(NODE_TYPES)}
STRUCTURAL_RELATION = "contains"


@dataclass(frozen=True)
class SceneNode:
    id: int
    node_type: str
    class_label: str
    adjectives: tuple[str, ...] = ()

    @property
    def description(self) -> str:
        return " ".join((*self.adjectives, self.class_label))

    def to_list(self) -> list:
        return [self.id, self.node_type, self.class_label, list(self.adjectives)]

    @classmethod
    def from_list(cls, row) -> "SceneNode":
        return cls(int(row[0]), row[1], row[2], tuple(row[3]))


@dataclass(frozen=True)
class SceneEdge:
    parent: int
    child: int
    relation: str


class SceneGraph:
    """A house → floor → room → furniture → object tree.

    Every non-root node has exactly one parent edge. Only object nodes are
    ever removed or re-parented once the graph is built.
    """

    def __init__(self):
        self.nodes: dict[int, SceneNode] = {}
        self.parent_edge: dict[int, SceneEdge] = {}
        self.children: dict[int, set[int]] = {}

    # construction / mutation -------------------------------------------------

    def add_node(self, node: SceneNode, parent: int | None = None, relation: str = STRUCTURAL_RELATION):
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id}")
        if node.node_type not in NODE_TYPES:
            raise ValueError(f"unknown node type {node.node_type!r}")
        if relation not in RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        if parent is None:
            if node.node_type != "house":
                raise ValueError("only the house node may be parentless")
        else:
            ptype = self.nodes[parent].node_type
            if _LEVEL[ptype] + 1 != _LEVEL[node.node_type]:
                raise ValueError(f"{node.node_type} cannot hang under {ptype}")
            self.parent_edge[node.id] = SceneEdge(parent, node.id, relation)
            self.children.setdefault(parent, set()).add(node.id)
        self.nodes[node.id] = node
        self.children.setdefault(node.id, set())

    def remove_object(self, node_id: int) -> None:
        node = self.nodes[node_id]
        if node.node_type != "object":
            raise ValueError("only object nodes can be removed")
        edge = self.parent_edge.pop(node_id)
        self.children[edge.parent].discard(node_id)
        del self.children[node_id]
        del self.nodes[node_id]

    def move_object(self, node_id: int, furniture_id: int, relation: str) -> None:
        if self.nodes[node_id].node_type != "object":
            raise ValueError("only object nodes move")
        if self.nodes[furniture_id].node_type != "furniture":
            raise ValueError("objects can only be attached to furniture")
        old = self.parent_edge[node_id]
        self.children[old.parent].discard(node_id)
        self.parent_edge[node_id] = SceneEdge(furniture_id, node_id, relation)
        self.children[furniture_id].add(node_id)

    def copy(self) -> "SceneGraph":
        g = SceneGraph()
        g.nodes = dict(self.nodes)
        g.parent_edge = dict(self.parent_edge)
        g.children = {k: set(v) for k, v in self.children.items()}
        return g

    # queries -----------------------------------------------------------------

    @property
    def edges(self) -> set[SceneEdge]:
        return set(self.parent_edge.values())

    def ids_of_type(self, node_type: str) -> list[int]:
        return sorted(i for i, n in self.nodes.items() if n.node_type == node_type)

    def objects(self) -> list[int]:
        return self.ids_of_type("object")

    def furniture(self) -> list[int]:
        return self.ids_of_type("furniture")

    def rooms(self) -> list[int]:
        return self.ids_of_type("room")

    def parent_of(self, node_id: int) -> int:
        return self.parent_edge[node_id].parent

    def room_of(self, furniture_id: int) -> int:
        return self.parent_edge[furniture_id].parent

    def objects_on(self, furniture_id: int) -> list[int]:
        return sorted(self.children.get(furniture_id, ()))

    def location_of(self, object_id: int) -> tuple[int, str]:
        e = self.parent_edge[object_id]
        return e.parent, e.relation

    def count_objects(self) -> int:
        return sum(1 for n in self.nodes.values() if n.node_type == "object")

    def check_tree(self) -> None:
        """Raise if any structural invariant is broken."""
        roots = [i for i, n in self.nodes.items() if i not in self.parent_edge]
        if len(roots) != 1 or self.nodes[roots[0]].node_type != "house":
            raise AssertionError(f"expected a single house root, got {roots}")
        for child, e in self.parent_edge.items():
            if e.child != child or e.parent not in self.nodes:
                raise AssertionError(f"broken edge {e}")
            if _LEVEL[self.nodes[e.parent].node_type] + 1 != _LEVEL[self.nodes[child].node_type]:
                raise AssertionError(f"level skip on {e}")
            if child not in self.children[e.parent]:
                raise AssertionError(f"child index out of sync for {e}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, SceneGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.parent_edge == other.parent_edge

    # serialisation -----------------------------------------------------------

    def to_dict(self) -> dict:
        order = sorted(self.nodes)
        return {
            "nodes": [self.nodes[i].to_list() for i in order],
            "edges": [[e.parent, e.child, e.relation]
                      for e in (self.parent_edge[i] for i in order if i in self.parent_edge)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneGraph":
        g = cls()
        parents = {int(c): (int(p), rel) for p, c, rel in d["edges"]}
        for row in d["nodes"]:
            node = SceneNode.from_list(row)
            g.nodes[node.id] = node
            g.children.setdefault(node.id, set())
        for c, (p, rel) in parents.items():
            g.parent_edge[c] = SceneEdge(p, c, rel)
            g.children.setdefault(p, set()).add(c)
        return g


@dataclass(frozen=True)
class Observation:
    t: int
    observed_furniture: frozenset[int]
    visible: tuple[tuple[SceneNode, SceneEdge], ...]
    furniture_nodes: dict[int, SceneNode] = field(default_factory=dict)
    rooms: dict[int, SceneNode] = field(default_factory=dict)
    """Room node of every observed furniture id, as context."""


def observe(sg: SceneGraph, furniture_ids, dropout: float = 0.25, seed: int = 0, t: int = 0,
            always_detect: frozenset[str] | set[str] = frozenset()) -> Observation:
    """Look at a set of furniture nodes; each attached object is missed with prob ``dropout``.

    Objects whose description is in ``always_detect`` are never dropped.
    """
    if not 0.0 <= dropout <= 1.0:
        raise ValueError("dropout must lie in [0, 1]")
    furniture_ids = frozenset(furniture_ids)
    for f in furniture_ids:
        node = sg.nodes.get(f)
        if node is None or node.node_type != "furniture":
            raise KeyError(f"unknown furniture id {f}")
    visible = []
    for f in sorted(furniture_ids):
        for o in sg.objects_on(f):
            node = sg.nodes[o]
            if node.description not in always_detect:
                u = rng_for(seed, "detect", f, o).random()
                if u < dropout:
                    continue
            visible.append((node, sg.parent_edge[o]))
    return Observation(
        t=t,
        observed_furniture=furniture_ids,
        visible=tuple(visible),
        furniture_nodes={f: sg.nodes[f] for f in furniture_ids},
        rooms={f: sg.nodes[sg.room_of(f)] for f in furniture_ids},
    )


def true_locations(sg: SceneGraph, description: str) -> set[int]:
    """Furniture ids holding at least one object with exactly this description."""
    return {
        sg.parent_edge[i].parent
        for i, n in sg.nodes.items()
        if n.node_type == "object" and n.description == description
    }
