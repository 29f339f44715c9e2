"""Prior relation-probability graph over room, furniture and object labels.

The priors file is JSON with a ``priors_format: 1`` version field. Room →
furniture edges are normalised per room; furniture → object edges are
normalised per (room, object), i.e. they give the distribution over
(furniture, relation) locations of an object class given the room.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

RELATIONS = ("in", "contains", "onTop", "under")
CATEGORIES = ("room", "furniture", "object")
NORMALIZATION_TOL = 1e-6
PRIORS_FORMAT = 1


class PriorsError(ValueError):
    """Raised for unreadable or invalid priors files."""


@dataclass(frozen=True)
class LabelMetadata:
    label: str
    category: str
    adjective_categories: tuple[str, ...]
    sample_prob: float
    max_count: int
    move_frequency: float | None = None
    add_prob: float | None = None
    remove_prob: float | None = None

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise PriorsError(f"{self.label!r}: unknown category {self.category!r}")
        if self.max_count < 1:
            raise PriorsError(f"{self.label!r}: max_count must be >= 1")
        dyn = (self.move_frequency, self.add_prob, self.remove_prob)
        if self.category == "object":
            if any(v is None for v in dyn):
                raise PriorsError(f"{self.label!r}: objects need move_frequency, add_prob, remove_prob")
        elif any(v is not None for v in dyn):
            raise PriorsError(f"{self.label!r}: only objects carry movement metadata")
        for name in ("sample_prob", "move_frequency", "add_prob", "remove_prob"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise PriorsError(f"{self.label!r}: {name}={v} outside [0, 1]")


@dataclass(frozen=True)
class PriorsGraph:
    labels: Mapping[str, LabelMetadata]
    room_furniture: Mapping[tuple[str, str], float]
    furniture_object: Mapping[tuple[str, str, str, str], float]
    adjective_lexicon: Mapping[str, tuple[str, ...]]
    _by_object: Mapping[str, tuple] = field(default=None, repr=False, compare=False)
    _by_slot: Mapping[tuple[str, str], tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        by_object: dict[str, list] = {}
        by_slot: dict[tuple[str, str], list] = {}
        for (room, furn, obj, rel), p in sorted(self.furniture_object.items()):
            by_object.setdefault(obj, []).append((room, furn, rel, p))
            by_slot.setdefault((room, furn), []).append((obj, rel, p))
        object.__setattr__(self, "_by_object",
                           MappingProxyType({k: tuple(v) for k, v in by_object.items()}))
        object.__setattr__(self, "_by_slot",
                           MappingProxyType({k: tuple(v) for k, v in by_slot.items()}))

    def __reduce__(self):
        # mapping proxies do not pickle; rebuild from plain dicts (worker processes need this)
        return (_rebuild_priors, (dict(self.labels), dict(self.room_furniture),
                                  dict(self.furniture_object), dict(self.adjective_lexicon)))

    def by_category(self, category: str) -> list[str]:
        return sorted(k for k, v in self.labels.items() if v.category == category)

    @property
    def rooms(self) -> list[str]:
        return self.by_category("room")

    @property
    def furniture(self) -> list[str]:
        return self.by_category("furniture")

    @property
    def objects(self) -> list[str]:
        return self.by_category("object")

    def object_locations(self, obj: str) -> tuple:
        """All (room, furniture, relation, prob) tuples for an object class."""
        return self._by_object.get(obj, ())

    def slot_objects(self, room: str, furniture: str) -> tuple:
        """All (object, relation, prob) tuples hosted by a (room, furniture) slot."""
        return self._by_slot.get((room, furniture), ())

    def object_label_of(self, description: str) -> str:
        """Object class of a description: the longest object label it ends with."""
        best = None
        for label in self.objects:
            if description == label or description.endswith(" " + label):
                if best is None or len(label) > len(best):
                    best = label
        if best is None:
            raise KeyError(f"no object label matches description {description!r}")
        return best


def _require(entry: dict, key: str, where: str):
    if key not in entry:
        raise PriorsError(f"{where}: missing field {key!r}")
    return entry[key]


def _prob(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise PriorsError(f"{where}: probability must be a number, got {v!r}")
    v = float(v)
    if not (0.0 <= v <= 1.0) or math.isnan(v):
        raise PriorsError(f"{where}: probability {v} outside [0, 1]")
    return v


def _normalize_groups(edges: dict, group_of, what: str) -> dict:
    groups: dict = {}
    for key in edges:
        groups.setdefault(group_of(key), []).append(key)
    out = {}
    for g, keys in groups.items():
        total = math.fsum(edges[k] for k in keys)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise PriorsError(f"{what} probabilities for {g} sum to {total!r}, not 1")
        for k in keys:
            out[k] = edges[k] / total
    return out


def parse_priors(doc: dict, *, filter_sparse_furniture: bool = False) -> PriorsGraph:
    """Validate a decoded priors document and build the graph.

    With ``filter_sparse_furniture`` set, furniture labels with fewer than
    three outgoing object edges are dropped (along with their edges) before
    normalisation, and the surviving groups are renormalised.
    """
    if not isinstance(doc, dict):
        raise PriorsError("priors document must be a mapping")
    if doc.get("priors_format") != PRIORS_FORMAT:
        raise PriorsError(f"unsupported or missing priors_format (need {PRIORS_FORMAT})")

    lexicon: dict[str, tuple[str, ...]] = {}
    for entry in _require(doc, "adjective_lexicon", "priors"):
        cat = _require(entry, "category", "adjective_lexicon")
        lexicon[cat] = tuple(_require(entry, "adjectives", f"adjective_lexicon[{cat}]"))

    labels: dict[str, LabelMetadata] = {}
    for section, category in (("rooms", "room"), ("furniture", "furniture"), ("objects", "object")):
        for entry in _require(doc, section, "priors"):
            label = _require(entry, "label", section)
            where = f"{section}[{label}]"
            if label in labels:
                raise PriorsError(f"duplicate label {label!r}")
            adj = tuple(_require(entry, "adjective_categories", where))
            for cat in adj:
                if cat not in lexicon:
                    raise PriorsError(f"{where}: unknown adjective category {cat!r}")
            kwargs = {}
            if category == "object":
                for k in ("move_frequency", "add_prob", "remove_prob"):
                    kwargs[k] = _prob(_require(entry, k, where), f"{where}.{k}")
            max_count = _require(entry, "max_count", where)
            if not isinstance(max_count, int) or isinstance(max_count, bool):
                raise PriorsError(f"{where}: max_count must be an integer")
            labels[label] = LabelMetadata(
                label=label, category=category, adjective_categories=adj,
                sample_prob=_prob(_require(entry, "sample_prob", where), f"{where}.sample_prob"),
                max_count=max_count, **kwargs)

    def check_label(label, category, where):
        meta = labels.get(label)
        if meta is None:
            raise PriorsError(f"{where}: dangling label {label!r}")
        if meta.category != category:
            raise PriorsError(f"{where}: {label!r} is a {meta.category}, expected {category}")

    rf: dict[tuple[str, str], float] = {}
    for e in _require(doc, "room_furniture_edges", "priors"):
        room, furn = _require(e, "room", "room_furniture_edges"), _require(e, "furniture", "room_furniture_edges")
        where = f"room_furniture_edges[{room}/{furn}]"
        check_label(room, "room", where)
        check_label(furn, "furniture", where)
        if (room, furn) in rf:
            raise PriorsError(f"{where}: duplicate edge")
        rf[(room, furn)] = _prob(_require(e, "prob", where), where)

    fo: dict[tuple[str, str, str, str], float] = {}
    for e in _require(doc, "furniture_object_edges", "priors"):
        key = tuple(_require(e, k, "furniture_object_edges") for k in ("room", "furniture", "object", "relation"))
        room, furn, obj, rel = key
        where = f"furniture_object_edges[{'/'.join(key)}]"
        check_label(room, "room", where)
        check_label(furn, "furniture", where)
        check_label(obj, "object", where)
        if rel not in RELATIONS:
            raise PriorsError(f"{where}: unknown relation {rel!r}")
        if key in fo:
            raise PriorsError(f"{where}: duplicate edge")
        fo[key] = _prob(_require(e, "prob", where), where)

    if filter_sparse_furniture:
        out_degree: dict[str, int] = {}
        for (_, furn, _, _) in fo:
            out_degree[furn] = out_degree.get(furn, 0) + 1
        keep = {f for f, d in out_degree.items() if d >= 3}
        rf = {k: v for k, v in rf.items() if k[1] in keep}
        fo = {k: v for k, v in fo.items() if k[1] in keep}
        rf = _rescale(rf, lambda k: k[0])
        fo = _rescale(fo, lambda k: (k[0], k[2]))

    rf = _normalize_groups(rf, lambda k: k[0], "room_furniture")
    fo = _normalize_groups(fo, lambda k: (k[0], k[2]), "furniture_object")
    return PriorsGraph(
        labels=MappingProxyType(labels),
        room_furniture=MappingProxyType(rf),
        furniture_object=MappingProxyType(fo),
        adjective_lexicon=MappingProxyType(lexicon),
    )


def _rescale(edges: dict, group_of) -> dict:
    totals: dict = {}
    for k, v in edges.items():
        totals[group_of(k)] = totals.get(group_of(k), 0.0) + v
    return {k: v / totals[group_of(k)] for k, v in edges.items() if totals[group_of(k)] > 0}


def load_priors(path: str | Path | None = None, *, filter_sparse_furniture: bool = False) -> PriorsGraph:
    """Load a priors file; ``None`` loads the bundled synthetic priors."""
    if path is None:
        text = resources.files("scenemem.data").joinpath("priors.json").read_text(encoding="utf-8")
        where = "<bundled priors>"
    else:
        where = str(path)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise PriorsError(f"cannot read priors file {where}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PriorsError(f"{where}: parse error: {exc}") from exc
    return parse_priors(doc, filter_sparse_furniture=filter_sparse_furniture)


def _check_known(p: PriorsGraph, label: str, category: str) -> None:
    meta = p.labels.get(label)
    if meta is None or meta.category != category:
        raise KeyError(f"unknown {category} label {label!r}")


def prior_prob(p: PriorsGraph, room: str, furniture: str, obj: str, relation: str) -> float:
    _check_known(p, room, "room")
    _check_known(p, furniture, "furniture")
    _check_known(p, obj, "object")
    if relation not in RELATIONS:
        raise KeyError(f"unknown relation {relation!r}")
    return p.furniture_object.get((room, furniture, obj, relation), 0.0)


def top_k_prior_locations(p: PriorsGraph, obj: str, k: int) -> list[tuple[str, str, str, float]]:
    """The ``k`` most probable (room, furniture, relation, prob) locations of ``obj``.

    Ties are broken by lexicographic (room, furniture, relation).
    """
    _check_known(p, obj, "object")
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(p.object_locations(obj), key=lambda t: (-t[3], t[0], t[1], t[2]))
    return ranked[:k]


def _rebuild_priors(labels, rf, fo, lexicon) -> PriorsGraph:
    return PriorsGraph(MappingProxyType(labels), MappingProxyType(rf), MappingProxyType(fo),
                       MappingProxyType(lexicon))
