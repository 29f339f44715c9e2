"""Gridworld embodiment of a sampled scene: four rooms, furniture footprints, BFS navigation."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ._rng import child_seed
from .dhs import EnvInstance, NoiseSpec, SceneDims, evolve, make_env
from .evalharness import as_scorer, find_object_episode, sample_query
from .priors import PriorsGraph
from .scenegraph import SceneGraph, observe
from .sgm import SceneGraphMemory

LAYOUT_FORMAT = 1
WALL, FLOOR, DOOR, AGENT = "#", ".", "/", "@"
SLOT_GLYPHS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))

Cell = tuple[int, int]


class LayoutError(ValueError):
    pass


class InstantiationError(ValueError):
    pass


@dataclass(frozen=True)
class FurnitureSlot:
    room: str
    furniture_class: str
    x: int
    y: int
    w: int = 1
    h: int = 1

    @property
    def cells(self) -> frozenset[Cell]:
        return frozenset((self.x + i, self.y + j) for i in range(self.w) for j in range(self.h))


@dataclass(frozen=True)
class GridLayout:
    width: int
    height: int
    rooms: tuple[tuple[str, int, int, int, int], ...]
    walls: frozenset[Cell]
    doors: frozenset[Cell]
    slots: tuple[FurnitureSlot, ...]
    agent_start: Cell | None = None
    _blocked: frozenset = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        blocked = set(self.walls - self.doors)
        for s in self.slots:
            blocked |= s.cells
        object.__setattr__(self, "_blocked", frozenset(blocked))

    def in_bounds(self, c: Cell) -> bool:
        return 0 <= c[0] < self.width and 0 <= c[1] < self.height

    def is_free(self, c: Cell) -> bool:
        return self.in_bounds(c) and c not in self._blocked

    def room_at(self, c: Cell) -> str | None:
        for label, x, y, w, h in self.rooms:
            if x <= c[0] < x + w and y <= c[1] < y + h:
                return label
        return None

    def access_cells(self, slot: int) -> frozenset[Cell]:
        """Free cells 4-adjacent to the slot's footprint."""
        out = set()
        for (x, y) in self.slots[slot].cells:
            for dx, dy in STEPS:
                c = (x + dx, y + dy)
                if self.is_free(c):
                    out.add(c)
        return frozenset(out)

    def furniture_plan(self) -> dict[str, tuple[str, ...]]:
        plan: dict[str, list[str]] = {label: [] for label, *_ in self.rooms}
        for s in self.slots:
            plan[s.room].append(s.furniture_class)
        return {k: tuple(v) for k, v in plan.items()}

    def scene_dims(self, objects_per_furniture: int = 6) -> SceneDims:
        return SceneDims(rooms=tuple(label for label, *_ in self.rooms),
                         objects_per_furniture=objects_per_furniture,
                         furniture_plan=self.furniture_plan())

    def validate(self) -> None:
        for i, s in enumerate(self.slots):
            for c in s.cells:
                if not self.in_bounds(c) or c in self.walls:
                    raise LayoutError(f"slot {i} ({s.furniture_class}) overlaps a wall or leaves the grid")
                if self.room_at(c) != s.room:
                    raise LayoutError(f"slot {i} ({s.furniture_class}) is not inside room {s.room!r}")
            if not self.access_cells(i):
                raise LayoutError(f"slot {i} ({s.furniture_class}) has no free neighbouring cell")
        cells = [slot.cells for slot in self.slots]
        for i in range(len(cells)):
            for j in range(i + 1, len(cells)):
                if cells[i] & cells[j]:
                    raise LayoutError(f"slots {i} and {j} overlap")
        if self.agent_start is not None:
            if not self.is_free(self.agent_start):
                raise LayoutError("agent start cell is blocked")
            reach = bfs_distances(self, self.agent_start)
            for i in range(len(self.slots)):
                if not any(c in reach for c in self.access_cells(i)):
                    raise LayoutError(f"slot {i} ({self.slots[i].furniture_class}) is unreachable")


def _rect_cells(r: dict) -> set[Cell]:
    return {(r["x"] + i, r["y"] + j) for i in range(r["w"]) for j in range(r["h"])}


def parse_layout(doc: dict) -> GridLayout:
    if doc.get("layout_format") != LAYOUT_FORMAT:
        raise LayoutError(f"unsupported or missing layout_format (need {LAYOUT_FORMAT})")
    walls: set[Cell] = set()
    for r in doc.get("walls", ()):
        walls |= _rect_cells(r)
    layout = GridLayout(
        width=int(doc["width"]), height=int(doc["height"]),
        rooms=tuple((r["label"], r["x"], r["y"], r["w"], r["h"]) for r in doc["rooms"]),
        walls=frozenset(walls),
        doors=frozenset(tuple(d) for d in doc.get("doors", ())),
        slots=tuple(FurnitureSlot(f["room"], f["class"], f["x"], f["y"], f.get("w", 1), f.get("h", 1))
                    for f in doc.get("furniture", ())),
        agent_start=tuple(doc["agent_start"]) if doc.get("agent_start") is not None else None,
    )
    layout.validate()
    return layout


def load_layout(path: str | Path | None = None) -> GridLayout:
    """Load a layout file; ``None`` loads the bundled four-room house."""
    if path is None:
        text = resources.files("scenemem.data").joinpath("layout.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_layout(json.loads(text))


# --- navigation --------------------------------------------------------------------

def bfs_distances(layout: GridLayout, start: Cell) -> dict[Cell, int]:
    dist = {start: 0}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for dx, dy in STEPS:
            c = (x + dx, y + dy)
            if c not in dist and layout.is_free(c):
                dist[c] = dist[(x, y)] + 1
                queue.append(c)
    return dist


def path_to_slot(layout: GridLayout, start: Cell, slot: int) -> tuple[int, Cell]:
    """Shortest step count to any access cell of ``slot`` and the cell reached.

    Among equally short access cells the smallest (x, y) wins.
    """
    if not layout.is_free(start):
        raise ValueError(f"start cell {start} is blocked")
    dist = bfs_distances(layout, start)
    best = min(((dist[c], c) for c in layout.access_cells(slot) if c in dist), default=None)
    if best is None:
        raise LayoutError(f"slot {slot} unreachable from {start}")
    return best


def shortest_path_len(layout: GridLayout, start: Cell, slot: int) -> int:
    return path_to_slot(layout, start, slot)[0]


# --- binding a scene to the layout -----------------------------------------------------

def bind_furniture(sg: SceneGraph, layout: GridLayout) -> dict[int, int]:
    """Scene furniture id → slot index, matched on (room, class) in ascending id / slot order."""
    free: dict[tuple[str, str], list[int]] = {}
    for i, s in enumerate(layout.slots):
        free.setdefault((s.room, s.furniture_class), []).append(i)
    binding, problems = {}, []
    for f in sg.furniture():
        key = (sg.nodes[sg.room_of(f)].class_label, sg.nodes[f].class_label)
        if free.get(key):
            binding[f] = free[key].pop(0)
        else:
            problems.append(f"furniture {f} ({key[1]} in {key[0]}) has no free slot")
    problems += [f"slot {i} ({k[1]} in {k[0]}) left empty" for k, rest in sorted(free.items()) for i in rest]
    if problems:
        raise InstantiationError("; ".join(problems))
    return binding


@dataclass
class EmbodiedState:
    layout: GridLayout
    env: EnvInstance
    binding: dict[int, int]
    agent_pos: Cell

    def path_len(self, furniture_id: int, start: Cell | None = None) -> int:
        return shortest_path_len(self.layout, self.agent_pos if start is None else start,
                                 self.binding[furniture_id])

    def furniture_cell(self, object_id: int) -> Cell:
        """Top-left cell of the furniture holding ``object_id``."""
        s = self.layout.slots[self.binding[self.env.scene.location_of(object_id)[0]]]
        return (s.x, s.y)


def instantiate(env: EnvInstance, layout: GridLayout) -> EmbodiedState:
    if layout.agent_start is None:
        raise InstantiationError("layout has no agent start cell")
    return EmbodiedState(layout, env, bind_furniture(env.scene, layout), layout.agent_start)


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    actions: int
    path_length: int
    visited: tuple[int, ...] = ()


def run_embodied_find(st: EmbodiedState, policy, memory: SceneGraphMemory, query: str,
                      max_actions: int = 10, seed: int = 0, dropout: float = 0.25) -> EpisodeResult:
    """Visit furniture in policy order until the query object is seen or the budget runs out.

    The agent walks shortest paths; a failed episode reports ``max_actions + 1`` actions.
    """
    visited: list[int] = []
    path = 0

    def walk(f: int) -> None:
        nonlocal path
        steps, cell = path_to_slot(st.layout, st.agent_pos, st.binding[f])
        path += steps
        st.agent_pos = cell
        visited.append(f)

    success, actions = find_object_episode(st.env, memory, as_scorer(policy), query, seed, dropout,
                                           max_actions, on_visit=walk)
    return EpisodeResult(success, actions, path, tuple(visited))


@dataclass(frozen=True)
class GridConfig:
    n_envs: int = 20
    episodes_per_env: int = 50
    max_actions: int = 10
    detection_dropout: float = 0.25
    moved_query_prob: float = 0.5
    initial_sweep: bool = True
    noise: NoiseSpec = NoiseSpec()
    seed: int = 0


def run_env_episodes(cfg: GridConfig, priors: PriorsGraph, policy, i: int,
                     layout: GridLayout | None = None) -> list[EpisodeResult]:
    """Episodes in one house; the world evolves between episodes and is frozen within one."""
    layout = layout or load_layout()
    seed = child_seed(cfg.seed, "grid-env", i)
    env = make_env(priors, cfg.noise, layout.scene_dims(), seed)
    m = SceneGraphMemory(priors, seed=child_seed(seed, "memory"))
    m.seed_structure(env.scene)
    if cfg.initial_sweep:
        m.integrate_observation(observe(env.scene, env.scene.furniture(), cfg.detection_dropout,
                                        child_seed(seed, "observe", 0), t=0))
    results = []
    for _ in range(cfg.episodes_per_env):
        env = evolve(env)
        m.advance(env.t)
        st = instantiate(env, layout)
        query = sample_query(env, env.last_moved, child_seed(seed, "query", env.t), cfg.moved_query_prob)
        results.append(run_embodied_find(st, policy, m, query, cfg.max_actions, seed, cfg.detection_dropout))
    return results


# --- rendering ---------------------------------------------------------------------

def glyph_grid(st: EmbodiedState | None, layout: GridLayout, show_agent: bool = True) -> list[list[str]]:
    grid = [[FLOOR] * layout.width for _ in range(layout.height)]
    for (x, y) in layout.walls:
        grid[y][x] = WALL
    for (x, y) in layout.doors:
        grid[y][x] = DOOR
    for i, s in enumerate(layout.slots):
        for (x, y) in s.cells:
            grid[y][x] = SLOT_GLYPHS[i]
    if show_agent and st is not None:
        x, y = st.agent_pos
        grid[y][x] = AGENT
    return grid


def render_text(st: EmbodiedState | None = None, layout: GridLayout | None = None,
                show_agent: bool = True) -> str:
    layout = st.layout if st is not None else layout
    lines = ["".join(row) for row in glyph_grid(st, layout, show_agent)]
    if layout.slots:
        lines.append("")
        by_slot = {s: f for f, s in st.binding.items()} if st is not None else {}
        for i, s in enumerate(layout.slots):
            fid = by_slot.get(i)
            head = f"{SLOT_GLYPHS[i]}: " + (f"furniture {fid} " if fid is not None else "")
            lines.append(f"{head}{s.furniture_class} ({s.room})")
    return "\n".join(lines) + "\n"


_PALETTE = {WALL: (40, 40, 40), FLOOR: (235, 230, 215), DOOR: (170, 120, 60), AGENT: (210, 30, 30)}


def render_ppm(st: EmbodiedState | None = None, layout: GridLayout | None = None, cell_px: int = 8,
               show_agent: bool = True) -> bytes:
    """Binary portable pixmap of the glyph grid; furniture colours are fixed per slot."""
    layout = st.layout if st is not None else layout
    grid = glyph_grid(st, layout, show_agent)
    img = np.zeros((layout.height * cell_px, layout.width * cell_px, 3), dtype=np.uint8)
    for y, row in enumerate(grid):
        for x, g in enumerate(row):
            if g in _PALETTE:
                colour = _PALETTE[g]
            else:
                k = SLOT_GLYPHS.index(g)
                colour = (60 + (k * 47) % 160, 90 + (k * 89) % 140, 120 + (k * 29) % 120)
            img[y * cell_px:(y + 1) * cell_px, x * cell_px:(x + 1) * cell_px] = colour
    header = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    return header + img.tobytes()


def render(st: EmbodiedState, out_dir: str | Path | None = None, stem: str = "igridson") -> tuple[str, bytes]:
    """Text grid plus legend and a PPM image; written to ``out_dir`` when given."""
    text, ppm = render_text(st), render_ppm(st)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.txt").write_text(text, encoding="utf-8")
        (out / f"{stem}.ppm").write_bytes(ppm)
    return text, ppm
