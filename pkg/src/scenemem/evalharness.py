"""Task runners (predict location, relative likelihood, find object), metrics and dataset collection."""

from __future__ import annotations

import csv
import gzip
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from ._rng import child_seed, rng_for
from .dhs import EnvInstance, NoiseSpec, SceneDims, evolve, make_env
from .policies import POLICY_KINDS, PolicyParams, choose, score_candidates
from .priors import PriorsGraph
from .scenegraph import observe, true_locations
from .sgm import SceneGraphMemory

TASKS = ("predict_location", "relative_likelihood", "find_object")
DATASET_FORMAT = 1
SMOOTHING_WINDOW = 10


@dataclass(frozen=True)
class TaskConfig:
    task: str = "predict_location"
    n_envs: int = 100
    steps_per_env: int = 100
    dynamic_nodes: bool = True
    policy: str = "bayesian"
    detection_dropout: float = 0.25
    queries_per_step: int = 10
    moved_query_prob: float = 0.5
    threshold: float = 0.05
    min_k: int = 5
    hypothesis_mode: str = "priors"
    max_actions: int | None = None
    initial_sweep: bool = True
    noise: NoiseSpec = NoiseSpec()
    dims: SceneDims = SceneDims()
    seed: int = 0
    env_offset: int = 0
    """Index of the first environment; lets held-out populations share a seed."""

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.n_envs < 1 or self.steps_per_env < 1 or self.queries_per_step < 1:
            raise ValueError("counts must be positive")
        if not 0.0 <= self.detection_dropout <= 1.0:
            raise ValueError("detection_dropout must lie in [0, 1]")

    def env_seed(self, i: int) -> int:
        return child_seed(self.seed, "env", self.env_offset + i)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"]["rooms"] = list(d["dims"]["rooms"])
        if d["dims"]["furniture_plan"] is not None:
            d["dims"]["furniture_plan"] = {k: list(v) for k, v in d["dims"]["furniture_plan"].items()}
        return d


@dataclass(frozen=True)
class HeuristicScorer:
    """Adapter giving the baseline policies the scorer call signature used by the runners."""

    kind: str
    params: PolicyParams = PolicyParams()

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.kind!r}")

    def __call__(self, m: SceneGraphMemory, env: EnvInstance, query_id, candidates, seed: int):
        return score_candidates(self.kind, m, env, m.priors, query_id, candidates, seed, self.params)


def as_scorer(policy):
    return HeuristicScorer(policy) if isinstance(policy, str) else policy


@dataclass
class MetricsSummary:
    step_mean: np.ndarray
    step_std: np.ndarray
    env_means: np.ndarray
    mean: float
    std: float

    def smoothed(self, window: int = SMOOTHING_WINDOW) -> np.ndarray:
        return smooth(self.step_mean, window)


def aggregate(runs) -> MetricsSummary:
    """Mean and population std across environments, per step and overall."""
    runs = [np.asarray(r, dtype=np.float64) for r in runs]
    if not runs:
        raise ValueError("nothing to aggregate")
    arr = np.stack(runs)
    env_means = arr.mean(axis=1)
    return MetricsSummary(arr.mean(axis=0), arr.std(axis=0), env_means,
                          float(env_means.mean()), float(env_means.std()))


def smooth(trace, window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Trailing moving average; the first entries average over what exists so far."""
    x = np.asarray(trace, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(x)])
    i = np.arange(1, len(x) + 1)
    lo = np.maximum(0, i - window)
    return (c[i] - c[lo]) / (i - lo)


def ndcg(scores, relevance) -> float:
    scores = list(scores)
    relevance = [int(r) for r in relevance]
    if len(scores) != len(relevance) or not scores:
        raise ValueError("scores and relevance must be matched and nonempty")
    if not any(relevance):
        return 0.0
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    disc = 1.0 / np.log2(np.arange(2, len(scores) + 2))
    dcg = float(sum(relevance[i] * d for i, d in zip(order, disc)))
    ideal = float(disc[:sum(relevance)].sum())
    return dcg / ideal


def sample_query(env: EnvInstance, moved_since_last, seed: int, moved_prob: float = 0.5) -> str:
    """Pick a query description: from recently moved objects or weighted by move frequency."""
    rng = np.random.default_rng(seed)
    sg = env.scene
    moved = sorted(o for o in moved_since_last if o in sg.nodes)
    u = rng.random()
    if moved and u < moved_prob:
        return sg.nodes[moved[int(rng.integers(len(moved)))]].description
    objs = sg.objects()
    w = np.array([env.priors.labels[sg.nodes[o].class_label].move_frequency for o in objs])
    w = w / w.sum() if w.sum() > 0 else np.full(len(objs), 1.0 / len(objs))
    return sg.nodes[objs[int(rng.choice(len(objs), p=w))]].description


# --- per-environment episode drivers --------------------------------------------

def _start(cfg: TaskConfig, priors: PriorsGraph, i: int, embedding=None):
    seed = cfg.env_seed(i)
    env = make_env(priors, cfg.noise, cfg.dims, seed, cfg.dynamic_nodes)
    m = SceneGraphMemory(priors, embedding, threshold=cfg.threshold, min_k=cfg.min_k,
                         hypothesis_mode=cfg.hypothesis_mode, seed=child_seed(seed, "memory"))
    m.seed_structure(env.scene)
    if cfg.initial_sweep:
        m.integrate_observation(observe(env.scene, env.scene.furniture(), cfg.detection_dropout,
                                        child_seed(seed, "observe", 0), t=0))
    return env, m, seed


def _labels_for(env: EnvInstance, m: SceneGraphMemory, query_id, candidates) -> dict:
    here = true_locations(env.scene, query_id)
    return {k: k[0] in here for k in candidates}


def _step_query(env: EnvInstance, m: SceneGraphMemory, cfg: TaskConfig, seed: int, j: int = 0,
                cover_all: bool = False):
    desc = sample_query(env, env.last_moved, child_seed(seed, "query", env.t, j), cfg.moved_query_prob)
    m.add_query(desc, cover_all=cover_all)
    return desc, m.candidate_edges(desc)


def run_env_predict_location(cfg: TaskConfig, priors: PriorsGraph, policy, i: int,
                             records: list | None = None, embedding=None) -> list[float]:
    scorer = as_scorer(policy)
    env, m, seed = _start(cfg, priors, i, embedding)
    trace = []
    for _ in range(cfg.steps_per_env):
        env = evolve(env)
        m.advance(env.t)
        desc, cands = _step_query(env, m, cfg, seed)
        if records is not None:
            m.labels = _labels_for(env, m, desc, cands)
            records.append({"env": cfg.env_offset + i, "t": env.t, "query_ids": [desc],
                            "memory": m.to_dict()})
            m.labels = {}
        key = choose(scorer(m, env, desc, cands, child_seed(seed, "policy", env.t)))
        trace.append(1.0 if key[0] in true_locations(env.scene, desc) else 0.0)
        m.integrate_observation(observe(env.scene, {key[0]}, cfg.detection_dropout,
                                        child_seed(seed, "observe", env.t), t=env.t))
    return trace


def run_env_relative_likelihood(cfg: TaskConfig, priors: PriorsGraph, policy, i: int,
                                embedding=None) -> list[float]:
    scorer = as_scorer(policy)
    env, m, seed = _start(cfg, priors, i, embedding)
    trace = []
    for _ in range(cfg.steps_per_env):
        env = evolve(env)
        m.advance(env.t)
        picks, values = set(), []
        for j in range(cfg.queries_per_step):
            desc, cands = _step_query(env, m, cfg, seed, j)
            scored = scorer(m, env, desc, cands, child_seed(seed, "policy", env.t, j))
            here = true_locations(env.scene, desc)
            values.append(ndcg([s for _, s in scored], [k[0] in here for k, _ in scored]))
            picks.add(choose(scored)[0])
        trace.append(float(np.mean(values)))
        m.integrate_observation(observe(env.scene, picks, cfg.detection_dropout,
                                        child_seed(seed, "observe", env.t), t=env.t))
    return trace


def find_object_episode(env: EnvInstance, m: SceneGraphMemory, scorer, desc: str, seed: int,
                        dropout: float, max_actions: int | None = None, on_visit=None) -> tuple[bool, int]:
    """Search until the target is seen; returns (success, actions). The scene stays frozen."""
    here = true_locations(env.scene, desc)
    m.add_query(desc, cover_all=True)
    tried: set[int] = set()
    actions = 0
    while max_actions is None or actions < max_actions:
        cands = [k for k in m.candidate_edges(desc) if k[0] not in tried]
        if not cands:
            break
        f = choose(scorer(m, env, desc, cands, child_seed(seed, "policy", env.t, actions)))[0]
        actions += 1
        tried.add(f)
        if on_visit is not None:
            on_visit(f)
        m.integrate_observation(observe(env.scene, {f}, dropout, child_seed(seed, "observe", env.t, actions),
                                        t=env.t, always_detect={desc}))
        if f in here:
            return True, actions
    return False, actions + 1


def run_env_find_object(cfg: TaskConfig, priors: PriorsGraph, policy, i: int, embedding=None) -> list[float]:
    scorer = as_scorer(policy)
    env, m, seed = _start(cfg, priors, i, embedding)
    trace = []
    for _ in range(cfg.steps_per_env):
        env = evolve(env)
        m.advance(env.t)
        desc = sample_query(env, env.last_moved, child_seed(seed, "query", env.t, 0), cfg.moved_query_prob)
        _, actions = find_object_episode(env, m, scorer, desc, seed, cfg.detection_dropout, cfg.max_actions)
        trace.append(float(actions))
    return trace


_RUNNERS = {
    "predict_location": run_env_predict_location,
    "relative_likelihood": run_env_relative_likelihood,
    "find_object": run_env_find_object,
}


def _run_one(args):
    cfg, priors, policy, i = args
    return _RUNNERS[cfg.task](cfg, priors, policy, i)


def run_traces(cfg: TaskConfig, priors: PriorsGraph, policy, workers: int = 1) -> list[list[float]]:
    jobs = [(cfg, priors, policy, i) for i in range(cfg.n_envs)]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def run_task(cfg: TaskConfig, priors: PriorsGraph, policy=None, workers: int = 1) -> MetricsSummary:
    return aggregate(run_traces(cfg, priors, cfg.policy if policy is None else policy, workers))


def run_predict_location(cfg: TaskConfig, priors: PriorsGraph, policy=None, workers: int = 1) -> MetricsSummary:
    return run_task(replace(cfg, task="predict_location"), priors, policy, workers)


def run_relative_likelihood(cfg: TaskConfig, priors: PriorsGraph, policy=None, workers: int = 1) -> MetricsSummary:
    return run_task(replace(cfg, task="relative_likelihood"), priors, policy, workers)


def run_find_object(cfg: TaskConfig, priors: PriorsGraph, policy=None, workers: int = 1) -> MetricsSummary:
    return run_task(replace(cfg, task="find_object"), priors, policy, workers)


# --- datasets ----------------------------------------------------------------

def _collect_one(args):
    cfg, priors, policy, i = args
    records: list = []
    run_env_predict_location(cfg, priors, policy, i, records)
    return records


def collect_records(cfg: TaskConfig, priors: PriorsGraph, policy=None, workers: int = 1) -> list[dict]:
    policy = cfg.policy if policy is None else policy
    jobs = [(cfg, priors, policy, i) for i in range(cfg.n_envs)]
    if workers <= 1:
        chunks = [_collect_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_collect_one, jobs))
    return [r for c in chunks for r in c]


def write_dataset(records: list[dict], path: str | Path, meta: dict | None = None) -> Path:
    """Gzipped JSON lines: a header line, then one record per line."""
    path = Path(path)
    header = {"dataset_format": DATASET_FORMAT, "records": len(records), "meta": meta or {}}
    buf = io.BytesIO()
    # mtime=0 keeps the container byte-stable across runs
    with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as gz:
        gz.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for r in records:
            gz.write((json.dumps(r, sort_keys=True) + "\n").encode())
    path.write_bytes(buf.getvalue())
    return path


def read_dataset(path: str | Path) -> tuple[dict, list[dict]]:
    path = Path(path)
    try:
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.get("dataset_format") != DATASET_FORMAT:
                raise ValueError(f"{path}: unsupported dataset format")
            records = [json.loads(line) for line in fh if line.strip()]
    except FileNotFoundError:
        raise FileNotFoundError(f"dataset not found: {path}") from None
    if len(records) != header["records"]:
        raise ValueError(f"{path}: header promises {header['records']} records, found {len(records)}")
    return header, records


def collect_dataset(cfg: TaskConfig, priors: PriorsGraph, policy="bayesian", path: str | Path | None = None,
                    workers: int = 1):
    records = collect_records(replace(cfg, task="predict_location"), priors, policy, workers)
    if path is None:
        return records
    return write_dataset(records, path, {"config": cfg.to_dict(), "policy": str(policy)})


# --- reporting -----------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def metrics_csv(summary: MetricsSummary) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["step", "mean", "std", "smoothed_mean"])
    for s, (mu, sd, sm) in enumerate(zip(summary.step_mean, summary.step_std, summary.smoothed()), start=1):
        w.writerow([s, _fmt(mu), _fmt(sd), _fmt(sm)])
    w.writerow([])
    w.writerow(["summary", "mean", _fmt(summary.mean)])
    w.writerow(["summary", "std", _fmt(summary.std)])
    w.writerow(["summary", "envs", len(summary.env_means)])
    return out.getvalue()


def env_means_csv(summary: MetricsSummary) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["env", "mean"])
    for i, v in enumerate(summary.env_means):
        w.writerow([i, _fmt(v)])
    return out.getvalue()


def paired_gap(a, b) -> tuple[float, float]:
    """Mean and standard error of per-environment differences a - b."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    se = float(d.std(ddof=1) / math.sqrt(len(d))) if len(d) > 1 else 0.0
    return float(d.mean()), se
