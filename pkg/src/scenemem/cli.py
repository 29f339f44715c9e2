"""Command-line entry point.

Every run resolves its configuration as defaults < ``--config`` file < explicit flags,
writes outputs into ``<out>/<subcommand>-<hash>`` (the hash covers the resolved
config, so identical runs land in the same place) and drops a ``manifest.json``
there. Passing that manifest back through ``--config`` repeats the run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dhs import NoiseSpec, SceneDims, evolve, make_env
from .evalharness import (TASKS, TaskConfig, collect_dataset, env_means_csv, metrics_csv, read_dataset,
                          run_task)
from .policies import POLICY_KINDS, PolicyParams
from .priors import load_priors

OUT_ENV_VAR = "SCENEMEM_OUT"
MANIFEST_FORMAT = 1
POLICIES = POLICY_KINDS + ("nep",)

_NOISE = {"zero_prob": 0.25, "scale_limit": 0.25}
_DIMS = {"rooms": None, "furniture_per_room": 8, "objects_per_furniture": 6, "use_layout": False}
_TASK = {"envs": 100, "steps": 100, "policy": "bayesian", "dropout": 0.25, "queries_per_step": 10,
         "moved_query_prob": 0.5, "threshold": 0.05, "min_k": 5, "hypothesis_mode": "priors",
         "max_actions": None, "initial_sweep": True, "static_nodes": False, "env_offset": 0}
_MODEL = {"no_priors": False, "no_transformer": False, "no_temporal": False, "no_semantic": False,
          "gcn_layers": 0, "cross_query_attention": False, "hidden": 64}
_TRAIN = {"lr": 1e-4, "epochs": 25, "batch_size": 100}

DEFAULTS = {
    "sample-env": {**_NOISE, **_DIMS},
    "evolve": {"snapshot": None, "steps": 1},
    "collect": {**_NOISE, **_DIMS, **_TASK},
    "train": {"dataset": None, **_MODEL, **_TRAIN},
    "eval": {**_NOISE, **_DIMS, **_TASK, "task": "predict_location", "checkpoint": None,
             "variance": 0.05, "oracle_cheat": False},
    "igridson": {**_NOISE, "envs": 20, "episodes": 50, "max_actions": 10, "policy": "bayesian",
                 "dropout": 0.25, "moved_query_prob": 0.5, "initial_sweep": True, "checkpoint": None,
                 "layout": None, "render": True},
    "selftest": {},
}
STOCHASTIC = {"sample-env", "collect", "train", "eval", "igridson"}


class UsageError(Exception):
    pass


# --- argument parsing ----------------------------------------------------------------

def _flag(p, name: str, **kw):
    p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **kw)


def _bool(p, name: str, help_text: str = ""):
    p.add_argument("--" + name.replace("_", "-"), dest=name, action="store_true", default=None, help=help_text)


def _add_common(p, stochastic: bool):
    _flag(p, "config", help="JSON config or manifest; explicit flags override it")
    _flag(p, "out", help=f"output root (default ${OUT_ENV_VAR} or ./runs)")
    _flag(p, "priors", help="priors file (default: bundled)")
    if stochastic:
        _flag(p, "seed", type=int)
    _flag(p, "workers", type=int, help="parallel worker processes across environments")


def _add_noise_dims(p, dims: bool = True):
    _flag(p, "zero_prob", type=float)
    _flag(p, "scale_limit", type=float)
    if dims:
        _flag(p, "rooms", help="comma-separated room labels")
        _flag(p, "furniture_per_room", type=int)
        _flag(p, "objects_per_furniture", type=int)
        _bool(p, "use_layout", "take room/furniture plan from the grid layout")


def _add_task(p):
    _flag(p, "envs", type=int)
    _flag(p, "steps", type=int)
    _flag(p, "policy", choices=POLICIES)
    _flag(p, "dropout", type=float)
    _flag(p, "queries_per_step", type=int)
    _flag(p, "moved_query_prob", type=float)
    _flag(p, "threshold", type=float)
    _flag(p, "min_k", type=int)
    _flag(p, "hypothesis_mode", choices=("priors", "random"))
    _flag(p, "max_actions", type=int)
    _flag(p, "env_offset", type=int)
    _bool(p, "static_nodes", "disable object addition/removal")
    p.add_argument("--no-initial-sweep", dest="initial_sweep", action="store_false", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenemem", description="Dynamic scene-graph object search toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-env", help="sample an environment snapshot")
    _add_common(p, True)
    _add_noise_dims(p)

    p = sub.add_parser("evolve", help="advance a snapshot k steps")
    _add_common(p, False)
    _flag(p, "snapshot", help="env.json written by sample-env or evolve")
    _flag(p, "steps", type=int)

    p = sub.add_parser("collect", help="collect a labelled memory dataset")
    _add_common(p, True)
    _add_noise_dims(p)
    _add_task(p)

    p = sub.add_parser("train", help="train the node edge predictor")
    _add_common(p, True)
    _flag(p, "dataset")
    for name in ("no_priors", "no_transformer", "no_temporal", "no_semantic", "cross_query_attention"):
        _bool(p, name)
    _flag(p, "gcn_layers", type=int)
    _flag(p, "hidden", type=int)
    _flag(p, "lr", type=float)
    _flag(p, "epochs", type=int)
    _flag(p, "batch_size", type=int)

    p = sub.add_parser("eval", help="evaluate a policy on a task")
    _add_common(p, True)
    _add_noise_dims(p)
    _add_task(p)
    _flag(p, "task", help="predict-location, relative-likelihood or find-object")
    _flag(p, "checkpoint", help="model checkpoint for --policy nep")
    _flag(p, "variance", type=float)
    _bool(p, "oracle_cheat", "oracle also sees current object locations")

    p = sub.add_parser("igridson", help="embodied find-object episodes in the grid house")
    _add_common(p, True)
    _add_noise_dims(p, dims=False)
    _flag(p, "envs", type=int)
    _flag(p, "episodes", type=int)
    _flag(p, "max_actions", type=int)
    _flag(p, "policy", choices=POLICIES)
    _flag(p, "dropout", type=float)
    _flag(p, "moved_query_prob", type=float)
    _flag(p, "checkpoint")
    _flag(p, "layout")
    p.add_argument("--no-initial-sweep", dest="initial_sweep", action="store_false", default=None)
    p.add_argument("--no-render", dest="render", action="store_false", default=None)

    p = sub.add_parser("selftest", help="run the built-in invariant checks")
    _add_common(p, False)
    return parser


# --- config resolution -------------------------------------------------------------------

def _read_config(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    # a manifest nests the resolved config
    return doc["config"] if "manifest_format" in doc else doc


def resolve(args: argparse.Namespace) -> dict:
    cmd = args.command
    base = {"priors": None, "seed": None, **DEFAULTS[cmd]}
    file_cfg = _read_config(args.config) if args.config else {}
    unknown = sorted(set(file_cfg) - set(base) - {"workers", "command"})
    if unknown:
        raise UsageError(f"unknown config keys for {cmd}: {', '.join(unknown)}")
    cfg = {**base, **{k: v for k, v in file_cfg.items() if k in base}}
    for k in base:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if cmd in STOCHASTIC and cfg["seed"] is None:
        raise UsageError(f"{cmd} needs --seed (or a seed in the config file)")
    if isinstance(cfg.get("rooms"), str):
        cfg["rooms"] = [r.strip() for r in cfg["rooms"].split(",") if r.strip()]
    if "task" in cfg:
        task = str(cfg["task"]).replace("-", "_")
        aliases = {"predict_object_location": "predict_location",
                   "predict_relative_location_likelihood": "relative_likelihood"}
        task = aliases.get(task, task)
        if task not in TASKS:
            raise UsageError(f"unknown task {cfg['task']!r}; choose from {', '.join(TASKS)}")
        cfg["task"] = task
    if cfg.get("policy") == "nep" and not cfg.get("checkpoint"):
        raise UsageError("--policy nep needs --checkpoint")
    for key in ("snapshot", "dataset"):
        if key in cfg and not cfg[key]:
            raise UsageError(f"{cmd} needs --{key}")
    return cfg


def run_dir(root: str | Path, cmd: str, cfg: dict) -> Path:
    digest = hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:12]
    return Path(root) / f"{cmd}-{digest}"


def _write_manifest(out: Path, cmd: str, cfg: dict, outputs: list[str], extra: dict | None = None) -> None:
    doc = {"manifest_format": MANIFEST_FORMAT, "command": cmd, "version": __version__, "config": cfg,
           "seed": cfg.get("seed"), "outputs": sorted(outputs), **(extra or {})}
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _noise(cfg: dict) -> NoiseSpec:
    return NoiseSpec(cfg["zero_prob"], cfg["scale_limit"])


def _dims(cfg: dict) -> SceneDims:
    if cfg.get("use_layout"):
        from .igridson import load_layout
        return load_layout().scene_dims(cfg["objects_per_furniture"])
    kw = {"furniture_per_room": cfg["furniture_per_room"], "objects_per_furniture": cfg["objects_per_furniture"]}
    if cfg.get("rooms"):
        kw["rooms"] = tuple(cfg["rooms"])
    return SceneDims(**kw)


def task_config(cfg: dict, task: str = "predict_location") -> TaskConfig:
    return TaskConfig(
        task=task, n_envs=cfg["envs"], steps_per_env=cfg["steps"], dynamic_nodes=not cfg["static_nodes"],
        policy=cfg["policy"], detection_dropout=cfg["dropout"], queries_per_step=cfg["queries_per_step"],
        moved_query_prob=cfg["moved_query_prob"], threshold=cfg["threshold"], min_k=cfg["min_k"],
        hypothesis_mode=cfg["hypothesis_mode"], max_actions=cfg["max_actions"],
        initial_sweep=cfg["initial_sweep"], noise=_noise(cfg), dims=_dims(cfg), seed=cfg["seed"],
        env_offset=cfg["env_offset"])


def _policy(cfg: dict):
    from .evalharness import HeuristicScorer
    if cfg["policy"] == "nep":
        from .nep import NEPScorer, load_checkpoint
        path = Path(cfg["checkpoint"])
        if not path.is_file():
            raise FileNotFoundError(f"checkpoint not found: {path}")
        params, model_cfg = load_checkpoint(path)
        return NEPScorer(params, model_cfg)
    return HeuristicScorer(cfg["policy"], PolicyParams(cfg.get("variance", 0.05), cfg.get("oracle_cheat", False)))


# --- subcommands -----------------------------------------------------------------------

def cmd_sample_env(cfg, priors, out, workers):
    env = make_env(priors, _noise(cfg), _dims(cfg), cfg["seed"])
    (out / "env.json").write_text(env.to_json(), encoding="utf-8")
    sg = env.scene
    counts = {"rooms": len(sg.rooms()), "furniture": len(sg.furniture()), "objects": len(sg.objects())}
    print(f"rooms={counts['rooms']} furniture={counts['furniture']} objects={counts['objects']}")
    return ["env.json"], {"counts": counts}


def cmd_evolve(cfg, priors, out, workers):
    from .dhs import EnvInstance
    path = Path(cfg["snapshot"])
    if not path.is_file():
        raise FileNotFoundError(f"snapshot not found: {path}")
    env = EnvInstance.from_json(path.read_text(encoding="utf-8"), priors)
    lines = ["t,objects,moved"]
    for _ in range(cfg["steps"]):
        env = evolve(env)
        lines.append(f"{env.t},{env.scene.count_objects()},{len(env.last_moved)}")
    (out / "env.json").write_text(env.to_json(), encoding="utf-8")
    (out / "trace.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"t={env.t} objects={env.scene.count_objects()}")
    return ["env.json", "trace.csv"], {}


def cmd_collect(cfg, priors, out, workers):
    tc = task_config(cfg)
    path = collect_dataset(tc, priors, _policy(cfg), out / "dataset.jsonl.gz", workers)
    _, records = read_dataset(path)
    print(f"records={len(records)} -> {path}")
    return ["dataset.jsonl.gz"], {"records": len(records)}


def cmd_train(cfg, priors, out, workers):
    from .nep import ModelConfig, TrainConfig, groups_from_records, loss_trace_csv, save_checkpoint, train
    _, records = read_dataset(cfg["dataset"])
    model_cfg = ModelConfig(hidden=cfg["hidden"], use_transformer=not cfg["no_transformer"],
                            gcn_layers=cfg["gcn_layers"], cross_query_attention=cfg["cross_query_attention"],
                            no_priors=cfg["no_priors"], no_temporal=cfg["no_temporal"],
                            no_semantic=cfg["no_semantic"])
    tcfg = TrainConfig(learning_rate=cfg["lr"], epochs=cfg["epochs"], batch_size=cfg["batch_size"],
                       seed=cfg["seed"])
    result = train(groups_from_records(records, priors, model_cfg), tcfg, model_cfg)
    save_checkpoint(out / "checkpoint.npz", result.params, model_cfg)
    (out / "loss.csv").write_text(loss_trace_csv(result), encoding="utf-8")
    if result.epoch_loss:
        print(f"epochs={len(result.epoch_loss)} first={result.epoch_loss[0]:.4f} last={result.epoch_loss[-1]:.4f}")
    return ["checkpoint.npz", "loss.csv"], {}


def cmd_eval(cfg, priors, out, workers):
    tc = task_config(cfg, cfg["task"])
    summary = run_task(tc, priors, _policy(cfg), workers)
    (out / "metrics.csv").write_text(metrics_csv(summary), encoding="utf-8")
    (out / "env_means.csv").write_text(env_means_csv(summary), encoding="utf-8")
    print(f"{cfg['task']} {cfg['policy']}: mean={summary.mean:.4f} std={summary.std:.4f}")
    return ["metrics.csv", "env_means.csv"], {}


def _grid_env(args):
    from .igridson import run_env_episodes
    gcfg, priors, policy, i, layout = args
    return run_env_episodes(gcfg, priors, policy, i, layout)


def cmd_igridson(cfg, priors, out, workers):
    from concurrent.futures import ProcessPoolExecutor

    from .igridson import GridConfig, instantiate, load_layout, render
    layout = load_layout(cfg["layout"])
    gcfg = GridConfig(n_envs=cfg["envs"], episodes_per_env=cfg["episodes"], max_actions=cfg["max_actions"],
                      detection_dropout=cfg["dropout"], moved_query_prob=cfg["moved_query_prob"],
                      initial_sweep=cfg["initial_sweep"], noise=_noise(cfg), seed=cfg["seed"])
    policy = _policy(cfg)
    jobs = [(gcfg, priors, policy, i, layout) for i in range(gcfg.n_envs)]
    if workers <= 1:
        per_env = [_grid_env(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_env = list(pool.map(_grid_env, jobs))
    rows = ["env,episode,success,actions,path_length"]
    for i, results in enumerate(per_env):
        rows += [f"{i},{k},{int(r.success)},{r.actions},{r.path_length}" for k, r in enumerate(results)]
    flat = [r for results in per_env for r in results]
    summary = {"episodes": len(flat), "success_rate": float(np.mean([r.success for r in flat])),
               "mean_actions": float(np.mean([r.actions for r in flat])),
               "mean_path_length": float(np.mean([r.path_length for r in flat]))}
    (out / "episodes.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    outputs = ["episodes.csv", "summary.json"]
    if cfg["render"]:
        from ._rng import child_seed
        from .dhs import make_env as _make
        env = _make(priors, gcfg.noise, layout.scene_dims(), child_seed(gcfg.seed, "grid-env", 0))
        render(instantiate(env, layout), out, "house")
        outputs += ["house.txt", "house.ppm"]
    print(f"success={summary['success_rate']:.3f} actions={summary['mean_actions']:.2f} "
          f"path={summary['mean_path_length']:.1f}")
    return outputs, {"summary": summary}


def cmd_selftest(cfg, priors, out, workers):
    from .selftest import run_checks
    results = run_checks(priors)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}{': ' + detail if detail else ''}")
    (out / "selftest.txt").write_text(
        "".join(f"{'PASS' if ok else 'FAIL'} {name}\n" for name, ok, _ in results), encoding="utf-8")
    failed = [n for n, ok, _ in results if not ok]
    if failed:
        raise RuntimeError(f"selftest failed: {', '.join(failed)}")
    return ["selftest.txt"], {}


COMMANDS = {"sample-env": cmd_sample_env, "evolve": cmd_evolve, "collect": cmd_collect, "train": cmd_train,
            "eval": cmd_eval, "igridson": cmd_igridson, "selftest": cmd_selftest}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = resolve(args)
        workers = args.workers if args.workers is not None else 1
        if workers < 1:
            raise UsageError("--workers must be >= 1")
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"scenemem: error: {e}", file=sys.stderr)
        return 2
    out = run_dir(args.out or os.environ.get(OUT_ENV_VAR) or "runs", args.command, cfg)
    fresh = not out.exists()
    try:
        priors = load_priors(cfg["priors"])
        out.mkdir(parents=True, exist_ok=True)
        outputs, extra = COMMANDS[args.command](cfg, priors, out, workers)
        _write_manifest(out, args.command, cfg, outputs, extra)
        print(f"outputs in {out}")
    except Exception as e:  # noqa: BLE001 - report any runtime failure as one diagnostic line
        if fresh and out.is_dir() and not any(out.iterdir()):
            out.rmdir()
        print(f"scenemem: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
