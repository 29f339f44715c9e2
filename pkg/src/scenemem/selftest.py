"""Fast invariant checks behind ``scenemem selftest``."""

from __future__ import annotations

import math

import numpy as np

from ._rng import child_seed
from .dhs import NoiseSpec, evolve, make_env
from .policies import beta_from_prior, posterior_predictive
from .priors import PriorsGraph
from .scenegraph import observe
from .sgm import SceneGraphMemory


def _scene_counts(p):
    for seed in range(5):
        sg = make_env(p, seed=seed).scene
        got = (len(sg.rooms()), len(sg.furniture()), len(sg.objects()))
        if got != (4, 32, 192):
            return False, f"seed {seed}: {got}"
    return True, ""


def _evolution_bounds(p):
    env = make_env(p, seed=1)
    lo, hi = env.min_objects, env.max_objects
    for _ in range(100):
        env = evolve(env)
        env.scene.check_tree()
        n = env.scene.count_objects()
        if not lo <= n <= hi:
            return False, f"t={env.t}: {n} objects outside [{lo}, {hi}]"
    return True, ""


def _closed_forms(p):
    b = beta_from_prior(0.5, 0.05)
    pp = posterior_predictive(b, 3, 3)
    ok = abs(b.alpha - 2) < 1e-12 and abs(b.beta - 2) < 1e-12 and abs(pp - 5 / 7) < 1e-12
    return ok, "" if ok else f"got {b}, {pp}"


def _toy_memory(p, seed=0):
    env = make_env(p, NoiseSpec(), seed=seed)
    env = evolve(env)
    m = SceneGraphMemory(p, seed=seed)
    m.seed_structure(env.scene)
    m.advance(env.t)
    m.integrate_observation(observe(env.scene, env.scene.furniture()[:6], 0.25, child_seed(seed, "obs"), t=env.t))
    for oid in env.scene.objects()[:3]:
        m.add_query(env.scene.nodes[oid].description)
    return m


def _mask_equivalence(p):
    from .nep import ModelConfig, forward, init_params, samples_from_memory
    cfg = ModelConfig(hidden=8, ffn=8, head_hidden=8)
    params = init_params(cfg, 3)
    samples = samples_from_memory(_toy_memory(p), cfg)
    batched = forward(params, samples, cfg)
    worst = max(float(np.max(np.abs(b - forward(params, [s], cfg)[0]))) for b, s in zip(batched, samples))
    return worst <= 1e-9, f"max diff {worst:.2e}"


def _gradient_spot_check(p):
    from .nep import ModelConfig, gradients, init_params, samples_from_memory
    from .nep.train import batch_loss
    from .nep.model import as_tensors, make_batch
    cfg = ModelConfig(hidden=4, ffn=4, head_hidden=4, embed_layers=1, encoder_layers=1)
    m = _toy_memory(p)
    samples = samples_from_memory(m, cfg)
    rng = np.random.default_rng(0)
    for s in samples:
        s.labels = rng.random(len(s.keys)) < 0.3
        s.labels[0] = True
    params = init_params(cfg, 1)
    _, grads = gradients(params, samples, cfg)
    batch = make_batch(samples, cfg)

    def loss_at(k, idx, delta):
        q = {n: v.copy() for n, v in params.items()}
        q[k][idx] += delta
        return float(batch_loss(as_tensors(q), batch, cfg).data)

    worst = 0.0
    for k in sorted(params):
        idx = np.unravel_index(int(np.argmax(np.abs(grads[k]))), params[k].shape)
        fd = (loss_at(k, idx, 1e-5) - loss_at(k, idx, -1e-5)) / 2e-5
        g = grads[k][idx]
        worst = max(worst, abs(fd - g) / max(abs(fd), abs(g), 1e-8))
    return worst < 1e-4, f"worst relative error {worst:.1e}"


def _layout(p):
    from .igridson import instantiate, load_layout
    layout = load_layout()
    st = instantiate(make_env(p, dims=layout.scene_dims(), seed=0), layout)
    ok = len(layout.slots) == 21 and len(st.binding) == 21
    return ok, f"{len(layout.slots)} slots"


CHECKS = [
    ("scene composition", _scene_counts),
    ("evolution bounds", _evolution_bounds),
    ("beta closed forms", _closed_forms),
    ("batched forward equals unbatched", _mask_equivalence),
    ("gradient spot check", _gradient_spot_check),
    ("grid layout binds", _layout),
]


def run_checks(priors: PriorsGraph) -> list[tuple[str, bool, str]]:
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn(priors)
        except Exception as e:  # noqa: BLE001 - a crashing check is a failed check
            ok, detail = False, f"{type(e).__name__}: {e}"
        out.append((name, bool(ok) and not (isinstance(ok, float) and math.isnan(ok)), detail))
    return out
