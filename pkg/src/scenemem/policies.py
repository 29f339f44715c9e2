"""Heuristic baseline policies that score the candidate edges of a query node."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import rng_for
from .dhs import EnvInstance
from .priors import PriorsGraph
from .sgm import SceneGraphMemory, _edge_sort_key

POLICY_KINDS = ("random", "priors", "frequentist", "myopic", "bayesian", "oracle")
MU_CLAMP = 1e-4
DEFAULT_VARIANCE = 0.05


@dataclass(frozen=True)
class BetaBelief:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"beta parameters must be positive, got ({self.alpha}, {self.beta})")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


def beta_from_prior(mu: float, v: float = DEFAULT_VARIANCE) -> BetaBelief:
    """Moment-matched beta prior; ``v`` is capped at mu(1-mu)/2 so both parameters stay positive."""
    if not v > 0:
        raise ValueError("variance must be positive")
    mu = min(max(mu, MU_CLAMP), 1.0 - MU_CLAMP)
    v = min(v, mu * (1.0 - mu) / 2.0)
    alpha = mu * mu * ((1.0 - mu) / v - 1.0 / mu)
    return BetaBelief(alpha, alpha * (1.0 / mu - 1.0))


def posterior_predictive(b: BetaBelief, successes: int, trials: int) -> float:
    if not 0 <= successes <= trials:
        raise ValueError("need 0 <= successes <= trials")
    a_n = b.alpha + successes
    b_n = b.beta + (trials - successes)
    return a_n / (a_n + b_n)


@dataclass(frozen=True)
class PolicyParams:
    variance: float = DEFAULT_VARIANCE
    oracle_cheat: bool = False


def _oracle_scores(m: SceneGraphMemory, env: EnvInstance, query_id, candidates, cheat: bool) -> list[float]:
    """Per instance: stay at the last sighting with prob (1-q)^k, otherwise follow the true dynamics.

    q is the instance's per-step move probability and k the steps since the
    memory last saw the description. Instances combine as 1 - prod(1 - p_i).
    """
    sg = env.scene
    instances = [o for o in sg.objects() if sg.nodes[o].description == query_id]
    node = m.nodes.get(query_id)
    seen = node is not None and node.last_observed_t is not None and node.last_locations
    at_last = np.zeros(len(candidates))
    if seen:
        last = set(node.last_locations)
        at_last = np.array([1.0 / len(last) if k[0] in last else 0.0 for k in candidates])
    miss = np.ones(len(candidates))
    for o in instances:
        dist = env.dynamics.get(o, {})
        moved = np.array([dist.get((k[0], k[2]), 0.0) for k in candidates])
        stay = (1.0 - env.move_probability(o)) ** (env.t - node.last_observed_t) if seen else 0.0
        miss *= 1.0 - (stay * at_last + (1.0 - stay) * moved)
    scores = 1.0 - miss
    if cheat:
        here = {sg.location_of(o)[0] for o in instances}
        # halving keeps every other edge strictly below the current location
        scores = np.array([1.0 if k[0] in here else 0.5 * s for k, s in zip(candidates, scores)])
    return scores.tolist()


def score_candidates(kind: str, m: SceneGraphMemory, env: EnvInstance | None, p: PriorsGraph | None,
                     query_id, candidates, seed: int = 0,
                     params: PolicyParams = PolicyParams()) -> list[tuple[tuple, float]]:
    if kind not in POLICY_KINDS:
        raise ValueError(f"unknown policy kind {kind!r}")
    if not candidates:
        raise ValueError("no candidates to score")
    for k in candidates:
        if k not in m.edges or k[1] != query_id:
            raise KeyError(f"unknown candidate {k!r} for query {query_id!r}")
    edges = [m.edges[k] for k in candidates]

    def uniform():
        return rng_for(seed, "policy", kind, query_id, m.t).random(len(candidates)).tolist()

    if kind == "random":
        scores = uniform()
    elif kind == "priors":
        scores = [e.prior_prob for e in edges]
    elif kind == "frequentist":
        if all(e.times_observed == 0 for e in edges):
            scores = uniform()
        else:
            scores = [e.true_frequency for e in edges]
    elif kind == "myopic":
        seen = [e.last_true_t for e in edges if e.last_true_t is not None]
        if not seen:
            scores = uniform()
        else:
            latest = max(seen)
            scores = [1.0 if e.last_true_t == latest else 0.0 for e in edges]
    elif kind == "bayesian":
        scores = [posterior_predictive(beta_from_prior(e.prior_prob, params.variance),
                                       e.times_true, e.times_observed) for e in edges]
    else:
        if env is None:
            raise ValueError("the oracle policy needs the ground-truth environment")
        scores = _oracle_scores(m, env, query_id, candidates, params.oracle_cheat)
    return list(zip(candidates, scores))


def choose(scores) -> tuple:
    """Highest score; ties go to the lowest (parent id, relation)."""
    if not scores:
        raise ValueError("nothing to choose from")
    return min(scores, key=lambda ks: (-ks[1], _edge_sort_key(ks[0])))[0]
