"""Few-shot robustness evaluation of trained policy sets.

Protocol, per perturbed MDP and per training seed: roll k_select episodes
with every member of the set, pick the member with the highest mean return
(ties to the lowest index), then evaluate the pick for n_eval fresh
episodes. The figure of merit is the ratio of that evaluation return to
the same protocol applied to a single-policy baseline set.

Episode returns are undiscounted sums over the fixed horizon. All episode
streams are derived from (seed, role, train seed, episode[, member]) and
never from the method, so competing methods face identical environment
randomness: the baseline evaluated against itself gives a ratio of
exactly 1. Aggregation across training seeds uses a nested bootstrap
(resample seeds, then episodes within each seed) so both levels of
variance reach the interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mdp import TabularMdp
from .policy_set import PolicySet
from .seeding import child_rng, hash64
from .training import rollout

__all__ = [
    "KShotConfig",
    "KShotResult",
    "episode_return",
    "kshot_select",
    "kshot_evaluate",
    "bootstrap_ci",
]


@dataclass(frozen=True)
class KShotConfig:
    k_select: int = 10
    n_eval: int = 40
    horizon: int = 200
    n_train_seeds: int = 5
    ci_level: float = 0.95
    bootstrap_resamples: int = 2000


@dataclass(frozen=True)
class KShotResult:
    ratio_mean: float  # nan (with flag) when some baseline mean is <= 0
    ci_low: float
    ci_high: float
    abs_return_mean: float
    baseline_return_mean: float
    per_seed_ratios: np.ndarray
    per_seed_returns: np.ndarray  # (seeds, n_eval)
    per_seed_baseline_returns: np.ndarray  # (seeds, n_eval)
    selected_indices: np.ndarray
    baseline_nonpositive: bool


def episode_return(mdp: TabularMdp, policy, horizon: int, rng: np.random.Generator) -> float:
    return float(rollout(mdp, policy, horizon, rng).rewards.sum())


def kshot_select(pset: PolicySet, perturbed: TabularMdp, cfg: KShotConfig, seed: int) -> int:
    """Index of the member with the best mean return over k_select episodes.

    Episode streams depend on (seed, member, episode) only, so the same
    member index sees the same randomness whichever set it belongs to.
    """
    means = np.empty(pset.n)
    for i, policy in enumerate(pset.policies):
        returns = [
            episode_return(perturbed, policy, cfg.horizon, child_rng(seed, i, e))
            for e in range(cfg.k_select)
        ]
        means[i] = np.mean(returns)
    return int(np.argmax(means))


def _eval_policy(
    mdp: TabularMdp, policy, cfg: KShotConfig, seed: int, t: int
) -> np.ndarray:
    return np.array(
        [
            episode_return(mdp, policy, cfg.horizon, child_rng(seed, "eval", t, e))
            for e in range(cfg.n_eval)
        ]
    )


def kshot_evaluate(
    sets: Sequence[PolicySet],
    perturbed: TabularMdp,
    baselines: Sequence[PolicySet],
    cfg: KShotConfig,
    seed: int,
) -> KShotResult:
    """Full protocol over per-training-seed (set, baseline) pairs.

    sets[t] and baselines[t] must come from the same training seed. The
    per-seed ratio divides matched evaluation means (identical episode
    streams); the CI is a paired nested bootstrap of the mean ratio.
    """
    if len(sets) != len(baselines):
        raise ValueError(f"got {len(sets)} sets but {len(baselines)} baselines")
    n_seeds = len(sets)
    selected = np.empty(n_seeds, dtype=int)
    returns = np.empty((n_seeds, cfg.n_eval))
    base_returns = np.empty((n_seeds, cfg.n_eval))
    for t in range(n_seeds):
        idx = kshot_select(sets[t], perturbed, cfg, hash64(seed, "select", t))
        base_idx = kshot_select(baselines[t], perturbed, cfg, hash64(seed, "select", t))
        selected[t] = idx
        returns[t] = _eval_policy(perturbed, sets[t].policies[idx], cfg, seed, t)
        base_returns[t] = _eval_policy(
            perturbed, baselines[t].policies[base_idx], cfg, seed, t
        )

    base_means = base_returns.mean(axis=1)
    nonpositive = bool(np.any(base_means <= 0.0))
    ratios = np.full(n_seeds, np.nan)
    np.divide(returns.mean(axis=1), base_means, out=ratios, where=base_means > 0.0)
    if nonpositive:
        ratio_mean, ci_low, ci_high = float("nan"), float("nan"), float("nan")
    else:
        ratio_mean = float(ratios.mean())
        ci_low, ci_high = _paired_ratio_ci(
            returns, base_returns, cfg.ci_level, cfg.bootstrap_resamples, hash64(seed, "ci")
        )
    return KShotResult(
        ratio_mean=ratio_mean,
        ci_low=ci_low,
        ci_high=ci_high,
        abs_return_mean=float(returns.mean()),
        baseline_return_mean=float(base_returns.mean()),
        per_seed_ratios=ratios,
        per_seed_returns=returns,
        per_seed_baseline_returns=base_returns,
        selected_indices=selected,
        baseline_nonpositive=nonpositive,
    )


def bootstrap_ci(
    samples: Sequence[np.ndarray],
    level: float = 0.95,
    resamples: int = 2000,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile CI for the mean of per-group means of nested data.

    Resamples groups with replacement, then observations within each
    chosen group, so group-level variance widens the interval even when
    within-group scatter is tiny.
    """
    groups = [np.asarray(g, dtype=float) for g in samples]
    if not groups or any(len(g) == 0 for g in groups):
        raise ValueError("bootstrap_ci needs nonempty groups")
    rng = np.random.default_rng(seed)
    k = len(groups)
    stats = np.empty(resamples)
    for b in range(resamples):
        chosen = rng.integers(k, size=k)
        stats[b] = np.mean(
            [np.mean(rng.choice(groups[g], size=len(groups[g]))) for g in chosen]
        )
    lo = (1.0 - level) / 2.0 * 100.0
    return float(np.percentile(stats, lo)), float(np.percentile(stats, 100.0 - lo))


def _paired_ratio_ci(
    returns: np.ndarray,
    base_returns: np.ndarray,
    level: float,
    resamples: int,
    seed: int,
) -> tuple[float, float]:
    """Nested bootstrap of the mean per-seed ratio, resampling both sides."""
    rng = np.random.default_rng(seed)
    n_seeds, n_eval = returns.shape
    stats = np.full(resamples, np.nan)
    for b in range(resamples):
        chosen = rng.integers(n_seeds, size=n_seeds)
        ratios = np.empty(n_seeds)
        for j, t in enumerate(chosen):
            m = returns[t, rng.integers(n_eval, size=n_eval)].mean()
            base = base_returns[t, rng.integers(n_eval, size=n_eval)].mean()
            ratios[j] = m / base if base > 0 else np.nan
        stats[b] = np.mean(ratios)
    stats = stats[np.isfinite(stats)]
    lo = (1.0 - level) / 2.0 * 100.0
    return float(np.percentile(stats, lo)), float(np.percentile(stats, 100.0 - lo))
