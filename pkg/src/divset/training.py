"""Training loops: exact three-player iteration and sampled actor-critic.

Both trainers implement the same game. Each outer step,

  1. every policy's extrinsic value and expected features are measured
     (exactly, or from a rollout) and folded into the set's running
     estimates v~ / psi~ per the chosen averaging mode;
  2. the cost player turns the current feature estimates into a per-policy
     diversity reward (the gradient of that policy's objective term,
     evaluated at the averaged statistics -- the follow-the-leader view);
  3. the Lagrange player adjusts the extrinsic/diversity mixing weights
     from the constraint residuals v~_i - alpha v~_1;
  4. the policy player improves each policy against its mixed reward --
     an exact best response, or a policy-gradient step.

The exact trainer is deterministic given its seed (randomness only enters
through the initial policies). The sampled trainer is a tabular softmax
actor-critic with one critic per reward stream and n-step advantages,
deterministic given its seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .diversity import (
    DiversityConfig,
    DiversityKind,
    FeatureSet,
    diversity_reward,
    diversity_score,
    repulsive_objective,
    vdw_objective,
)
from .envs import base_states
from .mdp import (
    Criterion,
    Policy,
    TabularMdp,
    best_response,
    expected_features,
    occupancy,
    policy_value,
)
from .policy_set import (
    AdamState,
    MovingAverageConfig,
    PolicySet,
    constraint_indicator,
    init_set,
    lagrange_step,
    lagrange_step_adam,
    update_moving_averages,
)
from .strategies import StrategyConfig, StrategyKind, mix

__all__ = [
    "FtlMode",
    "ExactTrainConfig",
    "SampleTrainConfig",
    "TraceRecord",
    "TrainTrace",
    "Trajectory",
    "TrainingDivergedError",
    "rollout",
    "train_exact",
    "train_sampled",
]


class TrainingDivergedError(RuntimeError):
    """A learner table became non-finite."""


# Accepted relative-value-iteration plateau inside the exact trainer. Mixed
# rewards routinely produce greedy policies whose only exit from a region is
# stacked slip events; their bias magnitudes push the span's numerical floor
# above best_response's default acceptance. The greedy policy is already
# stable there and its gain error is bounded by the span, far below any
# constraint tolerance the trainer works with.
_BR_STALL_TOL = 1e-2


class FtlMode(str, Enum):
    # MovingAverage: exponentially decayed statistics (the online recipe).
    # FullAverage: uniform running means of the occupancies, the averaged
    # iterate whose convergence the follow-the-leader argument speaks about.
    MOVING_AVERAGE = "MovingAverage"
    FULL_AVERAGE = "FullAverage"


@dataclass(frozen=True)
class ExactTrainConfig:
    outer_iterations: int = 200
    criterion: Criterion = Criterion.AVERAGE
    lagrange_lr: float = 1.0
    ftl_mode: FtlMode = FtlMode.MOVING_AVERAGE
    moving_average: MovingAverageConfig = MovingAverageConfig()
    policy_init: str = "random"  # random rows break the initial symmetry
    seed: int = 0
    best_response_tol: float = 1e-9


@dataclass(frozen=True)
class SampleTrainConfig:
    total_episodes: int = 2000
    episode_length: int = 200  # fixed-horizon episodes with initial-state resets
    policy_lr: float = 0.5
    value_lr: float = 0.2
    entropy_weight: float = 0.01
    n_step: int = 5
    lagrange_lr: float = 1e-3
    lagrange_optimizer: str = "adam"  # "adam" | "sgd"
    moving_average: MovingAverageConfig = MovingAverageConfig()
    seed: int = 0
    eval_every: int = 100


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    extrinsic_values: np.ndarray  # (n,) exact values (exact mode) or v~ estimates
    sigma_mu: np.ndarray  # (n,) extrinsic mixing weights, anchor pinned to 1
    diversity_mean: float  # nearest-neighbour mean over the psi~ estimates
    diversity_mean_exact: float  # same, over exact expected features
    objective_value: float  # cost player's objective at the psi~ estimates


@dataclass
class TrainTrace:
    records: list[TraceRecord]


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (T,)
    actions: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,)
    features: np.ndarray  # (T, d)
    next_states: np.ndarray  # (T,)


def _objective(fset: FeatureSet, cfg: DiversityConfig) -> float:
    if fset.n < 2:
        return 0.0
    if cfg.kind == DiversityKind.VAN_DER_WAALS:
        return vdw_objective(fset, cfg.contact_distance)
    return repulsive_objective(fset)


def _sample_from_cdf(cdf_row: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cdf_row, u, side="right")), len(cdf_row) - 1)


def _rollout_core(
    mdp: TabularMdp,
    transition_cdf: np.ndarray,
    probs: np.ndarray,
    horizon: int,
    rng: np.random.Generator,
) -> Trajectory:
    A = mdp.num_actions
    policy_cdf = np.cumsum(probs, axis=1)
    initial_cdf = np.cumsum(mdp.initial_dist)
    draws = rng.random(2 * horizon + 1)
    s = _sample_from_cdf(initial_cdf, draws[0])
    states = np.empty(horizon, dtype=int)
    actions = np.empty(horizon, dtype=int)
    next_states = np.empty(horizon, dtype=int)
    for t in range(horizon):
        a = _sample_from_cdf(policy_cdf[s], draws[2 * t + 1])
        s_next = _sample_from_cdf(transition_cdf[s, a], draws[2 * t + 2])
        states[t], actions[t], next_states[t] = s, a, s_next
        s = s_next
    rewards = mdp.reward[states, actions]
    features = mdp.features[states * A + actions]
    return Trajectory(states, actions, rewards, features, next_states)


def rollout(
    mdp: TabularMdp, policy: Policy, horizon: int, rng: np.random.Generator
) -> Trajectory:
    """Sample one fixed-horizon episode from the initial distribution.

    The policy is indexed by the MDP's base states, so policies trained on
    an unperturbed MDP can be rolled out on its (possibly clock-expanded)
    perturbations unchanged.
    """
    probs = policy.probs[base_states(mdp)]
    return _rollout_core(mdp, np.cumsum(mdp.transition, axis=2), probs, horizon, rng)


def train_exact(
    mdp: TabularMdp,
    n: int,
    diversity_cfg: DiversityConfig,
    strategy_cfg: StrategyConfig,
    cfg: ExactTrainConfig,
) -> tuple[PolicySet, TrainTrace]:
    """Run the exact three-player loop for cfg.outer_iterations steps.

    The anchor's constraint reference is the exact optimal extrinsic value
    (computed once; the extrinsic reward never changes). Best responses
    warm-start from the previous iteration's value function. The returned
    trace has one record per iteration plus a final evaluation record for
    the policies as returned.
    """
    S, A, d = mdp.num_states, mdp.num_actions, mdp.feature_dim
    rng = np.random.default_rng(cfg.seed)
    pset = init_set(n, d, S, A, policy_init=cfg.policy_init, rng=rng)

    pi_star = best_response(
        mdp, mdp.reward, cfg.criterion, tol=cfg.best_response_tol, stall_tol=_BR_STALL_TOL
    )
    pset.vstar_estimate = policy_value(mdp, occupancy(mdp, pi_star, cfg.criterion))

    features_sa = mdp.features_sa
    zero_reward = np.zeros_like(mdp.reward)
    warm: list[np.ndarray | None] = [None] * n
    run_d = np.zeros((n, S * A))  # running-mean occupancies (FullAverage)
    run_v = np.zeros(n)
    records: list[TraceRecord] = []

    def measure() -> tuple[np.ndarray, np.ndarray, list]:
        occs = [occupancy(mdp, pset.policies[i], cfg.criterion) for i in range(n)]
        values = np.array([policy_value(mdp, o) for o in occs])
        psis = np.stack([expected_features(mdp, o) for o in occs])
        return values, psis, occs

    # Seed the follow-the-leader state with the initial policies' true
    # statistics. Exact mode has no estimation phase, and starting every
    # feature row at the same prior would make the initial pairwise
    # distances (hence the diversity rewards) vanishingly small, which can
    # lock members onto identical best responses before the multipliers
    # react.
    init_values, init_psis, _ = measure()
    pset.avg_psi[:] = init_psis
    pset.avg_value[:] = init_values

    for k in range(cfg.outer_iterations):
        values, psis, occs = measure()
        if cfg.ftl_mode == FtlMode.FULL_AVERAGE:
            for i in range(n):
                run_d[i] += (occs[i].d - run_d[i]) / (k + 1)
            run_v += (values - run_v) / (k + 1)
            pset.avg_psi[:] = run_d @ mdp.features
            pset.avg_value[:] = run_v
        else:
            for i in range(n):
                update_moving_averages(pset, i, values[i], psis[i], cfg.moving_average)

        records.append(
            TraceRecord(
                iteration=k,
                extrinsic_values=values,
                sigma_mu=pset.extrinsic_weights(),
                diversity_mean=diversity_score(FeatureSet(pset.avg_psi)).mean,
                diversity_mean_exact=diversity_score(FeatureSet(psis)).mean,
                objective_value=_objective(FeatureSet(pset.avg_psi), diversity_cfg),
            )
        )

        fset = FeatureSet(pset.avg_psi.copy())
        rewards_d = [zero_reward]
        rewards_d += [
            diversity_reward(features_sa, fset, i, diversity_cfg) for i in range(1, n)
        ]

        if strategy_cfg.kind == StrategyKind.DOMINO_LAGRANGIAN:
            lagrange_step(pset, strategy_cfg.alpha, cfg.lagrange_lr)

        for i in range(n):
            r_i = mix(strategy_cfg, mdp.reward, rewards_d[i], pset, i)
            pset.policies[i], warm[i] = best_response(
                mdp,
                r_i,
                cfg.criterion,
                tol=cfg.best_response_tol,
                stall_tol=_BR_STALL_TOL,
                v_init=warm[i],
                return_values=True,
            )

    values, psis, _ = measure()
    records.append(
        TraceRecord(
            iteration=cfg.outer_iterations,
            extrinsic_values=values,
            sigma_mu=pset.extrinsic_weights(),
            diversity_mean=diversity_score(FeatureSet(pset.avg_psi)).mean,
            diversity_mean_exact=diversity_score(FeatureSet(psis)).mean,
            objective_value=_objective(FeatureSet(pset.avg_psi), diversity_cfg),
        )
    )
    return pset, TrainTrace(records)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _nstep_returns(
    rewards: np.ndarray, values: np.ndarray, state_seq: np.ndarray, gamma: float, n: int
) -> np.ndarray:
    """G_t = sum_{k<min(n, T-t)} gamma^k r_{t+k} + gamma^{min(n, T-t)} V(s_...).

    state_seq has length T+1 (the visited states plus the final next
    state), so the truncated tail always bootstraps at an observed state.
    """
    T = len(rewards)
    G = np.zeros(T)
    gpow = 1.0
    for k in range(min(n, T)):
        G[: T - k] += gpow * rewards[k:]
        gpow *= gamma
    n_eff = np.minimum(n, T - np.arange(T))
    boot = np.minimum(np.arange(T) + n, T)
    G += gamma**n_eff * values[state_seq[boot]]
    return G


def _advantage_weights(
    strategy: StrategyConfig, pset: PolicySet, i: int
) -> tuple[float, float]:
    """(extrinsic, diversity) coefficients; mixing advantages with them is
    reward-level mixing with the matching mixed critic baseline."""
    if i == 0 or strategy.kind == StrategyKind.NO_DIVERSITY:
        return 1.0, 0.0
    if strategy.kind == StrategyKind.DOMINO_LAGRANGIAN:
        w = pset.extrinsic_weight(i)
        return w, 1.0 - w
    if strategy.kind == StrategyKind.SMERL:
        violated = constraint_indicator(pset, i, strategy.alpha)
        return 1.0, 0.0 if violated else strategy.c_d
    if strategy.kind == StrategyKind.REVERSE_SMERL:
        violated = constraint_indicator(pset, i, strategy.alpha)
        return (1.0 if violated else 0.0), strategy.c_d
    if strategy.kind == StrategyKind.MULTI_OBJECTIVE:
        return strategy.c_e, 1.0 - strategy.c_e
    raise ValueError(f"unknown strategy kind {strategy.kind!r}")


def train_sampled(
    mdp: TabularMdp,
    n: int,
    diversity_cfg: DiversityConfig,
    strategy_cfg: StrategyConfig,
    cfg: SampleTrainConfig,
) -> tuple[PolicySet, TrainTrace]:
    """Tabular softmax actor-critic over latent-indexed policies.

    Per episode one latent z is drawn, one fixed-horizon episode is rolled
    out with policy z, and z's tables get one batched update: n-step
    advantages per reward stream (extrinsic critic and diversity critic),
    combined with the strategy's mixing weights, plus an entropy bonus.
    The diversity reward is rebuilt from the psi~ snapshot each episode.
    """
    S, A, d = mdp.num_states, mdp.num_actions, mdp.feature_dim
    rng = np.random.default_rng(cfg.seed)
    logits = np.zeros((n, S, A))
    v_e = np.zeros((n, S))
    v_d = np.zeros((n, S))
    pset = init_set(n, d, S, A, policy_init="uniform")
    adam = AdamState.zeros(max(n - 1, 1))
    transition_cdf = np.cumsum(mdp.transition, axis=2)
    features_sa = mdp.features_sa
    gamma = mdp.discount
    records: list[TraceRecord] = []

    def record(it: int) -> None:
        exact_psis = []
        for i in range(n):
            occ = occupancy(mdp, Policy(_softmax(logits[i])), Criterion.AVERAGE)
            exact_psis.append(expected_features(mdp, occ))
        records.append(
            TraceRecord(
                iteration=it,
                extrinsic_values=pset.avg_value.copy(),
                sigma_mu=pset.extrinsic_weights(),
                diversity_mean=diversity_score(FeatureSet(pset.avg_psi)).mean,
                diversity_mean_exact=diversity_score(FeatureSet(np.stack(exact_psis))).mean,
                objective_value=_objective(FeatureSet(pset.avg_psi), diversity_cfg),
            )
        )

    for ep in range(cfg.total_episodes):
        z = int(rng.integers(n))
        probs = _softmax(logits[z])
        traj = _rollout_core(mdp, transition_cdf, probs, cfg.episode_length, rng)
        T = cfg.episode_length

        if z > 0 and n >= 2:
            r_d_mat = diversity_reward(
                features_sa, FeatureSet(pset.avg_psi.copy()), z, diversity_cfg
            )
        else:
            r_d_mat = np.zeros((S, A))
        r_d_t = r_d_mat[traj.states, traj.actions]

        state_seq = np.append(traj.states, traj.next_states[-1])
        targ_e = _nstep_returns(traj.rewards, v_e[z], state_seq, gamma, cfg.n_step)
        targ_d = _nstep_returns(r_d_t, v_d[z], state_seq, gamma, cfg.n_step)
        adv_e = targ_e - v_e[z][traj.states]
        adv_d = targ_d - v_d[z][traj.states]
        w_ext, w_div = _advantage_weights(strategy_cfg, pset, z)
        adv = w_ext * adv_e + w_div * adv_d

        pi_visited = probs[traj.states]
        grad = np.zeros((S, A))
        np.add.at(grad, (traj.states, traj.actions), adv)
        np.add.at(grad, traj.states, -adv[:, None] * pi_visited)
        if cfg.entropy_weight > 0.0:
            logp = np.log(np.clip(pi_visited, 1e-30, None))
            ent = -(pi_visited * logp).sum(axis=1)
            np.add.at(
                grad,
                traj.states,
                -cfg.entropy_weight * pi_visited * (logp + ent[:, None]),
            )
        logits[z] += cfg.policy_lr * grad / T

        for table, targets in ((v_e[z], targ_e), (v_d[z], targ_d)):
            tsum = np.zeros(S)
            tcnt = np.zeros(S)
            np.add.at(tsum, traj.states, targets)
            np.add.at(tcnt, traj.states, 1.0)
            mask = tcnt > 0
            table[mask] += cfg.value_lr * (tsum[mask] / tcnt[mask] - table[mask])

        update_moving_averages(pset, z, traj.rewards, traj.features, cfg.moving_average)
        pset.vstar_estimate = float(pset.avg_value[0])
        if strategy_cfg.kind == StrategyKind.DOMINO_LAGRANGIAN and n > 1:
            if cfg.lagrange_optimizer == "adam":
                lagrange_step_adam(pset, strategy_cfg.alpha, cfg.lagrange_lr, adam)
            elif cfg.lagrange_optimizer == "sgd":
                lagrange_step(pset, strategy_cfg.alpha, cfg.lagrange_lr)
            else:
                raise ValueError(f"unknown lagrange_optimizer {cfg.lagrange_optimizer!r}")

        if not (
            np.all(np.isfinite(logits[z]))
            and np.all(np.isfinite(v_e[z]))
            and np.all(np.isfinite(v_d[z]))
        ):
            raise TrainingDivergedError(f"non-finite learner table after episode {ep}")

        if (ep + 1) % cfg.eval_every == 0 or ep + 1 == cfg.total_episodes:
            pset.policies = [Policy(_softmax(logits[i])) for i in range(n)]
            record(ep + 1)

    pset.policies = [Policy(_softmax(logits[i])) for i in range(n)]
    return pset, TrainTrace(records)
