"""Diversity objectives over sets of expected-feature vectors.

A set of n policies is summarised by its expected features psi^i = Phi^T d^i.
Diversity is measured through nearest-neighbour distances
l_i = min_{j != i} ||psi^i - psi^j||_2 and maximised by giving each policy a
reward equal to the gradient of its own objective term with respect to its
occupancy. Because psi is linear in d, that gradient is always of the form

    r_i(s, a) = c(l_i) * phi(s, a) . (psi^i - psi^{j*_i}),

with a scalar coefficient c depending on the objective:

    repulsive       f_i = 0.5 l_i^2                      c = 1
    van der Waals   f_i = 0.5 l_i^2 - 0.2 l_i^5 / l0^3   c = 1 - (l_i / l0)^3
    generalized     c = (1 - a) (l_i / l0)^p_r - a (l_i / l0)^p_a

The van der Waals form has its per-pair maximum exactly at l_i = l0 (the
contact distance), giving attraction beyond l0 and repulsion inside it. The
generalized family reproduces repulsive at (a=0, p_r=0) and, at
(a=0.5, p_r=0, p_a=3), one half of the van der Waals coefficient.

Reward scaling conventions differ between the closed forms above
(RewardScaling.PAPER_EXACT, the default) and a variant that additionally
divides by the feature dimension (RewardScaling.APPENDIX_CODE). Both are
exposed; they differ by a positive constant factor, which best responses
ignore but gradient-based learners feel through the step size.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "DiversityKind",
    "RewardScaling",
    "DiversityConfig",
    "FeatureSet",
    "DiversityScore",
    "nearest_index",
    "repulsive_objective",
    "vdw_objective",
    "diversity_reward",
    "diversity_score",
]


class DiversityKind(str, Enum):
    REPULSIVE = "Repulsive"
    VAN_DER_WAALS = "VanDerWaals"
    GENERALIZED = "Generalized"


class RewardScaling(str, Enum):
    PAPER_EXACT = "PaperExact"
    APPENDIX_CODE = "AppendixCode"


@dataclass(frozen=True)
class DiversityConfig:
    kind: DiversityKind = DiversityKind.REPULSIVE
    contact_distance: float = 1.0  # l0; only meaningful for VDW / generalized
    attractive_power: float = 3.0
    repulsive_power: float = 0.0
    attractive_coeff: float = 0.5
    scaling: RewardScaling = RewardScaling.PAPER_EXACT

    def __post_init__(self) -> None:
        if self.kind != DiversityKind.REPULSIVE and self.contact_distance <= 0.0:
            raise ValueError(f"contact_distance must be positive, got {self.contact_distance}")
        if self.kind == DiversityKind.GENERALIZED:
            if self.attractive_power <= self.repulsive_power:
                raise ValueError(
                    "attractive_power must exceed repulsive_power "
                    f"({self.attractive_power} <= {self.repulsive_power})"
                )
            if not 0.0 <= self.attractive_coeff <= 1.0:
                raise ValueError(f"attractive_coeff must be in [0, 1], got {self.attractive_coeff}")


@dataclass(frozen=True)
class FeatureSet:
    """Expected-feature vectors of a policy set, one row per policy."""

    psis: np.ndarray  # (n, d)

    @property
    def n(self) -> int:
        return self.psis.shape[0]

    @property
    def dim(self) -> int:
        return self.psis.shape[1]


@dataclass(frozen=True)
class DiversityScore:
    mean: float
    total: float
    per_policy: np.ndarray  # nearest-neighbour distance l_i per policy


def _pairwise_distances(psis: np.ndarray) -> np.ndarray:
    diff = psis[:, None, :] - psis[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def nearest_index(fset: FeatureSet, i: int) -> tuple[int, float]:
    """Index of and distance to the nearest other member (ties: lowest index)."""
    if fset.n < 2:
        raise ValueError("nearest_index needs at least two members")
    dists = np.linalg.norm(fset.psis - fset.psis[i], axis=1)
    dists[i] = np.inf
    j = int(np.argmin(dists))
    return j, float(dists[j])


def repulsive_objective(fset: FeatureSet) -> float:
    """0.5 sum_i min_{j != i} ||psi^i - psi^j||^2."""
    dists = _pairwise_distances(fset.psis)
    np.fill_diagonal(dists, np.inf)
    return float(0.5 * (dists.min(axis=1) ** 2).sum())


def vdw_objective(fset: FeatureSet, contact_distance: float) -> float:
    """sum_i [0.5 l_i^2 - 0.2 l_i^5 / l0^3]; per-pair maximum at l_i = l0."""
    dists = _pairwise_distances(fset.psis)
    np.fill_diagonal(dists, np.inf)
    l = dists.min(axis=1)
    return float((0.5 * l**2 - 0.2 * l**5 / contact_distance**3).sum())


def _coefficient(l: float, cfg: DiversityConfig) -> float:
    if cfg.kind == DiversityKind.REPULSIVE:
        return 1.0
    x = l / cfg.contact_distance
    if cfg.kind == DiversityKind.VAN_DER_WAALS:
        return 1.0 - x**3
    a = cfg.attractive_coeff
    return (1.0 - a) * x**cfg.repulsive_power - a * x**cfg.attractive_power


def diversity_reward(
    features_sa: np.ndarray, fset: FeatureSet, i: int, cfg: DiversityConfig
) -> np.ndarray:
    """Per-pair gradient reward for member i, as an (S, A) matrix.

    features_sa is the MDP's feature tensor reshaped to (S, A, d). When
    member i coincides with its nearest neighbour (l_i = 0) the difference
    vector vanishes and the reward is identically zero; this also guards
    the negative-power generalized coefficients, which diverge at l = 0.
    """
    j, l = nearest_index(fset, i)
    if l == 0.0:
        return np.zeros(features_sa.shape[:2])
    diff = fset.psis[i] - fset.psis[j]
    reward = _coefficient(l, cfg) * (features_sa @ diff)
    if cfg.scaling == RewardScaling.APPENDIX_CODE:
        reward = reward / fset.dim
    return reward


def diversity_score(fset: FeatureSet) -> DiversityScore:
    """Mean (and sum of) nearest-neighbour distances; zero for singletons."""
    if fset.n < 2:
        return DiversityScore(mean=0.0, total=0.0, per_policy=np.zeros(fset.n))
    dists = _pairwise_distances(fset.psis)
    np.fill_diagonal(dists, np.inf)
    per = dists.min(axis=1)
    return DiversityScore(mean=float(per.mean()), total=float(per.sum()), per_policy=per)
