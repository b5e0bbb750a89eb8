"""Diversity objectives, rewards, and their gradient identity."""

import numpy as np
import pytest

from divset import (
    DiversityConfig,
    DiversityKind,
    FeatureSet,
    RewardScaling,
    diversity_reward,
    diversity_score,
    nearest_index,
    repulsive_objective,
    vdw_objective,
)


def test_nearest_index_picks_closest_and_breaks_ties_low():
    fset = FeatureSet(np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 1.0]]))
    j, dist = nearest_index(fset, 0)
    assert (j, dist) == (2, 1.0)
    # equidistant neighbours resolve to the lowest index
    tied = FeatureSet(np.array([[0.0], [1.0], [-1.0]]))
    assert nearest_index(tied, 0)[0] == 1
    with pytest.raises(ValueError):
        nearest_index(FeatureSet(np.zeros((1, 2))), 0)


def test_repulsive_objective_hand_value():
    fset = FeatureSet(np.array([[0.0, 0.0], [1.0, 0.0], [4.0, 0.0]]))
    # nearest-neighbour distances are 1, 1, 3
    assert repulsive_objective(fset) == pytest.approx(0.5 * (1 + 1 + 9))


def test_vdw_objective_peaks_at_the_contact_distance():
    l0 = 2.0
    values = {
        l: vdw_objective(FeatureSet(np.array([[0.0], [l]])), l0)
        for l in np.linspace(0.2, 4.0, 39)
    }
    at_l0 = vdw_objective(FeatureSet(np.array([[0.0], [l0]])), l0)
    assert all(at_l0 >= v - 1e-12 for v in values.values())
    # closed form at the peak: 0.3 l0^2 per member, two members
    assert at_l0 == pytest.approx(2 * (0.5 * l0**2 - 0.2 * l0**2))


def _own_term(psis, i, cfg):
    fset = FeatureSet(psis)
    _, l = nearest_index(fset, i)
    if cfg.kind == DiversityKind.REPULSIVE:
        return 0.5 * l**2
    return 0.5 * l**2 - 0.2 * l**5 / cfg.contact_distance**3


def test_reward_is_the_gradient_of_the_own_objective_term():
    # psi_i = Phi^T d_i, so the reward matrix must equal the finite-difference
    # gradient of member i's nearest-neighbour term with respect to d_i
    rng = np.random.default_rng(0)
    for kind in (DiversityKind.REPULSIVE, DiversityKind.VAN_DER_WAALS):
        cfg = DiversityConfig(kind=kind, contact_distance=0.8)
        for _ in range(10):
            S, A, d, n = 3, 2, int(rng.integers(1, 4)), int(rng.integers(2, 5))
            phi = rng.uniform(0.0, 1.0, size=(S * A, d))
            ds = rng.dirichlet(np.ones(S * A), size=n)
            psis = ds @ phi
            i = int(rng.integers(n))
            reward = diversity_reward(phi.reshape(S, A, d), FeatureSet(psis), i, cfg).ravel()
            eps = 1e-6
            grad = np.empty(S * A)
            for k in range(S * A):
                dp, dm = ds[i].copy(), ds[i].copy()
                dp[k] += eps
                dm[k] -= eps
                up = _own_term(np.vstack([psis[:i], dp @ phi, psis[i + 1:]]), i, cfg)
                dn = _own_term(np.vstack([psis[:i], dm @ phi, psis[i + 1:]]), i, cfg)
                grad[k] = (up - dn) / (2 * eps)
            assert np.max(np.abs(reward - grad)) < 1e-5 * max(1.0, np.max(np.abs(grad)))


def test_coincident_members_get_a_zero_reward():
    phi = np.arange(12, dtype=float).reshape(12, 1)
    psis = np.array([[0.3], [0.3], [0.9]])
    for kind in DiversityKind:
        cfg = DiversityConfig(kind=kind, contact_distance=1.0, repulsive_power=-1.0)
        reward = diversity_reward(phi.reshape(4, 3, 1), FeatureSet(psis), 0, cfg)
        assert np.array_equal(reward, np.zeros((4, 3)))
        assert np.all(np.isfinite(reward))


def test_appendix_scaling_divides_by_the_feature_dimension():
    rng = np.random.default_rng(1)
    phi = rng.uniform(size=(6, 3))
    psis = rng.uniform(size=(3, 3))
    base = DiversityConfig(kind=DiversityKind.REPULSIVE)
    scaled = DiversityConfig(kind=DiversityKind.REPULSIVE, scaling=RewardScaling.APPENDIX_CODE)
    r1 = diversity_reward(phi.reshape(2, 3, 3), FeatureSet(psis), 1, base)
    r2 = diversity_reward(phi.reshape(2, 3, 3), FeatureSet(psis), 1, scaled)
    assert np.allclose(r2, r1 / 3.0)


def test_generalized_kind_reproduces_the_named_coefficients():
    rng = np.random.default_rng(2)
    phi = rng.uniform(size=(6, 2))
    psis = rng.uniform(size=(2, 2))
    fs = FeatureSet(psis)
    phi_sa = phi.reshape(3, 2, 2)
    # a = 0, p_r = 0 gives the constant repulsive coefficient
    flat = DiversityConfig(
        kind=DiversityKind.GENERALIZED, contact_distance=0.7,
        attractive_coeff=0.0, repulsive_power=0.0, attractive_power=3.0,
    )
    rep = DiversityConfig(kind=DiversityKind.REPULSIVE)
    assert np.allclose(
        diversity_reward(phi_sa, fs, 1, flat), diversity_reward(phi_sa, fs, 1, rep)
    )
    # a = 0.5, p_r = 0, p_a = 3 gives half the van der Waals coefficient
    half = DiversityConfig(
        kind=DiversityKind.GENERALIZED, contact_distance=0.7,
        attractive_coeff=0.5, repulsive_power=0.0, attractive_power=3.0,
    )
    vdw = DiversityConfig(kind=DiversityKind.VAN_DER_WAALS, contact_distance=0.7)
    assert np.allclose(
        diversity_reward(phi_sa, fs, 1, half), 0.5 * diversity_reward(phi_sa, fs, 1, vdw)
    )


def test_diversity_score_statistics():
    fset = FeatureSet(np.array([[0.0], [1.0], [5.0]]))
    score = diversity_score(fset)
    assert np.allclose(score.per_policy, [1.0, 1.0, 4.0])
    assert score.total == pytest.approx(6.0)
    assert score.mean == pytest.approx(2.0)
    single = diversity_score(FeatureSet(np.array([[3.0]])))
    assert (single.mean, single.total) == (0.0, 0.0)


def test_config_validation_rejects_bad_parameters():
    with pytest.raises(ValueError, match="contact_distance"):
        DiversityConfig(kind=DiversityKind.VAN_DER_WAALS, contact_distance=0.0)
    with pytest.raises(ValueError, match="attractive_power"):
        DiversityConfig(
            kind=DiversityKind.GENERALIZED, repulsive_power=3.0, attractive_power=2.0
        )
    with pytest.raises(ValueError, match="attractive_coeff"):
        DiversityConfig(kind=DiversityKind.GENERALIZED, attractive_coeff=1.5)
