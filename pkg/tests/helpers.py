"""Shared builders for the test suite."""

import numpy as np

from divset import TabularMdp, validate_mdp


def random_mdp(
    rng: np.random.Generator,
    num_states: int,
    num_actions: int,
    feature_dim: int,
    discount: float = 0.95,
) -> TabularMdp:
    """Dense random MDP: Dirichlet transition rows, uniform rewards and features.

    Dense rows make every policy-induced chain irreducible and aperiodic,
    so average-criterion quantities are well defined for every policy.
    """
    mdp = TabularMdp(
        transition=rng.dirichlet(np.ones(num_states), size=(num_states, num_actions)),
        reward=rng.uniform(0.0, 1.0, size=(num_states, num_actions)),
        features=rng.uniform(0.0, 1.0, size=(num_states * num_actions, feature_dim)),
        discount=discount,
        initial_dist=np.full(num_states, 1.0 / num_states),
    )
    validate_mdp(mdp)
    return mdp


def deterministic_action_tables(num_states: int, num_actions: int) -> np.ndarray:
    """All action assignments, one row per deterministic policy."""
    grids = np.meshgrid(*([np.arange(num_actions)] * num_states), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)
