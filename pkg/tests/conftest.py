"""Shared fixtures: the 2-state reference instance, a damped cycle, and a
deterministic stream of random (chain, features) instances."""

from __future__ import annotations

import numpy as np
import pytest

import tdsplit as t

GAMMA_GRID = (0.3, 0.9, 0.99)
LAM_GRID = (0.0, 0.5, 0.9)


def make_reference_chain(gamma: float = 0.5) -> t.InducedChain:
    """2-state symmetric chain, rewards 1 from state 0 and 0 from state 1."""
    P = np.array([[0.9, 0.1], [0.1, 0.9]])
    rew = np.zeros((2, 1, 2))
    rew[0, :, :] = 1.0
    mdp = t.Mdp(transition=P[:, None, :], reward=rew, gamma=gamma, r_max=1.0)
    return t.induce_chain(mdp, t.Policy(mu=np.ones((2, 1))))


def make_cycle_chain(gamma: float = 0.8, damping: float = 0.1) -> t.InducedChain:
    """3-state directed cycle with self-loop damping; non-reversible."""
    cycle = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    P = (1 - damping) * cycle + damping * np.eye(3)
    rew = np.zeros((3, 1, 3))
    rew[:, 0, :] = np.array([[0.5, -0.25, 1.0]] * 3)
    mdp = t.Mdp(transition=P[:, None, :], reward=rew, gamma=gamma, r_max=1.0)
    return t.induce_chain(mdp, t.Policy(mu=np.ones((3, 1))))


def make_uniform_chain(n: int = 4, gamma: float = 0.5) -> t.InducedChain:
    """All rows equal to the uniform distribution; mixes in one step."""
    P = np.full((n, n), 1.0 / n)
    rew = np.zeros((n, 1, n))
    rew[:, 0, :] = np.linspace(-1, 1, n)[None, :]
    mdp = t.Mdp(transition=P[:, None, :], reward=rew, gamma=gamma, r_max=1.0)
    return t.induce_chain(mdp, t.Policy(mu=np.ones((n, 1))))


def random_instance(i: int) -> tuple[t.InducedChain, t.FeatureMap]:
    """Deterministic small random instance: n <= 8 states, K <= 4 features,
    discount cycling through the gamma grid."""
    rng = np.random.default_rng(1000 + i)
    n = int(rng.integers(2, 9))
    n_actions = int(rng.integers(1, 4))
    branching = int(rng.integers(2, n + 1))
    gamma = GAMMA_GRID[i % len(GAMMA_GRID)]
    chain = t.random_chain(n, n_actions, branching, gamma, seed=int(rng.integers(2**31)))
    K = int(rng.integers(1, min(n, 4) + 1))
    kind = i % 3
    if kind == 0:
        features = t.random_unit_row_features(n, K, seed=int(rng.integers(2**31)))
    elif kind == 1:
        features = t.fourier_features(n, K)
    else:
        features = t.identity_features(n) if n <= 4 else t.random_unit_row_features(n, K, seed=i)
    return chain, features


@pytest.fixture
def reference_chain():
    return make_reference_chain()


@pytest.fixture
def cycle_chain():
    return make_cycle_chain()


@pytest.fixture
def uniform_chain():
    return make_uniform_chain()


@pytest.fixture
def instance_factory():
    return random_instance
