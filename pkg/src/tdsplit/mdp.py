"""Finite MDPs, fixed policies, and the induced Markov reward chain.

A fixed policy turns a finite MDP into a Markov chain on states together
with a per-transition reward, which is the object every other module works
on: stationary distribution, trajectory sampling, and exact total-variation
mixing times all live here, as does a Garnet-style random instance
generator used for benchmarks and randomized tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .validation import (
    FILE_ROW_SUM_TOL,
    as_float_array,
    check_probability_vector,
    check_stochastic_rows,
    check_unit_interval,
)

STATIONARY_RESIDUAL_TOL = 1e-10
DEFAULT_MIXING_CAP = 10**6


@dataclass(frozen=True, eq=False)
class Mdp:
    """Finite MDP with transition tensor ``transition[s, a, s']`` and
    reward tensor ``reward[s, a, s']``."""

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    r_max: float | None = None

    def __post_init__(self):
        trans = as_float_array(self.transition, "transition", ndim=3)
        rew = as_float_array(self.reward, "reward", ndim=3)
        n, a, n2 = trans.shape
        if n != n2:
            raise ValueError(f"transition must be (n, a, n), got {trans.shape}")
        if rew.shape != trans.shape:
            raise ValueError("reward tensor must match transition tensor shape")
        check_stochastic_rows(trans, "transition")
        object.__setattr__(self, "transition", trans)
        object.__setattr__(self, "reward", rew)
        object.__setattr__(self, "gamma", check_unit_interval(self.gamma, "gamma"))
        r_abs_max = float(np.abs(rew).max()) if rew.size else 0.0
        if self.r_max is None:
            object.__setattr__(self, "r_max", r_abs_max)
        else:
            r_max = float(self.r_max)
            if r_max < 0:
                raise ValueError("r_max must be nonnegative")
            if r_abs_max > r_max:
                raise ValueError(f"|reward| up to {r_abs_max} exceeds r_max={r_max}")
            object.__setattr__(self, "r_max", r_max)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]


@dataclass(frozen=True, eq=False)
class Policy:
    """Stationary stochastic policy, ``mu[s, a]`` = P(action a | state s)."""

    mu: np.ndarray

    def __post_init__(self):
        mu = as_float_array(self.mu, "policy", ndim=2)
        check_stochastic_rows(mu, "policy")
        object.__setattr__(self, "mu", mu)

    @property
    def n_states(self) -> int:
        return self.mu.shape[0]

    @property
    def n_actions(self) -> int:
        return self.mu.shape[1]


@dataclass(frozen=True, eq=False)
class InducedChain:
    """Markov reward chain obtained by running a fixed policy on an MDP.

    Fields
    ------
    P : (n, n) row-stochastic transition matrix on states.
    r_pair : (n, n) expected reward of the transition s -> s'.
    R : (n,) expected one-step reward, ``R = (P * r_pair).sum(axis=1)``.
    pi : (n,) stationary distribution, strictly positive.
    gamma : discount factor in (0, 1).
    r_max : bound on absolute rewards, inherited from the MDP.
    """

    P: np.ndarray
    r_pair: np.ndarray
    R: np.ndarray
    pi: np.ndarray
    gamma: float
    r_max: float = 0.0

    def __post_init__(self):
        P = as_float_array(self.P, "P", ndim=2)
        if P.shape[0] != P.shape[1]:
            raise ValueError("P must be square")
        check_stochastic_rows(P, "P")
        n = P.shape[0]
        r_pair = as_float_array(self.r_pair, "r_pair", ndim=2)
        if r_pair.shape != (n, n):
            raise ValueError("r_pair must match P's shape")
        R = as_float_array(self.R, "R", ndim=1)
        pi = as_float_array(self.pi, "pi", ndim=1)
        if R.shape != (n,) or pi.shape != (n,):
            raise ValueError("R and pi must be length-n vectors")
        check_probability_vector(pi, "pi")
        if pi.min() <= 0:
            raise ValueError("induced chain is not irreducible: stationary mass vanishes on some state")
        if float(np.abs(pi @ P - pi).max()) > STATIONARY_RESIDUAL_TOL:
            raise ValueError("pi is not stationary for P")
        if float(np.abs(R - (P * r_pair).sum(axis=1)).max()) > 1e-12:
            raise ValueError("R is inconsistent with P and r_pair")
        for name, arr in (("P", P), ("r_pair", r_pair), ("R", R), ("pi", pi)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "gamma", check_unit_interval(self.gamma, "gamma"))
        if self.r_max < 0:
            raise ValueError("r_max must be nonnegative")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @cached_property
    def D(self) -> np.ndarray:
        """Diagonal matrix of stationary weights."""
        return np.diag(self.pi)

    @cached_property
    def _cum_rows(self) -> np.ndarray:
        cum = np.cumsum(self.P, axis=1)
        cum[:, -1] = 1.0  # guard against rounding at the top of the CDF
        return cum

    @cached_property
    def _cum_pi(self) -> np.ndarray:
        cum = np.cumsum(self.pi)
        cum[-1] = 1.0
        return cum


def with_gamma(chain: InducedChain, gamma: float) -> InducedChain:
    """Copy of the chain with a different discount factor."""
    return replace(chain, gamma=float(gamma))


def _primitive(P: np.ndarray) -> bool:
    """Exact irreducibility+aperiodicity check on the sparsity pattern.

    A primitive n-state chain has an all-positive power at exponent at most
    n^2 - 2n + 2, and all-positivity persists once reached, so it suffices
    to square the boolean pattern past that bound.
    """
    n = P.shape[0]
    bound = n * n - 2 * n + 2
    B = (P > 0).astype(float)
    exponent = 1
    while True:
        if np.all(B > 0):
            return True
        if exponent > bound:
            return False
        B = np.minimum(B @ B, 1.0)
        exponent *= 2


def _stationary(P: np.ndarray) -> np.ndarray:
    """Solve pi^T P = pi^T, sum(pi) = 1 by a dense least-squares solve."""
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    total = float(pi.sum())
    if not np.isfinite(total) or total <= 0:
        raise ValueError("stationary distribution solve failed")
    return pi / total


def induce_chain(mdp: Mdp, policy: Policy) -> InducedChain:
    """Marginalize the policy over actions and solve for the stationary law.

    Raises if the resulting chain is not irreducible and aperiodic, since
    every quantity downstream needs a unique strictly positive stationary
    distribution.
    """
    if policy.n_states != mdp.n_states or policy.n_actions != mdp.n_actions:
        raise ValueError("policy shape does not match MDP")
    mu = policy.mu
    P = np.einsum("sa,san->sn", mu, mdp.transition)
    # Expected reward conditioned on the realized transition s -> s', so that
    # (P * r_pair).sum(axis=1) recovers the one-step expected reward exactly
    # even when rewards depend on the action.
    flow = np.einsum("sa,san->sn", mu, mdp.transition * mdp.reward)
    with np.errstate(invalid="ignore", divide="ignore"):
        r_pair = np.where(P > 0, flow / np.where(P > 0, P, 1.0), 0.0)
    R = flow.sum(axis=1)
    if not _primitive(P):
        raise ValueError("induced chain is not irreducible and aperiodic")
    pi = _stationary(P)
    if pi.min() <= 1e-13:
        raise ValueError("induced chain is not irreducible: a state has zero stationary mass")
    return InducedChain(P=P, r_pair=r_pair, R=R, pi=pi, gamma=mdp.gamma, r_max=mdp.r_max)


# ---------------------------------------------------------------------------
# Trajectory sampling


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A sampled path: ``states`` has length T+1, ``rewards`` length T.

    The transition at step t is ``(states[t], rewards[t], states[t+1])``.
    """

    states: np.ndarray
    rewards: np.ndarray
    start_mode: str
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.rewards)

    def transitions(self):
        s, r = self.states, self.rewards
        for t in range(len(r)):
            yield int(s[t]), float(r[t]), int(s[t + 1])

    def as_array(self) -> np.ndarray:
        """(T, 3) float array with columns (s_t, r_t, s_{t+1})."""
        out = np.empty((len(self.rewards), 3))
        out[:, 0] = self.states[:-1]
        out[:, 1] = self.rewards
        out[:, 2] = self.states[1:]
        return out


def sample_trajectory(
    chain: InducedChain,
    T: int,
    seed: int | None = None,
    start: int | str = "stationary",
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Sample T transitions from the chain, deterministically given the seed.

    ``start="stationary"`` draws the initial state from pi, which makes the
    sampled sequence stationary; an integer start pins the initial state
    instead (useful for diagnostics, but estimates made from such runs are
    not covered by the stationary-start error bounds and are flagged via
    ``start_mode``).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    cum_rows = chain._cum_rows
    u = rng.random(T + 1)
    states = np.empty(T + 1, dtype=np.int64)
    if start == "stationary":
        states[0] = int(np.searchsorted(chain._cum_pi, u[0], side="right"))
        start_mode = "stationary"
    else:
        s0 = int(start)
        if not 0 <= s0 < chain.n_states:
            raise ValueError(f"start state {s0} out of range")
        states[0] = s0
        start_mode = f"fixed({s0})"
    s = int(states[0])
    for t in range(T):
        s = int(np.searchsorted(cum_rows[s], u[t + 1], side="right"))
        states[t + 1] = s
    rewards = chain.r_pair[states[:-1], states[1:]]
    return Trajectory(states=states, rewards=np.ascontiguousarray(rewards), start_mode=start_mode, seed=seed)


# ---------------------------------------------------------------------------
# Mixing


@dataclass(frozen=True, eq=False)
class MixingProfile:
    """Worst-case total-variation distance to stationarity, per step.

    ``tv_curve[t]`` is sup_s d_TV(P^t(s, .), pi) for t = 0, 1, ..., and
    (m, rho) is a fitted geometric envelope with tv_curve[t] <= m * rho^t
    at every tabulated t. The envelope is diagnostic; mixing times are
    computed from the exact curve.
    """

    m: float
    rho: float
    tv_curve: np.ndarray

    def __post_init__(self):
        tv = as_float_array(self.tv_curve, "tv_curve", ndim=1)
        if np.any(np.diff(tv) > 1e-12):
            raise ValueError("tv_curve must be nonincreasing")
        if not (0 < self.rho < 1):
            raise ValueError("rho must lie in (0, 1)")
        if self.m <= 0:
            raise ValueError("m must be positive")
        t = np.arange(len(tv))
        if np.any(tv > self.m * self.rho**t + 1e-12):
            raise ValueError("(m, rho) does not envelope the tabulated curve")
        tv.setflags(write=False)
        object.__setattr__(self, "tv_curve", tv)


def _sup_tv(Pt: np.ndarray, pi: np.ndarray) -> float:
    return 0.5 * float(np.abs(Pt - pi).sum(axis=1).max())


def tv_curve_until(chain: InducedChain, epsilon: float, cap: int = DEFAULT_MIXING_CAP) -> np.ndarray:
    """Exact sup-TV curve from t=0 until it first drops to ``epsilon``."""
    check_unit_interval(epsilon, "epsilon")
    pi = chain.pi
    Pt = np.eye(chain.n_states)
    curve = [_sup_tv(Pt, pi)]
    t = 0
    while curve[-1] > epsilon:
        t += 1
        if t > cap:
            raise ValueError(f"chain mixes too slowly for requested epsilon={epsilon} (cap {cap})")
        Pt = Pt @ chain.P
        curve.append(_sup_tv(Pt, pi))
    return np.array(curve)


def mixing_time(chain: InducedChain, epsilon: float, cap: int = DEFAULT_MIXING_CAP) -> int:
    """Smallest t >= 1 with sup_s d_TV(P^t(s, .), pi) <= epsilon.

    Computed from exact dense matrix powers rather than a geometric
    envelope; at the matrix sizes this package targets the exact curve is
    cheap and removes any envelope slack.
    """
    curve = tv_curve_until(chain, epsilon, cap=cap)
    t = len(curve) - 1
    return max(t, 1)


def fit_envelope(tv_curve: np.ndarray) -> tuple[float, float]:
    """Fit (m, rho) with tv_curve[t] <= m * rho^t at all tabulated t.

    rho comes from a log-linear fit on the positive tail; m is then taken
    as the smallest constant making the envelope valid everywhere.
    """
    tv = np.asarray(tv_curve, dtype=float)
    t_all = np.arange(len(tv))
    pos = (tv > 0) & (t_all >= 1)
    if pos.sum() >= 2:
        ts = t_all[pos][-max(2, pos.sum() // 2):]
        vals = tv[ts]
        slope = np.polyfit(ts, np.log(vals), 1)[0]
        rho = float(np.exp(slope))
    else:
        rho = 0.5
    rho = min(max(rho, 1e-12), 1 - 1e-12)
    with np.errstate(divide="ignore"):
        m = float(np.max(tv / rho**t_all))
    return max(m, 1e-300), rho


def mixing_profile(chain: InducedChain, epsilon: float, cap: int = DEFAULT_MIXING_CAP) -> MixingProfile:
    curve = tv_curve_until(chain, epsilon, cap=cap)
    m, rho = fit_envelope(curve)
    return MixingProfile(m=m, rho=rho, tv_curve=curve)


# ---------------------------------------------------------------------------
# Random instances and file I/O


def garnet_mdp(
    n_states: int,
    n_actions: int,
    branching: int,
    gamma: float,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
) -> Mdp:
    """Random MDP with ``branching`` reachable successors per (s, a) and
    rewards drawn uniformly from [-1, 1] on the reachable transitions."""
    if not 1 <= branching <= n_states:
        raise ValueError("branching must lie in [1, n_states]")
    if rng is None:
        rng = np.random.default_rng(seed)
    trans = np.zeros((n_states, n_actions, n_states))
    rew = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            succ = rng.choice(n_states, size=branching, replace=False)
            # uniform point on the simplex via sorted-uniform spacings
            cuts = np.sort(rng.random(branching - 1))
            probs = np.diff(np.concatenate([[0.0], cuts, [1.0]]))
            trans[s, a, succ] = probs
            rew[s, a, succ] = rng.uniform(-1.0, 1.0, size=branching)
    return Mdp(transition=trans, reward=rew, gamma=gamma, r_max=1.0)


def uniform_policy(n_states: int, n_actions: int) -> Policy:
    return Policy(mu=np.full((n_states, n_actions), 1.0 / n_actions))


def random_policy(n_states: int, n_actions: int, seed: int | None = None,
                  rng: np.random.Generator | None = None) -> Policy:
    if rng is None:
        rng = np.random.default_rng(seed)
    g = rng.gamma(1.0, 1.0, size=(n_states, n_actions))
    return Policy(mu=g / g.sum(axis=1, keepdims=True))


def random_chain(
    n_states: int,
    n_actions: int,
    branching: int,
    gamma: float,
    seed: int | None = None,
    max_attempts: int = 64,
) -> InducedChain:
    """Garnet chain under a random policy, redrawn until irreducible and aperiodic."""
    root = np.random.default_rng(seed)
    for _ in range(max_attempts):
        rng = np.random.default_rng(root.integers(2**63))
        mdp = garnet_mdp(n_states, n_actions, branching, gamma, rng=rng)
        policy = random_policy(n_states, n_actions, rng=rng)
        try:
            return induce_chain(mdp, policy)
        except ValueError:
            continue
    raise ValueError(f"no valid chain after {max_attempts} attempts")


def load_instance(path: str | Path) -> tuple[Mdp, Policy]:
    """Read an MDP + policy from the JSON instance format.

    Expected fields: n_states, n_actions, transition (n x a x n nested
    arrays), reward (same shape), gamma, policy (n x a). Probability rows
    are accepted to a 1e-9 row-sum tolerance and renormalized exactly.
    """
    with open(path) as fh:
        doc = json.load(fh)
    required = ["n_states", "n_actions", "transition", "reward", "gamma", "policy"]
    missing = [k for k in required if k not in doc]
    if missing:
        raise ValueError(f"instance file missing fields: {missing}")
    n, a = int(doc["n_states"]), int(doc["n_actions"])
    trans = as_float_array(doc["transition"], "transition", ndim=3)
    rew = as_float_array(doc["reward"], "reward", ndim=3)
    mu = as_float_array(doc["policy"], "policy", ndim=2)
    if trans.shape != (n, a, n):
        raise ValueError(f"transition shape {trans.shape} does not match (n_states, n_actions, n_states)")
    if mu.shape != (n, a):
        raise ValueError(f"policy shape {mu.shape} does not match (n_states, n_actions)")
    check_stochastic_rows(trans, "transition", tol=FILE_ROW_SUM_TOL)
    check_stochastic_rows(mu, "policy", tol=FILE_ROW_SUM_TOL)
    trans = trans / trans.sum(axis=-1, keepdims=True)
    mu = mu / mu.sum(axis=-1, keepdims=True)
    r_max = float(doc["r_max"]) if "r_max" in doc else None
    mdp = Mdp(transition=trans, reward=rew, gamma=float(doc["gamma"]), r_max=r_max)
    return mdp, Policy(mu=mu)


def save_instance(path: str | Path, mdp: Mdp, policy: Policy) -> None:
    doc = {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "transition": mdp.transition.tolist(),
        "reward": mdp.reward.tolist(),
        "gamma": mdp.gamma,
        "r_max": mdp.r_max,
        "policy": policy.mu.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
