"""Closed-form finite-horizon error bounds and the constants they need.

Every evaluator is a pure function of a ``BoundInputs`` record: the same
inputs always produce the same number. Mixing times entering the bounds
are exact total-variation mixing times of the chain (no geometric
envelope), evaluated at the thresholds each bound prescribes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bellman import td0_fixed_point, td_lambda_fixed_point, true_value
from .features import FeatureMap, value_of
from .geometry import d_norm_sq, reversibilization
from .learning import DEFAULT_RADIUS_FACTOR
from .mdp import DEFAULT_MIXING_CAP, InducedChain, _sup_tv


@dataclass(frozen=True, eq=False)
class BoundInputs:
    """Constants consumed by the bound evaluators.

    Squared distances are measured from the run's initial parameter to the
    relevant fixed point. ``G`` caps the per-step update norm of the
    projected one-step learner (r_max + 2R); ``G_lambda`` the trace
    analogue ((r_max + 2 R_lambda) / (1 - gamma lam)). Mixing times:
    ``tau_mix_at_inv_sqrtT`` at threshold 1/sqrt(T),
    ``tau_lambda_mix`` the max of chain and trace mixing at 1/sqrt(T),
    ``tau_mix_mean_est`` the chain mixing time at 1/(2(T+1)) used by the
    mean-estimation term, with ``t0`` the burn-in it requires.
    """

    T: int
    gamma: float
    r_max: float
    theta0: np.ndarray
    theta_target: np.ndarray
    lam: float = 0.0
    R: float | None = None
    G: float | None = None
    R_lambda: float | None = None
    G_lambda: float | None = None
    tau_mix_at_inv_sqrtT: int | None = None
    tau_lambda_mix: int | None = None
    tau_mix_mean_est: int | None = None
    t0: int | None = None
    r_P: float | None = None
    approx_err_d_sq: float | None = None

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        # chains require gamma in (0, 1); the record also admits the formula
        # limits gamma = 0 and gamma = 1 so individual bounds can be probed there
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if self.r_max < 0:
            raise ValueError("r_max must be nonnegative")
        if self.G is not None and self.R is not None:
            if abs(self.G - (self.r_max + 2.0 * self.R)) > 1e-12:
                raise ValueError("G must equal r_max + 2R")
        if self.G_lambda is not None and self.R_lambda is not None:
            expect = (self.r_max + 2.0 * self.R_lambda) / (1.0 - self.gamma * self.lam)
            if abs(self.G_lambda - expect) > 1e-12:
                raise ValueError("G_lambda must equal (r_max + 2 R_lambda)/(1 - gamma lam)")

    @property
    def dist_sq(self) -> float:
        d = np.asarray(self.theta_target, float) - np.asarray(self.theta0, float)
        return float(d @ d)


def _need(inputs: BoundInputs, *names: str) -> None:
    missing = [n for n in names if getattr(inputs, n) is None]
    if missing:
        raise ValueError(f"bound inputs missing fields: {missing}")


# ---------------------------------------------------------------------------
# Mixing-time variants


class _TvCurve:
    """Lazily extended exact sup-TV curve, shared across threshold queries."""

    def __init__(self, chain: InducedChain, cap: int = DEFAULT_MIXING_CAP):
        self.chain = chain
        self.cap = cap
        self._Pt = np.eye(chain.n_states)
        self.values = [_sup_tv(self._Pt, chain.pi)]

    def tau(self, epsilon: float, allow_zero: bool = False) -> int:
        if not 0 < epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        start = 0 if allow_zero else 1
        # the sup-TV curve is nonincreasing, so the tail value decides
        while len(self.values) <= start or self.values[-1] > epsilon:
            if len(self.values) > self.cap:
                raise ValueError(f"chain mixes too slowly for epsilon={epsilon} (cap {self.cap})")
            self._Pt = self._Pt @ self.chain.P
            self.values.append(_sup_tv(self._Pt, self.chain.pi))
        for t in range(start, len(self.values)):
            if self.values[t] <= epsilon:
                return t
        raise AssertionError("unreachable")


def envelope_mixing_time(chain: InducedChain, epsilon: float, cap: int = DEFAULT_MIXING_CAP) -> int:
    """Mixing time read off the fitted geometric envelope m * rho^t.

    Conservative relative to the exact total-variation mixing time (the
    envelope dominates the curve); offered for sensitivity analysis only,
    the bound evaluators default to the exact value.
    """
    from .mdp import mixing_profile

    profile = mixing_profile(chain, min(epsilon, 1 - 1e-12), cap=cap)
    tt = max(1, math.ceil(math.log(epsilon / profile.m) / math.log(profile.rho)))
    while profile.m * profile.rho**tt > epsilon:
        tt += 1
    return tt


def tau_trace(gamma: float, lam: float, epsilon: float) -> int:
    """Smallest t >= 0 with (gamma*lam)^t <= epsilon; 0 when gamma*lam = 0."""
    gl = gamma * lam
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if gl <= 0:
        return 0
    t = max(0, math.ceil(math.log(epsilon) / math.log(gl)))
    while gl**t > epsilon:
        t += 1
    while t > 0 and gl ** (t - 1) <= epsilon:
        t -= 1
    return t


def mean_estimation_burn_in(chain: InducedChain, cap: int = DEFAULT_MIXING_CAP) -> int:
    """Largest t with t <= 2 * tau_mix(1 / (2(t+1))).

    This is the horizon after which the running-average reward estimate
    obeys its 1/T error recursion. The scan stops once t outruns the
    mixing time by a wide margin: for an ergodic finite chain the mixing
    time grows logarithmically in t, so the inequality cannot be satisfied
    again past that point.
    """
    curve = _TvCurve(chain, cap=cap)
    best = None
    t = 1
    while True:
        tau_t = curve.tau(1.0 / (2.0 * (t + 1)))
        if t <= 2 * tau_t:
            best = t
        elif t > 4 * tau_t + 64:
            break
        t += 1
        if t > cap:
            raise ValueError(f"burn-in scan exceeded cap {cap}")
    assert best is not None  # t = 1 always satisfies 1 <= 2 * tau
    return best


# ---------------------------------------------------------------------------
# Input assembly


def prepare_bound_inputs(
    chain: InducedChain,
    features: FeatureMap,
    T: int,
    *,
    lam: float = 0.0,
    radius: float | None = None,
    theta0: np.ndarray | None = None,
    include_mean_estimation: bool = False,
    tau_method: str = "exact",
    cap: int = DEFAULT_MIXING_CAP,
) -> BoundInputs:
    """Compute every constant a bound evaluator may need for this instance.

    The projection radius defaults to the same rule the learners use
    (a fixed multiple of the fixed-point norm), so bound and run describe
    the same algorithm. ``include_mean_estimation`` additionally computes
    the burn-in t0, the spectral constant r_P, the mixing time at
    1/(2(T+1)), and the approximation error of the fixed point.
    ``tau_method="envelope"`` swaps the exact mixing times for the fitted
    geometric-envelope version (sensitivity analysis).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if tau_method not in ("exact", "envelope"):
        raise ValueError("tau_method must be 'exact' or 'envelope'")
    theta0 = np.zeros(features.K) if theta0 is None else np.asarray(theta0, float)
    if tau_method == "exact":
        tau = _TvCurve(chain, cap=cap).tau
    else:
        def tau(epsilon: float, allow_zero: bool = False) -> int:
            return envelope_mixing_time(chain, epsilon, cap=cap)
    eps = 1.0 / math.sqrt(T)
    fp0 = td0_fixed_point(chain, features)
    R = radius if radius is not None else DEFAULT_RADIUS_FACTOR * float(np.linalg.norm(fp0.theta))
    if R == 0.0:
        R = 1.0
    kwargs = dict(
        T=T,
        gamma=chain.gamma,
        r_max=chain.r_max,
        theta0=theta0,
        lam=lam,
        R=R,
        G=chain.r_max + 2.0 * R,
        tau_mix_at_inv_sqrtT=tau(min(eps, 1 - 1e-12)),
    )
    if lam > 0:
        fpl = td_lambda_fixed_point(chain, features, lam)
        R_lam = radius if radius is not None else DEFAULT_RADIUS_FACTOR * float(np.linalg.norm(fpl.theta))
        if R_lam == 0.0:
            R_lam = 1.0
        kwargs.update(
            theta_target=fpl.theta,
            R_lambda=R_lam,
            G_lambda=(chain.r_max + 2.0 * R_lam) / (1.0 - chain.gamma * lam),
            tau_lambda_mix=max(tau(min(eps, 1 - 1e-12), allow_zero=True),
                               tau_trace(chain.gamma, lam, min(eps, 1 - 1e-12))),
        )
    else:
        kwargs.update(
            theta_target=fp0.theta,
            R_lambda=R,
            G_lambda=(chain.r_max + 2.0 * R) / 1.0,
            tau_lambda_mix=tau(min(eps, 1 - 1e-12), allow_zero=True),
        )
    if include_mean_estimation:
        V = true_value(chain)
        kwargs.update(
            t0=mean_estimation_burn_in(chain, cap=cap),
            r_P=reversibilization(chain).r_P,
            tau_mix_mean_est=tau(1.0 / (2.0 * (T + 1))),
            approx_err_d_sq=d_norm_sq(chain, value_of(features, fp0.theta) - V),
        )
    return BoundInputs(**kwargs)


# ---------------------------------------------------------------------------
# Bound evaluators


def objective_bound_rhs(inputs: BoundInputs) -> float:
    """Bound on the expected certified quadratic at the averaged iterate.

    (||theta* - theta0||^2 + G^2 (9 + 12 tau)) / (2 sqrt(T)) for the
    projected one-step learner with constant 1/sqrt(T) steps; tau is the
    exact mixing time at threshold 1/sqrt(T). Notably gamma-free.
    """
    _need(inputs, "G", "tau_mix_at_inv_sqrtT")
    tau = inputs.tau_mix_at_inv_sqrtT
    return (inputs.dist_sq + inputs.G**2 * (9.0 + 12.0 * tau)) / (2.0 * math.sqrt(inputs.T))


def d_norm_bound_rhs(inputs: BoundInputs) -> float:
    """Comparison bound on the stationary-weighted error alone.

    The same numerator divided by (1 - gamma): the scaling the one-sided
    D-norm analysis pays, and which the quadratic-objective bound avoids.
    """
    if inputs.gamma >= 1:
        raise ValueError("the D-norm bound diverges as gamma -> 1")
    return objective_bound_rhs(inputs) / (1.0 - inputs.gamma)


def dirichlet_bound_rhs(inputs: BoundInputs) -> float:
    """Bound on the squared Dirichlet error, uniform in the discount factor.

    Dropping the stationary-weighted term of the quadratic leaves
    (||theta*-theta0||^2 + G^2 (9 + 12 tau)) / (2 gamma sqrt(T)), which
    stays finite as gamma -> 1.
    """
    if inputs.gamma <= 0:
        raise ValueError("dirichlet bound undefined at gamma = 0")
    return objective_bound_rhs(inputs) / inputs.gamma


def trace_objective_bound_rhs(inputs: BoundInputs) -> float:
    """Trace-learner analogue of the quadratic-objective bound.

    (||theta_lam* - theta0||^2 + G_lambda^2 (14 + 28 tau_lam)) / (2 sqrt(T)),
    where tau_lam also accounts for the geometric memory of the trace.
    """
    _need(inputs, "G_lambda", "tau_lambda_mix")
    tau = inputs.tau_lambda_mix
    return (inputs.dist_sq + inputs.G_lambda**2 * (14.0 + 28.0 * tau)) / (2.0 * math.sqrt(inputs.T))


def mean_adjusted_bound_rhs(inputs: BoundInputs, c_big: float | str = "exact") -> float:
    """Bound on the stationary-weighted error of the mean-adjusted output.

    Three terms: the approximation error of the fixed point, a mean
    estimation term decaying like tau/T (the only place 1/(1-gamma)
    multiplies the bound), and the learning term scaled by
    min(spectral constant / gamma, O(1)/(1-gamma)), which saturates rather
    than blowing up as gamma -> 1.

    ``c_big="exact"`` reproduces the explicit-constant assembly
    (coefficient 2 on the approximation error, the 9 + 12 tau learning
    numerator, min(r_P/gamma, 2/(1-gamma))); the mean-estimation term's
    absolute constant is not pinned down by the analysis and is evaluated
    with constant one. A float ``c_big`` instead scales the bare
    three-term shape (coefficient 1 on the approximation error,
    1 + tau numerator, min(r_P/gamma, 1/(1-gamma))).
    """
    _need(inputs, "G", "tau_mix_at_inv_sqrtT", "tau_mix_mean_est", "t0", "r_P", "approx_err_d_sq")
    if inputs.gamma >= 1:
        raise ValueError("mean-adjusted bound requires gamma < 1")
    if inputs.T < inputs.t0:
        raise ValueError(f"bound requires T >= burn-in t0 = {inputs.t0}, got T = {inputs.T}")
    mean_est = inputs.r_max**2 * inputs.tau_mix_mean_est / ((1.0 - inputs.gamma) ** 2 * inputs.T)
    sqrtT = math.sqrt(inputs.T)
    if c_big == "exact":
        core = inputs.dist_sq + inputs.G**2 * (9.0 + 12.0 * inputs.tau_mix_at_inv_sqrtT)
        saturating = min(inputs.r_P / inputs.gamma, 2.0 / (1.0 - inputs.gamma))
        return 2.0 * inputs.approx_err_d_sq + mean_est + core / sqrtT * saturating
    c = float(c_big)
    core = inputs.dist_sq + inputs.G**2 * (1.0 + inputs.tau_mix_at_inv_sqrtT)
    saturating = min(inputs.r_P / inputs.gamma, 1.0 / (1.0 - inputs.gamma))
    return c * (inputs.approx_err_d_sq + mean_est + core / sqrtT * saturating)
