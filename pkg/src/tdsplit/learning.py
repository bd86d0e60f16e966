"""Stochastic temporal-difference learners and experiment runs.

Three algorithms share one update loop: the one-step learner, the
eligibility-trace learner (a geometric average over past feature vectors
steers each update), and the mean-adjusted variant that additionally
tracks the running average reward and re-centers the learned value
function along the all-ones direction at the end. Iterates can be
projected onto a Euclidean ball that contains the fixed point, and the
reported parameter is always the running average of the iterates.

``td0_step`` / ``td_lambda_step`` expose the per-transition update on a
``LearnerState``; ``run_experiment`` executes seeded Monte-Carlo
replicates with per-checkpoint error recording; ``TDValueEstimator``
wraps the same loop behind a scikit-learn fit/predict interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .bellman import (
    FixedPoint,
    SplittingCertificate,
    splitting_certificate_td0,
    splitting_certificate_td_lambda,
    td0_fixed_point,
    td_lambda_fixed_point,
    true_value,
)
from .features import FeatureMap, value_of
from .geometry import d_norm_sq, dirichlet_sq
from .mdp import InducedChain, Trajectory, sample_trajectory
from .validation import as_float_array, as_state_array

DEFAULT_RADIUS_FACTOR = 2.0


@dataclass(frozen=True)
class ProjectionSpec:
    """Euclidean ball the iterates are projected onto (identity when disabled)."""

    radius: float = math.inf
    enabled: bool = False

    def __post_init__(self):
        if self.enabled and not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError("enabled projection needs a positive finite radius")

    @staticmethod
    def ball(radius: float) -> "ProjectionSpec":
        return ProjectionSpec(radius=float(radius), enabled=True)

    @staticmethod
    def none() -> "ProjectionSpec":
        return ProjectionSpec()


def default_radius(fixed_point: FixedPoint, factor: float = DEFAULT_RADIUS_FACTOR) -> float:
    """Default projection radius: a fixed multiple of ||theta*||.

    Guarantees the fixed point lies inside the ball with margin while
    keeping the step-norm constant G = r_max + 2R moderate. Degenerate
    fixed points at the origin fall back to a unit ball.
    """
    nrm = float(np.linalg.norm(fixed_point.theta))
    return factor * nrm if nrm > 0 else 1.0


@dataclass
class LearnerState:
    """Mutable state of one learner run.

    ``theta_bar`` is the arithmetic mean of the iterates seen so far
    (theta_0 .. theta_{t-1}), maintained as a streaming sum; ``a_bar`` is
    the running average reward used by the mean-adjusted variant.
    """

    theta: np.ndarray
    z: np.ndarray | None = None
    theta_sum: np.ndarray | None = None
    a_bar: float = 0.0
    t: int = 0
    step_size: str = "1/sqrt(T)"

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float)
        if self.z is None:
            self.z = np.zeros_like(self.theta)
        if self.theta_sum is None:
            self.theta_sum = np.zeros_like(self.theta)

    @property
    def theta_bar(self) -> np.ndarray:
        if self.t == 0:
            return self.theta.copy()
        return self.theta_sum / self.t


def _project_inplace(theta: np.ndarray, proj: ProjectionSpec) -> None:
    if proj.enabled:
        # same op sequence as the batch loop, so both paths agree bitwise
        nrm_sq = float(theta @ theta)
        if nrm_sq > proj.radius * proj.radius:
            theta *= proj.radius / math.sqrt(nrm_sq)


def _advance(
    state: LearnerState,
    transition: tuple[int, float, int],
    features: FeatureMap,
    gamma: float,
    alpha: float,
    proj: ProjectionSpec,
    lam: float,
) -> LearnerState:
    s, r, s_next = transition
    phi = features.Phi[int(s)]
    phi_next = features.Phi[int(s_next)]
    delta = r + gamma * (phi_next @ state.theta) - phi @ state.theta
    if not math.isfinite(delta):
        raise RuntimeError(f"non-finite temporal-difference error at step {state.t}")
    state.theta_sum += state.theta
    state.a_bar = (state.t * state.a_bar + r) / (state.t + 1)
    if lam > 0:
        state.z *= gamma * lam
        state.z += phi
        direction = state.z
    else:
        state.z = phi.copy()
        direction = phi
    state.theta += (alpha * delta) * direction
    _project_inplace(state.theta, proj)
    state.t += 1
    return state


def td0_step(
    state: LearnerState,
    transition: tuple[int, float, int],
    features: FeatureMap,
    gamma: float,
    alpha: float,
    proj: ProjectionSpec = ProjectionSpec(),
) -> LearnerState:
    """One-step update: theta <- Proj(theta + alpha * delta * phi(s))."""
    return _advance(state, transition, features, gamma, alpha, proj, lam=0.0)


def td_lambda_step(
    state: LearnerState,
    transition: tuple[int, float, int],
    features: FeatureMap,
    gamma: float,
    alpha: float,
    lam: float,
    proj: ProjectionSpec = ProjectionSpec(),
) -> LearnerState:
    """Trace update: z <- gamma*lam*z + phi(s); theta <- Proj(theta + alpha*delta*z).

    The trace starts at z = 0, so early updates underweight history
    relative to the infinite-past average the certificates describe; the
    discrepancy decays geometrically and is not corrected here.
    """
    if not 0 <= lam < 1:
        raise ValueError("lam must lie in [0, 1)")
    return _advance(state, transition, features, gamma, alpha, proj, lam=lam)


# ---------------------------------------------------------------------------
# Batch run loop


@dataclass(frozen=True, eq=False)
class RunRecord:
    """Per-checkpoint snapshots from one trajectory run."""

    checkpoints: np.ndarray
    theta_bars: np.ndarray  # (C, K)
    a_bars: np.ndarray      # (C,)
    theta_final: np.ndarray
    max_theta_norm: float


def resolve_step_sizes(step_size, T: int):
    """Normalize a step-size spec to a scalar or a length-T array.

    Accepted: None or "inv_sqrt" (constant 1/sqrt(T), the schedule the
    finite-horizon bounds assume), a positive float (constant), or
    ("inv_t", c) for alpha_t = c / (t+1).
    """
    if step_size is None or step_size == "inv_sqrt":
        return 1.0 / math.sqrt(max(T, 1))
    if isinstance(step_size, (int, float)):
        if step_size <= 0:
            raise ValueError("constant step size must be positive")
        return float(step_size)
    if isinstance(step_size, tuple) and len(step_size) == 2 and step_size[0] == "inv_t":
        c = float(step_size[1])
        return c / np.arange(1, T + 1)
    raise ValueError(f"unrecognized step-size spec: {step_size!r}")


def run_trajectory(
    trajectory: Trajectory | np.ndarray,
    features: FeatureMap,
    gamma: float,
    *,
    lam: float = 0.0,
    step_size=None,
    proj: ProjectionSpec = ProjectionSpec(),
    theta0: np.ndarray | None = None,
    checkpoints: np.ndarray | None = None,
    g_cap: float | None = None,
) -> RunRecord:
    """Run the learner over a fixed transition stream.

    This is the batch equivalent of repeatedly calling the step functions
    (verified bit-for-bit in the tests) with checkpointed snapshots of the
    averaged iterate and running reward mean. ``g_cap`` optionally asserts
    the per-step update norm bound ||delta * phi|| <= G along the run.
    """
    if isinstance(trajectory, Trajectory):
        states = trajectory.states
        rewards = trajectory.rewards
    else:
        arr = as_float_array(trajectory, "trajectory", ndim=2)
        if arr.shape[1] != 3:
            raise ValueError("trajectory array must have columns (s, r, s')")
        s_col = as_state_array(arr[:, 0], features.n_states, "trajectory states")
        s2_col = as_state_array(arr[:, 2], features.n_states, "trajectory next states")
        states = np.concatenate([s_col, s2_col[-1:]])
        if np.any(s_col[1:] != s2_col[:-1]):
            raise ValueError("trajectory transitions are not contiguous")
        rewards = arr[:, 1]
    T = len(rewards)
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if not 0 <= lam < 1:
        raise ValueError("lam must lie in [0, 1)")
    K = features.K
    theta = np.zeros(K) if theta0 is None else np.array(theta0, dtype=float)
    if theta.shape != (K,):
        raise ValueError(f"theta0 must have shape ({K},)")
    alphas = resolve_step_sizes(step_size, T)
    alpha_arr = None if np.isscalar(alphas) else np.asarray(alphas)
    if checkpoints is None:
        checkpoints = default_checkpoints(T)
    checkpoints = np.unique(np.asarray(checkpoints, dtype=np.int64))
    if checkpoints.size and (checkpoints[0] < 0 or checkpoints[-1] > T):
        raise ValueError("checkpoints must lie in [0, T]")

    Phi = features.Phi
    PhiS = Phi[states[:-1]]
    PhiN = Phi[states[1:]]
    row_norms = np.linalg.norm(PhiS, axis=1) if g_cap is not None else None

    gl = gamma * lam
    use_trace = lam > 0
    z = np.zeros(K)
    theta_sum = np.zeros(K)
    tmp = np.empty(K)
    a_bar = 0.0
    max_norm_sq = float(theta @ theta)
    proj_on = proj.enabled
    radius = proj.radius
    radius_sq = radius * radius if proj_on else math.inf

    cp_list = [int(c) for c in checkpoints] + [-1]
    theta_bars = np.empty((len(checkpoints), K))
    a_bars = np.empty(len(checkpoints))
    cp_idx = 0
    next_cp = cp_list[0] if cp_list[0] >= 0 else -1

    for t in range(T):
        if t == next_cp:
            theta_bars[cp_idx] = theta if t == 0 else theta_sum / t
            a_bars[cp_idx] = a_bar
            cp_idx += 1
            next_cp = cp_list[cp_idx]
        phi = PhiS[t]
        r = rewards[t]
        delta = r + gamma * (PhiN[t] @ theta) - phi @ theta
        if not math.isfinite(delta):
            raise RuntimeError(f"non-finite temporal-difference error at step {t}")
        if g_cap is not None and abs(delta) * row_norms[t] > g_cap + 1e-9:
            raise RuntimeError(f"update norm {abs(delta) * row_norms[t]:.6g} exceeds G={g_cap} at step {t}")
        theta_sum += theta
        a_bar = (t * a_bar + r) / (t + 1)
        if use_trace:
            z *= gl
            z += phi
            direction = z
        else:
            direction = phi
        alpha = alphas if alpha_arr is None else alpha_arr[t]
        np.multiply(direction, alpha * delta, out=tmp)
        theta += tmp
        nrm_sq = float(theta @ theta)
        if proj_on and nrm_sq > radius_sq:
            theta *= radius / math.sqrt(nrm_sq)
            nrm_sq = radius_sq
        if nrm_sq > max_norm_sq:
            max_norm_sq = nrm_sq
    while cp_idx < len(checkpoints):
        theta_bars[cp_idx] = theta if T == 0 else theta_sum / T
        a_bars[cp_idx] = a_bar
        cp_idx += 1
    return RunRecord(
        checkpoints=checkpoints,
        theta_bars=theta_bars,
        a_bars=a_bars,
        theta_final=theta,
        max_theta_norm=math.sqrt(max_norm_sq),
    )


def default_checkpoints(T: int) -> np.ndarray:
    """Geometric checkpoint grid: 0, powers of two, and T itself."""
    pts = {0, T}
    p = 1
    while p < T:
        pts.add(p)
        p *= 2
    return np.array(sorted(pts), dtype=np.int64)


# ---------------------------------------------------------------------------
# Mean-adjusted variant and Monte-Carlo experiments


def mean_adjusted_output(
    chain: InducedChain, features: FeatureMap, theta_bar: np.ndarray, a_bar: float
) -> tuple[np.ndarray, float]:
    """Re-center the learned value function along the all-ones direction.

    The running average reward estimates the stationary mean reward, so
    v_hat = a_bar / (1 - gamma) estimates the stationary mean of the value
    function; the output shifts V_theta_bar to have exactly that mean.
    """
    v_hat = a_bar / (1.0 - chain.gamma)
    v_learned = value_of(features, theta_bar)
    shift = v_hat - float(chain.pi @ v_learned)
    return v_learned + shift, v_hat


def run_mean_adjusted_td0(
    chain: InducedChain,
    features: FeatureMap,
    T: int,
    *,
    step_size=None,
    proj: ProjectionSpec | None = None,
    seed: int | None = None,
    theta0: np.ndarray | None = None,
    start: int | str = "stationary",
) -> tuple[np.ndarray, dict]:
    """One-step learner plus separate estimation of the value-function mean.

    Runs the projected one-step learner while keeping the running average
    of observed rewards, then outputs V' = V_theta_bar + (v_hat - mean of
    V_theta_bar under pi) * 1. Projection is mandatory here: the radius
    must cover the fixed point for the run to be meaningful.
    """
    fp = td0_fixed_point(chain, features)
    if proj is None:
        proj = ProjectionSpec.ball(default_radius(fp))
    _check_projection_covers(proj, fp)
    traj = sample_trajectory(chain, T, seed=seed, start=start)
    rec = run_trajectory(
        traj, features, chain.gamma, step_size=step_size, proj=proj, theta0=theta0,
        checkpoints=np.array([T]),
    )
    theta_bar = rec.theta_bars[-1]
    v_prime, v_hat = mean_adjusted_output(chain, features, theta_bar, rec.a_bars[-1])
    mean_gap = abs(float(chain.pi @ v_prime) - v_hat)
    if mean_gap > 1e-12 * (1.0 + abs(v_hat)):
        raise RuntimeError(f"output mean {mean_gap:.3e} away from its target")
    diagnostics = {
        "v_hat": v_hat,
        "a_bar": float(rec.a_bars[-1]),
        "theta_bar": theta_bar,
        "output_mean_gap": mean_gap,
        "start_mode": traj.start_mode,
        "stationary_start": traj.start_mode == "stationary",
    }
    return v_prime, diagnostics


def _check_projection_covers(proj: ProjectionSpec, fp: FixedPoint) -> None:
    if proj.enabled and proj.radius < float(np.linalg.norm(fp.theta)):
        raise ValueError(
            f"projection radius {proj.radius:.6g} excludes the fixed point "
            f"(norm {float(np.linalg.norm(fp.theta)):.6g}); enlarge the ball"
        )


@dataclass(frozen=True, eq=False)
class RunResult:
    """Seeded Monte-Carlo error trajectories for one algorithm configuration.

    Arrays are (n_seeds, n_checkpoints); errors are measured against the
    algorithm's own fixed point. ``f_value`` is the certified quadratic at
    the averaged iterate; ``v_prime_err_d_sq`` and ``v_hat`` are only
    recorded for the mean-adjusted variant (compared against the true
    value function).
    """

    algo: str
    lam: float
    gamma: float
    T: int
    seeds: tuple[int, ...]
    checkpoints: np.ndarray
    err_d_sq: np.ndarray
    err_dir_sq: np.ndarray
    f_value: np.ndarray
    v_prime_err_d_sq: np.ndarray | None
    v_hat: np.ndarray | None
    radius: float
    step_size_desc: str
    theta_star: np.ndarray
    start_mode: str
    stationary_start: bool

    def mean_stderr(self, name: str, checkpoint_index: int = -1) -> tuple[float, float]:
        """Across-seed mean and standard error of a recorded quantity."""
        arr = getattr(self, name)
        col = arr[:, checkpoint_index]
        mean = float(col.mean())
        if len(col) < 2:
            return mean, 0.0
        return mean, float(col.std(ddof=1) / math.sqrt(len(col)))


def run_experiment(
    chain: InducedChain,
    features: FeatureMap,
    algo: str,
    T: int,
    seeds,
    *,
    lam: float = 0.0,
    radius: float | None = None,
    step_size=None,
    theta0: np.ndarray | None = None,
    checkpoints: np.ndarray | None = None,
    start: int | str = "stationary",
    check_g_bound: bool = True,
) -> RunResult:
    """Seeded replicates of one learner configuration with error recording.

    Configuration problems (unknown algorithm, projection radius excluding
    the fixed point) are reported before any trajectory is sampled. The
    result is deterministic given the seed list: each seed owns an
    independent generator and aggregation runs in seed order.
    """
    if algo not in ("td0", "td_lambda", "mean_adjusted"):
        raise ValueError(f"unknown algorithm {algo!r}")
    if algo != "td_lambda" and lam != 0.0:
        raise ValueError("lam is only meaningful for algo='td_lambda'")
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ValueError("need at least one seed")

    if algo == "td_lambda":
        fp = td_lambda_fixed_point(chain, features, lam)
        cert: SplittingCertificate = splitting_certificate_td_lambda(chain, features, lam)
    else:
        fp = td0_fixed_point(chain, features)
        cert = splitting_certificate_td0(chain, features)
    proj = ProjectionSpec.ball(radius if radius is not None else default_radius(fp))
    _check_projection_covers(proj, fp)
    # the per-step update-norm cap only holds once iterates live in the ball
    theta0_inside = theta0 is None or float(np.linalg.norm(theta0)) <= proj.radius
    g_cap = chain.r_max + 2.0 * proj.radius if (check_g_bound and theta0_inside) else None

    if checkpoints is None:
        checkpoints = default_checkpoints(T) if T > 0 else np.array([0])
    checkpoints = np.unique(np.asarray(checkpoints, dtype=np.int64))
    C = len(checkpoints)
    S = len(seeds)
    star_values = value_of(features, fp.theta)
    V = true_value(chain) if algo == "mean_adjusted" else None

    err_d = np.empty((S, C))
    err_dir = np.empty((S, C))
    f_val = np.empty((S, C))
    vprime_err = np.empty((S, C)) if algo == "mean_adjusted" else None
    v_hats = np.empty((S, C)) if algo == "mean_adjusted" else None
    start_mode = "stationary" if start == "stationary" else f"fixed({int(start)})"

    for i, seed in enumerate(seeds):
        if T > 0:
            traj = sample_trajectory(chain, T, seed=seed, start=start)
            rec = run_trajectory(
                traj, features, chain.gamma,
                lam=lam if algo == "td_lambda" else 0.0,
                step_size=step_size, proj=proj, theta0=theta0,
                checkpoints=checkpoints, g_cap=g_cap,
            )
            theta_bars, a_bars = rec.theta_bars, rec.a_bars
        else:
            theta_bars = np.tile(np.zeros(features.K) if theta0 is None else np.asarray(theta0, float), (C, 1))
            a_bars = np.zeros(C)
        for j in range(C):
            diff = star_values - value_of(features, theta_bars[j])
            err_d[i, j] = d_norm_sq(chain, diff)
            err_dir[i, j] = dirichlet_sq(chain, diff)
            f_val[i, j] = cert.objective(theta_bars[j])
            if algo == "mean_adjusted":
                v_prime, v_hat = mean_adjusted_output(chain, features, theta_bars[j], a_bars[j])
                vprime_err[i, j] = d_norm_sq(chain, v_prime - V)
                v_hats[i, j] = v_hat

    alphas = resolve_step_sizes(step_size, T)
    desc = f"const({alphas:.6g})" if np.isscalar(alphas) else "inv_t"
    if step_size is None or step_size == "inv_sqrt":
        desc = "1/sqrt(T)"
    return RunResult(
        algo=algo,
        lam=lam,
        gamma=chain.gamma,
        T=T,
        seeds=seeds,
        checkpoints=checkpoints,
        err_d_sq=err_d,
        err_dir_sq=err_dir,
        f_value=f_val,
        v_prime_err_d_sq=vprime_err,
        v_hat=v_hats,
        radius=proj.radius,
        step_size_desc=desc,
        theta_star=fp.theta,
        start_mode=start_mode,
        stationary_start=start_mode == "stationary",
    )


# ---------------------------------------------------------------------------
# scikit-learn estimator facade


class TDValueEstimator(BaseEstimator):
    """Linear TD policy evaluation behind a scikit-learn fit/predict surface.

    Parameters
    ----------
    feature_map : FeatureMap
        Per-state feature vectors; defines the approximation family.
    gamma : float
        Discount factor of the evaluated chain.
    lam : float
        Eligibility-trace weight in [0, 1); 0 gives the one-step learner.
    step_size : None, float, or ("inv_t", c)
        None uses the constant 1/sqrt(T) schedule.
    radius : float or None
        Projection ball radius; None disables projection.
    mean_adjust : bool
        Re-center the learned values using the running average reward;
        requires ``stationary_weights``.
    stationary_weights : array or None
        Stationary distribution of the sampled chain (only needed for
        ``mean_adjust``).

    ``fit`` consumes a transition stream: either a ``Trajectory`` or a
    (T, 3) array with columns (s, r, s'). ``predict`` maps state indices
    to values of the averaged iterate.
    """

    def __init__(
        self,
        feature_map: FeatureMap | None = None,
        gamma: float = 0.99,
        lam: float = 0.0,
        step_size=None,
        radius: float | None = None,
        mean_adjust: bool = False,
        stationary_weights=None,
    ):
        self.feature_map = feature_map
        self.gamma = gamma
        self.lam = lam
        self.step_size = step_size
        self.radius = radius
        self.mean_adjust = mean_adjust
        self.stationary_weights = stationary_weights

    def fit(self, X, y=None):
        if self.feature_map is None:
            raise ValueError("feature_map is required")
        if self.mean_adjust and self.stationary_weights is None:
            raise ValueError("mean_adjust=True requires stationary_weights")
        proj = ProjectionSpec.ball(self.radius) if self.radius is not None else ProjectionSpec.none()
        T = len(X.rewards) if isinstance(X, Trajectory) else np.asarray(X).shape[0]
        rec = run_trajectory(
            X, self.feature_map, self.gamma, lam=self.lam,
            step_size=self.step_size, proj=proj, checkpoints=np.array([T]),
        )
        self.theta_ = rec.theta_final.copy()
        self.theta_bar_ = rec.theta_bars[-1].copy()
        self.reward_mean_ = float(rec.a_bars[-1])
        self.n_steps_ = T
        if self.mean_adjust:
            pi = as_float_array(self.stationary_weights, "stationary_weights", ndim=1)
            v_hat = self.reward_mean_ / (1.0 - self.gamma)
            v_learned = value_of(self.feature_map, self.theta_bar_)
            self.value_shift_ = v_hat - float(pi @ v_learned)
            self.v_hat_ = v_hat
        else:
            self.value_shift_ = 0.0
        return self

    def predict(self, X):
        if not hasattr(self, "theta_bar_"):
            raise NotFittedError("call fit before predict")
        states = as_state_array(np.asarray(X).ravel(), self.feature_map.n_states, "states")
        values = value_of(self.feature_map, self.theta_bar_)
        return values[states] + self.value_shift_
