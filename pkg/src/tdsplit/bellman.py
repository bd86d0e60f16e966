"""Exact matrix-level objects for temporal-difference policy evaluation.

Everything here is deterministic dense linear algebra on the induced
chain: the one-step and trace-averaged Bellman operators, the true value
function, the fixed points that TD(0) and TD(lambda) converge to, the mean
update directions at a given parameter vector, and the splitting
certificates. A certificate pins down a matrix pair (B, A): the mean
update is the linear map -B(theta - theta*), A is assembled independently
from stationary weights and Laplacians, and B + B^T = 2A certifies that
the mean update is a gradient splitting of the quadratic
(theta - theta*)^T A (theta - theta*). The certificate check is only
meaningful because the two sides are built along different routes; A is
never obtained by symmetrizing B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .features import FeatureMap, value_of
from .geometry import laplacian
from .mdp import InducedChain
from .validation import as_float_array, check_length

FIXED_POINT_RESIDUAL_TOL = 1e-9
TD0_CERT_TOL = 1e-10
TDLAMBDA_CERT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class FixedPoint:
    """Parameter vector where the mean TD update vanishes.

    ``kappa`` is (1 - lam) / (1 - gamma * lam), the weight that transfers
    between the D-norm and Dirichlet parts of the certified quadratic;
    it equals 1 in the one-step case lam = 0.
    """

    theta: np.ndarray
    lam: float
    kappa: float
    residual: float

    def __post_init__(self):
        theta = as_float_array(self.theta, "theta", ndim=1)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if self.residual > FIXED_POINT_RESIDUAL_TOL:
            raise ValueError(f"fixed-point residual {self.residual:.3e} exceeds {FIXED_POINT_RESIDUAL_TOL}")
        if self.lam == 0.0 and abs(self.kappa - 1.0) > 1e-15:
            raise ValueError("kappa must be 1 when lam = 0")


@dataclass(frozen=True, eq=False)
class SplittingCertificate:
    """Matrix pair certifying the mean TD update as a gradient splitting.

    ``residual_inf`` is the induced infinity norm of B + B^T - 2A. For the
    trace-averaged case the infinite series defining both matrices is cut
    at ``truncation`` terms and ``tail_budget`` bounds the truncation's
    possible contribution to the residual, so the acceptance test is
    residual_inf <= tolerance + tail_budget.
    """

    B: np.ndarray
    A: np.ndarray
    theta_star: np.ndarray
    residual_inf: float
    tolerance: float
    lam: float = 0.0
    truncation: int | None = None
    tail_budget: float = 0.0

    def __post_init__(self):
        B = as_float_array(self.B, "B", ndim=2)
        A = as_float_array(self.A, "A", ndim=2)
        if float(np.abs(A - A.T).max()) > 1e-12:
            raise ValueError("A must be symmetric")
        if float(np.linalg.eigvalsh(A)[0]) < -1e-10:
            raise ValueError("A must be positive semidefinite")
        if self.residual_inf > self.tolerance + self.tail_budget:
            raise ValueError(
                f"splitting residual {self.residual_inf:.3e} exceeds "
                f"tolerance {self.tolerance:.1e} + tail budget {self.tail_budget:.3e}"
            )
        for name, arr in (("B", B), ("A", A)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def mean_direction(self, theta: np.ndarray) -> np.ndarray:
        """The mean update at theta, -B (theta - theta_star)."""
        return -self.B @ (np.asarray(theta, dtype=float) - self.theta_star)

    def objective(self, theta: np.ndarray) -> float:
        """The certified quadratic (theta - theta*)^T A (theta - theta*)."""
        d = np.asarray(theta, dtype=float) - self.theta_star
        return float(d @ self.A @ d)


# ---------------------------------------------------------------------------
# Bellman operators and the true value function


def bellman_apply(chain: InducedChain, v: np.ndarray) -> np.ndarray:
    """One-step Bellman operator, (Tv)(s) = sum_s' P(s,s') (r(s,s') + gamma v(s'))."""
    v = as_float_array(v, "v", ndim=1)
    check_length(v, chain.n_states, "v")
    return chain.R + chain.gamma * (chain.P @ v)


def true_value(chain: InducedChain) -> np.ndarray:
    """Exact value function, the solution of (I - gamma P) V = R.

    Also verifies the solve residual and the mean identity
    pi^T V = pi^T R / (1 - gamma), both of which must hold to within
    round-off for a correctly assembled chain.
    """
    n = chain.n_states
    V = np.linalg.solve(np.eye(n) - chain.gamma * chain.P, chain.R)
    scale = 1.0 + float(np.abs(chain.R).max())
    resid = float(np.abs((np.eye(n) - chain.gamma * chain.P) @ V - chain.R).max())
    if resid > 1e-10 * scale:
        raise ValueError(f"value solve residual {resid:.3e} too large")
    v_bar = float(chain.pi @ V)
    v_bar_direct = float(chain.pi @ chain.R) / (1.0 - chain.gamma)
    if abs(v_bar - v_bar_direct) > 1e-10 * (1.0 + abs(v_bar_direct)):
        raise ValueError("stationary mean of V disagrees with pi^T R / (1 - gamma)")
    return V


def mean_value(chain: InducedChain) -> float:
    """Stationary mean of the true value function, pi^T R / (1 - gamma)."""
    return float(chain.pi @ chain.R) / (1.0 - chain.gamma)


def t_lambda_tail_bound(chain: InducedChain, v: np.ndarray, lam: float, truncate: int) -> float:
    """Sup-norm bound on the series tail dropped by ``t_lambda_apply(..., truncate)``."""
    g, l = chain.gamma, lam
    r_part = l ** (truncate + 1) * float(np.abs(chain.R).max()) / (1.0 - g)
    j_part = (1.0 - l) * g * (g * l) ** (truncate + 1) / (1.0 - g * l) * float(np.abs(v).max())
    return r_part + j_part


def t_lambda_apply(
    chain: InducedChain,
    v: np.ndarray,
    lam: float,
    truncate: int | None = None,
) -> np.ndarray:
    """Trace-averaged Bellman operator.

    The geometric average over lookahead depths resums in closed form to

        (I - gamma lam P)^{-1} R + (1 - lam) gamma P (I - gamma lam P)^{-1} v,

    which is the default evaluation path. ``truncate=M`` instead evaluates
    the defining double series cut at depth M; the two agree to within
    ``t_lambda_tail_bound``. At lam = 0 both reduce to the one-step
    operator; lam = 1 is rejected (the series does not converge there).
    """
    v = as_float_array(v, "v", ndim=1)
    check_length(v, chain.n_states, "v")
    if not 0 <= lam < 1:
        raise ValueError("lam must lie in [0, 1)")
    g = chain.gamma
    n = chain.n_states
    if truncate is None:
        M_resolvent = np.eye(n) - g * lam * chain.P
        u = np.linalg.solve(M_resolvent, chain.R)
        w = np.linalg.solve(M_resolvent, v)
        return u + (1.0 - lam) * g * (chain.P @ w)
    if truncate < 0:
        raise ValueError("truncate must be >= 0")
    prefix = chain.R.copy()          # sum_{t<=m} gamma^t P^t R, updated per m
    power_R = chain.R.copy()         # gamma^m P^m R
    power_v = g * (chain.P @ v)      # gamma^{m+1} P^{m+1} v
    acc = np.zeros(n)
    for m in range(truncate + 1):
        acc += lam**m * (prefix + power_v)
        power_R = g * (chain.P @ power_R)
        prefix = prefix + power_R
        power_v = g * (chain.P @ power_v)
    return (1.0 - lam) * acc


# ---------------------------------------------------------------------------
# Mean update directions and fixed points


def _weighted(chain: InducedChain, Phi: np.ndarray) -> np.ndarray:
    """D-weighted features, rows pi_s * phi(s)."""
    return chain.pi[:, None] * Phi


def mean_direction_td0(chain: InducedChain, features: FeatureMap, theta: np.ndarray) -> np.ndarray:
    """Stationary average of the one-step TD update direction at theta."""
    theta = as_float_array(theta, "theta", ndim=1)
    Phi = features.Phi
    Vt = value_of(features, theta)
    return Phi.T @ (chain.pi * (chain.R + chain.gamma * (chain.P @ Vt) - Vt))


def mean_direction_td_lambda(
    chain: InducedChain, features: FeatureMap, lam: float, theta: np.ndarray
) -> np.ndarray:
    """Stationary average of the trace-weighted TD update direction at theta."""
    Vt = value_of(features, as_float_array(theta, "theta", ndim=1))
    return features.Phi.T @ (chain.pi * (t_lambda_apply(chain, Vt, lam) - Vt))


def _polished_solve(Msys: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Dense solve with one step of iterative refinement."""
    try:
        x = np.linalg.solve(Msys, rhs)
        x = x + np.linalg.solve(Msys, rhs - Msys @ x)
    except np.linalg.LinAlgError as err:
        raise ValueError(f"fixed-point system is singular ({err}); check chain ergodicity and feature rank") from err
    return x


def td0_fixed_point(chain: InducedChain, features: FeatureMap) -> FixedPoint:
    """The parameter vector where the mean one-step TD update vanishes."""
    Phi = features.Phi
    # Phi^T D (I - gamma P) Phi, assembled without forming D explicitly
    Bmat = Phi.T @ (chain.pi[:, None] * (Phi - chain.gamma * (chain.P @ Phi)))
    rhs = Phi.T @ (chain.pi * chain.R)
    theta = _polished_solve(Bmat, rhs)
    residual = float(np.linalg.norm(mean_direction_td0(chain, features, theta)))
    return FixedPoint(theta=theta, lam=0.0, kappa=1.0, residual=residual)


def td_lambda_fixed_point(chain: InducedChain, features: FeatureMap, lam: float) -> FixedPoint:
    """The parameter vector where the mean trace-weighted update vanishes."""
    if not 0 <= lam < 1:
        raise ValueError("lam must lie in [0, 1)")
    g = chain.gamma
    Phi = features.Phi
    n = chain.n_states
    resolvent = np.linalg.solve(np.eye(n) - g * lam * chain.P, np.column_stack([Phi, chain.R]))
    res_Phi, res_R = resolvent[:, :-1], resolvent[:, -1]
    Msys = Phi.T @ (chain.pi[:, None] * ((1.0 - lam) * g * (chain.P @ res_Phi) - Phi))
    rhs = -(Phi.T @ (chain.pi * res_R))
    theta = _polished_solve(Msys, rhs)
    residual = float(np.linalg.norm(mean_direction_td_lambda(chain, features, lam, theta)))
    kappa = (1.0 - lam) / (1.0 - g * lam)
    return FixedPoint(theta=theta, lam=lam, kappa=kappa, residual=residual)


# ---------------------------------------------------------------------------
# Splitting certificates


def _inf_norm(M: np.ndarray) -> float:
    """Induced infinity norm (max absolute row sum)."""
    return float(np.abs(M).sum(axis=1).max()) if M.size else 0.0


def choose_truncation(gamma: float, lam: float, tolerance: float) -> int:
    """Smallest series depth M with (gamma lam)^{M+1} / (1 - gamma lam) <= tolerance / 100.

    The 1/100 headroom keeps the analytic tail budget a small fraction of
    the certificate tolerance.
    """
    gl = gamma * lam
    if gl <= 0:
        return 0
    target = 0.01 * tolerance * (1.0 - gl)
    M = max(0, math.ceil(math.log(target) / math.log(gl)) - 1)
    while gl ** (M + 1) / (1.0 - gl) > 0.01 * tolerance:
        M += 1
    return M


def splitting_certificate_td0(
    chain: InducedChain, features: FeatureMap, tolerance: float = TD0_CERT_TOL
) -> SplittingCertificate:
    """Certificate for the one-step mean update.

    B = Phi^T D (I - gamma P) Phi reproduces the mean update as
    -B(theta - theta*); A = (1-gamma) Phi^T D Phi + gamma Phi^T L Phi is
    assembled from the stationary weights and the Laplacian, so the
    residual ||B + B^T - 2A|| checks an identity between two independently
    constructed objects.
    """
    Phi = features.Phi
    Wp = _weighted(chain, Phi)
    Bmat = Phi.T @ (Wp - chain.gamma * (chain.pi[:, None] * (chain.P @ Phi)))
    Dquad = Phi.T @ Wp
    Lquad = Phi.T @ laplacian(chain) @ Phi
    Amat = (1.0 - chain.gamma) * Dquad + chain.gamma * Lquad
    Amat = 0.5 * (Amat + Amat.T)  # symmetrize round-off only; terms are symmetric in exact arithmetic
    residual = _inf_norm(Bmat + Bmat.T - 2.0 * Amat)
    theta_star = td0_fixed_point(chain, features).theta
    return SplittingCertificate(
        B=Bmat, A=Amat, theta_star=theta_star, residual_inf=residual, tolerance=tolerance, lam=0.0
    )


def splitting_certificate_td_lambda(
    chain: InducedChain,
    features: FeatureMap,
    lam: float,
    truncate: int | None = None,
    tolerance: float = TDLAMBDA_CERT_TOL,
) -> SplittingCertificate:
    """Certificate for the trace-weighted mean update.

    B and A are the depth-M truncations of the geometric series over
    multi-step transitions; the depth-(m+1) Laplacians enter A exactly
    where powers of P enter B, so the truncated identity holds up to an
    explicit geometric tail. A closed-form resolvent evaluation of B
    cross-checks the series. When ``truncate`` is given but too shallow
    for the tolerance the call fails, reporting the required depth.
    """
    if not 0 <= lam < 1:
        raise ValueError("lam must lie in [0, 1)")
    g = chain.gamma
    required = choose_truncation(g, lam, tolerance)
    if truncate is None:
        truncate = required
    elif truncate < required:
        raise ValueError(
            f"series depth {truncate} too small for tolerance {tolerance:.1e}; need at least {required}"
        )
    Phi = features.Phi
    n = chain.n_states
    Dquad = Phi.T @ _weighted(chain, Phi)
    kappa = (1.0 - lam) / (1.0 - g * lam)

    series_B = np.zeros((features.K, features.K))
    series_A = np.zeros((features.K, features.K))
    Pm1 = chain.P.copy()  # P^{m+1}
    for m in range(truncate + 1):
        coeff = (1.0 - lam) * lam**m * g ** (m + 1)
        W = chain.pi[:, None] * Pm1
        series_B += coeff * (Phi.T @ W @ Phi)
        Lk = -0.5 * (W + W.T)
        np.fill_diagonal(Lk, 0.0)
        np.fill_diagonal(Lk, -Lk.sum(axis=1))
        series_A += coeff * (Phi.T @ Lk @ Phi)
        if m < truncate:
            Pm1 = Pm1 @ chain.P
    Bmat = Dquad - series_B
    Amat = (1.0 - g * kappa) * Dquad + series_A
    Amat = 0.5 * (Amat + Amat.T)

    # closed-form resolvent cross-check of the truncated series for B
    resolvent = np.linalg.solve(np.eye(n) - g * lam * chain.P, Phi)
    B_closed = Dquad - (1.0 - lam) * g * (Phi.T @ (chain.pi[:, None] * (chain.P @ resolvent)))
    series_gap = g * kappa * (g * lam) ** (truncate + 1) * _inf_norm(Dquad)
    if _inf_norm(Bmat - B_closed) > series_gap + 1e-11:
        raise ValueError("truncated series and resolvent form of B disagree beyond the analytic tail")

    tail_budget = 2.0 * g * kappa * (g * lam) ** (truncate + 1) * _inf_norm(Dquad)
    residual = _inf_norm(Bmat + Bmat.T - 2.0 * Amat)
    theta_star = td_lambda_fixed_point(chain, features, lam).theta
    return SplittingCertificate(
        B=Bmat,
        A=Amat,
        theta_star=theta_star,
        residual_inf=residual,
        tolerance=tolerance,
        lam=lam,
        truncation=truncate,
        tail_budget=tail_budget,
    )


def progress_identity(
    chain: InducedChain,
    features: FeatureMap,
    theta: np.ndarray,
    fixed_point: FixedPoint | None = None,
) -> tuple[float, float]:
    """Inner product of the mean update with the direction to the fixed point.

    Returns (lhs, rhs) where lhs = (theta* - theta)^T gbar(theta) and
    rhs = (1-gamma) ||V_theta* - V_theta||_D^2 + gamma ||.||_Dir^2. The two
    are equal: the mean update makes exactly as much progress toward the
    fixed point as the gradient of the certified quadratic would.
    """
    from .geometry import d_norm_sq, dirichlet_sq

    if fixed_point is None:
        fixed_point = td0_fixed_point(chain, features)
    theta = as_float_array(theta, "theta", ndim=1)
    gbar = mean_direction_td0(chain, features, theta)
    lhs = float((fixed_point.theta - theta) @ gbar)
    diff = value_of(features, fixed_point.theta) - value_of(features, theta)
    rhs = (1.0 - chain.gamma) * d_norm_sq(chain, diff) + chain.gamma * dirichlet_sq(chain, diff)
    return lhs, rhs
