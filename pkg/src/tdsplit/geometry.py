"""Norms and spectral objects attached to an induced chain.

The chain's stationary distribution defines a weighted Euclidean geometry
on value functions (the D-norm) and an energy seminorm that only sees
differences across transitions (the Dirichlet seminorm, with a k-step
variant built from P^k). Both have matrix representations: D = diag(pi)
and a symmetric Laplacian L with x^T L x equal to the squared Dirichlet
seminorm. The reversed chain, its additive reversibilization Q, and the
inverse spectral gap r_P = 1 / lambda_{n-1}(D^{-1} L) complete the picture.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .mdp import InducedChain
from .validation import as_float_array, check_length

NEGATIVE_CLAMP_WARN = -1e-12


@dataclass(frozen=True, eq=False)
class SpectralSummary:
    """Laplacian, reversed chain, reversibilization, and spectral gap data."""

    L: np.ndarray
    P_star: np.ndarray
    Q: np.ndarray
    lambda_second_smallest: float
    r_P: float

    def __post_init__(self):
        L = as_float_array(self.L, "L", ndim=2)
        if float(np.abs(L - L.T).max()) > 1e-12:
            raise ValueError("L must be symmetric")
        if float(np.abs(L.sum(axis=1)).max()) > 1e-12:
            raise ValueError("rows of L must sum to zero")
        off = L[~np.eye(L.shape[0], dtype=bool)]
        if off.size and off.max() > 0:
            raise ValueError("off-diagonal entries of L must be nonpositive")


def d_inner(chain: InducedChain, u: np.ndarray, v: np.ndarray) -> float:
    """Stationary-weighted inner product sum_s pi_s u(s) v(s)."""
    u = as_float_array(u, "u", ndim=1)
    v = as_float_array(v, "v", ndim=1)
    check_length(u, chain.n_states, "u")
    check_length(v, chain.n_states, "v")
    return float(chain.pi @ (u * v))


def d_norm_sq(chain: InducedChain, v: np.ndarray) -> float:
    """Squared D-norm sum_s pi_s v(s)^2."""
    v = as_float_array(v, "v", ndim=1)
    check_length(v, chain.n_states, "v")
    return float(chain.pi @ (v * v))


def _clamp_seminorm(value: float, what: str) -> float:
    if value < 0:
        if value < NEGATIVE_CLAMP_WARN:
            warnings.warn(f"{what} produced {value:.3e} < 0 beyond round-off; clamping to 0")
        return 0.0
    return value


def dirichlet_sq(chain: InducedChain, v: np.ndarray, k: int = 1) -> float:
    """Squared k-step Dirichlet seminorm.

    0.5 * sum_{s,s'} pi_s P^k(s,s') (v(s') - v(s))^2; zero exactly on
    multiples of the all-ones vector. Tiny negative round-off is clamped
    at zero.
    """
    v = as_float_array(v, "v", ndim=1)
    check_length(v, chain.n_states, "v")
    if k < 1:
        raise ValueError("k must be >= 1")
    Pk = np.linalg.matrix_power(chain.P, k)
    diff = v[None, :] - v[:, None]
    val = 0.5 * float(np.sum(chain.pi[:, None] * Pk * diff * diff))
    return _clamp_seminorm(val, f"{k}-step Dirichlet seminorm")


def laplacian(chain: InducedChain, k: int = 1) -> np.ndarray:
    """Symmetric k-step Laplacian with x^T L x = squared k-step Dirichlet seminorm.

    Off-diagonal entries are -(pi_i P^k(i,j) + pi_j P^k(j,i)) / 2 and the
    diagonal is set so rows sum to zero exactly.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    Pk = np.linalg.matrix_power(chain.P, k)
    W = chain.pi[:, None] * Pk
    L = -0.5 * (W + W.T)
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=1))
    return L


def project_onto_ones_complement(chain: InducedChain, v: np.ndarray) -> np.ndarray:
    """Remove the stationary mean: returns v - (pi^T v) * 1.

    The result is D-orthogonal to the all-ones vector, the subspace on
    which the Dirichlet seminorm is a genuine norm.
    """
    v = as_float_array(v, "v", ndim=1)
    check_length(v, chain.n_states, "v")
    return v - float(chain.pi @ v)


def reversibilization(chain: InducedChain) -> SpectralSummary:
    """Reversed chain, additive reversibilization, and inverse spectral gap.

    P*(i,j) = pi_j P(j,i) / pi_i shares the stationary distribution of P,
    Q = (P + P*)/2 is reversible, and Q = I - D^{-1} L. The eigenproblem is
    solved on the symmetric conjugate D^{-1/2} L D^{-1/2}, whose spectrum is
    real and nonnegative with smallest eigenvalue 0; r_P is the reciprocal
    of the second smallest eigenvalue.
    """
    pi = chain.pi
    if pi.min() <= 0:
        raise ValueError("reversibilization needs a strictly positive stationary distribution")
    n = chain.n_states
    P_star = (pi[None, :] * chain.P.T) / pi[:, None]
    Q = 0.5 * (chain.P + P_star)
    L = laplacian(chain)
    if float(np.abs(Q - (np.eye(n) - L / pi[:, None])).max()) > 1e-12:
        raise ValueError("Q and I - D^{-1} L disagree beyond round-off")
    if n == 1:
        return SpectralSummary(L=L, P_star=P_star, Q=Q, lambda_second_smallest=math.inf, r_P=0.0)
    inv_sqrt = 1.0 / np.sqrt(pi)
    sym = inv_sqrt[:, None] * L * inv_sqrt[None, :]
    eigvals = np.linalg.eigvalsh(0.5 * (sym + sym.T))
    if abs(float(eigvals[0])) > 1e-10:
        raise ValueError(f"smallest eigenvalue of D^-1 L should be 0, got {eigvals[0]:.3e}")
    lam2 = float(eigvals[1])
    if lam2 <= 0:
        raise ValueError("second smallest eigenvalue must be positive for an ergodic chain")
    return SpectralSummary(L=L, P_star=P_star, Q=Q, lambda_second_smallest=lam2, r_P=1.0 / lam2)
