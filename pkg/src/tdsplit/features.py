"""Linear value-function features.

A feature map assigns each state a K-vector; stacking them gives the
n x K matrix Phi and the value approximation V_theta = Phi theta. Two
conditions are enforced at construction: full column rank, so the
approximation family has a unique parameterization, and row norms at
most one, the normalization under which the step-norm constant
G = r_max + 2R of the learning bounds is valid.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .validation import as_float_array

RANK_TOL = 1e-10
ROW_NORM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Validated feature matrix; ``Phi[s]`` is the feature vector of state s."""

    Phi: np.ndarray
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        Phi = as_float_array(self.Phi, "Phi", ndim=2)
        n, K = Phi.shape
        if K < 1 or K > n:
            raise ValueError(f"need 1 <= K <= n_states, got K={K}, n={n}")
        smin = float(np.linalg.svd(Phi, compute_uv=False)[-1])
        if smin <= RANK_TOL:
            raise ValueError(f"Phi is rank deficient (smallest singular value {smin:.3e})")
        max_row = float(np.sqrt((Phi * Phi).sum(axis=1).max()))
        if max_row**2 > 1.0 + ROW_NORM_TOL:
            raise ValueError(f"feature rows must have squared norm <= 1, max is {max_row**2:.6f}")
        Phi.setflags(write=False)
        object.__setattr__(self, "Phi", Phi)

    @property
    def n_states(self) -> int:
        return self.Phi.shape[0]

    @property
    def K(self) -> int:
        return self.Phi.shape[1]


def make_feature_map(Phi_raw, repair: bool = False) -> FeatureMap:
    """Validate a raw feature matrix, optionally repairing it.

    With ``repair=False`` (the default) any violation raises, since silent
    feature modification would invalidate comparisons between runs. With
    ``repair=True``, rows are rescaled by the largest row norm when the
    norm bound fails, and a rank-revealing pivoted QR drops dependent
    columns while preserving the column span; what changed is recorded in
    ``FeatureMap.notes``.
    """
    Phi = as_float_array(Phi_raw, "Phi", ndim=2)
    if not Phi.any():
        raise ValueError("feature matrix is identically zero")
    notes: list[str] = []
    if not repair:
        return FeatureMap(Phi=Phi)

    max_row = float(np.sqrt((Phi * Phi).sum(axis=1).max()))
    if max_row**2 > 1.0 + ROW_NORM_TOL:
        Phi = Phi / max_row
        notes.append(f"rows scaled by 1/{max_row:.6g} to restore the unit row-norm bound")

    _, R_fac, piv = scipy.linalg.qr(Phi, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R_fac))
    rank = int((diag > RANK_TOL * max(diag[0], 1e-300)).sum())
    if rank == 0:
        raise ValueError("feature matrix is numerically zero")
    if rank < Phi.shape[1]:
        keep = np.sort(piv[:rank])
        dropped = sorted(set(range(Phi.shape[1])) - set(keep.tolist()))
        Phi = Phi[:, keep]
        notes.append(f"dropped dependent feature columns {dropped} (span preserved)")
    return FeatureMap(Phi=Phi, notes=tuple(notes))


def value_of(features: FeatureMap, theta: np.ndarray) -> np.ndarray:
    """Per-state values of the linear approximation, V_theta = Phi theta."""
    theta = as_float_array(theta, "theta", ndim=1)
    if theta.shape != (features.K,):
        raise ValueError(f"theta must have shape ({features.K},), got {theta.shape}")
    return features.Phi @ theta


# ---------------------------------------------------------------------------
# Named generators and file loading


def identity_features(n_states: int) -> FeatureMap:
    """Tabular case: one indicator feature per state."""
    return FeatureMap(Phi=np.eye(n_states))


def random_unit_row_features(n_states: int, K: int, seed: int | None = None) -> FeatureMap:
    """Rows drawn uniformly on the unit sphere in R^K (full rank, redrawn if not)."""
    rng = np.random.default_rng(seed)
    for _ in range(64):
        G = rng.standard_normal((n_states, K))
        Phi = G / np.linalg.norm(G, axis=1, keepdims=True)
        if np.linalg.svd(Phi, compute_uv=False)[-1] > RANK_TOL:
            return FeatureMap(Phi=Phi)
    raise ValueError("failed to draw a full-rank unit-row feature matrix")


def fourier_features(n_states: int, K: int) -> FeatureMap:
    """Low-frequency cosine/sine features on the state index, scaled to unit rows."""
    if not 1 <= K <= n_states:
        raise ValueError("need 1 <= K <= n_states")
    s = np.arange(n_states)
    cols = [np.ones(n_states)]
    freq = 1
    while len(cols) < K:
        cols.append(np.cos(2 * np.pi * freq * s / n_states))
        if len(cols) < K:
            cols.append(np.sin(2 * np.pi * freq * s / n_states))
        freq += 1
    Phi = np.column_stack(cols[:K])
    max_row = float(np.sqrt((Phi * Phi).sum(axis=1).max()))
    return FeatureMap(Phi=Phi / max_row)


_GEN_RE = re.compile(r"^(?P<name>[a-z_]+)\s*(?:\((?P<args>[^)]*)\))?$")


def features_from_spec(spec: str | Path, n_states: int) -> FeatureMap:
    """Build features from a generator string or a JSON file path.

    Generator strings: ``identity``, ``random_unit_rows(K, seed)``,
    ``fourier(K)``. Anything else is treated as a path to a JSON file
    holding an n x K nested array.
    """
    text = str(spec)
    m = _GEN_RE.match(text.strip())
    if m and m.group("name") in ("identity", "random_unit_rows", "fourier"):
        name = m.group("name")
        args = [a.strip() for a in (m.group("args") or "").split(",") if a.strip()]
        if name == "identity":
            return identity_features(n_states)
        if name == "fourier":
            if len(args) != 1:
                raise ValueError("fourier takes one argument: fourier(K)")
            return fourier_features(n_states, int(args[0]))
        if len(args) not in (1, 2):
            raise ValueError("random_unit_rows takes (K) or (K, seed)")
        K = int(args[0])
        seed = int(args[1]) if len(args) == 2 else 0
        return random_unit_row_features(n_states, K, seed=seed)
    with open(text) as fh:
        Phi = json.load(fh)
    Phi = as_float_array(Phi, "feature file contents", ndim=2)
    if Phi.shape[0] != n_states:
        raise ValueError(f"feature file has {Phi.shape[0]} rows, instance has {n_states} states")
    return make_feature_map(Phi)
