"""Drift-term identification from sample-mean feature systems.

The drift feature matrix pairs the per-path feature values at the left
time endpoint, averaged over paths and scaled by the time step, with
the increments of the sample-mean field.  Candidate models of every
sparsity level come from Subspace Pursuit followed by trimming of
low-contribution features.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import TrajectoryEnsemble
from .features import FeatureDictionary, feature_fields
from .sparse import SparseCoeffs

DEFAULT_TRIM_THRESHOLD = 0.3
DEFAULT_MAX_SPARSITY = 10


@dataclass
class DriftSystem:
    """Linear regression system ``F c ~ y`` for drift coefficients.

    ``F`` has one row per (time step, space point) holding the
    time-step-scaled sample-mean feature values at the step's left
    endpoint; ``y`` holds the increments of the sample-mean field.
    """

    F: np.ndarray
    y: np.ndarray
    column_norms: np.ndarray

    def __post_init__(self):
        if self.F.shape[0] != self.y.shape[0]:
            raise ValueError("row count mismatch between F and y")
        if not np.isfinite(self.y).all() or not np.isfinite(self.F).all():
            raise ValueError("non-finite entries in drift system")


def assemble_drift_system(ens: TrajectoryEnsemble, dictionary: FeatureDictionary,
                          component: int = 0) -> DriftSystem:
    """Build the sample-mean drift system for one state component.

    Sample means run over paths in fixed path order, so the result is
    deterministic and invariant under path duplication.
    """
    grid = ens.grid
    n_steps = grid.num_times - 1
    m = grid.num_space_total
    k = len(dictionary)
    comps = [ens.component(c) for c in range(ens.num_components)]
    target = ens.component(component)

    F = np.empty((n_steps * m, k))
    y = np.empty(n_steps * m)
    for i in range(n_steps):
        feats = feature_fields(dictionary, [c[:, i] for c in comps], grid.dx)
        mean_feats = feats.reshape(k, ens.num_paths, m).mean(axis=1)
        F[i * m:(i + 1) * m] = grid.dt * mean_feats.T
        inc = (target[:, i + 1] - target[:, i]).reshape(ens.num_paths, m)
        y[i * m:(i + 1) * m] = inc.mean(axis=0)
    return DriftSystem(F, y, np.linalg.norm(F, axis=0))


def _top_k(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest values; ties break toward lower index."""
    order = np.lexsort((np.arange(len(values)), -values))
    return np.sort(order[:k])


def _restricted_lstsq(F: np.ndarray, y: np.ndarray, support: np.ndarray) -> np.ndarray:
    coef, *_ = np.linalg.lstsq(F[:, support], y, rcond=None)
    return coef


def subspace_pursuit(F: np.ndarray, y: np.ndarray, k: int,
                     max_iter: int = 100) -> SparseCoeffs:
    """Greedy expand/shrink search for a k-sparse least-squares model.

    Columns are Euclidean-normalized internally; returned coefficients
    are in the original column scale.  Iterations stop as soon as the
    restricted residual norm stops decreasing, returning the last
    improving iterate.
    """
    F = np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=float)
    n_cols = F.shape[1]
    if not 1 <= k <= n_cols:
        raise ValueError(f"sparsity k={k} outside 1..{n_cols}")
    norms = np.linalg.norm(F, axis=0)
    keep = np.where(norms > 0)[0]
    if len(keep) < n_cols:
        dropped = sorted(set(range(n_cols)) - set(keep.tolist()))
        warnings.warn(f"dropping zero columns {dropped}", RuntimeWarning)
    if k > len(keep):
        raise ValueError("sparsity larger than number of nonzero columns")
    Fb = F[:, keep] / norms[keep]

    support = _top_k(np.abs(Fb.T @ y), k)
    coef = _restricted_lstsq(Fb, y, support)
    residual = y - Fb[:, support] @ coef
    best_norm = np.linalg.norm(residual)

    for _ in range(max_iter):
        merged = np.union1d(support, _top_k(np.abs(Fb.T @ residual), k))
        coef_m = _restricted_lstsq(Fb, y, merged)
        new_support = merged[_top_k(np.abs(coef_m), k)]
        new_coef = _restricted_lstsq(Fb, y, new_support)
        new_residual = y - Fb[:, new_support] @ new_coef
        new_norm = np.linalg.norm(new_residual)
        if new_norm > best_norm:
            break
        support, coef, residual, best_norm = new_support, new_coef, new_residual, new_norm
        if new_norm == 0.0:
            break

    entries = {int(keep[j]): float(coef[i] / norms[keep[j]])
               for i, j in enumerate(support)}
    return SparseCoeffs(n_cols, entries)


def trim_drift(F: np.ndarray, y: np.ndarray, coeffs: SparseCoeffs,
               tau: float = DEFAULT_TRIM_THRESHOLD) -> SparseCoeffs:
    """Drop features whose contribution score falls below ``tau``, refit.

    The score of an active feature is ``|c_k| * ||F_k||`` relative to
    the largest such product; dropping and least-squares refitting
    repeat until stable.  The top-scoring feature always survives, so
    the support never empties.
    """
    if not 0 <= tau < 1:
        raise ValueError("tau must lie in [0, 1)")
    F = np.asarray(F, dtype=float)
    norms = np.linalg.norm(F, axis=0)
    support = np.array(coeffs.support, dtype=int)
    if len(support) == 0:
        # defensive: fall back to the best single feature
        return subspace_pursuit(F, y, 1)
    values = np.array([coeffs[k] for k in support])
    while True:
        scores = np.abs(values) * norms[support]
        rel = scores / scores.max() if scores.max() > 0 else np.ones_like(scores)
        keep = rel >= tau
        if keep.all() or keep.sum() == 0:
            break
        support = support[keep]
        values = _restricted_lstsq(F, y, support)
    return SparseCoeffs(coeffs.length,
                        {int(k): float(v) for k, v in zip(support, values)})


def generate_drift_candidates(system: DriftSystem, k_max: int | None = None,
                              tau: float = DEFAULT_TRIM_THRESHOLD) -> list[SparseCoeffs]:
    """Candidate drift models for sparsity 1..k_max, deduplicated by support."""
    n_cols = system.F.shape[1]
    if k_max is None:
        k_max = min(n_cols, DEFAULT_MAX_SPARSITY)
    if not 1 <= k_max <= n_cols:
        raise ValueError(f"k_max outside 1..{n_cols}")
    seen: dict[tuple[int, ...], SparseCoeffs] = {}
    for k in range(1, k_max + 1):
        cand = subspace_pursuit(system.F, system.y, k)
        cand = trim_drift(system.F, system.y, cand, tau)
        seen.setdefault(cand.support, cand)
    return list(seen.values())
