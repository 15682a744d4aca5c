"""Candidate scoring by time integration and final model assembly.

Candidates produced per sparsity level are compared through integrated
lack-of-fit scores: the drift score accumulates the candidate's
predicted mean motion against the observed sample-mean field, while the
diffusion score matches the accumulated expected squared residual
against the accumulated expected squared noise response.  Cumulative
time integrals use the left Riemann rule consistent with the forward
integrator; space integrals use the periodic trapezoid rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TrajectoryEnsemble
from .features import FeatureDictionary, feature_fields
from .noise import ADDITIVE, MULTIPLICATIVE, NoiseDecision
from .sparse import SparseCoeffs


def _restricted_dictionary(dictionary: FeatureDictionary, support) -> FeatureDictionary:
    return FeatureDictionary(tuple(dictionary.specs[k] for k in support),
                             dictionary.p, dictionary.q,
                             dictionary.space_dims, dictionary.components)


def score_drift(ens: TrajectoryEnsemble, dictionary: FeatureDictionary,
                coeffs: SparseCoeffs, component: int = 0) -> float:
    """Integrated mean-motion misfit of a drift candidate.

    Averages over the observation times the squared space integral of
    (accumulated predicted mean drift + initial mean - observed mean).
    """
    grid = ens.grid
    n_steps = grid.num_times - 1
    m = grid.num_space_total
    comps = [ens.component(c) for c in range(ens.num_components)]
    mean_field = ens.component(component).reshape(ens.num_paths, grid.num_times, m
                                                  ).mean(axis=0)
    support = np.array(coeffs.support, dtype=int)
    values = np.array([coeffs[k] for k in support])
    restricted = _restricted_dictionary(dictionary, support)
    cell = float(np.prod(grid.dx))

    cum = np.zeros(m)
    total = 0.0
    for i in range(1, n_steps + 1):
        if len(support):
            feats = feature_fields(restricted, [c[:, i - 1] for c in comps],
                                   grid.dx).reshape(len(support), ens.num_paths, m)
            cum = cum + grid.dt * (values @ feats.mean(axis=1))
        term = cum + mean_field[0] - mean_field[i]
        total += cell * float(term @ term)
    return total / n_steps


def score_diffuse(ens: TrajectoryEnsemble, drift_dictionary: FeatureDictionary,
                  drift_coeffs: SparseCoeffs,
                  diffusion_dictionary: FeatureDictionary,
                  diffusion_coeffs: SparseCoeffs, component: int = 0) -> float:
    """Integrated second-moment misfit of a diffusion candidate.

    Compares the sample-mean accumulated squared drift residual with
    the sample-mean accumulated squared noise response of the
    candidate; enters squared, so the score is sign-invariant in the
    diffusion coefficients.
    """
    grid = ens.grid
    n_steps = grid.num_times - 1
    n_paths = ens.num_paths
    m = grid.num_space_total
    comps = [ens.component(c) for c in range(ens.num_components)]
    target = ens.component(component).reshape(n_paths, grid.num_times, m)

    a_support = np.array(drift_coeffs.support, dtype=int)
    a_values = np.array([drift_coeffs[k] for k in a_support])
    a_dict = _restricted_dictionary(drift_dictionary, a_support)
    b_support = np.array(diffusion_coeffs.support, dtype=int)
    b_values = np.array([diffusion_coeffs[k] for k in b_support])
    b_dict = _restricted_dictionary(diffusion_dictionary, b_support)
    cell = float(np.prod(grid.dx))

    cum_drift = np.zeros((n_paths, m))
    cum_noise_sq = np.zeros((n_paths, m))
    total = 0.0
    for i in range(1, n_steps + 1):
        slices = [c[:, i - 1] for c in comps]
        if len(a_support):
            feats = feature_fields(a_dict, slices, grid.dx).reshape(
                len(a_support), n_paths, m)
            cum_drift += grid.dt * np.einsum("k,knm->nm", a_values, feats)
        if len(b_support):
            gfeats = feature_fields(b_dict, slices, grid.dx).reshape(
                len(b_support), n_paths, m)
            noise_field = np.einsum("j,jnm->nm", b_values, gfeats)
            cum_noise_sq += grid.dt * noise_field**2
        big_r = cum_drift + target[:, 0] - target[:, i]
        term = np.mean(big_r**2, axis=0) - cum_noise_sq.mean(axis=0)
        total += cell * float(term @ term)
    return total / n_steps


def score_drift_batch(ens: TrajectoryEnsemble, dictionary: FeatureDictionary,
                      candidates: list[SparseCoeffs],
                      component: int = 0) -> np.ndarray:
    """Vectorized :func:`score_drift` over a candidate list (same math)."""
    grid = ens.grid
    n_steps = grid.num_times - 1
    m = grid.num_space_total
    comps = [ens.component(c) for c in range(ens.num_components)]
    mean_field = ens.component(component).reshape(ens.num_paths, grid.num_times, m
                                                  ).mean(axis=0)
    union = sorted({k for c in candidates for k in c.support})
    pos = {k: i for i, k in enumerate(union)}
    weights = np.zeros((len(candidates), len(union)))
    for r, cand in enumerate(candidates):
        for k in cand.support:
            weights[r, pos[k]] = cand[k]
    restricted = _restricted_dictionary(dictionary, union)
    cell = float(np.prod(grid.dx))

    cums = np.zeros((len(candidates), m))
    totals = np.zeros(len(candidates))
    for i in range(1, n_steps + 1):
        if union:
            feats = feature_fields(restricted, [c[:, i - 1] for c in comps],
                                   grid.dx).reshape(len(union), ens.num_paths, m)
            cums += grid.dt * weights @ feats.mean(axis=1)
        terms = cums + mean_field[0] - mean_field[i]
        totals += cell * np.einsum("cm,cm->c", terms, terms)
    return totals / n_steps


def score_diffuse_batch(ens: TrajectoryEnsemble,
                        drift_dictionary: FeatureDictionary,
                        drift_coeffs: SparseCoeffs,
                        diffusion_dictionary: FeatureDictionary,
                        candidates: list[SparseCoeffs],
                        component: int = 0) -> np.ndarray:
    """Vectorized :func:`score_diffuse` over a candidate list (same math)."""
    grid = ens.grid
    n_steps = grid.num_times - 1
    n_paths = ens.num_paths
    m = grid.num_space_total
    comps = [ens.component(c) for c in range(ens.num_components)]
    target = ens.component(component).reshape(n_paths, grid.num_times, m)

    a_support = np.array(drift_coeffs.support, dtype=int)
    a_values = np.array([drift_coeffs[k] for k in a_support])
    a_dict = _restricted_dictionary(drift_dictionary, a_support)
    union = sorted({k for c in candidates for k in c.support})
    pos = {k: i for i, k in enumerate(union)}
    weights = np.zeros((len(candidates), len(union)))
    for r, cand in enumerate(candidates):
        for k in cand.support:
            weights[r, pos[k]] = cand[k]
    b_dict = _restricted_dictionary(diffusion_dictionary, union)
    cell = float(np.prod(grid.dx))

    cum_drift = np.zeros((n_paths, m))
    cum_noise_sq = np.zeros((len(candidates), n_paths, m))
    totals = np.zeros(len(candidates))
    for i in range(1, n_steps + 1):
        slices = [c[:, i - 1] for c in comps]
        if len(a_support):
            feats = feature_fields(a_dict, slices, grid.dx).reshape(
                len(a_support), n_paths, m)
            cum_drift += grid.dt * np.einsum("k,knm->nm", a_values, feats)
        if union:
            gfeats = feature_fields(b_dict, slices, grid.dx).reshape(
                len(union), n_paths, m)
            noise = np.einsum("cj,jnm->cnm", weights, gfeats)
            cum_noise_sq += grid.dt * noise**2
        big_r = cum_drift + target[:, 0] - target[:, i]
        terms = np.mean(big_r**2, axis=0)[None, :] - cum_noise_sq.mean(axis=1)
        totals += cell * np.einsum("cm,cm->c", terms, terms)
    return totals / n_steps


@dataclass
class IdentifiedModel:
    """Final identified equation for one state component."""

    drift: SparseCoeffs
    drift_names: list[str]
    noise_kind: str
    s_drift: float
    diffusion: SparseCoeffs | None = None
    diffusion_names: list[str] | None = None
    s_diffuse: float | None = None
    sigma_hat: float | None = None
    component: int = 0

    def __post_init__(self):
        if self.noise_kind == ADDITIVE:
            if self.diffusion is not None or self.sigma_hat is None:
                raise ValueError("additive model carries sigma_hat only")
        elif self.noise_kind == MULTIPLICATIVE:
            if self.diffusion is None or self.sigma_hat is not None:
                raise ValueError("multiplicative model carries diffusion coefficients")
        else:
            raise ValueError(f"unknown noise kind {self.noise_kind!r}")

    def equation(self, lhs: str = "du") -> str:
        drift_terms = " + ".join(
            f"{self.drift[k]:.4g} {name}" if name != "1" else f"{self.drift[k]:.4g}"
            for k, name in zip(self.drift.support, self.drift_names)
        ) or "0"
        if self.noise_kind == ADDITIVE:
            noise = f"{self.sigma_hat:.4g}"
        else:
            noise = " + ".join(
                f"{self.diffusion[k]:.4g} {name}" if name != "1"
                else f"{self.diffusion[k]:.4g}"
                for k, name in zip(self.diffusion.support, self.diffusion_names)
            ) or "0"
            if self.diffusion.sparsity > 1:
                noise = f"({noise})"
        return f"{lhs} = ({drift_terms}) dt + {noise} dW(t)"

    def to_dict(self) -> dict:
        out = {
            "component": self.component,
            "drift": {
                "support": list(self.drift.support),
                "names": self.drift_names,
                "coefficients": [self.drift[k] for k in self.drift.support],
                "score": self.s_drift,
            },
            "noise_kind": self.noise_kind,
            "equation": self.equation(lhs="du" if self.component == 0 else "dv"),
        }
        if self.noise_kind == ADDITIVE:
            out["sigma_hat"] = self.sigma_hat
        else:
            out["diffusion"] = {
                "support": list(self.diffusion.support),
                "names": self.diffusion_names,
                "coefficients": [self.diffusion[k] for k in self.diffusion.support],
                "score": self.s_diffuse,
            }
        return out


#: candidates scoring within this relative band of the minimum count as
#: tied; a sampled score cannot separate models closer than its own
#: noise, so ties resolve toward parsimony
SCORE_TIE_BAND = 0.1


def _argmin_candidate(scored: list[tuple[float, SparseCoeffs]],
                      tie_band: float = SCORE_TIE_BAND) -> int:
    """Index of the best (score, candidate).

    All candidates within ``tie_band`` relative of the minimal score are
    treated as tied; ties prefer smaller support, then earlier position.
    """
    floor = min(s for s, _ in scored)
    cutoff = floor * (1.0 + tie_band) if floor > 0 else floor
    best = None
    for i, (s, cand) in enumerate(scored):
        if s > cutoff:
            continue
        if best is None or cand.sparsity < scored[best][1].sparsity:
            best = i
    assert best is not None
    return best


def select_model(ens: TrajectoryEnsemble, drift_dictionary: FeatureDictionary,
                 diffusion_dictionary: FeatureDictionary | None,
                 drift_candidates: list[SparseCoeffs],
                 diffusion_candidates_for,
                 noise: NoiseDecision, component: int = 0) -> IdentifiedModel:
    """Pick the drift and (if needed) diffusion candidates with minimal scores.

    ``diffusion_candidates_for`` maps an estimated drift coefficient
    vector to its list of diffusion candidates (callable or a plain
    list); it is only consulted for the multiplicative verdict.
    """
    if not drift_candidates:
        raise ValueError("empty drift candidate list")
    drift_scores = score_drift_batch(ens, drift_dictionary, drift_candidates,
                                     component)
    drift_scored = list(zip(drift_scores.tolist(), drift_candidates))
    i_best = _argmin_candidate(drift_scored)
    s_drift, a_hat = drift_scored[i_best]
    drift_names = [drift_dictionary.names[k] for k in a_hat.support]

    if noise.verdict == ADDITIVE:
        return IdentifiedModel(a_hat, drift_names, ADDITIVE, s_drift,
                               sigma_hat=noise.sigma_hat, component=component)

    cands = (diffusion_candidates_for(a_hat) if callable(diffusion_candidates_for)
             else diffusion_candidates_for)
    if not cands:
        raise ValueError("empty diffusion candidate list")
    diff_scores = score_diffuse_batch(ens, drift_dictionary, a_hat,
                                      diffusion_dictionary, cands, component)
    diff_scored = list(zip(diff_scores.tolist(), cands))
    j_best = _argmin_candidate(diff_scored)
    s_diff, b_hat = diff_scored[j_best]
    b_hat = b_hat.canonical_sign()
    diff_names = [diffusion_dictionary.names[k] for k in b_hat.support]
    return IdentifiedModel(a_hat, drift_names, MULTIPLICATIVE, s_drift,
                           diffusion=b_hat, diffusion_names=diff_names,
                           s_diffuse=s_diff, component=component)
