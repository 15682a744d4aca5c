"""Detection of purely additive noise from space-averaged drift residuals.

When the noise is additive ``sigma dW``, each path's space-averaged
drift residuals are i.i.d. Normal(0, sigma^2 dt).  Per-path normality
p-values (D'Agostino-Pearson omnibus test) are combined with Stouffer's
method into one standard-normal statistic; a clearly typical statistic
yields the additive verdict, everything else routes to the full
multiplicative pipeline.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import ndtri

from .data import TrajectoryEnsemble
from .features import FeatureDictionary, feature_fields
from .sparse import SparseCoeffs

MIN_SAMPLES = 20
#: sentinel p-value for degenerate (zero-variance) samples
DEGENERATE_P = 1e-300
_P_CLAMP = (1e-300, 1.0 - 1e-16)
#: rows whose spread is below this fraction of the raw increment scale
#: carry no usable noise signal and are flagged degenerate
_DEGENERATE_SCALE = 1e-9

ADDITIVE = "additive"
MULTIPLICATIVE = "multiplicative-or-mixed"


@dataclass(frozen=True)
class NoiseDecision:
    """Outcome of the additive-noise test."""

    z_combined: float
    per_path_p: np.ndarray
    verdict: str
    sigma_hat: float | None
    p_star: float
    degenerate: bool = False
    z_critical: float = float("nan")

    def __post_init__(self):
        if self.verdict == ADDITIVE and (self.sigma_hat is None or self.sigma_hat <= 0):
            raise ValueError("additive verdict requires positive sigma_hat")
        if self.verdict == MULTIPLICATIVE and self.sigma_hat is not None:
            raise ValueError("sigma_hat only applies to the additive verdict")


def residual_means(ens: TrajectoryEnsemble, dictionary: FeatureDictionary,
                   drift_coeffs: SparseCoeffs, component: int = 0) -> np.ndarray:
    """Space-averaged drift residuals, one row per path, one column per step."""
    grid = ens.grid
    n_steps = grid.num_times - 1
    n_paths = ens.num_paths
    m = grid.num_space_total
    comps = [ens.component(c) for c in range(ens.num_components)]
    target = ens.component(component)

    support = np.array(drift_coeffs.support, dtype=int)
    values = np.array([drift_coeffs[k] for k in support])
    from .features import FeatureDictionary as _FD
    restricted = _FD(tuple(dictionary.specs[k] for k in support),
                     dictionary.p, dictionary.q, dictionary.space_dims,
                     dictionary.components)

    rho = np.empty((n_paths, n_steps))
    for i in range(n_steps):
        inc = (target[:, i + 1] - target[:, i]).reshape(n_paths, m)
        rho[:, i] = inc.mean(axis=1)
        if len(support):
            feats = feature_fields(restricted, [c[:, i] for c in comps],
                                   grid.dx).reshape(len(support), n_paths, m)
            rho[:, i] -= grid.dt * (values @ feats.mean(axis=2))
    return rho


def dagostino_pearson_p(samples) -> float:
    """Two-sided omnibus normality p-value from skewness and kurtosis.

    The statistic squares the standard z-transforms of sample skewness
    and excess kurtosis (small-sample corrected) and refers their sum to
    chi-square with two degrees of freedom.  Zero-variance input yields
    the degenerate sentinel ``DEGENERATE_P``.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {samples.size}")
    if np.ptp(samples) == 0.0:
        warnings.warn("degenerate (constant) sample in normality test",
                      RuntimeWarning)
        return DEGENERATE_P
    p = float(stats.normaltest(samples).pvalue)
    return float(np.clip(p, *_P_CLAMP))


def decide_from_residuals(rho: np.ndarray, dt: float, p_star: float = 0.05,
                          increment_scale: float | None = None) -> NoiseDecision:
    """Combine per-path normality tests into a noise-type verdict.

    ``increment_scale`` (RMS of raw pointwise increments) guards against
    residual rows that are pure cancellation noise: when the noise field
    space-averages to zero the rows carry no additive signal, which is
    itself evidence against the additive model, so such rows get the
    degenerate sentinel p-value.

    Verdict thresholds against ``z* = Phi^{-1}(1 - p_star/2)``: additive
    when ``|Z| < z*`` (the level-``p_star`` two-sided acceptance
    region); multiplicative when ``|Z| >= 2 z*``; the band between is
    resolved conservatively to the multiplicative pipeline.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2:
        raise ValueError("rho must be (num_paths, num_steps)")
    n_paths, n_steps = rho.shape
    if n_steps < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} residuals per path")
    if not 0 < p_star < 1:
        raise ValueError("p_star must lie in (0, 1)")

    pvals = np.empty(n_paths)
    degenerate = False
    floor = 0.0
    if increment_scale is not None and increment_scale > 0:
        floor = _DEGENERATE_SCALE * increment_scale
    for n in range(n_paths):
        row = rho[n]
        if np.ptp(row) == 0.0 or row.std(ddof=1) <= floor:
            pvals[n] = DEGENERATE_P
            degenerate = True
        else:
            pvals[n] = dagostino_pearson_p(row)
    pvals = np.clip(pvals, *_P_CLAMP)

    z = float(ndtri(pvals).sum() / np.sqrt(n_paths))
    z_crit = float(ndtri(1.0 - p_star / 2.0))
    additive = abs(z) < z_crit and not degenerate
    sigma_hat = float(rho.std(ddof=1) / np.sqrt(dt)) if additive else None
    return NoiseDecision(
        z_combined=z, per_path_p=pvals,
        verdict=ADDITIVE if additive else MULTIPLICATIVE,
        sigma_hat=sigma_hat, p_star=p_star, degenerate=degenerate,
        z_critical=z_crit,
    )


def decide_noise(ens: TrajectoryEnsemble, dictionary: FeatureDictionary,
                 drift_coeffs: SparseCoeffs, p_star: float = 0.05,
                 component: int = 0) -> NoiseDecision:
    """Noise-type verdict for one component given estimated drift coefficients."""
    rho = residual_means(ens, dictionary, drift_coeffs, component)
    target = ens.component(component)
    inc = np.diff(target, axis=1)
    scale = float(np.sqrt(np.mean(inc**2)))
    return decide_from_residuals(rho, ens.grid.dt, p_star, increment_scale=scale)
