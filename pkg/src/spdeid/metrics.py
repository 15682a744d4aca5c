"""Support-recovery and coefficient-error metrics against ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import SparseCoeffs


@dataclass(frozen=True)
class SupportMetrics:
    precision: float
    accuracy: float
    recall: float
    f1: float

    def __post_init__(self):
        for v in (self.precision, self.accuracy, self.recall, self.f1):
            if not 0.0 <= v <= 1.0:
                raise ValueError("metrics must lie in [0, 1]")


def support_metrics(est: SparseCoeffs, truth: SparseCoeffs) -> SupportMetrics:
    """Confusion-count metrics over all dictionary indices.

    Conventions for degenerate supports: empty estimated support has
    precision 0 unless the truth is also empty (then 1); empty truth
    has recall 1.
    """
    if est.length != truth.length:
        raise ValueError("dictionary length mismatch")
    e, t = set(est.support), set(truth.support)
    tp = len(e & t)
    fp = len(e - t)
    fn = len(t - e)
    tn = est.length - tp - fp - fn
    precision = tp / (tp + fp) if e else (1.0 if not t else 0.0)
    recall = tp / (tp + fn) if t else 1.0
    accuracy = (tp + tn) / est.length
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return SupportMetrics(precision, accuracy, recall, f1)


def _canonical(vec: np.ndarray) -> np.ndarray:
    nz = np.nonzero(vec)[0]
    if len(nz) and vec[nz[0]] < 0:
        return -vec
    return vec


def coeff_errors(est: SparseCoeffs, truth: SparseCoeffs,
                 sign_invariant: bool = False) -> tuple[float, float]:
    """Relative in/out coefficient errors in percent.

    In-error: norm of the coefficient mismatch on the true support over
    the truth norm.  Out-error: norm of coefficients placed outside the
    true support over the estimate norm (0 for an all-zero estimate).
    ``sign_invariant=True`` compares canonical-sign representatives,
    appropriate for diffusion coefficients where the sign is not
    identifiable.
    """
    if est.length != truth.length:
        raise ValueError("dictionary length mismatch")
    e = est.to_dense()
    t = truth.to_dense()
    if sign_invariant:
        e, t = _canonical(e), _canonical(t)
    t_norm = float(np.linalg.norm(t))
    if t_norm == 0:
        raise ValueError("zero-norm truth")
    on = np.array(truth.support, dtype=int)
    e_in = 100.0 * float(np.linalg.norm(e[on] - t[on])) / t_norm
    e_norm = float(np.linalg.norm(e))
    if e_norm == 0:
        return e_in, 0.0
    off = np.setdiff1d(np.arange(est.length), on)
    e_out = 100.0 * float(np.linalg.norm(e[off])) / e_norm
    return e_in, e_out


@dataclass
class EvalReport:
    """One experiment row: support metrics plus coefficient errors."""

    drift: SupportMetrics
    drift_e_in: float
    drift_e_out: float
    diffusion: SupportMetrics | None = None
    diffusion_e_in: float | None = None
    diffusion_e_out: float | None = None
    noise_verdict: str | None = None
    sigma_hat: float | None = None

    CSV_FIELDS = ("drift_precision", "drift_accuracy", "drift_recall", "drift_f1",
                  "drift_e_in", "drift_e_out",
                  "diff_precision", "diff_accuracy", "diff_recall", "diff_f1",
                  "diff_e_in", "diff_e_out", "noise_verdict", "sigma_hat")

    def csv_row(self) -> list:
        d = self.diffusion
        return [self.drift.precision, self.drift.accuracy, self.drift.recall,
                self.drift.f1, self.drift_e_in, self.drift_e_out,
                d.precision if d else "", d.accuracy if d else "",
                d.recall if d else "", d.f1 if d else "",
                self.diffusion_e_in if self.diffusion_e_in is not None else "",
                self.diffusion_e_out if self.diffusion_e_out is not None else "",
                self.noise_verdict or "", self.sigma_hat if self.sigma_hat is not None else ""]


def evaluate_model(model, drift_truth: SparseCoeffs,
                   diffusion_truth: SparseCoeffs | None = None,
                   sigma_truth: float | None = None) -> EvalReport:
    """Score one identified model against reference coefficients.

    For additive reference models the identified diffusion (or sigma)
    is compared against the constant-feature coefficient vector with the
    sign-invariant convention.
    """
    from .noise import ADDITIVE

    drift_sm = support_metrics(model.drift, drift_truth)
    d_in, d_out = coeff_errors(model.drift, drift_truth)
    report = EvalReport(drift_sm, d_in, d_out, noise_verdict=model.noise_kind,
                        sigma_hat=model.sigma_hat)
    if diffusion_truth is not None:
        if model.noise_kind == ADDITIVE:
            est = SparseCoeffs(diffusion_truth.length, {0: model.sigma_hat})
            # additive estimate lives on the constant feature (index 0)
        else:
            est = model.diffusion
        report.diffusion = support_metrics(est, diffusion_truth)
        report.diffusion_e_in, report.diffusion_e_out = coeff_errors(
            est, diffusion_truth, sign_invariant=True)
    return report
