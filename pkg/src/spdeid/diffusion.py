"""Diffusion-term identification from squared drift residuals.

The diffusion system consists of one symmetric cross-feature matrix per
time step together with a scalar response estimating the expected
squared drift residual.  Coefficients solve a regression problem with
quadratic measurements ``c^T G_i c ~ zeta_i``; sparse candidates come
from a greedy expand/shrink pursuit whose inner solver is nonlinear
conjugate gradient with the Hager-Zhang direction update.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .data import TrajectoryEnsemble
from .features import FeatureDictionary, feature_fields
from .sparse import SparseCoeffs

DEFAULT_TRIM_THRESHOLD = 0.3
DEFAULT_MAX_SPARSITY = 6
CG_GRAD_TOL = 1e-14
CG_MAX_ITER = 1000
CG_INIT_VALUE = 10.0
QSP_MAX_ITER = 100

# approximate-Wolfe acceptance constants for the line search
_WOLFE_DELTA = 0.1
_WOLFE_SIGMA = 0.9
_HZ_ETA = 0.01


@dataclass
class DiffusionSystem:
    """Per-timestep quadratic measurement system.

    ``G`` has shape ``(I, J, J)`` with each slice symmetric; ``zeta``
    the ``I`` nonnegative responses.  ``lam`` records the normalization
    diagonal once :func:`normalize_diffusion` ran; ``active`` maps the
    (possibly reduced) columns back to original dictionary indices.
    """

    G: np.ndarray
    zeta: np.ndarray
    lam: np.ndarray | None = None
    active: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=float)
        self.zeta = np.asarray(self.zeta, dtype=float)
        if self.G.ndim != 3 or self.G.shape[1] != self.G.shape[2]:
            raise ValueError("G must be a stack of square matrices")
        if self.zeta.shape != (self.G.shape[0],):
            raise ValueError("zeta length must match number of matrices")
        if self.active is None:
            self.active = np.arange(self.G.shape[1])

    @property
    def num_features(self) -> int:
        return self.G.shape[1]


def assemble_diffusion_system(ens: TrajectoryEnsemble, dictionary: FeatureDictionary,
                              drift_coeffs: SparseCoeffs,
                              drift_dictionary: FeatureDictionary | None = None,
                              component: int = 0) -> DiffusionSystem:
    """Build the quadratic measurement system from drift residuals.

    ``G_i[j, s]`` is the time-step-scaled path average of the space
    average of feature product ``G_j * G_s`` at the step's left
    endpoint; ``zeta_i`` the path average of the space-averaged squared
    drift residual.  Space averages are plain grid means (exact
    composite trapezoid on a periodic uniform grid).
    """
    if drift_dictionary is None:
        drift_dictionary = dictionary
    grid = ens.grid
    n_steps = grid.num_times - 1
    m = grid.num_space_total
    n_paths = ens.num_paths
    j_count = len(dictionary)
    comps = [ens.component(c) for c in range(ens.num_components)]
    target = ens.component(component)

    drift_support = np.array(drift_coeffs.support, dtype=int)
    drift_values = np.array([drift_coeffs[k] for k in drift_support])
    drift_specs = [drift_dictionary.specs[k] for k in drift_support]
    from .features import FeatureDictionary as _FD
    restricted = _FD(tuple(drift_specs), drift_dictionary.p, drift_dictionary.q,
                     drift_dictionary.space_dims, drift_dictionary.components)

    G = np.empty((n_steps, j_count, j_count))
    zeta = np.empty(n_steps)
    for i in range(n_steps):
        slices = [c[:, i] for c in comps]
        feats = feature_fields(dictionary, slices, grid.dx).reshape(j_count, n_paths, m)
        G[i] = grid.dt * np.einsum("jnm,snm->js", feats, feats) / (n_paths * m)
        residual = (target[:, i + 1] - target[:, i]).reshape(n_paths, m).copy()
        if len(drift_support):
            dfeats = feature_fields(restricted, slices, grid.dx).reshape(
                len(drift_support), n_paths, m)
            residual -= grid.dt * np.einsum("k,knm->nm", drift_values, dfeats)
        zeta[i] = np.mean(residual**2)
        G[i] = 0.5 * (G[i] + G[i].T)
    return DiffusionSystem(G, zeta)


def normalize_diffusion(system: DiffusionSystem) -> DiffusionSystem:
    """Symmetric diagonal rescaling so mean diagonals become one.

    ``lam[j] = sqrt(mean_i G_i[j, j])``; features whose averaged
    diagonal is not positive are dropped with a warning.  Coefficients
    found on the normalized system map back through
    ``b -> b / lam`` (see :func:`generate_diffusion_candidates`).
    """
    avg_diag = np.einsum("ijj->j", system.G) / system.G.shape[0]
    keep = avg_diag > 0
    if not keep.any():
        raise ValueError("non-positive averaged diagonal for every feature")
    if not keep.all():
        dropped = system.active[~keep].tolist()
        warnings.warn(f"dropping diffusion features with non-positive averaged "
                      f"diagonal: {dropped}", RuntimeWarning)
    lam = np.sqrt(avg_diag[keep])
    G = system.G[np.ix_(np.arange(system.G.shape[0]), np.where(keep)[0],
                        np.where(keep)[0])] / np.outer(lam, lam)
    prior = system.lam[keep] if system.lam is not None else np.ones(keep.sum())
    return DiffusionSystem(G, system.zeta.copy(), lam=prior * lam,
                           active=system.active[keep])


def quad_loss_grad(G: np.ndarray, zeta: np.ndarray, c: np.ndarray):
    """Loss ``sum_i (c^T G_i c - zeta_i)^2`` and its gradient."""
    c = np.asarray(c, dtype=float)
    Gc = np.einsum("ijk,k->ij", G, c)
    q = Gc @ c - zeta
    loss = float(q @ q)
    grad = 4.0 * (q[:, None] * Gc).sum(axis=0)
    return loss, grad


def _quartic_line_minimum(e: np.ndarray, b: np.ndarray, a: np.ndarray):
    """Global minimizer over alpha > 0 of sum((e + b*alpha + a*alpha^2)^2).

    Returns (alpha, phi(alpha)) or (None, None) when no positive step
    decreases the objective.
    """
    # phi'(alpha) = 4 A3 a^3 + 3 A2 a^2 + 2 A1 a + A0-ish; use exact coeffs
    c3 = 4.0 * float(a @ a)
    c2 = 6.0 * float(a @ b)
    c1 = 2.0 * float(2.0 * (a @ e) + b @ b)
    c0 = 2.0 * float(b @ e)
    coeffs = np.array([c3, c2, c1, c0])
    nz = np.nonzero(np.abs(coeffs) > 0)[0]
    if len(nz) == 0 or nz[0] == 3:
        return None, None
    roots = np.roots(coeffs[nz[0]:])
    phi0 = float(e @ e)
    best_alpha, best_phi = None, phi0
    for r in roots:
        if abs(r.imag) > 1e-10 * max(1.0, abs(r.real)):
            continue
        alpha = float(r.real)
        if alpha <= 0:
            continue
        val = float(np.sum((e + b * alpha + a * alpha**2) ** 2))
        if val < best_phi:
            best_alpha, best_phi = alpha, val
    if best_alpha is None:
        return None, None
    return best_alpha, best_phi


def _cg_minimize(G: np.ndarray, zeta: np.ndarray, c0: np.ndarray,
                 grad_tol: float, max_iter: int, diagnostics: list | None):
    """Hager-Zhang nonlinear CG on the quadratic-measurement loss.

    The line search minimizes the quartic restriction exactly (closed
    form via the cubic stationarity equation) and verifies the
    approximate-Wolfe conditions; on failure the step falls back to
    steepest descent.
    """
    c = c0.astype(float).copy()
    loss, g = quad_loss_grad(G, zeta, c)
    d = -g
    for it in range(max_iter):
        gnorm = float(np.linalg.norm(g))
        if gnorm < grad_tol:
            break
        fallback = False
        if float(g @ d) >= 0.0:
            d = -g
            fallback = True

        def try_direction(direction):
            """Exact ray minimization plus approximate-Wolfe verification."""
            Gc = np.einsum("ijk,k->ij", G, c)
            Gd = np.einsum("ijk,k->ij", G, direction)
            e = Gc @ c - zeta
            b = 2.0 * (Gc @ direction)
            a = Gd @ direction
            alpha, val = _quartic_line_minimum(e, b, a)
            if alpha is None:
                return None, None
            phi_p0 = 2.0 * float(b @ e)
            resid = e + b * alpha + a * alpha**2
            phi_pa = 2.0 * float(resid @ (b + 2.0 * a * alpha))
            scale = max(1.0, abs(phi_p0))
            wolfe = (_WOLFE_SIGMA * phi_p0 - 1e-10 * scale <= phi_pa
                     <= (2.0 * _WOLFE_DELTA - 1.0) * phi_p0 + 1e-10 * scale)
            decreased = val <= loss + 1e-12 * (1.0 + abs(loss))
            if phi_p0 >= 0 or not wolfe or not decreased:
                return None, None
            return alpha, val

        alpha, new_loss = try_direction(d)
        if alpha is None and not fallback:
            d = -g
            fallback = True
            alpha, new_loss = try_direction(d)
        if alpha is None:
            break
        c = c + alpha * d
        loss_new, g_new = quad_loss_grad(G, zeta, c)
        y = g_new - g
        dy = float(d @ y)
        if dy != 0.0 and np.isfinite(dy):
            beta_hz = float((y - 2.0 * d * (y @ y) / dy) @ g_new) / dy
            eta_k = -1.0 / (float(np.linalg.norm(d)) * min(_HZ_ETA, gnorm))
            beta = max(beta_hz, eta_k)
        else:
            beta = 0.0
        if diagnostics is not None:
            diagnostics.append({"iteration": it, "loss": loss_new,
                                "grad_norm": float(np.linalg.norm(g_new)),
                                "alpha": alpha, "beta": beta,
                                "fallback": fallback})
        d = -g_new + beta * d
        g, loss = g_new, loss_new
    return c, loss


def nonlinear_cg_fit(G: np.ndarray, zeta: np.ndarray, support,
                     c0: np.ndarray | None = None,
                     grad_tol: float = CG_GRAD_TOL,
                     max_iter: int = CG_MAX_ITER,
                     diagnostics: list | None = None) -> np.ndarray:
    """Minimize the quadratic-measurement loss restricted to ``support``.

    Off-support entries of the returned full-length vector are exactly
    zero.  The default start sets every supported entry to 10.
    """
    support = np.asarray(sorted(support), dtype=int)
    if len(support) == 0:
        raise ValueError("support must be nonempty")
    j_total = G.shape[1]
    Gr = G[np.ix_(np.arange(G.shape[0]), support, support)]
    zr = np.asarray(zeta, dtype=float)
    if c0 is None:
        start = np.full(len(support), CG_INIT_VALUE)
    else:
        start = np.asarray(c0, dtype=float)[support]
        start = np.where(start == 0.0, CG_INIT_VALUE, start)
    sol, _ = _cg_minimize(Gr, zr, start, grad_tol, max_iter, diagnostics)
    out = np.zeros(j_total)
    out[support] = sol
    return out


def _support_top(values: np.ndarray, j: int) -> np.ndarray:
    order = np.lexsort((np.arange(len(values)), -np.abs(values)))
    return np.sort(order[:j])


def qsp(G: np.ndarray, zeta: np.ndarray, j: int,
        max_iter: int = QSP_MAX_ITER,
        diagnostics: list | None = None) -> SparseCoeffs:
    """Greedy j-sparse solve of the quadratic-measurement regression.

    Each round scores every unselected feature by a scalar least-squares
    fit of its diagonal sequence against the current residuals, merges
    the ``j`` best into the working set, solves the restricted
    regression, keeps the ``j`` largest coefficients, refits, and
    updates the residuals.  The loop returns the previous iterate as
    soon as the residual sum of squares increases.  Call on a
    normalized system (see :func:`normalize_diffusion`).
    """
    G = np.asarray(G, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    n_times, j_total, _ = G.shape
    if not 1 <= j <= j_total:
        raise ValueError(f"sparsity j={j} outside 1..{j_total}")
    diag = np.einsum("ijj->ij", G)

    eta = zeta.copy()
    support = np.array([], dtype=int)
    best: tuple[np.ndarray, np.ndarray] | None = None  # (support, coeffs)
    best_err = float(eta @ eta)

    for it in range(max_iter):
        scores = np.full(j_total, np.inf)
        for s in range(j_total):
            if s in support:
                continue
            col = diag[:, s]
            denom = float(col @ col)
            cstar = float(col @ eta) / denom if denom > 0 else 0.0
            scores[s] = float(np.sum((col * cstar - eta) ** 2))
        order = np.lexsort((np.arange(j_total), scores))
        candidates = np.union1d(support, order[:j]).astype(int)

        warm = None
        if best is not None:
            warm = np.zeros(j_total)
            warm[best[0]] = best[1][best[0]]
        cbar = nonlinear_cg_fit(G, zeta, candidates, c0=warm,
                                diagnostics=diagnostics)
        new_support = candidates[_support_top(cbar[candidates], j)]
        chat = nonlinear_cg_fit(G, zeta, new_support, c0=cbar,
                                diagnostics=diagnostics)
        eta_new = np.einsum("ijk,k->ij", G, chat) @ chat - zeta
        err_new = float(eta_new @ eta_new)
        if diagnostics is not None:
            diagnostics.append({"qsp_iteration": it, "support": new_support.tolist(),
                                "residual_sq": err_new})
        if best is not None and err_new > best_err:
            break
        best = (new_support, chat)
        best_err = err_new
        eta = eta_new
    assert best is not None
    support, chat = best
    return SparseCoeffs(j_total, {int(k): float(chat[k]) for k in support})


def trim_diffusion(G: np.ndarray, zeta: np.ndarray, coeffs: SparseCoeffs,
                   tau: float = DEFAULT_TRIM_THRESHOLD,
                   diagnostics: list | None = None) -> SparseCoeffs:
    """Drop diffusion features with small relative magnitude and refit.

    The score is ``|b_j| / max |b_l|`` over the support; entries below
    ``tau`` are zeroed and the survivors re-estimated by the nonlinear
    solver.  The largest entry always survives.
    """
    if not 0 <= tau < 1:
        raise ValueError("tau must lie in [0, 1)")
    support = np.array(coeffs.support, dtype=int)
    if len(support) == 0:
        return coeffs
    values = np.array([coeffs[k] for k in support])
    while True:
        rel = np.abs(values) / np.abs(values).max()
        keep = rel >= tau
        if keep.all():
            break
        support = support[keep]
        warm = np.zeros(coeffs.length)
        warm[support] = values[keep]
        refit = nonlinear_cg_fit(G, zeta, support, c0=warm,
                                 diagnostics=diagnostics)
        values = refit[support]
    return SparseCoeffs(coeffs.length,
                        {int(k): float(v) for k, v in zip(support, values)})


def generate_diffusion_candidates(system: DiffusionSystem,
                                  j_max: int | None = None,
                                  tau: float = DEFAULT_TRIM_THRESHOLD,
                                  diagnostics: list | None = None) -> list[SparseCoeffs]:
    """Candidate diffusion models for sparsity 1..j_max on original scale.

    Normalizes the system, runs the pursuit and trimming per sparsity
    level, maps coefficients back through the normalization diagonal,
    fixes the sign ambiguity by making the first active entry
    nonnegative, and deduplicates by support.
    """
    normalized = normalize_diffusion(system)
    j_avail = normalized.num_features
    if j_max is None:
        j_max = min(j_avail, DEFAULT_MAX_SPARSITY)
    if not 1 <= j_max <= j_avail:
        raise ValueError(f"j_max outside 1..{j_avail}")
    length = int(system.active.max()) + 1 if len(system.active) else 0
    length = max(length, system.num_features)
    seen: dict[tuple[int, ...], SparseCoeffs] = {}
    for j in range(1, j_max + 1):
        cand = qsp(normalized.G, normalized.zeta, j, diagnostics=diagnostics)
        cand = trim_diffusion(normalized.G, normalized.zeta, cand, tau,
                              diagnostics=diagnostics)
        entries = {int(normalized.active[k]): v / normalized.lam[k]
                   for k, v in cand.entries.items()}
        full = SparseCoeffs(length, entries).canonical_sign()
        seen.setdefault(full.support, full)
    return list(seen.values())
