"""Closed-form Fourier-domain identification of 1-D linear constant-coefficient
stochastic PDEs.

For ``du = sum_a a_k d^k u dt + (noise)`` on a 2*pi-periodic domain, each
Fourier mode evolves independently, so two time snapshots determine the
coefficients by polynomial regression on the per-mode log-magnitude and
phase of coefficient ratios.  Second-moment information likewise
determines the diffusion operator as a quadratic form, unique up to the
sign-type equivalence class.  This module is the independent
cross-check used against the regression pipeline, and is exposed for
linear problems.

Conventions: transform ``f_hat(xi) = (2*pi)^{-1/2} int e^{-i xi x} f dx``;
the per-mode evolution exponent is ``mu(xi) = sum_k a_k (i xi)^k``
(independent of the transform's constant scaling).  Ito-simulated data
identifies the Ito drift through mean-mode ratios ("additive" path, valid
for either noise structure) and the Stratonovich-equivalent drift through
per-path ratios ("multiplicative" path); :func:`stratonovich_to_ito`
converts given the diffusion operator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import TrajectoryEnsemble

TWO_PI = 2.0 * np.pi
#: refuse phases this close to the branch cut instead of unwrapping
PHASE_WRAP_LIMIT = 3.0


class RankDeficiencyError(ValueError):
    """Initial data lacks Fourier modes for the requested order."""


class PhaseWrapError(ValueError):
    """Snapshot gap too large: mode phase approaches the branch cut."""


@dataclass
class ModeTable:
    """Fourier coefficients of selected integer modes at one or more times.

    ``mean_coeffs[r, q]`` is the transform of the sample-mean field at
    time row ``r``; ``path_coeffs[r, n, q]`` the per-path transforms.
    """

    modes: np.ndarray
    times: np.ndarray
    time_indices: np.ndarray
    mean_coeffs: np.ndarray
    path_coeffs: np.ndarray

    def row_for(self, t) -> int:
        if isinstance(t, (int, np.integer)):
            hits = np.where(self.time_indices == int(t))[0]
        else:
            hits = np.where(np.isclose(self.times, float(t)))[0]
        if len(hits) != 1:
            raise KeyError(f"time {t!r} not in table (times {self.times})")
        return int(hits[0])


def _check_circle_grid(ens: TrajectoryEnsemble):
    grid = ens.grid
    if grid.space_dims != 1:
        raise ValueError("spectral identification supports 1-D grids only")
    period = grid.dx[0] * grid.num_space[0]
    if not np.isclose(period, TWO_PI, rtol=1e-10):
        raise ValueError("domain period must be 2*pi for integer Fourier modes")


def fourier_modes(ens: TrajectoryEnsemble, time_index: int, max_mode: int,
                  component: int = 0) -> ModeTable:
    """Discrete Fourier coefficients at one observation time.

    Returns modes ``-max_mode..max_mode`` of both the sample-mean field
    and every path, scaled to the ``(2*pi)^{-1/2}`` transform
    convention.
    """
    _check_circle_grid(ens)
    grid = ens.grid
    m = grid.num_space[0]
    if not 1 <= max_mode <= m // 2 - 1:
        raise ValueError(f"max_mode outside 1..{m // 2 - 1}")
    fields = ens.component(component)[:, time_index]
    fft = np.fft.fft(fields, axis=-1)
    modes = np.arange(-max_mode, max_mode + 1)
    x0 = grid.x0[0]
    scale = np.sqrt(TWO_PI) / m * np.exp(-1j * modes * x0)
    path_coeffs = fft[:, modes % m] * scale
    mean_coeffs = path_coeffs.mean(axis=0)
    t = grid.t0 + grid.dt * time_index
    return ModeTable(modes=modes, times=np.array([t]),
                     time_indices=np.array([time_index]),
                     mean_coeffs=mean_coeffs[None, :],
                     path_coeffs=path_coeffs[None, :, :])


def mode_pair(ens: TrajectoryEnsemble, i1: int, i2: int, max_mode: int,
              component: int = 0) -> ModeTable:
    """Two-snapshot mode table for the identification routines."""
    a = fourier_modes(ens, i1, max_mode, component)
    b = fourier_modes(ens, i2, max_mode, component)
    return ModeTable(
        modes=a.modes,
        times=np.concatenate([a.times, b.times]),
        time_indices=np.concatenate([a.time_indices, b.time_indices]),
        mean_coeffs=np.vstack([a.mean_coeffs, b.mean_coeffs]),
        path_coeffs=np.vstack([a.path_coeffs, b.path_coeffs]),
    )


def _select_modes(table: ModeTable, r1: int, floor_rel: float,
                  per_path: bool) -> np.ndarray:
    mags = np.abs(table.mean_coeffs[r1])
    floor = floor_rel * mags.max()
    keep = mags > floor
    if per_path:
        keep &= np.abs(table.path_coeffs[r1]).min(axis=0) > 0
    if not keep.any():
        raise RankDeficiencyError("initial data lacks Fourier modes")
    return keep


def _solve_parity(xi: np.ndarray, y: np.ndarray, orders: list[int],
                  what: str) -> np.ndarray:
    design = np.column_stack([xi.astype(float) ** a for a in orders])
    if np.linalg.matrix_rank(design) < len(orders):
        raise RankDeficiencyError(
            f"initial data lacks Fourier modes for {what} orders {orders}")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef


@dataclass
class LinearDriftFit:
    """Recovered constant drift coefficients by derivative order 0..p1."""

    orders: np.ndarray
    coefficients: np.ndarray
    modes_used: np.ndarray

    def coeff(self, order: int) -> float:
        return float(self.coefficients[order])


def _guard_phase(arg: np.ndarray):
    if np.any(np.abs(arg) > PHASE_WRAP_LIMIT):
        raise PhaseWrapError("phase wrap detected: reduce the snapshot gap")


def identify_drift_linear(table: ModeTable, t1, t2, p1: int,
                          noise: str = "additive",
                          floor_rel: float = 1e-8) -> LinearDriftFit:
    """Recover drift coefficients from two snapshots of the mode table.

    ``noise="additive"`` regresses on ratios of sample-mean modes; on
    Ito data this yields the Ito drift for any noise structure.
    ``noise="multiplicative"`` regresses on per-path sample means of
    log-magnitude and phase ratios, which on Ito data yields the
    Stratonovich-equivalent drift (convert with
    :func:`stratonovich_to_ito`).
    """
    if noise not in ("additive", "multiplicative"):
        raise ValueError("noise must be 'additive' or 'multiplicative'")
    r1, r2 = table.row_for(t1), table.row_for(t2)
    dt_gap = float(table.times[r2] - table.times[r1])
    if dt_gap <= 0:
        raise ValueError("t2 must be later than t1")
    keep = _select_modes(table, r1, floor_rel, per_path=noise == "multiplicative")
    xi = table.modes[keep]

    if noise == "additive":
        ratio = table.mean_coeffs[r2, keep] / table.mean_coeffs[r1, keep]
        arg = np.angle(ratio)
        _guard_phase(arg)
        y_even = np.log(np.abs(ratio)) / dt_gap
        y_odd = arg / dt_gap
    else:
        ratio = table.path_coeffs[r2][:, keep] / table.path_coeffs[r1][:, keep]
        arg = np.angle(ratio)
        _guard_phase(arg)
        y_even = np.log(np.abs(ratio)).mean(axis=0) / dt_gap
        y_odd = arg.mean(axis=0) / dt_gap

    even_orders = list(range(0, p1 + 1, 2))
    odd_orders = list(range(1, p1 + 1, 2))
    coeffs = np.zeros(p1 + 1)
    gamma_e = _solve_parity(xi, y_even, even_orders, "even")
    for a, g in zip(even_orders, gamma_e):
        coeffs[a] = (-1.0) ** (a // 2) * g
    if odd_orders:
        gamma_o = _solve_parity(xi, y_odd, odd_orders, "odd")
        for a, g in zip(odd_orders, gamma_o):
            coeffs[a] = (-1.0) ** ((a - 1) // 2) * g
    return LinearDriftFit(np.arange(p1 + 1), coeffs, xi)


@dataclass
class QuadformFit:
    """Quadratic-form coefficients of the diffusion operator.

    ``c[gamma]`` aggregates products ``b_beta * b_betahat`` over
    ``beta + betahat = gamma`` with the parity-dependent sign factors,
    so the quadratic form - not a signed coefficient vector - is what
    the data determines.  ``classes`` lists canonical representatives
    of the solution equivalence classes (each stands for ``{v, -v}``),
    available for p2 <= 2.
    """

    gammas: np.ndarray
    c: np.ndarray
    classes: list[np.ndarray]
    modes_used: np.ndarray


def _mu_of_modes(xi: np.ndarray, a_known: np.ndarray) -> np.ndarray:
    out = np.zeros(len(xi), dtype=complex)
    for order, a in enumerate(a_known):
        out += a * (1j * xi.astype(float)) ** order
    return out


def _factor_quadform(c_by_gamma: dict[int, float], p2: int, noise: str,
                     tol: float = 1e-8) -> list[np.ndarray]:
    """Enumerate coefficient vectors reproducing the quadratic form (p2 <= 2)."""
    if p2 > 2:
        return []
    scale = max(abs(v) for v in c_by_gamma.values()) or 1.0

    def conv_target(gamma: int) -> float:
        # invert the parity sign factors to plain convolution values
        val = c_by_gamma.get(gamma, 0.0)
        if noise == "multiplicative":
            sign = (-1.0) ** (gamma // 2) if gamma % 2 == 0 else (-1.0) ** ((gamma - 1) // 2)
            return sign * val
        return val

    def sqrt_choices(v: float) -> list[float]:
        if v < -tol * scale:
            warnings.warn("inconsistent data: negative squared coefficient",
                          RuntimeWarning)
            return []
        root = np.sqrt(max(v, 0.0))
        return [root, -root] if root > 0 else [0.0]

    candidates: list[np.ndarray] = []
    if noise == "multiplicative":
        # plain self-convolution: C0=b0^2, C1=2b0b1, C2=2b0b2+b1^2,
        # C3=2b1b2, C4=b2^2
        c0, c1 = conv_target(0), conv_target(1)
        c2, c3, c4 = conv_target(2), conv_target(3), conv_target(4)
        for b0 in sqrt_choices(c0):
            for b2 in (sqrt_choices(c4) if p2 == 2 else [0.0]):
                b1sq = c2 - 2.0 * b0 * b2
                for b1 in sqrt_choices(b1sq):
                    vec = np.array([b0, b1, b2][: p2 + 1])
                    ok = abs(2 * b0 * b1 - c1) <= tol * scale
                    ok = ok and (p2 < 2 or abs(2 * b1 * b2 - c3) <= tol * scale)
                    if ok:
                        candidates.append(vec)
    else:
        # |nu|^2 structure: c0=b0^2, c2=b1^2-2b0b2, c4=b2^2 (odd info absent)
        c0, c2, c4 = conv_target(0), conv_target(2), conv_target(4)
        for b0 in sqrt_choices(c0):
            for b2 in (sqrt_choices(c4) if p2 == 2 else [0.0]):
                b1sq = c2 + 2.0 * b0 * b2 if p2 == 2 else c2
                if p2 < 1:
                    b1sq = 0.0
                for b1 in sqrt_choices(b1sq) if p2 >= 1 else [0.0]:
                    candidates.append(np.array([b0, b1, b2][: p2 + 1]))

    canonical: dict[tuple, np.ndarray] = {}
    for vec in candidates:
        rep = vec.copy()
        nz = np.nonzero(np.abs(rep) > tol * np.sqrt(scale))[0]
        if len(nz) and rep[nz[0]] < 0:
            rep = -rep
        canonical.setdefault(tuple(np.round(rep, 12)), rep)
    return list(canonical.values())


def identify_diffusion_quadform(table: ModeTable, t1, t2, a_known, p2: int,
                                noise: str = "multiplicative",
                                r_hat: np.ndarray | None = None,
                                floor_rel: float = 1e-8) -> QuadformFit:
    """Recover the diffusion quadratic form given known drift coefficients.

    Multiplicative path: the log sample-mean mode ratio equals the
    Stratonovich drift exponent plus half the squared diffusion symbol,
    so subtracting the known (Stratonovich) drift leaves a polynomial
    regression for the aggregated products.  Additive path: the
    second moment of the stochastic part of the mode increment, divided
    by the noise-profile energy ``|r_hat|^2`` and the accumulated decay
    factor, equals the squared magnitude of the diffusion symbol;
    ``a_known`` must then be the (Ito = Stratonovich) drift and
    ``r_hat`` the transform of the noise profile on ``table.modes``.
    """
    if noise not in ("additive", "multiplicative"):
        raise ValueError("noise must be 'additive' or 'multiplicative'")
    a_known = np.asarray(a_known, dtype=float)
    r1, r2 = table.row_for(t1), table.row_for(t2)
    dt_gap = float(table.times[r2] - table.times[r1])
    if dt_gap <= 0:
        raise ValueError("t2 must be later than t1")
    keep = _select_modes(table, r1, floor_rel, per_path=noise == "additive")
    xi = table.modes[keep]
    mu = _mu_of_modes(xi, a_known)

    even_gammas = list(range(0, 2 * p2 + 1, 2))
    odd_gammas = list(range(1, 2 * p2, 2))

    if noise == "multiplicative":
        ratio = table.mean_coeffs[r2, keep] / table.mean_coeffs[r1, keep]
        arg = np.angle(ratio)
        _guard_phase(arg)
        drift_even = sum(a_known[a] * (-1.0) ** (a // 2) * xi.astype(float) ** a
                         for a in range(0, len(a_known), 2))
        drift_odd = sum(a_known[a] * (-1.0) ** ((a - 1) // 2) * xi.astype(float) ** a
                        for a in range(1, len(a_known), 2))
        y_even = 2.0 * (np.log(np.abs(ratio)) / dt_gap - drift_even)
        y_odd = 2.0 * (arg / dt_gap - drift_odd)
        gam_e = _solve_parity(xi, y_even, even_gammas, "even")
        c = np.zeros(2 * p2 + 1)
        for g, v in zip(even_gammas, gam_e):
            c[g] = v
        if odd_gammas:
            gam_o = _solve_parity(xi, y_odd, odd_gammas, "odd")
            for g, v in zip(odd_gammas, gam_o):
                c[g] = v
        gammas = np.arange(2 * p2 + 1)
    else:
        if r_hat is None:
            raise ValueError("additive path needs r_hat, the noise profile modes")
        r_vals = np.asarray(r_hat, dtype=complex)[keep]
        if np.any(np.abs(r_vals) == 0):
            raise ValueError("r_hat vanishes on selected modes")
        prop = np.exp(mu * dt_gap)
        diff = table.path_coeffs[r2][:, keep] - table.path_coeffs[r1][:, keep] * prop
        second = np.mean(np.abs(diff) ** 2, axis=0)
        re2 = 2.0 * mu.real
        kappa = np.where(np.abs(re2) > 1e-12,
                         np.expm1(re2 * dt_gap) / np.where(re2 == 0, 1.0, re2),
                         dt_gap)
        y = second / (np.abs(r_vals) ** 2 * kappa)
        gam_e = _solve_parity(xi, y, even_gammas, "even")
        c = np.zeros(2 * p2 + 1)
        for g, v in zip(even_gammas, gam_e):
            c[g] = v
        gammas = np.arange(2 * p2 + 1)

    c_by_gamma = {int(g): float(c[g]) for g in gammas}
    classes = _factor_quadform(c_by_gamma, p2, noise)
    return QuadformFit(gammas, c, classes, xi)


def stratonovich_to_ito(a_strat, b) -> np.ndarray:
    """Ito drift coefficients from Stratonovich drift plus diffusion operator.

    ``a_ito[g] = a_strat[g] + 0.5 * sum_{i+j=g} b[i] b[j]``.
    """
    a_strat = np.asarray(a_strat, dtype=float)
    b = np.asarray(b, dtype=float)
    corr = 0.5 * np.convolve(b, b)
    out = np.zeros(max(len(a_strat), len(corr)))
    out[: len(a_strat)] += a_strat
    out[: len(corr)] += corr
    return out


def linear_propagate(field: np.ndarray, a_coeffs, t: float,
                     period: float = TWO_PI) -> np.ndarray:
    """Exact solution at time ``t`` of ``u_t = sum_k a_k d^k u`` (periodic).

    Evaluates the mode-wise exponential propagator with the discrete
    Fourier transform along the last axis; used as the accuracy oracle
    for zero-noise simulations of linear models.
    """
    field = np.asarray(field, dtype=float)
    m = field.shape[-1]
    k = np.fft.fftfreq(m, d=1.0 / m)
    xi = TWO_PI * k / period
    mu = np.zeros(m, dtype=complex)
    for order, a in enumerate(np.asarray(a_coeffs, dtype=float)):
        mu += a * (1j * xi) ** order
    out = np.fft.ifft(np.fft.fft(field, axis=-1) * np.exp(mu * t), axis=-1)
    return out.real
