import itertools

import numpy as np
import pytest

from spdeid.catalog import ModelSpec
from spdeid.data import TrajectoryEnsemble, UniformGrid
from spdeid.drift import (DriftSystem, assemble_drift_system,
                          generate_drift_candidates, subspace_pursuit,
                          trim_drift)
from spdeid.features import build_dictionary
from spdeid.simulate import simulate_paths
from spdeid.sparse import SparseCoeffs

TWO_PI = 2 * np.pi


def brute_force_support(F, y, k):
    """Independent oracle: enumerate every k-support and pick the best fit."""
    best, best_support = np.inf, None
    for support in itertools.combinations(range(F.shape[1]), k):
        cols = F[:, list(support)]
        coef, *_ = np.linalg.lstsq(cols, y, rcond=None)
        resid = np.linalg.norm(y - cols @ coef)
        if resid < best - 1e-12:
            best, best_support = resid, support
    return best_support, best


class TestAssembleDriftSystem:
    def test_exponential_growth_recovers_rate(self):
        # du = 2u dt, no noise, no space coupling: LS recovers 2 within O(dt)
        model = ModelSpec(
            name="exp", components=1, space_dims=1,
            drift=lambda f: (2.0 * f.u(),),
            diffusion=lambda f: (np.zeros_like(f.u()),),
            initial=lambda grid, rng: (1.0 + 0.5 * np.sin(grid.space_axis(0)),),
            t_end=0.1, domain=((-np.pi, TWO_PI),),
        )
        dt = 0.01
        grid = UniformGrid(0.0, dt, 11, -np.pi, TWO_PI / 16, 16)
        ens = simulate_paths(model, grid, 1, upsample=100, seed=0)
        d = build_dictionary(0, 1)
        system = assemble_drift_system(ens, d)
        coef, *_ = np.linalg.lstsq(system.F[:, [1]], system.y, rcond=None)
        assert abs(coef[0] - 2.0) < 3 * dt

    def test_constant_paths_zero_response(self):
        grid = UniformGrid(0.0, 0.1, 4, -np.pi, TWO_PI / 8, 8)
        values = np.tile(np.arange(8.0), (2, 4, 1))
        ens = TrajectoryEnsemble(grid, values)
        system = assemble_drift_system(ens, build_dictionary(1, 1))
        assert np.allclose(system.y, 0.0)

    def test_duplication_invariance(self):
        rng = np.random.default_rng(0)
        grid = UniformGrid(0.0, 0.1, 4, -np.pi, TWO_PI / 8, 8)
        values = rng.standard_normal((3, 4, 8))
        ens = TrajectoryEnsemble(grid, values)
        doubled = TrajectoryEnsemble(grid, np.concatenate([values, values]))
        d = build_dictionary(2, 2)
        a = assemble_drift_system(ens, d)
        b = assemble_drift_system(doubled, d)
        assert np.allclose(a.F, b.F)
        assert np.allclose(a.y, b.y)

    def test_row_count_and_norms(self):
        rng = np.random.default_rng(1)
        grid = UniformGrid(0.0, 0.1, 5, -np.pi, TWO_PI / 8, 8)
        ens = TrajectoryEnsemble(grid, rng.standard_normal((2, 5, 8)))
        d = build_dictionary(1, 1)
        system = assemble_drift_system(ens, d)
        assert system.F.shape == (4 * 8, len(d))
        assert np.allclose(system.column_norms, np.linalg.norm(system.F, axis=0))


class TestSubspacePursuit:
    def test_exact_one_sparse(self):
        rng = np.random.default_rng(0)
        F = rng.standard_normal((40, 6))
        y = 3.0 * F[:, 2]
        got = subspace_pursuit(F, y, 1)
        assert got.support == (2,)
        assert got[2] == pytest.approx(3.0, abs=1e-10)

    def test_planted_two_sparse_matches_brute_force(self):
        rng = np.random.default_rng(1)
        F = rng.standard_normal((200, 10))
        c = np.zeros(10)
        c[[3, 7]] = [2.0, -1.5]
        y = F @ c
        support, _ = brute_force_support(F, y, 2)
        got = subspace_pursuit(F, y, 2)
        assert got.support == support == (3, 7)
        assert got[3] == pytest.approx(2.0, abs=1e-8)

    def test_orthogonal_response(self):
        rng = np.random.default_rng(2)
        Q, _ = np.linalg.qr(rng.standard_normal((20, 6)))
        F = Q[:, :5]
        y = Q[:, 5]
        got = subspace_pursuit(F, y, 2)
        dense = got.to_dense()
        assert np.abs(dense).max() < 1e-10

    def test_column_scaling_invariance(self):
        rng = np.random.default_rng(3)
        F = rng.standard_normal((120, 8))
        c = np.zeros(8)
        c[[1, 4]] = [1.0, -2.0]
        y = F @ c
        base = subspace_pursuit(F, y, 2)
        scales = np.ones(8)
        scales[[1, 5]] = [25.0, 0.01]
        scaled = subspace_pursuit(F * scales, y, 2)
        assert scaled.support == base.support
        for k in base.support:
            assert scaled[k] * scales[k] == pytest.approx(base[k], rel=1e-9)

    def test_zero_column_dropped_with_warning(self):
        rng = np.random.default_rng(4)
        F = rng.standard_normal((50, 5))
        F[:, 2] = 0.0
        y = F[:, 0] * 2.0
        with pytest.warns(RuntimeWarning, match=r"zero columns \[2\]"):
            got = subspace_pursuit(F, y, 1)
        assert got.support == (0,)

    def test_sparsity_bounds(self):
        F = np.ones((10, 3))
        with pytest.raises(ValueError):
            subspace_pursuit(F, np.ones(10), 0)
        with pytest.raises(ValueError):
            subspace_pursuit(F, np.ones(10), 4)

    def test_recovery_rate_planted_gaussian(self):
        # empirical restricted-isometry regime: rows >> K
        hits = 0
        trials = 100
        for trial in range(trials):
            rng = np.random.default_rng(1000 + trial)
            k = trial % 3 + 1
            F = rng.standard_normal((240, 12))
            support = tuple(sorted(rng.choice(12, size=k, replace=False)))
            c = np.zeros(12)
            c[list(support)] = rng.uniform(1.0, 3.0, size=k) * rng.choice([-1, 1], size=k)
            y = F @ c
            got = subspace_pursuit(F, y, k)
            hits += got.support == support
        assert hits >= 95


class TestTrimDrift:
    def test_equal_scores_unchanged(self):
        rng = np.random.default_rng(0)
        Q, _ = np.linalg.qr(rng.standard_normal((30, 4)))
        F = Q[:, :3]
        y = F @ np.array([1.0, -1.0, 1.0])
        coeffs = SparseCoeffs(3, {0: 1.0, 1: -1.0, 2: 1.0})
        out = trim_drift(F, y, coeffs, 0.3)
        assert out.support == (0, 1, 2)

    def test_below_threshold_removed(self):
        rng = np.random.default_rng(1)
        Q, _ = np.linalg.qr(rng.standard_normal((30, 2)))
        F = Q
        y = F @ np.array([1.0, 0.29])
        coeffs = SparseCoeffs(2, {0: 1.0, 1: 0.29})
        out = trim_drift(F, y, coeffs, 0.3)
        assert out.support == (0,)
        assert out[0] == pytest.approx(1.0, abs=1e-10)

    def test_spurious_feature_dropped_coefficients_recover(self):
        # column norms chosen so both planted features score comparably
        rng = np.random.default_rng(2)
        F = rng.standard_normal((300, 6))
        F /= np.linalg.norm(F, axis=0)
        F[:, 1] *= 6.0
        truth = np.zeros(6)
        truth[[0, 1]] = [3.0, 0.5]
        y = F @ truth
        # perturbed fit with a small spurious third feature
        start = SparseCoeffs(6, {0: 2.8, 1: 0.6, 4: 0.05})
        out = trim_drift(F, y, start, 0.3)
        assert out.support == (0, 1)
        assert out[0] == pytest.approx(3.0, abs=1e-8)
        assert out[1] == pytest.approx(0.5, abs=1e-8)

    def test_tau_range(self):
        with pytest.raises(ValueError):
            trim_drift(np.ones((4, 2)), np.ones(4), SparseCoeffs(2, {0: 1.0}), 1.0)


class TestGenerateCandidates:
    def test_single_sparsity(self):
        rng = np.random.default_rng(0)
        F = rng.standard_normal((60, 5))
        y = 2.0 * F[:, 1]
        system = DriftSystem(F, y, np.linalg.norm(F, axis=0))
        cands = generate_drift_candidates(system, k_max=1)
        assert len(cands) == 1
        assert cands[0].support == (1,)

    def test_true_support_present_and_deduplicated(self):
        rng = np.random.default_rng(1)
        F = rng.standard_normal((200, 8))
        c = np.zeros(8)
        c[[2, 5]] = [1.0, -0.8]
        y = F @ c
        support, _ = brute_force_support(F, y, 2)
        system = DriftSystem(F, y, np.linalg.norm(F, axis=0))
        cands = generate_drift_candidates(system, k_max=4)
        supports = [cand.support for cand in cands]
        assert support in supports
        assert len(set(supports)) == len(supports)

    def test_residual_non_increasing_over_sp_iterations(self):
        # noisy planted system: accepted iterates never raise the residual
        rng = np.random.default_rng(5)
        F = rng.standard_normal((150, 10))
        c = np.zeros(10)
        c[[0, 3, 6]] = [1.0, 2.0, -1.0]
        y = F @ c + 0.1 * rng.standard_normal(150)
        for k in (1, 2, 3, 4):
            got = subspace_pursuit(F, y, k)
            support = np.array(got.support)
            coef = np.array([got[j] for j in support])
            resid = np.linalg.norm(y - F[:, support] @ coef)
            # the returned support never fits worse than the init support
            norms = np.linalg.norm(F, axis=0)
            Fb = F / norms
            init = np.argsort(-np.abs(Fb.T @ y))[:k]
            coef0, *_ = np.linalg.lstsq(F[:, init], y, rcond=None)
            resid0 = np.linalg.norm(y - F[:, init] @ coef0)
            assert resid <= resid0 + 1e-9
