import dataclasses

import numpy as np
import pytest

from spdeid.catalog import MODEL_NAMES, ModelSpec, builtin_model
from spdeid.data import UniformGrid
from spdeid.simulate import (BlowUpError, WienerStream, simulate_paths,
                             wiener_increments)
from spdeid.spectral import linear_propagate

TWO_PI = 2 * np.pi


def small_grid(nt=6, nx=32, t_end=0.1, dims=1):
    return UniformGrid(0.0, t_end / (nt - 1), nt, (-np.pi,) * dims,
                       (TWO_PI / nx,) * dims, (nx,) * dims)


class TestWienerIncrements:
    def test_moments(self):
        inc = wiener_increments(WienerStream(0, 0), 10**6, 0.01)
        # 4-sigma band around zero mean
        assert abs(inc.mean()) < 4e-4
        assert abs(inc.var() - 0.01) < 1e-4

    def test_reproducible(self):
        a = wiener_increments(WienerStream(9, 4), 100, 0.5)
        b = wiener_increments(WienerStream(9, 4), 100, 0.5)
        assert np.array_equal(a, b)

    def test_distinct_paths(self):
        a = wiener_increments(WienerStream(9, 0), 100, 0.5)
        b = wiener_increments(WienerStream(9, 1), 100, 0.5)
        assert not np.array_equal(a, b)

    def test_validation(self):
        with pytest.raises(ValueError):
            wiener_increments(WienerStream(0, 0), 0, 0.1)
        with pytest.raises(ValueError):
            wiener_increments(WienerStream(0, 0), 5, 0.0)


def constant_model():
    return ModelSpec(
        name="frozen", components=1, space_dims=1,
        drift=lambda f: (np.zeros_like(f.u()),),
        diffusion=lambda f: (np.zeros_like(f.u()),),
        initial=lambda grid, rng: (np.sin(grid.space_axis(0)),),
        t_end=0.1, domain=((-np.pi, TWO_PI),),
    )


class TestSimulatePaths:
    def test_zero_dynamics(self):
        grid = small_grid()
        ens = simulate_paths(constant_model(), grid, 3, upsample=4, seed=0)
        x = grid.space_axis(0)
        for i in range(grid.num_times):
            assert np.allclose(ens.values[:, i], np.sin(x))

    def test_additive_noise_only(self):
        model = dataclasses.replace(
            constant_model(), name="brownian",
            diffusion=lambda f: (np.full_like(f.u(), 2.0),))
        grid = small_grid(nt=5)
        ens = simulate_paths(model, grid, 1, upsample=10, seed=3)
        diff = ens.values[0] - ens.values[0, 0]
        # spatially constant noise: every slice is a constant shift
        assert np.allclose(diff, diff[:, :1])
        # and the shift follows the accumulated increments
        inc = wiener_increments(WienerStream(3, 0), 40, grid.dt / 10)
        assert np.allclose(diff[-1, 0], 2.0 * inc.sum())

    def test_heat_equation_against_exact(self):
        model = ModelSpec(
            name="heat", components=1, space_dims=1,
            drift=lambda f: (f.d(2),),
            diffusion=lambda f: (np.zeros_like(f.u()),),
            initial=lambda grid, rng: (np.sin(grid.space_axis(0)),),
            t_end=0.1, domain=((-np.pi, TWO_PI),),
        )
        grid = small_grid(nt=11, nx=64)
        ens = simulate_paths(model, grid, 1, upsample=20, seed=0)
        x = grid.space_axis(0)
        exact = np.exp(-0.1) * np.sin(x)
        err = np.linalg.norm(ens.values[0, -1] - exact) / np.linalg.norm(exact)
        assert err < 1e-2

    def test_linear_model_matches_spectral_oracle(self):
        model = dataclasses.replace(
            builtin_model("transport"),
            diffusion=lambda f: (np.zeros_like(f.u()),))
        grid = small_grid(nt=21, nx=64, t_end=0.05)
        ens = simulate_paths(model, grid, 1, upsample=40, seed=0)
        exact = linear_propagate(ens.values[0, 0], [0.0, 3.0, 0.5], 0.05)
        err = np.abs(ens.values[0, -1] - exact).max()
        assert err < 5e-4

    def test_determinism(self):
        model = builtin_model("transport")
        grid = small_grid(nt=5)
        a = simulate_paths(model, grid, 4, upsample=5, seed=12)
        b = simulate_paths(model, grid, 4, upsample=5, seed=12)
        assert a == b

    def test_path_prefix_stability(self):
        # per-path substreams: the first paths of a larger ensemble are
        # bitwise the paths of a smaller one
        model = builtin_model("transport")
        grid = small_grid(nt=5)
        small = simulate_paths(model, grid, 2, upsample=5, seed=12)
        large = simulate_paths(model, grid, 5, upsample=5, seed=12)
        assert np.array_equal(large.values[:2], small.values)

    def test_blow_up_detected(self):
        model = ModelSpec(
            name="explode", components=1, space_dims=1,
            drift=lambda f: (f.u() ** 3 * 1e6,),
            diffusion=lambda f: (np.zeros_like(f.u()),),
            initial=lambda grid, rng: (np.full(grid.num_space[0], 5.0),),
            t_end=1.0, domain=((-np.pi, TWO_PI),),
        )
        grid = small_grid(nt=5, t_end=1.0)
        with pytest.raises(BlowUpError, match="blow-up at time"):
            simulate_paths(model, grid, 1, upsample=2, seed=0)

    def test_weak_convergence_rate_in_dt(self):
        # ensemble mean error at T halves when the fine step halves;
        # the ensemble is large so Monte Carlo noise sits below the
        # time-stepping error at these step sizes
        model = builtin_model("transport")
        nx = 32
        grid = UniformGrid(0.0, 0.05, 3, -np.pi, TWO_PI / nx, nx)
        u0 = model.initial(grid, None)[0]
        exact = linear_propagate(u0, [0.0, 3.0, 0.5], 0.1)
        errs = []
        for upsample in (2, 4):
            ens = simulate_paths(model, grid, 20000, upsample=upsample, seed=5)
            mean = ens.values[:, -1].mean(axis=0)
            errs.append(np.linalg.norm(mean - exact))
        ratio = errs[0] / errs[1]
        assert 2 / 1.5 < ratio < 2 * 1.5


class TestCatalog:
    def test_unknown_model(self):
        with pytest.raises(ValueError, match="unknown model"):
            builtin_model("nosuch")

    @pytest.mark.parametrize("name", MODEL_NAMES)
    def test_all_models_simulate(self, name):
        model = builtin_model(name)
        nt, nx = 5, 32 if model.space_dims == 1 else 16
        grid = UniformGrid(0.0, 1e-4, nt, (-np.pi,) * model.space_dims,
                           (TWO_PI / nx,) * model.space_dims,
                           (nx,) * model.space_dims)
        ens = simulate_paths(model, grid, 2, upsample=4, seed=1)
        assert ens.num_components == model.components
        assert np.isfinite(ens.values).all()

    def test_transport_initial_condition(self):
        model = builtin_model("transport")
        grid = small_grid()
        x = grid.space_axis(0)
        expected = 0.1 * np.exp(np.sin(4 * x - 0.2)) * np.cos(5 * x + 0.8)
        assert np.allclose(model.initial(grid, None)[0], expected)
        assert model.t_end == 0.1

    def test_kdv_constant_diffusion(self):
        model = builtin_model("kdv")
        grid = small_grid()
        from spdeid.simulate import FieldState
        state = model.initial(grid, None)[0][None, None, :]
        fs = FieldState(np.ascontiguousarray(state), grid.dx)
        assert np.allclose(model.diffusion(fs)[0], 7.0)
        assert model.t_end == 0.05

    def test_heat_mix_diffusion(self):
        model = builtin_model("heat_mix")
        grid = small_grid(nx=64)
        from spdeid.simulate import FieldState
        u0 = model.initial(grid, None)[0]
        fs = FieldState(u0[None, None, :].copy(), grid.dx)
        got = model.diffusion(fs)[0][0]
        from spdeid.features import differentiate
        expected = 2 * u0 + 0.5 * differentiate(u0, 1, grid.dx[0])
        assert np.allclose(got, expected)

    def test_kpz_per_path_initial(self):
        model = builtin_model("kpz")
        grid = small_grid()
        ens = simulate_paths(model, grid, 3, upsample=2, seed=4)
        assert not np.allclose(ens.values[0, 0], ens.values[1, 0])
        fixed = builtin_model("kpz", fixed_init=True)
        ens2 = simulate_paths(fixed, grid, 3, upsample=2, seed=4)
        assert np.allclose(ens2.values[0, 0], ens2.values[1, 0])

    def test_allen_cahn_shared_field(self):
        model = builtin_model("allen_cahn")
        nx = 16
        grid = UniformGrid(0.0, 1e-4, 3, (-np.pi, -np.pi),
                           (TWO_PI / nx, TWO_PI / nx), (nx, nx))
        ens = simulate_paths(model, grid, 2, upsample=2, seed=9)
        assert np.allclose(ens.values[0, 0], ens.values[1, 0])
