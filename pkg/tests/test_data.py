import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdeid.data import (FormatError, TrajectoryEnsemble, UniformGrid,
                         export_csv, read_ensemble, subsample_time,
                         write_ensemble)


def make_grid(nt=2, nx=8, dims=1):
    return UniformGrid(0.0, 0.5, nt, (-np.pi,) * dims, (2 * np.pi / nx,) * dims,
                       (nx,) * dims)


def random_ensemble(rng, n=3, nt=6, nx=16, components=1):
    grid = make_grid(nt, nx)
    values = rng.standard_normal((n, nt, nx))
    values2 = rng.standard_normal((n, nt, nx)) if components == 2 else None
    return TrajectoryEnsemble(grid, values, values2)


class TestUniformGrid:
    def test_valid(self):
        g = make_grid()
        assert g.space_dims == 1
        assert g.num_space_total == 8
        assert np.allclose(g.times(), [0.0, 0.5])

    @pytest.mark.parametrize("kwargs", [
        dict(t0=0, dt=0, num_times=2, x0=0.0, dx=0.1, num_space=8),
        dict(t0=0, dt=0.1, num_times=1, x0=0.0, dx=0.1, num_space=8),
        dict(t0=0, dt=0.1, num_times=2, x0=0.0, dx=-0.1, num_space=8),
        dict(t0=0, dt=0.1, num_times=2, x0=0.0, dx=0.1, num_space=4),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            UniformGrid(**kwargs)

    def test_non_periodic_rejected(self):
        with pytest.raises(ValueError):
            UniformGrid(0, 0.1, 2, 0.0, 0.1, 8, periodic=False)

    def test_2d_meshes(self):
        g = make_grid(3, 10, dims=2)
        yy, xx = g.space_meshes()
        assert yy.shape == xx.shape == (10, 10)
        assert np.allclose(yy[:, 0], g.space_axis(0))
        assert np.allclose(xx[0, :], g.space_axis(1))


class TestEnsembleValidation:
    def test_shape_mismatch(self):
        grid = make_grid()
        with pytest.raises(ValueError):
            TrajectoryEnsemble(grid, np.zeros((1, 3, 8)))

    def test_non_finite_rejected(self):
        grid = make_grid()
        bad = np.zeros((1, 2, 8))
        bad[0, 1, 3] = np.nan
        with pytest.raises(ValueError, match="non-finite sample"):
            TrajectoryEnsemble(grid, bad)

    def test_values_read_only(self):
        ens = random_ensemble(np.random.default_rng(0))
        with pytest.raises(ValueError):
            ens.values[0, 0, 0] = 1.0


class TestFileRoundTrip:
    def test_zero_payload_file_size(self, tmp_path):
        grid = make_grid(nt=2, nx=8)
        ens = TrajectoryEnsemble(grid, np.zeros((1, 2, 8)))
        path = tmp_path / "zeros.stid"
        write_ensemble(ens, path)
        # magic + 6 u64 + 4 f64 header + 16 float64 payload
        assert path.stat().st_size == 8 + 6 * 8 + 4 * 8 + 16 * 8
        assert read_ensemble(path) == ens

    def test_nan_refused(self, tmp_path):
        ens = random_ensemble(np.random.default_rng(1))
        bad = ens.values.copy()
        bad[0, 0, 0] = np.nan
        ens.values = bad  # bypasses construction-time validation
        with pytest.raises(ValueError, match="non-finite sample"):
            write_ensemble(ens, tmp_path / "bad.stid")

    def test_random_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(42)
        ens = random_ensemble(rng, n=3, nt=6, nx=16)
        path = tmp_path / "rt.stid"
        write_ensemble(ens, path)
        back = read_ensemble(path)
        assert back == ens
        assert back.values.tobytes() == ens.values.tobytes()

    def test_two_component_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        ens = random_ensemble(rng, components=2)
        path = tmp_path / "two.stid"
        write_ensemble(ens, path)
        back = read_ensemble(path)
        assert back == ens

    def test_2d_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        grid = make_grid(3, 9, dims=2)
        ens = TrajectoryEnsemble(grid, rng.standard_normal((2, 3, 9, 9)))
        path = tmp_path / "grid2d.stid"
        write_ensemble(ens, path)
        assert read_ensemble(path) == ens

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.stid"
        path.write_bytes(b"BADMAGIC" + b"\0" * 64)
        with pytest.raises(FormatError, match="unrecognized format"):
            read_ensemble(path)

    def test_small_grid_header_rejected(self, tmp_path):
        ens = TrajectoryEnsemble(make_grid(2, 8), np.zeros((1, 2, 8)))
        path = tmp_path / "small.stid"
        write_ensemble(ens, path)
        raw = bytearray(path.read_bytes())
        raw[8 + 4 * 8:8 + 5 * 8] = (4).to_bytes(8, "little")  # num_space = 4
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="7-point stencil"):
            read_ensemble(path)

    def test_truncated_payload(self, tmp_path):
        ens = random_ensemble(np.random.default_rng(3))
        path = tmp_path / "trunc.stid"
        write_ensemble(ens, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(FormatError, match="truncated"):
            read_ensemble(path)


class TestSubsample:
    def test_identity(self):
        ens = random_ensemble(np.random.default_rng(0))
        sub = subsample_time(ens, 1)
        assert sub == ens

    def test_indices(self):
        grid = make_grid(nt=101, nx=8)
        values = np.arange(101, dtype=float)[None, :, None] * np.ones((1, 101, 8))
        ens = TrajectoryEnsemble(grid, values)
        sub = subsample_time(ens, 50)
        assert sub.grid.num_times == 3
        assert sub.grid.dt == pytest.approx(grid.dt * 50)
        assert np.array_equal(sub.values[0, :, 0], [0.0, 50.0, 100.0])

    def test_non_divisible(self):
        grid = make_grid(nt=101, nx=8)
        ens = TrajectoryEnsemble(grid, np.zeros((1, 101, 8)))
        with pytest.raises(ValueError):
            subsample_time(ens, 7)

    @settings(max_examples=25, deadline=None)
    @given(a=st.integers(1, 4), b=st.integers(1, 4))
    def test_composition(self, a, b):
        nt = a * b * 6 + 1
        rng = np.random.default_rng(a * 10 + b)
        ens = random_ensemble(rng, n=2, nt=nt, nx=8)
        once = subsample_time(ens, a * b)
        twice = subsample_time(subsample_time(ens, a), b)
        assert once == twice


def test_csv_export(tmp_path):
    ens = random_ensemble(np.random.default_rng(5), n=2, nt=3, nx=8)
    path = tmp_path / "out.csv"
    export_csv(ens, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("path,component,time,")
    assert len(lines) == 1 + 2 * 3
