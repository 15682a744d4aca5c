import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdeid.data import TrajectoryEnsemble, UniformGrid
from spdeid.features import (FeatureSpec, build_dictionary, dictionary_size,
                             differentiate, differentiate_multi,
                             evaluate_features, feature_fields,
                             fornberg_weights)


def vandermonde_weights(order, offsets):
    """Independent oracle: solve the moment conditions directly."""
    offsets = np.asarray(offsets, dtype=float)
    n = len(offsets)
    A = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(A, rhs)


class TestFornbergWeights:
    def test_identity_stencil(self):
        assert np.allclose(fornberg_weights(0, [0]), [1.0])

    def test_first_derivative_seven_point(self):
        expected = [-1 / 60, 3 / 20, -3 / 4, 0, 3 / 4, -3 / 20, 1 / 60]
        w = fornberg_weights(1, range(-3, 4))
        assert np.allclose(w, expected, atol=1e-12)
        assert np.allclose(w, vandermonde_weights(1, range(-3, 4)), atol=1e-12)

    def test_second_derivative_seven_point(self):
        expected = [1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90]
        w = fornberg_weights(2, range(-3, 4))
        assert np.allclose(w, expected, atol=1e-12)
        assert np.allclose(w, vandermonde_weights(2, range(-3, 4)), atol=1e-12)

    @pytest.mark.parametrize("order", range(7))
    def test_matches_vandermonde_oracle(self, order):
        offsets = np.arange(-3.0, 4.0)
        assert np.allclose(fornberg_weights(order, offsets),
                           vandermonde_weights(order, offsets), atol=1e-10)

    def test_repeated_offsets(self):
        with pytest.raises(ValueError, match="repeated"):
            fornberg_weights(1, [0, 0, 1])

    def test_too_few_offsets(self):
        with pytest.raises(ValueError):
            fornberg_weights(3, [0, 1, 2])


class TestDifferentiate:
    def test_constant_field(self):
        field = np.full(32, 3.7)
        for d in range(1, 7):
            out = differentiate(field, d, 0.1)
            assert np.abs(out).max() < 1e-9

    def test_sin_derivative(self):
        m = 256
        x = np.linspace(-np.pi, np.pi, m, endpoint=False)
        dx = 2 * np.pi / m
        out = differentiate(np.sin(x), 1, dx)
        assert np.abs(out - np.cos(x)).max() < 1e-9

    def test_degree_five_polynomial_exact(self):
        # interior points of a non-wrapping window: stencil exact on x^5
        x = np.linspace(-1, 1, 64)
        dx = x[1] - x[0]
        out = differentiate(x**5, 5, dx)
        interior = out[3:-3]
        assert np.allclose(interior, 120.0, atol=1e-7)

    def test_polynomial_exactness_order6(self):
        x = np.linspace(-1, 1, 41)
        dx = x[1] - x[0]
        for deg in range(7):
            for d in range(1, min(deg + 1, 7)):
                out = differentiate(x**deg, d, dx)[3:-3]
                expected = (math.factorial(deg) / math.factorial(deg - d)
                            * x[3:-3]**(deg - d)) if deg >= d else 0.0
                assert np.allclose(out, expected, atol=1e-8), (deg, d)

    def test_order_too_high(self):
        with pytest.raises(ValueError):
            differentiate(np.zeros(16), 7, 0.1)

    def test_field_too_short(self):
        with pytest.raises(ValueError):
            differentiate(np.zeros(5), 1, 0.1)

    def test_convergence_order_six(self):
        errs = []
        for m in (64, 128, 256):
            x = np.linspace(0, 2 * np.pi, m, endpoint=False)
            out = differentiate(np.sin(x), 1, 2 * np.pi / m)
            errs.append(np.abs(out - np.cos(x)).max())
        rates = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(rates) > 5.5

    def test_multi_index_2d(self):
        m = 128
        x = np.linspace(0, 2 * np.pi, m, endpoint=False)
        yy, xx = np.meshgrid(x, x, indexing="ij")
        field = np.sin(xx) * np.cos(yy)
        # alpha = (order_y, order_x)
        out = differentiate_multi(field, (1, 1), (2 * np.pi / m, 2 * np.pi / m))
        assert np.abs(out - (-np.cos(xx) * np.sin(yy))).max() < 1e-8


class TestDictionary:
    def test_count_56(self):
        assert len(build_dictionary(4, 3)) == 56

    def test_count_10(self):
        d = build_dictionary(2, 2)
        assert len(d) == 10
        assert d.names[:4] == ["1", "u", "u_x", "u_xx"]

    def test_count_2(self):
        assert build_dictionary(0, 1).names == ["1", "u"]

    @settings(max_examples=30, deadline=None)
    @given(p=st.integers(0, 4), q=st.integers(1, 3),
           dims=st.integers(1, 2), comps=st.integers(1, 2))
    def test_count_formula(self, p, q, dims, comps):
        d = build_dictionary(p, q, dims, comps)
        assert len(d) == dictionary_size(p, q, dims, comps)
        assert len(set(d.names)) == len(d)

    def test_canonical_order(self):
        d = build_dictionary(2, 2)
        lengths = [s.length for s in d.specs]
        assert lengths == sorted(lengths)

    def test_two_component_names(self):
        d = build_dictionary(1, 2, components=2)
        assert "v" in d.names and "u*v" in d.names and "v_x" in d.names

    def test_2d_names(self):
        d = build_dictionary(2, 1, space_dims=2)
        for name in ("u_x", "u_y", "u_xx", "u_xy", "u_yy"):
            assert name in d.names

    def test_spec_factor_canonicalization(self):
        a = FeatureSpec(((0, (1,)), (0, (0,))))
        b = FeatureSpec(((0, (0,)), (0, (1,))))
        assert a == b
        assert a.name == "u*u_x"

    def test_json_listing(self):
        import json
        d = build_dictionary(2, 2)
        payload = json.loads(d.to_json())
        assert payload["features"] == d.names


def _ensemble_from_slice(field):
    m = len(field)
    grid = UniformGrid(0.0, 0.1, 2, -np.pi, 2 * np.pi / m, m)
    values = np.stack([np.stack([field, field])])
    return TrajectoryEnsemble(grid, values)


class TestEvaluateFeatures:
    def test_identity_feature(self):
        rng = np.random.default_rng(0)
        field = rng.standard_normal(32)
        ens = _ensemble_from_slice(field)
        d = build_dictionary(0, 1)
        vals = evaluate_features(d, ens, 0, 0)
        assert np.allclose(vals[0], 1.0)
        assert np.allclose(vals[1], field)

    def test_square_feature(self):
        ens = _ensemble_from_slice(np.full(16, 2.0))
        d = build_dictionary(0, 2)
        vals = evaluate_features(d, ens, 0, 0)
        k = d.index_of("u*u")
        assert np.allclose(vals[k], 4.0)

    def test_product_against_analytic(self):
        m = 256
        x = np.linspace(-np.pi, np.pi, m, endpoint=False)
        ens = _ensemble_from_slice(np.sin(x))
        d = build_dictionary(1, 2)
        vals = evaluate_features(d, ens, 0, 0)
        k = d.index_of("u*u_x")
        assert np.abs(vals[k] - np.sin(x) * np.cos(x)).max() < 1e-8

    def test_multiplicative_property(self):
        rng = np.random.default_rng(1)
        m = 64
        field = np.cumsum(rng.standard_normal(m))
        field -= field.mean()
        d = build_dictionary(2, 2)
        vals = feature_fields(d, [field], (0.1,))
        for k, spec in enumerate(d.specs):
            if spec.length != 2:
                continue
            f1 = FeatureSpec((spec.factors[0],))
            f2 = FeatureSpec((spec.factors[1],))
            i1 = d.specs.index(f1)
            i2 = d.specs.index(f2)
            assert np.allclose(vals[k], vals[i1] * vals[i2], rtol=1e-12)

    def test_out_of_range(self):
        ens = _ensemble_from_slice(np.zeros(16))
        d = build_dictionary(0, 1)
        with pytest.raises(IndexError):
            evaluate_features(d, ens, 5, 0)
