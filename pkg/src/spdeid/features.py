"""Finite-difference differentiation and monomial feature dictionaries.

Spatial derivatives are estimated with centered 7-point stencils whose
weights come from Fornberg's recursion, applied with periodic wrap.
A dictionary of type ``(p, q)`` enumerates all monomials built from at
most ``q`` factors, each factor being a spatial derivative of order at
most ``p`` of one state component; the empty product is the constant
feature ``1``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.ndimage import correlate1d

#: largest derivative order a centered 7-point stencil supports
MAX_DERIVATIVE_ORDER = 6

_STENCIL_OFFSETS = tuple(range(-3, 4))


def fornberg_weights(order: int, offsets) -> np.ndarray:
    """Finite-difference weights for ``f^(order)`` at 0 from the given nodes.

    Returns ``w`` with ``sum_j w[j] f(x + offsets[j]*h) = h^order f^(order)(x)
    + O(h^(len(offsets)-order))``; exact on polynomials of degree
    ``< len(offsets)``.
    """
    order = int(order)
    offsets = [float(o) for o in np.atleast_1d(offsets)]
    n = len(offsets)
    if order < 0:
        raise ValueError("derivative order must be nonnegative")
    if n < order + 1:
        raise ValueError("need at least order+1 offsets")
    if len(set(offsets)) != n:
        raise ValueError("repeated offsets")
    c = np.zeros((n, order + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = offsets[0]
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = offsets[i]
        for j in range(i):
            c3 = offsets[i] - offsets[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order].copy()


@lru_cache(maxsize=None)
def _centered_weights(order: int) -> np.ndarray:
    w = fornberg_weights(order, _STENCIL_OFFSETS)
    w.setflags(write=False)
    return w


def differentiate(field: np.ndarray, order: int, dx: float, axis: int = -1) -> np.ndarray:
    """Periodic centered 7-point derivative of ``field`` along ``axis``."""
    order = int(order)
    if order < 0 or order > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"derivative order {order} outside 0..{MAX_DERIVATIVE_ORDER}"
                         " (7-point stencil)")
    field = np.asarray(field, dtype=np.float64)
    if field.shape[axis] < len(_STENCIL_OFFSETS):
        raise ValueError("field too short for 7-point stencil")
    if order == 0:
        return field.copy()
    w = _centered_weights(order)
    return correlate1d(field, w, axis=axis, mode="wrap") / dx**order


def differentiate_multi(field: np.ndarray, alpha, dx) -> np.ndarray:
    """Apply the multi-index derivative ``alpha`` over the trailing axes.

    ``alpha[k]`` is the derivative order along space axis ``k`` (axes are
    the last ``len(alpha)`` axes of ``field``); ``dx[k]`` the matching
    step.
    """
    alpha = tuple(int(a) for a in np.atleast_1d(alpha))
    dx = np.atleast_1d(np.asarray(dx, dtype=float))
    out = np.asarray(field, dtype=np.float64)
    ndim = len(alpha)
    for k, a in enumerate(alpha):
        if a:
            out = differentiate(out, a, dx[k], axis=out.ndim - ndim + k)
    return out if out is not field else out.copy()


_COMPONENT_NAMES = "uvwz"


def _symbol_name(component: int, alpha: tuple[int, ...]) -> str:
    base = _COMPONENT_NAMES[component]
    if all(a == 0 for a in alpha):
        return base
    if len(alpha) == 1:
        return base + "_" + "x" * alpha[0]
    # 2-D: alpha = (order_y, order_x); print x's first
    return base + "_" + "x" * alpha[1] + "y" * alpha[0]


@dataclass(frozen=True)
class FeatureSpec:
    """One monomial: a multiset of derivative symbols ``(component, alpha)``.

    The empty multiset is the constant feature 1.  Factors are kept
    sorted so equality is structural.
    """

    factors: tuple[tuple[int, tuple[int, ...]], ...]

    def __post_init__(self):
        norm = tuple(sorted((int(c), tuple(int(a) for a in alpha))
                            for c, alpha in self.factors))
        object.__setattr__(self, "factors", norm)

    @property
    def length(self) -> int:
        return len(self.factors)

    @property
    def name(self) -> str:
        if not self.factors:
            return "1"
        return "*".join(_symbol_name(c, a) for c, a in self.factors)

    def max_order(self) -> int:
        return max((sum(a) for _, a in self.factors), default=0)


def _multi_indices(p: int, space_dims: int) -> list[tuple[int, ...]]:
    if space_dims == 1:
        return [(d,) for d in range(p + 1)]
    out = [(dy, dx) for dy in range(p + 1) for dx in range(p + 1 - dy)]
    return sorted(out, key=lambda a: (sum(a), a))


@dataclass(frozen=True)
class FeatureDictionary:
    """Ordered list of feature specs of type ``(p, q)``.

    Canonical order: by product length, then lexicographically on the
    (sorted) factor tuples, so coefficient vectors are comparable across
    runs.
    """

    specs: tuple[FeatureSpec, ...]
    p: int
    q: int
    space_dims: int
    components: int

    def __len__(self) -> int:
        return len(self.specs)

    def __getitem__(self, k: int) -> FeatureSpec:
        return self.specs[k]

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no feature named {name!r}") from None

    def to_json(self) -> str:
        return json.dumps(
            {"p": self.p, "q": self.q, "space_dims": self.space_dims,
             "components": self.components, "features": self.names},
            indent=2,
        )


def dictionary_size(p: int, q: int, space_dims: int = 1, components: int = 1) -> int:
    """Closed-form count: 1 + sum_s C(S+s-1, s) with S derivative symbols."""
    s_count = components * len(_multi_indices(p, space_dims))
    return 1 + sum(math.comb(s_count + s - 1, s) for s in range(1, q + 1))


def build_dictionary(p: int, q: int, space_dims: int = 1,
                     components: int = 1) -> FeatureDictionary:
    """Enumerate all multisets of size 0..q over derivative symbols of order <= p."""
    if p < 0:
        raise ValueError("p must be nonnegative")
    if q < 1:
        raise ValueError("q must be at least 1")
    if p > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"p > {MAX_DERIVATIVE_ORDER} unsupported by 7-point stencils")
    symbols = [(c, alpha) for c in range(components)
               for alpha in _multi_indices(p, space_dims)]
    specs: list[FeatureSpec] = [FeatureSpec(())]
    for size in range(1, q + 1):
        for combo in itertools.combinations_with_replacement(symbols, size):
            specs.append(FeatureSpec(tuple(combo)))
    return FeatureDictionary(tuple(specs), p, q, space_dims, components)


def feature_fields(dictionary: FeatureDictionary, component_arrays, dx) -> np.ndarray:
    """Evaluate every feature on (stacks of) space slices.

    ``component_arrays`` is a sequence with one array per state
    component, each shaped ``(..., *space_shape)`` (identical leading
    axes).  Returns an array ``(K, ..., *space_shape)``; the constant
    feature broadcasts to ones.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in component_arrays]
    if len(arrays) != dictionary.components:
        raise ValueError("component count mismatch with dictionary")
    shape = arrays[0].shape
    cache: dict[tuple[int, tuple[int, ...]], np.ndarray] = {}

    def deriv(c: int, alpha: tuple[int, ...]) -> np.ndarray:
        key = (c, alpha)
        if key not in cache:
            cache[key] = differentiate_multi(arrays[c], alpha, dx)
        return cache[key]

    out = np.empty((len(dictionary), *shape), dtype=np.float64)
    for k, spec in enumerate(dictionary.specs):
        if not spec.factors:
            out[k] = 1.0
            continue
        acc = deriv(*spec.factors[0]).copy()
        for fac in spec.factors[1:]:
            acc *= deriv(*fac)
        out[k] = acc
    return out


def evaluate_features(dictionary: FeatureDictionary, ens, path: int,
                      time_index: int) -> np.ndarray:
    """Feature values of one path at one time: array ``(K, *space_shape)``."""
    n_paths = ens.num_paths
    n_times = ens.grid.num_times
    if not (0 <= path < n_paths and 0 <= time_index < n_times):
        raise IndexError("path or time index out of range")
    slices = [ens.component(c)[path, time_index] for c in range(ens.num_components)]
    return feature_fields(dictionary, slices, ens.grid.dx)
