"""Built-in stochastic PDE models used for data generation and evaluation.

Every model is posed on a periodic domain with the equation written as

    du = drift(u) dt + diffusion(u) dW(t)

with a single time-dependent Wiener process per path (Ito convention in
the integrator).  Drift and diffusion callbacks receive a
:class:`~spdeid.simulate.FieldState` and return one array per state
component, broadcastable over ``(num_paths, *space_shape)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .data import UniformGrid

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ModelSpec:
    """Definition of one stochastic PDE plus its simulation protocol."""

    name: str
    components: int
    space_dims: int
    drift: Callable
    diffusion: Callable
    initial: Callable
    t_end: float
    #: per-dimension (origin, period length)
    domain: tuple[tuple[float, float], ...]
    #: "none" (deterministic), "shared" (one random field for all paths),
    #: or "per_path"
    init_randomness: str = "none"
    #: default observation grid (num_times, points per space dim)
    default_shape: tuple[int, int] = (300, 100)

    def default_grid(self, num_times: int | None = None,
                     num_space: int | None = None) -> UniformGrid:
        nt = num_times or self.default_shape[0]
        nx = num_space or self.default_shape[1]
        x0 = tuple(d[0] for d in self.domain)
        dx = tuple(d[1] / nx for d in self.domain)
        return UniformGrid(
            t0=0.0, dt=self.t_end / (nt - 1), num_times=nt,
            x0=x0, dx=dx, num_space=(nx,) * self.space_dims,
        )


def _transport():
    def drift(f):
        return (3.0 * f.d(1) + 0.5 * f.d(2),)

    def diffusion(f):
        return (f.d(1),)

    def initial(grid, rng):
        x = grid.space_axis(0)
        return (0.1 * np.exp(np.sin(4 * x - 0.2)) * np.cos(5 * x + 0.8),)

    return ModelSpec("transport", 1, 1, drift, diffusion, initial,
                     t_end=0.1, domain=((-np.pi, TWO_PI),))


def _kdv():
    def drift(f):
        return (-6.0 * f.u() * f.d(1) - f.d(3),)

    def diffusion(f):
        return (np.full_like(f.u(), 7.0),)

    def initial(grid, rng):
        x = grid.space_axis(0)
        return (np.exp(np.sin(3 * x - 0.2)) * np.cos(2 * x + 0.8) + 4.0,)

    return ModelSpec("kdv", 1, 1, drift, diffusion, initial,
                     t_end=0.05, domain=((-np.pi, TWO_PI),))


def _burgers():
    def drift(f):
        return (3.0 * f.u() * f.d(1) + 0.5 * f.d(2),)

    def diffusion(f):
        return (5.0 + 2.0 * f.u(),)

    def initial(grid, rng):
        x = grid.space_axis(0)
        return (3 * np.sin(x - 1) ** 2 + 2 * np.cos(2 * x) + 5 * np.sin(5 * x + 2.0) + 1.0,)

    return ModelSpec("burgers", 1, 1, drift, diffusion, initial,
                     t_end=0.05, domain=((-np.pi, TWO_PI),))


def _nls():
    # coupled real two-component system; dW acts with the partner field
    def drift(f):
        u, v = f.u(0), f.u(1)
        du = 5.0 * f.d(2, 0) + u**3 + u * v**2
        dv = -(u**2) * v - 5.0 * f.d(2, 1) - v**3
        return (du, dv)

    def diffusion(f):
        return (f.u(1), f.u(0))

    def initial(grid, rng):
        x = grid.space_axis(0)
        return (np.exp(np.sin(2 * x + 1)) + 1.0, np.exp(np.cos(3 * x + 1)) + 1.0)

    return ModelSpec("nls", 2, 1, drift, diffusion, initial,
                     t_end=0.2, domain=((-np.pi, TWO_PI),))


def _allen_cahn():
    # alpha = (order_y, order_x)
    def drift(f):
        u = f.u()
        return (0.5 * (f.d((0, 2)) + f.d((2, 0))) - 2.0 * (u**3 - u),)

    def diffusion(f):
        return (f.d((0, 1)) + f.d((1, 0)),)

    def initial(grid, rng):
        yy, xx = grid.space_meshes()
        zeta = rng.uniform(-1.0, 1.0, size=grid.space_shape)
        base = np.sqrt(np.sin(2 * xx) ** 2 + np.cos(2 * yy) ** 2)
        return (base + 0.5 * np.exp(np.sin(xx + yy)) + zeta,)

    return ModelSpec("allen_cahn", 1, 2, drift, diffusion, initial,
                     t_end=0.08, domain=((-np.pi, TWO_PI), (-np.pi, TWO_PI)),
                     init_randomness="shared", default_shape=(100, 50))


def _kpz():
    def drift(f):
        return (3.0 * f.d(2) + 3.0 * f.d(1) ** 2,)

    def diffusion(f):
        return (np.ones_like(f.u()),)

    def initial(grid, rng):
        x = grid.space_axis(0)
        zeta = rng.uniform(-0.5, 0.5, size=grid.space_shape)
        return (np.exp(np.sin(2 * x) + zeta),)

    return ModelSpec("kpz", 1, 1, drift, diffusion, initial,
                     t_end=0.5, domain=((-np.pi, TWO_PI),),
                     init_randomness="per_path", default_shape=(200, 100))


def _heat_initial(grid, rng):
    x = grid.space_axis(0)
    return (0.2 * np.exp(np.sin(3 * x - 0.2)) * np.cos(4 * x + 0.8),)


def _heat_mult():
    def drift(f):
        return (f.d(2),)

    def diffusion(f):
        return (0.3 * f.d(1),)

    return ModelSpec("heat_mult", 1, 1, drift, diffusion, _heat_initial,
                     t_end=0.1, domain=((-np.pi, TWO_PI),))


def _heat_mix():
    def drift(f):
        return (f.d(2),)

    def diffusion(f):
        return (2.0 * f.u() + 0.5 * f.d(1),)

    return ModelSpec("heat_mix", 1, 1, drift, diffusion, _heat_initial,
                     t_end=0.1, domain=((-np.pi, TWO_PI),))


_BUILDERS = {
    "transport": _transport,
    "kdv": _kdv,
    "burgers": _burgers,
    "nls": _nls,
    "allen_cahn": _allen_cahn,
    "kpz": _kpz,
    "heat_mult": _heat_mult,
    "heat_mix": _heat_mix,
}

MODEL_NAMES = tuple(sorted(_BUILDERS))


def builtin_model(name: str, fixed_init: bool = False) -> ModelSpec:
    """Look up a catalog model.

    ``fixed_init=True`` replaces per-path random initial data with one
    shared random field (relevant for ``kpz``).
    """
    try:
        spec = _BUILDERS[name]()
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}") from None
    if fixed_init and spec.init_randomness == "per_path":
        spec = replace(spec, init_randomness="shared")
    return spec


#: reference coefficients, keyed by feature name, for evaluation against
#: identified models; per component.  Additive models carry ``sigma``.
GROUND_TRUTH: dict[str, dict] = {
    "transport": {
        "drift": [{"u_x": 3.0, "u_xx": 0.5}],
        "diffusion": [{"u_x": 1.0}],
        "sigma": None,
    },
    "kdv": {
        "drift": [{"u*u_x": -6.0, "u_xxx": -1.0}],
        "diffusion": [{"1": 7.0}],
        "sigma": 7.0,
    },
    "burgers": {
        "drift": [{"u*u_x": 3.0, "u_xx": 0.5}],
        "diffusion": [{"1": 5.0, "u": 2.0}],
        "sigma": None,
    },
    "nls": {
        "drift": [
            {"u_xx": 5.0, "u*u*u": 1.0, "u*v*v": 1.0},
            {"u*u*v": -1.0, "v_xx": -5.0, "v*v*v": -1.0},
        ],
        "diffusion": [{"v": 1.0}, {"u": 1.0}],
        "sigma": None,
    },
    "allen_cahn": {
        "drift": [{"u_xx": 0.5, "u_yy": 0.5, "u": 2.0, "u*u*u": -2.0}],
        "diffusion": [{"u_x": 1.0, "u_y": 1.0}],
        "sigma": None,
    },
    "kpz": {
        "drift": [{"u_xx": 3.0, "u_x*u_x": 3.0}],
        "diffusion": [{"1": 1.0}],
        "sigma": 1.0,
    },
    "heat_mult": {
        "drift": [{"u_xx": 1.0}],
        "diffusion": [{"u_x": 0.3}],
        "sigma": None,
    },
    "heat_mix": {
        "drift": [{"u_xx": 1.0}],
        "diffusion": [{"u": 2.0, "u_x": 0.5}],
        "sigma": None,
    },
}


def ground_truth_coeffs(name: str, dictionary, component: int = 0,
                        which: str = "drift"):
    """Reference coefficients as a SparseCoeffs aligned to ``dictionary``."""
    from .sparse import SparseCoeffs

    info = GROUND_TRUTH[name][which][component]
    entries = {dictionary.index_of(fname): val for fname, val in info.items()}
    return SparseCoeffs(len(dictionary), entries)
