"""Grid and trajectory-ensemble containers with bit-exact file I/O.

The binary STID1 format stores an ensemble of sampled trajectories on a
uniform periodic time-space grid.  Layout (all integers/floats little
endian):

* bytes 0-7: ASCII magic ``STIDENT1``
* uint64 fields: version (=1), num_paths, num_times, num_space_dims
  (1 or 2), num_space per dimension, num_components (1 or 2)
* float64 fields: t0, dt, then (x0, dx) per space dimension
* payload: float64 samples ordered (path, component, time, space-row,
  space-col)
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"STIDENT1"
FORMAT_VERSION = 1

#: minimum grid points per space axis; centered 7-point stencils need this
MIN_SPACE_POINTS = 7


class FormatError(ValueError):
    """Malformed, truncated, or unrecognized ensemble file."""


def _as_float_tuple(value) -> tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(value, dtype=float)))


def _as_int_tuple(value) -> tuple[int, ...]:
    return tuple(int(v) for v in np.atleast_1d(np.asarray(value)))


@dataclass(frozen=True)
class UniformGrid:
    """Uniform periodic grid on ``[t0, t0 + dt*(num_times-1)] x domain``.

    Space axis ``d`` carries ``num_space[d]`` points ``x0[d] + m*dx[d]``
    covering one period of length ``dx[d]*num_space[d]`` (the right end
    wraps back onto ``x0``).  1-D and 2-D grids are supported; 2-D space
    is stored row-major over (y, x).
    """

    t0: float
    dt: float
    num_times: int
    x0: tuple[float, ...]
    dx: tuple[float, ...]
    num_space: tuple[int, ...]
    periodic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "num_times", int(self.num_times))
        object.__setattr__(self, "x0", _as_float_tuple(self.x0))
        object.__setattr__(self, "dx", _as_float_tuple(self.dx))
        object.__setattr__(self, "num_space", _as_int_tuple(self.num_space))
        if not self.periodic:
            raise ValueError("non-periodic grids are not supported")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.num_times < 2:
            raise ValueError("num_times must be at least 2")
        dims = len(self.num_space)
        if dims not in (1, 2):
            raise ValueError("only 1-D and 2-D space grids are supported")
        if len(self.x0) != dims or len(self.dx) != dims:
            raise ValueError("x0, dx, num_space must have equal length")
        if any(h <= 0 for h in self.dx):
            raise ValueError("dx must be positive")
        if any(m < MIN_SPACE_POINTS for m in self.num_space):
            raise ValueError("grid too small for 7-point stencil")

    @property
    def space_dims(self) -> int:
        return len(self.num_space)

    @property
    def space_shape(self) -> tuple[int, ...]:
        return self.num_space

    @property
    def num_space_total(self) -> int:
        return int(np.prod(self.num_space))

    @property
    def duration(self) -> float:
        return self.dt * (self.num_times - 1)

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.num_times)

    def space_axis(self, d: int = 0) -> np.ndarray:
        return self.x0[d] + self.dx[d] * np.arange(self.num_space[d])

    def space_meshes(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays broadcast to ``space_shape`` (indexing='ij')."""
        axes = [self.space_axis(d) for d in range(self.space_dims)]
        return tuple(np.meshgrid(*axes, indexing="ij"))


@dataclass
class TrajectoryEnsemble:
    """Sampled solution paths on a shared grid.

    ``values`` has shape ``(num_paths, num_times, *space_shape)``.  For
    two-component systems the second field is carried in ``values2``
    with the same shape.  Arrays are validated to be finite and are
    marked read-only; the ensemble is safe to share across workers.
    """

    grid: UniformGrid
    values: np.ndarray
    values2: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        expected = self.values.shape[1:]
        if self.values.ndim != 1 + 1 + self.grid.space_dims or expected != (
            self.grid.num_times,
            *self.grid.space_shape,
        ):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid "
                f"(num_times={self.grid.num_times}, space={self.grid.space_shape})"
            )
        if self.values.shape[0] < 1:
            raise ValueError("ensemble needs at least one path")
        if not np.isfinite(self.values).all():
            raise ValueError("non-finite sample")
        self.values.setflags(write=False)
        if self.values2 is not None:
            self.values2 = np.ascontiguousarray(self.values2, dtype=np.float64)
            if self.values2.shape != self.values.shape:
                raise ValueError("values2 shape must match values")
            if not np.isfinite(self.values2).all():
                raise ValueError("non-finite sample")
            self.values2.setflags(write=False)

    @property
    def num_paths(self) -> int:
        return self.values.shape[0]

    @property
    def num_components(self) -> int:
        return 1 if self.values2 is None else 2

    def component(self, c: int = 0) -> np.ndarray:
        if c == 0:
            return self.values
        if c == 1 and self.values2 is not None:
            return self.values2
        raise IndexError(f"component {c} not present")

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrajectoryEnsemble):
            return NotImplemented
        if self.grid != other.grid or self.num_components != other.num_components:
            return False
        if not np.array_equal(self.values, other.values):
            return False
        if self.values2 is not None and not np.array_equal(self.values2, other.values2):
            return False
        return True


def write_ensemble(ens: TrajectoryEnsemble, path: str | os.PathLike) -> None:
    """Serialize an ensemble to STID1; round-trips bitwise via read_ensemble."""
    stack = [ens.component(c) for c in range(ens.num_components)]
    for arr in stack:
        if not np.isfinite(arr).all():
            raise ValueError("non-finite sample")
    grid = ens.grid
    dims = grid.space_dims
    header = struct.pack(
        f"<{5 + dims}Q",
        FORMAT_VERSION,
        ens.num_paths,
        grid.num_times,
        dims,
        *grid.num_space,
        ens.num_components,
    )
    header += struct.pack(f"<{2 + 2 * dims}d", grid.t0, grid.dt,
                          *[v for d in range(dims) for v in (grid.x0[d], grid.dx[d])])
    # payload order: (path, component, time, space...)
    payload = np.stack(stack, axis=1)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header)
        fh.write(np.ascontiguousarray(payload).astype("<f8", copy=False).tobytes())


def read_ensemble(path: str | os.PathLike) -> TrajectoryEnsemble:
    """Read a STID1 file written by :func:`write_ensemble`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8 or raw[:8] != MAGIC:
        raise FormatError("unrecognized format")
    off = 8

    def take(fmt: str):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(raw):
            raise FormatError("truncated header")
        out = struct.unpack_from(fmt, raw, off)
        off += size
        return out

    version, num_paths, num_times, dims = take("<4Q")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    if dims not in (1, 2):
        raise FormatError(f"unsupported num_space_dims {dims}")
    num_space = take(f"<{dims}Q")
    (num_components,) = take("<Q")
    if num_components not in (1, 2):
        raise FormatError(f"unsupported num_components {num_components}")
    t0, dt = take("<2d")
    x0, dx = [], []
    for _ in range(dims):
        a, h = take("<2d")
        x0.append(a)
        dx.append(h)
    try:
        grid = UniformGrid(t0, dt, num_times, tuple(x0), tuple(dx), tuple(num_space))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    count = num_paths * num_components * num_times * int(np.prod(num_space))
    if len(raw) - off != 8 * count:
        raise FormatError("truncated payload")
    payload = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    payload = payload.reshape(num_paths, num_components, num_times, *num_space)
    values = payload[:, 0]
    values2 = payload[:, 1] if num_components == 2 else None
    return TrajectoryEnsemble(grid, values, values2)


def subsample_time(ens: TrajectoryEnsemble, factor: int) -> TrajectoryEnsemble:
    """Keep every ``factor``-th time slice (no interpolation).

    Inverse of temporal up-sampling used for data generation: a finely
    simulated ensemble is reduced to the observation grid by slicing.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be a positive integer")
    steps = ens.grid.num_times - 1
    if steps % factor != 0:
        raise ValueError(f"num_times-1 = {steps} not divisible by factor {factor}")
    grid = ens.grid
    new_grid = UniformGrid(
        grid.t0, grid.dt * factor, steps // factor + 1,
        grid.x0, grid.dx, grid.num_space,
    )
    values = ens.values[:, ::factor]
    values2 = None if ens.values2 is None else ens.values2[:, ::factor]
    return TrajectoryEnsemble(new_grid, values, values2)


def export_csv(ens: TrajectoryEnsemble, path: str | os.PathLike) -> None:
    """Plain-text export for plotting: one row per (path, time, component)."""
    m = ens.grid.num_space_total
    with open(path, "w") as fh:
        cols = ",".join(f"x{j}" for j in range(m))
        fh.write(f"path,component,time,{cols}\n")
        times = ens.grid.times()
        for n in range(ens.num_paths):
            for c in range(ens.num_components):
                flat = ens.component(c)[n].reshape(ens.grid.num_times, m)
                for i, t in enumerate(times):
                    row = ",".join(repr(v) for v in flat[i])
                    fh.write(f"{n},{c},{t!r},{row}\n")
