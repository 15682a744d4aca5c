"""Sparse coefficient vectors shared by the drift and diffusion solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SparseCoeffs:
    """A sparse vector: dictionary length plus index -> value entries.

    Stored zeros are stripped, so the support size equals the declared
    sparsity of the model the vector represents.
    """

    length: int
    entries: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {int(k): float(v) for k, v in self.entries.items() if v != 0.0}
        for k in clean:
            if not 0 <= k < self.length:
                raise ValueError(f"index {k} outside dictionary of length {self.length}")
        object.__setattr__(self, "entries", clean)

    @classmethod
    def from_dense(cls, vec, tol: float = 0.0) -> "SparseCoeffs":
        vec = np.asarray(vec, dtype=float)
        entries = {int(i): float(v) for i, v in enumerate(vec) if abs(v) > tol}
        return cls(len(vec), entries)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(sorted(self.entries))

    @property
    def sparsity(self) -> int:
        return len(self.entries)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.length)
        for k, v in self.entries.items():
            out[k] = v
        return out

    def canonical_sign(self) -> "SparseCoeffs":
        """Flip the whole vector so its first active entry is nonnegative."""
        if not self.entries:
            return self
        first = min(self.entries)
        if self.entries[first] >= 0:
            return self
        return SparseCoeffs(self.length, {k: -v for k, v in self.entries.items()})

    def __getitem__(self, k: int) -> float:
        return self.entries.get(int(k), 0.0)
