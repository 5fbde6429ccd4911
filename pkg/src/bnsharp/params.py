"""Block-partitioned parameter vectors.

A parameter vector is an ordered list of real blocks.  The first ``n1``
blocks are the ones feeding normalized neurons (rescaling any of them
leaves the loss unchanged); everything after them is the un-normalized
tail (affine parameters, biases, plain dense layers).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class StructureError(ValueError):
    """Block structure of two vectors does not match."""


@dataclass
class ParamVector:
    blocks: list[np.ndarray]
    n1: int

    def __post_init__(self):
        if not 0 <= self.n1 <= len(self.blocks):
            raise StructureError(f"n1={self.n1} out of range for {len(self.blocks)} blocks")
        self.blocks = [np.asarray(b, dtype=float) for b in self.blocks]
        for i, b in enumerate(self.blocks):
            if b.ndim != 1 or b.size == 0:
                raise StructureError(f"block {i} must be a non-empty 1-d array")

    # -- structure -----------------------------------------------------

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def dim(self) -> int:
        return sum(b.size for b in self.blocks)

    def same_structure(self, other: "ParamVector") -> bool:
        return (
            self.n1 == other.n1
            and len(self.blocks) == len(other.blocks)
            and all(a.size == b.size for a, b in zip(self.blocks, other.blocks))
        )

    def check_same_structure(self, other: "ParamVector") -> None:
        if not self.same_structure(other):
            raise StructureError("mismatched block structure")

    def copy(self) -> "ParamVector":
        return ParamVector([b.copy() for b in self.blocks], self.n1)

    # -- flattening (block-major, fixed order) -------------------------

    def flat(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    def with_flat(self, values: np.ndarray) -> "ParamVector":
        """New vector with this block structure and the given flat values."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.dim,):
            raise StructureError(f"expected {self.dim} values, got {values.shape}")
        out, off = [], 0
        for b in self.blocks:
            out.append(values[off:off + b.size].copy())
            off += b.size
        return ParamVector(out, self.n1)

    def tail(self) -> np.ndarray:
        """Concatenation of the blocks after the first n1."""
        return np.concatenate(self.blocks[self.n1:]) if self.n1 < len(self.blocks) else np.empty(0)

    # -- norms ---------------------------------------------------------

    def block_norm(self, i: int) -> float:
        return float(np.linalg.norm(self.blocks[i]))

    def norm(self) -> float:
        return float(np.sqrt(sum(float(b @ b) for b in self.blocks)))

    def phi_norm(self) -> float:
        """Norm of any direction in the constraint set at this point."""
        return float(np.sqrt(sum(float(b @ b) for b in self.blocks[: self.n1]) + 1.0))

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other: "ParamVector") -> "ParamVector":
        self.check_same_structure(other)
        return ParamVector([a + b for a, b in zip(self.blocks, other.blocks)], self.n1)

    def __sub__(self, other: "ParamVector") -> "ParamVector":
        self.check_same_structure(other)
        return ParamVector([a - b for a, b in zip(self.blocks, other.blocks)], self.n1)

    def __mul__(self, c: float) -> "ParamVector":
        return ParamVector([c * b for b in self.blocks], self.n1)

    __rmul__ = __mul__

    def __neg__(self) -> "ParamVector":
        return self * -1.0

    def dot(self, other: "ParamVector") -> float:
        self.check_same_structure(other)
        return float(sum(float(a @ b) for a, b in zip(self.blocks, other.blocks)))

    def axpy(self, t: float, v: "ParamVector") -> "ParamVector":
        """self + t * v without building an intermediate."""
        self.check_same_structure(v)
        return ParamVector([a + t * b for a, b in zip(self.blocks, v.blocks)], self.n1)


def zeros_like(theta: ParamVector) -> ParamVector:
    return ParamVector([np.zeros_like(b) for b in theta.blocks], theta.n1)


def scale_transform(theta: ParamVector, a) -> ParamVector:
    """Rescale each normalized block i by a[i]; leave the tail untouched."""
    a = np.asarray(a, dtype=float)
    if a.shape != (theta.n1,):
        raise StructureError(f"expected {theta.n1} scale factors, got shape {a.shape}")
    if np.any(a <= 0):
        raise ValueError("scale factors must be strictly positive")
    blocks = [a[i] * b if i < theta.n1 else b.copy() for i, b in enumerate(theta.blocks)]
    return ParamVector(blocks, theta.n1)
