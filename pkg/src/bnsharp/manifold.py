"""Geometry of the product of scaled spheres that carries search directions.

A direction at a point theta keeps each normalized block on the sphere of
radius ||theta_i|| and its concatenated tail on the unit sphere.  Tangent
projection and retraction on a single sphere of radius r:

    P_x(eta)    = eta - x (x . eta) / r^2
    Retr_x(eta) = r (x + eta) / ||x + eta||
"""

from __future__ import annotations

import numpy as np

from .params import ParamVector, StructureError

__all__ = [
    "SingularRetractionError",
    "project_tangent",
    "retract",
    "make_direction",
    "check_membership",
    "direction_step",
]

_TINY = 1e-30


class SingularRetractionError(ZeroDivisionError):
    """x + eta vanished; the caller must re-draw instead of renormalizing zero."""


def _check_radius(x: np.ndarray, r: float) -> None:
    if r <= 0:
        raise ValueError("sphere radius must be positive")
    nx = np.linalg.norm(x)
    if abs(nx - r) > 1e-6 * r:
        raise ValueError(f"point norm {nx} deviates from radius {r}")


def project_tangent(x: np.ndarray, eta: np.ndarray, r: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if eta.shape != x.shape:
        raise StructureError("tangent argument shape does not match the point")
    _check_radius(x, r)
    return eta - x * (float(x @ eta) / (r * r))


def retract(x: np.ndarray, eta: np.ndarray, r: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if eta.shape != x.shape:
        raise StructureError("tangent argument shape does not match the point")
    _check_radius(x, r)
    moved = x + eta
    norm = np.linalg.norm(moved)
    if norm == 0.0:
        raise SingularRetractionError("retraction of the antipodal step is undefined")
    return moved * (r / norm)


def make_direction(theta: ParamVector, raw: ParamVector, rng=None) -> ParamVector:
    """Rescale a raw vector onto the constraint set at theta.

    Each normalized block is scaled to radius ||theta_i||; the tail blocks
    are jointly scaled to unit norm.  A (near-)zero block is replaced by a
    draw from rng, which must then be provided.
    """
    theta.check_same_structure(raw)
    blocks = []
    for i in range(theta.n1):
        r = theta.block_norm(i)
        if r <= 0:
            raise ValueError(f"normalized block {i} of theta has zero norm; "
                             "the constraint set is undefined there")
        b = raw.blocks[i]
        nb = np.linalg.norm(b)
        if nb < 1e-12:
            if rng is None:
                raise ValueError("zero block with no rng to redraw from")
            b = rng.standard_normal(b.size)
            nb = np.linalg.norm(b)
        blocks.append(b * (r / nb))
    tail = np.concatenate([raw.blocks[i] for i in range(theta.n1, theta.n_blocks)])
    nt = np.linalg.norm(tail)
    if nt < 1e-12:
        if rng is None:
            raise ValueError("zero tail with no rng to redraw from")
        tail = rng.standard_normal(tail.size)
        nt = np.linalg.norm(tail)
    tail = tail / nt
    off = 0
    for i in range(theta.n1, theta.n_blocks):
        size = theta.blocks[i].size
        blocks.append(tail[off:off + size])
        off += size
    return ParamVector(blocks, theta.n1)


def check_membership(theta: ParamVector, v: ParamVector, rtol: float = 1e-9) -> None:
    theta.check_same_structure(v)
    for i in range(theta.n1):
        r = theta.block_norm(i)
        if abs(v.block_norm(i) - r) > rtol * max(r, 1.0):
            raise ValueError(f"direction block {i} is off its sphere")
    nt = np.linalg.norm(v.tail())
    if abs(nt - 1.0) > rtol:
        raise ValueError("direction tail is not unit norm")


def direction_step(v: ParamVector, g: ParamVector, theta: ParamVector,
                   step: float, normalize: bool = False) -> ParamVector:
    """One ascent step of the direction along g, sphere by sphere.

    Each block moves by step * P(g) and is retracted back to its sphere.
    With normalize=True the tangent component is instead rescaled to
    length step * radius, so progress is commensurate with each sphere's
    size regardless of the gradient's magnitude.  A block with no tangent
    component is left where it is.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    v.check_same_structure(g)

    def tangent_step(tang, r):
        if normalize:
            return tang * (step * r / max(np.linalg.norm(tang), _TINY))
        return step * tang

    blocks = []
    for i in range(theta.n1):
        r = theta.block_norm(i)
        tang = project_tangent(v.blocks[i], g.blocks[i], r)
        blocks.append(retract(v.blocks[i], tangent_step(tang, r), r))
    if theta.n1 < theta.n_blocks:
        vt = v.tail()
        gt = np.concatenate([g.blocks[i] for i in range(theta.n1, theta.n_blocks)])
        tang = project_tangent(vt, gt, 1.0)
        new_tail = retract(vt, tangent_step(tang, 1.0), 1.0)
        off = 0
        for i in range(theta.n1, theta.n_blocks):
            size = theta.blocks[i].size
            blocks.append(new_tail[off:off + size])
            off += size
    return ParamVector(blocks, theta.n1)
