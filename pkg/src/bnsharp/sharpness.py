"""Sharpness measures.

The headline quantity is a one-dimensional L^p integral of loss
differences along a direction drawn from the constraint set at theta,
maximized over directions by gradient ascent on the product of spheres.
Also here: the Monte Carlo ball sharpness it replaces (which is not scale
invariant), the Hessian-trace estimator, and the closed-form small-delta
limit of the directional norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .manifold import check_membership, direction_step, make_direction
from .network import grad_loss, hvp
from .params import ParamVector
from .quadrature import simpson_nodes_weights
from .regularizer import h2, quadrature_grad_v

__all__ = [
    "SharpnessConfig",
    "directional_integral",
    "init_direction",
    "search_direction",
    "bn_sharpness",
    "lp_ball_sharpness_mc",
    "trace_sharpness",
    "small_delta_limit",
    "measurement_report",
]


@dataclass
class SharpnessConfig:
    delta: float = 0.001
    p: int = 2
    quad_points: int = 33
    k1: int = 5
    search_step: float = 0.1
    direction_grad_mode: str = "approx"

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.p < 2 or self.p % 2:
            raise ValueError("p must be a positive even integer")
        if self.quad_points < 3 or self.quad_points % 2 == 0:
            raise ValueError("quad_points must be odd and >= 3")
        if self.k1 < 0:
            raise ValueError("k1 must be non-negative")
        if self.search_step <= 0:
            raise ValueError("search_step must be positive")
        if self.direction_grad_mode not in ("approx", "quadrature"):
            raise ValueError(f"unknown direction_grad_mode {self.direction_grad_mode!r}")


def directional_integral(oracle, theta: ParamVector, v: ParamVector,
                         cfg: SharpnessConfig, batch) -> tuple[float, float]:
    """Normalized L^p integral of the loss difference along theta + t v.

    Returns (inner, norm) with norm = inner ** (1/p).
    """
    check_membership(theta, v, rtol=1e-6)
    nodes, weights = simpson_nodes_weights(-cfg.delta, cfg.delta, cfg.quad_points)
    loss0 = oracle.loss(theta, batch)
    total = 0.0
    for idx, (t, w) in enumerate(zip(nodes, weights)):
        if t == 0.0:
            continue
        try:
            diff = oracle.loss(theta.axpy(t, v), batch) - loss0
        except Exception as exc:
            raise RuntimeError(f"loss evaluation failed at quadrature node {idx} "
                               f"(t={t})") from exc
        total += w * abs(diff) ** cfg.p
    inner = total / cfg.delta ** (cfg.p + 1)
    inner = max(inner, 0.0)
    return inner, inner ** (1.0 / cfg.p)


def init_direction(oracle, theta: ParamVector, batch, seed: int = 0) -> ParamVector:
    """Gradient-aligned member of the constraint set.

    Blocks where the gradient (nearly) vanishes fall back to a seeded
    random draw so the result is always well defined and deterministic.
    """
    rng = np.random.default_rng(seed)
    g = grad_loss(oracle, theta, batch)
    return make_direction(theta, g, rng=rng)


def search_direction(oracle, theta: ParamVector, cfg: SharpnessConfig, batch,
                     seed: int = 0, return_history: bool = False):
    """Ascent search for the sharpest direction; returns the best (v, inner).

    The reported pair is the best over the init direction and all k1
    iterates, so the result never falls below the init value.
    """
    v = init_direction(oracle, theta, batch, seed=seed)
    inner, _ = directional_integral(oracle, theta, v, cfg, batch)
    best_v, best_inner = v, inner
    history = [best_inner]
    g_center = grad_loss(oracle, theta, batch) if cfg.k1 > 0 else None
    for _ in range(cfg.k1):
        if cfg.direction_grad_mode == "approx":
            g = h2(oracle, theta, v, cfg.delta, cfg.p, batch, g_center=g_center)
        else:
            g = quadrature_grad_v(oracle, theta, v, cfg.delta, cfg.p, batch,
                                  quad_points=cfg.quad_points)
        v = direction_step(v, g, theta, cfg.search_step, normalize=True)
        inner, _ = directional_integral(oracle, theta, v, cfg, batch)
        if inner > best_inner:
            best_v, best_inner = v, inner
        history.append(best_inner)
    if return_history:
        return best_v, best_inner, history
    return best_v, best_inner


def bn_sharpness(oracle, theta: ParamVector, cfg: SharpnessConfig, batch,
                 seed: int = 0) -> float:
    """Best-found directional norm; a lower bound on the true supremum."""
    _, inner = search_direction(oracle, theta, cfg, batch, seed=seed)
    return inner ** (1.0 / cfg.p)


def lp_ball_sharpness_mc(oracle, theta: ParamVector, delta: float, p, n_samples: int,
                         batch, seed: int = 0, include_denominator: bool = False) -> float:
    """Monte Carlo L^p sharpness over the Euclidean ball of radius delta.

    p = math.inf gives the sample maximum of |L(theta') - L(theta)|.  For
    finite p the Lebesgue integral is estimated as ball volume times the
    sample mean of |difference|^p, then taken to the 1/p power.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if delta <= 0:
        raise ValueError("delta must be positive")
    rng = np.random.default_rng(seed)
    n = theta.dim
    loss0 = oracle.loss(theta, batch)
    flat0 = theta.flat()
    diffs = np.empty(n_samples)
    for i in range(n_samples):
        u = rng.standard_normal(n)
        u *= delta * rng.random() ** (1.0 / n) / np.linalg.norm(u)
        diffs[i] = abs(oracle.loss(theta.with_flat(flat0 + u), batch) - loss0)
    if p == math.inf:
        value = float(diffs.max())
    else:
        p = int(p)
        if p < 1:
            raise ValueError("p must be >= 1 or infinity")
        mean = float(np.mean(diffs ** p))
        if mean == 0.0:
            value = 0.0
        else:
            log_volume = 0.5 * n * math.log(math.pi) + n * math.log(delta) \
                - math.lgamma(0.5 * n + 1.0)
            value = math.exp((log_volume + math.log(mean)) / p)
    if include_denominator:
        value /= 1.0 + loss0
    return value


def trace_sharpness(oracle, theta: ParamVector, batch, n_probes: int = 256,
                    seed: int = 0, step: float | None = None,
                    return_stderr: bool = False):
    """Hutchinson estimate of the Hessian trace with Rademacher probes."""
    if n_probes < 1:
        raise ValueError("need at least one probe")
    rng = np.random.default_rng(seed)
    samples = np.empty(n_probes)
    for i in range(n_probes):
        r = theta.with_flat(rng.integers(0, 2, size=theta.dim) * 2.0 - 1.0)
        samples[i] = r.dot(hvp(oracle, theta, batch, r, step=step))
    estimate = float(samples.mean())
    if return_stderr:
        stderr = float(samples.std(ddof=1) / math.sqrt(n_probes)) if n_probes > 1 else 0.0
        return estimate, stderr
    return estimate


def small_delta_limit(oracle, theta: ParamVector, v: ParamVector, p: int,
                      batch) -> float:
    """Closed-form limit of the directional norm as delta goes to zero."""
    check_membership(theta, v, rtol=1e-6)
    g = grad_loss(oracle, theta, batch)
    return (2.0 / (p + 1)) ** (1.0 / p) * abs(g.dot(v))


def measurement_report(oracle, theta: ParamVector, cfg: SharpnessConfig, batch,
                       seed: int = 0, mc_p=math.inf, mc_delta: float | None = None,
                       mc_samples: int = 1000, trace_probes: int = 64) -> dict:
    """All measures on one parameter point, as a serializable document."""
    v, inner = search_direction(oracle, theta, cfg, batch, seed=seed)
    mc_delta = cfg.delta if mc_delta is None else mc_delta
    mc_value = lp_ball_sharpness_mc(oracle, theta, mc_delta, mc_p, mc_samples,
                                    batch, seed=seed)
    trace = trace_sharpness(oracle, theta, batch, n_probes=trace_probes, seed=seed)
    return {
        "delta": cfg.delta,
        "p": cfg.p,
        "k1": cfg.k1,
        "bn_sharpness": inner ** (1.0 / cfg.p),
        "inner": inner,
        "lp_mc": {
            "p": "inf" if mc_p == math.inf else int(mc_p),
            "value": mc_value,
            "n_samples": mc_samples,
        },
        "trace": {"estimate": trace, "n_probes": trace_probes},
        "seed": seed,
    }
