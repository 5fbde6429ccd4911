"""Differentiable loss oracles.

The main oracle is a small fully-connected classifier whose hidden layers
can be batch-normalized; normalization always uses the statistics of the
batch being evaluated, so with ``eps = 0`` the loss is exactly invariant
under positive rescaling of any normalized weight block.  Two analytic
oracles (linear and quadratic forms over the flattened parameters) serve
as closed-form test fixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .params import ParamVector, StructureError, scale_transform, zeros_like

__all__ = [
    "Batch",
    "NetworkSpec",
    "BnMlp",
    "AnalyticLinear",
    "AnalyticQuadratic",
    "DegenerateStatisticsError",
    "forward_loss",
    "grad_loss",
    "hvp",
    "save_checkpoint",
    "load_checkpoint",
    "scale_transform",
]

CHECKPOINT_FORMAT_VERSION = 1


class DegenerateStatisticsError(RuntimeError):
    """A normalized unit saw zero within-batch variance with eps = 0."""


@dataclass
class Batch:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.y = np.asarray(self.y, dtype=int)
        if self.x.shape[0] != self.y.shape[0]:
            raise StructureError("batch features and labels disagree on sample count")
        if self.x.shape[0] < 2:
            raise ValueError("a batch needs at least 2 samples for batch statistics")

    def __len__(self):
        return self.x.shape[0]


@dataclass(frozen=True)
class NetworkSpec:
    """Shape of a fully-connected classifier with optional per-layer normalization."""

    layer_sizes: tuple[int, ...]
    bn: tuple[bool, ...] = None
    activation: str = "relu"
    eps: float = 0.0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        bn = self.bn if self.bn is not None else tuple(True for _ in sizes[1:-1])
        bn = tuple(bool(b) for b in bn)
        if len(bn) != len(sizes) - 2:
            raise ValueError("one bn flag per hidden layer expected")
        object.__setattr__(self, "bn", bn)
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")

    @property
    def n_hidden(self) -> int:
        return len(self.layer_sizes) - 2

    @property
    def n1(self) -> int:
        """Number of normalized weight blocks (one per normalized neuron)."""
        return sum(w for w, is_bn in zip(self.layer_sizes[1:-1], self.bn) if is_bn)


def _act(z, kind):
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _act_grad(z, kind):
    return (z > 0).astype(float) if kind == "relu" else 1.0 - np.tanh(z) ** 2


class BnMlp:
    """Softmax cross-entropy classifier over a normalized MLP.

    Parameter layout (block-major, fixed): first every normalized neuron's
    incoming weight vector, layer by layer then neuron by neuron; then one
    tail block holding, per hidden layer, either (gamma, beta) for
    normalized layers or (weights, bias) for plain ones, followed by the
    output weights and bias.
    """

    def __init__(self, spec: NetworkSpec):
        self.spec = spec

    # -- parameter packing --------------------------------------------

    def init_params(self, seed: int = 0) -> ParamVector:
        rng = np.random.default_rng(seed)
        sizes, spec = self.spec.layer_sizes, self.spec
        bn_blocks, tail = [], []
        for li in range(spec.n_hidden):
            fan_in, width = sizes[li], sizes[li + 1]
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, width))
            if spec.bn[li]:
                bn_blocks.extend(w[:, j].copy() for j in range(width))
                tail.append(np.ones(width))   # gamma
                tail.append(np.zeros(width))  # beta
            else:
                tail.append(w.ravel())
                tail.append(np.zeros(width))  # bias
        fan_in, n_out = sizes[-2], sizes[-1]
        tail.append(rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, n_out)).ravel())
        tail.append(np.zeros(n_out))
        return ParamVector(bn_blocks + [np.concatenate(tail)], len(bn_blocks))

    def param_dim(self) -> int:
        sizes, spec = self.spec.layer_sizes, self.spec
        total = sizes[-2] * sizes[-1] + sizes[-1]
        for li in range(spec.n_hidden):
            fan_in, width = sizes[li], sizes[li + 1]
            total += fan_in * width + (2 * width if spec.bn[li] else width)
        return total

    def _unpack(self, theta: ParamVector):
        """Split theta into per-layer matrices; views where possible."""
        sizes, spec = self.spec.layer_sizes, self.spec
        if theta.n1 != spec.n1 or theta.dim != self.param_dim():
            raise StructureError("parameter vector does not match the network spec")
        layers, bi = [], 0
        tail, off = theta.blocks[-1], 0

        def take(n):
            nonlocal off
            out = tail[off:off + n]
            off += n
            return out

        for li in range(spec.n_hidden):
            fan_in, width = sizes[li], sizes[li + 1]
            if spec.bn[li]:
                w = np.stack(theta.blocks[bi:bi + width], axis=1)
                bi += width
                layers.append(("bn", w, take(width), take(width)))
            else:
                layers.append(("plain", take(fan_in * width).reshape(fan_in, width), take(width)))
        w_out = take(sizes[-2] * sizes[-1]).reshape(sizes[-2], sizes[-1])
        b_out = take(sizes[-1])
        return layers, w_out, b_out

    # -- forward / backward -------------------------------------------

    def _forward(self, theta: ParamVector, batch: Batch, need_cache: bool):
        spec = self.spec
        layers, w_out, b_out = self._unpack(theta)
        if batch.x.shape[1] != spec.layer_sizes[0]:
            raise StructureError("batch feature dimension does not match the network input")
        h, cache = batch.x, []
        for layer in layers:
            if layer[0] == "bn":
                _, w, gamma, beta = layer
                z = h @ w
                mean = z.mean(axis=0)
                var = z.var(axis=0)
                if spec.eps == 0.0 and np.any(var <= 0.0):
                    raise DegenerateStatisticsError(
                        "zero within-batch variance at a normalized unit with eps = 0")
                std = np.sqrt(var + spec.eps)
                zhat = (z - mean) / std
                pre = gamma * zhat + beta
            else:
                _, w, b = layer
                pre = h @ w + b
                std = zhat = None
            out = _act(pre, spec.activation)
            if need_cache:
                cache.append((h, std, zhat, pre))
            h = out
        logits = h @ w_out + b_out
        # stable log-softmax cross-entropy
        shifted = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        loss = float(np.mean(logz - shifted[np.arange(len(batch)), batch.y]))
        return loss, logits, (layers, w_out, b_out, h, cache)

    def loss(self, theta: ParamVector, batch: Batch) -> float:
        return self._forward(theta, batch, need_cache=False)[0]

    def logits(self, theta: ParamVector, batch: Batch) -> np.ndarray:
        return self._forward(theta, batch, need_cache=False)[1]

    def loss_and_grad(self, theta: ParamVector, batch: Batch):
        spec = self.spec
        loss, logits, (layers, w_out, b_out, h_last, cache) = self._forward(
            theta, batch, need_cache=True)
        n = len(batch)

        probs = np.exp(logits - logits.max(axis=1, keepdims=True))
        probs /= probs.sum(axis=1, keepdims=True)
        dlogits = probs
        dlogits[np.arange(n), batch.y] -= 1.0
        dlogits /= n

        g_wout = h_last.T @ dlogits
        g_bout = dlogits.sum(axis=0)
        dh = dlogits @ w_out.T

        bn_grads = [None] * theta.n1
        tail_parts = []
        bi = theta.n1
        for layer, (h_in, std, zhat, pre) in zip(reversed(layers), reversed(cache)):
            dpre = dh * _act_grad(pre, spec.activation)
            if layer[0] == "bn":
                _, w, gamma, beta = layer
                width = w.shape[1]
                g_gamma = (dpre * zhat).sum(axis=0)
                g_beta = dpre.sum(axis=0)
                dzhat = dpre * gamma
                # batch-statistics backward
                dz = (dzhat - dzhat.mean(axis=0)
                      - zhat * (dzhat * zhat).mean(axis=0)) / std
                g_w = h_in.T @ dz
                bi -= width
                for j in range(width):
                    bn_grads[bi + j] = g_w[:, j]
                tail_parts.append(np.concatenate([g_gamma, g_beta]))
                dh = dz @ w.T
            else:
                _, w, b = layer
                g_w = h_in.T @ dpre
                g_b = dpre.sum(axis=0)
                tail_parts.append(np.concatenate([g_w.ravel(), g_b]))
                dh = dpre @ w.T
        tail_parts.reverse()
        tail_parts.append(np.concatenate([g_wout.ravel(), g_bout]))
        grad = ParamVector(bn_grads + [np.concatenate(tail_parts)], theta.n1)
        return loss, grad

    # -- reporting -----------------------------------------------------

    def predict(self, theta: ParamVector, batch: Batch) -> np.ndarray:
        """Class predictions; normalization uses the given batch's statistics."""
        return np.argmax(self.logits(theta, batch), axis=1)

    def accuracy(self, theta: ParamVector, batch: Batch) -> float:
        return float(np.mean(self.predict(theta, batch) == batch.y))


class AnalyticLinear:
    """L(theta) = g . theta; constant gradient, zero Hessian."""

    def __init__(self, g: ParamVector):
        self.g = g

    def loss(self, theta: ParamVector, batch=None) -> float:
        return self.g.dot(theta)

    def loss_and_grad(self, theta: ParamVector, batch=None):
        return self.loss(theta), self.g.copy()


class AnalyticQuadratic:
    """L(theta) = 0.5 * flat(theta)^T A flat(theta) over the block-major flattening."""

    def __init__(self, a: np.ndarray, template: ParamVector):
        a = np.asarray(a, dtype=float)
        if a.shape != (template.dim, template.dim):
            raise StructureError("matrix size does not match the parameter dimension")
        self.a = 0.5 * (a + a.T)
        self.template = template

    def loss(self, theta: ParamVector, batch=None) -> float:
        x = theta.flat()
        return 0.5 * float(x @ self.a @ x)

    def loss_and_grad(self, theta: ParamVector, batch=None):
        x = theta.flat()
        return 0.5 * float(x @ self.a @ x), theta.with_flat(self.a @ x)


def forward_loss(oracle, theta: ParamVector, batch) -> float:
    return oracle.loss(theta, batch)


def grad_loss(oracle, theta: ParamVector, batch) -> ParamVector:
    return oracle.loss_and_grad(theta, batch)[1]


def hvp(oracle, theta: ParamVector, batch, w: ParamVector, step: float | None = None) -> ParamVector:
    """Hessian-vector product by central differencing of the gradient."""
    theta.check_same_structure(w)
    if step is None:
        step = 1e-4 * (1.0 + theta.norm())
    if step <= 0:
        raise ValueError("step must be positive")
    g_plus = grad_loss(oracle, theta.axpy(step, w), batch)
    g_minus = grad_loss(oracle, theta.axpy(-step, w), batch)
    return (g_plus - g_minus) * (0.5 / step)


# -- checkpoints -------------------------------------------------------

class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, spec: NetworkSpec, theta: ParamVector) -> None:
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "network": {
            "layer_sizes": list(spec.layer_sizes),
            "bn": list(spec.bn),
            "activation": spec.activation,
            "eps": spec.eps,
        },
        "n1": theta.n1,
        "blocks": [b.tolist() for b in theta.blocks],
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> tuple[NetworkSpec, ParamVector]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format_version {version!r} "
            f"(expected {CHECKPOINT_FORMAT_VERSION})")
    try:
        net = doc["network"]
        spec = NetworkSpec(
            layer_sizes=tuple(net["layer_sizes"]),
            bn=tuple(net["bn"]),
            activation=net["activation"],
            eps=float(net["eps"]),
        )
        theta = ParamVector([np.asarray(b, dtype=float) for b in doc["blocks"]], int(doc["n1"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    return spec, theta
