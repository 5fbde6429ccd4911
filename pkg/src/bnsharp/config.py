"""Run configuration files.

Plain INI text with sections [network], [sharpness], [regularizer],
[train], [data].  Every key has a documented default; unknown sections or
keys are rejected so typos fail loudly.  The fully resolved configuration
(defaults applied) can be re-serialized, and commands echo it into their
output directory.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

from .data import Dataset, DatasetError, gen_blobs, gen_spirals, load_csv
from .network import NetworkSpec
from .optimizer import TrainConfig
from .regularizer import RegularizerConfig
from .sharpness import SharpnessConfig

__all__ = ["ConfigError", "DataConfig", "MeasureConfig", "RunConfig",
           "load_config", "default_config_text"]


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    kind: str = "spirals"
    seed: int = 0
    n_per_class: int = 500
    n_classes: int = 2
    turns: float = 1.5
    noise_sigma: float = 0.15
    path: str = ""
    standardize: bool = False

    def make_dataset(self) -> Dataset:
        if self.kind == "spirals":
            return gen_spirals(self.seed, self.n_per_class, self.turns, self.noise_sigma)
        if self.kind == "blobs":
            return gen_blobs(self.seed, self.n_per_class, self.n_classes, self.noise_sigma)
        if self.kind == "csv":
            if not self.path:
                raise ConfigError("data kind 'csv' needs a path")
            return load_csv(self.path, standardize_features=self.standardize,
                            seed=self.seed)
        raise ConfigError(f"unknown data kind {self.kind!r}")


@dataclass
class MeasureConfig:
    mc_delta: float = 0.05
    mc_p: object = math.inf
    mc_samples: int = 1000
    trace_probes: int = 64


@dataclass
class RunConfig:
    network: NetworkSpec
    sharpness: SharpnessConfig
    reg: RegularizerConfig
    train: TrainConfig
    data: DataConfig
    measure: MeasureConfig

    def resolved_text(self) -> str:
        """The full configuration with every default made explicit."""
        net, s, r, t, d, m = (self.network, self.sharpness, self.reg,
                              self.train, self.data, self.measure)
        mc_p = "inf" if m.mc_p == math.inf else str(m.mc_p)
        return "\n".join([
            "[network]",
            f"layer_sizes = {','.join(map(str, net.layer_sizes))}",
            f"bn = {','.join('true' if b else 'false' for b in net.bn)}",
            f"activation = {net.activation}",
            f"eps = {net.eps:.17g}",
            "",
            "[sharpness]",
            f"delta = {s.delta:.17g}",
            f"p = {s.p}",
            f"quad_points = {s.quad_points}",
            f"k1 = {s.k1}",
            f"search_step = {s.search_step:.17g}",
            f"direction_grad_mode = {s.direction_grad_mode}",
            f"mc_delta = {m.mc_delta:.17g}",
            f"mc_p = {mc_p}",
            f"mc_samples = {m.mc_samples}",
            f"trace_probes = {m.trace_probes}",
            "",
            "[regularizer]",
            f"lambda = {r.lam:.17g}",
            f"clip_norm = {r.clip_norm:.17g}",
            f"h1_form = {r.h1_form}",
            "",
            "[train]",
            f"algo = {t.algo}",
            f"lr = {t.lr:.17g}",
            f"momentum = {t.momentum:.17g}",
            f"weight_decay = {t.weight_decay:.17g}",
            f"batch_size = {t.batch_size}",
            f"epochs = {t.epochs}",
            f"lr_decay_epochs = {','.join(map(str, t.lr_decay_epochs))}",
            f"lr_decay_factor = {t.lr_decay_factor:.17g}",
            f"lambda0 = {t.lambda0:.17g}",
            f"lambda_growth = {t.lambda_growth:.17g}",
            f"seed = {t.seed}",
            "",
            "[data]",
            f"kind = {d.kind}",
            f"seed = {d.seed}",
            f"n_per_class = {d.n_per_class}",
            f"n_classes = {d.n_classes}",
            f"turns = {d.turns:.17g}",
            f"noise_sigma = {d.noise_sigma:.17g}",
            f"path = {d.path}",
            f"standardize = {'true' if d.standardize else 'false'}",
            "",
        ])


def _as_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _int_list(s: str):
    s = s.strip()
    return tuple(int(x) for x in s.split(",")) if s else ()


class _Section:
    def __init__(self, name: str, items: dict):
        self.name = name
        self.items = dict(items)

    def pop(self, key, conv, default):
        if key not in self.items:
            return default
        raw = self.items.pop(key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{self.name}] {key} = {raw!r}: {exc}") from None

    def finish(self):
        if self.items:
            raise ConfigError(f"unknown keys in [{self.name}]: "
                              f"{', '.join(sorted(self.items))}")


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    known = {"network", "sharpness", "regularizer", "train", "data"}
    extra = set(parser.sections()) - known
    if extra:
        raise ConfigError(f"{path}: unknown sections: {', '.join(sorted(extra))}")

    def section(name):
        return _Section(name, parser[name] if parser.has_section(name) else {})

    sec = section("network")
    layer_sizes = sec.pop("layer_sizes", _int_list, (2, 16, 16, 2))
    bn = sec.pop("bn", lambda s: tuple(_as_bool(x) for x in s.split(",")),
                 tuple(True for _ in layer_sizes[1:-1]))
    try:
        network = NetworkSpec(
            layer_sizes=layer_sizes,
            bn=bn,
            activation=sec.pop("activation", str.strip, "relu"),
            eps=sec.pop("eps", float, 1e-5),
        )
    except ValueError as exc:
        raise ConfigError(f"[network]: {exc}") from None
    sec.finish()

    sec = section("sharpness")
    measure = MeasureConfig(
        mc_delta=sec.pop("mc_delta", float, 0.05),
        mc_p=sec.pop("mc_p", lambda s: math.inf if s.strip() == "inf" else int(s),
                     math.inf),
        mc_samples=sec.pop("mc_samples", int, 1000),
        trace_probes=sec.pop("trace_probes", int, 64),
    )
    try:
        sharp = SharpnessConfig(
            delta=sec.pop("delta", float, 0.001),
            p=sec.pop("p", int, 2),
            quad_points=sec.pop("quad_points", int, 33),
            k1=sec.pop("k1", int, 5),
            search_step=sec.pop("search_step", float, 0.1),
            direction_grad_mode=sec.pop("direction_grad_mode", str.strip, "approx"),
        )
    except ValueError as exc:
        raise ConfigError(f"[sharpness]: {exc}") from None
    sec.finish()

    sec = section("regularizer")
    try:
        reg = RegularizerConfig(
            lam=sec.pop("lambda", float, 1e-4),
            clip_norm=sec.pop("clip_norm", float, 0.1),
            h1_form=sec.pop("h1_form", str.strip, "difference"),
        )
    except ValueError as exc:
        raise ConfigError(f"[regularizer]: {exc}") from None
    sec.finish()

    sec = section("train")
    try:
        train = TrainConfig(
            algo=sec.pop("algo", str.strip, "sgd"),
            lr=sec.pop("lr", float, 0.2),
            momentum=sec.pop("momentum", float, 0.9),
            weight_decay=sec.pop("weight_decay", float, 5e-4),
            batch_size=sec.pop("batch_size", int, 128),
            epochs=sec.pop("epochs", int, 10),
            lr_decay_epochs=sec.pop("lr_decay_epochs", _int_list, (60, 120, 160)),
            lr_decay_factor=sec.pop("lr_decay_factor", float, 0.1),
            lambda0=sec.pop("lambda0", float, 1e-4),
            lambda_growth=sec.pop("lambda_growth", float, 1.02),
            seed=sec.pop("seed", int, 0),
            sharpness=sharp,
            reg=reg,
        )
    except ValueError as exc:
        raise ConfigError(f"[train]: {exc}") from None
    sec.finish()

    sec = section("data")
    try:
        data = DataConfig(
            kind=sec.pop("kind", str.strip, "spirals"),
            seed=sec.pop("seed", int, 0),
            n_per_class=sec.pop("n_per_class", int, 500),
            n_classes=sec.pop("n_classes", int, 2),
            turns=sec.pop("turns", float, 1.5),
            noise_sigma=sec.pop("noise_sigma", float, 0.15),
            path=sec.pop("path", str.strip, ""),
            standardize=sec.pop("standardize", _as_bool, False),
        )
    except (ValueError, DatasetError) as exc:
        raise ConfigError(f"[data]: {exc}") from None
    sec.finish()

    return RunConfig(network=network, sharpness=sharp, reg=reg, train=train,
                     data=data, measure=measure)


def default_config_text() -> str:
    """A minimal config file; loading it yields all defaults."""
    return "[network]\n\n[sharpness]\n\n[regularizer]\n\n[train]\n\n[data]\n"
