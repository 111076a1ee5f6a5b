"""Experiment configuration: an INI file with one section per concern.

Unknown sections or keys and malformed values raise :class:`ConfigError`
naming the offending ``section.key``. Every key is optional; the defaults
below are the desk-scale experiment.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from addle.backbone import MODES, BackboneConfig, ConvSpec, InjectionSpec
from addle.sim import SimHyper
from addle.trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_samples: int = 4000
    n_raters: int = 8
    sigma_delta: float = 0.5
    sigma_w: float = 0.3
    sigma_eps: float = 0.3
    plant_oracle: bool = True
    oracle_index: int = 0
    group_size: int = 1
    assignment: str = "power-law"
    exponent: float = 1.0
    nonlinear: float = 0.0

    def hyper(self) -> SimHyper:
        return SimHyper(self.sigma_delta, self.sigma_w, self.sigma_eps, self.plant_oracle, self.oracle_index)


@dataclass(frozen=True)
class EvalConfig:
    fpr_max: float = 0.30
    cutoffs: tuple[int, ...] = (0, 1, 2)
    greedy_metric: str = "jt"
    greedy_max: int = 0
    finetune: bool = True


@dataclass(frozen=True)
class SplitConfig:
    train: float = 0.7
    val_stop: float = 0.1
    val_gold: float = 0.1
    test: float = 0.1

    def fractions(self) -> tuple[float, float, float, float]:
        return (self.train, self.val_stop, self.val_gold, self.test)


@dataclass(frozen=True)
class AnalysisConfig:
    alpha_min: float = 0.0
    alpha_max: float = 1.0
    alpha_points: int = 11
    lambda_points: int = 11
    components: tuple[int, ...] = (0,)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    modes: tuple[str, ...] = MODES
    simulator: SimConfig = field(default_factory=SimConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed, train=replace(self.train, seed=seed))

    def digest(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()[:16]


# ---------------------------------------------------------------- parsing


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _parse_ints(s: str) -> tuple[int, ...]:
    if s.strip().lower() == "none":
        return ()
    return tuple(int(p) for p in s.replace(" ", "").split(",") if p)


def _parse_injections(s: str) -> tuple[InjectionSpec, ...]:
    out = []
    for part in s.replace(" ", "").split(","):
        if not part or part.lower() == "none":
            continue
        mode, _, layer = part.partition("@")
        if not layer:
            raise ValueError(f"injection {part!r} must look like dense@1 or spatial@0")
        out.append(InjectionSpec(int(layer), mode))
    return tuple(out)


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        if v and isinstance(v[0], InjectionSpec):
            return ", ".join(f"{s.mode}@{s.layer}" for s in v)
        return ", ".join(str(x) for x in v) if v else "none"
    return str(v)


def _coerce(cls, section: str, items: dict[str, str]) -> dict:
    known = {f.name: f for f in fields(cls)}
    out = {}
    defaults = cls()
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"{section}.{key}: unknown key (expected one of {', '.join(known)})")
        ref = getattr(defaults, key)
        try:
            if isinstance(ref, bool):
                out[key] = _parse_bool(raw)
            elif isinstance(ref, int):
                out[key] = int(raw)
            elif isinstance(ref, float):
                out[key] = float(raw)
            elif isinstance(ref, tuple):
                out[key] = tuple(p.strip() for p in raw.split(",") if p.strip()) if key == "modes" else _parse_ints(raw)
            else:
                out[key] = raw.strip()
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: {exc}") from None
    return out


_BACKBONE_KEYS = ("input_dim", "hidden", "num_classes", "latent_dim", "injections", "conv_channels", "conv_kernel")


def _backbone_from(items: dict[str, str]) -> BackboneConfig:
    kw = {}
    conv_channels, conv_kernel = 0, 3
    for key, raw in items.items():
        try:
            if key in ("input_dim", "num_classes", "latent_dim"):
                kw[key] = int(raw)
            elif key == "hidden":
                kw[key] = _parse_ints(raw)
            elif key == "injections":
                kw[key] = _parse_injections(raw)
            elif key == "conv_channels":
                conv_channels = int(raw)
            elif key == "conv_kernel":
                conv_kernel = int(raw)
            else:
                raise ConfigError(f"backbone.{key}: unknown key (expected one of {', '.join(_BACKBONE_KEYS)})")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"backbone.{key}: {exc}") from None
    if conv_channels:
        kw["conv"] = ConvSpec(conv_channels, conv_kernel)
    try:
        return BackboneConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"backbone: {exc}") from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    sections = {"experiment", "simulator", "backbone", "train", "eval", "split", "analysis"}
    for name in cp.sections():
        if name not in sections:
            raise ConfigError(f"{name}: unknown section (expected one of {', '.join(sorted(sections))})")

    def items(name):
        return dict(cp.items(name)) if cp.has_section(name) else {}

    exp = items("experiment")
    for key in exp:
        if key not in ("seed", "modes"):
            raise ConfigError(f"experiment.{key}: unknown key (expected seed, modes)")
    try:
        seed = int(exp.get("seed", "0"))
    except ValueError as exc:
        raise ConfigError(f"experiment.seed: {exc}") from None
    modes = tuple(m.strip() for m in exp.get("modes", ",".join(MODES)).split(",") if m.strip())
    for m in modes:
        if m not in MODES:
            raise ConfigError(f"experiment.modes: unknown mode {m!r} (expected a subset of {', '.join(MODES)})")

    def build(cls, name):
        try:
            return cls(**_coerce(cls, name, items(name)))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{name}: {exc}") from None

    sim_cfg = build(SimConfig, "simulator")
    backbone = _backbone_from(items("backbone"))
    train_items = _coerce(TrainConfig, "train", items("train"))
    if "seed" in train_items or "mode" in train_items:
        raise ConfigError("train: seed and mode come from [experiment], not [train]")
    try:
        train = TrainConfig(**train_items, seed=seed)
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from None
    ev = build(EvalConfig, "eval")
    split = build(SplitConfig, "split")
    an = build(AnalysisConfig, "analysis")
    cfg = ExperimentConfig(seed, modes, sim_cfg, backbone, train, ev, split, an)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    s = cfg.simulator
    if s.n_samples < 1:
        raise ConfigError("simulator.n_samples: must be >= 1")
    if s.n_raters < 1:
        raise ConfigError("simulator.n_raters: must be >= 1")
    if s.group_size < 1:
        raise ConfigError("simulator.group_size: must be >= 1")
    if s.assignment not in ("uniform", "power-law"):
        raise ConfigError("simulator.assignment: must be 'uniform' or 'power-law'")
    if min(s.sigma_delta, s.sigma_w, s.sigma_eps) < 0:
        raise ConfigError("simulator: noise scales must be non-negative")
    if s.plant_oracle and not 0 <= s.oracle_index < s.n_raters:
        raise ConfigError("simulator.oracle_index: must name an existing rater")
    fr = cfg.split.fractions()
    if any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError(f"split: fractions must be positive and sum to 1, got {fr}")
    e = cfg.eval
    if not 0 < e.fpr_max <= 1:
        raise ConfigError("eval.fpr_max: must lie in (0, 1]")
    K = cfg.backbone.num_classes
    if any(not 0 <= k < K - 1 for k in e.cutoffs):
        raise ConfigError(f"eval.cutoffs: each cutoff must lie in [0, {K - 2}]")
    if e.greedy_max < 0:
        raise ConfigError("eval.greedy_max: must be >= 0 (0 = no limit)")
    a = cfg.analysis
    if a.alpha_points < 2 or a.lambda_points < 2:
        raise ConfigError("analysis: need at least two grid points")
    if any(not 0 <= c < max(cfg.backbone.latent_dim, 1) for c in a.components):
        raise ConfigError("analysis.components: component index out of range")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical INI text; ``parse_config(dump_config(c)) == c``."""
    lines = ["[experiment]", f"seed = {cfg.seed}", f"modes = {', '.join(cfg.modes)}", ""]
    for name, obj in (("simulator", cfg.simulator),):
        lines.append(f"[{name}]")
        lines += [f"{f.name} = {_fmt_value(getattr(obj, f.name))}" for f in fields(obj)]
        lines.append("")
    b = cfg.backbone
    lines += [
        "[backbone]",
        f"input_dim = {b.input_dim}",
        f"hidden = {_fmt_value(b.hidden)}",
        f"num_classes = {b.num_classes}",
        f"latent_dim = {b.latent_dim}",
        f"injections = {_fmt_value(b.injections)}",
        f"conv_channels = {b.conv.channels if b.conv else 0}",
        f"conv_kernel = {b.conv.kernel if b.conv else 3}",
        "",
        "[train]",
    ]
    lines += [f"{f.name} = {_fmt_value(getattr(cfg.train, f.name))}" for f in fields(cfg.train) if f.name not in ("seed", "mode")]
    lines.append("")
    for name, obj in (("eval", cfg.eval), ("split", cfg.split), ("analysis", cfg.analysis)):
        lines.append(f"[{name}]")
        lines += [f"{f.name} = {_fmt_value(getattr(obj, f.name))}" for f in fields(obj)]
        lines.append("")
    return "\n".join(lines)
