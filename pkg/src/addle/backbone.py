"""The shared network f(x, z): optional conv1d front end, rectified dense
layers, and a Frank-Hall head of K-1 logits, with codes injected at declared
layers.

Layer indices count the conv front end (if any) first, then each hidden dense
layer, then the head. A code injected at layer ``i`` is added to that layer's
pre-activation output.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from addle import ordinal
from addle import tensor as T
from addle.latent import LatentCodebook, code_shift

MODES = ("addle", "baseline", "multi-head", "jlsl")


@dataclass(frozen=True)
class ConvSpec:
    channels: int = 4
    kernel: int = 3


@dataclass(frozen=True)
class InjectionSpec:
    layer: int
    mode: str = "dense"


@dataclass(frozen=True)
class BackboneConfig:
    input_dim: int = 16
    hidden: tuple[int, ...] = (32, 32)
    num_classes: int = 4
    latent_dim: int = 10
    injections: tuple[InjectionSpec, ...] = (InjectionSpec(1, "dense"),)
    conv: ConvSpec | None = None
    n_heads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "injections", tuple(self.injections))
        self.validate()

    @property
    def n_layers(self) -> int:
        return (1 if self.conv else 0) + len(self.hidden) + 1

    def layer_kind(self, i: int) -> str:
        if self.conv and i == 0:
            return "conv"
        return "head" if i == self.n_layers - 1 else "dense"

    def layer_width(self, i: int) -> int:
        kind = self.layer_kind(i)
        if kind == "conv":
            return self.conv.channels
        if kind == "head":
            return self.n_heads * (self.num_classes - 1)
        return self.hidden[i - (1 if self.conv else 0)]

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden widths must be positive, got {self.hidden}")
        if self.latent_dim < 0:
            raise ValueError(f"latent_dim must be >= 0, got {self.latent_dim}")
        if self.n_heads < 1:
            raise ValueError(f"n_heads must be >= 1, got {self.n_heads}")
        if self.conv is not None and not 1 <= self.conv.kernel <= self.input_dim:
            raise ValueError(f"conv kernel {self.conv.kernel} must lie in [1, input_dim={self.input_dim}]")
        seen = set()
        for spec in self.injections:
            if not 0 <= spec.layer < self.n_layers:
                raise ValueError(f"injection layer {spec.layer} outside [0, {self.n_layers - 1}]")
            if spec.layer in seen:
                raise ValueError(f"more than one injection point at layer {spec.layer}")
            seen.add(spec.layer)
            want = "spatial" if self.layer_kind(spec.layer) == "conv" else "dense"
            if spec.mode != want:
                raise ValueError(f"layer {spec.layer} is {self.layer_kind(spec.layer)}; injection mode must be {want!r}")

    def without_latent(self) -> "BackboneConfig":
        return replace(self, injections=())


def _param_shapes(cfg: BackboneConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    width = cfg.input_dim
    for i in range(cfg.n_layers):
        kind = cfg.layer_kind(i)
        out = cfg.layer_width(i)
        if kind == "conv":
            shapes["conv.K"] = (out, 1, cfg.conv.kernel)
            shapes["conv.b"] = (out,)
            width = out * (cfg.input_dim - cfg.conv.kernel + 1)
        else:
            name = "head" if kind == "head" else f"dense{i}"
            shapes[f"{name}.W"] = (width, out)
            shapes[f"{name}.b"] = (out,)
            width = out
    for spec in cfg.injections:
        shapes[f"inject{spec.layer}.A"] = (cfg.layer_width(spec.layer), cfg.latent_dim)
    return shapes


def init_params(cfg: BackboneConfig, seed: int) -> dict[str, np.ndarray]:
    """He-normal weights, zero biases. Each tensor draws from its own stream
    keyed by name, so adding or removing injection points never perturbs the
    shared weights."""
    params = {}
    for name, shape in _param_shapes(cfg).items():
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        elif name.endswith(".A"):
            params[name] = rng.normal(0.0, 1.0 / np.sqrt(max(shape[1], 1)), size=shape)
        elif name == "conv.K":
            params[name] = rng.normal(0.0, np.sqrt(2.0 / shape[2]), size=shape)
        else:
            params[name] = rng.normal(0.0, np.sqrt(2.0 / shape[0]), size=shape)
    return params


def count_params(cfg: BackboneConfig) -> int:
    return int(sum(np.prod(s) for s in _param_shapes(cfg).values()))


def check_params(params: Mapping[str, np.ndarray], cfg: BackboneConfig) -> None:
    shapes = _param_shapes(cfg)
    if set(shapes) != set(params):
        raise ValueError(f"parameter names {sorted(params)} do not match config {sorted(shapes)}")
    for name, shape in shapes.items():
        got = np.shape(params[name].data if isinstance(params[name], T.Tensor) else params[name])
        if got != shape:
            raise ValueError(f"parameter {name}: expected shape {shape}, got {got}")


def forward_batch(
    params: Mapping[str, T.Tensor | np.ndarray],
    cfg: BackboneConfig,
    X,
    z_rows=None,
    heads=None,
) -> T.Tensor:
    """Logits of shape (B, K-1).

    ``z_rows`` holds one code per row (B, M); ``None`` runs the latent-free
    network. ``heads`` picks a head per row when ``cfg.n_heads > 1``.
    """
    P = {k: T.as_tensor(v) for k, v in params.items()}
    h = T.as_tensor(X)
    if h.data.ndim != 2 or h.shape[1] != cfg.input_dim:
        raise T.ShapeError(f"expected inputs of shape (B, {cfg.input_dim}), got {h.shape}")
    B = h.shape[0]
    if z_rows is not None:
        z_rows = T.as_tensor(z_rows)
        if z_rows.data.ndim != 2 or z_rows.shape != (B, cfg.latent_dim):
            raise T.ShapeError(f"expected code rows of shape ({B}, {cfg.latent_dim}), got {z_rows.shape}")
    injected = {spec.layer for spec in cfg.injections}

    for i in range(cfg.n_layers):
        kind = cfg.layer_kind(i)
        if kind == "conv":
            sig = T.reshape(h, (B, 1, cfg.input_dim))
            out = T.conv1d(sig, P["conv.K"], P["conv.b"])
            if z_rows is not None and i in injected:
                shift = code_shift(P[f"inject{i}.A"], z_rows, B)
                out = T.add(out, T.replicate(shift, out.shape[2]))
            h = T.reshape(T.relu(out), (B, out.shape[1] * out.shape[2]))
            continue
        name = "head" if kind == "head" else f"dense{i}"
        out = T.affine(h, P[f"{name}.W"], P[f"{name}.b"])
        if z_rows is not None and i in injected:
            out = T.add(out, code_shift(P[f"inject{i}.A"], z_rows, B))
        h = out if kind == "head" else T.relu(out)

    if cfg.n_heads > 1:
        if heads is None:
            raise ValueError("multi-head network needs a head index per row")
        h = T.select_heads(T.reshape(h, (B, cfg.n_heads, cfg.num_classes - 1)), heads)
    return h


def forward(params, cfg: BackboneConfig, x, z=None, head: int = 0) -> np.ndarray:
    """Single-sample logits, shape (K-1,)."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    z_rows = None if z is None else np.asarray(z, dtype=np.float64).reshape(1, -1)
    heads = None if cfg.n_heads == 1 else np.array([head])
    return forward_batch(params, cfg, x, z_rows, heads).data[0].copy()


@dataclass
class Model:
    """A trained network plus whatever conditions it on a rater.

    ``addle`` uses a codebook, ``multi-head`` a head per rater, ``baseline``
    neither (every rater maps to the same plain classifier).
    """

    cfg: BackboneConfig
    params: dict[str, np.ndarray]
    mode: str = "addle"
    codebook: LatentCodebook | None = None
    n_raters_: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def n_raters(self) -> int:
        if self.codebook is not None:
            return self.codebook.n_raters
        if self.mode == "multi-head":
            return self.cfg.n_heads
        return self.n_raters_

    def logits(self, X, raters=None, codes=None) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        if codes is not None:
            return forward_batch(self.params, self.cfg, X, np.broadcast_to(codes, (n, self.cfg.latent_dim))).data
        raters = np.zeros(n, dtype=np.int64) if raters is None else np.broadcast_to(np.asarray(raters, dtype=np.int64), (n,))
        if n and (raters.min() < 0 or raters.max() >= self.n_raters):
            raise IndexError(f"rater index outside [0, {self.n_raters - 1}]")
        if self.mode == "addle":
            return forward_batch(self.params, self.cfg, X, self.codebook.codes[raters]).data
        if self.mode == "multi-head":
            return forward_batch(self.params, self.cfg, X, None, raters).data
        return forward_batch(self.params, self.cfg, X).data

    def rater_scores(self, X, r: int) -> np.ndarray:
        return ordinal.scores(self.logits(X, r))

    def code_scores(self, X, z) -> np.ndarray:
        return ordinal.scores(self.logits(X, codes=np.asarray(z, dtype=np.float64)))

    def n_params(self) -> int:
        n = count_params(self.cfg)
        if self.codebook is not None:
            n += self.codebook.codes.size
        return n


@dataclass
class Ensemble:
    """One independent plain model per rater (the one-model-per-rater baseline)."""

    models: list[Model]
    mode: str = "jlsl"
    meta: dict = field(default_factory=dict)

    @property
    def n_raters(self) -> int:
        return len(self.models)

    @property
    def cfg(self) -> BackboneConfig:
        return self.models[0].cfg

    def logits(self, X, raters=None) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        raters = np.broadcast_to(np.asarray(0 if raters is None else raters, dtype=np.int64), (X.shape[0],))
        out = np.empty((X.shape[0], self.cfg.num_classes - 1))
        for r in np.unique(raters):
            if not 0 <= r < self.n_raters:
                raise IndexError(f"rater index {r} outside [0, {self.n_raters - 1}]")
            sel = raters == r
            out[sel] = self.models[r].logits(X[sel])
        return out

    def rater_scores(self, X, r: int) -> np.ndarray:
        if not 0 <= r < self.n_raters:
            raise IndexError(f"rater index {r} outside [0, {self.n_raters - 1}]")
        return self.models[r].rater_scores(X, 0)

    def n_params(self) -> int:
        return sum(m.n_params() for m in self.models)
