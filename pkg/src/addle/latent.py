"""Per-rater latent codes, their Gaussian prior, and injection into layers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from addle import tensor as T

DEFAULT_LATENT_DIM = 10
DEFAULT_SIGMA2 = 1.0


@dataclass
class LatentCodebook:
    """R x M matrix of rater codes with an isotropic N(0, sigma2 I) prior."""

    codes: np.ndarray
    sigma2: float = DEFAULT_SIGMA2
    rater_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.codes = np.array(self.codes, dtype=np.float64)
        if self.codes.ndim != 2:
            raise ValueError(f"codes must be an R x M matrix, got shape {self.codes.shape}")
        if self.codes.shape[0] < 1:
            raise ValueError("codebook needs at least one rater")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not np.all(np.isfinite(self.codes)):
            raise ValueError("codebook contains non-finite entries")
        if not self.rater_ids:
            self.rater_ids = tuple(str(r) for r in range(self.codes.shape[0]))
        self.rater_ids = tuple(str(r) for r in self.rater_ids)
        if len(self.rater_ids) != self.codes.shape[0]:
            raise ValueError(f"{len(self.rater_ids)} rater ids for {self.codes.shape[0]} code rows")
        if len(set(self.rater_ids)) != len(self.rater_ids):
            raise ValueError("rater ids must be unique")

    @property
    def n_raters(self) -> int:
        return self.codes.shape[0]

    @property
    def dim(self) -> int:
        return self.codes.shape[1]

    def index_of(self, rater_id) -> int:
        try:
            return self.rater_ids.index(str(rater_id))
        except ValueError:
            raise KeyError(f"unknown rater id {rater_id!r}") from None

    def copy(self) -> "LatentCodebook":
        return LatentCodebook(self.codes.copy(), self.sigma2, self.rater_ids)


def init_codes(
    R: int,
    M: int = DEFAULT_LATENT_DIM,
    sigma2: float = DEFAULT_SIGMA2,
    seed: int = 0,
    rater_ids: Sequence[str] | None = None,
) -> LatentCodebook:
    """Draw every code entry i.i.d. from N(0, sigma2); the prior doubles as the initializer."""
    if R < 1 or M < 0:
        raise ValueError(f"need R >= 1 and M >= 0, got R={R}, M={M}")
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    rng = np.random.default_rng(seed)
    codes = rng.normal(0.0, np.sqrt(sigma2), size=(R, M))
    return LatentCodebook(codes, sigma2, tuple(rater_ids) if rater_ids is not None else ())


def prior_penalty(cb: LatentCodebook) -> float:
    return float((cb.codes * cb.codes).sum() / cb.sigma2)


def prior_penalty_tensor(codes: T.Tensor, sigma2: float) -> T.Tensor:
    """Differentiable ``sum_r ||z_r||^2 / sigma2``."""
    return T.scale(T.sq_norm(codes), 1.0 / sigma2)


@dataclass
class InjectionPoint:
    """Where a code enters the network: ``out = layer(a) + rep(A z)``.

    ``mode`` is ``"dense"`` for global features and ``"spatial"`` for conv
    feature maps, where ``A z`` is copied to every position.
    """

    layer_index: int
    mode: str
    A: np.ndarray

    def __post_init__(self):
        if self.mode not in ("dense", "spatial"):
            raise ValueError(f"injection mode must be 'dense' or 'spatial', got {self.mode!r}")
        self.A = np.asarray(self.A, dtype=np.float64)
        if self.A.ndim != 2:
            raise ValueError(f"mixing matrix must be C x M, got shape {self.A.shape}")

    @property
    def channels(self) -> int:
        return self.A.shape[0]


def _code_rows(z: T.Tensor, batch: int) -> T.Tensor:
    if z.data.ndim == 1:
        return T.gather_rows(T.reshape(z, (1, z.shape[0])), np.zeros(batch, dtype=np.int64))
    if z.shape[0] != batch:
        raise T.ShapeError(f"{z.shape[0]} code rows for a batch of {batch}")
    return z


def code_shift(A: T.Tensor, z: T.Tensor, batch: int) -> T.Tensor:
    """``A z`` per batch row, shape (B, C)."""
    return T.linear_rows(_code_rows(z, batch), A)


def inject_dense(a: T.Tensor, W: T.Tensor, b: T.Tensor, A: T.Tensor, z: T.Tensor) -> T.Tensor:
    """``affine(a) + A z`` added to every batch row. ``z`` is (M,) or (B, M)."""
    out = T.affine(a, W, b)
    if A.shape[0] != out.shape[1]:
        raise T.ShapeError(f"mixing matrix has {A.shape[0]} rows but layer outputs {out.shape[1]} channels")
    return T.add(out, code_shift(A, z, out.shape[0]))


def inject_spatial(a: T.Tensor, kernels: T.Tensor, bias: T.Tensor, A: T.Tensor, z: T.Tensor) -> T.Tensor:
    """``conv1d(a) + rep(A z)``: the code shift is copied to every spatial position."""
    out = T.conv1d(a, kernels, bias)
    if A.shape[0] != out.shape[1]:
        raise T.ShapeError(f"mixing matrix has {A.shape[0]} rows but conv outputs {out.shape[1]} channels")
    return T.add(out, T.replicate(code_shift(A, z, out.shape[0]), out.shape[2]))
