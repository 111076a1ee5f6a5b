"""Binary checkpoints.

Layout: ``b"ADDLECKP"`` magic, little-endian uint32 format version, uint32
header length, a UTF-8 JSON header (config, tensor table, codebook metadata,
provenance), then every tensor as little-endian float64 in table order. The
file is validated in full before any object is built, so a bad file never
yields a half-loaded model.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from addle.backbone import BackboneConfig, ConvSpec, InjectionSpec, Model, check_params
from addle.latent import LatentCodebook

MAGIC = b"ADDLECKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def config_to_dict(cfg: BackboneConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    d["injections"] = [asdict(s) for s in cfg.injections]
    return d


def config_from_dict(d: dict) -> BackboneConfig:
    return BackboneConfig(
        input_dim=d["input_dim"],
        hidden=tuple(d["hidden"]),
        num_classes=d["num_classes"],
        latent_dim=d["latent_dim"],
        injections=tuple(InjectionSpec(**s) for s in d["injections"]),
        conv=ConvSpec(**d["conv"]) if d.get("conv") else None,
        n_heads=d["n_heads"],
    )


def to_bytes(model: Model, provenance: dict | None = None) -> bytes:
    tensors = [(k, np.asarray(v, dtype=np.float64)) for k, v in model.params.items()]
    if model.codebook is not None:
        tensors.append(("Z", model.codebook.codes))
    header = {
        "mode": model.mode,
        "backbone": config_to_dict(model.cfg),
        "tensors": [[k, list(v.shape)] for k, v in tensors],
        "n_raters": model.n_raters,
        "sigma2": None if model.codebook is None else model.codebook.sigma2,
        "rater_ids": None if model.codebook is None else list(model.codebook.rater_ids),
        "provenance": provenance if provenance is not None else model.meta.get("provenance", {}),
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(v.astype("<f8").tobytes(order="C") for _, v in tensors)
    return MAGIC + struct.pack("<II", VERSION, len(hb)) + hb + payload


def from_bytes(buf: bytes, source: str = "<bytes>") -> Model:
    if len(buf) < len(MAGIC) + 8 or buf[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{source}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<II", buf, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported checkpoint version {version} (expected {VERSION})")
    start = len(MAGIC) + 8
    if len(buf) < start + hlen:
        raise CheckpointError(f"{source}: truncated header")
    try:
        header = json.loads(buf[start : start + hlen].decode("utf-8"))
        cfg = config_from_dict(header["backbone"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{source}: corrupt header ({exc})") from exc
    table = [(name, tuple(shape)) for name, shape in header["tensors"]]
    expected = sum(int(np.prod(s)) for _, s in table) * 8
    payload = buf[start + hlen :]
    if len(payload) != expected:
        raise CheckpointError(f"{source}: payload has {len(payload)} bytes, expected {expected} (truncated or corrupt)")
    flat = np.frombuffer(payload, dtype="<f8")
    arrays, pos = {}, 0
    for name, shape in table:
        n = int(np.prod(shape))
        arrays[name] = flat[pos : pos + n].reshape(shape).astype(np.float64)
        pos += n
    codes = arrays.pop("Z", None)
    try:
        check_params(arrays, cfg)
        cb = LatentCodebook(codes, header["sigma2"], tuple(header["rater_ids"])) if codes is not None else None
    except ValueError as exc:
        raise CheckpointError(f"{source}: inconsistent contents ({exc})") from exc
    return Model(cfg, arrays, header["mode"], cb, n_raters_=header["n_raters"], meta={"provenance": header["provenance"]})


def save_checkpoint(model: Model, path, provenance: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(to_bytes(model, provenance))
    return path


def load_checkpoint(path) -> Model:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(buf, str(path))
