"""Joint MAP training of shared weights and rater codes, then per-rater fine-tuning.

The joint objective is

    sum_i FH(f(x_i, z_{r(i)}), y_i) + sum_r ||z_r||^2 / sigma2

minimised by minibatch SGD. Each step uses the batch-mean loss plus the prior
divided by N, an unbiased estimate of objective / N.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from addle import metrics, ordinal
from addle import tensor as T
from addle.backbone import MODES, BackboneConfig, Ensemble, Model, forward_batch, init_params
from addle.data import Dataset
from addle.latent import LatentCodebook, init_codes, prior_penalty, prior_penalty_tensor
from addle.seeding import derive_seed

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 64
    epochs: int = 200
    patience: int = 20
    seed: int = 0
    optimizer: str = "momentum"
    momentum: float = 0.9
    mode: str = "addle"
    sigma2: float = 1.0
    finetune_steps: int = 200
    finetune_lr: float = 1.0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0 or self.patience < 1:
            raise ValueError(f"need epochs >= 0 and patience >= 1, got {self.epochs}, {self.patience}")
        if self.optimizer not in ("sgd", "momentum"):
            raise ValueError(f"optimizer must be 'sgd' or 'momentum', got {self.optimizer!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")


@dataclass
class EpochRecord:
    epoch: int
    objective: float
    val_jt: float | None


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def to_tsv(self) -> str:
        lines = ["epoch\tobjective\tval_jt"]
        for r in self.records:
            v = "" if r.val_jt is None else format(r.val_jt, ".17g")
            lines.append(f"{r.epoch}\t{r.objective:.17g}\t{v}")
        return "\n".join(lines) + "\n"


def model_config(cfg: BackboneConfig, mode: str, n_raters: int) -> BackboneConfig:
    """Architecture actually trained for ``mode``."""
    if mode == "addle":
        return replace(cfg, n_heads=1)
    if mode == "multi-head":
        return replace(cfg, injections=(), n_heads=n_raters)
    return replace(cfg, injections=(), n_heads=1)


def _batch_logits(P, cfg: BackboneConfig, mode: str, X, raters):
    if mode == "addle":
        return forward_batch(P, cfg, X, T.gather_rows(P["Z"], raters))
    if mode == "multi-head":
        return forward_batch(P, cfg, X, None, raters)
    return forward_batch(P, cfg, X)


def objective(model: Model, ds: Dataset) -> float:
    """Full joint objective: summed Frank-Hall loss plus the code prior (ADDLE only)."""
    if len(ds) and ds.raters.max() >= model.n_raters and model.mode != "baseline":
        raise IndexError(f"dataset uses rater {ds.raters.max()} but model has {model.n_raters}")
    data = 0.0
    if len(ds):
        raters = ds.raters if model.mode != "baseline" else None
        data = float(ordinal.fh_loss_batch(T.Tensor(model.logits(ds.X, raters)), ds.labels).data)
    prior = prior_penalty(model.codebook) if model.codebook is not None else 0.0
    return data + prior


def _val_jt(model, val: Dataset | None) -> float | None:
    if val is None or len(val) == 0 or len(np.unique(val.labels)) < 2:
        return None
    if isinstance(model, Model) and model.mode in ("addle", "multi-head"):
        s = ordinal.scores(model.logits(val.X, val.raters))
    else:
        s = ordinal.scores(model.logits(val.X))
    return metrics.jt_index(s, val.labels)


def _to_model(variables, cfg, mode, sigma2, rater_ids, n_raters):
    params = {k: v.copy() for k, v in variables.items() if k != "Z"}
    cb = LatentCodebook(variables["Z"].copy(), sigma2, rater_ids) if mode == "addle" else None
    return Model(cfg, params, mode, cb, n_raters_=n_raters)


def _fit(ds: Dataset, cfg: BackboneConfig, tcfg: TrainConfig, mode: str, val: Dataset | None, seed_key, rater_ids=None) -> tuple[Model, TrainLog]:
    variables = init_params(cfg, derive_seed(tcfg.seed, "init", *seed_key))
    if mode == "addle":
        cb = init_codes(ds.n_raters, cfg.latent_dim, tcfg.sigma2, derive_seed(tcfg.seed, "codes", *seed_key), rater_ids)
        variables["Z"] = cb.codes
        rater_ids = cb.rater_ids
    rng = np.random.default_rng(derive_seed(tcfg.seed, "shuffle", *seed_key))
    names = list(variables)
    velocity = {k: np.zeros_like(v) for k, v in variables.items()}
    N = len(ds)
    n_raters = ds.n_raters

    def snapshot():
        return _to_model(variables, cfg, mode, tcfg.sigma2, rater_ids, n_raters)

    current = snapshot()
    tlog = TrainLog([EpochRecord(0, objective(current, ds), _val_jt(current, val))])
    best_model, best_val, since = current, tlog.records[0].val_jt, 0

    for epoch in range(1, tcfg.epochs + 1):
        perm = rng.permutation(N)
        for start in range(0, N, tcfg.batch_size):
            idx = perm[start : start + tcfg.batch_size]
            tensors = {k: T.Tensor(variables[k]) for k in names}
            with T.Tape() as tape:
                tape.watch(*tensors.values())
                logits = _batch_logits(tensors, cfg, mode, ds.X[idx], ds.raters[idx])
                loss = T.scale(ordinal.fh_loss_batch(logits, ds.labels[idx]), 1.0 / len(idx))
                if mode == "addle":
                    loss = T.add(loss, T.scale(prior_penalty_tensor(tensors["Z"], tcfg.sigma2), 1.0 / N))
            if not np.isfinite(loss.data):
                raise TrainingDiverged(f"minibatch loss became non-finite at epoch {epoch} (mode {mode})")
            grads = tape.gradient(loss, [tensors[k] for k in names])
            for k, g in zip(names, grads):
                if tcfg.optimizer == "momentum":
                    velocity[k] = tcfg.momentum * velocity[k] - tcfg.lr * g
                    variables[k] = variables[k] + velocity[k]
                else:
                    variables[k] = variables[k] - tcfg.lr * g
        bad = [k for k in names if not np.all(np.isfinite(variables[k]))]
        if bad:
            raise TrainingDiverged(f"parameters {', '.join(bad)} became non-finite at epoch {epoch} (mode {mode})")
        current = snapshot()
        obj = objective(current, ds)
        if not np.isfinite(obj):
            raise TrainingDiverged(f"objective became non-finite at epoch {epoch} (mode {mode})")
        vj = _val_jt(current, val)
        tlog.records.append(EpochRecord(epoch, obj, vj))
        if vj is None:
            best_model, tlog.best_epoch = current, epoch
            continue
        if best_val is None or vj > best_val:
            best_model, best_val, since, tlog.best_epoch = current, vj, 0, epoch
        else:
            since += 1
            if since >= tcfg.patience:
                log.debug("early stop at epoch %d (best %d)", epoch, tlog.best_epoch)
                break
    return best_model, tlog


def train_joint(ds: Dataset, cfg: BackboneConfig, tcfg: TrainConfig, val: Dataset | None = None, rater_ids=None):
    """Train one model family. Returns ``(model, log)``; for ``jlsl`` the model
    is an :class:`Ensemble` and the log a list with one entry per rater."""
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    mode = tcfg.mode
    mcfg = model_config(cfg, mode, ds.n_raters)
    if mode != "jlsl":
        model, tlog = _fit(ds, mcfg, tcfg, mode, val, (0,), rater_ids)
        return model, tlog
    models, logs = [], []
    for r in range(ds.n_raters):
        own = ds.subset(ds.rater_index(r))
        if len(own) == 0:
            # nothing to learn from: keep the untrained initialization
            warnings.warn(f"rater {r} has no training samples; its model stays at initialization")
            m = Model(mcfg, init_params(mcfg, derive_seed(tcfg.seed, "init", r)), "baseline")
            models.append(m)
            logs.append(TrainLog())
            continue
        own = Dataset(own.X, own.labels, np.zeros(len(own), dtype=np.int64), own.groups, own.true_labels, own.sample_ids, 1, own.num_classes)
        m, tl = _fit(own, mcfg, tcfg, "baseline", val, (r,))
        models.append(m)
        logs.append(tl)
    return Ensemble(models), logs


# ---------------------------------------------------------------- fine-tuning


@dataclass
class FinetuneResult:
    rater: int
    n_samples: int
    before: float
    after: float
    steps: int


def _descend(f_and_grad, v0: np.ndarray, steps: int, lr: float, tol: float = 1e-10):
    """Gradient descent with step halving: every accepted step lowers f."""
    v = v0.copy()
    fv, g = f_and_grad(v)
    t = lr
    taken = 0
    for _ in range(steps):
        if np.sqrt((g * g).sum()) < tol:
            break
        accepted = False
        while t > 1e-12:
            cand = v - t * g
            fc, gc = f_and_grad(cand)
            if np.isfinite(fc) and fc < fv:
                v, fv, g = cand, fc, gc
                accepted = True
                t *= 2.0
                break
            t *= 0.5
        if not accepted:
            break
        taken += 1
    return v, fv, taken


def _rater_objective_addle(model: Model, X, y, sigma2):
    def f(z):
        zt = T.Tensor(z)
        with T.Tape() as tape:
            tape.watch(zt)
            rows = T.gather_rows(T.reshape(zt, (1, z.shape[0])), np.zeros(len(y), dtype=np.int64))
            total = T.add(ordinal.fh_loss_batch(forward_batch(model.params, model.cfg, X, rows), y), prior_penalty_tensor(zt, sigma2))
        (g,) = tape.gradient(total, [zt])
        return float(total.data), g

    return f


def _trunk(model: Model, X) -> np.ndarray:
    cfg = model.cfg
    # features feeding the head: run every layer except the head
    P = {k: v for k, v in model.params.items() if not k.startswith("head")}
    h = T.Tensor(X)
    for i in range(cfg.n_layers - 1):
        kind = cfg.layer_kind(i)
        if kind == "conv":
            out = T.conv1d(T.reshape(h, (len(X), 1, cfg.input_dim)), T.Tensor(P["conv.K"]), T.Tensor(P["conv.b"]))
            h = T.reshape(T.relu(out), (len(X), out.shape[1] * out.shape[2]))
        else:
            h = T.relu(T.affine(h, T.Tensor(P[f"dense{i}.W"]), T.Tensor(P[f"dense{i}.b"])))
    return h.data


def _rater_objective_head(model: Model, X, y, r):
    K1 = model.cfg.num_classes - 1
    H = _trunk(model, X)
    Wshape = (H.shape[1], K1)

    def f(v):
        W = T.Tensor(v[: H.shape[1] * K1].reshape(Wshape))
        b = T.Tensor(v[H.shape[1] * K1 :])
        with T.Tape() as tape:
            tape.watch(W, b)
            total = ordinal.fh_loss_batch(T.affine(T.Tensor(H), W, b), y)
        gW, gb = tape.gradient(total, [W, b])
        return float(total.data), np.concatenate([gW.ravel(), gb])

    cols = slice(r * K1, (r + 1) * K1)
    v0 = np.concatenate([model.params["head.W"][:, cols].ravel(), model.params["head.b"][cols]])
    return f, v0, cols, Wshape


def finetune_raters(model: Model, ds: Dataset, steps: int = 200, lr: float = 1.0) -> tuple[Model, list[FinetuneResult]]:
    """Re-fit each rater's own parameters on that rater's samples with the
    shared weights frozen.

    ADDLE: the code z_r under loss + ||z_r||^2 / sigma2. Multi-head: the
    rater's head (no prior). Every rater's objective is non-increasing; raters
    without samples are left unchanged with a warning.
    """
    if model.mode not in ("addle", "multi-head"):
        raise ValueError(f"fine-tuning applies to addle and multi-head models, not {model.mode!r}")
    params = model.params  # never written
    codebook = model.codebook.copy() if model.codebook is not None else None
    head_W = params["head.W"].copy() if model.mode == "multi-head" else None
    head_b = params["head.b"].copy() if model.mode == "multi-head" else None
    results = []
    for r in range(model.n_raters):
        idx = ds.rater_index(r)
        if len(idx) == 0:
            warnings.warn(f"rater {r} has no samples; left unchanged")
            results.append(FinetuneResult(r, 0, float("nan"), float("nan"), 0))
            continue
        X, y = ds.X[idx], ds.labels[idx]
        n = len(idx)
        # objectives are sums over the rater's samples; scale the step to match
        step = lr / n
        if model.mode == "addle":
            f = _rater_objective_addle(model, X, y, codebook.sigma2)
            z0 = codebook.codes[r]
            before = f(z0)[0]
            z, after, taken = _descend(f, z0, steps, step)
            codebook.codes[r] = z
        else:
            f, v0, cols, Wshape = _rater_objective_head(model, X, y, r)
            before = f(v0)[0]
            v, after, taken = _descend(f, v0, steps, step)
            head_W[:, cols] = v[: Wshape[0] * Wshape[1]].reshape(Wshape)
            head_b[cols] = v[Wshape[0] * Wshape[1] :]
        results.append(FinetuneResult(r, n, before, after, taken))
    if model.mode == "addle":
        tuned = Model(model.cfg, params, model.mode, codebook, model.n_raters_, dict(model.meta))
    else:
        new_params = dict(params)
        new_params["head.W"], new_params["head.b"] = head_W, head_b
        tuned = Model(model.cfg, new_params, model.mode, None, model.n_raters_, dict(model.meta))
    return tuned, results


def rater_objective(model: Model, ds: Dataset, r: int) -> float:
    """Per-rater fine-tuning objective at the model's current parameters
    (same arithmetic path as :func:`finetune_raters`)."""
    idx = ds.rater_index(r)
    X, y = ds.X[idx], ds.labels[idx]
    if model.mode == "addle":
        return _rater_objective_addle(model, X, y, model.codebook.sigma2)(model.codebook.codes[r])[0]
    f, v0, _, _ = _rater_objective_head(model, X, y, r)
    return f(v0)[0]
