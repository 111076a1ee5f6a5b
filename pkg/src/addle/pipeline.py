"""End-to-end experiment stages. Each stage reads what earlier stages wrote
under ``out`` and writes its own artifacts, so any stage can be re-run alone.

Layout::

    config.ini                canonical config actually used
    data/                     dataset.csv, dataset.meta, {train,val_stop,val_gold,test}.csv
    models/                   {mode}.ckpt, {mode}-ft.ckpt, jlsl/rater{r}.ckpt
    logs/                     per-epoch training logs, fine-tuning tables
    selection/                greedy rater sets (JSON)
    reports/                  one EvaluationReport JSON per variant + summary.json
    plots/                    ROC point lists (TSV)
    analysis/                 latent-space tables (TSV) + summary.json
    manifest.json             every artifact with its SHA-256
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from addle import analysis, checkpoint, data, inference, sim
from addle.backbone import Ensemble, Model, count_params
from addle.config import ExperimentConfig, dump_config
from addle.seeding import derive_seed
from addle.trainer import finetune_raters, model_config, train_joint

log = logging.getLogger(__name__)

SPLITS = ("train", "val_stop", "val_gold", "test")
STAGES = ("gen-data", "train", "finetune-raters", "greedy-select", "eval", "analyze-latent")


def _f(v: float) -> str:
    return format(float(v), ".17g")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_tsv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(_f(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _provenance(cfg: ExperimentConfig, mode: str, epoch: int) -> dict:
    return {"config_hash": cfg.digest(), "seed": cfg.seed, "mode": mode, "epoch": int(epoch)}


# ---------------------------------------------------------------- data


def gen_data(cfg: ExperimentConfig, out: Path) -> dict[str, data.Dataset]:
    s = cfg.simulator
    b = cfg.backbone
    data_seed = derive_seed(cfg.seed, "data")
    split_seed = derive_seed(cfg.seed, "split")
    ds, profiles = sim.simulate(
        N=s.n_samples, D=b.input_dim, K=b.num_classes, R=s.n_raters, hyper=s.hyper(),
        group_size=s.group_size, assignment=s.assignment, exponent=s.exponent,
        seed=data_seed, nonlinear=s.nonlinear,
    )
    d = out / "data"
    d.mkdir(parents=True, exist_ok=True)
    data.write_csv(ds, d / "dataset.csv")
    parts = dict(zip(SPLITS, data.split_groups(ds, cfg.split.fractions(), split_seed)))
    for name, part in parts.items():
        data.write_csv(part, d / f"{name}.csv")
    meta = {
        "D": b.input_dim, "K": b.num_classes, "R": s.n_raters, "N": s.n_samples,
        "master_seed": cfg.seed, "data_seed": data_seed, "split_seed": split_seed,
        "sigma_delta": s.sigma_delta, "sigma_w": s.sigma_w, "sigma_eps": s.sigma_eps,
        "plant_oracle": s.plant_oracle, "oracle_index": s.oracle_index,
        "group_size": s.group_size, "assignment": s.assignment, "exponent": s.exponent,
        "nonlinear": s.nonlinear,
    }
    for p in profiles:
        meta[f"rater{p.rater_id}.delta"] = " ".join(_f(v) for v in p.delta)
        meta[f"rater{p.rater_id}.noise"] = _f(p.noise)
        meta[f"rater{p.rater_id}.w_norm"] = _f(np.linalg.norm(p.w))
    data.write_metadata(meta, d / "dataset.meta")
    return parts


def load_splits(cfg: ExperimentConfig, out: Path) -> dict[str, data.Dataset]:
    d = out / "data"
    if not (d / "train.csv").exists():
        raise FileNotFoundError(f"{d / 'train.csv'} missing; run gen-data first")
    R, K = cfg.simulator.n_raters, cfg.backbone.num_classes
    return {name: data.read_csv(d / f"{name}.csv", R, K) for name in SPLITS}


# ---------------------------------------------------------------- training


def _ckpt(out: Path, mode: str, tuned: bool = False) -> Path:
    return out / "models" / f"{mode}{'-ft' if tuned else ''}.ckpt"


def train(cfg: ExperimentConfig, out: Path, modes=None) -> None:
    splits = load_splits(cfg, out)
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    for mode in modes or cfg.modes:
        tcfg = replace(cfg.train, mode=mode, seed=cfg.seed)
        log.info("training %s", mode)
        model, tlog = train_joint(splits["train"], cfg.backbone, tcfg, splits["val_stop"])
        if mode == "jlsl":
            (out / "models" / "jlsl").mkdir(parents=True, exist_ok=True)
            for r, (m, tl) in enumerate(zip(model.models, tlog)):
                checkpoint.save_checkpoint(m, out / "models" / "jlsl" / f"rater{r:02d}.ckpt", _provenance(cfg, f"jlsl/{r}", tl.best_epoch))
                (out / "logs" / f"jlsl-rater{r:02d}.tsv").write_text(tl.to_tsv(), encoding="utf-8")
        else:
            checkpoint.save_checkpoint(model, _ckpt(out, mode), _provenance(cfg, mode, tlog.best_epoch))
            (out / "logs" / f"{mode}.tsv").write_text(tlog.to_tsv(), encoding="utf-8")


def load_family(cfg: ExperimentConfig, out: Path, mode: str, tuned: bool | None = None):
    """Load a trained model family; prefers the fine-tuned checkpoint when configured."""
    if mode == "jlsl":
        paths = sorted((out / "models" / "jlsl").glob("rater*.ckpt"))
        if not paths:
            raise FileNotFoundError("no jlsl checkpoints; run train first")
        return Ensemble([checkpoint.load_checkpoint(p) for p in paths])
    want_ft = cfg.eval.finetune if tuned is None else tuned
    if want_ft and mode in ("addle", "multi-head") and _ckpt(out, mode, True).exists():
        return checkpoint.load_checkpoint(_ckpt(out, mode, True))
    path = _ckpt(out, mode)
    if not path.exists():
        raise FileNotFoundError(f"{path} missing; run train first")
    return checkpoint.load_checkpoint(path)


def finetune(cfg: ExperimentConfig, out: Path, modes=None) -> None:
    splits = load_splits(cfg, out)
    for mode in modes or cfg.modes:
        if mode not in ("addle", "multi-head"):
            continue
        model = load_family(cfg, out, mode, tuned=False)
        tuned, results = finetune_raters(model, splits["train"], cfg.train.finetune_steps, cfg.train.finetune_lr)
        prov = dict(model.meta.get("provenance", {}), finetuned=True)
        checkpoint.save_checkpoint(tuned, _ckpt(out, mode, True), prov)
        _write_tsv(
            out / "logs" / f"{mode}-finetune.tsv",
            ["rater", "n_samples", "before", "after", "steps"],
            [(r.rater, r.n_samples, r.before, r.after, r.steps) for r in results],
        )


# ---------------------------------------------------------------- selection / eval


def _rater_modes(modes) -> list[str]:
    return [m for m in modes if m in ("addle", "multi-head", "jlsl")]


def greedy(cfg: ExperimentConfig, out: Path, modes=None) -> dict[str, inference.VirtualRaterSet]:
    splits = load_splits(cfg, out)
    vg = splits["val_gold"]
    sets = {}
    for mode in _rater_modes(modes or cfg.modes):
        model = load_family(cfg, out, mode)
        rset = inference.greedy_select(
            model, vg.X, vg.gold(), vg.groups, cfg.eval.greedy_metric, cfg.eval.fpr_max,
            cfg.eval.greedy_max or None,
        )
        sets[mode] = rset
        _write_json(out / "selection" / f"{mode}.json", {"raters": rset.raters, "metric": rset.metric, "step_scores": rset.step_scores})
    return sets


def _load_set(out: Path, mode: str) -> inference.VirtualRaterSet:
    path = out / "selection" / f"{mode}.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} missing; run greedy-select first")
    d = json.loads(path.read_text(encoding="utf-8"))
    return inference.VirtualRaterSet(d["raters"], d["metric"], d["step_scores"])


def param_counts(cfg: ExperimentConfig) -> dict[str, int]:
    R = cfg.simulator.n_raters
    base = count_params(model_config(cfg.backbone, "baseline", R))
    addle = count_params(model_config(cfg.backbone, "addle", R)) + R * cfg.backbone.latent_dim
    return {
        "baseline": base,
        "addle": addle,
        "multi-head": count_params(model_config(cfg.backbone, "multi-head", R)),
        "jlsl": R * base,
    }


def evaluate(cfg: ExperimentConfig, out: Path, modes=None) -> dict:
    splits = load_splits(cfg, out)
    te = splits["test"]
    K = cfg.backbone.num_classes
    variants: dict[str, np.ndarray] = {}
    models = {}
    for mode in modes or cfg.modes:
        model = load_family(cfg, out, mode)
        models[mode] = model
        if mode == "baseline":
            variants["baseline"] = inference.predict_rater(model, te.X, 0)
            continue
        variants[f"{mode}-mean"] = inference.mean_rater(model, te.X)
        variants[f"{mode}-greedy"] = inference.greedy_predict(model, _load_set(out, mode), te.X)
    summary = {"n_test_groups": int(len(np.unique(te.groups))), "reports": {}, "selection": {}}
    for name, scores in variants.items():
        rep = inference.evaluate(scores, te.gold(), te.groups, K, cfg.eval.fpr_max, cfg.eval.cutoffs)
        _write_json(out / "reports" / f"{name}.json", rep.to_dict())
        for c in rep.cutoffs:
            _write_tsv(out / "plots" / f"roc_{name}_cutoff{c.cutoff}.tsv", ["fpr", "tpr"], [(float(f), float(t)) for f, t in c.roc])
        summary["reports"][name] = {
            "jt": rep.jt,
            **{f"auc{c.cutoff}": c.auc for c in rep.cutoffs},
            **{f"pauc{c.cutoff}": c.partial_auc for c in rep.cutoffs},
        }
    for mode in _rater_modes(modes or cfg.modes):
        summary["selection"][mode] = _load_set(out, mode).raters
    counts = param_counts(cfg)
    summary["params"] = {m: counts[m] for m in (modes or cfg.modes)}
    summary["params_measured"] = {m: int(models[m].n_params()) for m in models}
    _write_json(out / "reports" / "summary.json", summary)
    return summary


# ---------------------------------------------------------------- latent analysis


def analyze_latent(cfg: ExperimentConfig, out: Path) -> dict:
    splits = load_splits(cfg, out)
    te = splits["test"]
    model = load_family(cfg, out, "addle")
    Z = model.codebook.codes
    gold = te.gold()
    rater_jt = analysis.performance_curve(model, list(Z), te.X, gold, te.groups)
    worst, best = int(np.argmin(rater_jt)), int(np.argmax(rater_jt))
    a = cfg.analysis
    alphas = np.linspace(a.alpha_min, a.alpha_max, a.alpha_points)
    curve = analysis.interpolation_curve(model, Z[worst], Z[best], alphas, te.X, gold, te.groups)
    d = out / "analysis"
    _write_tsv(d / "interpolation.tsv", ["alpha", "jt"], curve)
    summary = {
        "worst_rater": worst,
        "best_rater": best,
        "rater_jt": rater_jt,
        "norms": {rid: n for rid, n in analysis.code_norms(model.codebook)},
    }
    norms = [n for _, n in analysis.code_norms(model.codebook)]
    summary["norm_range"] = [min(norms), max(norms)]
    _write_tsv(d / "norms.tsv", ["rater", "norm", "jt"], [(rid, n, j) for (rid, n), j in zip(analysis.code_norms(model.codebook), rater_jt)])
    if Z.shape[0] >= 2 and Z.shape[1] >= 1:
        basis = analysis.pca(Z)
        _write_tsv(
            d / "pca_spectrum.tsv",
            ["component", "eigenvalue", "ratio", "cumulative"],
            [(i, float(v), float(r), float(c)) for i, (v, r, c) in enumerate(zip(basis.eigenvalues, basis.ratios, np.cumsum(basis.ratios)))],
        )
        proj = basis.project(Z)
        cols = min(2, proj.shape[1])
        _write_tsv(d / "pca_scatter.tsv", ["rater"] + [f"pc{i}" for i in range(cols)] + ["jt"], [(r, *map(float, proj[r, :cols]), rater_jt[r]) for r in range(len(Z))])
        summary["explained_ratio"] = basis.ratios.tolist()
        summary["cumulative_first6"] = float(np.sum(basis.ratios[:6]))
        summary["last_ratio"] = float(basis.ratios[-1])
        summary["sweeps"] = {}
        for c in a.components:
            grid = analysis.default_lambda_grid(basis, Z, c, a.lambda_points)
            sweep = analysis.component_sweep(model, basis, c, grid, te.X, gold, te.groups)
            _write_tsv(d / f"pc{c}_sweep.tsv", ["lambda", "jt"], sweep)
            summary["sweeps"][str(c)] = {"lambda_range": [float(grid[0]), float(grid[-1])]}
    summary["interpolation_endpoints"] = [curve[0][1], curve[-1][1]] if a.alpha_min == 0.0 and a.alpha_max == 1.0 else None
    _write_json(d / "summary.json", summary)
    return summary


# ---------------------------------------------------------------- orchestration


def write_manifest(out: Path) -> Path:
    entries = []
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            buf = p.read_bytes()
            entries.append({"path": p.relative_to(out).as_posix(), "bytes": len(buf), "sha256": hashlib.sha256(buf).hexdigest()})
    path = out / "manifest.json"
    _write_json(path, {"artifacts": entries})
    return path


def run_stage(stage: str, cfg: ExperimentConfig, out: Path, modes=None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg), encoding="utf-8")
    if stage == "gen-data":
        gen_data(cfg, out)
    elif stage == "train":
        train(cfg, out, modes)
    elif stage == "finetune-raters":
        if cfg.eval.finetune:
            finetune(cfg, out, modes)
    elif stage == "greedy-select":
        greedy(cfg, out, modes)
    elif stage == "eval":
        evaluate(cfg, out, modes)
    elif stage == "analyze-latent":
        analyze_latent(cfg, out)
    else:
        raise ValueError(f"unknown stage {stage!r}")
    write_manifest(out)


def run_pipeline(cfg: ExperimentConfig, out: Path, modes=None) -> dict:
    """All stages in order. Returns the evaluation summary."""
    out = Path(out)
    modes = tuple(modes or cfg.modes)
    for stage in STAGES:
        if stage == "analyze-latent" and "addle" not in modes:
            continue
        log.info("stage %s", stage)
        run_stage(stage, cfg, out, modes)
    return json.loads((out / "reports" / "summary.json").read_text(encoding="utf-8"))
