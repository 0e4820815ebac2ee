"""Desk-scale experiment protocol: data splits, training runs, evaluation."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .baselines import GTGraphMLP, JointLSTM, count_params, static_predict
from .checkpoint import save_checkpoint
from .config import ExperimentConfig
from .datafile import read_arrays, write_dataset
from .metrics import MetricReport, edge_accuracy, mse_at_steps
from .model.rein import REIN
from .sim import generate_episodes
from .tensorcore.stochastic import generator, stream_seed
from .training import Schedule, Trainer

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


def num_workers() -> int:
    try:
        return max(1, int(os.environ.get("REIN_NUM_WORKERS", "1")))
    except ValueError:
        return 1


def split_seed(seed: int, split: str) -> int:
    return stream_seed(seed, 10 + SPLITS.index(split))


def generate_split(cfg: ExperimentConfig, split: str, path) -> dict:
    n = {"train": cfg.sim.n_train, "valid": cfg.sim.n_valid, "test": cfg.sim.n_test}[split]
    frames = cfg.sim.frames_train if split == "train" else cfg.sim.frames_test
    seed = split_seed(cfg.sim.seed, split)
    params = cfg.sim_params()
    if n == 0:
        return write_dataset(path, [], cfg.kind, cfg.system.n_objects, frames, params.dt * cfg.sim.subsample, seed)
    episodes = generate_episodes(cfg.kind, cfg.system.n_objects, n, frames, cfg.sim.subsample, seed, params)
    return write_dataset(path, episodes, seed=seed)


def generate_all(cfg: ExperimentConfig, out_dir) -> dict[str, dict]:
    """Write every split plus a config snapshot into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_text(), "utf-8")
    workers = num_workers()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futs = {s: pool.submit(generate_split, cfg, s, out / f"{s}.bin") for s in SPLITS}
            return {s: f.result() for s, f in futs.items()}
    return {s: generate_split(cfg, s, out / f"{s}.bin") for s in SPLITS}


def load_split(data_dir, split: str) -> dict[str, torch.Tensor]:
    meta, arrays = read_arrays(Path(data_dir) / f"{split}.bin")
    return {
        "obs": torch.from_numpy(arrays["trajectory"].copy()),
        "edge_type": torch.from_numpy(arrays["edge_type"].astype(np.int64)),
        "meta": meta,
    }


# -- model construction -----------------------------------------------------

def _largest_within(budget: int, make) -> int:
    lo, hi = 1, 4096
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if count_params(make(mid)) <= budget:
            lo = mid
        else:
            hi = mid - 1
    return lo


def make_model(cfg: ExperimentConfig, kind: str, seed: int, ablation: str | None = None):
    """Build a freshly initialised model; init draws from stream (seed, 'init')."""
    n, k = cfg.system.n_objects, cfg.edge_types
    with torch.random.fork_rng():
        torch.manual_seed(stream_seed(seed, "init"))
        budget = count_params(REIN(cfg.model_config()))
        if kind == "rein":
            model = REIN(cfg.model_config(ablation))
        elif kind == "lstm":
            hidden = JointLSTM.hidden_for_budget(budget, n)
            model = JointLSTM(n, hidden=hidden, teacher_every=cfg.model.teacher_every)
        elif kind == "gtgraph":
            hidden = _largest_within(budget, lambda h: GTGraphMLP(n, hidden=h, edge_types=k))
            model = GTGraphMLP(n, hidden=hidden, edge_types=k, teacher_every=cfg.model.teacher_every)
        else:
            raise ValueError(f"unknown model kind {kind!r}")
    if cfg.train.precision == "double":
        model = model.double()
    return model


def make_trainer(cfg: ExperimentConfig, model, train: dict, seed: int) -> Trainer:
    model.set_normalization(train["obs"])
    data = {"obs": train["obs"], "edge_type": train["edge_type"]}
    m = cfg.model
    sched = Schedule(epochs=cfg.train.epochs, tau_start=m.tau_start, tau_end=m.tau_end, kl_warmup=m.kl_warmup)
    return Trainer(model, data, sched, lr=cfg.train.lr, batch_size=cfg.train.batch_size,
                   clip_norm=cfg.train.grad_clip, seed=seed)


# -- evaluation ---------------------------------------------------------------

def predict(model, test: dict, cfg: ExperimentConfig, seed: int = 0):
    """Rollout after the context window.  Returns (pred, truth, edge_scores|None)."""
    ctx_len = cfg.model.context_len
    horizon = max(cfg.eval.horizons)
    obs = test["obs"]
    context = obs[:, :ctx_len]
    truth = obs[:, ctx_len:ctx_len + horizon]
    scores = None
    if model is None:
        return static_predict(context, horizon).double(), truth.double(), None
    model.eval()
    if isinstance(model, REIN):
        pred, edges = model.rollout(context, horizon, mode="mean", gen=generator(seed, "eval"), return_edges=True)
        if edges:
            belief = edges[min(edges)]
            scores = belief.probs() if model.cfg.ablation != "p_random" else belief.dense_sample()
    elif isinstance(model, GTGraphMLP):
        pred = model.rollout(context, horizon, edge_type=test["edge_type"])
    else:
        pred = model.rollout(context, horizon)
    return pred.double(), truth.double(), scores


def evaluate(model, test: dict, cfg: ExperimentConfig, seed: int = 0) -> dict:
    pred, truth, scores = predict(model, test, cfg, seed)
    out = {"mse": {r.tag: r for r in mse_at_steps(pred, truth, cfg.eval.horizons)},
           "mse_curve": ((pred - truth) ** 2).mean(dim=(0, 2, 3)).tolist()}
    if scores is not None:
        out["edge_accuracy"] = edge_accuracy(scores, test["edge_type"], cfg.edge_types)
    return out


# -- correlation baseline -------------------------------------------------------

def _pair_correlation(obs: np.ndarray) -> np.ndarray:
    """(E, n, n) Pearson correlation between objects' velocity series."""
    vel = obs[..., 2:]  # (E, T, n, 2)
    series = np.transpose(vel, (0, 2, 1, 3)).reshape(vel.shape[0], vel.shape[2], -1)
    series = series - series.mean(axis=-1, keepdims=True)
    norm = np.linalg.norm(series, axis=-1, keepdims=True) + 1e-12
    series = series / norm
    return np.einsum("eit,ejt->eij", series, series)


def correlation_baseline(train: dict, test: dict, context_len: int) -> MetricReport:
    """Threshold the pairwise velocity correlation; threshold fitted on train."""
    tr = _pair_correlation(train["obs"][:, :context_len].double().numpy())
    te = _pair_correlation(test["obs"][:, :context_len].double().numpy())
    n = tr.shape[-1]
    iu = np.triu_indices(n, k=1)
    x, y = tr[:, iu[0], iu[1]].ravel(), (train["edge_type"].numpy()[:, iu[0], iu[1]] > 0).ravel()
    best = (-1.0, 0.0, 1)
    for thr in np.unique(np.quantile(x, np.linspace(0, 1, 201))):
        for sign in (1, -1):
            acc = np.mean((sign * (x - thr) > 0) == y)
            if acc > best[0]:
                best = (acc, thr, sign)
    _, thr, sign = best
    labels = (sign * (te - thr) > 0).astype(np.int64)
    labels[:, np.arange(n), np.arange(n)] = 0
    return edge_accuracy(labels, test["edge_type"], 2, name="edge_accuracy_corr")


# -- runs -------------------------------------------------------------------------

def code_version() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{__version__}+{rev}" if rev else __version__


def write_manifest(path, manifest: dict) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=1, default=_jsonable), "utf-8")
    os.replace(tmp, path)


def _jsonable(obj):
    if isinstance(obj, MetricReport):
        return obj.__dict__
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


def train_run(cfg: ExperimentConfig, data_dir, out_dir, kind: str = "rein", seed: int | None = None,
              ablation: str | None = None, epochs: int | None = None, log_every: bool = True) -> dict:
    """Train one model, write ``checkpoint.{json,bin}`` and ``manifest.json``."""
    start = time.time()
    seed = cfg.train.seed if seed is None else seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train = load_split(data_dir, "train")
    model = make_model(cfg, kind, seed, ablation)
    trainer = make_trainer(cfg, model, train, seed)

    def report(s):
        if log_every:
            log.info("%s seed %d epoch %d loss %.4f %s", kind, seed, s.epoch, s.loss,
                     {k: round(v, 4) for k, v in s.parts.items()})

    stats = trainer.fit(epochs, callback=report)
    save_checkpoint(out / "checkpoint", model, trainer,
                    extra={"config": cfg.to_dict(), "seed": seed, "ablation": ablation or cfg.model.ablation})
    metrics = {}
    test_path = Path(data_dir) / "test.bin"
    if test_path.exists():
        test = load_split(data_dir, "test")
        if len(test["obs"]):
            res = evaluate(model, test, cfg, seed)
            metrics = {k: v for k, v in res.items() if k != "mse_curve"}
    manifest = {
        "config": cfg.to_dict(),
        "model": {"kind": kind, "seed": seed, "ablation": ablation or cfg.model.ablation,
                  "n_params": count_params(model)},
        "code_version": code_version(),
        "dataset_checksums": {s: _sidecar_checksum(Path(data_dir) / f"{s}.json") for s in SPLITS},
        "epoch_losses": [s.loss for s in stats],
        "final_metrics": metrics,
        "wall_clock_s": time.time() - start,
    }
    write_manifest(out / "manifest.json", manifest)
    return {"model": model, "trainer": trainer, "stats": stats, "manifest": manifest}


def _sidecar_checksum(path: Path) -> str | None:
    try:
        return json.loads(path.read_text("utf-8"))["sha256"]
    except (OSError, KeyError, json.JSONDecodeError):
        return None


def config_digest(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(cfg.to_text().encode("utf-8")).hexdigest()[:16]



# -- desk-scale protocol ------------------------------------------------------------

DESK_RUNS = (("rein", "full"), ("rein", "upward"), ("rein", "downward"), ("rein", "p_random"),
             ("lstm", None), ("gtgraph", None))


def _run_summary(model, stats, test, cfg, seed, seconds) -> dict:
    res = evaluate(model, test, cfg, seed)
    curve = res["mse_curve"]
    out = {"mse": {k: r.value for k, r in res["mse"].items()},
           "mse_episode_std": {k: r.dispersion for k, r in res["mse"].items()},
           "recon_mse": float(np.mean(curve)),
           "epoch_losses": [s.loss for s in stats],
           "seconds": seconds}
    if "edge_accuracy" in res:
        out["edge_accuracy"] = res["edge_accuracy"].value
    return out


def desk_protocol(cfg: ExperimentConfig, work_dir, seeds=(0, 1, 2), runs=DESK_RUNS) -> dict:
    """Generate data once, train every run for every seed, collect test metrics.

    Results are cached in ``work_dir/results.json`` keyed by the config digest,
    so an interrupted sweep resumes at the first missing (run, seed).
    """
    work = Path(work_dir)
    data_dir = work / "data"
    if not (data_dir / "test.json").exists():
        generate_all(cfg, data_dir)
    train, test = load_split(data_dir, "train"), load_split(data_dir, "test")
    cache = work / "results.json"
    digest = config_digest(cfg)
    results = {}
    if cache.exists():
        results = json.loads(cache.read_text("utf-8"))
        if results.get("digest") != digest:
            results = {}
    results.setdefault("digest", digest)
    results.setdefault("runs", {})
    if "static" not in results:
        res = evaluate(None, test, cfg)
        results["static"] = {"mse": {k: r.value for k, r in res["mse"].items()}}
        results["corr_edge_accuracy"] = correlation_baseline(train, test, cfg.model.context_len).value
    for kind, ablation in runs:
        key = kind if ablation is None else f"{kind}/{ablation}"
        per_seed = results["runs"].setdefault(key, {})
        for seed in seeds:
            if str(seed) in per_seed:
                continue
            start = time.time()
            model = make_model(cfg, kind, seed, ablation)
            trainer = make_trainer(cfg, model, train, seed)
            stats = trainer.fit()
            per_seed[str(seed)] = _run_summary(model, stats, test, cfg, seed, time.time() - start)
            per_seed[str(seed)]["n_params"] = count_params(model)
            log.info("%s seed %d done in %.0fs: %s", key, seed, time.time() - start, per_seed[str(seed)]["mse"])
            write_manifest(cache, results)
    return results
