"""Command-line entry point: ``rein <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .checkpoint import load_checkpoint, restore_trainer, save_checkpoint
from .config import ConfigKeyError, ExperimentConfig, config_from_dict, load_config
from .datafile import CorruptDatasetError
from .metrics import format_table, write_csv
from .plots import export_plots, write_rollout_csv
from .tensorcore.checkpoint import CheckpointError

log = logging.getLogger("rein")


def _config_for_data(args) -> ExperimentConfig:
    if args.config:
        return load_config(args.config)
    snapshot = Path(args.data) / "config.ini"
    if snapshot.exists():
        return load_config(snapshot)
    return ExperimentConfig()


def _checkpoint_stem(run) -> Path:
    run = Path(run)
    return run / "checkpoint" if run.is_dir() else run


def _load_run(args):
    model, meta, _ = load_checkpoint(_checkpoint_stem(args.run))
    cfg_dict = meta.get("extra", {}).get("config")
    cfg = config_from_dict(cfg_dict) if cfg_dict else ExperimentConfig()
    return model, meta, cfg


# -- subcommands --------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.sim.seed = args.seed
    metas = ex.generate_all(cfg, args.out)
    for split, meta in metas.items():
        print(f"{split}: {meta['n_episodes']} episodes x {meta['n_frames']} frames  sha256={meta['sha256'][:16]}")
    return 0


def cmd_train(args) -> int:
    cfg = _config_for_data(args)
    if args.lr is not None:
        cfg.train.lr = args.lr
    if args.resume:
        return _resume(args, cfg)
    result = ex.train_run(cfg, args.data, args.out, kind=args.model, seed=args.seed,
                          ablation=args.ablation, epochs=args.epochs)
    man = result["manifest"]
    print(f"trained {args.model} ({man['model']['n_params']} params) for {len(man['epoch_losses'])} epochs "
          f"in {man['wall_clock_s']:.1f}s -> {args.out}")
    for name, val in man["final_metrics"].items():
        if isinstance(val, dict):
            for tag, rep in val.items():
                print(f"  {name}@{tag}: {rep.value:.6g}")
        else:
            print(f"  {name}: {val.value:.4f}")
    return 0


def _resume(args, cfg) -> int:
    stem = _checkpoint_stem(args.out)
    model, meta, _ = load_checkpoint(stem)
    seed = meta.get("extra", {}).get("seed", cfg.train.seed)
    train = ex.load_split(args.data, "train")
    trainer = ex.make_trainer(cfg, model, train, seed)
    restore_trainer(trainer, stem)
    stats = trainer.fit(args.epochs)
    save_checkpoint(stem, model, trainer, extra=meta.get("extra"))
    print(f"resumed at epoch {meta['trainer']['epoch']}, trained {len(stats)} more epochs")
    return 0


def cmd_eval(args) -> int:
    model, meta, cfg = _load_run(args)
    data = ex.load_split(args.data, args.split)
    if not len(data["obs"]):
        raise ValueError(f"split {args.split!r} is empty")
    res = ex.evaluate(model, data, cfg, seed=args.seed)
    reports = list(res["mse"].values())
    if "edge_accuracy" in res:
        reports.append(res["edge_accuracy"])
    print(format_table(reports))
    if args.csv:
        write_csv(args.csv, reports)
    return 0


def _predictions(args):
    model, _, cfg = _load_run(args)
    data = ex.load_split(args.data, args.split)
    n = min(args.episodes, len(data["obs"]))
    subset = {"obs": data["obs"][:n], "edge_type": data["edge_type"][:n]}
    pred, truth, scores = ex.predict(model, subset, cfg, seed=args.seed)
    return pred, truth, scores, n


def cmd_rollout(args) -> int:
    pred, truth, _, n = _predictions(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        write_rollout_csv(out / f"episode{i:04d}_rollout.csv", truth[i], pred[i])
    print(f"wrote {n} rollouts to {out}")
    return 0


def cmd_plot(args) -> int:
    pred, truth, scores, n = _predictions(args)
    for i in range(n):
        export_plots(args.out, truth[i], pred[i], None if scores is None else scores[i], stem=f"episode{i:04d}")
    print(f"wrote plots for {n} episodes to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck
    res = run_gradcheck(seed=args.seed)
    ok = res.passed(args.tol)
    print(f"max relative error {res.max_rel_error:.3e} over {res.n_coords} coordinates "
          f"(worst {res.worst_param}[{res.worst_index}]) in {res.seconds:.1f}s: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rein", description="Hierarchical relational dynamics experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate train/valid/test splits")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a model on a generated dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="defaults to the snapshot saved by generate")
    t.add_argument("--model", choices=["rein", "lstm", "gtgraph"], default="rein")
    t.add_argument("--ablation", choices=["full", "upward", "downward", "p_random", "p_learned"])
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="rollout metrics for a checkpoint")
    e.add_argument("--run", required=True, help="run directory or checkpoint stem")
    e.add_argument("--data", required=True)
    e.add_argument("--split", default="test", choices=ex.SPLITS)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--csv")
    e.set_defaults(func=cmd_eval)

    for name, func, text in (("rollout", cmd_rollout, "export predicted trajectories as CSV"),
                             ("plot", cmd_plot, "export trajectory overlays and edge heatmaps")):
        r = sub.add_parser(name, help=text)
        r.add_argument("--run", required=True)
        r.add_argument("--data", required=True)
        r.add_argument("--out", required=True)
        r.add_argument("--split", default="test", choices=ex.SPLITS)
        r.add_argument("--episodes", type=int, default=5)
        r.add_argument("--seed", type=int, default=0)
        r.set_defaults(func=func)

    c = sub.add_parser("gradcheck", help="finite-difference check of the model gradients")
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except ConfigKeyError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except (OSError, CorruptDatasetError, CheckpointError, ValueError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
