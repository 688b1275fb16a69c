"""Command-line interface: file-in/file-out subcommands for generation,
training, evaluation, structure inference, and the linear baseline."""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .datagen import SimConfig, generate_dataset
from .dataio import load_dataset, save_dataset
from .decoder import rollout
from .encoder import encode, infer_graph
from .errors import CausalmixError, ContractError, DataError, NumericError
from .evalkit import (BaselineConfig, auroc, forecast_mse, hard_edge_sample,
                      linear_granger, structural_accuracy)
from .nets import ModelConfig, pair_index
from .training import TrainConfig, fit, history_to_csv, split_shops

log = logging.getLogger("causalmix")

_SIM_KEYS = {"n_shops", "n_channels", "length", "n_structures",
             "narma_order", "mode", "context_dim", "edge_prob", "seed"}
_TRAIN_KEYS = {"lambda", "tau", "lr", "epochs", "batch", "prior_edge_prob",
               "early_stop_patience", "seed", "train_m", "straight_through",
               "kl_warmup", "mean_field", "dec_warmup", "alt_period",
               "holdout"}
_BASE_KEYS = {"lag", "ridge"}
_IO_KEYS = {"data_dir", "out_dir"}
_SECTIONS = {"sim": _SIM_KEYS, "train": _TRAIN_KEYS, "baseline": _BASE_KEYS,
             "io": _IO_KEYS}


def _setup_logging():
    level = {"error": logging.ERROR, "info": logging.INFO,
             "debug": logging.DEBUG}.get(
        os.environ.get("CMMM_LOG", "info").lower(), logging.INFO)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(message)s")


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ContractError(f"config {path} must be a JSON object")
    for section, body in doc.items():
        if section not in _SECTIONS:
            raise ContractError(f"unknown config section '{section}'")
        if not isinstance(body, dict):
            raise ContractError(f"config section '{section}' must be an object")
        unknown = set(body) - _SECTIONS[section]
        if unknown:
            raise ContractError(
                f"unknown keys in '{section}': {sorted(unknown)}")
    return doc


def _sim_config(doc, args):
    body = dict(doc.get("sim", {}))
    if getattr(args, "seed", None) is not None:
        body["seed"] = args.seed
    return SimConfig(**body).validate()


def _train_config(doc, args):
    body = dict(doc.get("train", {}))
    if "lambda" in body:
        body["lam"] = body.pop("lambda")
    if getattr(args, "seed", None) is not None:
        body["seed"] = args.seed
    if getattr(args, "lam", None) is not None:
        body["lam"] = args.lam
    if getattr(args, "tau", None) is not None:
        body["tau"] = args.tau
    return TrainConfig(**body).validate()


def _baseline_config(doc, args):
    body = dict(doc.get("baseline", {}))
    if getattr(args, "lag", None) is not None:
        body["lag"] = args.lag
    if getattr(args, "ridge", None) is not None:
        body["ridge"] = args.ridge
    return BaselineConfig(**body)


def _write_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")


def _write_run_config(out_dir, command, sections):
    os.makedirs(out_dir, exist_ok=True)
    payload = {"command": command}
    payload.update(sections)
    _write_json(os.path.join(out_dir, "run_config.json"), payload)


def _train_section(tcfg: TrainConfig):
    body = tcfg.to_dict()
    body["lambda"] = body.pop("lam")
    return body


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise _Usage(f"--{name.replace('_', '-')} is required")


class _Usage(Exception):
    pass


def _checkpoint_paths(ckpt, seeds=None):
    if os.path.isdir(ckpt):
        paths = sorted(glob.glob(os.path.join(ckpt, "**", "*.ckpt"),
                                 recursive=True))
    else:
        paths = [ckpt]
    if not paths:
        raise DataError(f"no checkpoints found under {ckpt}")
    if seeds is not None:
        paths = paths[:seeds]
    return paths


def _model_from_checkpoint(path):
    params, config = load_checkpoint(path)
    return params, ModelConfig.from_dict(config)


def _structure_eval_one(store, mcfg, dataset):
    accs, aucs = [], []
    for k, sample in enumerate(dataset.samples):
        logits = encode(sample, store, mcfg)
        adjacency, probs = infer_graph(logits)
        truth = dataset.graphs[k]
        accs.append(structural_accuracy(adjacency, truth))
        try:
            aucs.append(auroc(probs, truth))
        except ContractError:
            pass
    return float(np.mean(accs)), float(np.mean(aucs))


# ---------------------------------------------------------------------------
# subcommands

def _cmd_gen(args):
    _require(args, "out")
    doc = _load_config(args.config)
    cfg = _sim_config(doc, args)
    log.info("generating dataset: %s", cfg.to_dict())
    ds = generate_dataset(cfg)
    save_dataset(args.out, ds)
    _write_run_config(args.out, "gen", {"sim": cfg.to_dict(),
                                        "io": {"out_dir": args.out}})
    log.info("wrote %d shops to %s", cfg.n_shops, args.out)
    return 0


def _cmd_train(args):
    _require(args, "data", "out")
    doc = _load_config(args.config)
    tcfg = _train_config(doc, args)
    dataset = load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    log.info("training on %d shops (d=%d, T=%d)", dataset.n_shops,
             dataset.n_channels, dataset.length)

    def progress(row):
        if row["epoch"] % 10 == 0:
            log.info("epoch %d train %.4f val %.4f auroc %.3f",
                     row["epoch"], row["train_loss"], row["val_loss"],
                     row["val_auroc"])

    store, history, split, mcfg = fit(dataset, tcfg, progress=progress)
    save_checkpoint(os.path.join(args.out, "best.ckpt"), store,
                    mcfg.to_dict())
    history_to_csv(history, os.path.join(args.out, "history.csv"))
    _write_run_config(args.out, "train", {
        "train": _train_section(tcfg),
        "io": {"data_dir": args.data, "out_dir": args.out},
    })
    log.info("finished after %d epochs; best val loss %.4f",
             len(history), min(r["val_loss"] for r in history))
    return 0


def _cmd_eval_structure(args):
    _require(args, "ckpt", "data")
    dataset = load_dataset(args.data)
    if dataset.graphs is None:
        raise DataError("eval-structure needs a dataset with graphs.json")
    paths = _checkpoint_paths(args.ckpt, args.seeds)
    accs, aucs = [], []
    for path in paths:
        store, mcfg = _model_from_checkpoint(path)
        acc, auc = _structure_eval_one(store, mcfg, dataset)
        log.info("%s: ACC %.4f AUROC %.4f", path, acc, auc)
        accs.append(acc)
        aucs.append(auc)
    out_dir = args.out or (os.path.dirname(paths[0]) or ".")
    os.makedirs(out_dir, exist_ok=True)
    payload = {
        "dataset_id": os.path.basename(os.path.normpath(args.data)),
        "seeds": len(paths),
        "acc_mean": float(np.mean(accs)),
        "acc_std": float(np.std(accs)),
        "auroc_mean": float(np.mean(aucs)),
        "auroc_std": float(np.std(aucs)),
    }
    _write_json(os.path.join(out_dir, "metrics.json"), payload)
    _write_run_config(out_dir, "eval-structure",
                      {"io": {"data_dir": args.data, "out_dir": out_dir}})
    return 0


def _test_split_for(ckpt_path, n_shops):
    run_cfg = os.path.join(os.path.dirname(ckpt_path) or ".",
                           "run_config.json")
    if os.path.exists(run_cfg):
        with open(run_cfg) as f:
            doc = json.load(f)
        seed = doc.get("train", {}).get("seed")
        if seed is not None:
            test = split_shops(n_shops, seed)[2]
            if len(test):
                return test
    return np.arange(n_shops)


def _cmd_eval_forecast(args):
    _require(args, "ckpt", "data")
    dataset = load_dataset(args.data)
    store, mcfg = _model_from_checkpoint(args.ckpt)
    horizons = [int(h) for h in args.horizons.split(",")] if args.horizons \
        else [1, 7, 30]
    shops = _test_split_for(args.ckpt, dataset.n_shops)
    out_dir = args.out or (os.path.dirname(args.ckpt) or ".")
    os.makedirs(out_dir, exist_ok=True)
    mse = {}
    for h in horizons:
        mse[str(h)] = forecast_mse(store, mcfg, dataset, h, shops=shops)
        log.info("M=%d normalized MSE %.5f", h, mse[str(h)])
    _export_forecasts(store, mcfg, dataset, shops, horizons, out_dir)
    payload = {
        "dataset_id": os.path.basename(os.path.normpath(args.data)),
        "seeds": 1,
        "mse": mse,
    }
    _write_json(os.path.join(out_dir, "metrics.json"), payload)
    _write_run_config(out_dir, "eval-forecast",
                      {"io": {"data_dir": args.data, "out_dir": out_dir}})
    return 0


def _export_forecasts(store, mcfg, dataset, shops, horizons, out_dir):
    fdir = os.path.join(out_dir, "forecasts")
    os.makedirs(fdir, exist_ok=True)
    d = dataset.n_channels
    header = (["step"] + [f"mu_x{i + 1}" for i in range(d)]
              + ["mu_y", "y_descaled"])
    for k in shops:
        sample = dataset.samples[k]
        t_len = sample.x.shape[0]
        logits = encode(sample, store, mcfg)
        z = hard_edge_sample(logits)
        for h in horizons:
            fc = rollout(sample, z, burn_in=t_len - h, horizon=h,
                         store=store, cfg=mcfg)
            descaled = fc.target_descaled()
            path = os.path.join(fdir, f"shop_{k}_M{h}.csv")
            with open(path, "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(header)
                for m in range(h):
                    w.writerow([m + 1] + ["%.17g" % v for v in fc.mu[m]]
                               + ["%.17g" % descaled[m]])


def _cmd_infer(args):
    _require(args, "ckpt", "data")
    dataset = load_dataset(args.data)
    store, mcfg = _model_from_checkpoint(args.ckpt)
    out_dir = args.out or (os.path.dirname(args.ckpt) or ".")
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for k, sample in enumerate(dataset.samples):
        logits = encode(sample, store, mcfg)
        adjacency, probs = infer_graph(logits)
        records.append({
            "shop_id": k,
            "edge_probs": probs.tolist(),
            "adjacency": adjacency.astype(int).tolist(),
        })
    _write_json(os.path.join(out_dir, "structures.json"), records)
    _write_run_config(out_dir, "infer",
                      {"io": {"data_dir": args.data, "out_dir": out_dir}})
    return 0


def _cmd_baseline(args):
    _require(args, "data")
    doc = _load_config(args.config)
    bcfg = _baseline_config(doc, args)
    dataset = load_dataset(args.data)
    if dataset.graphs is None:
        raise DataError("baseline needs a dataset with graphs.json")
    accs, aucs = [], []
    for k, sample in enumerate(dataset.samples):
        scores = linear_granger(sample, bcfg)
        truth = dataset.graphs[k]
        accs.append(structural_accuracy((scores > 0.5).astype(int), truth))
        try:
            aucs.append(auroc(scores, truth))
        except ContractError:
            pass
    out_dir = args.out or args.data
    os.makedirs(out_dir, exist_ok=True)
    payload = {
        "dataset_id": os.path.basename(os.path.normpath(args.data)),
        "seeds": 1,
        "baseline": {
            "lag": bcfg.lag,
            "ridge": bcfg.ridge,
            "acc_mean": float(np.mean(accs)),
            "acc_std": float(np.std(accs)),
            "auroc_mean": float(np.mean(aucs)),
            "auroc_std": float(np.std(aucs)),
        },
    }
    _write_json(os.path.join(out_dir, "metrics.json"), payload)
    _write_run_config(out_dir, "baseline", {
        "baseline": {"lag": bcfg.lag, "ridge": bcfg.ridge},
        "io": {"data_dir": args.data, "out_dir": out_dir},
    })
    log.info("baseline AUROC %.4f", payload["baseline"]["auroc_mean"])
    return 0


# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="causalmix",
        description="Granger causal structure learning and forecasting "
                    "for marketing mix time series")
    sub = parser.add_subparsers(dest="command")
    commands = {
        "gen": _cmd_gen, "train": _cmd_train,
        "eval-structure": _cmd_eval_structure,
        "eval-forecast": _cmd_eval_forecast,
        "infer": _cmd_infer, "baseline": _cmd_baseline,
    }
    for name in commands:
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--data")
        p.add_argument("--out")
        p.add_argument("--ckpt")
        p.add_argument("--seed", type=int)
        p.add_argument("--seeds", type=int)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--tau", type=float)
        p.add_argument("--horizons")
        p.add_argument("--lag", type=int)
        p.add_argument("--ridge", type=float)
        p.add_argument("--threads", type=int)
        p.set_defaults(func=commands[name])
    return parser


def _apply_threads(n):
    if n is None:
        return
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=n)
    except ImportError:
        os.environ["OMP_NUM_THREADS"] = str(n)
        log.debug("threadpoolctl unavailable; set OMP_NUM_THREADS=%d", n)


def main(argv=None):
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    _apply_threads(args.threads)
    try:
        return args.func(args)
    except _Usage as e:
        print(f"ERROR usage: {e}", file=sys.stderr)
        return 1
    except (TypeError,) as e:
        print(f"ERROR config: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"ERROR numeric: {e}", file=sys.stderr)
        return 3
    except (DataError, ContractError) as e:
        print(f"ERROR data: {e}", file=sys.stderr)
        return 2
    except CausalmixError as e:
        print(f"ERROR internal: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
