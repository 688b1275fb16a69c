"""Shared helpers for the acceptance suite.

Training runs that take minutes are cached on disk under tests/_cache,
keyed by a hash of the generator and trainer configurations, so repeated
suite runs only pay the cost once.
"""

import json
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from causalmix.checkpoint import config_hash, load_checkpoint, save_checkpoint
from causalmix.datagen import SimConfig, generate_dataset
from causalmix.encoder import encode, infer_graph
from causalmix.evalkit import auroc, structural_accuracy
from causalmix.nets import ModelConfig
from causalmix.training import TrainConfig, fit

CACHE = Path(__file__).resolve().parent / "_cache"

SIM1 = dict(n_shops=50, n_channels=5, length=120, n_structures=5,
            mode="sim1")
SIM2 = dict(n_shops=100, n_channels=10, length=120, n_structures=5,
            mode="sim2", context_dim=2)

# reference trainer settings for the benchmark scale (d=5 and d=10)
TRAIN1 = dict(lam=10.0, lr=2e-3, epochs=400, batch=16, kl_warmup=100,
              early_stop_patience=400)
TRAIN2 = dict(lam=10.0, lr=2e-3, epochs=400, batch=16, kl_warmup=100,
              early_stop_patience=400)

_DATASETS = {}


def dataset(**sim_kwargs):
    """Deterministic dataset, memoized in process."""
    key = tuple(sorted(sim_kwargs.items()))
    if key not in _DATASETS:
        _DATASETS[key] = generate_dataset(SimConfig(**sim_kwargs))
    return _DATASETS[key]


def subset(ds, n_shops):
    return SimpleNamespace(samples=ds.samples[:n_shops],
                           graphs=None if ds.graphs is None
                           else ds.graphs[:n_shops])


def train_cached(sim_kwargs, train_kwargs):
    """Returns (store, mcfg, meta); trains at most once per configuration."""
    CACHE.mkdir(exist_ok=True)
    h = config_hash({"sim": dict(sim_kwargs), "train": dict(train_kwargs)})
    ckpt_path = CACHE / f"model-{h}.ckpt"
    meta_path = CACHE / f"meta-{h}.json"
    if ckpt_path.exists() and meta_path.exists():
        store, mconf = load_checkpoint(str(ckpt_path))
        meta = json.loads(meta_path.read_text())
        return store, ModelConfig(**mconf), meta
    ds = dataset(**sim_kwargs)
    tic = time.perf_counter()
    store, history, split, mcfg = fit(ds, TrainConfig(**train_kwargs))
    wall = time.perf_counter() - tic
    meta = {
        "wall_s": wall,
        "epochs_run": len(history),
        "split": split,
        "best_val_loss": min(r["val_loss"] for r in history),
    }
    save_checkpoint(str(ckpt_path), store, mcfg.to_dict())
    meta_path.write_text(json.dumps(meta, sort_keys=True))
    return store, mcfg, meta


def structure_scores(store, mcfg, ds, shops=None):
    """Mean (AUROC, ACC) of the inferred graphs against ground truth."""
    idx = range(len(ds.samples)) if shops is None else shops
    aucs, accs = [], []
    for k in idx:
        logits = encode(ds.samples[k], store, mcfg)
        adjacency, prob_matrix = infer_graph(logits)
        aucs.append(auroc(prob_matrix, ds.graphs[k]))
        accs.append(structural_accuracy(adjacency, ds.graphs[k]))
    return float(np.mean(aucs)), float(np.mean(accs))


def report(num, name, ok, detail):
    print(f"criterion {num:02d} [{name}]: "
          f"{'PASS' if ok else 'FAIL'} — {detail}", flush=True)
