"""Dataset directory layout used by the CLI.

    manifest.json   {format_version, n_shops, n_channels, length,
                     context_dim, mode, seed}
    shops/shop_<k>.csv   header t,x1,...,xd,y
    contexts.csv    header shop_id,c1,...,cp (absent when context_dim=0)
    graphs.json     per-shop 0/1 adjacency arrays (optional; synthetic data)
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .datagen import GroundTruthDataset, ShopSample
from .errors import DataError

FORMAT_VERSION = 1
_FMT = "%.17g"


@dataclass
class Dataset:
    samples: list
    graphs: list | None
    manifest: dict

    @property
    def n_shops(self):
        return len(self.samples)

    @property
    def n_channels(self):
        return self.manifest["n_channels"]

    @property
    def length(self):
        return self.manifest["length"]

    @property
    def context_dim(self):
        return self.manifest["context_dim"]


def save_dataset(path, ds: GroundTruthDataset):
    os.makedirs(os.path.join(path, "shops"), exist_ok=True)
    cfg = ds.config
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_shops": cfg.n_shops,
        "n_channels": cfg.n_channels,
        "length": cfg.length,
        "context_dim": cfg.context_dim,
        "mode": cfg.mode,
        "seed": cfg.seed,
    }
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
    d = cfg.n_channels
    header = ["t"] + [f"x{i + 1}" for i in range(d)] + ["y"]
    for k, s in enumerate(ds.samples):
        with open(os.path.join(path, "shops", f"shop_{k}.csv"), "w",
                  newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            for t in range(cfg.length):
                w.writerow([t] + [_FMT % v for v in s.x[t]]
                           + [_FMT % s.y[t]])
    if cfg.context_dim > 0:
        with open(os.path.join(path, "contexts.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["shop_id"] + [f"c{i + 1}" for i in range(cfg.context_dim)])
            for k, s in enumerate(ds.samples):
                w.writerow([k] + [_FMT % v for v in s.context])
    if ds.graphs is not None:
        with open(os.path.join(path, "graphs.json"), "w") as f:
            json.dump([g.astype(int).tolist() for g in ds.graphs], f)


def load_dataset(path) -> Dataset:
    mpath = os.path.join(path, "manifest.json")
    try:
        with open(mpath) as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read {mpath}: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported dataset format in {mpath}")
    n, d, T = manifest["n_shops"], manifest["n_channels"], manifest["length"]
    p = manifest["context_dim"]

    contexts = np.zeros((n, p))
    if p > 0:
        cpath = os.path.join(path, "contexts.csv")
        try:
            rows = list(csv.reader(open(cpath)))
        except OSError as e:
            raise DataError(f"cannot read {cpath}: {e}") from e
        for row in rows[1:]:
            contexts[int(row[0])] = [float(v) for v in row[1:]]

    samples = []
    for k in range(n):
        spath = os.path.join(path, "shops", f"shop_{k}.csv")
        try:
            with open(spath) as f:
                rows = list(csv.reader(f))
        except OSError as e:
            raise DataError(f"cannot read {spath}: {e}") from e
        if len(rows) != T + 1 or len(rows[0]) != d + 2:
            raise DataError(f"malformed shop file {spath}")
        try:
            body = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
        except ValueError as e:
            raise DataError(f"malformed number in {spath}: {e}") from e
        samples.append(ShopSample(x=body[:, :d], y=body[:, d],
                                  context=contexts[k]))

    graphs = None
    gpath = os.path.join(path, "graphs.json")
    if os.path.exists(gpath):
        try:
            with open(gpath) as f:
                raw = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read {gpath}: {e}") from e
        graphs = [np.array(g, dtype=np.int8) for g in raw]
        if len(graphs) != n or any(g.shape != (d + 1, d + 1) for g in graphs):
            raise DataError(f"graphs.json does not match manifest in {path}")
    return Dataset(samples=samples, graphs=graphs, manifest=manifest)
