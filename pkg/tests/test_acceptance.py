"""Acceptance suite: twelve end-to-end criteria, one pass/fail line each.

Training-heavy criteria reuse checkpoints cached under tests/_cache (see
acceptance_utils.train_cached); delete that directory to retrain from
scratch.
"""

import json

import numpy as np
import pytest
import scipy.stats

from causalmix import autodiff as ad
from causalmix.cli import main
from causalmix.datagen import substream
from causalmix.decoder import init_state, step
from causalmix.encoder import EdgeLogits, EdgeSample, np_softmax
from causalmix.evalkit import (BaselineConfig, auroc, forecast_mse,
                               linear_granger, persistence_mse,
                               var_forecast_mse)
from causalmix.nets import ModelConfig, init_params, normalize_batch, \
    pair_index
from causalmix.training import TrainConfig, elbo_batch, fit
from causalmix.nets import bind_params

from acceptance_utils import (SIM1, SIM2, TRAIN1, TRAIN2, dataset, report,
                              structure_scores, subset, train_cached)
from test_metrics import brute_force_auroc

N_SEEDS = 10


# ---------------------------------------------------------------------------
# 1. structure recovery on the d=5 benchmark

def test_criterion_01_structure_sim1():
    aucs, accs, walls = [], [], []
    for seed in range(N_SEEDS):
        store, mcfg, meta = train_cached({**SIM1, "seed": seed},
                                         {**TRAIN1, "seed": seed})
        a, c = structure_scores(store, mcfg, dataset(**SIM1, seed=seed))
        aucs.append(a)
        accs.append(c)
        walls.append(meta["wall_s"])
    mean_auc, mean_acc = np.mean(aucs), np.mean(accs)
    ok = mean_auc >= 0.85 and mean_acc >= 0.85 and max(walls) <= 1800
    report(1, "structure recovery, benchmark 1",
           ok, f"mean AUROC {mean_auc:.3f} (need >=0.85), "
               f"mean ACC {mean_acc:.3f} (need >=0.85), "
               f"max wall {max(walls):.0f}s (cap 1800s)")
    assert mean_auc >= 0.85
    assert mean_acc >= 0.85
    assert max(walls) <= 1800


# ---------------------------------------------------------------------------
# 2. structure recovery on the d=10 benchmark

def _sim2_runs():
    out = []
    for seed in range(N_SEEDS):
        store, mcfg, meta = train_cached({**SIM2, "seed": seed},
                                         {**TRAIN2, "seed": seed})
        out.append((seed, store, mcfg, meta))
    return out


def test_criterion_02_structure_sim2():
    aucs = []
    for seed, store, mcfg, _ in _sim2_runs():
        a, _ = structure_scores(store, mcfg, dataset(**SIM2, seed=seed))
        aucs.append(a)
    mean_auc = float(np.mean(aucs))
    report(2, "structure recovery, benchmark 2",
           mean_auc >= 0.82, f"mean AUROC {mean_auc:.3f} (need >=0.82)")
    assert mean_auc >= 0.82


# ---------------------------------------------------------------------------
# 3. gap over the ridge-VAR Granger baseline

def test_criterion_03_baseline_gap():
    model_aucs, base_aucs = [], []
    bcfg = BaselineConfig(lag=5, ridge=1.0)
    for seed, store, mcfg, _ in _sim2_runs():
        ds = dataset(**SIM2, seed=seed)
        a, _ = structure_scores(store, mcfg, ds)
        model_aucs.append(a)
        base_aucs.append(np.mean([
            auroc(linear_granger(s, bcfg), g)
            for s, g in zip(ds.samples, ds.graphs)]))
    gap = float(np.mean(model_aucs) - np.mean(base_aucs))
    report(3, "baseline gap",
           gap >= 0.15, f"model {np.mean(model_aucs):.3f} vs "
                        f"linear Granger {np.mean(base_aucs):.3f}, "
                        f"gap {gap:.3f} (need >=0.15)")
    assert gap >= 0.15


# ---------------------------------------------------------------------------
# 4. series-length sensitivity

LENGTH_SWEEP = (30, 120, 720)
SWEEP_SHOPS = 50  # d=10 generator at a budget-friendly panel size


def _length_auroc(t_len):
    sim = {**SIM2, "n_shops": SWEEP_SHOPS, "length": t_len, "seed": 0}
    train = {**TRAIN2, "seed": 0}
    if t_len >= 720:
        train["batch"] = 4  # keep the tape within memory at long horizons
    store, mcfg, _ = train_cached(sim, train)
    a, _ = structure_scores(store, mcfg, dataset(**sim))
    return a


def test_criterion_04_length_sensitivity():
    aucs = [_length_auroc(t) for t in LENGTH_SWEEP]
    monotone = aucs[0] <= aucs[1] <= aucs[2]
    # least-squares line in log-length; all residuals within the band
    x = np.log(LENGTH_SWEEP)
    coef = np.polyfit(x, aucs, 1)
    resid = np.abs(np.polyval(coef, x) - aucs)
    ok = monotone and np.all(resid <= 0.08)
    report(4, "length sensitivity", ok,
           "AUROC " + " <= ".join(f"{a:.3f}" for a in aucs)
           + f" at T={LENGTH_SWEEP}, max trend residual {resid.max():.3f}"
             " (band 0.08)")
    assert monotone
    assert np.all(resid <= 0.08)


# ---------------------------------------------------------------------------
# 5. prior-weight sensitivity

LAM_SWEEP = (1.0, 10.0, 100.0, 1000.0)


def test_criterion_05_lambda_sensitivity():
    aucs = []
    for lam in LAM_SWEEP:
        sim = {**SIM1, "seed": 0}
        store, mcfg, _ = train_cached(sim, {**TRAIN1, "seed": 0, "lam": lam})
        a, _ = structure_scores(store, mcfg, dataset(**sim))
        aucs.append(a)
    best = int(np.argmax(aucs))
    interior = best in (1, 2)
    report(5, "lambda sensitivity", interior,
           "AUROC " + ", ".join(f"{l:g}:{a:.3f}"
                                for l, a in zip(LAM_SWEEP, aucs))
           + f"; max at lambda={LAM_SWEEP[best]:g}"
             " (need interior)")
    assert interior


# ---------------------------------------------------------------------------
# 6. hard-zero edges block information bit-exactly

def _reach(adjacency):
    n = adjacency.shape[0]
    closure = adjacency.astype(bool)
    for _ in range(n):
        closure = closure | (closure @ closure)
    return closure


def test_criterion_06_granger_invariance():
    checked = 0
    trial = 0
    while checked < 100:
        rng = substream(600, trial)
        trial += 1
        d = int(rng.integers(2, 6))
        n = d + 1
        mcfg = ModelConfig(n_channels=d, length=20, enc_hidden=8,
                           dec_edge_hidden=6, dec_msg=4, dec_hidden=6,
                           pre_hidden=6, ctx_hidden=4)
        adjacency = (rng.uniform(size=(n, n)) < 0.3).astype(int)
        np.fill_diagonal(adjacency, 0)
        blocked = np.argwhere(~_reach(adjacency)
                              & ~np.eye(n, dtype=bool))
        if len(blocked) == 0:
            continue
        i, j = blocked[rng.integers(len(blocked))]
        store = init_params(mcfg, rng)
        w1 = pair_index(n).from_matrix(adjacency).astype(float)
        z = EdgeSample(z=np.stack([1.0 - w1, w1], axis=-1), n_nodes=n)
        obs = rng.normal(size=(6, n))
        perturbed = obs.copy()
        perturbed[:, i] += rng.normal(scale=5.0, size=6)
        state_a = state_b = init_state(mcfg)
        for t in range(6):
            state_a, mu_a = step(obs[t], state_a, z, np.zeros(0), store,
                                 mcfg)
            state_b, mu_b = step(perturbed[t], state_b, z, np.zeros(0),
                                 store, mcfg)
            assert mu_a[j] == mu_b[j]  # bit-level
        checked += 1
    report(6, "Granger invariance", True,
           f"{checked} random models, blocked pairs bit-identical over "
           "6 teacher-forced steps")


# ---------------------------------------------------------------------------
# 7. finite-difference gradient checks across random configurations

def test_criterion_07_gradient_suite():
    worst = 0.0
    for trial in range(50):
        rng = substream(700, trial)
        d = int(rng.integers(2, 5))
        t_len = int(rng.integers(10, 25))
        ctx = int(rng.choice([0, 2]))
        mcfg = ModelConfig(n_channels=d, length=t_len, context_dim=ctx,
                           enc_hidden=int(rng.integers(4, 9)),
                           dec_edge_hidden=6, dec_msg=4,
                           dec_hidden=int(rng.integers(4, 9)),
                           pre_hidden=6, ctx_hidden=4)
        tcfg = TrainConfig(lam=float(rng.uniform(1, 100)),
                           tau=float(rng.uniform(0.3, 1.0)))
        store = init_params(mcfg, rng)
        b = 2
        n = mcfg.n_nodes
        obs = rng.normal(size=(b, t_len, n))
        obs[:, :, -1] = rng.uniform(0.1, 0.9, size=(b, t_len))
        contexts = rng.normal(size=(b, ctx))
        noise = rng.gumbel(size=(b, n * (n - 1), 2))

        def loss_fn():
            tape = ad.Tape()
            p = bind_params(store, tape)
            loss, _, _ = elbo_batch(obs, contexts, p, mcfg, tcfg, noise)
            return ad.mul(loss, 1e-3)

        loss = loss_fn()
        grads = {leaf.name: g for leaf, g in ad.backward(loss).items()}
        blocks = ["enc.emb.w1", "enc.edge1.w2", "enc.vertex.w1",
                  "enc.edge2.w2", "dec.edge.w1", "dec.gru.whc",
                  "dec.pre.w2", "dec.alpha.b2", "dec.gamma.b2"]
        for name in blocks:
            arr = store[name]
            idx = tuple(rng.integers(0, s) for s in arr.shape)
            eps = 1e-6
            old = arr[idx]
            arr[idx] = old + eps
            fp = float(loss_fn().value)
            arr[idx] = old - eps
            fm = float(loss_fn().value)
            arr[idx] = old
            fd = (fp - fm) / (2 * eps)
            g = grads[name][idx]
            rel = abs(fd - g) / max(1.0, abs(fd), abs(g))
            worst = max(worst, rel)
            assert rel < 1e-4, (trial, name, rel)
    report(7, "gradient suite", True,
           f"50 configurations x 9 blocks, worst relative error "
           f"{worst:.2e} (need < 1e-4)")


# ---------------------------------------------------------------------------
# 8. Gumbel-softmax sampling frequencies

def test_criterion_08_gumbel_sampling():
    draws = 10 ** 5
    worst_p = 1.0
    for pair in range(20):
        rng = substream(800, pair)
        logits = rng.normal(scale=1.5, size=2)
        g = rng.gumbel(size=(draws, 2))
        wins = np.argmax(logits + g, axis=1)
        counts = np.bincount(wins, minlength=2)
        expected = np_softmax(logits) * draws
        p_val = scipy.stats.chisquare(counts, expected).pvalue
        worst_p = min(worst_p, p_val)
        assert p_val > 0.01, (pair, p_val)
    report(8, "sampling suite", True,
           f"20 logit pairs x 1e5 draws, min chi-square p {worst_p:.3f} "
           "(need > 0.01)")


# ---------------------------------------------------------------------------
# 9. AUROC against brute-force ROC integration

def test_criterion_09_auroc_oracle():
    worst = 0.0
    rng = substream(900)
    for _ in range(1000):
        n = int(rng.integers(3, 6))  # up to 20 ordered pairs
        e = n * (n - 1)
        labels = rng.integers(0, 2, size=e)
        if labels.sum() in (0, e):
            labels[0] = 1 - labels[0]
        scores = rng.integers(0, 5, size=e) / 4.0
        pi = pair_index(n)
        got = auroc(pi.to_matrix(scores), pi.to_matrix(labels))
        want = brute_force_auroc(scores.astype(float), labels)
        worst = max(worst, abs(got - want))
        assert abs(got - want) <= 1e-9
    report(9, "AUROC oracle", True,
           f"1000 instances, max |rank - sweep| {worst:.1e} (tol 1e-9)")


# ---------------------------------------------------------------------------
# 10. training time linear in dataset size

def test_criterion_10_linear_scaling():
    import time
    ds = dataset(**SIM2, seed=0)
    fractions = [0.2, 0.4, 0.6, 0.8, 1.0]
    times = []
    for f in fractions:
        sub = subset(ds, int(f * len(ds.samples)))
        tcfg = TrainConfig(epochs=3, batch=16, seed=0,
                           early_stop_patience=10 ** 6)
        tic = time.perf_counter()
        fit(sub, tcfg)
        times.append(time.perf_counter() - tic)
    x = np.asarray(fractions)
    y = np.asarray(times)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    r2 = 1.0 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2)
    report(10, "complexity", r2 >= 0.95,
           "wall s " + ", ".join(f"{f:.0%}:{t:.1f}"
                                 for f, t in zip(fractions, times))
           + f"; linear fit R^2 {r2:.3f} (need >=0.95)")
    assert r2 >= 0.95


# ---------------------------------------------------------------------------
# 11. forecasting beats the reference predictors

def test_criterion_11_forecasting():
    store, mcfg, meta = train_cached({**SIM2, "seed": 0},
                                     {**TRAIN2, "seed": 0})
    ds = dataset(**SIM2, seed=0)
    shops = meta["split"]["test"]
    bcfg = BaselineConfig(lag=5, ridge=1.0)
    rows = []
    ok = True
    for m in (1, 7, 30):
        model = forecast_mse(store, mcfg, ds, m, shops=shops)
        persist = persistence_mse(ds, m, shops=shops)
        var = var_forecast_mse(ds, bcfg, m, shops=shops)
        good = model < persist and (m == 30 or model < var)
        ok = ok and good
        rows.append(f"M={m}: model {model:.4f} vs persistence "
                    f"{persist:.4f} vs VAR {var:.4f}")
    report(11, "forecasting", ok, "; ".join(rows))
    assert ok


# ---------------------------------------------------------------------------
# 12. byte-identical reruns

def test_criterion_12_determinism(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({
        "sim": {"n_shops": 10, "n_channels": 3, "length": 40,
                "n_structures": 2, "seed": 3},
        "train": {"epochs": 3, "batch": 4, "seed": 3, "lr": 1e-3},
    }))
    outputs = []
    for run in ("a", "b"):
        root = tmp_path / run
        assert main(["gen", "--config", str(cfg),
                     "--out", str(root / "data")]) == 0
        assert main(["train", "--config", str(cfg),
                     "--data", str(root / "data"),
                     "--out", str(root / "run")]) == 0
        assert main(["eval-structure", "--ckpt", str(root / "run"),
                     "--data", str(root / "data"),
                     "--out", str(root / "eval")]) == 0
        outputs.append((root / "eval" / "metrics.json").read_bytes())
    identical = outputs[0] == outputs[1]
    report(12, "determinism", identical,
           "gen/train/eval metrics.json byte-identical across two runs"
           if identical else "outputs differ")
    assert identical
