"""Structure-recovery metrics, forecasting error, and the ridge-VAR
Granger baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoder import rollout
from .encoder import EdgeSample, encode, gumbel_sample, infer_graph
from .errors import ContractError
from .nets import fit_scaler, pair_index


@dataclass
class StructureScore:
    acc: float
    auroc: float
    n_edges_evaluated: int


@dataclass
class BaselineConfig:
    lag: int = 5
    ridge: float = 1.0

    def validate(self, t_len=None):
        if self.lag < 1:
            raise ContractError("lag must be >= 1")
        if self.ridge < 0:
            raise ContractError("ridge must be nonnegative")
        if t_len is not None and self.lag >= t_len:
            raise ContractError("lag must be smaller than the series length")
        return self


def _offdiag(matrix):
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError(f"expected a square matrix, got {m.shape}")
    return pair_index(m.shape[0]).from_matrix(m)


def structural_accuracy(pred, truth) -> float:
    """Fraction of off-diagonal ordered pairs on which the graphs agree."""
    p, t = np.asarray(pred), np.asarray(truth)
    if p.shape != t.shape:
        raise ContractError(f"graph shapes differ: {p.shape} vs {t.shape}")
    return float(np.mean(_offdiag(p) == _offdiag(t)))


def _average_ranks(x):
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(edge_probs, truth) -> float:
    """Tie-aware rank-statistic AUROC over off-diagonal ordered pairs."""
    scores = _offdiag(edge_probs)
    labels = _offdiag(truth).astype(int)
    if np.any(scores < 0) or np.any(scores > 1):
        raise ContractError("edge scores must lie in [0, 1]")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUROC undefined: truth has a single class")
    ranks = _average_ranks(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0)
                 / (n_pos * n_neg))


def score_structure(pred_probs, pred_adjacency, truth) -> StructureScore:
    n = np.asarray(truth).shape[0]
    return StructureScore(
        acc=structural_accuracy(pred_adjacency, truth),
        auroc=auroc(pred_probs, truth),
        n_edges_evaluated=n * (n - 1),
    )


def hard_edge_sample(logits) -> EdgeSample:
    """Deterministic one-hot edges from noise-free probabilities."""
    probs = np.exp(logits.logits - logits.logits.max(axis=-1, keepdims=True))
    probs /= probs.sum(axis=-1, keepdims=True)
    hard = np.zeros_like(probs)
    np.put_along_axis(hard, np.argmax(probs, axis=-1)[..., None], 1.0,
                      axis=-1)
    return EdgeSample(z=hard, n_nodes=logits.n_nodes)


def forecast_mse(store, mcfg, dataset, horizon, shops=None) -> float:
    """Mean squared error of the target over the final `horizon` steps of
    each shop, in normalized units, with burn_in = T - horizon."""
    samples = dataset.samples if hasattr(dataset, "samples") else dataset
    if shops is not None:
        samples = [samples[i] for i in shops]
    if not samples:
        raise ContractError("no shops to evaluate")
    t_len = samples[0].x.shape[0]
    if t_len <= horizon:
        raise ContractError("series length must exceed the horizon")
    errs = []
    for s in samples:
        logits = encode(s, store, mcfg)
        z = hard_edge_sample(logits)
        fc = rollout(s, z, burn_in=t_len - horizon, horizon=horizon,
                     store=store, cfg=mcfg)
        truth = fc.scaler.transform(s.x, s.y)[t_len - horizon:, -1]
        errs.append(np.mean((fc.target - truth) ** 2))
    return float(np.mean(errs))


def persistence_mse(dataset, horizon, shops=None) -> float:
    """Copy-last-value baseline on the normalized target."""
    samples = dataset.samples if hasattr(dataset, "samples") else dataset
    if shops is not None:
        samples = [samples[i] for i in shops]
    errs = []
    for s in samples:
        obs = fit_scaler(s).transform(s.x, s.y)
        t_len = obs.shape[0]
        last = obs[t_len - horizon - 1, -1]
        truth = obs[t_len - horizon:, -1]
        errs.append(np.mean((truth - last) ** 2))
    return float(np.mean(errs))


# ---------------------------------------------------------------------------
# ridge-regularized VAR baseline

def _var_fit(series, lag, ridge):
    """Ridge VAR(lag) coefficients. series: (T, n) standardized.
    Returns beta of shape (lag * n, n): rows ordered lag-1 first."""
    t_len, n = series.shape
    rows = t_len - lag
    design = np.empty((rows, lag * n))
    for k in range(lag):
        design[:, k * n:(k + 1) * n] = series[lag - 1 - k:t_len - 1 - k]
    target = series[lag:]
    gram = design.T @ design + ridge * np.eye(lag * n)
    try:
        return np.linalg.solve(gram, design.T @ target)
    except np.linalg.LinAlgError as e:
        raise ContractError(
            "singular normal equations; use ridge > 0") from e


def _standardize(series):
    mean = series.mean(axis=0)
    std = np.maximum(series.std(axis=0), 1e-12)
    return (series - mean) / std


def linear_granger(sample, cfg: BaselineConfig):
    """Edge scores from a jointly fit ridge VAR: score(i -> j) sums the
    absolute coefficients of i's lags in j's equation, min-max rescaled
    to [0, 1] per shop with a zero diagonal."""
    series = np.column_stack([sample.x, sample.y])
    cfg.validate(t_len=series.shape[0])
    n = series.shape[1]
    beta = _var_fit(_standardize(series), cfg.lag, cfg.ridge)
    scores = np.zeros((n, n))
    for k in range(cfg.lag):
        scores += np.abs(beta[k * n:(k + 1) * n, :])
    np.fill_diagonal(scores, 0.0)
    off = pair_index(n).from_matrix(scores)
    lo, hi = off.min(), off.max()
    span = hi - lo if hi > lo else 1.0
    rescaled = (scores - lo) / span
    np.fill_diagonal(rescaled, 0.0)
    return rescaled


def var_forecast(sample, cfg: BaselineConfig, burn_in, horizon):
    """Recursive VAR forecast of the normalized target for the final
    `horizon` steps; the model is fit on the first `burn_in` steps."""
    scaler = fit_scaler(sample)
    obs = scaler.transform(sample.x, sample.y)
    cfg.validate(t_len=burn_in)
    n = obs.shape[1]
    train = obs[:burn_in]
    mean = train.mean(axis=0)
    std = np.maximum(train.std(axis=0), 1e-12)
    beta = _var_fit((train - mean) / std, cfg.lag, cfg.ridge)
    window = ((train[-cfg.lag:] - mean) / std)[::-1].copy()  # newest first
    preds = []
    for _ in range(horizon):
        nxt = window.reshape(1, -1) @ beta
        preds.append(nxt[0])
        window = np.vstack([nxt, window[:-1]])
    preds = np.array(preds) * std + mean
    return preds  # (horizon, n) in normalized units


def var_forecast_mse(dataset, cfg: BaselineConfig, horizon, shops=None):
    samples = dataset.samples if hasattr(dataset, "samples") else dataset
    if shops is not None:
        samples = [samples[i] for i in shops]
    errs = []
    for s in samples:
        t_len = s.x.shape[0]
        preds = var_forecast(s, cfg, burn_in=t_len - horizon, horizon=horizon)
        truth = fit_scaler(s).transform(s.x, s.y)[t_len - horizon:, -1]
        errs.append(np.mean((preds[:, -1] - truth) ** 2))
    return float(np.mean(errs))
