"""Synthetic marketing-mix data with known ground-truth causal graphs.

Each shop gets one of R latent directed graphs over d channel nodes plus
the target node (index d). Source channels follow a NARMA-K recurrence,
child channels and the target are lagged nonlinear functions of their
parents' recent windows, and in "sim2" mode the target additionally
passes through a context-dependent Hill saturation curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, GenerationError

NOISE_STD = 0.1          # zero-mean noise with 0.01 variance
COEF_STD = np.sqrt(0.1)  # NARMA coefficients ~ Normal(0, 0.1)
CLIP = 10.0
MAX_GRAPH_TRIES = 1000
MAX_REGEN = 20
# keeps sim2 targets strictly inside (0, 1) at the rescaled minimum
RESCALE_FLOOR = 1e-6


def substream(seed, *key):
    """Deterministic, independent generator for a (seed, key...) pair."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed),
                                                        spawn_key=tuple(key)))


@dataclass
class SimConfig:
    n_shops: int = 50
    n_channels: int = 5
    length: int = 120
    n_structures: int = 5
    narma_order: int = 5
    mode: str = "sim1"
    context_dim: int = 0
    edge_prob: float = 0.3
    seed: int = 0

    def validate(self):
        if not (self.n_shops >= self.n_structures >= 1):
            raise ContractError("need n_shops >= n_structures >= 1")
        if self.n_channels < 2:
            raise ContractError("need at least 2 channels")
        if not (self.length > self.narma_order >= 1):
            raise ContractError("need length > narma_order >= 1")
        if self.mode not in ("sim1", "sim2"):
            raise ContractError(f"unknown mode '{self.mode}'")
        if self.mode == "sim2" and self.context_dim < 2:
            raise ContractError("sim2 requires context_dim >= 2")
        if self.mode == "sim1" and self.context_dim != 0:
            raise ContractError("sim1 requires context_dim == 0")
        if not (0.0 < self.edge_prob < 1.0):
            raise ContractError("edge_prob must lie in (0, 1)")
        return self

    def to_dict(self):
        return {
            "n_shops": self.n_shops, "n_channels": self.n_channels,
            "length": self.length, "n_structures": self.n_structures,
            "narma_order": self.narma_order, "mode": self.mode,
            "context_dim": self.context_dim, "edge_prob": self.edge_prob,
            "seed": self.seed,
        }


@dataclass
class ShopGenParams:
    """Per-shop generator coefficients; nonzero weights only on graph edges."""
    narma: np.ndarray          # (d, 3) alpha, beta, gamma per channel
    child_w: np.ndarray        # (d, d, K) omega * eta for channel edges
    target_w: np.ndarray       # (d, K) omega * eta for edges into the target
    context: np.ndarray        # (context_dim,)


@dataclass
class ShopSample:
    x: np.ndarray              # (T, d) channel spends
    y: np.ndarray              # (T,) target
    context: np.ndarray        # (context_dim,)


@dataclass
class GroundTruthDataset:
    samples: list
    graphs: list               # per-shop (d+1, d+1) 0/1 arrays, row i -> col j
    structure_assignment: np.ndarray
    config: SimConfig
    templates: list = field(default_factory=list)


def _propose_graph(d, edge_prob, rng):
    a = (rng.random((d + 1, d + 1)) < edge_prob).astype(np.int8)
    np.fill_diagonal(a, 0)
    a[d, :] = 0  # the target is a sink
    return a


def _graph_ok(a, d):
    if a[:, d].sum() < 1:
        return False  # target needs at least one parent
    channel_sources = np.sum(a[:, :d].sum(axis=0) == 0)
    return channel_sources >= 1


def sample_structures(cfg: SimConfig, rng):
    """R distinct directed graphs satisfying the sink/source constraints."""
    cfg.validate()
    d = cfg.n_channels
    graphs = []
    seen = set()
    for _ in range(cfg.n_structures):
        for _ in range(MAX_GRAPH_TRIES):
            a = _propose_graph(d, cfg.edge_prob, rng)
            if not _graph_ok(a, d):
                continue
            key = a.tobytes()
            if key in seen:
                continue
            seen.add(key)
            graphs.append(a)
            break
        else:
            raise GenerationError(
                f"could not sample {cfg.n_structures} valid graphs with "
                f"d={d}, edge_prob={cfg.edge_prob}")
    return graphs


def _lag_profile(K, rng):
    """Per-edge lag weights: a geometric recency template with per-shop
    jitter, positive overall gain. Couplings share a common functional
    shape across shops (so a cross-shop model can exploit them) while
    remaining heterogeneous in detail."""
    template = 0.5 ** np.arange(K - 1, -1, -1)   # newest lag heaviest
    eta = template / np.linalg.norm(template) + 0.15 * rng.normal(size=K)
    eta /= np.linalg.norm(eta)
    return np.abs(rng.normal(1.0, 0.25)) * eta


def draw_shop_params(graph, cfg: SimConfig, seed, shop_index):
    """Coefficients drawn from per-channel substreams so that each
    channel's randomness is independent of the others'."""
    d = cfg.n_channels
    K = cfg.narma_order
    narma = np.zeros((d, 3))
    child_w = np.zeros((d, d, K))
    target_w = np.zeros((d, K))
    for j in range(d):
        r = substream(seed, 1, shop_index, j)
        narma[j] = r.normal(0.0, COEF_STD, size=3)
        for i in range(d):
            if graph[i, j]:
                child_w[i, j] = _lag_profile(K, r)
    rt = substream(seed, 1, shop_index, d)
    for i in range(d):
        if graph[i, d]:
            target_w[i] = _lag_profile(K, rt)
    rc = substream(seed, 2, shop_index)
    context = rc.random(cfg.context_dim)
    return ShopGenParams(narma=narma, child_w=child_w,
                         target_w=target_w, context=context)


def _channel_noise(cfg, seed, shop_index, attempt):
    d, T = cfg.n_channels, cfg.length
    eps = np.empty((T, d))
    for j in range(d):
        r = substream(seed, 3, shop_index, j, attempt)
        eps[:, j] = r.normal(0.0, NOISE_STD, size=T)
    return eps


def _simulate_channels(graph, params, cfg, eps):
    d, T, K = cfg.n_channels, cfg.length, cfg.narma_order
    is_source = graph[:d, :d].sum(axis=0) == 0
    alpha, beta, gamma = params.narma.T
    x = np.zeros((T, d))
    x[:K] = eps[:K]
    n_clipped = np.zeros(d, dtype=int)
    for t in range(K, T):
        window = x[t - K:t]                      # (K, d), lags t-K .. t-1
        th = np.tanh(window)
        child = np.einsum("ijk,ki->j", params.child_w, th)
        src = (alpha * x[t - 1]
               + beta * x[t - 1] * window.sum(axis=0)
               + gamma * eps[t - K] * eps[t - 1]
               + eps[t])
        row = np.where(is_source, src, child + eps[t])
        clipped = np.clip(row, -CLIP, CLIP)
        n_clipped += clipped != row
        x[t] = clipped
    return x, n_clipped


def generate_channels(graph, params, cfg: SimConfig, seed, shop_index=0):
    """T x d channel matrix; regenerates with fresh coefficients when the
    divergence guard (clipping on >1% of steps) trips."""
    if cfg.length <= cfg.narma_order:
        raise ContractError("length must exceed narma_order")
    d, T = cfg.n_channels, cfg.length
    limit = 0.01 * (T - cfg.narma_order)
    context0 = params.context
    for attempt in range(MAX_REGEN):
        if attempt > 0:
            params = draw_shop_params(graph, cfg, seed + 1 + attempt, shop_index)
            params.context = context0
        eps = _channel_noise(cfg, seed, shop_index, attempt)
        x, n_clipped = _simulate_channels(graph, params, cfg, eps)
        if not np.any(n_clipped > limit):
            return x, params
    raise GenerationError(
        f"channel generation diverged {MAX_REGEN} times (shop {shop_index})")


def generate_response(channels, graph, params, cfg: SimConfig, seed,
                      shop_index=0):
    """Length-T target series for a shop, given its generated channels."""
    d, T, K = cfg.n_channels, cfg.length, cfg.narma_order
    if graph[:, d].sum() < 1:
        raise ContractError("target node has no parents")
    r = substream(seed, 4, shop_index)
    eps = r.normal(0.0, NOISE_STD, size=T)
    u = np.empty(T)
    u[:K] = eps[:K]
    for t in range(K, T):
        th = np.tanh(channels[t - K:t])
        u[t] = np.einsum("ik,ki->", params.target_w, th) + eps[t]
    if cfg.mode == "sim1":
        return u
    lo, hi = u.min(), u.max()
    span = hi - lo if hi > lo else 1.0
    scaled = RESCALE_FLOOR + (2.0 - RESCALE_FLOOR) * (u - lo) / span
    a = 0.5 + 2.5 * params.context[0]
    g = 0.2 + 0.8 * params.context[1]
    p = scaled ** a
    return p / (p + g)


def generate_dataset(cfg: SimConfig) -> GroundTruthDataset:
    cfg.validate()
    rng = substream(cfg.seed, 0)
    templates = sample_structures(cfg, rng)
    assign = substream(cfg.seed, 5).integers(cfg.n_structures,
                                             size=cfg.n_shops)
    samples, graphs = [], []
    for n in range(cfg.n_shops):
        graph = templates[assign[n]]
        params = draw_shop_params(graph, cfg, cfg.seed, n)
        x, params = generate_channels(graph, params, cfg, cfg.seed, n)
        y = generate_response(x, graph, params, cfg, cfg.seed, n)
        samples.append(ShopSample(x=x, y=y, context=params.context))
        graphs.append(graph)
    return GroundTruthDataset(samples=samples, graphs=graphs,
                              structure_assignment=assign, config=cfg,
                              templates=templates)
