"""Shared model plumbing: configuration, parameter store, MLP/GRU layers,
per-shop normalization, and the ordered-pair bookkeeping used by both the
encoder and the decoder."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .errors import ContractError


@dataclass
class ModelConfig:
    n_channels: int
    length: int
    context_dim: int = 0
    enc_hidden: int = 64
    dec_edge_hidden: int = 32
    dec_msg: int = 16
    dec_hidden: int = 32
    pre_hidden: int = 32
    ctx_hidden: int = 8
    sigma: float = 0.1
    tau: float = 0.5

    @property
    def n_nodes(self):
        return self.n_channels + 1

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def node_pairs(n_nodes):
    """Ordered off-diagonal pairs (i, j), row-major."""
    return [(i, j) for i in range(n_nodes) for j in range(n_nodes) if i != j]


class PairIndex:
    """Constant selection matrices for gather/scatter over ordered pairs."""

    def __init__(self, n_nodes):
        pairs = node_pairs(n_nodes)
        e = len(pairs)
        self.pairs = pairs
        self.n_nodes = n_nodes
        self.n_edges = e
        self.send = np.array([i for i, _ in pairs])
        self.recv = np.array([j for _, j in pairs])
        s_send = np.zeros((e, n_nodes))
        s_recv = np.zeros((e, n_nodes))
        s_send[np.arange(e), self.send] = 1.0
        s_recv[np.arange(e), self.recv] = 1.0
        self.s_send = s_send
        self.s_recv = s_recv
        self.incoming = s_recv.T.copy()  # (n_nodes, e)

    def to_matrix(self, edge_values):
        """Scatter per-pair values into an (n, n) matrix with zero diagonal."""
        m = np.zeros((self.n_nodes, self.n_nodes))
        m[self.send, self.recv] = edge_values
        return m

    def from_matrix(self, m):
        return np.asarray(m)[self.send, self.recv]


_PAIR_CACHE = {}


def pair_index(n_nodes) -> PairIndex:
    if n_nodes not in _PAIR_CACHE:
        _PAIR_CACHE[n_nodes] = PairIndex(n_nodes)
    return _PAIR_CACHE[n_nodes]


# ---------------------------------------------------------------------------
# parameters

def _mlp_params(rng, n_in, n_hid, n_out):
    return {
        "w1": ad.glorot_uniform(rng, max(n_in, 1), n_hid, shape=(n_in, n_hid)),
        "b1": np.zeros(n_hid),
        "w2": ad.glorot_uniform(rng, n_hid, n_out),
        "b2": np.zeros(n_out),
    }


def _gru_params(rng, n_in, n_hid):
    p = {}
    for gate in ("r", "u", "c"):
        p[f"wx{gate}"] = ad.glorot_uniform(rng, n_in, n_hid, shape=(n_in, n_hid))
        p[f"wh{gate}"] = ad.glorot_uniform(rng, n_hid, n_hid)
        p[f"b{gate}"] = np.zeros(n_hid)
    return p


EDGE_ON_INIT = 0.85  # initial class-1 logit bias: edge prob ~0.7 at start


def init_params(cfg: ModelConfig, rng):
    """Fresh Glorot-initialized parameter store: dict name -> ndarray."""
    h = cfg.enc_hidden
    blocks = {
        "enc.emb": _mlp_params(rng, cfg.length, h, h),
        "enc.edge1": _mlp_params(rng, 2 * h, h, h),
        "enc.vertex": _mlp_params(rng, h, h, h),
        "enc.edge2": _mlp_params(rng, 2 * h, h, 2),
        "dec.edge": _mlp_params(rng, 2, cfg.dec_edge_hidden, cfg.dec_msg),
        "dec.gru": _gru_params(rng, cfg.dec_msg + 1, cfg.dec_hidden),
        "dec.pre": _mlp_params(rng, cfg.dec_hidden + 1, cfg.pre_hidden, 1),
        "dec.alpha": _mlp_params(rng, cfg.context_dim, cfg.ctx_hidden, 1),
        "dec.gamma": _mlp_params(rng, cfg.context_dim, cfg.ctx_hidden, 1),
    }
    store = {f"{block}.{k}": v for block, sub in blocks.items()
             for k, v in sub.items()}
    # bias the initial edge posterior towards "on" so the decoder has to
    # learn message functions before pruning begins; starting near the
    # sparse prior lets the decoder ignore messages outright, which starves
    # the encoder of gradient permanently
    store["enc.edge2.b2"] = np.array([0.0, EDGE_ON_INIT])
    return store


def bind_params(store, tape=None):
    """Wrap a parameter store as tensors: tape leaves when training,
    constants for inference."""
    if tape is None:
        return {k: ad.constant(v) for k, v in store.items()}
    return {k: tape.leaf(v, name=k, requires_grad=True) for k, v in store.items()}


def mlp2(x, p, prefix, hidden_act=ad.elu, out_act=None):
    """Two-layer MLP over bound parameters with the given name prefix."""
    h = hidden_act(ad.add(ad.matmul(x, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
    out = ad.add(ad.matmul(h, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])
    return out_act(out) if out_act is not None else out


def gru_step(x, h, p, prefix="dec.gru"):
    """Standard GRU cell update for one time step."""
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(x, p[f"{prefix}.wxr"]),
                                 ad.matmul(h, p[f"{prefix}.whr"])),
                          p[f"{prefix}.br"]))
    u = ad.sigmoid(ad.add(ad.add(ad.matmul(x, p[f"{prefix}.wxu"]),
                                 ad.matmul(h, p[f"{prefix}.whu"])),
                          p[f"{prefix}.bu"]))
    c = ad.tanh(ad.add(ad.add(ad.matmul(x, p[f"{prefix}.wxc"]),
                              ad.matmul(ad.mul(r, h), p[f"{prefix}.whc"])),
                       p[f"{prefix}.bc"]))
    return ad.add(ad.mul(u, h), ad.mul(ad.sub(1.0, u), c))


# ---------------------------------------------------------------------------
# per-shop normalization

@dataclass
class Scaler:
    ch_mean: np.ndarray
    ch_std: np.ndarray
    y_min: float
    y_max: float

    TARGET_LO = 0.05
    TARGET_HI = 0.95

    def transform(self, x, y):
        """(T, d) channels + (T,) target -> (T, d+1) normalized matrix."""
        xn = (x - self.ch_mean) / self.ch_std
        span = self.y_max - self.y_min
        if span <= 0:
            span = 1.0
        yn = self.TARGET_LO + (self.TARGET_HI - self.TARGET_LO) \
            * (y - self.y_min) / span
        return np.column_stack([xn, yn])

    def inverse_target(self, yn):
        span = self.y_max - self.y_min
        if span <= 0:
            span = 1.0
        return self.y_min + (yn - self.TARGET_LO) \
            / (self.TARGET_HI - self.TARGET_LO) * span


def fit_scaler(sample) -> Scaler:
    std = sample.x.std(axis=0)
    return Scaler(ch_mean=sample.x.mean(axis=0),
                  ch_std=np.maximum(std, 1e-8),
                  y_min=float(sample.y.min()), y_max=float(sample.y.max()))


def normalize_batch(samples):
    """Stack per-shop normalized observations: (B, T, d+1) plus scalers."""
    if not samples:
        raise ContractError("empty sample list")
    scalers = [fit_scaler(s) for s in samples]
    obs = np.stack([sc.transform(s.x, s.y) for s, sc in zip(samples, scalers)])
    return obs, scalers
