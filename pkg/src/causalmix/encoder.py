"""Relational encoder: embed each variable's full series, exchange pairwise
and node-level information over the fully connected graph, and emit
two-class logits (no-edge / edge) for every ordered off-diagonal pair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError
from .nets import ModelConfig, bind_params, fit_scaler, mlp2, pair_index

LOGIT_BOUND = 10.0  # soft cap |logit| < 10 so gradients never underflow to 0


def np_softmax(x, axis=-1):
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class EdgeLogits:
    """Per ordered pair, two-class logits; class 1 means "edge present"."""
    logits: np.ndarray  # (n_edges, 2)
    n_nodes: int

    @property
    def probs(self):
        return np_softmax(self.logits)


@dataclass
class EdgeSample:
    """Soft (simplex) or hard (one-hot) per-pair samples."""
    z: np.ndarray  # (n_edges, 2)
    n_nodes: int

    @property
    def edge_weight(self):
        return self.z[..., 1]


def encode_batch(obs, p, cfg: ModelConfig):
    """Batched differentiable core.

    obs: (B, T, n_nodes) normalized observations (plain ndarray).
    p: bound parameter tensors. Returns a (B, n_edges, 2) logits tensor.
    """
    b, t, n = obs.shape
    if t != cfg.length:
        raise ContractError(f"series length {t} != model length {cfg.length}")
    if n != cfg.n_nodes:
        raise ContractError(f"{n} nodes != model {cfg.n_nodes}")
    pi = pair_index(n)
    x = ad.constant(obs.transpose(0, 2, 1))           # (B, N, T)
    h1 = mlp2(x, p, "enc.emb", out_act=ad.elu)        # (B, N, H)
    send = ad.constant(pi.s_send)
    recv = ad.constant(pi.s_recv)
    hi = ad.matmul(send, h1)                          # (B, E, H)
    hj = ad.matmul(recv, h1)
    e1 = mlp2(ad.concat([hi, hj], axis=-1), p, "enc.edge1", out_act=ad.elu)
    agg = ad.matmul(ad.constant(pi.incoming), e1)     # (B, N, H)
    h2 = mlp2(agg, p, "enc.vertex", out_act=ad.elu)
    hi2 = ad.matmul(send, h2)
    hj2 = ad.matmul(recv, h2)
    raw = mlp2(ad.concat([hi2, hj2], axis=-1), p, "enc.edge2")
    # bounded logits: a fully saturated posterior would stop all gradient
    # flow through both the sampler and the KL term, freezing the encoder
    return ad.mul(ad.tanh(ad.mul(raw, 1.0 / LOGIT_BOUND)), LOGIT_BOUND)


def _pad_obs(obs, length):
    t = obs.shape[0]
    if t == length:
        return obs
    if t > length:
        raise ContractError(f"series length {t} exceeds model length {length}")
    return np.vstack([np.zeros((length - t, obs.shape[1])), obs])


def encode(sample, store, cfg: ModelConfig) -> EdgeLogits:
    """Inference-mode encoding of one shop (normalization included).

    Series shorter than the model length are left-padded with zeros after
    normalization over the observed steps.
    """
    scaler = fit_scaler(sample)
    obs = _pad_obs(scaler.transform(sample.x, sample.y), cfg.length)
    p = bind_params(store)
    logits = encode_batch(obs[None], p, cfg)
    return EdgeLogits(logits=logits.value[0], n_nodes=cfg.n_nodes)


def gumbel_sample(logits: EdgeLogits, tau, rng, hard=False) -> EdgeSample:
    """Draw one Gumbel-softmax relaxed sample of the edge indicators."""
    if tau <= 0:
        raise ContractError("temperature must be positive")
    g = rng.gumbel(size=logits.logits.shape)
    soft = np_softmax((logits.logits + g) / tau)
    if hard:
        one_hot = np.zeros_like(soft)
        idx = np.argmax(soft, axis=-1)
        np.put_along_axis(one_hot, idx[..., None], 1.0, axis=-1)
        return EdgeSample(z=one_hot, n_nodes=logits.n_nodes)
    return EdgeSample(z=soft, n_nodes=logits.n_nodes)


def gumbel_softmax_t(logits_t, tau, noise):
    """Differentiable soft sampling for training: tensor in, tensor out.

    noise is a pre-drawn Gumbel(0,1) array with the logits' shape.
    """
    if tau <= 0:
        raise ContractError("temperature must be positive")
    shifted = ad.mul(ad.add(logits_t, ad.constant(noise)), 1.0 / tau)
    return ad.softmax(shifted, axis=-1)


def infer_graph(logits: EdgeLogits):
    """Noise-free decision: (adjacency, edge-probability matrix).

    Edge probability is softmax(logits) with no temperature; an edge is
    declared present when its probability strictly exceeds 0.5.
    """
    pi = pair_index(logits.n_nodes)
    probs = np_softmax(logits.logits)[:, 1]
    prob_matrix = pi.to_matrix(probs)
    adjacency = (prob_matrix > 0.5).astype(np.int8)
    np.fill_diagonal(adjacency, 0)
    return adjacency, prob_matrix
