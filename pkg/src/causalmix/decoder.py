"""Marketing response decoder: edge-gated message passing with a recurrent
hidden state per node, linear heads for channel predictions, and a
context-conditioned Hill saturation curve for the target node."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .encoder import EdgeSample
from .errors import ContractError, NumericError
from .nets import (ModelConfig, Scaler, bind_params, fit_scaler, gru_step,
                   mlp2, pair_index)

ALPHA_LO, ALPHA_HI = 0.2, 5.0
GAMMA_LO, GAMMA_HI = 0.05, 5.0
BASE_FLOOR = 1e-6  # pow base clamp inside the saturation path


@dataclass
class Forecast:
    mu: np.ndarray        # (M, d+1) predicted means, normalized units
    sigma: float
    scaler: Scaler

    @property
    def target(self):
        return self.mu[:, -1]

    def target_descaled(self):
        return self.scaler.inverse_target(self.target)


def saturation_coeffs(context, p):
    """Curve shape and inflexion point from context: bounded positives.

    context: (B, context_dim) ndarray; with context_dim=0 both networks
    degrade to learned constants (bias-only).
    """
    c = ad.constant(context)
    a_raw = mlp2(c, p, "dec.alpha")
    g_raw = mlp2(c, p, "dec.gamma")
    alpha = ad.add(ad.mul(ad.sigmoid(a_raw), ALPHA_HI - ALPHA_LO), ALPHA_LO)
    gamma = ad.add(ad.mul(ad.sigmoid(g_raw), GAMMA_HI - GAMMA_LO), GAMMA_LO)
    return alpha, gamma  # (B, 1) tensors


def _scurve(raw, alpha, gamma):
    """Hill response r^a / (r^a + g) of the softplus-positive pre-activation."""
    r = ad.softplus(raw)
    r = ad.add(ad.relu(ad.sub(r, BASE_FLOOR)), BASE_FLOOR)
    p = ad.power(r, alpha)
    return ad.mul(p, ad.power(ad.add(p, gamma), ad.constant(-1.0)))


def decode_batch(obs, z1, context, p, cfg: ModelConfig, train_m=1):
    """Teacher-forced predictions for every transition.

    obs: (B, T, n_nodes) normalized observations (ndarray).
    z1: (B, n_edges) class-1 edge weights (tensor or ndarray).
    train_m: ground truth is fed every train_m steps and the model's own
    previous prediction in between; 1 recovers pure one-step forcing.
    Returns a (B, T-1, n_nodes) tensor: predictions for steps 1..T-1.
    """
    b, t, n = obs.shape
    d = n - 1
    pi = pair_index(n)
    if not isinstance(z1, ad.Tensor):
        z1 = ad.constant(z1)
    if train_m > 1:
        return _decode_batch_recursive(obs, z1, context, p, cfg, train_m)

    pair_in = np.stack([obs[:, :-1, pi.send], obs[:, :-1, pi.recv]], axis=-1)
    msg_e = mlp2(ad.constant(pair_in), p, "dec.edge", out_act=ad.elu)
    zb = ad.reshape(z1, (b, 1, pi.n_edges, 1))
    msg_all = ad.matmul(ad.constant(pi.incoming), ad.mul(msg_e, zb))

    # precompute the GRU input projections for every step at once; the
    # sequential loop then only carries the hidden-state recurrence
    x_in = ad.concat([msg_all, ad.constant(obs[:, :-1, :, None])], axis=-1)
    xr = ad.add(ad.matmul(x_in, p["dec.gru.wxr"]), p["dec.gru.br"])
    xu = ad.add(ad.matmul(x_in, p["dec.gru.wxu"]), p["dec.gru.bu"])
    xc = ad.add(ad.matmul(x_in, p["dec.gru.wxc"]), p["dec.gru.bc"])

    h = ad.constant(np.zeros((b, n, cfg.dec_hidden)))
    h_steps = []
    for step_t in range(t - 1):
        r = ad.sigmoid(ad.add(ad.take(xr, step_t, axis=1),
                              ad.matmul(h, p["dec.gru.whr"])))
        u = ad.sigmoid(ad.add(ad.take(xu, step_t, axis=1),
                              ad.matmul(h, p["dec.gru.whu"])))
        c = ad.tanh(ad.add(ad.take(xc, step_t, axis=1),
                           ad.matmul(ad.mul(r, h), p["dec.gru.whc"])))
        h = ad.add(ad.mul(u, h), ad.mul(ad.sub(1.0, u), c))
        h_steps.append(ad.reshape(h, (b, 1, n, cfg.dec_hidden)))
    h_all = ad.concat(h_steps, axis=1)                    # (B, T-1, N, H)

    pre_in = ad.concat([h_all, ad.constant(obs[:, :-1, :, None])], axis=-1)
    out = mlp2(pre_in, p, "dec.pre")                      # (B, T-1, N, 1)
    mu_x = ad.narrow(out, axis=2, start=0, length=d)
    raw_y = ad.narrow(out, axis=2, start=d, length=1)

    alpha, gamma = saturation_coeffs(context, p)
    mu_y = _scurve(raw_y, ad.reshape(alpha, (b, 1, 1, 1)),
                   ad.reshape(gamma, (b, 1, 1, 1)))
    return ad.reshape(ad.concat([mu_x, mu_y], axis=2), (b, t - 1, n))


def _decode_batch_recursive(obs, z1, context, p, cfg: ModelConfig, train_m):
    """Sequential variant of decode_batch that feeds its own prediction
    back as input except on every train_m-th step. Gradients flow through
    the prediction chain, so the reconstruction loss can only be lowered
    on the recursive steps by using the edge messages."""
    b, t, n = obs.shape
    d = n - 1
    pi = pair_index(n)
    send_t = ad.constant(pi.s_send.T)              # (N, E)
    recv_t = ad.constant(pi.s_recv.T)
    zb = ad.reshape(z1, (b, pi.n_edges, 1))
    alpha, gamma = saturation_coeffs(context, p)
    a3 = ad.reshape(alpha, (b, 1, 1))
    g3 = ad.reshape(gamma, (b, 1, 1))
    h = ad.constant(np.zeros((b, n, cfg.dec_hidden)))
    cur = None
    mus = []
    for step_t in range(t - 1):
        if step_t % train_m == 0 or cur is None:
            cur = ad.constant(obs[:, step_t, :])
        pair_in = ad.concat(
            [ad.reshape(ad.matmul(cur, send_t), (b, pi.n_edges, 1)),
             ad.reshape(ad.matmul(cur, recv_t), (b, pi.n_edges, 1))],
            axis=-1)
        msg_e = mlp2(pair_in, p, "dec.edge", out_act=ad.elu)
        msg = ad.matmul(ad.constant(pi.incoming), ad.mul(msg_e, zb))
        cur3 = ad.reshape(cur, (b, n, 1))
        h = gru_step(ad.concat([msg, cur3], axis=-1), h, p)
        out = mlp2(ad.concat([h, cur3], axis=-1), p, "dec.pre")
        mu_x = ad.narrow(out, axis=1, start=0, length=d)
        mu_y = _scurve(ad.narrow(out, axis=1, start=d, length=1), a3, g3)
        cur = ad.reshape(ad.concat([mu_x, mu_y], axis=1), (b, n))
        mus.append(ad.reshape(cur, (b, 1, n)))
    return ad.concat(mus, axis=1)


def gaussian_nll_batch(mu_t, truth, sigma):
    """Per-shop Gaussian NLL tensor of shape (B,), constants included."""
    if mu_t.value.shape != truth.shape:
        raise ContractError(
            f"prediction shape {mu_t.value.shape} != truth {truth.shape}")
    err = ad.sub(mu_t, ad.constant(truth))
    sq = ad.reduce_sum(ad.mul(err, err), axis=(1, 2))
    count = truth.shape[1] * truth.shape[2]
    const = count * np.log(sigma * np.sqrt(2.0 * np.pi))
    return ad.add(ad.mul(sq, 1.0 / (2.0 * sigma ** 2)), ad.constant(const))


def nll(pred: Forecast, truth, sigma):
    """Gaussian negative log-likelihood of a forecast against observations."""
    truth = np.asarray(truth)
    if truth.shape != pred.mu.shape:
        raise ContractError(
            f"truth shape {truth.shape} != forecast shape {pred.mu.shape}")
    quad = np.sum((truth - pred.mu) ** 2) / (2.0 * sigma ** 2)
    return float(quad + truth.size * np.log(sigma * np.sqrt(2.0 * np.pi)))


def _step_core(obs_t, h, z1, alpha, gamma, p, cfg, pi):
    """One decoder step, batched: obs_t (B, N) ndarray, h (B, N, H) tensor."""
    b, n = obs_t.shape
    d = n - 1
    pair_in = np.stack([obs_t[:, pi.send], obs_t[:, pi.recv]], axis=-1)
    msg_e = mlp2(ad.constant(pair_in), p, "dec.edge", out_act=ad.elu)
    zb = ad.reshape(z1, (b, pi.n_edges, 1)) if isinstance(z1, ad.Tensor) \
        else ad.constant(np.asarray(z1).reshape(b, pi.n_edges, 1))
    msg = ad.matmul(ad.constant(pi.incoming), ad.mul(msg_e, zb))  # (B, N, m)
    x_in = ad.concat([msg, ad.constant(obs_t[:, :, None])], axis=-1)
    h_new = gru_step(x_in, h, p)
    pre_in = ad.concat([h_new, ad.constant(obs_t[:, :, None])], axis=-1)
    out = mlp2(pre_in, p, "dec.pre")                      # (B, N, 1)
    mu_x = ad.narrow(out, axis=1, start=0, length=d)
    raw_y = ad.narrow(out, axis=1, start=d, length=1)
    mu_y = _scurve(raw_y, ad.reshape(alpha, (b, 1, 1)),
                   ad.reshape(gamma, (b, 1, 1)))
    mu = ad.reshape(ad.concat([mu_x, mu_y], axis=1), (b, n))
    return h_new, mu


def step(obs_t, state, z: EdgeSample, context, store, cfg: ModelConfig):
    """One single-shop decoder step on normalized observations.

    obs_t: (d+1,) observation, state: (d+1, dec_hidden) hidden matrix.
    Returns (new_state, mu) where mu predicts the next observation.
    """
    obs_t = np.asarray(obs_t, dtype=np.float64)
    n = cfg.n_nodes
    if obs_t.shape != (n,):
        raise ContractError(f"obs shape {obs_t.shape} != ({n},)")
    p = bind_params(store)
    pi = pair_index(n)
    alpha, gamma = saturation_coeffs(np.asarray(context).reshape(1, -1), p)
    h = ad.constant(np.asarray(state).reshape(1, n, cfg.dec_hidden))
    h_new, mu = _step_core(obs_t[None], h, z.edge_weight[None], alpha, gamma,
                           p, cfg, pi)
    if not np.all(np.isfinite(h_new.value)):
        raise NumericError("decoder state became non-finite")
    return h_new.value[0], mu.value[0]


def init_state(cfg: ModelConfig, batch=None):
    shape = (cfg.n_nodes, cfg.dec_hidden) if batch is None \
        else (batch, cfg.n_nodes, cfg.dec_hidden)
    return np.zeros(shape)


def rollout(sample, z: EdgeSample, burn_in, horizon, store,
            cfg: ModelConfig) -> Forecast:
    """Teacher-force `burn_in` steps, then recurse on own predictions for
    `horizon` steps. Returns the predicted rows in normalized units."""
    if horizon < 1:
        raise ContractError("horizon must be >= 1")
    if burn_in < 1 or burn_in + horizon > sample.x.shape[0]:
        raise ContractError(
            f"burn_in={burn_in} + horizon={horizon} exceeds series length")
    scaler = fit_scaler(sample)
    obs = scaler.transform(sample.x, sample.y)
    p = bind_params(store)
    pi = pair_index(cfg.n_nodes)
    alpha, gamma = saturation_coeffs(
        np.asarray(sample.context).reshape(1, -1), p)
    h = ad.constant(init_state(cfg, batch=1))
    mu = None
    for t in range(burn_in):
        h, mu = _step_core(obs[t][None], h, z.edge_weight[None], alpha, gamma,
                           p, cfg, pi)
    preds = [mu.value[0]]
    for _ in range(horizon - 1):
        h, mu = _step_core(preds[-1][None], h, z.edge_weight[None], alpha,
                           gamma, p, cfg, pi)
        preds.append(mu.value[0])
    return Forecast(mu=np.stack(preds), sigma=cfg.sigma, scaler=scaler)
