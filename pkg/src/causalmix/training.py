"""Joint variational training of the encoder and decoder.

Loss per shop = Gaussian reconstruction NLL (one-step, teacher forced)
plus lambda times the KL divergence between the per-pair edge posterior
and a sparse two-class prior.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .datagen import substream
from .decoder import decode_batch, gaussian_nll_batch
from .encoder import EdgeLogits, encode_batch, gumbel_softmax_t, np_softmax
from .errors import ContractError, NumericError
from .evalkit import auroc
from .nets import (ModelConfig, bind_params, init_params, normalize_batch,
                   pair_index)
from .optim import AdamState, adam_step

DIVERGENCE_LIMIT = 1e6
_LOG_EPS = 1e-30


@dataclass
class TrainConfig:
    lam: float = 100.0
    tau: float = 0.5
    lr: float = 5e-4
    epochs: int = 500
    batch: int = 16
    prior_edge_prob: float = 0.1
    early_stop_patience: int = 50
    seed: int = 0
    train_m: int = 1
    straight_through: bool = False
    kl_warmup: int = 0  # epochs to ramp lambda from 0 to its full value
    # use the deterministic soft relaxation (posterior-mean z) instead of
    # Gumbel draws: sampling noise on z acts as pure input noise early in
    # training, so the reconstruction term prunes every edge before its
    # message function can be learned
    mean_field: bool = True
    # epochs with the edge posterior frozen at its (on-biased) initial value
    # before joint training: the decoder learns self-dynamics and message
    # functions under stable gates first, so that when the encoder unlocks,
    # true edges already pay for themselves and the reconstruction gradient
    # differentiates them from noise edges instead of pruning everything
    dec_warmup: int = 0
    # after the warmup, alternate blocks of this many epochs between
    # encoder-only updates (decoder weights held fixed) and decoder-only
    # updates (edge posterior held fixed); 0 trains both jointly.
    # Alternation removes the co-adaptation loop where the decoder
    # re-learns around every posterior shift and erases the reconstruction
    # signal that distinguishes true edges from spurious ones
    alt_period: int = 0
    # structure discovery is transductive: the graphs of every shop in the
    # panel are the quantity of interest, so by default all shops train.
    # Set holdout=True to reserve 10% validation / 10% test shops, which
    # forecasting evaluations need
    holdout: bool = False

    def validate(self):
        if self.lam < 0:
            raise ContractError("lam must be nonnegative")
        if self.tau <= 0 or self.lr <= 0:
            raise ContractError("tau and lr must be positive")
        if self.epochs < 1 or self.batch < 1 or self.train_m < 1:
            raise ContractError("epochs, batch and train_m must be >= 1")
        if not (0.0 < self.prior_edge_prob < 1.0):
            raise ContractError("prior_edge_prob must lie in (0, 1)")
        if self.early_stop_patience < 1:
            raise ContractError("early_stop_patience must be >= 1")
        if self.kl_warmup < 0 or self.dec_warmup < 0 or self.alt_period < 0:
            raise ContractError("warmup/alternation epochs must be "
                                "nonnegative")
        return self

    def to_dict(self):
        return asdict(self)


def kl_tensor(logits_t, prior_edge_prob):
    """Per-shop KL(posterior || prior) tensor of shape (B,) for (B, E, 2)
    logits."""
    q = ad.softmax(logits_t, axis=-1)
    log_q = ad.log(ad.add(q, _LOG_EPS))
    log_prior = ad.constant(
        np.log([1.0 - prior_edge_prob, prior_edge_prob]))
    inner = ad.mul(q, ad.sub(log_q, log_prior))
    return ad.reduce_sum(inner, axis=(1, 2))


def kl_term(logits: EdgeLogits, prior_edge_prob) -> float:
    """Sum over pairs of KL(softmax(logits) || two-class prior)."""
    if not (0.0 < prior_edge_prob < 1.0):
        raise ContractError("prior_edge_prob must lie in (0, 1)")
    q = np_softmax(logits.logits)
    log_prior = np.log([1.0 - prior_edge_prob, prior_edge_prob])
    return float(np.sum(q * (np.log(q + _LOG_EPS) - log_prior)))


def elbo_batch(obs, contexts, p, mcfg: ModelConfig, tcfg: TrainConfig,
               noise=None, hard_forward=False, lam=None, freeze_edges=False):
    """Differentiable batch loss.

    obs: (B, T, N) normalized; p: bound parameters; noise: pre-drawn
    Gumbel(0,1) array or None for the noise-free posterior mean.
    Returns (loss tensor, nll tensor (B,), kl tensor (B,)).
    """
    b = obs.shape[0]
    logits = encode_batch(obs, p, mcfg)
    if noise is None:
        z = ad.softmax(logits, axis=-1)
    else:
        z = gumbel_softmax_t(logits, tcfg.tau, noise)
    if hard_forward:
        # straight-through: hard one-hot forward, soft gradients
        hard = np.zeros_like(z.value)
        np.put_along_axis(hard, np.argmax(z.value, axis=-1)[..., None], 1.0,
                          axis=-1)
        z = ad.add(z, ad.constant(hard - z.value))
    z1 = ad.take(z, 1, axis=2)
    if freeze_edges:
        if noise is not None:
            # frozen phase with noise: explore hard gate configurations
            # sampled from the fixed posterior, so the decoder learns
            # message functions that work for any plausible gating
            hard = (z.value[..., 1] > z.value[..., 0]).astype(np.float64)
            z1 = ad.constant(hard)
        else:
            z1 = ad.constant(z1.value)
    mu = decode_batch(obs, z1, contexts, p, mcfg, train_m=tcfg.train_m)
    nll_vec = gaussian_nll_batch(mu, obs[:, 1:, :], mcfg.sigma)
    kl_vec = kl_tensor(logits, tcfg.prior_edge_prob)
    per_shop = ad.add(nll_vec, ad.mul(kl_vec,
                                      tcfg.lam if lam is None else lam))
    loss = ad.mul(ad.reduce_sum(per_shop), 1.0 / b)
    return loss, nll_vec, kl_vec


def elbo_loss(sample, store, mcfg: ModelConfig, tcfg: TrainConfig, rng):
    """Single-shop loss with one Gumbel draw; returns (loss, components)."""
    obs, _ = normalize_batch([sample])
    noise = rng.gumbel(size=(1, obs.shape[2] * (obs.shape[2] - 1), 2))
    p = bind_params(store)
    context = np.asarray(sample.context).reshape(1, -1)
    loss, nll_vec, kl_vec = elbo_batch(obs, context, p, mcfg, tcfg, noise,
                                       hard_forward=tcfg.straight_through)
    if not np.isfinite(loss.value):
        raise NumericError("non-finite ELBO loss")
    return float(loss.value), {"nll": float(nll_vec.value[0]),
                               "kl": float(kl_vec.value[0])}


def split_shops(n_shops, seed, holdout=True):
    """Deterministic 80/10/10 shop split; tiny datasets fall back to
    validating on the training shops. With holdout=False every shop
    trains and the full panel doubles as the monitoring set."""
    perm = substream(seed, 100).permutation(n_shops)
    if not holdout:
        return perm, perm, np.array([], dtype=perm.dtype)
    n_test = int(0.1 * n_shops)
    n_val = int(0.1 * n_shops)
    test = perm[:n_test]
    val = perm[n_test:n_test + n_val]
    train = perm[n_test + n_val:]
    if len(val) == 0:
        val = train
    return train, val, test


def _dataset_parts(dataset):
    samples = dataset.samples
    graphs = getattr(dataset, "graphs", None)
    return samples, graphs


def fit(dataset, tcfg: TrainConfig, mcfg: ModelConfig = None,
        progress=None):
    """Mini-batch Adam over shops with early stopping on validation loss.

    Returns (best parameter store, history rows, split dict).
    """
    tcfg.validate()
    samples, graphs = _dataset_parts(dataset)
    if not samples:
        raise ContractError("empty dataset")
    t_len, d = samples[0].x.shape
    if mcfg is None:
        mcfg = ModelConfig(n_channels=d, length=t_len,
                           context_dim=len(samples[0].context),
                           tau=tcfg.tau)
    obs_all, _ = normalize_batch(samples)
    contexts = np.stack([np.asarray(s.context, dtype=np.float64)
                         for s in samples])
    train_idx, val_idx, test_idx = split_shops(len(samples), tcfg.seed,
                                               holdout=tcfg.holdout)

    store = init_params(mcfg, substream(tcfg.seed, 101))
    state = AdamState(store)
    hyper = {"lr": tcfg.lr}

    best_val = np.inf
    best_store = {k: v.copy() for k, v in store.items()}
    patience_left = tcfg.early_stop_patience
    history = []

    n_edges = mcfg.n_nodes * (mcfg.n_nodes - 1)
    for epoch in range(tcfg.epochs):
        tic = time.perf_counter()
        # ramp the prior weight in (after any message-free phase) so the
        # edge posterior cannot collapse onto the sparse prior before the
        # decoder learns to use messages
        joint_epoch = epoch - tcfg.dec_warmup
        frozen = joint_epoch < 0
        enc_phase = (not frozen and tcfg.alt_period > 0
                     and (joint_epoch // tcfg.alt_period) % 2 == 0)
        dec_only = frozen or (tcfg.alt_period > 0 and not enc_phase)
        lam_e = 0.0 if frozen else (
            tcfg.lam if tcfg.kl_warmup == 0 else
            tcfg.lam * min(1.0, (joint_epoch + 1) / tcfg.kl_warmup))
        order = substream(tcfg.seed, 102, epoch).permutation(train_idx)
        batch_losses = []
        for bstart in range(0, len(order), tcfg.batch):
            idx = order[bstart:bstart + tcfg.batch]
            tape = ad.Tape()
            p = bind_params(store, tape)
            sample_z = dec_only or not tcfg.mean_field
            noise = substream(tcfg.seed, 103, epoch, bstart).gumbel(
                size=(len(idx), n_edges, 2)) if sample_z else None
            loss, _, _ = elbo_batch(obs_all[idx], contexts[idx], p, mcfg,
                                    tcfg, noise,
                                    hard_forward=tcfg.straight_through,
                                    lam=lam_e, freeze_edges=dec_only)
            lv = float(loss.value)
            if not np.isfinite(lv) or lv > DIVERGENCE_LIMIT:
                raise NumericError(
                    f"training diverged at epoch {epoch} (loss={lv:.3g})")
            grads = ad.backward(loss)
            named = {leaf.name: g for leaf, g in grads.items()}
            if enc_phase:
                sub = {k: v for k, v in store.items()
                       if k.startswith("enc.")}
            elif dec_only:
                sub = {k: v for k, v in store.items()
                       if k.startswith("dec.")}
            else:
                sub = store
            adam_step(sub, {k: named[k] for k in sub}, state, hyper)
            batch_losses.append(lv)

        # validation uses the noise-free posterior mean
        vp = bind_params(store)
        vloss, vnll, vkl = elbo_batch(obs_all[val_idx], contexts[val_idx],
                                      vp, mcfg, tcfg, noise=None)
        val_loss = float(vloss.value)
        val_auroc = float("nan")
        if graphs is not None:
            logits = encode_batch(obs_all[val_idx], vp, mcfg).value
            scores = []
            for k, shop in enumerate(val_idx):
                adjacency = graphs[shop]
                el = EdgeLogits(logits=logits[k], n_nodes=mcfg.n_nodes)
                probs = np_softmax(el.logits)[:, 1]
                pm = pair_index(mcfg.n_nodes).to_matrix(probs)
                try:
                    scores.append(auroc(pm, adjacency))
                except ContractError:
                    pass
            if scores:
                val_auroc = float(np.mean(scores))

        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(batch_losses)),
            "val_loss": val_loss,
            "val_auroc": val_auroc,
            "kl_term": float(np.mean(vkl.value)),
            "nll_term": float(np.mean(vnll.value)),
            "wall_ms": (time.perf_counter() - tic) * 1e3,
        }
        history.append(row)
        if progress is not None:
            progress(row)

        if val_loss < best_val:
            best_val = val_loss
            best_store = {k: v.copy() for k, v in store.items()}
            patience_left = tcfg.early_stop_patience
        else:
            patience_left -= 1
            if patience_left <= 0:
                break

    split = {"train": train_idx.tolist(), "val": val_idx.tolist(),
             "test": test_idx.tolist()}
    return best_store, history, split, mcfg


HISTORY_COLUMNS = ["epoch", "train_loss", "val_loss", "val_auroc",
                   "kl_term", "nll_term", "wall_ms"]


def history_to_csv(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=HISTORY_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in HISTORY_COLUMNS})
