"""Pre-training losses and fine-tune heads.

Pre-training couples two objectives on the backbone's per-event embeddings:
masked binary cross-entropy of a linear head against the perturbation labels,
and an InfoNCE term that pulls each unperturbed event's projected embedding
toward its own entity's prototype against the other batch entities' rows.
Fine-tuning adds a three-layer anomaly scorer, a sampled-softmax next-context
ranker, and a Gaussian-mixture head over the time gap to the next event.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .featencode import PrototypeTable, uniform_init
from .params import ParamRegistry
from .schema import DataError

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
SIGMA_FLOOR = 1e-3  # hours; mixture scales are clamped here
MASK_SCORE = -1e30  # additive mask for dropped softmax candidates


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 0.5  # prototype-loss weight
    beta: float = 0.07  # InfoNCE temperature

    def validate(self) -> None:
        if self.gamma <= 0 or self.beta <= 0:
            raise DataError("gamma and beta must be positive")


class NoiseHead:
    """Linear per-event perturbation scorer."""

    def __init__(self, registry: ParamRegistry, d: int, rng, prefix: str = "head.noise"):
        self.w = registry.register(f"{prefix}.w", uniform_init(rng, (1, d), d))
        self.b = registry.register(f"{prefix}.b", np.zeros(1))

    def logits(self, h: Tensor) -> Tensor:
        out = ad.linear(h, self.w, self.b)  # (..., 1)
        return ad.reshape(out, out.shape[:-1])


class AnomalyHead:
    """Three-layer MLP per-event anomaly scorer used at fine-tune time."""

    def __init__(self, registry: ParamRegistry, d: int, rng, prefix: str = "head.anomaly"):
        reg = registry.register
        self.w1 = reg(f"{prefix}.w1", uniform_init(rng, (d, d), d))
        self.b1 = reg(f"{prefix}.b1", np.zeros(d))
        self.w2 = reg(f"{prefix}.w2", uniform_init(rng, (d, d), d))
        self.b2 = reg(f"{prefix}.b2", np.zeros(d))
        self.w3 = reg(f"{prefix}.w3", uniform_init(rng, (1, d), d))
        self.b3 = reg(f"{prefix}.b3", np.zeros(1))

    def logits(self, h: Tensor) -> Tensor:
        x = ad.relu(ad.linear(h, self.w1, self.b1))
        x = ad.relu(ad.linear(x, self.w2, self.b2))
        out = ad.linear(x, self.w3, self.b3)
        return ad.reshape(out, out.shape[:-1])


class PrototypeProjector:
    """Two-layer MLP from the event embedding to prototype space."""

    def __init__(self, registry: ParamRegistry, d: int, d_f: int, h_proj: int, rng, prefix: str = "head.proj"):
        reg = registry.register
        self.w1 = reg(f"{prefix}.w1", uniform_init(rng, (h_proj, d), d))
        self.b1 = reg(f"{prefix}.b1", np.zeros(h_proj))
        self.w2 = reg(f"{prefix}.w2", uniform_init(rng, (d_f, h_proj), h_proj))
        self.b2 = reg(f"{prefix}.b2", np.zeros(d_f))

    def project(self, h: Tensor) -> Tensor:
        return ad.linear(ad.relu(ad.linear(h, self.w1, self.b1)), self.w2, self.b2)


def noise_loss(logits: Tensor, labels: np.ndarray, pad_mask: np.ndarray) -> Tensor:
    """Masked mean BCE of per-event logits against the perturbation labels."""
    valid = ~np.asarray(pad_mask, dtype=bool)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise DataError("noise loss over an empty event set")
    per_event = ad.bce_with_logits(logits, np.asarray(labels, dtype=np.float64))
    keep = Tensor(valid.astype(np.float64))
    return ad.sum_(per_event * keep) * (1.0 / n_valid)


def prototype_loss(
    h: Tensor,
    labels: np.ndarray,
    pad_mask: np.ndarray,
    window_entities: np.ndarray,
    projector: PrototypeProjector,
    table: PrototypeTable,
    beta: float,
) -> Tensor:
    """InfoNCE against the prototypes of batch entities that have anchors.

    Anchors are the unperturbed non-padded events; perturbed events are
    excluded so the prototype tracks the entity's unmodified behaviour.
    Returns 0 (with a warning) when the batch carries no anchor at all.
    """
    B, T, d = h.shape
    anchor = (~np.asarray(pad_mask, dtype=bool)) & (np.asarray(labels) == 0)
    flat_idx = np.flatnonzero(anchor.reshape(-1))
    if flat_idx.size == 0:
        log.warning("prototype loss skipped: no unperturbed events in batch")
        return Tensor(0.0)
    event_entities = np.repeat(np.asarray(window_entities, dtype=np.int64), T)[flat_idx]
    batch_entities = np.unique(event_entities)

    anchors = ad.take_rows(ad.reshape(h, (B * T, d)), flat_idx)
    proj = ad.l2_normalize(projector.project(anchors), axis=-1)
    protos = ad.l2_normalize(table.prototypes_of(batch_entities), axis=-1)
    logits = ad.matmul(proj, ad.swapaxes(protos, -1, -2)) * (1.0 / beta)
    logp = ad.log_softmax(logits, axis=-1)
    own = np.searchsorted(batch_entities, event_entities)
    onehot = np.zeros((flat_idx.size, batch_entities.size))
    onehot[np.arange(flat_idx.size), own] = 1.0
    picked = ad.sum_(logp * Tensor(onehot))
    return -picked * (1.0 / flat_idx.size)


def joint_loss(noise: Tensor, prototype: Tensor, gamma: float) -> Tensor:
    return noise + gamma * prototype


class PoiHead:
    """Query projection plus a learned context embedding table, trained with
    sampled-softmax cross-entropy (uniform negatives plus in-batch targets)."""

    def __init__(self, registry: ParamRegistry, d: int, n_contexts: int, rng, prefix: str = "head.poi"):
        reg = registry.register
        self.n_contexts = n_contexts
        self.w1 = reg(f"{prefix}.w1", uniform_init(rng, (d, d), d))
        self.b1 = reg(f"{prefix}.b1", np.zeros(d))
        self.w2 = reg(f"{prefix}.w2", uniform_init(rng, (d, d), d))
        self.b2 = reg(f"{prefix}.b2", np.zeros(d))
        self.table = reg(f"{prefix}.table", uniform_init(rng, (n_contexts, d), d))

    def query(self, h: Tensor) -> Tensor:
        return ad.linear(ad.relu(ad.linear(h, self.w1, self.b1)), self.w2, self.b2)

    def sampled_softmax_loss(
        self,
        queries: Tensor,
        targets: np.ndarray,
        rng: np.random.Generator,
        n_neg: int = 256,
        temperature: float = 0.1,
        in_batch_negatives: bool = True,
    ) -> Tensor:
        """Cross-entropy of each query against its target, the uniform
        negatives, and the other in-batch targets.  Negatives that collide
        with the query's own target are resampled once, then dropped."""
        if self.n_contexts < 2:
            raise DataError("sampled softmax needs at least 2 contexts")
        targets = np.asarray(targets, dtype=np.int64)
        n = len(targets)
        parts = [targets[:, None]]
        if n_neg > 0:
            negs = rng.integers(0, self.n_contexts, (n, n_neg))
            redraw = rng.integers(0, self.n_contexts, (n, n_neg))
            negs = np.where(negs == targets[:, None], redraw, negs)
            parts.append(negs)
        if in_batch_negatives and n > 1:
            parts.append(np.broadcast_to(targets, (n, n)).copy())
        ids = np.concatenate(parts, axis=1)
        drop = ids == targets[:, None]
        drop[:, 0] = False  # column 0 is the positive

        emb = ad.take_rows(self.table, ids)  # (n, K, d)
        q = ad.reshape(queries, (n, 1, queries.shape[-1]))
        scores = ad.sum_(q * emb, axis=-1) * (1.0 / temperature)
        scores = scores + Tensor(np.where(drop, MASK_SCORE, 0.0))
        logp = ad.log_softmax(scores, axis=-1)
        return -ad.mean(logp[:, 0])

    def full_scores(self, queries: Tensor) -> np.ndarray:
        """Evaluation-time scores of every context for each query."""
        return queries.data @ self.table.data.T


class GmmTimeHead:
    """Two-layer MLP from [query; true-next-context embedding] to the
    parameters of a K-component 1-D Gaussian mixture over the time gap."""

    def __init__(self, registry: ParamRegistry, d: int, rng, k: int = 3, prefix: str = "head.time"):
        reg = registry.register
        self.k = k
        self.w1 = reg(f"{prefix}.w1", uniform_init(rng, (d, 2 * d), 2 * d))
        self.b1 = reg(f"{prefix}.b1", np.zeros(d))
        self.w2 = reg(f"{prefix}.w2", uniform_init(rng, (3 * k, d), d))
        self.b2 = reg(f"{prefix}.b2", np.zeros(3 * k))

    def mixture_params(self, queries: Tensor, poi_emb: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Returns (log-weights, means, scales); weights softmax-normalized,
        scales softplus-positive and clamped at the documented floor."""
        x = ad.concat([queries, poi_emb], axis=-1)
        out = ad.linear(ad.relu(ad.linear(x, self.w1, self.b1)), self.w2, self.b2)
        log_w = ad.log_softmax(out[:, : self.k], axis=-1)
        mu = out[:, self.k : 2 * self.k]
        sigma = ad.clamp_min(ad.softplus(out[:, 2 * self.k :]), SIGMA_FLOOR)
        return log_w, mu, sigma

    def nll(self, log_w: Tensor, mu: Tensor, sigma: Tensor, deltas: np.ndarray) -> Tensor:
        """Mean negative log-likelihood of the observed gaps (hours)."""
        deltas = np.asarray(deltas, dtype=np.float64)
        if not np.isfinite(deltas).all():
            raise DataError("non-finite time gap")
        z = (Tensor(deltas[:, None]) - mu) / sigma
        log_pdf = -0.5 * LOG_2PI - ad.log(sigma) - 0.5 * z * z
        comp = log_w + log_pdf
        m = comp.data.max(axis=-1, keepdims=True)
        lse = ad.log(ad.sum_(ad.exp(comp - m), axis=-1)) + Tensor(m[:, 0])
        return -ad.mean(lse)


# -- evaluation-side mixture utilities (plain numpy, no gradients) -------------


def _norm_cdf(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.vectorize(math.erf)(np.asarray(x, dtype=np.float64) / math.sqrt(2.0)))


def gmm_mass_within(weights: np.ndarray, mu: np.ndarray, sigma: np.ndarray, deltas: np.ndarray, width: float = 1.0) -> np.ndarray:
    """Probability mass of each mixture within +-width of its observed gap."""
    deltas = np.asarray(deltas, dtype=np.float64)[:, None]
    upper = _norm_cdf((deltas + width - mu) / sigma)
    lower = _norm_cdf((deltas - width - mu) / sigma)
    return (weights * (upper - lower)).sum(axis=-1)


def _mixture_pdf(x: np.ndarray, weights: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    z = (x[..., None] - mu) / sigma
    return (weights * np.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))).sum(axis=-1)


def gmm_mode(weights: np.ndarray, mu: np.ndarray, sigma: np.ndarray, n_grid: int = 512) -> np.ndarray:
    """Mixture mode per row: dense grid over the components' +-4 sigma
    envelope, then golden-section refinement around the best grid point."""
    weights, mu, sigma = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in (weights, mu, sigma))
    modes = np.empty(len(mu))
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    for i in range(len(mu)):
        lo = float((mu[i] - 4.0 * sigma[i]).min())
        hi = float((mu[i] + 4.0 * sigma[i]).max())
        grid = np.linspace(lo, hi, n_grid)
        dens = _mixture_pdf(grid, weights[i], mu[i], sigma[i])
        best = int(np.argmax(dens))
        a = grid[max(best - 1, 0)]
        b = grid[min(best + 1, n_grid - 1)]
        c, d_pt = b - gr * (b - a), a + gr * (b - a)
        for _ in range(80):
            fc = _mixture_pdf(np.array([c]), weights[i], mu[i], sigma[i])[0]
            fd = _mixture_pdf(np.array([d_pt]), weights[i], mu[i], sigma[i])[0]
            if fc > fd:
                b, d_pt = d_pt, c
                c = b - gr * (b - a)
            else:
                a, c = c, d_pt
                d_pt = a + gr * (b - a)
        modes[i] = 0.5 * (a + b)
    return modes


@dataclass
class GmmTimeEval:
    nll: Tensor
    mode: np.ndarray
    mass_within: np.ndarray


def gmm_time(head: GmmTimeHead, queries: Tensor, poi_emb: Tensor, deltas: np.ndarray, width: float = 1.0) -> GmmTimeEval:
    """Joint convenience wrapper: training NLL plus evaluation-side mode and
    probability mass within +-width hours of the observed gap."""
    log_w, mu, sigma = head.mixture_params(queries, poi_emb)
    nll = head.nll(log_w, mu, sigma, deltas)
    weights = np.exp(log_w.data)
    return GmmTimeEval(
        nll=nll,
        mode=gmm_mode(weights, mu.data, sigma.data),
        mass_within=gmm_mass_within(weights, mu.data, sigma.data, deltas, width=width),
    )
