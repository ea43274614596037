"""Optimization and the pre-training / fine-tuning loops.

Pre-training corrupts each window afresh every epoch, retrieves peers for
the corrupted events from the training partition's index, and minimizes the
joint loss (detection BCE plus the weighted prototype InfoNCE) under AdamW
with a cosine schedule, global-norm clipping, and EMA-smoothed early
stopping on the validation loss.  Fine-tuning restarts from a pre-trained
state with the learning rate halved: the anomaly task trains a three-layer
head under the same masked BCE with on-the-fly perturbations (structural or
swap variant, prototype loss off); the next-visit task trains the ranking
and time heads on real consecutive pairs with equal loss weights.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import RunConfig
from .cooc import CoocIndex, build_index
from .model import BatchArrays, EventStreamModel, assemble_batch, retrieve_for_window
from .objectives import gmm_mass_within, joint_loss, noise_loss, prototype_loss
from .params import ParamRegistry, save_checkpoint
from .perturb import PerturbConfig, PerturbedWindow, corrupt, swap_corrupt
from .schema import DataError, EventArrays, EventRecord, EventWindow, Substrate, chunk_windows, event_arrays, temporal_split

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Raised when a loss stops being finite."""


@dataclass(frozen=True)
class OptimConfig:
    peak_lr: float = 2e-4
    weight_decay: float = 1e-3
    clip_norm: float = 1.0
    eta_min: float = 1e-6
    total_steps: int = 1
    finetune: bool = False  # halves the learning rate

    def validate(self) -> None:
        if min(self.peak_lr, self.weight_decay, self.clip_norm, self.eta_min) < 0 or self.total_steps < 1:
            raise DataError("optimizer settings must be positive")

    @property
    def effective_peak(self) -> float:
        return self.peak_lr / 2.0 if self.finetune else self.peak_lr


def cosine_lr(step: int, cfg: OptimConfig) -> float:
    """Cosine decay from the peak to eta_min over the full budget.

    Written as an interpolation so the endpoints come out exact: the weight
    (1 + cos(pi*step/total))/2 is 1 at step 0 and 0 at step total.
    """
    if step < 0 or step > cfg.total_steps:
        raise DataError(f"step {step} outside [0, {cfg.total_steps}]")
    peak = cfg.effective_peak
    w = (1.0 + math.cos(math.pi * step / cfg.total_steps)) / 2.0
    return peak * w + cfg.eta_min * (1.0 - w)


class AdamW:
    """Decoupled-weight-decay Adam with bias correction and global-norm
    clipping applied to the gradients before each step."""

    BETAS = (0.9, 0.999)
    EPS = 1e-8

    def __init__(self, registry: ParamRegistry, weight_decay: float = 1e-3, clip_norm: float = 1.0):
        self.registry = registry
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in registry.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in registry.items()}
        self.skipped_steps = 0

    def _gather_grads(self) -> dict[str, np.ndarray]:
        return {name: (p.grad if p.grad is not None else np.zeros_like(p.data)) for name, p in self.registry.items()}

    def step(self, lr: float) -> float:
        """One update; returns the pre-clip global gradient norm."""
        grads = self._gather_grads()
        sq = sum(float(np.sum(g * g)) for g in grads.values())
        if not np.isfinite(sq):
            self.skipped_steps += 1
            log.warning("non-finite gradient; optimizer step %d skipped", self.t + 1)
            return float("inf")
        norm = math.sqrt(sq)
        scale = self.clip_norm / norm if norm > self.clip_norm else 1.0
        b1, b2 = self.BETAS
        self.t += 1
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, p in self.registry.items():
            g = grads[name] * scale
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.data = p.data - lr * (m_hat / (np.sqrt(v_hat) + self.EPS) + self.weight_decay * p.data)
        return norm


class EmaEarlyStop:
    """EMA-smoothed criterion with patience; the first value seeds the EMA."""

    def __init__(self, factor: float = 0.1, patience: int = 10):
        self.factor = factor
        self.patience = patience
        self.ema: float | None = None
        self.best = math.inf
        self.since_best = 0
        self.best_epoch = -1
        self.epoch = -1

    def update(self, value: float) -> tuple[bool, bool]:
        """Feed one epoch's criterion; returns (improved, should_stop)."""
        self.epoch += 1
        self.ema = value if self.ema is None else self.factor * value + (1.0 - self.factor) * self.ema
        improved = self.ema < self.best
        if improved:
            self.best = self.ema
            self.best_epoch = self.epoch
            self.since_best = 0
        else:
            self.since_best += 1
        return improved, self.since_best >= self.patience


# -- partitions ---------------------------------------------------------------


@dataclass
class Partition:
    tag: str
    events: list[EventRecord]
    rows: np.ndarray
    arrays: EventArrays
    index: CoocIndex
    windows: list[EventWindow] = field(default_factory=list)


def build_partition(events: list[EventRecord], rows: np.ndarray, T: int, tag: str) -> Partition:
    part_events = [events[i] for i in rows]
    arrays = event_arrays(part_events)
    windows = chunk_windows(part_events, T, rows=rows)
    return Partition(tag=tag, events=part_events, rows=np.asarray(rows), arrays=arrays, index=build_index(arrays, tag), windows=windows)


def _batched(order: np.ndarray, size: int):
    for lo in range(0, len(order), size):
        yield order[lo : lo + size]


@dataclass
class TrainResult:
    model: EventStreamModel
    history: list[dict]
    best_epoch: int

    def manifest(self, stage: str, extra: dict | None = None) -> dict:
        out = {
            "stage": stage,
            "config": self.model.cfg.to_dict(),
            "config_hash": self.model.cfg.config_hash(),
            "n_entities": self.model.n_entities,
            "heads": [name for name, present in (
                ("anomaly", self.model.anomaly_head is not None),
                ("next-visit", self.model.poi_head is not None),
            ) if present],
            "best_epoch": self.best_epoch,
        }
        if extra:
            out.update(extra)
        return out


def _perturb_config(cfg: RunConfig) -> PerturbConfig:
    return PerturbConfig(p_norm=cfg.p_norm, rate=cfg.flag_rate, modes=cfg.modes, variant=cfg.perturb_variant, swap_prob=cfg.swap_prob)


def _forward_corrupted(model: EventStreamModel, perturbed: list[PerturbedWindow], partition: Partition):
    cfg = model.cfg
    windows = [pw.window for pw in perturbed]
    peersets = [retrieve_for_window(w, partition.index, cfg.C, cfg.min_overlap) for w in windows]
    batch = assemble_batch(windows, peersets, partition.arrays, model.substrate, cfg.C)
    labels = np.stack([pw.labels for pw in perturbed])
    h = model.forward_batch(batch)
    return h, batch, labels


def _joint_loss(model: EventStreamModel, h, batch: BatchArrays, labels: np.ndarray) -> tuple[Tensor, float, float]:
    cfg = model.cfg
    n_loss = noise_loss(model.noise_head.logits(h), labels, batch.pad_mask)
    if cfg.prototype_loss_enabled:
        p_loss = prototype_loss(h, labels, batch.pad_mask, batch.window_entities, model.projector, model.featurizer.prototypes, cfg.beta)
        total = joint_loss(n_loss, p_loss, cfg.gamma)
        return total, float(n_loss.item()), float(p_loss.item())
    return n_loss, float(n_loss.item()), 0.0


def pretrain(substrate: Substrate, events: list[EventRecord], cfg: RunConfig, seed: int | None = None) -> TrainResult:
    """Pre-train on the corpus's training partition; validation runs on the
    earliest slice of the training window under a frozen perturbation draw."""
    cfg.validate()
    seed = cfg.seed if seed is None else seed
    split = temporal_split(events, cfg.train_frac, cfg.val_frac_of_train)
    n_entities = max(ev.entity_id for ev in events) + 1
    train = build_partition(events, split.train, cfg.window, "train")
    val = build_partition(events, split.val, cfg.window, "val")

    model = EventStreamModel(cfg, substrate, n_entities, init_seed=seed)
    pcfg = _perturb_config(cfg)
    rng = np.random.default_rng([seed, 0x7331])
    val_rng = np.random.default_rng([seed, 0x7A11])
    val_perturbed = [corrupt(w, substrate, pcfg, val_rng) for w in val.windows]

    steps_per_epoch = max(1, math.ceil(len(train.windows) / cfg.batch_size))
    optim_cfg = OptimConfig(
        peak_lr=cfg.peak_lr, weight_decay=cfg.weight_decay, clip_norm=cfg.clip_norm,
        eta_min=cfg.eta_min, total_steps=max(1, cfg.max_epochs * steps_per_epoch),
    )
    optimizer = AdamW(model.registry, weight_decay=cfg.weight_decay, clip_norm=cfg.clip_norm)
    stopper = EmaEarlyStop(factor=cfg.ema_factor, patience=cfg.patience)

    best_state = model.registry.state_arrays()
    history: list[dict] = []
    step = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train.windows))
        epoch_losses = []
        for batch_ids in _batched(order, cfg.batch_size):
            perturbed = [corrupt(train.windows[i], substrate, pcfg, rng) for i in batch_ids]
            h, batch, labels = _forward_corrupted(model, perturbed, train)
            total, n_val_, p_val_ = _joint_loss(model, h, batch, labels)
            value = float(total.item())
            if not np.isfinite(value):
                raise NumericalError(f"non-finite training loss at epoch {epoch}")
            model.registry.zero_grad()
            total.backward()
            optimizer.step(cosine_lr(min(step, optim_cfg.total_steps), optim_cfg))
            step += 1
            epoch_losses.append(value)

        val_losses = []
        for batch_pws in _batched(np.arange(len(val_perturbed)), cfg.batch_size):
            pws = [val_perturbed[i] for i in batch_pws]
            h, batch, labels = _forward_corrupted(model, pws, val)
            total, _, _ = _joint_loss(model, h, batch, labels)
            val_losses.append(float(total.item()))
        val_value = float(np.mean(val_losses)) if val_losses else float(np.mean(epoch_losses))
        improved, should_stop = stopper.update(val_value)
        if improved:
            best_state = model.registry.state_arrays()
        history.append(
            {"epoch": epoch, "train_loss": float(np.mean(epoch_losses)), "val_loss": val_value,
             "val_ema": stopper.ema, "lr": cosine_lr(min(step, optim_cfg.total_steps), optim_cfg)}
        )
        log.info("pretrain epoch %d train %.4f val %.4f (ema %.4f)", epoch, history[-1]["train_loss"], val_value, stopper.ema)
        if should_stop:
            break
    model.registry.load_state_arrays(best_state)
    return TrainResult(model=model, history=history, best_epoch=stopper.best_epoch)


# -- fine-tuning ----------------------------------------------------------------


def _swap_pools(train: Partition) -> dict[int, list[EventRecord]]:
    """Per-entity donor pools: other entities' events at contexts the focal
    entity never uses in the training partition."""
    ctx_sets: dict[int, set[int]] = {}
    for ev in train.events:
        ctx_sets.setdefault(ev.entity_id, set()).add(ev.context_id)
    pools: dict[int, list[EventRecord]] = {}
    for entity, ctx_set in ctx_sets.items():
        pools[entity] = [ev for ev in train.events if ev.entity_id != entity and ev.context_id not in ctx_set]
    return pools


def finetune(model: EventStreamModel, substrate: Substrate, events: list[EventRecord], task: str, seed: int | None = None) -> TrainResult:
    """Fine-tune a pre-trained model for `anomaly` or `next-visit`."""
    cfg = model.cfg
    seed = cfg.seed if seed is None else seed
    if task == "anomaly":
        return _finetune_anomaly(model, substrate, events, seed)
    if task == "next-visit":
        return _finetune_next_visit(model, substrate, events, seed)
    raise DataError(f"unknown fine-tune task: {task}")


def _finetune_anomaly(model: EventStreamModel, substrate: Substrate, events, seed: int) -> TrainResult:
    cfg = model.cfg
    split = temporal_split(events, cfg.train_frac, cfg.val_frac_of_train)
    train = build_partition(events, split.train, cfg.window, "train")
    val = build_partition(events, split.val, cfg.window, "val")
    head = model.ensure_anomaly_head()
    pcfg = _perturb_config(cfg)
    rng = np.random.default_rng([seed, 0xF17E])
    val_rng = np.random.default_rng([seed, 0xF1A1])
    pools = _swap_pools(train) if cfg.perturb_variant == "swap" else None

    def corrupt_window(window: EventWindow, stream: np.random.Generator) -> PerturbedWindow:
        if cfg.perturb_variant == "swap":
            pool = pools.get(window.entity_id, [])
            if not pool:
                return PerturbedWindow(window=window, labels=np.zeros(window.length, dtype=np.int64), flags=np.zeros(window.length, dtype=np.int64))
            return swap_corrupt(window, pool, cfg.swap_prob, stream, focal_context_set=set())
        return corrupt(window, substrate, pcfg, stream)

    val_perturbed = [corrupt_window(w, val_rng) for w in val.windows]

    steps_per_epoch = max(1, math.ceil(len(train.windows) / cfg.batch_size))
    optim_cfg = OptimConfig(
        peak_lr=cfg.peak_lr, weight_decay=cfg.weight_decay, clip_norm=cfg.clip_norm,
        eta_min=cfg.eta_min, total_steps=max(1, cfg.finetune_max_epochs * steps_per_epoch), finetune=True,
    )
    optimizer = AdamW(model.registry, weight_decay=cfg.weight_decay, clip_norm=cfg.clip_norm)
    stopper = EmaEarlyStop(factor=cfg.ema_factor, patience=cfg.finetune_patience)
    best_state = model.registry.state_arrays()
    history: list[dict] = []
    step = 0
    for epoch in range(cfg.finetune_max_epochs):
        order = rng.permutation(len(train.windows))
        epoch_losses = []
        for batch_ids in _batched(order, cfg.batch_size):
            perturbed = [corrupt_window(train.windows[i], rng) for i in batch_ids]
            h, batch, labels = _forward_corrupted(model, perturbed, train)
            loss = noise_loss(head.logits(h), labels, batch.pad_mask)
            value = float(loss.item())
            if not np.isfinite(value):
                raise NumericalError(f"non-finite fine-tune loss at epoch {epoch}")
            model.registry.zero_grad()
            loss.backward()
            optimizer.step(cosine_lr(min(step, optim_cfg.total_steps), optim_cfg))
            step += 1
            epoch_losses.append(value)
        val_losses = []
        for batch_pws in _batched(np.arange(len(val_perturbed)), cfg.batch_size):
            pws = [val_perturbed[i] for i in batch_pws]
            h, batch, labels = _forward_corrupted(model, pws, val)
            val_losses.append(float(noise_loss(head.logits(h), labels, batch.pad_mask).item()))
        val_value = float(np.mean(val_losses)) if val_losses else float(np.mean(epoch_losses))
        improved, should_stop = stopper.update(val_value)
        if improved:
            best_state = model.registry.state_arrays()
        history.append({"epoch": epoch, "train_loss": float(np.mean(epoch_losses)), "val_loss": val_value, "val_ema": stopper.ema})
        log.info("anomaly fine-tune epoch %d train %.4f val %.4f", epoch, history[-1]["train_loss"], val_value)
        if should_stop:
            break
    model.registry.load_state_arrays(best_state)
    return TrainResult(model=model, history=history, best_epoch=stopper.best_epoch)


def _window_pairs(window: EventWindow) -> list[int]:
    """Positions t with a real successor t+1 inside the window."""
    n = window.n_real()
    return list(range(n - 1)) if n >= 2 else []


def _finetune_next_visit(model: EventStreamModel, substrate: Substrate, events, seed: int) -> TrainResult:
    cfg = model.cfg
    split = temporal_split(events, cfg.train_frac, cfg.val_frac_of_train)
    # Next-visit validation uses the tail of the training window (temporally
    # adjacent to test); training gets the rest of the training partition.
    train_part = np.sort(np.concatenate([split.val, split.train]))
    tail = set(split.val_tail.tolist())
    ft_train_rows = np.asarray([r for r in train_part if r not in tail], dtype=np.int64)
    train = build_partition(events, ft_train_rows, cfg.window, "train")
    val = build_partition(events, split.val_tail, cfg.window, "val")
    poi_head, time_head = model.ensure_next_visit_heads()
    rng = np.random.default_rng([seed, 0xFEE7])

    steps_per_epoch = max(1, math.ceil(len(train.windows) / cfg.batch_size))
    optim_cfg = OptimConfig(
        peak_lr=cfg.peak_lr, weight_decay=cfg.weight_decay, clip_norm=cfg.clip_norm,
        eta_min=cfg.eta_min, total_steps=max(1, cfg.finetune_max_epochs * steps_per_epoch), finetune=True,
    )
    optimizer = AdamW(model.registry, weight_decay=cfg.weight_decay, clip_norm=cfg.clip_norm)
    stopper = EmaEarlyStop(factor=cfg.ema_factor, patience=cfg.finetune_patience)
    best_state = model.registry.state_arrays()
    history: list[dict] = []
    step = 0

    def batch_loss(windows: list[EventWindow], partition: Partition, stream: np.random.Generator | None):
        peersets = [retrieve_for_window(w, partition.index, cfg.C, cfg.min_overlap) for w in windows]
        batch = assemble_batch(windows, peersets, partition.arrays, substrate, cfg.C)
        h = model.forward_batch(batch)
        queries_idx, targets, deltas = [], [], []
        for b, window in enumerate(windows):
            for t in _window_pairs(window):
                nxt = window.events[t + 1]
                queries_idx.append(b * cfg.window + t)
                targets.append(int(substrate.position_of(nxt.context_id)))
                deltas.append(nxt.t_start - window.events[t].t_start)
        if not queries_idx:
            return None
        h_flat = ad.reshape(h, (h.shape[0] * h.shape[1], h.shape[2]))
        h_sel = ad.take_rows(h_flat, np.asarray(queries_idx))
        queries = poi_head.query(h_sel)
        sample_rng = stream if stream is not None else np.random.default_rng([seed, 0x5EED])
        poi_loss = poi_head.sampled_softmax_loss(queries, np.asarray(targets), sample_rng, n_neg=cfg.n_neg, temperature=cfg.poi_temperature)
        poi_emb = ad.take_rows(poi_head.table, np.asarray(targets))
        log_w, mu, sigma = time_head.mixture_params(queries, poi_emb)
        time_loss = time_head.nll(log_w, mu, sigma, np.asarray(deltas))
        return poi_loss + time_loss  # equal weights

    for epoch in range(cfg.finetune_max_epochs):
        order = rng.permutation(len(train.windows))
        epoch_losses = []
        for batch_ids in _batched(order, cfg.batch_size):
            loss = batch_loss([train.windows[i] for i in batch_ids], train, rng)
            if loss is None:
                continue
            value = float(loss.item())
            if not np.isfinite(value):
                raise NumericalError(f"non-finite fine-tune loss at epoch {epoch}")
            model.registry.zero_grad()
            loss.backward()
            optimizer.step(cosine_lr(min(step, optim_cfg.total_steps), optim_cfg))
            step += 1
            epoch_losses.append(value)
        val_losses = []
        for batch_ids in _batched(np.arange(len(val.windows)), cfg.batch_size):
            loss = batch_loss([val.windows[i] for i in batch_ids], val, None)
            if loss is not None:
                val_losses.append(float(loss.item()))
        val_value = float(np.mean(val_losses)) if val_losses else float(np.mean(epoch_losses) if epoch_losses else 0.0)
        improved, should_stop = stopper.update(val_value)
        if improved:
            best_state = model.registry.state_arrays()
        history.append({"epoch": epoch, "train_loss": float(np.mean(epoch_losses)) if epoch_losses else 0.0, "val_loss": val_value, "val_ema": stopper.ema})
        log.info("next-visit fine-tune epoch %d train %.4f val %.4f", epoch, history[-1]["train_loss"], val_value)
        if should_stop:
            break
    model.registry.load_state_arrays(best_state)
    return TrainResult(model=model, history=history, best_epoch=stopper.best_epoch)


# -- scoring passes ---------------------------------------------------------------


@dataclass
class EventScores:
    rows: np.ndarray
    entities: np.ndarray
    noise: np.ndarray
    prototype: np.ndarray
    anomaly: np.ndarray | None = None


def score_events(model: EventStreamModel, partition: Partition, use_anomaly_head: bool = False) -> EventScores:
    """Run the model over uncorrupted windows and emit per-event scores."""
    cfg = model.cfg
    rows, entities, noise, proto, anom = [], [], [], [], []
    for batch_ids in _batched(np.arange(len(partition.windows)), cfg.batch_size):
        windows = [partition.windows[i] for i in batch_ids]
        peersets = [retrieve_for_window(w, partition.index, cfg.C, cfg.min_overlap) for w in windows]
        batch = assemble_batch(windows, peersets, partition.arrays, model.substrate, cfg.C)
        h = model.forward_batch(batch)
        noise_s = model.noise_scores(h)
        proto_s = model.prototype_scores(h, batch.window_entities)
        anom_s = model.anomaly_scores(h) if use_anomaly_head else None
        real = ~batch.pad_mask
        for b in range(len(windows)):
            sel = real[b]
            rows.append(batch.rows[b][sel])
            entities.append(np.full(int(sel.sum()), batch.window_entities[b]))
            noise.append(noise_s[b][sel])
            proto.append(proto_s[b][sel])
            if anom_s is not None:
                anom.append(anom_s[b][sel])
    return EventScores(
        rows=np.concatenate(rows),
        entities=np.concatenate(entities),
        noise=np.concatenate(noise),
        prototype=np.concatenate(proto),
        anomaly=np.concatenate(anom) if anom else None,
    )


def prototype_accuracy(model: EventStreamModel, partition: Partition) -> float:
    """Nearest-prototype entity identification on uncorrupted events."""
    cfg = model.cfg
    correct, total = 0, 0
    for batch_ids in _batched(np.arange(len(partition.windows)), cfg.batch_size):
        windows = [partition.windows[i] for i in batch_ids]
        peersets = [retrieve_for_window(w, partition.index, cfg.C, cfg.min_overlap) for w in windows]
        batch = assemble_batch(windows, peersets, partition.arrays, model.substrate, cfg.C)
        h = model.forward_batch(batch)
        assigned = model.prototype_assignments(h)
        real = ~batch.pad_mask
        truth = batch.window_entities[:, None]
        correct += int((assigned[real] == np.broadcast_to(truth, assigned.shape)[real]).sum())
        total += int(real.sum())
    return correct / max(total, 1)


def next_visit_metrics(model: EventStreamModel, partition: Partition, ks=(10, 20)) -> dict:
    """H@k, MRR, and the +-60 min probability mass on consecutive pairs."""
    from . import metrics as mt

    cfg = model.cfg
    poi_head, time_head = model.ensure_next_visit_heads()
    rankings, targets, masses = [], [], []
    for batch_ids in _batched(np.arange(len(partition.windows)), cfg.batch_size):
        windows = [partition.windows[i] for i in batch_ids]
        peersets = [retrieve_for_window(w, partition.index, cfg.C, cfg.min_overlap) for w in windows]
        batch = assemble_batch(windows, peersets, partition.arrays, model.substrate, cfg.C)
        h = model.forward_batch(batch)
        idx, tgt, deltas = [], [], []
        for b, window in enumerate(windows):
            for t in _window_pairs(window):
                nxt = window.events[t + 1]
                idx.append(b * cfg.window + t)
                tgt.append(int(model.substrate.position_of(nxt.context_id)))
                deltas.append(nxt.t_start - window.events[t].t_start)
        if not idx:
            continue
        h_flat = ad.reshape(h, (h.shape[0] * h.shape[1], h.shape[2]))
        queries = poi_head.query(ad.take_rows(h_flat, np.asarray(idx)))
        scores = poi_head.full_scores(queries)
        poi_emb = ad.take_rows(poi_head.table, np.asarray(tgt))
        log_w, mu, sigma = time_head.mixture_params(queries, poi_emb)
        masses.append(gmm_mass_within(np.exp(log_w.data), mu.data, sigma.data, np.asarray(deltas), width=1.0))
        rankings.extend(scores)
        targets.extend(tgt)
    out = {f"hit_at_{k}": mt.hit_at_k(rankings, targets, k) for k in ks}
    out["mrr"] = mt.mrr(rankings, targets)
    out["t_pm60"] = mt.t_pm60(np.concatenate(masses)) if masses else 0.0
    return out


def save_model(path, result: TrainResult, stage: str, extra: dict | None = None) -> dict:
    manifest = result.manifest(stage, extra)
    save_checkpoint(path, result.model.registry, manifest)
    return manifest


def load_model(path, substrate: Substrate) -> tuple[EventStreamModel, dict]:
    from .params import load_checkpoint

    state, manifest = load_checkpoint(path)
    cfg = RunConfig.from_dict(manifest["config"])
    model = EventStreamModel(cfg, substrate, manifest["n_entities"])
    if "anomaly" in manifest.get("heads", []):
        model.ensure_anomaly_head()
    if "next-visit" in manifest.get("heads", []):
        model.ensure_next_visit_heads()
    model.registry.load_state_arrays(state)
    return model, manifest
