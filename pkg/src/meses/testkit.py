"""Shared fixtures for the gradient oracle and the verification suite.

Builds a small deterministic corpus and model (the desk profile shapes), a
fixed corrupted batch, and a closure that recomputes the joint pre-training
loss from the current parameters, which is exactly what the central
finite-difference oracle needs.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .config import RunConfig
from .model import EventStreamModel, assemble_batch, retrieve_for_window
from .perturb import corrupt
from .synthgen import GenConfig, generate_full
from .train import _joint_loss, _perturb_config, build_partition
from .schema import temporal_split


def desk_gen_config(seed: int = 0) -> GenConfig:
    return GenConfig(
        n_entities=20,
        n_contexts=16,
        n_activities=4,
        signature_size=3,
        events_per_entity=48,
        hotspot_count=3,
        hour_profile_spread=1.5,
        anomaly_rate=0.0,
        seed=seed,
    )


def desk_run_config(seed: int = 0, **overrides) -> RunConfig:
    base = RunConfig(seed=seed, gen=desk_gen_config(seed))
    return base.with_overrides(**overrides) if overrides else base


def joint_loss_fixture(seed: int = 0, n_windows: int = 2, **overrides):
    """A (model, f) pair: f() recomputes the joint loss on a frozen batch."""
    cfg = desk_run_config(seed, **overrides)
    result = generate_full(cfg.gen)
    substrate, events = result.substrate, result.events
    split = temporal_split(events, cfg.train_frac, cfg.val_frac_of_train)
    train = build_partition(events, split.train, cfg.window, "train")
    n_entities = max(ev.entity_id for ev in events) + 1
    model = EventStreamModel(cfg, substrate, n_entities, init_seed=seed)

    rng = np.random.default_rng([seed, 0x0DE])
    pick = rng.choice(len(train.windows), size=min(n_windows, len(train.windows)), replace=False)
    perturbed = [corrupt(train.windows[i], substrate, _perturb_config(cfg), rng) for i in pick]
    windows = [pw.window for pw in perturbed]
    peersets = [retrieve_for_window(w, train.index, cfg.C, cfg.min_overlap) for w in windows]
    batch = assemble_batch(windows, peersets, train.arrays, substrate, cfg.C)
    labels = np.stack([pw.labels for pw in perturbed])

    def f():
        h = model.forward_batch(batch)
        total, _, _ = _joint_loss(model, h, batch, labels)
        return total

    return model, f


def joint_loss_gradcheck(n_samples: int = 500, seed: int = 0, step: float = 1e-5) -> ad.GradCheckReport:
    """Criterion-1 oracle: AD vs central differences on the full joint loss."""
    model, f = joint_loss_fixture(seed=seed)
    return ad.grad_check(f, model.registry.tensors(), step=step, n_samples=n_samples, rng=np.random.default_rng([seed, 0xFD]))
