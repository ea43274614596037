"""Stochastic corruption of event windows with per-event binary labels.

The operator leaves a window untouched with probability p_norm; otherwise it
flags events i.i.d. at the configured rate (forcing at least one), assigns
each flagged event a location perturbation, a time perturbation, or both,
and applies them.  Label soundness is exact: label 1 means the event differs
from the original in the perturbed attributes, label 0 means it is bitwise
identical.  A separate swap variant replaces an event's context/activity
with those of a donor event from another entity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .schema import DataError, EventRecord, EventWindow, Substrate

MODES = ("loc", "time", "both")
_MAX_REDRAWS = 16  # window-level redraws before forcing a location flag
_MAX_LOC_TRIES = 64  # per-event draws to land on a different context


@dataclass(frozen=True)
class PerturbConfig:
    p_norm: float = 0.7
    rate: float = 0.3
    modes: tuple[str, ...] = MODES
    variant: str = "structural"  # or "swap"
    swap_prob: float = 0.3

    def validate(self) -> None:
        if not (0.0 <= self.p_norm <= 1.0):
            raise DataError("p_norm must be in [0, 1]")
        if not (0.0 <= self.rate <= 1.0):
            raise DataError("rate must be in [0, 1]")
        if self.variant not in ("structural", "swap"):
            raise DataError(f"unknown perturbation variant: {self.variant}")
        if self.variant == "structural" and not self.modes:
            raise DataError("modes must be non-empty for the structural variant")
        for mode in self.modes:
            if mode not in MODES:
                raise DataError(f"unknown perturbation mode: {mode}")
        if not (0.0 <= self.swap_prob <= 1.0):
            raise DataError("swap_prob must be in [0, 1]")


@dataclass
class PerturbedWindow:
    window: EventWindow
    labels: np.ndarray  # (T,) int, 1 on perturbed events, 0 on pads
    flags: np.ndarray  # the raw flag draw before identity fallbacks

    @property
    def pad_mask(self) -> np.ndarray:
        return self.window.pad_mask


def perturb_location(event: EventRecord, substrate: Substrate, rng: np.random.Generator, exclude_context: int | None = None) -> EventRecord | None:
    """Resample the event's context: a uniform point in the substrate bounding
    box, snapped to the nearest context by euclidean distance (ties go to the
    lowest context_id); the activity becomes the snapped context's label.

    With ``exclude_context`` set, redraws until the snap lands elsewhere and
    returns None when that is impossible (single-context substrate).
    """
    lo, hi = substrate.bounding_box[0], substrate.bounding_box[1]
    coords = substrate.coords_of(substrate.context_ids())
    ids = substrate.context_ids()
    for _ in range(_MAX_LOC_TRIES if exclude_context is not None else 1):
        point = rng.uniform(lo, hi)
        dist = np.square(coords - point).sum(axis=1)
        nearest = dist == dist.min()
        new_ctx = int(ids[nearest].min())
        if exclude_context is None or new_ctx != exclude_context:
            return replace(event, context_id=new_ctx, activity=int(substrate.activity_of(new_ctx)))
    if substrate.n_contexts > 1:
        # The draw kept snapping back; pick the nearest different context outright.
        keep = ids != exclude_context
        new_ctx = int(ids[keep][np.argmin(dist[keep])])
        return replace(event, context_id=new_ctx, activity=int(substrate.activity_of(new_ctx)))
    return None


def perturb_time(window: EventWindow, index: int, rng: np.random.Generator) -> EventRecord | None:
    """Resample t_start uniformly between the neighbours' occupied interval,
    (prev end, next start); returns None (identity) at window boundaries or
    when the interval is empty.  Point-event neighbours count duration 0."""
    events = window.events
    n_real = window.n_real()
    if index < 0 or index >= n_real:
        raise DataError(f"index {index} outside the real slots of the window")
    if index == 0 or index == n_real - 1:
        return None
    prev, cur, nxt = events[index - 1], events[index], events[index + 1]
    lo = prev.t_end
    hi = nxt.t_start
    if hi <= lo:
        return None
    return replace(cur, t_start=float(rng.uniform(lo, hi)))


def corrupt(window: EventWindow, substrate: Substrate, cfg: PerturbConfig, rng: np.random.Generator) -> PerturbedWindow:
    """Apply the structural perturbation operator to one window."""
    cfg.validate()
    T = window.length
    labels = np.zeros(T, dtype=np.int64)
    flags_out = np.zeros(T, dtype=np.int64)
    n_real = window.n_real()
    if n_real == 0:
        raise DataError("cannot corrupt a fully padded window")
    if rng.random() < cfg.p_norm:
        return PerturbedWindow(window=window, labels=labels, flags=flags_out)

    for _ in range(_MAX_REDRAWS):
        flags = rng.random(n_real) < cfg.rate
        if not flags.any():
            flags[rng.integers(n_real)] = True
        new_events: list[EventRecord | None] = list(window.events)
        labels = np.zeros(T, dtype=np.int64)
        for t in np.flatnonzero(flags):
            mode = cfg.modes[rng.integers(len(cfg.modes))]
            changed = _apply_mode(new_events, window, int(t), mode, substrate, rng)
            labels[t] = int(changed)
        if labels.sum() >= 1:
            flags_out[:n_real] = flags
            corrupted = EventWindow(window.entity_id, new_events, window.pad_mask.copy(), window.rows.copy())
            return PerturbedWindow(window=corrupted, labels=labels, flags=flags_out)

    # Every redraw fell back (e.g. modes == {time} on a window with no usable
    # interval): force a location perturbation on one event so the corrupted
    # branch always carries at least one positive label.
    t = int(rng.integers(n_real))
    forced = perturb_location(window.events[t], substrate, rng, exclude_context=window.events[t].context_id)
    if forced is None:
        # Degenerate single-context substrate: nothing can change.
        return PerturbedWindow(window=window, labels=np.zeros(T, dtype=np.int64), flags=np.zeros(T, dtype=np.int64))
    new_events = list(window.events)
    new_events[t] = forced
    labels = np.zeros(T, dtype=np.int64)
    labels[t] = 1
    flags_out[t] = 1
    corrupted = EventWindow(window.entity_id, new_events, window.pad_mask.copy(), window.rows.copy())
    return PerturbedWindow(window=corrupted, labels=labels, flags=flags_out)


def _apply_mode(new_events, original: EventWindow, t: int, mode: str, substrate: Substrate, rng) -> bool:
    """Perturb slot t in place; returns whether the event actually changed."""
    if mode == "loc":
        moved = perturb_location(original.events[t], substrate, rng, exclude_context=original.events[t].context_id)
        if moved is None:
            return False
        new_events[t] = moved
        return True
    if mode == "time":
        shifted = perturb_time(original, t, rng)
        if shifted is None:
            return False
        new_events[t] = shifted
        return True
    # both: resample the time first (from the original neighbours), then move.
    shifted = perturb_time(original, t, rng)
    base = shifted if shifted is not None else original.events[t]
    moved = perturb_location(base, substrate, rng, exclude_context=base.context_id)
    if moved is not None:
        new_events[t] = moved
        return True
    if shifted is not None:
        new_events[t] = shifted
        return True
    return False


def swap_corrupt(
    window: EventWindow,
    donor_events: list[EventRecord],
    swap_prob: float,
    rng: np.random.Generator,
    focal_context_set: set[int] | None = None,
) -> PerturbedWindow:
    """Replace context/activity of random events with a donor's, keeping the
    entity and timestamps; donors at contexts the focal entity already uses
    are excluded from the pool."""
    if not donor_events:
        raise DataError("donor pool must be non-empty")
    if any(d.entity_id == window.entity_id for d in donor_events):
        raise DataError("donor events must belong to other entities")
    if focal_context_set is None:
        focal_context_set = {ev.context_id for ev in window.events if ev is not None}
    pool = [d for d in donor_events if d.context_id not in focal_context_set]

    T = window.length
    labels = np.zeros(T, dtype=np.int64)
    new_events: list[EventRecord | None] = list(window.events)
    for t in range(window.n_real()):
        if rng.random() >= swap_prob:
            continue
        if not pool:
            continue  # nothing eligible after exclusion; keep the event, label 0
        donor = pool[rng.integers(len(pool))]
        new_events[t] = replace(window.events[t], context_id=donor.context_id, activity=donor.activity)
        labels[t] = 1
    corrupted = EventWindow(window.entity_id, new_events, window.pad_mask.copy(), window.rows.copy())
    return PerturbedWindow(window=corrupted, labels=labels, flags=labels.copy())
