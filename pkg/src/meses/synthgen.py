"""Synthetic corpora with planted entity signatures and co-occurrence structure.

Each entity draws its visits from a small home set of contexts plus a shared
hotspot pool (mixture weight 0.2 on hotspots), at hours clustered around an
entity-specific characteristic hour.  The generator is deterministic given
the seed, and the planted-anomaly helper re-draws context and hour from
outside the entity's signature so detection tests have ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .schema import ContextRecord, DataError, EventRecord, Substrate

HOTSPOT_WEIGHT = 0.2  # mixture weight on the shared hotspot pool
EVENTS_PER_DAY = 4
POINT_EVENT_FRACTION = 0.1  # emitted with duration = null


@dataclass(frozen=True)
class GenConfig:
    n_entities: int
    n_contexts: int
    n_activities: int
    signature_size: int
    events_per_entity: int
    hotspot_count: int = 0
    hour_profile_spread: float = 1.5
    anomaly_rate: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        for name in ("n_entities", "n_contexts", "n_activities", "signature_size", "events_per_entity"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be >= 1")
        if self.hotspot_count < 0:
            raise DataError("hotspot_count must be >= 0")
        if not (0.0 <= self.anomaly_rate <= 1.0):
            raise DataError("anomaly_rate must be in [0, 1]")
        if self.hour_profile_spread < 0:
            raise DataError("hour_profile_spread must be >= 0")
        if self.signature_size + self.hotspot_count > self.n_contexts:
            raise DataError("signature_size + hotspot_count exceeds n_contexts")


@dataclass(frozen=True)
class EntityProfile:
    entity_id: int
    home_contexts: np.ndarray
    characteristic_hour: float

    def pool(self, hotspots: np.ndarray) -> np.ndarray:
        return np.concatenate([self.home_contexts, hotspots])


@dataclass
class GenResult:
    substrate: Substrate
    events: list[EventRecord]
    profiles: list[EntityProfile]
    hotspots: np.ndarray


def _sample_base(cfg: GenConfig, rng: np.random.Generator) -> tuple[Substrate, list[EntityProfile], np.ndarray]:
    coords = rng.random((cfg.n_contexts, 2))
    labels = rng.integers(0, cfg.n_activities, cfg.n_contexts)
    contexts = [ContextRecord(i, (float(coords[i, 0]), float(coords[i, 1])), int(labels[i])) for i in range(cfg.n_contexts)]
    substrate = Substrate(contexts, n_activities=cfg.n_activities, origin_iso="2024-01-01T00:00:00Z")

    all_ids = np.arange(cfg.n_contexts)
    hotspots = rng.choice(all_ids, size=cfg.hotspot_count, replace=False) if cfg.hotspot_count else np.array([], dtype=np.int64)
    home_pool = np.setdiff1d(all_ids, hotspots)

    profiles = []
    if cfg.n_entities * cfg.signature_size <= len(home_pool):
        # Enough room for pairwise-disjoint home sets: partition a permutation,
        # so without hotspots no two entities ever share a context.
        perm = rng.permutation(home_pool)
        for u in range(cfg.n_entities):
            home = np.sort(perm[u * cfg.signature_size : (u + 1) * cfg.signature_size])
            profiles.append(EntityProfile(u, home, float(rng.uniform(0.0, 24.0))))
    else:
        for u in range(cfg.n_entities):
            home = np.sort(rng.choice(home_pool, size=cfg.signature_size, replace=False))
            profiles.append(EntityProfile(u, home, float(rng.uniform(0.0, 24.0))))
    return substrate, profiles, hotspots


def generate_full(cfg: GenConfig) -> GenResult:
    """Generate substrate, events, and the per-entity profiles behind them."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    substrate, profiles, hotspots = _sample_base(cfg, rng)

    events: list[EventRecord] = []
    for profile in profiles:
        n = cfg.events_per_entity
        use_hotspot = (rng.random(n) < HOTSPOT_WEIGHT) & (len(hotspots) > 0)
        home_draw = rng.integers(0, len(profile.home_contexts), n)
        hot_draw = rng.integers(0, max(len(hotspots), 1), n)
        ctx = np.where(use_hotspot, hotspots[hot_draw] if len(hotspots) else 0, profile.home_contexts[home_draw])
        hours = np.mod(rng.normal(profile.characteristic_hour, cfg.hour_profile_spread, n), 24.0)
        days = np.arange(n) // EVENTS_PER_DAY
        t = days * 24.0 + hours
        durations = rng.lognormal(mean=math.log(0.5), sigma=0.5, size=n)
        is_point = rng.random(n) < POINT_EVENT_FRACTION
        order = np.argsort(t, kind="stable")
        for i in order:
            events.append(
                EventRecord(
                    entity_id=profile.entity_id,
                    context_id=int(ctx[i]),
                    t_start=float(t[i]),
                    duration=None if is_point[i] else float(durations[i]),
                    activity=int(substrate.activity_of(int(ctx[i]))),
                )
            )
    return GenResult(substrate=substrate, events=events, profiles=profiles, hotspots=hotspots)


def generate(cfg: GenConfig) -> tuple[Substrate, list[EventRecord]]:
    result = generate_full(cfg)
    return result.substrate, result.events


def plant_inserted_visits(
    events: list[EventRecord],
    rate: float,
    rng: np.random.Generator,
    *,
    substrate: Substrate,
    profiles: list[EntityProfile],
    hotspots: np.ndarray,
    spread: float = 1.5,
    entity_fraction: float = 1.0,
) -> tuple[list[EventRecord], np.ndarray]:
    """Replace a fraction of the given events with out-of-signature visits.

    Replacement draws the context uniformly from outside the entity's
    home-plus-hotspot pool and the hour from the far side of the clock
    relative to the entity's characteristic hour (same day preserved).
    When ``entity_fraction`` < 1, only that fraction of entities is eligible
    and each of their events is replaced with probability rate/entity_fraction,
    so the global prevalence stays `rate` while agent-level prevalence equals
    ``entity_fraction``.  Input events are never mutated; labels mark the
    replaced slots, and each entity's stream is re-sorted chronologically.
    """
    if not (0.0 <= rate <= 1.0):
        raise DataError("rate must be in [0, 1]")
    if not (0.0 < entity_fraction <= 1.0):
        raise DataError("entity_fraction must be in (0, 1]")
    by_id = {p.entity_id: p for p in profiles}
    out = list(events)
    labels = np.zeros(len(events), dtype=np.int64)
    if rate == 0.0:
        return out, labels

    entity_ids = sorted({ev.entity_id for ev in events})
    if entity_fraction < 1.0:
        n_anom = max(1, int(len(entity_ids) * entity_fraction))
        chosen = set(rng.choice(np.asarray(entity_ids), size=n_anom, replace=False).tolist())
        per_event_rate = min(1.0, rate / entity_fraction)
    else:
        chosen = set(entity_ids)
        per_event_rate = rate

    all_ids = substrate.context_ids()
    for i, ev in enumerate(events):
        if ev.entity_id not in chosen or rng.random() >= per_event_rate:
            continue
        profile = by_id.get(ev.entity_id)
        if profile is None:
            raise DataError(f"no profile for entity {ev.entity_id}")
        pool = profile.pool(hotspots)
        outside = np.setdiff1d(all_ids, pool)
        if len(outside) == 0:
            raise DataError("no context outside the entity signature to insert")
        new_ctx = int(outside[rng.integers(len(outside))])
        day = math.floor(ev.t_start / 24.0)
        hour = float(np.mod(profile.characteristic_hour + 12.0 + rng.normal(0.0, spread), 24.0))
        out[i] = replace(
            ev,
            context_id=new_ctx,
            t_start=day * 24.0 + hour,
            activity=int(substrate.activity_of(new_ctx)),
        )
        labels[i] = 1

    # Replacement can shuffle within-day order; restore per-entity chronology.
    order = sorted(range(len(out)), key=lambda j: (out[j].entity_id, out[j].t_start))
    return [out[j] for j in order], labels[order]
