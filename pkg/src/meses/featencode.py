"""Per-event feature tokens: spatial, two temporal, entity prototype, activity.

Every event becomes F tokens of width d_f: a multi-scale sinusoidal encoding
of its context coordinates over a hexagonal lattice, sinusoidal time features
of the start and end times (sharing one set of weights), the entity's
prototype looked up from a factored table, and a linear projection of its
activity category.  Dropping the entity token yields the F = 4 variant; the
prototype stays available as a contrastive target either way.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params import ParamRegistry
from .schema import DataError, EventRecord, Substrate

# Unit vectors of the planar hexagonal lattice used for the spatial phases.
HEX_LATTICE = np.array([[1.0, 0.0], [-0.5, np.sqrt(3.0) / 2.0], [-0.5, -np.sqrt(3.0) / 2.0]])

PERIODS = {"daily": 24.0, "weekly": 168.0, "none": None}


def uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    """Symmetric uniform init with bound 1/sqrt(fan_in)."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


def geometric_scales(lambda_min: float, lambda_max: float, n_scales: int) -> np.ndarray:
    """Scale ladder from lambda_min to lambda_max, geometric in between."""
    if n_scales < 1:
        raise DataError("n_scales must be >= 1")
    if lambda_min <= 0 or lambda_max < lambda_min:
        raise DataError("need 0 < lambda_min <= lambda_max")
    if n_scales == 1:
        return np.array([lambda_min])
    s = np.arange(n_scales)
    return lambda_min * (lambda_max / lambda_min) ** (s / (n_scales - 1))


class Space2VecEncoder:
    """Multi-scale hexagonal-lattice position encoding with a linear-ReLU map."""

    def __init__(self, registry: ParamRegistry, d_f: int, n_scales: int, lambda_min: float, lambda_max: float, rng, prefix: str = "enc.loc"):
        self.d_f = d_f
        self.n_scales = n_scales
        self.scales = geometric_scales(lambda_min, lambda_max, n_scales)
        self.w_loc = registry.register(f"{prefix}.w", uniform_init(rng, (d_f, 6 * n_scales), 6 * n_scales))

    def raw_encoding(self, coords: np.ndarray) -> np.ndarray:
        """Interleaved (cos, sin) phases over lattice axes and scales, 6*N_s wide."""
        coords = np.asarray(coords, dtype=np.float64)
        proj = coords @ HEX_LATTICE.T  # (..., 3)
        phases = proj[..., None, :] / self.scales[:, None]  # (..., N_s, 3)
        pe = np.stack([np.cos(phases), np.sin(phases)], axis=-1)  # (..., N_s, 3, 2)
        return pe.reshape(*coords.shape[:-1], 6 * self.n_scales)

    def encode(self, coords: np.ndarray) -> Tensor:
        pe = Tensor(self.raw_encoding(coords))
        return ad.relu(ad.linear(pe, self.w_loc))


class Time2VecEncoder:
    """One linear channel plus d_f - 1 sinusoids of the (wrapped) timestamp."""

    def __init__(self, registry: ParamRegistry, d_f: int, period: str, rng, prefix: str = "enc.time"):
        if period not in PERIODS:
            raise DataError(f"unknown period: {period}")
        self.d_f = d_f
        self.period = PERIODS[period]
        self.w = registry.register(f"{prefix}.w", uniform_init(rng, (d_f,), 1))
        self.b = registry.register(f"{prefix}.b", np.zeros(d_f))

    def wrap(self, tau: np.ndarray) -> np.ndarray:
        # period "none" passes tau through unchanged; very large raw hours can
        # then alias the sinusoids, so unwrapped corpora should stay short.
        tau = np.asarray(tau, dtype=np.float64)
        return np.mod(tau, self.period) if self.period is not None else tau

    def encode(self, tau: np.ndarray) -> Tensor:
        phi = Tensor(self.wrap(tau)[..., None])
        full = phi * self.w + self.b  # (..., d_f)
        return ad.concat([full[..., :1], ad.sin(full[..., 1:])], axis=-1)


class PrototypeTable:
    """Factored per-entity prototypes p_u = W_P q_u; rows are both an input
    token and the contrastive target."""

    def __init__(self, registry: ParamRegistry, n_entities: int, h: int, d_f: int, rng, prefix: str = "proto"):
        if h > d_f:
            raise DataError(f"prototype latent width h={h} must not exceed d_f={d_f}")
        self.n_entities = n_entities
        self.q = registry.register(f"{prefix}.q", uniform_init(rng, (n_entities, h), h))
        self.w_p = registry.register(f"{prefix}.w_p", uniform_init(rng, (d_f, h), h))

    def lookup(self, entity_ids: np.ndarray) -> Tensor:
        ids = np.asarray(entity_ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.n_entities):
            raise DataError("entity id outside the prototype table")
        return ad.linear(ad.take_rows(self.q, ids), self.w_p)

    def prototypes_of(self, entity_ids: np.ndarray) -> Tensor:
        return self.lookup(entity_ids)


class ActivityProjection:
    """Linear map of one-hot (or simplex) activity vectors to d_f."""

    def __init__(self, registry: ParamRegistry, d_f: int, n_activities: int, rng, prefix: str = "enc.act"):
        self.n_activities = n_activities
        self.w_a = registry.register(f"{prefix}.w", uniform_init(rng, (d_f, n_activities), n_activities))

    def encode(self, activity) -> Tensor:
        arr = np.asarray(activity)
        if arr.dtype.kind in "iu":  # categorical indices -> one-hot rows
            onehot = np.zeros(arr.shape + (self.n_activities,))
            np.put_along_axis(onehot, arr[..., None], 1.0, axis=-1)
        else:
            onehot = arr.astype(np.float64)
        return ad.linear(Tensor(onehot), self.w_a)


class EventFeaturizer:
    """Bundles the four encoders and stacks per-event token matrices."""

    def __init__(
        self,
        registry: ParamRegistry,
        substrate: Substrate,
        n_entities: int,
        d_f: int,
        *,
        n_scales: int = 32,
        lambda_min: float = 0.01,
        lambda_max: float = 2.0,
        period: str = "daily",
        h: int = 8,
        include_entity_token: bool = True,
        rng: np.random.Generator,
    ):
        self.substrate = substrate
        self.d_f = d_f
        self.include_entity_token = include_entity_token
        self.space = Space2VecEncoder(registry, d_f, n_scales, lambda_min, lambda_max, rng)
        self.time = Time2VecEncoder(registry, d_f, period, rng)
        self.prototypes = PrototypeTable(registry, n_entities, h, d_f, rng)
        self.activity = ActivityProjection(registry, d_f, substrate.n_activities, rng)

    @property
    def n_tokens(self) -> int:
        return 5 if self.include_entity_token else 4

    def embed_fields(self, coords, tau, tau_end, entity, activity) -> Tensor:
        """Token matrices for a batch of events: (..., F, d_f).

        Rows are [location, start, stop, entity, activity]; the stop token
        reuses the start encoder on tau + duration, so point events repeat
        the start row exactly.  Without the entity token F is 4.
        """
        rows = [
            self.space.encode(coords),
            self.time.encode(tau),
            self.time.encode(tau_end),
        ]
        if self.include_entity_token:
            rows.append(self.prototypes.lookup(entity))
        rows.append(self.activity.encode(activity))
        return ad.concat([ad.reshape(r, r.shape[:-1] + (1, self.d_f)) for r in rows], axis=-2)

    def embed_event(self, event: EventRecord) -> Tensor:
        """Single-event token matrix (F, d_f)."""
        coords = self.substrate.coords_of(event.context_id)
        return self.embed_fields(
            coords=coords,
            tau=np.asarray(event.t_start),
            tau_end=np.asarray(event.t_end),
            entity=np.asarray(event.entity_id),
            activity=np.asarray(event.activity),
        )
