"""Full model wiring: featurizer + backbone + heads, batch assembly, scoring.

This is the glue between window lists, per-event peer retrieval, and the
rank-5 backbone input.  Masked peer slots and padded sequence positions are
zero-filled on assembly; the backbone's masks guarantee they can never reach
a focal output regardless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .backbone import BackboneConfig, CliqueTensor, FactorizedBackbone
from .config import RunConfig
from .cooc import CoocIndex, PeerSet, retrieve_peers
from .featencode import EventFeaturizer
from .objectives import AnomalyHead, GmmTimeHead, NoiseHead, PoiHead, PrototypeProjector
from .params import ParamRegistry
from .schema import EventArrays, EventWindow, Substrate


@dataclass
class BatchArrays:
    """Dense per-slot fields for a batch of windows plus their peer sets."""

    coords: np.ndarray  # (B, T, C, 2)
    tau: np.ndarray  # (B, T, C)
    tau_end: np.ndarray  # (B, T, C)
    entity: np.ndarray  # (B, T, C) int
    activity: np.ndarray  # (B, T, C) int
    peer_mask: np.ndarray  # (B, T, C) bool, True = masked
    pad_mask: np.ndarray  # (B, T) bool, True = padded
    window_entities: np.ndarray  # (B,) int
    rows: np.ndarray  # (B, T) source row per focal slot, -1 on pads


def retrieve_for_window(window: EventWindow, index: CoocIndex, C: int, min_overlap: float = 0.0) -> list[PeerSet]:
    """One peer set per real slot; padded slots get fully-masked sets."""
    peersets = []
    empty_mask = np.ones(C, dtype=bool)
    empty_mask[0] = False
    for t in range(window.length):
        if window.pad_mask[t]:
            peersets.append(PeerSet(peers=np.array([], dtype=np.int64), peer_mask=empty_mask.copy()))
        else:
            peersets.append(retrieve_peers(index, window.events[t], C, min_overlap=min_overlap))
    return peersets


def assemble_batch(
    windows: list[EventWindow],
    peersets: list[list[PeerSet]],
    partition: EventArrays,
    substrate: Substrate,
    C: int,
) -> BatchArrays:
    """Stack focal events (slot 0) and their peers (slots 1..C-1) into dense
    arrays; masked slots carry zeros."""
    B = len(windows)
    T = windows[0].length
    coords = np.zeros((B, T, C, 2))
    tau = np.zeros((B, T, C))
    tau_end = np.zeros((B, T, C))
    entity = np.zeros((B, T, C), dtype=np.int64)
    activity = np.zeros((B, T, C), dtype=np.int64)
    peer_mask = np.ones((B, T, C), dtype=bool)
    pad_mask = np.zeros((B, T), dtype=bool)
    window_entities = np.zeros(B, dtype=np.int64)
    rows = np.full((B, T), -1, dtype=np.int64)

    for b, (window, sets) in enumerate(zip(windows, peersets)):
        window_entities[b] = window.entity_id
        pad_mask[b] = window.pad_mask
        rows[b] = window.rows
        for t in range(T):
            peer_mask[b, t] = sets[t].peer_mask
            if window.pad_mask[t]:
                peer_mask[b, t, 0] = False  # focal slot stays unmasked by convention
                continue
            ev = window.events[t]
            coords[b, t, 0] = substrate.coords_of(ev.context_id)
            tau[b, t, 0] = ev.t_start
            tau_end[b, t, 0] = ev.t_end
            entity[b, t, 0] = ev.entity_id
            activity[b, t, 0] = ev.activity
            peers = sets[t].peers
            if len(peers):
                sl = slice(1, 1 + len(peers))
                coords[b, t, sl] = substrate.coords_of(partition.context[peers])
                tau[b, t, sl] = partition.t_start[peers]
                tau_end[b, t, sl] = partition.t_end[peers]
                entity[b, t, sl] = partition.entity[peers]
                activity[b, t, sl] = partition.activity[peers]
    return BatchArrays(coords, tau, tau_end, entity, activity, peer_mask, pad_mask, window_entities, rows)


class EventStreamModel:
    """Owns the parameter registry, the encoders, and every head."""

    def __init__(self, cfg: RunConfig, substrate: Substrate, n_entities: int, init_seed: int | None = None):
        cfg.validate()
        self.cfg = cfg
        self.substrate = substrate
        self.n_entities = n_entities
        self.registry = ParamRegistry()
        rng = np.random.default_rng([init_seed if init_seed is not None else cfg.seed, 0xA11CE])
        F = 5 if cfg.prototype_as_input else 4
        self.backbone_cfg = BackboneConfig(
            d=cfg.d, L=cfg.L, H=cfg.H, F=F, C=cfg.C, T=cfg.window, d_ff=cfg.d_ff, bypass_cooc=cfg.bypass_cooc
        )
        d_f = self.backbone_cfg.d_f
        self.featurizer = EventFeaturizer(
            self.registry,
            substrate,
            n_entities,
            d_f,
            n_scales=cfg.n_scales,
            lambda_min=cfg.lambda_min,
            lambda_max=cfg.lambda_max,
            period=cfg.period,
            h=cfg.h,
            include_entity_token=cfg.prototype_as_input,
            rng=rng,
        )
        self.backbone = FactorizedBackbone(self.registry, self.backbone_cfg, rng)
        self.noise_head = NoiseHead(self.registry, cfg.d, rng)
        self.projector = PrototypeProjector(self.registry, cfg.d, d_f, cfg.h_proj or cfg.d, rng)
        self.anomaly_head: AnomalyHead | None = None
        self.poi_head: PoiHead | None = None
        self.time_head: GmmTimeHead | None = None
        self._head_rng = np.random.default_rng([init_seed if init_seed is not None else cfg.seed, 0x4EAD])

    # -- optional fine-tune heads ------------------------------------------

    def ensure_anomaly_head(self) -> AnomalyHead:
        if self.anomaly_head is None:
            self.anomaly_head = AnomalyHead(self.registry, self.cfg.d, self._head_rng)
        return self.anomaly_head

    def ensure_next_visit_heads(self) -> tuple[PoiHead, GmmTimeHead]:
        if self.poi_head is None:
            self.poi_head = PoiHead(self.registry, self.cfg.d, self.substrate.n_contexts, self._head_rng)
            self.time_head = GmmTimeHead(self.registry, self.cfg.d, self._head_rng, k=self.cfg.gmm_components)
        return self.poi_head, self.time_head

    # -- forward -------------------------------------------------------------

    def clique_tensor(self, batch: BatchArrays) -> CliqueTensor:
        feats = self.featurizer.embed_fields(batch.coords, batch.tau, batch.tau_end, batch.entity, batch.activity)
        feats = ad.swapaxes(feats, 2, 3)  # (B, T, C, F, d_f) -> (B, T, F, C, d_f)
        keep = (~batch.peer_mask)[:, :, None, :, None] & (~batch.pad_mask)[:, :, None, None, None]
        x = feats * Tensor(keep.astype(np.float64))
        return CliqueTensor(x=x, peer_mask=batch.peer_mask, pad_mask=batch.pad_mask)

    def forward_batch(self, batch: BatchArrays) -> Tensor:
        """Per-event embeddings (B, T, d) of the focal events."""
        return self.backbone.forward(self.clique_tensor(batch))

    # -- evaluation-side scores ----------------------------------------------

    def noise_scores(self, h: Tensor) -> np.ndarray:
        """Sigmoid of the noise-head logit, per event (no gradients)."""
        logits = self.noise_head.logits(h).data
        return np.exp(-np.logaddexp(0.0, -logits))

    def anomaly_scores(self, h: Tensor) -> np.ndarray:
        logits = self.ensure_anomaly_head().logits(h).data
        return np.exp(-np.logaddexp(0.0, -logits))

    def prototype_scores(self, h: Tensor, window_entities: np.ndarray) -> np.ndarray:
        """Negative cosine between each event's projection and its entity's
        prototype: high when the event does not match the entity."""
        B, T, d = h.shape
        proj = ad.l2_normalize(self.projector.project(h), axis=-1).data
        protos = ad.l2_normalize(self.featurizer.prototypes.prototypes_of(np.asarray(window_entities)), axis=-1).data
        return -np.einsum("btd,bd->bt", proj, protos)

    def prototype_assignments(self, h: Tensor) -> np.ndarray:
        """Index of the nearest prototype (cosine) per event, (B, T)."""
        proj = ad.l2_normalize(self.projector.project(h), axis=-1).data
        all_protos = ad.l2_normalize(
            self.featurizer.prototypes.prototypes_of(np.arange(self.n_entities)), axis=-1
        ).data
        return np.argmax(proj @ all_protos.T, axis=-1)
