"""Batch assembly and whole-model forward tests."""

import numpy as np

from meses.config import RunConfig
from meses.cooc import retrieve_peers
from meses.model import EventStreamModel, assemble_batch, retrieve_for_window
from meses.schema import chunk_windows, temporal_split
from meses.synthgen import GenConfig, generate_full
from meses.train import build_partition


def small_setup(seed=3):
    cfg = RunConfig(
        seed=seed, window=6, d=20, L=1, H=2, C=3, n_scales=4, h=4, batch_size=8,
        gen=GenConfig(n_entities=5, n_contexts=10, n_activities=3, signature_size=2,
                      events_per_entity=36, hotspot_count=2, seed=seed),
    )
    result = generate_full(cfg.gen)
    split = temporal_split(result.events, cfg.train_frac, cfg.val_frac_of_train)
    train = build_partition(result.events, split.train, cfg.window, "train")
    model = EventStreamModel(cfg, result.substrate, cfg.gen.n_entities, init_seed=seed)
    return cfg, result, train, model


def test_retrieve_for_window_handles_pads():
    cfg, result, train, model = small_setup()
    window = train.windows[-1]  # likely padded tail
    peersets = retrieve_for_window(window, train.index, cfg.C)
    assert len(peersets) == window.length
    for t, ps in enumerate(peersets):
        assert not ps.peer_mask[0]
        if window.pad_mask[t]:
            assert ps.n_peers == 0


def test_assemble_batch_focal_fields_match_events():
    cfg, result, train, model = small_setup()
    windows = train.windows[:3]
    peersets = [retrieve_for_window(w, train.index, cfg.C) for w in windows]
    batch = assemble_batch(windows, peersets, train.arrays, result.substrate, cfg.C)
    for b, window in enumerate(windows):
        for t in range(window.length):
            if window.pad_mask[t]:
                assert (batch.coords[b, t] == 0).all()
                continue
            ev = window.events[t]
            np.testing.assert_array_equal(batch.coords[b, t, 0], result.substrate.coords_of(ev.context_id))
            assert batch.tau[b, t, 0] == ev.t_start
            assert batch.tau_end[b, t, 0] == ev.t_end
            assert batch.entity[b, t, 0] == ev.entity_id
            assert batch.activity[b, t, 0] == ev.activity


def test_assemble_batch_peer_fields_come_from_partition():
    cfg, result, train, model = small_setup()
    windows = train.windows[:4]
    peersets = [retrieve_for_window(w, train.index, cfg.C) for w in windows]
    batch = assemble_batch(windows, peersets, train.arrays, result.substrate, cfg.C)
    for b, window in enumerate(windows):
        for t in range(window.length):
            ps = peersets[b][t]
            for slot, row in enumerate(ps.peers, start=1):
                assert batch.entity[b, t, slot] == train.arrays.entity[row]
                assert batch.tau[b, t, slot] == train.arrays.t_start[row]
                assert not batch.peer_mask[b, t, slot]
            assert batch.peer_mask[b, t, 1 + len(ps.peers):].all()


def test_peers_share_focal_context_and_exclude_entity():
    cfg, result, train, model = small_setup()
    for window in train.windows[:6]:
        for t in range(window.n_real()):
            ps = retrieve_peers(train.index, window.events[t], cfg.C)
            for row in ps.peers:
                assert train.arrays.context[row] == window.events[t].context_id
                assert train.arrays.entity[row] != window.entity_id


def test_forward_batch_shape_and_grad_flow():
    cfg, result, train, model = small_setup()
    windows = train.windows[:2]
    peersets = [retrieve_for_window(w, train.index, cfg.C) for w in windows]
    batch = assemble_batch(windows, peersets, train.arrays, result.substrate, cfg.C)
    h = model.forward_batch(batch)
    assert h.shape == (2, cfg.window, cfg.d)
    from meses.autodiff import sum_

    model.registry.zero_grad()
    sum_(h * h).backward()
    assert model.registry["proto.q"].grad is not None
    assert model.registry["enc.loc.w"].grad is not None


def test_prototype_scores_and_assignments_shapes():
    cfg, result, train, model = small_setup()
    windows = train.windows[:2]
    peersets = [retrieve_for_window(w, train.index, cfg.C) for w in windows]
    batch = assemble_batch(windows, peersets, train.arrays, result.substrate, cfg.C)
    h = model.forward_batch(batch)
    scores = model.prototype_scores(h, batch.window_entities)
    assert scores.shape == (2, cfg.window)
    assigned = model.prototype_assignments(h)
    assert assigned.shape == (2, cfg.window)
    assert (assigned >= 0).all() and (assigned < cfg.gen.n_entities).all()


def test_prototype_ablation_switch_changes_token_count():
    cfg, result, train, model = small_setup()
    # d = 40 splits evenly under both five and four tokens.
    cfg4 = cfg.with_overrides(d=40, prototype_as_input=False)
    model4 = EventStreamModel(cfg4, result.substrate, cfg.gen.n_entities)
    assert model4.featurizer.n_tokens == 4
    assert model4.backbone_cfg.F == 4
    assert model4.backbone_cfg.d_f == 10
    # The contrastive target stays available even without the input token.
    protos = model4.featurizer.prototypes.prototypes_of(np.arange(3))
    assert protos.shape == (3, 10)
