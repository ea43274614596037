"""Feature encoder tests: phases, periodicity, prototypes, token stacking."""

import numpy as np
import pytest

from meses.featencode import (
    ActivityProjection,
    EventFeaturizer,
    PrototypeTable,
    Space2VecEncoder,
    Time2VecEncoder,
    geometric_scales,
)
from meses.params import ParamRegistry
from meses.schema import ContextRecord, DataError, EventRecord, Substrate

RNG = lambda: np.random.default_rng(0)


def test_scale_ladder_endpoints():
    scales = geometric_scales(1e-3, 360.0, 32)
    assert scales[0] == 1e-3
    assert np.isclose(scales[-1], 360.0, rtol=1e-12)
    ratios = scales[1:] / scales[:-1]
    np.testing.assert_allclose(ratios, ratios[0])  # geometric


def test_raw_encoding_width_and_zero_phase():
    reg = ParamRegistry()
    enc = Space2VecEncoder(reg, d_f=8, n_scales=32, lambda_min=1e-3, lambda_max=2.0, rng=RNG())
    pe = enc.raw_encoding(np.zeros(2))
    assert pe.shape == (192,)  # 6 * N_s entries
    np.testing.assert_array_equal(pe[0::2], 1.0)  # cos rows
    np.testing.assert_array_equal(pe[1::2], 0.0)  # sin rows


def test_encode_location_is_relu_of_linear():
    reg = ParamRegistry()
    enc = Space2VecEncoder(reg, d_f=4, n_scales=3, lambda_min=0.1, lambda_max=1.0, rng=RNG())
    coords = np.array([0.3, -0.2])
    out = enc.encode(coords)
    want = np.maximum(enc.w_loc.data @ enc.raw_encoding(coords), 0.0)
    np.testing.assert_allclose(out.data, want, rtol=1e-15)


def test_encode_location_lipschitz_in_coords():
    reg = ParamRegistry()
    enc = Space2VecEncoder(reg, d_f=6, n_scales=8, lambda_min=0.05, lambda_max=2.0, rng=RNG())
    rng = np.random.default_rng(1)
    base = rng.random(2)
    f0 = enc.encode(base).data
    h = 1e-6
    for axis in range(2):
        shifted = base.copy()
        shifted[axis] += h
        slope = np.abs(enc.encode(shifted).data - f0).max() / h
        assert slope < 1e3  # bounded finite-difference slope


def test_time2vec_zero_weights_zero_output():
    reg = ParamRegistry()
    enc = Time2VecEncoder(reg, d_f=5, period="daily", rng=RNG())
    enc.w.data[:] = 0.0
    enc.b.data[:] = 0.0
    np.testing.assert_array_equal(enc.encode(np.array(13.7)).data, np.zeros(5))


def test_time2vec_wraps_daily():
    reg = ParamRegistry()
    enc = Time2VecEncoder(reg, d_f=4, period="daily", rng=RNG())
    assert enc.wrap(np.array(25.5)) == 1.5


def test_time2vec_weekly_periodicity_exact():
    reg = ParamRegistry()
    enc = Time2VecEncoder(reg, d_f=6, period="weekly", rng=RNG())
    # Dyadic offsets keep tau + 168 exactly representable, so the wrapped
    # phase (and hence the encoding) matches bit for bit.
    tau = np.array([3.0, 100.25, 167.875])
    np.testing.assert_array_equal(enc.encode(tau).data, enc.encode(tau + 168.0).data)
    np.testing.assert_array_equal(enc.encode(tau).data, enc.encode(tau + 336.0).data)


def test_time2vec_channel_structure():
    reg = ParamRegistry()
    enc = Time2VecEncoder(reg, d_f=3, period="none", rng=RNG())
    tau = np.array(2.0)
    out = enc.encode(tau).data
    assert out[0] == enc.w.data[0] * 2.0 + enc.b.data[0]
    np.testing.assert_allclose(out[1:], np.sin(enc.w.data[1:] * 2.0 + enc.b.data[1:]), rtol=1e-15)


def test_prototype_factorization_and_isolation():
    reg = ParamRegistry()
    table = PrototypeTable(reg, n_entities=5, h=3, d_f=4, rng=RNG())
    ids = np.arange(5)
    before = table.lookup(ids).data.copy()
    np.testing.assert_allclose(before, table.q.data @ table.w_p.data.T, rtol=1e-14)
    table.q.data[2] += 1.0
    after = table.lookup(ids).data
    assert not np.allclose(before[2], after[2])
    np.testing.assert_array_equal(np.delete(before, 2, axis=0), np.delete(after, 2, axis=0))


def test_prototype_h_cannot_exceed_token_width():
    with pytest.raises(DataError):
        PrototypeTable(ParamRegistry(), n_entities=3, h=9, d_f=8, rng=RNG())


def test_activity_one_hot_matches_simplex():
    reg = ParamRegistry()
    proj = ActivityProjection(reg, d_f=4, n_activities=3, rng=RNG())
    via_index = proj.encode(np.array([2])).data
    simplex = np.array([[0.0, 0.0, 1.0]])
    np.testing.assert_array_equal(via_index, proj.encode(simplex).data)


def make_featurizer(include_entity=True, d_f=8):
    substrate = Substrate(
        [ContextRecord(i, (0.1 * i, 0.2 * i), i % 3) for i in range(6)], n_activities=3
    )
    reg = ParamRegistry()
    feat = EventFeaturizer(
        reg, substrate, n_entities=4, d_f=d_f, n_scales=4, lambda_min=0.05, lambda_max=1.0,
        period="daily", h=4, include_entity_token=include_entity, rng=RNG(),
    )
    return feat, substrate


def test_point_event_repeats_start_row_bitwise():
    feat, _ = make_featurizer()
    event = EventRecord(1, 2, 7.25, None, 2)
    z = feat.embed_event(event).data
    assert z.shape == (5, 8)
    np.testing.assert_array_equal(z[1], z[2])


def test_nonzero_duration_separates_stop_row():
    feat, _ = make_featurizer()
    event = EventRecord(1, 2, 7.25, 3.0, 2)
    z = feat.embed_event(event).data
    assert not np.array_equal(z[1], z[2])


def test_drop_entity_token_gives_four_rows():
    feat, _ = make_featurizer(include_entity=False)
    event = EventRecord(1, 2, 7.25, 1.0, 2)
    assert feat.embed_event(event).data.shape == (4, 8)
    assert feat.n_tokens == 4


def test_full_scale_width_split():
    # d = 1040 with five tokens means 208 per token.
    assert 1040 // 5 == 208


def test_batched_embedding_matches_single():
    feat, substrate = make_featurizer()
    events = [EventRecord(0, 1, 3.0, 0.5, 1), EventRecord(2, 4, 9.0, None, 2)]
    coords = substrate.coords_of([e.context_id for e in events])
    batch = feat.embed_fields(
        coords=coords,
        tau=np.array([e.t_start for e in events]),
        tau_end=np.array([e.t_end for e in events]),
        entity=np.array([e.entity_id for e in events]),
        activity=np.array([e.activity for e in events]),
    ).data
    for i, event in enumerate(events):
        # BLAS may round batched and single matmuls differently by 1 ulp.
        np.testing.assert_allclose(batch[i], feat.embed_event(event).data, rtol=1e-12, atol=1e-15)
