"""Inverted-index retrieval vs the exhaustive-scan oracle."""

import numpy as np
import pytest

from meses.cooc import brute_force_peers, build_index, load_index, retrieve_peers, save_index
from meses.schema import DataError, EventRecord, event_arrays


def random_events(rng, n, n_entities=8, n_contexts=6, point_fraction=0.3):
    events = []
    for _ in range(n):
        dur = None if rng.random() < point_fraction else float(rng.uniform(0, 3))
        events.append(
            EventRecord(
                entity_id=int(rng.integers(n_entities)),
                context_id=int(rng.integers(n_contexts)),
                t_start=float(rng.uniform(0, 100)),
                duration=dur,
                activity=0,
            )
        )
    return events


def test_empty_index():
    index = build_index([], "train")
    assert index.buckets == {}
    peers = retrieve_peers(index, EventRecord(0, 0, 0.0, None, 0), C=4)
    assert peers.n_peers == 0
    assert not peers.peer_mask[0] and peers.peer_mask[1:].all()


def test_single_context_bucket_sorted():
    rng = np.random.default_rng(0)
    events = [EventRecord(i, 7, float(t), None, 0) for i, t in enumerate(rng.permutation(5).astype(float))]
    index = build_index(events, "train")
    assert list(index.buckets) == [7]
    times = [events[p].t_start for p in index.buckets[7]]
    assert times == sorted(times)


def test_bucket_sizes_partition_events():
    rng = np.random.default_rng(1)
    events = random_events(rng, 200)
    index = build_index(events, "train")
    assert index.n_indexed() == 200


def test_sole_visitor_gets_fully_masked_set():
    events = [EventRecord(0, 3, 1.0, None, 0), EventRecord(0, 3, 2.0, None, 0)]
    index = build_index(events, "train")
    peers = retrieve_peers(index, events[0], C=4)
    assert peers.n_peers == 0


def test_keeps_nearest_two_of_three():
    focal = EventRecord(0, 1, 10.0, None, 0)
    others = [
        EventRecord(1, 1, 11.0, None, 0),  # distance 2 (start + end)
        EventRecord(2, 1, 12.0, None, 0),  # distance 4
        EventRecord(3, 1, 13.0, None, 0),  # distance 6
    ]
    index = build_index(others, "train")
    peers = retrieve_peers(index, focal, C=3)
    assert peers.n_peers == 2
    assert {others[p].t_start for p in peers.peers} == {11.0, 12.0}


def test_distance_tie_breaks_by_row_position():
    focal = EventRecord(0, 1, 10.0, None, 0)
    others = [
        EventRecord(1, 1, 11.0, None, 0),  # rows 0 and 1 are equidistant from t=10
        EventRecord(2, 1, 9.0, None, 0),
    ]
    index = build_index(others, "train")
    peers = retrieve_peers(index, focal, C=2)
    # Both candidates sit at distance 2; the smaller row position wins.
    assert list(peers.peers) == [0]
    assert others[peers.peers[0]].t_start == 11.0


def test_self_exclusion():
    events = [EventRecord(0, 1, float(t), None, 0) for t in range(5)]
    events += [EventRecord(1, 1, 2.5, None, 0)]
    index = build_index(events, "train")
    peers = retrieve_peers(index, EventRecord(0, 1, 2.0, None, 0), C=6)
    assert all(events[p].entity_id != 0 for p in peers.peers)
    assert peers.n_peers == 1


def test_monotone_in_clique_size():
    rng = np.random.default_rng(2)
    events = random_events(rng, 300, n_contexts=3)
    index = build_index(events, "train")
    focal = EventRecord(99, 1, 50.0, 1.0, 0)
    previous = []
    for C in range(2, 10):
        peers = retrieve_peers(index, focal, C=C).peers.tolist()
        assert peers[: len(previous)] == previous
        previous = peers


@pytest.mark.parametrize("min_overlap", [0.0, 0.25, 1.0])
@pytest.mark.parametrize("seed", [3, 4, 5, 6, 7])
def test_oracle_equivalence_random_corpora(seed, min_overlap):
    rng = np.random.default_rng(seed)
    events = random_events(rng, int(rng.integers(100, 400)), n_entities=6, n_contexts=4)
    arrays = event_arrays(events)
    index = build_index(arrays, "train")
    for focal in events:
        got = retrieve_peers(index, focal, C=4, min_overlap=min_overlap)
        want = brute_force_peers(arrays, focal, C=4, min_overlap=min_overlap)
        np.testing.assert_array_equal(got.peers, want.peers)
        np.testing.assert_array_equal(got.peer_mask, want.peer_mask)


def test_point_focal_containment_filter():
    # Focal is a point event; only candidates whose interval contains it pass.
    focal = EventRecord(0, 1, 10.0, None, 0)
    others = [
        EventRecord(1, 1, 9.5, 1.0, 0),  # covers 10.0
        EventRecord(2, 1, 10.5, 1.0, 0),  # starts after
    ]
    index = build_index(others, "train")
    peers = retrieve_peers(index, focal, C=3, min_overlap=0.5)
    assert len(peers.peers) == 1
    assert others[peers.peers[0]].entity_id == 1


def test_index_file_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    events = random_events(rng, 150)
    index = build_index(events, "val")
    path = tmp_path / "cooc.val.idx"
    save_index(index, path)
    loaded = load_index(path, events)
    assert loaded.partition_tag == "val"
    assert set(loaded.buckets) == set(index.buckets)
    for ctx in index.buckets:
        np.testing.assert_array_equal(loaded.buckets[ctx], index.buckets[ctx])
    focal = events[0]
    np.testing.assert_array_equal(
        retrieve_peers(loaded, focal, C=5).peers, retrieve_peers(index, focal, C=5).peers
    )


def test_index_file_rejects_wrong_partition(tmp_path):
    events = random_events(np.random.default_rng(9), 50)
    index = build_index(events, "train")
    path = tmp_path / "x.idx"
    save_index(index, path)
    with pytest.raises(DataError):
        load_index(path, events[:10])


def test_bad_clique_size():
    index = build_index([], "train")
    with pytest.raises(DataError):
        retrieve_peers(index, EventRecord(0, 0, 0.0, None, 0), C=0)
