"""Context-keyed inverted index and temporally-nearest peer retrieval.

The index maps each context to the row positions of the partition's events
at that context, ascending by start time.  A peer query walks the focal
context's bucket, drops the focal entity's own events, optionally filters by
interval overlap, and keeps the C-1 candidates closest under the distance
|t_start - focal_start| + |t_end - focal_end| (point events count duration
zero).  Ties break by ascending row position, so results are independent of
index layout.  Per-query cost is O(k log C) on the bucket fan-in k via a
bounded selection heap.

Binary index file layout (little-endian, memory-map friendly):
  magic   8 bytes  b"MESESIX1"
  header  int64 length + that many bytes of JSON
          {"version": 1, "partition_tag": str, "n_buckets": int, "n_positions": int}
  keys    int64[n_buckets]      context ids, ascending
  offsets int64[n_buckets + 1]  bucket o starts at positions[offsets[o]]
  positions int64[n_positions]  flat row-position array
"""

from __future__ import annotations

import heapq
import json
import struct
from dataclasses import dataclass

import numpy as np

from .schema import DataError, EventArrays, event_arrays

_MAGIC = b"MESESIX1"


@dataclass
class CoocIndex:
    buckets: dict[int, np.ndarray]  # context_id -> row positions, ascending t_start
    partition_tag: str
    arrays: EventArrays  # the indexed partition's column view

    def n_indexed(self) -> int:
        return sum(len(b) for b in self.buckets.values())


@dataclass
class PeerSet:
    peers: np.ndarray  # (<= C-1,) row positions into the partition
    peer_mask: np.ndarray  # (C,) bool; slot 0 (focal) always False, pads True

    @property
    def n_peers(self) -> int:
        return len(self.peers)


def build_index(events, partition_tag: str = "train") -> CoocIndex:
    """Index one partition's events: a single pass in time order."""
    arrays = events if isinstance(events, EventArrays) else event_arrays(events)
    order = np.argsort(arrays.t_start, kind="stable")
    buckets: dict[int, list[int]] = {}
    for pos in order:
        buckets.setdefault(int(arrays.context[pos]), []).append(int(pos))
    return CoocIndex(
        buckets={ctx: np.asarray(rows, dtype=np.int64) for ctx, rows in buckets.items()},
        partition_tag=partition_tag,
        arrays=arrays,
    )


def retrieve_peers(index: CoocIndex, focal, C: int, min_overlap: float = 0.0) -> PeerSet:
    """Return up to C-1 temporally nearest same-context events of other entities.

    `focal` needs entity_id, context_id, t_start, and duration attributes
    (an EventRecord works); duration None counts as zero.
    """
    if C < 1:
        raise DataError(f"clique size must be >= 1, got {C}")
    mask = np.ones(C, dtype=bool)
    mask[0] = False  # the focal slot is never masked
    bucket = index.buckets.get(int(focal.context_id))
    if bucket is None or C == 1:
        return PeerSet(peers=np.array([], dtype=np.int64), peer_mask=mask)

    arrays = index.arrays
    a = float(focal.t_start)
    b = a + float(focal.duration or 0.0)
    cand = bucket[arrays.entity[bucket] != focal.entity_id]
    if min_overlap > 0.0 and len(cand):
        ts, te = arrays.t_start[cand], arrays.t_end[cand]
        if b > a:
            inter = np.minimum(b, te) - np.maximum(a, ts)
            keep = inter / (b - a) >= min_overlap
        else:
            # Point-event focal: overlap fraction is ill-defined, use containment.
            keep = (ts <= a) & (a <= te)
        cand = cand[keep]
    if len(cand) == 0:
        return PeerSet(peers=np.array([], dtype=np.int64), peer_mask=mask)

    dist = np.abs(arrays.t_start[cand] - a) + np.abs(arrays.t_end[cand] - b)
    chosen = heapq.nsmallest(C - 1, zip(dist.tolist(), cand.tolist()))
    peers = np.asarray([pos for _, pos in chosen], dtype=np.int64)
    mask[1 : 1 + len(peers)] = False
    return PeerSet(peers=peers, peer_mask=mask)


def brute_force_peers(events, focal, C: int, min_overlap: float = 0.0) -> PeerSet:
    """Independent full-scan oracle with the same distance, filter, and ties."""
    arrays = events if isinstance(events, EventArrays) else event_arrays(events)
    a = float(focal.t_start)
    b = a + float(focal.duration or 0.0)
    scored = []
    for pos in range(len(arrays)):
        if arrays.entity[pos] == focal.entity_id or arrays.context[pos] != focal.context_id:
            continue
        ts, te = arrays.t_start[pos], arrays.t_end[pos]
        if min_overlap > 0.0:
            if b > a:
                if (min(b, te) - max(a, ts)) / (b - a) < min_overlap:
                    continue
            elif not (ts <= a <= te):
                continue
        scored.append((abs(ts - a) + abs(te - b), pos))
    scored.sort()
    peers = np.asarray([pos for _, pos in scored[: C - 1]], dtype=np.int64)
    mask = np.ones(C, dtype=bool)
    mask[0] = False
    mask[1 : 1 + len(peers)] = False
    return PeerSet(peers=peers, peer_mask=mask)


# -- binary file round trip -----------------------------------------------------


def save_index(index: CoocIndex, path) -> None:
    keys = np.asarray(sorted(index.buckets), dtype="<i8")
    offsets = np.zeros(len(keys) + 1, dtype="<i8")
    chunks = []
    for i, key in enumerate(keys):
        rows = np.asarray(index.buckets[int(key)], dtype="<i8")
        offsets[i + 1] = offsets[i] + len(rows)
        chunks.append(rows)
    positions = np.concatenate(chunks) if chunks else np.array([], dtype="<i8")
    header = json.dumps(
        {"version": 1, "partition_tag": index.partition_tag, "n_buckets": int(len(keys)), "n_positions": int(len(positions))},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<q", len(header)))
        fh.write(header)
        fh.write(keys.tobytes())
        fh.write(offsets.tobytes())
        fh.write(positions.tobytes())


def load_index(path, events) -> CoocIndex:
    """Rebind a saved index to the partition's events (row positions must match)."""
    arrays = events if isinstance(events, EventArrays) else event_arrays(events)
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise DataError(f"not an index file: {path}")
        (header_len,) = struct.unpack("<q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        n_buckets, n_positions = header["n_buckets"], header["n_positions"]
        keys = np.frombuffer(fh.read(8 * n_buckets), dtype="<i8")
        offsets = np.frombuffer(fh.read(8 * (n_buckets + 1)), dtype="<i8")
        positions = np.frombuffer(fh.read(8 * n_positions), dtype="<i8")
    if len(positions) != len(arrays.entity):
        raise DataError("index does not match the partition size")
    buckets = {int(k): positions[offsets[i] : offsets[i + 1]].astype(np.int64) for i, k in enumerate(keys)}
    return CoocIndex(buckets=buckets, partition_tag=header["partition_tag"], arrays=arrays)
