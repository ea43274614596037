"""Event-stream data model: substrate, events, corpus I/O, windows, splits.

An event is (entity, context, start time, optional duration, activity) over a
shared finite context set (the substrate) that carries a 2-D embedding and a
per-context activity label.  Timestamps are real hours since the corpus
origin declared in the substrate file header.  All values are immutable
after load and safe to share read-only across threads.

File formats (JSONL):
  substrate: header line {"origin_iso": str, "n_activities": int}, then one
    line per context {"context_id": int, "coords": [x, y], "activity_label": int}.
  events: one line per event {"entity_id": int, "context_id": int,
    "t_start": float, "duration": float|null, "activity": int}; benchmark
    corpora may add "anomaly": 0|1, which only evaluation is allowed to read.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Raised on malformed or inconsistent corpus input."""


@dataclass(frozen=True)
class ContextRecord:
    context_id: int
    coords: tuple[float, float]
    activity_label: int


@dataclass(frozen=True)
class EventRecord:
    entity_id: int
    context_id: int
    t_start: float
    duration: float | None  # None encodes a point event
    activity: int

    @property
    def t_end(self) -> float:
        return self.t_start + (self.duration or 0.0)


class Substrate:
    """The finite context set with its 2-D embedding and activity labels."""

    def __init__(self, contexts: list[ContextRecord], n_activities: int, origin_iso: str = "1970-01-01T00:00:00Z"):
        if not contexts:
            raise DataError("substrate must contain at least one context")
        self.contexts = list(contexts)
        self.n_activities = int(n_activities)
        self.origin_iso = origin_iso
        ids = np.array([c.context_id for c in contexts], dtype=np.int64)
        if ids.min() < 0:
            raise DataError("context_id must be non-negative")
        if len(np.unique(ids)) != len(ids):
            raise DataError("duplicate context_id in substrate")
        coords = np.array([c.coords for c in contexts], dtype=np.float64)
        if not np.isfinite(coords).all():
            raise DataError("non-finite context coordinates")
        labels = np.array([c.activity_label for c in contexts], dtype=np.int64)
        if (labels < 0).any() or (labels >= n_activities).any():
            raise DataError("activity_label outside [0, n_activities)")
        # Dense lookup keyed by context_id; ids need not be contiguous.
        self._lookup = np.full(int(ids.max()) + 1, -1, dtype=np.int64)
        self._lookup[ids] = np.arange(len(ids))
        self._coords = coords
        self._labels = labels
        self._ids = ids
        self.bounding_box = np.stack([coords.min(axis=0), coords.max(axis=0)])

    @property
    def n_contexts(self) -> int:
        return len(self.contexts)

    def has_context(self, context_id) -> bool:
        context_id = int(context_id)
        return 0 <= context_id < len(self._lookup) and self._lookup[context_id] >= 0

    def _positions(self, context_ids) -> np.ndarray:
        ids = np.asarray(context_ids, dtype=np.int64)
        pos = self._lookup[ids]
        if (pos < 0).any():
            raise DataError("unknown context_id")
        return pos

    def coords_of(self, context_ids) -> np.ndarray:
        return self._coords[self._positions(context_ids)]

    def position_of(self, context_ids) -> np.ndarray:
        """Dense row position of each context id (for embedding tables)."""
        return self._positions(context_ids)

    def activity_of(self, context_ids) -> np.ndarray:
        return self._labels[self._positions(context_ids)]

    def context_ids(self) -> np.ndarray:
        return self._ids.copy()


class LabelStore:
    """Anomaly labels with an access counter (the label-hygiene tripwire).

    Training and self-supervised fine-tuning must never call ``values``;
    tests assert ``reads == 0`` across those code paths.
    """

    def __init__(self, values: np.ndarray | None):
        self._values = None if values is None else np.asarray(values, dtype=np.int64)
        self.reads = 0

    @property
    def present(self) -> bool:
        return self._values is not None

    def values(self) -> np.ndarray:
        if self._values is None:
            raise DataError("corpus has no anomaly labels")
        self.reads += 1
        return self._values.copy()


@dataclass
class EventWindow:
    """A fixed-length slice of one entity's stream; pads fill the suffix."""

    entity_id: int
    events: list[EventRecord | None]
    pad_mask: np.ndarray  # (T,) bool, True = padded slot
    rows: np.ndarray  # (T,) source row of each event, -1 on pads

    @property
    def length(self) -> int:
        return len(self.events)

    def n_real(self) -> int:
        return int((~self.pad_mask).sum())


@dataclass
class CorpusSplit:
    """Disjoint train/val/test row sets; ``val_tail`` is auxiliary metadata
    (latest slice of the training window) for fine-tunes that validate on
    events temporally adjacent to test."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    split_mode: str
    val_tail: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))


# -- I/O ---------------------------------------------------------------------


def _parse_line(raw: str, path, line_no: int) -> dict:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as err:
        raise DataError(f"{path}:{line_no}: malformed JSON line ({err.msg})") from err
    if not isinstance(obj, dict):
        raise DataError(f"{path}:{line_no}: expected a JSON object")
    return obj


def load_substrate(path) -> Substrate:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in (l.strip() for l in fh) if ln]
    if not lines:
        raise DataError(f"{path}: empty substrate file")
    header = _parse_line(lines[0], path, 1)
    try:
        origin = str(header["origin_iso"])
        n_activities = int(header["n_activities"])
    except KeyError as err:
        raise DataError(f"{path}:1: substrate header missing {err}") from err
    contexts = []
    for line_no, raw in enumerate(lines[1:], start=2):
        obj = _parse_line(raw, path, line_no)
        try:
            contexts.append(
                ContextRecord(
                    context_id=int(obj["context_id"]),
                    coords=(float(obj["coords"][0]), float(obj["coords"][1])),
                    activity_label=int(obj["activity_label"]),
                )
            )
        except (KeyError, TypeError, IndexError) as err:
            raise DataError(f"{path}:{line_no}: bad context record ({err})") from err
    return Substrate(contexts, n_activities=n_activities, origin_iso=origin)


def load_corpus(path, substrate_path) -> tuple[Substrate, list[EventRecord]]:
    """Load substrate and events; events come back sorted by (entity, time)."""
    substrate, events, _ = load_corpus_with_labels(path, substrate_path)
    return substrate, events


def load_corpus_with_labels(path, substrate_path) -> tuple[Substrate, list[EventRecord], LabelStore]:
    substrate = load_substrate(substrate_path)
    events: list[EventRecord] = []
    labels: list[int] = []
    any_label = False
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            obj = _parse_line(raw, path, line_no)
            try:
                duration = obj.get("duration", None)
                record = EventRecord(
                    entity_id=int(obj["entity_id"]),
                    context_id=int(obj["context_id"]),
                    t_start=float(obj["t_start"]),
                    duration=None if duration is None else float(duration),
                    activity=int(obj["activity"]),
                )
            except (KeyError, TypeError) as err:
                raise DataError(f"{path}:{line_no}: bad event record ({err})") from err
            if not np.isfinite(record.t_start):
                raise DataError(f"{path}:{line_no}: non-finite t_start")
            if record.duration is not None and record.duration < 0:
                raise DataError(f"{path}:{line_no}: negative duration")
            if not substrate.has_context(record.context_id):
                raise DataError(f"{path}:{line_no}: dangling context_id {record.context_id}")
            if record.entity_id < 0:
                raise DataError(f"{path}:{line_no}: negative entity_id")
            events.append(record)
            label = obj.get("anomaly", 0)
            any_label = any_label or "anomaly" in obj
            labels.append(int(label))
    order = _canonical_order(events)
    events = [events[i] for i in order]
    store = LabelStore(np.asarray(labels, dtype=np.int64)[order] if any_label else None)
    return substrate, events, store


def _canonical_order(events: list[EventRecord]) -> list[int]:
    # Stable sort by (entity_id, t_start); ties keep input order.
    return sorted(range(len(events)), key=lambda i: (events[i].entity_id, events[i].t_start))


def save_substrate(substrate: Substrate, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"origin_iso": substrate.origin_iso, "n_activities": substrate.n_activities}, sort_keys=True) + "\n")
        for ctx in sorted(substrate.contexts, key=lambda c: c.context_id):
            fh.write(
                json.dumps(
                    {"context_id": ctx.context_id, "coords": [ctx.coords[0], ctx.coords[1]], "activity_label": ctx.activity_label},
                    sort_keys=True,
                )
                + "\n"
            )


def save_events(events: list[EventRecord], path, labels: np.ndarray | None = None) -> None:
    """Write events in canonical order; `labels` adds the anomaly field."""
    order = _canonical_order(events)
    with open(path, "w", encoding="utf-8") as fh:
        for i in order:
            ev = events[i]
            obj = {
                "activity": ev.activity,
                "context_id": ev.context_id,
                "duration": ev.duration,
                "entity_id": ev.entity_id,
                "t_start": ev.t_start,
            }
            if labels is not None:
                obj["anomaly"] = int(labels[i])
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


# -- event arrays -------------------------------------------------------------


@dataclass
class EventArrays:
    """Column view of an event list, for vectorized retrieval and encoding."""

    entity: np.ndarray
    context: np.ndarray
    t_start: np.ndarray
    t_end: np.ndarray
    duration: np.ndarray  # point events mapped to 0.0
    is_point: np.ndarray
    activity: np.ndarray

    def __len__(self) -> int:
        return len(self.entity)


def event_arrays(events: list[EventRecord]) -> EventArrays:
    n = len(events)
    entity = np.empty(n, dtype=np.int64)
    context = np.empty(n, dtype=np.int64)
    t_start = np.empty(n, dtype=np.float64)
    duration = np.zeros(n, dtype=np.float64)
    is_point = np.zeros(n, dtype=bool)
    activity = np.empty(n, dtype=np.int64)
    for i, ev in enumerate(events):
        entity[i] = ev.entity_id
        context[i] = ev.context_id
        t_start[i] = ev.t_start
        if ev.duration is None:
            is_point[i] = True
        else:
            duration[i] = ev.duration
        activity[i] = ev.activity
    return EventArrays(entity, context, t_start, t_start + duration, duration, is_point, activity)


# -- windowing and splits ------------------------------------------------------


def chunk_windows(events: list[EventRecord], T: int, rows: np.ndarray | None = None) -> list[EventWindow]:
    """Partition each entity's stream into consecutive non-overlapping
    length-T windows; the final short window is padded with the mask set."""
    if T < 1:
        raise DataError(f"window length must be >= 1, got {T}")
    if rows is None:
        rows = np.arange(len(events), dtype=np.int64)
    rows = np.asarray(rows, dtype=np.int64)
    windows: list[EventWindow] = []
    start = 0
    n = len(events)
    while start < n:
        entity = events[start].entity_id
        stop = start
        while stop < n and events[stop].entity_id == entity:
            stop += 1
        for lo in range(start, stop, T):
            hi = min(lo + T, stop)
            slot_events: list[EventRecord | None] = list(events[lo:hi]) + [None] * (T - (hi - lo))
            pad = np.zeros(T, dtype=bool)
            pad[hi - lo :] = True
            win_rows = np.full(T, -1, dtype=np.int64)
            win_rows[: hi - lo] = rows[lo:hi]
            windows.append(EventWindow(entity_id=entity, events=slot_events, pad_mask=pad, rows=win_rows))
        start = stop
    return windows


def temporal_split(events: list[EventRecord], train_frac: float = 0.9, val_frac_of_train: float = 0.2) -> CorpusSplit:
    """Chronological split per entity: first `train_frac` of the stream is the
    training window, the rest is test; the earliest `val_frac_of_train` of the
    training window is validation (disjoint from train).  Fraction boundaries
    floor on event counts; ties at equal timestamps keep stable input order.
    """
    if not (0.0 < train_frac < 1.0):
        raise DataError(f"train_frac must be in (0, 1), got {train_frac}")
    if not (0.0 < val_frac_of_train < 1.0):
        raise DataError(f"val_frac_of_train must be in (0, 1), got {val_frac_of_train}")
    train, val, test, val_tail = [], [], [], []
    start = 0
    n = len(events)
    while start < n:
        entity = events[start].entity_id
        stop = start
        while stop < n and events[stop].entity_id == entity:
            stop += 1
        count = stop - start
        n_train_part = int(count * train_frac)
        n_val = int(n_train_part * val_frac_of_train)
        val.extend(range(start, start + n_val))
        train.extend(range(start + n_val, start + n_train_part))
        test.extend(range(start + n_train_part, stop))
        val_tail.extend(range(start + n_train_part - n_val, start + n_train_part))
        start = stop
    return CorpusSplit(
        train=np.asarray(train, dtype=np.int64),
        val=np.asarray(val, dtype=np.int64),
        test=np.asarray(test, dtype=np.int64),
        split_mode="temporal",
        val_tail=np.asarray(val_tail, dtype=np.int64),
    )
