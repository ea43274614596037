"""Generate a synthetic event corpus and walk through its structure.

Every event is a tuple (entity, context, start hour, optional duration,
activity) over a shared substrate of contexts with 2-D coordinates.  Entities
have a persistent signature: a small home set of contexts plus shared
hotspots, visited at hours clustered around a characteristic hour.
"""

from meses import GenConfig, chunk_windows, temporal_split
from meses.synthgen import generate_full

cfg = GenConfig(
    n_entities=8,
    n_contexts=24,
    n_activities=4,
    signature_size=3,
    events_per_entity=60,
    hotspot_count=3,
    hour_profile_spread=1.2,
    seed=7,
)
result = generate_full(cfg)
substrate, events = result.substrate, result.events

print(f"substrate: {substrate.n_contexts} contexts, {substrate.n_activities} activities")
print(f"bounding box:\n{substrate.bounding_box}")
print(f"corpus: {len(events)} events from {cfg.n_entities} entities\n")

profile = result.profiles[0]
print(f"entity 0 home set: {profile.home_contexts.tolist()}, hotspots: {result.hotspots.tolist()}")
print(f"entity 0 characteristic hour: {profile.characteristic_hour:.2f}\n")

print("first five events of entity 0:")
for ev in [e for e in events if e.entity_id == 0][:5]:
    dur = "point" if ev.duration is None else f"{ev.duration:.2f}h"
    print(f"  ctx={ev.context_id:3d} t={ev.t_start:8.2f}h ({ev.t_start % 24:5.2f} o'clock) dur={dur} act={ev.activity}")

# Chronological windowing: non-overlapping, final short window padded.
windows = chunk_windows(events, T=16)
sizes = [w.n_real() for w in windows]
print(f"\nwindows of length 16: {len(windows)} total, real-event counts {sorted(set(sizes))}")
assert sum(sizes) == len(events)

# Temporal split: first 90% of each entity's stream trains, the rest tests;
# the earliest fifth of the training window is validation.
split = temporal_split(events)
print(f"split sizes: train={len(split.train)} val={len(split.val)} test={len(split.test)}")
last_train_t = max(events[i].t_start for i in split.train if events[i].entity_id == 0)
first_test_t = min(events[i].t_start for i in split.test if events[i].entity_id == 0)
print(f"entity 0: last train hour {last_train_t:.1f} <= first test hour {first_test_t:.1f}")
