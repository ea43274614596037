"""Co-occurrence retrieval: who else was at this context around this time?

A context-keyed inverted index maps each context to its events in time
order.  For a focal event, the C-1 peers from other entities with the
smallest |start - start| + |end - end| distance are kept; the rest of the
clique axis is padded and masked.  The retrieval matches an exhaustive scan
exactly, including the row-position tie rule.
"""

import numpy as np

from meses import GenConfig, build_index, retrieve_peers
from meses.cooc import brute_force_peers
from meses.schema import event_arrays
from meses.synthgen import generate_full

result = generate_full(GenConfig(
    n_entities=10, n_contexts=15, n_activities=3, signature_size=3,
    events_per_entity=80, hotspot_count=4, seed=5,
))
events = result.events
arrays = event_arrays(events)
index = build_index(arrays, "train")

print(f"indexed {index.n_indexed()} events into {len(index.buckets)} buckets")
fan_in = {ctx: len(rows) for ctx, rows in index.buckets.items()}
hot = sorted(fan_in, key=fan_in.get, reverse=True)[:4]
print(f"busiest contexts (hotspots draw the crowd): {[(c, fan_in[c]) for c in hot]}\n")

focal = next(e for e in events if e.context_id == hot[0])
peers = retrieve_peers(index, focal, C=4)
print(f"focal: entity {focal.entity_id} at context {focal.context_id}, t={focal.t_start:.2f}h")
for row in peers.peers:
    print(f"  peer: entity {arrays.entity[row]} t={arrays.t_start[row]:8.2f}h")
print(f"peer mask (slot 0 = focal, never masked): {peers.peer_mask}")

# Exhaustive-scan agreement over the whole corpus.
mismatches = 0
for e in events:
    got = retrieve_peers(index, e, C=4)
    want = brute_force_peers(arrays, e, C=4)
    mismatches += int(not np.array_equal(got.peers, want.peers))
print(f"\nexhaustive-scan mismatches over {len(events)} focal events: {mismatches}")
