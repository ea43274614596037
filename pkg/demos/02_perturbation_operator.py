"""The corruption operator that manufactures the pre-training labels.

A window is left untouched with probability p_norm; otherwise events are
flagged at rate r (at least one forced) and each flagged event has its
context resampled (uniform point in the substrate box, snapped to the
nearest context), its time resampled between its neighbours, or both.
Labels are sound by construction: 1 means the stored attributes differ from
the original, 0 means the event is bit-identical.
"""

import numpy as np

from meses import GenConfig, PerturbConfig, chunk_windows, corrupt
from meses.synthgen import generate_full

result = generate_full(GenConfig(
    n_entities=4, n_contexts=20, n_activities=4, signature_size=3,
    events_per_entity=64, hotspot_count=2, seed=3,
))
substrate, events = result.substrate, result.events
windows = chunk_windows(events, T=16)
rng = np.random.default_rng(0)

cfg = PerturbConfig(p_norm=0.0, rate=0.3)  # always corrupt, for the demo
out = corrupt(windows[0], substrate, cfg, rng)
print("slot  label  change")
for t in range(windows[0].n_real()):
    before, after = windows[0].events[t], out.window.events[t]
    what = []
    if before.context_id != after.context_id:
        what.append(f"ctx {before.context_id}->{after.context_id}")
    if before.t_start != after.t_start:
        what.append(f"t {before.t_start:.2f}->{after.t_start:.2f}")
    print(f"{t:4d}  {out.labels[t]:5d}  {', '.join(what) or '-'}")

# The drawn flag rate concentrates at r; time perturbations at boundaries
# fall back to the identity and reset their labels, so the final label rate
# sits slightly below the drawn rate.
n, flags, labels = 0, 0, 0
for _ in range(3000):
    w = windows[int(rng.integers(len(windows)))]
    res = corrupt(w, substrate, cfg, rng)
    n += w.n_real()
    flags += int(res.flags.sum())
    labels += int(res.labels.sum())
print(f"\ndrawn flag rate {flags / n:.4f} (target 0.3), final label rate {labels / n:.4f}")

quiet = corrupt(windows[0], substrate, PerturbConfig(p_norm=1.0), rng)
print(f"p_norm=1 leaves the window untouched: labels sum {quiet.labels.sum()}")
