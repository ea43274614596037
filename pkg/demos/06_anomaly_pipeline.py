"""Anomaly detection end to end, without ever reading a label.

Planted anomalies replace some test events of a few entities with visits to
contexts outside their signature at off-profile hours.  The detector is
self-supervised throughout: pre-training and fine-tuning only see synthetic
corruptions of clean training data; the planted labels surface exclusively
in the final evaluation.
"""

import numpy as np

from meses import GenConfig, RunConfig, finetune, pretrain, temporal_split
from meses.metrics import average_precision, pool_agent_max
from meses.synthgen import generate_full, plant_inserted_visits
from meses.train import build_partition, score_events

cfg = RunConfig(
    seed=2,
    window=12,
    d=40,
    L=2,
    H=2,
    C=4,
    n_scales=8,
    h=8,
    batch_size=16,
    max_epochs=60,
    patience=20,
    finetune_max_epochs=15,
    finetune_patience=6,
    gen=GenConfig(
        n_entities=16, n_contexts=28, n_activities=4, signature_size=3,
        events_per_entity=200, hotspot_count=3, seed=2,
    ),
)

gen = generate_full(cfg.gen)
substrate, events = gen.substrate, gen.events

# Plant anomalies into the test partition only, concentrated in 25% of entities.
split = temporal_split(events, cfg.train_frac, cfg.val_frac_of_train)
rng = np.random.default_rng(99)
test_events = [events[i] for i in split.test]
planted, labels = plant_inserted_visits(
    test_events, 0.08, rng, substrate=substrate, profiles=gen.profiles,
    hotspots=gen.hotspots, entity_fraction=0.25,
)
labeled = list(events)
for slot, row in enumerate(split.test):
    labeled[row] = planted[slot]
print(f"planted {labels.sum()} anomalies into {len(test_events)} test events")

pre = pretrain(substrate, labeled, cfg)
tuned = finetune(pre.model, substrate, labeled, "anomaly")

test = build_partition(labeled, split.test, cfg.window, "test")
scores = score_events(tuned.model, test, use_anomaly_head=True)
order = {row: i for i, row in enumerate(split.test)}
truth = labels[[order[r] for r in scores.rows]]

ap = average_precision(scores.anomaly, truth)
print(f"event-level AP {ap:.3f} vs prevalence {truth.mean():.3f}")
_, agent_scores, agent_labels = pool_agent_max(scores.anomaly, truth, scores.entities)
print(f"agent-level AP {average_precision(agent_scores, agent_labels):.3f} vs prevalence {agent_labels.mean():.3f}")
