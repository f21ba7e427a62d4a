"""
Joint training by parameter averaging
=====================================

Two sites start from the same base bundle, fine-tune on their own data and
then average the parameters. Only bundles move between sites.
"""

import numpy as np

from gridseer.catalog import QuestionId, aggregate_cluster, merge_models, predict_series, resolve_question, summarize
from gridseer.pipeline import default_config, train_question
from gridseer.synth import SynthConfig, gen_cluster
from gridseer.telemetry import build_series

spec = resolve_question(QuestionId.NODE_POWER)
cfg = SynthConfig(nodes=3, duration=3 * 86400, interval=120, seed=21)
nodes = [build_series(recs, gt.node_id, 120) for recs, gt in gen_cluster(cfg)]

base = train_question(spec, nodes[0], default_config(spec.model_family, epochs=20)).bundle
members = [
    train_question(spec, s, default_config(spec.model_family, epochs=10), init=base)
    for s in nodes[1:]
]
for o in members:
    print(f"member test MAE {o.test_metrics.mae:.3f} W")

merged = merge_models([o.bundle.params for o in members], [1.0, 1.0])
held_out = nodes[0]
preds = predict_series(spec, merged, base.norm_stats, held_out)
print(f"merged model MAE on node n0: {np.mean(np.abs(preds - held_out.column('power_w'))):.3f} W")

# Cluster view: sum node predictions, then daily min / avg / max
per_node = [predict_series(spec, merged, base.norm_stats, s) for s in nodes]
total = aggregate_cluster(per_node)
for row in summarize(total, nodes[0].timestamps, "Daily"):
    print(row)
