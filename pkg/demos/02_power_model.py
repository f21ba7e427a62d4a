"""
How much power does a node draw?
================================

Train the node power regressor on CPU and network usage, compare it with an
ordinary least-squares fit, then tabulate the learned response surface.
"""

import numpy as np

from gridseer.catalog import QuestionId, resolve_question, surface
from gridseer.pipeline import train_question
from gridseer.synth import SynthConfig, gen_node
from gridseer.telemetry import build_series

cfg = SynthConfig(duration=5000 * 60, interval=60, seed=3)
records, _ = gen_node(cfg)
series = build_series(records, "n0", 60)

spec = resolve_question(QuestionId.NODE_POWER)
print(spec.features, "->", spec.target, spec.model_family.value)

outcome = train_question(spec, series)
m = outcome.test_metrics
print(f"test MAE {m.mae:.3f} W, MSE {m.mse:.3f}, R2 {outcome.test_r2:.4f}, {len(outcome.history)} epochs")

# Least squares on the same split, as a yardstick
n = outcome.n_train
X = np.column_stack([series.column(c) for c in spec.features] + [np.ones(len(series))])
y = series.column("power_w")
coef, *_ = np.linalg.lstsq(X[:n], y[:n], rcond=None)
print("OLS coefficients", np.round(coef, 3), "(generator: 1.5, 0.8, 20)")
print(f"OLS test MSE {np.mean((X[n:] @ coef - y[n:]) ** 2):.3f}")

# Power as a function of cpu (x) and network (y), irrespective of time
b = outcome.bundle
grid = surface(b.params, b.norm_stats, (10, 90), (2, 18), n=5)
print(grid.to_csv())
