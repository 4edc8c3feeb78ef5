"""Accuracy looks great at 1.8% churn until you look at recall.

Run: python3 demos/03_churn_imbalance.py   (about a minute on one core)
"""
from billprep.analytics.evaluation import cross_validate
from billprep.analytics.features import FEATURE_NAMES, feature_matrix
from billprep.analytics.forest import ForestParams
from billprep.analytics.stats import correlation_report
from billprep.synthgen import SynthConfig, ground_truth, simulate

truth = ground_truth(simulate(SynthConfig(n_users=15_000, seed=3)))
X, y = feature_matrix(truth.vectors)
print(f"{len(y)} (POD, offer) vectors, churn prevalence {y.mean():.4f}")

for name, r in correlation_report({n: X[:, i] for i, n in enumerate(FEATURE_NAMES)}, y):
    print(f"  r({name}, churn) = {'undefined' if r is None else f'{r:+.3f}'}")

params = ForestParams(n_trees=30, seed=1)
runs = {
    "majority": cross_validate(X, y, "majority", k=5, seed=1),
    "forest": cross_validate(X, y, "forest", params, k=5, seed=1),
    "forest, undersampled 1:1": cross_validate(X, y, "forest", params, k=5, seed=1, undersample_ratio=1.0),
}
for name, m in runs.items():
    print(f"{name:<26} accuracy {m.accuracy:.3f}  churn recall {m.recall(1):.3f}  churn precision {m.precision(1):.3f}")
