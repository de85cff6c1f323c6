"""
Preparing data and the three feature strategies
===============================================

Sessions are cleaned, constant columns are dropped, the data is split
70/30 inside each scenario and standardized with train statistics only.
Then we compare the inputs each strategy hands to the regressors:
all features, a forest-importance selection, or PCA components.
"""

import numpy as np

from kqiest.features import fit_pca, fit_selector
from kqiest.preprocess import (SplitSpec, aggregate_sessions, apply_scaler, clean,
                               drop_zero_variance, fit_scaler, split)
from kqiest.schema import to_matrix
from kqiest.simulator import CampaignConfig, generate_campaign

samples, report = clean(generate_campaign(CampaignConfig(experiments_per_config=10), 2))
print("dropped samples:", report.to_dict()["n_sample_drops"])
sessions = aggregate_sessions(samples)

full, dropped = drop_zero_variance(to_matrix(sessions))
print("constant columns removed:", dropped)

train_r, _ = split(sessions, SplitSpec(0.7, seed=2))
train_ids = {r.experiment_id for r in train_r}
rows = np.flatnonzero([e in train_ids for e in full.experiment_ids])
train = full.take(rows, "train")

scaler = fit_scaler(train)
z = apply_scaler(scaler, train)
print(f"\ntrain matrix: {z.n} sessions x {z.d} features")

# FS: keep features whose forest importance reaches the mean importance
for kqi in ("latency_ms", "resolution_level"):
    sel = fit_selector(z, kqi, seed=0)
    ranked = sorted(zip(sel.importances, sel.feature_names), reverse=True)
    print(f"\nFS for {kqi}: keeps {len(sel.selected)} of {z.d}")
    for imp, name in ranked[:4]:
        mark = "*" if imp >= sel.threshold else " "
        print(f"  {mark} {name:<22}{imp:.3f}")

# FE: fewest components explaining at least 95% of the variance
pca = fit_pca(z)
print(f"\nFE keeps {pca.k} components; cumulative variance:",
      np.round(pca.cumulative_ratio[:pca.k + 1], 3))
