"""
Grid search and test-set assessment for one KQI
===============================================

Each family is tuned over its full grid by 5-fold cross-validated MAE,
refit on the whole train split and scored once on the test split. The
MAE% bands read: under 10% proper, under 20% suitable, up to 50%
acceptable, above that inappropriate.
"""

import numpy as np

from kqiest.evaluation import ModelChain, evaluate
from kqiest.preprocess import (SplitSpec, aggregate_sessions, apply_scaler, clean,
                               drop_zero_variance, fit_scaler, split)
from kqiest.schema import to_matrix
from kqiest.selection import grid_search
from kqiest.simulator import CampaignConfig, generate_campaign

samples, _ = clean(generate_campaign(CampaignConfig(experiments_per_config=15), 3))
sessions = aggregate_sessions(samples)
full, _ = drop_zero_variance(to_matrix(sessions))
train_r, _ = split(sessions, SplitSpec(0.7, seed=3))
in_train = np.array([e in {r.experiment_id for r in train_r} for e in full.experiment_ids])
train = full.take(np.flatnonzero(in_train), "train")
test = full.take(np.flatnonzero(~in_train), "test")

scaler = fit_scaler(train)
z = apply_scaler(scaler, train)
kqi = "latency_ms"
print(f"{kqi}: {train.n} train / {test.n} test sessions\n")

print(f"{'family':<8}{'cells':>6}{'cv MAE':>10}{'test MAE%':>11}  band           ptime us")
for family in ("RR", "KNR", "RF", "ABR"):
    result = grid_search(family, None, z, kqi, master_seed=3)
    rep = evaluate(ModelChain(scaler, None, result.model), test, kqi, repeats=5)
    print(f"{family:<8}{len(result.records):>6}{result.best.mean_mae:>10.2f}"
          f"{100 * rep.mae_pct:>10.2f}%  {rep.band:<14}{rep.ptime_us:>8.2f}")
    print(f"        best: {result.best.hyperparameters}")
