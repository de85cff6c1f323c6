"""
Simulating a measurement campaign
=================================

The toolkit ships a seeded stand-in for the testbed: 4 bandwidths times
3 power scenarios, each experiment a 120 s 360-video session sampled once
per second. Here we run a reduced campaign and look at how the radio
conditions show up in the session-level KQIs.
"""

import numpy as np

from kqiest.preprocess import aggregate_sessions
from kqiest.schema import BANDWIDTHS_MHZ, POWER_SCENARIOS
from kqiest.simulator import CampaignConfig, generate_campaign

# 10 experiments per scenario instead of 60 keeps this quick
samples = generate_campaign(CampaignConfig(experiments_per_config=10), master_seed=1)
print(f"{len(samples)} samples from {len({s.experiment_id for s in samples})} experiments")

# one record per experiment: means of every metric, lower median for resolution
sessions = aggregate_sessions(samples)

print(f"\n{'scenario':<26}{'resolution':>11}{'stall ms':>10}{'startup ms':>12}")
for ps in POWER_SCENARIOS:
    for bw in BANDWIDTHS_MHZ:
        group = [r for r in sessions
                 if r.config.power_scenario == ps and r.config.bandwidth_mhz == bw]
        res = np.mean([r.kqis.resolution_level for r in group])
        stall = np.mean([r.kqis.avg_stall_ms for r in group])
        start = np.mean([r.kqis.initial_startup_ms for r in group])
        print(f"{group[0].config.label:<26}{res:>11.2f}{stall:>10.1f}{start:>12.0f}")

# the same seed always gives the same campaign
again = generate_campaign(CampaignConfig(experiments_per_config=10), master_seed=1)
print("\nreproducible:", again == samples)
