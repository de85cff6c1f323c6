"""
How much do the KQIs tell about each other?
===========================================

Each KQI is cut into equal-frequency bins and the plug-in mutual
information is computed in bits. The diagonal holds each KQI's own
binned entropy, an upper bound for its row.
"""

import numpy as np

from kqiest.evaluation import mi_matrix
from kqiest.preprocess import aggregate_sessions
from kqiest.schema import KQI_FIELDS
from kqiest.simulator import CampaignConfig, generate_campaign

sessions = aggregate_sessions(generate_campaign(CampaignConfig(experiments_per_config=30), 4))
targets = {k: np.array([getattr(r.kqis, k) for r in sessions]) for k in KQI_FIELDS}
M = mi_matrix(targets, bins=16)

short = {"resolution_level": "res", "frame_rate_fps": "fps", "initial_startup_ms": "start",
         "avg_stall_ms": "stall", "client_throughput_mbps": "tput", "latency_ms": "lat"}
print(f"{len(sessions)} sessions, {M.bins} bins, bits\n")
print(" " * 7 + "".join(f"{short[k]:>7}" for k in M.names))
for i, k in enumerate(M.names):
    print(f"{short[k]:<7}" + "".join(f"{v:>7.2f}" for v in M.values[i]))

stall_links = [M.get("avg_stall_ms", k) for k in M.names if k != "avg_stall_ms"]
print(f"\nlargest MI of stall time with another KQI: {max(stall_links):.3f} bits")
print(f"client throughput vs resolution: {M.get('client_throughput_mbps', 'resolution_level'):.3f} bits")
