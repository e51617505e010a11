"""Walk through the link model: MCS table, BLER curves, HARQ combining, OLLA.

Run with ``python demos/01_link_model.py``.
"""

import numpy as np

from ladistill import mcs
from ladistill.baseline import OllaPolicy
from ladistill.evalkit import FixedPolicy, evaluate, scenario_suite
from ladistill.linksim import LinkState, bler, make_scenario, start_packet, transmit

# %% The 28-entry 256QAM table and the SINR at which each MCS has 50% BLER
for e in mcs.mcs_table()[::4]:
    print(f"MCS {e.index:2d}  Qm={e.modulation_order}  R={e.code_rate:.3f}  SE={e.spectral_efficiency:.4f}  "
          f"theta={mcs.required_sinr_db(e.index):6.2f} dB")

# %% BLER waterfall for a few MCS indices
sinr = np.arange(-5.0, 26.0, 5.0)
print("\nSINR (dB):", sinr)
for m in (0, 10, 20, 27):
    print(f"BLER m={m:2d}:", np.round(bler(np.full(sinr.shape, m), sinr), 3))

# %% Chase combining: two equal-SINR attempts add 10*log10(2) dB
cfg = make_scenario(mean_sinr_db=5.0, fading_sigma_db=0.0, bler_override=1.0)
link, rng = LinkState(), np.random.default_rng(0)
start_packet(link)
effective = [transmit(link, 0, cfg, rng).effective_sinr_db for _ in range(3)]
print("\neffective SINR over 3 attempts:", np.round(effective, 4))

# %% OLLA against fixed MCS choices on one benchmark scenario
bench = scenario_suite()["SCSU"]
for policy in (OllaPolicy(), FixedPolicy(5), FixedPolicy(20)):
    rep = evaluate(policy, bench, n_episodes=1000, seed=1)
    print(f"{policy.name:8s}  T={rep.mean_ue_throughput:.3f}  BLER={rep.bler:.3f}  r={rep.mean_episodic_reward:.3f}")
