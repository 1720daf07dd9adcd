# Opportunistic scheduling with an average power budget per cell and a
# target rate share per user. Prices on power (lambda, per cell) and on
# unfairness (mu, per user) are adjusted slot by slot.

import numpy as np

from mcofdma import DualSchedConfig, DualState, ScenarioConfig, run_dual_scheduler
from mcofdma.dual_sched import default_power_grid
from mcofdma.powerplan import build_plan, default_levels, plan_power_matrix
from mcofdma.scenario import channel_stream

cfg = ScenarioConfig(Q=2, K=4, M=8, seed=42)
phi = np.full(cfg.K, 1.0 / cfg.K)
N = 2000
grid = default_power_grid(cfg.p_max)
print("power grid (W):", np.round(grid, 4))

dc = DualSchedConfig(phi=phi, P_bar=2.0, N=N, power_grid=grid)
run = run_dual_scheduler(dc, channel_stream(cfg, 0, N), DualState.initial(cfg.Q, cfg.K),
                         keep_trace=True)

print("\nexhaustive search")
print("  lambda:", np.round(run.state.lam, 3), "  mu:", np.round(run.state.mu, 2))
print("  mean power per cell:", np.round(run.mean_power, 3), "W (budget 2.0)")
print("  rate shares:", np.round(run.rate_share, 3))

# how the per-cell power settles
p_series = np.array([s.p.sum(axis=0) for s in run.trace])
for lo in range(0, N, N // 4):
    print(f"  slots {lo:4d}-{lo + N // 4 - 1:4d}: mean power {p_series[lo:lo + N // 4].mean(axis=0).round(2)}")

# Decentralised variant: cells radiate at most the planned power and
# users only report SINR under that worst case.
V = plan_power_matrix(build_plan(cfg.Q, cfg.M, default_levels(cfg.Q, cfg.p_max)))
dc_opp = DualSchedConfig(phi=phi, P_bar=2.0, N=N, power_grid=grid,
                         selection_mode="opportunistic", V=V)
opp = run_dual_scheduler(dc_opp, channel_stream(cfg, 0, N), DualState.initial(cfg.Q, cfg.K),
                         keep_trace=False)
print("\nopportunistic selection")
print("  mean power per cell:", np.round(opp.mean_power, 3), "W")
print("  rate shares:", np.round(opp.rate_share, 3))
print(f"  mean sum rate {opp.mean_rate.sum():.1f} vs exhaustive {run.mean_rate.sum():.1f} bits/s/Hz")
print(f"  outage fraction {opp.outage_fraction:.3f}")
