# Layered allocation: each cell minimises its own transmit power for a
# fixed number of channels per user, then the cells react to each other's
# interference until nobody wants to change.

import numpy as np

from mcofdma import (LayeredPolicy, ScenarioConfig, SinrTarget, evaluate, generate_scenario,
                     random_allocate, run_layered, uniform_requirement)

cfg = ScenarioConfig(Q=3, K=12, M=12, seed=5)
target = SinrTarget(eta0=2.0)               # 2 bits/s/Hz per channel, SINR target 3
ch = generate_scenario(cfg, drop_id=0)

req = uniform_requirement(ch, channels_per_user=2, eta0=target.eta0)
print("channels owed per cell:", req.channels.sum(axis=0))

out = run_layered(ch, req, target, cfg.p_max, LayeredPolicy())
rep = evaluate(ch, out.allocations)
print(f"layered: converged={out.converged} after {out.sweeps} sweeps, "
      f"{out.load_reductions} load reductions")
print(f"  total power {rep.total_power:.3e} W, sum rate {rep.sum_rate / 1e3:.0f} kbit/s")

# Same demand, random carriers + power control.
allocs, off = random_allocate(ch, req, target, cfg.p_max, drop_id=0)
rnd = evaluate(ch, allocs)
print(f"random:  {len(off)} links switched off, total power {rnd.total_power:.3e} W")
print(f"  power ratio random / layered: {rnd.total_power / rep.total_power:.1f}")

# Less feedback: each user reports only its 3 least-interfered carriers;
# the rest are assumed bad.
mf = run_layered(ch, req, target, cfg.p_max, LayeredPolicy(n_best=3))
print(f"min-feedback (3 of {cfg.M}): converged={mf.converged}, "
      f"power {evaluate(ch, mf.allocations).total_power:.3e} W")

# Push the load up until the network cannot serve it.
heavy = uniform_requirement(ch, channels_per_user=4, eta0=5.0)
out = run_layered(ch, heavy, SinrTarget(5.0), cfg.p_max, LayeredPolicy(max_load_reductions=5))
print(f"\nheavy load: {heavy.total} channels requested, {out.requirement.total} kept "
      f"after {out.load_reductions} reductions, switched off users {out.switched_off_users}")
