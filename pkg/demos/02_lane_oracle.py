# %% Fast and slow lanes
# Four steps.  The right lane pays N(1, 1) per step, the left lane N(2, 4).
# A policy is one number, the chance of switching lanes at each step.  With a
# grid over that number and shared noise we can find the CVaR-best policy by
# brute force and watch it flip from "stay right" to "go left" as alpha grows.
import numpy as np

from wcpg.lanes import LaneMdp, alpha_sweep, crossover_alpha, median_filter3, rollout

mdp = LaneMdp()
rng = np.random.default_rng(0)
print("stay right  mean", rollout(mdp, 0.0, 100_000, rng).mean())   # about 4
print("always swap mean", rollout(mdp, 1.0, 100_000, rng).mean())   # about 6

# %% sweep alpha
alphas = np.round(np.arange(1, 21) * 0.05, 2)
rows = alpha_sweep(mdp, alphas, n_trials=100_000, seed=0)
p = np.array([r[1] for r in rows])
for (a, pc, c), f in zip(rows, median_filter3(p)):
    bar = "#" * int(round(20 * f))
    print(f"{a:4.2f}  p_change {pc:5.3f}  cvar {c:7.3f}  {bar}")
print("crossover alpha:", crossover_alpha(rows))
