# %% Unprotected left turn
# Train on the left-turn scenario, then look at how the risk level changes
# behavior.  The default here is a short run so the script finishes in a few
# minutes; pass an episode count (1500 is the desk-scale setting) for a run
# that actually separates the risk levels.
import sys

from wcpg.evaluation import SweepSpec, evaluate, extrapolation_sweep, format_rate, uncertainty_trace
from wcpg.sim import ScenarioConfig
from wcpg.trainer import TrainConfig, train

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 60
config = TrainConfig(episodes=episodes, seed=0)
scenario = ScenarioConfig.left_turn(max_steps=config.max_steps)
learner, log = train(config, scenario_config=scenario)
ckpt = learner.checkpoint({"scenario_config": scenario.to_dict()})
print(f"trained {episodes} episodes, last return {log.rows[-1]['return']:.2f}")

# %% risk level at test time
for alpha in (0.1, 1.0):
    recs, s = evaluate(ckpt, scenario, alpha, 50, seed=0)
    n_coll = sum(r.cause == "collision" for r in recs)
    print(f"alpha {alpha}: collision {format_rate(n_coll, len(recs))}  mean steps {s['mean_steps']:.1f}")

# %% faster and denser traffic than in training
spec = SweepSpec.from_rows([(10.0, 0.05)], alphas=(0.1, 1.0), trials_per_cell=50)
for row in extrapolation_sweep(ckpt, scenario, spec, seed=0):
    print(row["alpha"], row["collision"], row["mean_steps"])

# %% critic spread along one episode
trace = uncertainty_trace(ckpt, scenario, 0.1, seed=3)
for r in trace[::5]:
    print(f"t {r['t']:5.2f}  speed {r['speed']:5.2f}  sigma {r['critic_sigma']:7.3f}")
print("outcome:", trace[-1]["cause"])
