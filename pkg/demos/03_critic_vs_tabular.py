# %% Does the distributional critic learn the right numbers?
# Evaluate a fixed lane policy exactly with the tabular recursion, then fit a
# neural critic to the same policy from random-behavior data using the same
# target construction and loss as the main training loop.
# Takes a couple of minutes on one core.
import numpy as np

from wcpg.critic import predict
from wcpg.lanes import (CHANGE, LEFT, RIGHT, STAY, FastSlowLanesEnv, action_value, encode_lane_state,
                        lane_state_index, tabular_mdp)
from wcpg.tabular import policy_evaluate_tabular
from wcpg.trainer import train_critic_fixed_policy

# change lane at t = 0 and t = 2
pi = np.array([CHANGE if (s // 2) % 2 == 0 else STAY for s in range(8)])
exact = policy_evaluate_tabular(tabular_mdp(), pi, 1.0)


def policy(states, alphas):
    t = np.argmax(states[:, :4], axis=1)
    return np.where(t % 2 == 0, 1.0, -1.0)


critic = train_critic_fixed_policy(FastSlowLanesEnv(), policy)

# %% compare
print(" t lane   a     Q exact   Q net   var exact  var net")
for t in range(4):
    for lane in ((RIGHT,) if t == 0 else (RIGHT, LEFT)):
        for a in (STAY, CHANGE):
            s = lane_state_index(t, lane)
            z = predict(critic, encode_lane_state(t, lane), action_value(a), 0.5)
            print(f"{t:2d} {'RL'[lane]:>4} {'SC'[a]:>3} {exact.mean[s, a]:9.3f} {z.mean[0]:7.3f}"
                  f" {exact.variance[s, a]:10.3f} {z.variance[0]:8.3f}")
