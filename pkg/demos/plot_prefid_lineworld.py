"""
Preference-inconsistent demonstrations on mo-lineworld
=======================================================

Half of the trajectories full throttle, half idle. Cloning all of them at every
target preference (theta=1) mixes the two modes near the start; filtering by
behavior preference (theta=0) does not.
"""

import numpy as np
from promorl.experiments import mixed_corner_dataset
from promorl.trainer import TrainConfig, evaluate_policy, train

ds = mixed_corner_dataset()
print(len(ds), np.unique(ds.returns.round(1), axis=0))

# a short budget keeps this under two minutes; the acceptance run uses 20000
corners = [np.array([0.0, 1.0]), np.array([1.0, 0.0])]
for theta in (0.0, 1.0):
    cfg = TrainConfig("mo-lineworld", "mse", theta=theta, total_iterations=3000)
    bundle = train(cfg, ds).bundle
    rows = evaluate_policy(bundle, prefs=corners, episodes_per_pref=1)
    print(theta, [round(float(p.weights @ r), 2) for p, r in rows])
