"""
Adapting the behavior-cloning weight at deployment
==================================================

"""

import numpy as np
from promorl.adaptation import adapt, oracle_wbc
from promorl.experiments import mixed_corner_dataset
from promorl.svg import front_svg
from promorl.trainer import TrainConfig, evaluate_policy, train

bundle = train(TrainConfig("mo-lineworld", "diffusion", theta=1.0, total_iterations=3000),
               mixed_corner_dataset()).bundle

# three gradient steps on (mu, log sigma), ten episodes each
target = np.array([0.3, 0.7])
report = adapt(bundle, target, N=3, K=10)
for it in report.iterations:
    print(it["iteration"], round(it["mu"], 3), round(it["mean_utility"], 2))
print("adapted", report.final_wbc, "grid best", oracle_wbc(bundle, target))

# the front at the default weight, written as svg next to this script
rows = evaluate_policy(bundle, 21, 2)
with open("adapt_front.svg", "w") as fh:
    fh.write(front_svg([r for _, r in rows], reference_point=[0, 0], title="theta=1 diffusion"))
