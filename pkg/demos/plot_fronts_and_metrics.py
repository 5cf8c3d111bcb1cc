"""
Pareto fronts and their metrics on the toy environments
=======================================================

"""

# the exact fronts are enumerated by brute force over deterministic policies
import numpy as np
from promorl.envs import get_spec, oracle_pareto_front
from promorl.metrics import hypervolume_exact, hypervolume_mc, pareto_filter, sparsity

treasure = oracle_pareto_front(get_spec("mo-treasure"))
print(treasure)

# hypervolume against the origin, exact sweep and a Monte-Carlo check
print(hypervolume_exact(treasure, [0, 0]))
print(hypervolume_mc(treasure, [0, 0], n_samples=200_000))

# sparsity is computed on the non-dominated subset only
noisy = np.vstack([treasure, treasure * 0.9])
print(len(pareto_filter(noisy)), sparsity(noisy))

# the lineworld front is a line of 101 points
line = oracle_pareto_front(get_spec("mo-lineworld"))
print(line[[0, 50, -1]], hypervolume_exact(line, [0, 0]))
