"""
Reflection at zero and killing at an interval boundary
======================================================

Reflected Brownian motion from 0 has the law of |W_T|. Killed Brownian motion
monitored on the grid survives more often than in continuous time, by an
amount that shrinks like sqrt(h).
"""

import numpy as np

from emweak import Grid, catalogue, fit_rate, killed_bias_ladder, reference_exit_probability
from emweak.reflected import reflected_law_check, simulate_reflected_em_path
from emweak.sampling import RngStream

# reflected motion: the scheme never leaves [0, inf) and local time only grows
problem = catalogue.get_builtin("reflected_bm").problem()
check = reflected_law_check(problem, Grid.from_step(1.0, 2.0**-8), n_paths=100_000)
print(f"E[X_T] = {check.mean.mean:.4f} (exact {check.expected_mean:.4f}), KS p-value {check.ks_pvalue:.3f}")

path = simulate_reflected_em_path(problem, Grid(1.0, 256), RngStream(0), n_paths=3)
print("final local times:", np.round(path.local_time[-1], 3))

# killed motion on (-1, 1)
killed = catalogue.get_builtin("killed_bm_interval").problem()
ref = reference_exit_probability(killed.domain, 0.0, 1.0, 1.0)
ladder = killed_bias_ladder(killed, lambda x: np.ones(x.shape[0]), [2.0**-k for k in range(3, 9)],
                            n_paths=200_000, reference=ref)
for pt in ladder:
    print(f"h={pt.h:<10.6g} survival={pt.estimate:.4f}  continuous={ref:.4f}")
print(f"bias slope {fit_rate(ladder).slope:.3f}")
