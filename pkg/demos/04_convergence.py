"""Empirical convergence confirms the symbolic verdicts.

Strong errors are measured against the same method on a four-times finer
grid driven by the same Brownian path; coarse increments (dW, int W ds) are
aggregated exactly from the fine ones.  Weak errors use the same coupling,
which cancels most of the Monte Carlo noise in the difference of means.
"""

from sprk import builtin, builtin_problem, strong_study, weak_study
from sprk.simulate import dyadic_steps


def show(title, res, target):
    print(f"\n{title}  (expected slope {target})")
    for h, e, s in zip(res.h, res.errors, res.stderr):
        print(f"  h={h:<9.5f} error {e:.3e} +- {s:.1e}")
    if res.slope is None:
        print(f"  no slope: {res.status}")
    else:
        print(f"  slope {res.slope:.3f} +- {res.slope_halfwidth:.3f}  [{res.status}]")


langevin = builtin_problem("langevin")
show("Langevin, additive-noise method, strong",
     strong_study(builtin("sv_right_3part"), langevin, 1.0, dyadic_steps(1 / 8, 5), 4000, seed=1),
     1.0)
show("Langevin, additive-noise method, weak (energy)",
     weak_study(builtin("sv_right_3part"), langevin, 1.0, dyadic_steps(1 / 4, 5), 10_000, seed=1),
     2.0)
show("Pendulum with phase noise, order-1.5 method, strong",
     strong_study(builtin("milstein_15"), builtin_problem("synchrotron"), 1.0,
                  dyadic_steps(1 / 4, 5), 4000, seed=1),
     1.5)
show("Skew bilinear system, two noises, Stormer-Verlet, weak",
     weak_study(builtin("stormer_verlet", M=2), builtin_problem("bilinear_skew", M=2), 1.0,
                dyadic_steps(1 / 4, 4), 4000, seed=3),
     1.0)
