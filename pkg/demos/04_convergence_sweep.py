"""Epsilon sweep: action laws of the perturbed system approach the effective
equation's as the scale separation grows.

A scaled-down version of the acceptance sweep (fewer paths, two epsilons);
the full-size run is `stochavg compare --config acceptance` or acceptance
criterion 5.
"""

from stochavg import ACCEPTANCE_V0, acceptance_system, convergence_table

spec = acceptance_system()
rows = convergence_table(spec, ACCEPTANCE_V0, eps_list=[0.2, 0.05, 0.0125],
                         T=1.0, n_paths=1500, times=[1.0], seed=7)

print(f"{'eps':>8} {'distance':>10} {'90% CI':>20} {'noise floor':>12}")
for r in rows:
    ci = f"({r.ci_lo:.4f}, {r.ci_hi:.4f})"
    print(f"{r.eps:>8g} {r.estimate:>10.4f} {ci:>20} {r.noise_floor:>12.4f}")

print("\nthe distances fall toward the Monte Carlo noise floor as eps shrinks;")
print("the non-resonant drift term (1.8 v2 in the first component) is what the")
print("averaging removes, and its imprint on the action law scales with eps.")
