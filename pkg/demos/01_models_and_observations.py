"""Tour of the chaotic test models and their nonlinear observation operators.

Integrates Lorenz '63 and Lorenz '96 with the fixed-step RK4 integrator,
confirms the classic fixed points, and evaluates the two observation
operators the twin experiments use.
"""

import numpy as np

from engmf_lab import (l96_pointwise_observation, lorenz63_critical_point,
                       lorenz63_model, lorenz63_tendency, lorenz96_model,
                       lorenz96_tendency, observe_l63_distance, rk4_integrate)

# --- Lorenz '63: the butterfly ---------------------------------------------
model = lorenz63_model()  # sigma=10, rho=28, beta=8/3, dt=0.5 between analyses
critical = lorenz63_critical_point()
print("L63 critical point (wing center):", critical)
print("tendency there (should be ~0):   ", lorenz63_tendency(critical))

state = critical + np.array([1.0, 0.0, 0.0])
print("\nfree run from a perturbed wing center (one state per Dt = 0.5):")
for step in range(5):
    state = rk4_integrate(model, state, model.assimilation_interval)
    print(f"  t={0.5 * (step + 1):4.1f}  x={state[0]:8.3f}  y={state[1]:8.3f}  z={state[2]:8.3f}")

# The experiments observe the distance from the wing center, a scalar.
value, jacobian = observe_l63_distance(state)
print("\ndistance-from-critical-point observation:", round(value, 4))
print("its Jacobian row (unit norm):", jacobian.round(4), "->", np.linalg.norm(jacobian))

# --- Lorenz '96: a ring of 40 interacting variables -------------------------
model96 = lorenz96_model(size=40, forcing=8.0)
rest = np.full(40, 8.0)
print("\nL96 tendency at the homogeneous rest state (zero):",
      np.abs(lorenz96_tendency(rest)).max())

x = rest.copy()
x[0] += 0.01  # a tiny kick grows chaotically
for _ in range(50):
    x = rk4_integrate(model96, x, model96.assimilation_interval)
print("after 50 intervals, state spread:",
      round(x.min(), 2), "to", round(x.max(), 2))

# The quintic point-wise observation compresses small values and
# exaggerates large ones; at |x| = 10 its slope reaches 3.
obs = l96_pointwise_observation(size=40, omega=5, variance=0.25)
print("pointwise obs of [0, 5, 10]:", obs.operator(np.array([0.0, 5.0, 10.0])))
