# %% [markdown]
# # Finite-time blow-up of the gradient flow of f(x) = -x^4 / 4
#
# The flow x' = x^3 from x0 has the closed form x(t) = (x0^-2 - 2t)^(-1/2)
# and escapes at t* = x0^-2 / 2. The gradient method with any fixed step
# also escapes, but only after infinitely many time units per unit of x.

# %%
import numpy as np

from gdcert import StepSchedule, integrate_flow, make_problem, run_gd

f = make_problem("negative_quartic")
for x0 in (1.0, 2.0, 0.5):
    fl = integrate_flow(f, [x0])
    print(f"x0={x0}: {fl.termination} at t={fl.t_end:.7f}, predicted {0.5 / x0**2:.7f}, "
          f"{len(fl.times)} accepted steps")

# %% [markdown]
# Closed-form agreement on [0, 0.45] for x0 = 1.

# %%
fl = integrate_flow(f, [1.0])
t = np.linspace(0, 0.45, 10)
exact = (1 - 2 * t) ** -0.5
for ti, xi, ei in zip(t, fl(t)[:, 0], exact):
    print(f"t={ti:.3f}  flow={xi:.9f}  exact={ei:.9f}")

# %% [markdown]
# The gradient method with alpha = 0.01 leaves the escape radius once its
# elapsed time passes t*.

# %%
tr = run_gd(f, [1.0], StepSchedule.constant(0.01), max_iter=10_000, escape_radius=1e3)
print(tr.termination, "after", tr.n_steps, "steps, elapsed time", tr.times[-1])
