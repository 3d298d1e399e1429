# %% [markdown]
# # A degenerate saddle whose gradient iterates always lose a fixed amount of f
#
# The catalog objective ``cubic_saddle``, f(x1, x2) = x1^3 - x1^2 x2, has a
# single critical point at the origin with a zero Hessian, so it is neither a
# minimum nor a strict saddle. Every run started in B(0, 0.3) with
# f < 0 must lose at least 2/19683 of function value before it leaves B(0, 0.8).

# %%
import numpy as np

from gdcert import Region, kl_check, make_problem
from gdcert.kl import CUBIC_DECREASE_THRESHOLD, CUBIC_PSI, uniform_decrease_experiment
from gdcert.saddle import classify_critical_point

f = make_problem("cubic_saddle")
print(classify_critical_point(f, [0.0, 0.0]))

# %% [markdown]
# The desingularizer psi(t) = 3 t^(1/3) certifies the KL inequality on the
# ball, away from the two lines where the gradient norm vanishes faster.

# %%
grid = Region.ball([0.0, 0.0], 0.8).grid(200)
keep = (np.abs(grid[:, 0]) > 1e-6) & (np.abs(grid[:, 0] - grid[:, 1]) > 1e-6)
rep = kl_check(f, CUBIC_PSI, [0.0], grid[keep])
print(f"KL margin {rep.margin:.4f} on {rep.n_checked} grid points")

# %% [markdown]
# Now the decrease experiment itself, with a smaller batch than the
# acceptance run so the script finishes in a few seconds.

# %%
res = uniform_decrease_experiment(f, alpha=1e-4, n_inits=100, seed=0, max_iter=200_000)
print(f"{res.n_exited} runs exited, {res.n_inside} still inside")
print(f"smallest decrease {res.decreases.min():.5f} vs threshold {CUBIC_DECREASE_THRESHOLD:.5e}")
worst = int(np.argmin(res.decreases))
print("hardest start:", res.inits[res.exited][worst], "f0 =", res.f0[res.exited][worst])
