# %% [markdown]
# # Iterates shadow the flow, and both have KL-bounded length
#
# For a step at most alpha_bar(eps, T, L, M) the gradient iterates stay eps-close
# to the flow on [0, T]. Both trajectories also satisfy length bounds built
# from a desingularizer psi.

# %%
import numpy as np

from gdcert import (Desingularizer, Region, StepSchedule, alpha_bar, continuous_length_certificate,
                    discrete_length_certificate, estimate_constants, integrate_flow, make_problem, run_gd,
                    tracking_deviation)

f = make_problem("scalar_factorization")
# the constants grow fast with the radius, and alpha_bar shrinks like exp(-M T)
near = Region.ball([0.0, 0.0], 1.5)
est = estimate_constants(f, near, n_samples=20_000, seed=0)
print(f"L = {est.L:.3f}, M = {est.M:.3f} on B(0, 1.5)")

# %%
x0 = np.array([0.9, 0.4])
for eps, T in ((0.1, 0.25), (0.05, 0.5), (0.2, 0.5)):
    a = alpha_bar(eps, T, est.L, est.M)
    r = tracking_deviation(f, x0, StepSchedule.constant(a), T, 1e-9, eps, est.L, est.M, near)
    print(f"eps={eps}, T={T}: alpha_bar={a:.2e}, {r.times.size} steps, max deviation {r.max_deviation:.2e}")

# %% [markdown]
# Length bounds with psi(t) = 1.5 sqrt(t) and the two critical values {0, 1}.
# A run whose f-range contains both needs m = 2.

# %%
region = Region.ball([0.0, 0.0], 3.0)
big = estimate_constants(f, region, n_samples=20_000, seed=0)
psi = Desingularizer(1.5, 0.5)
for start in ([1.2, 0.4], [1.5, -0.2]):
    fl = integrate_flow(f, start, horizon=30.0)
    tr = run_gd(f, start, StepSchedule.constant(0.01), max_iter=20_000)
    for m in (1, 2):
        c = continuous_length_certificate(fl, f, psi, m, V=[0.0, 1.0], region=region)
        d = discrete_length_certificate(tr, f, psi, m, L=big.L, V=[0.0, 1.0], region=region)
        print(start, f"m={m}: flow {'pass' if c.passed else c.reason or 'fail'}, "
              f"iterates {'pass' if d.passed else d.reason or 'fail'}")
