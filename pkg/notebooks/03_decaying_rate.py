# %% [markdown]
# # Slow escape for a fast-decaying repulsive potential
#
# For V = mu (1 + r^2)^(-d/2) with 2 < d < N the exponent A is 0 and Pi is
# empty, so hot spots escape, but only like t^(1/d).  The radius solves the
# implicit equation t U_0'(rho) / (c* rho) = 1/2; a closed form follows from
# the tail U_0' ~ mu c* rho^(1-d) / (N - d).  This script compares the two
# and shows the effect of the constant D = 1 + Gamma_0(inf) in the
# closed form.

# %%
from __future__ import annotations

from hotspots import hotspot as hs
from hotspots import potential as pot
from hotspots import profiles as prof

# %%
N, mu, d = 4, 0.2, 3.0
spec = pot.decaying(N, mu, d)
U0 = prof.solve_profile(spec, 0, r_max=1e5)
g0 = prof.compute_Gamma(spec, U0, need_limit=True).limit
print(f"Gamma_0(inf) = {g0:.6f}, c* = {U0.c_infinity:.6f}")

# %%
print(f"{'t':>8s} {'implicit':>10s} {'with D':>10s} {'err':>8s} {'without D':>10s} {'err':>8s}")
for t in (1e3, 1e4, 1e5, 1e6, 1e7):
    rho = hs.solve_implicit_radius(U0, t)
    a = hs.corollary_radius(t, N=N, mu=mu, d=d, gamma0_inf=g0)
    b = hs.corollary_radius(t, N=N, mu=mu, d=d, gamma0_inf=g0, form="without_D")
    print(f"{t:8.0e} {rho:10.4f} {a:10.4f} {100 * (a / rho - 1):7.2f}% {b:10.4f} {100 * (b / rho - 1):7.2f}%")

# %% [markdown]
# The form without D converges to the implicit root as t grows; the form
# with D stays within a few percent for small mu because D is close to 1,
# but its error settles at D^(-1/d) - 1 rather than vanishing.
