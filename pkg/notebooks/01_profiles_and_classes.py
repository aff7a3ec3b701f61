# %% [markdown]
# # Harmonic profiles and operator classes
#
# For a radial potential V the positive solution U_k of the k-th radial
# equation decides where hot spots go.  This script solves U_0 for a few
# potentials, reads off the tail exponent A and constant c*, and lists the
# maximizer set Pi of U_0.

# %%
from __future__ import annotations

import numpy as np

from hotspots import potential as pot
from hotspots import profiles as prof

# %% [markdown]
# ## Four potentials in three dimensions
# The Hardy threshold for N = 3 is -1/4.  A repulsive tail (lambda2 > 0)
# gives A > 0 and escaping hot spots; an attractive one (lambda2 < 0) gives
# A < 0 and confinement; zero and fast-decaying tails give A = 0.

# %%
specs = {
    "zero": pot.zero(3),
    "hardy(2)": pot.hardy(3, 2.0),
    "lorentz(-0.2)": pot.lorentz(3, -0.2),
    "decaying(1, 4)": pot.decaying(3, 1.0, 4.0),
}
print(f"{'potential':16s} {'class':6s} {'A':>10s} {'c*':>10s} {'min Pi':>8s}")
for name, spec in specs.items():
    pot.validate_condition_V(spec)
    U0 = prof.solve_profile(spec, 0, r_max=1e4)
    cls = prof.classify_operator(U0, spec)
    pi = prof.compute_Pi(U0)
    mp = "empty" if pi.is_empty else f"{pi.min_pi:.4g}"
    print(f"{name:16s} {cls.tag:6s} {cls.a_exponent:10.6f} {cls.c_star:10.6f} {mp:>8s}")

# %% [markdown]
# ## The A = 0 constant
# When lambda1 = 0 and the tail is integrable, U_0 = 1 + Gamma_0 and its
# limit at infinity is 1 + Gamma_0(inf).

# %%
spec = specs["decaying(1, 4)"]
U0 = prof.solve_profile(spec, 0, r_max=1e4)
G = prof.compute_Gamma(spec, U0, need_limit=True)
print(f"Gamma_0(inf) = {G.limit:.8f}, 1 + Gamma_0(inf) = {1 + G.limit:.8f}, "
      f"fitted c* = {U0.c_infinity:.8f}")

# %% [markdown]
# ## F_0 near the origin
# F_0(r) behaves like r^2 / (2N) at small r for every admissible V.

# %%
r = np.array([1e-3, 1e-2, 1e-1])
F = prof.compute_F(U0)
print("F_0(r) * 2N / r^2:", np.round(F(r) * 6 / r ** 2, 6))
