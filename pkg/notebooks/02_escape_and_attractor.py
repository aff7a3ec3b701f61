# %% [markdown]
# # Escaping hot spots and the self-similar attractor
#
# With V = 2/r^2 in three dimensions A = 1, so hot spots of radial data sit
# on a sphere of radius close to sqrt(2 t), and the rescaled solution
# approaches M(phi) |xi| exp(-|xi|^2/4).  This script runs the bundled radial
# scenario to t = 100 to keep it short.

# %%
from __future__ import annotations

import math
import warnings

import numpy as np

from hotspots import evolution as ev
from hotspots import hotspot as hs
from hotspots import scenario as scn
from hotspots.errors import TruncationWarning

warnings.simplefilter("ignore", TruncationWarning)

# %%
sc = scn.load_scenario("hardy_radial_N3").with_overrides(t_end=100.0)
prep = scn.prepare(sc)
print(prep.prediction.case_tag, "-", prep.prediction.radius_law.descriptor)
run = scn.evolve(prep)

# %% [markdown]
# ## Hot-sphere radius against sqrt(2t)

# %%
print(f"{'t':>8s} {'radius':>10s} {'sqrt(2t)':>10s} {'ratio':>8s}")
for state in run.snapshots:
    rec = hs.hotspot_record(state)
    print(f"{state.time:8.3g} {rec.radius:10.4f} {math.sqrt(2 * state.time):10.4f} "
          f"{rec.radius / math.sqrt(2 * state.time):8.4f}")

# %% [markdown]
# ## Rescaled profile at the final time

# %%
t = run.state.time
xi = np.linspace(0.5, 3.0, 6)
pts = np.zeros((xi.size, 3))
pts[:, 0] = math.sqrt(t) * xi
scaled = t ** 2 * ev.reconstruct(run.state, pts)
target = prep.decomposition.M_phi * xi * np.exp(-xi ** 2 / 4)
for a, b, c in zip(xi, scaled, target):
    print(f"xi = {a:4.2f}  rescaled u = {b:.6e}  attractor = {c:.6e}  ratio = {b / c:.4f}")
