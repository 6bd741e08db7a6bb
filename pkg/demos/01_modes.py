# %% [markdown]
# # Guided modes of the dual-mode slab
#
# The qubit lives in the two TE modes of a 3 um slab (core 1.57, cladding
# 1.55, wavelength 1.064 um).  |0> is the even TE0 mode and |1> the odd TE1.

# %%
import matplotlib.pyplot as plt
import numpy as np

from wgqubit import SlabGeometry, TransverseGrid, mode_count_oracle, solve_te_modes

geom = SlabGeometry.symmetric(1.57, 1.55, 3.0, 1.064)
grid = TransverseGrid(-15.0, 15.0, 2048)
modes = solve_te_modes(geom, grid)

print(f"V = {geom.v_number():.4f}, guided modes: {len(modes)} (oracle {mode_count_oracle(geom)})")
for m in modes:
    print(f"TE{m.order}: n_eff = {m.n_eff:.10f}, confinement = {m.confinement:.4f}")

# %% [markdown]
# TE1 sits much closer to cutoff than TE0, so its tails reach further into
# the cladding.  That is what later makes it couple faster between
# neighbouring guides.

# %%
fig, ax = plt.subplots(figsize=(6, 3.5))
for m in modes:
    ax.plot(grid.x, m.profile.samples.real, label=f"TE{m.order}")
ax.axvspan(-1.5, 1.5, color="0.9")
ax.set_xlim(-8, 8)
ax.set_xlabel("x (um)")
ax.legend()
fig.savefig("modes.png", dpi=120, bbox_inches="tight")

# %% [markdown]
# A narrower core keeps only TE0.  This is the single-mode guide used in the
# interferometer arms and for cut-off measurements.

# %%
for w in (1.0, 1.5, 2.0, 3.0, 5.0):
    g = SlabGeometry.symmetric(1.57, 1.55, w, 1.064)
    print(f"width {w:.1f} um: {mode_count_oracle(g)} mode(s)")
