"""
From N bosons to one Hartree orbital
====================================

Start N bosons in a common condensate, evolve the exact N-body dynamics in
a small momentum-mode truncation, and compare the one-particle density
matrix with the Hartree projector.
"""

# %%
# Seven modes: the zero mode and its six nearest neighbours.
from bosonstar.fock import build_modes, default_amplitudes, mean_field_convergence

modes = build_modes(1)
c0 = default_amplitudes(modes)
print(f"{modes.M} modes, dispersion {modes.eps.round(4)}")

# %%
# The trace distance should fall roughly like 1/N.
table = mean_field_convergence(modes, -1.0, c0, 1.0, [2, 4, 8, 16])
for N, d in zip(table.N, table.d):
    print(f"N={N:3d}  d={d:.4e}")
print(f"log-log slope {table.slope:.3f}; strictly decreasing: {table.strictly_decreasing()}")
