"""
A small convergence study for coupled Stokes/Darcy flow
=======================================================

Solve the manufactured problem on a few grids and watch the errors fall.
"""

import numpy as np

from wgds.mms import ERROR_LABELS, convergence_study, reference_params

# lowest-order elements, stabilisation rho = 1 on both sides
params = reference_params(1.0)
print(params)

# n x n cells on each side of the interface y = 0
table = convergence_study([4, 8, 16], params)

print(" n   " + "  ".join(f"{lab:>9}" for lab in ERROR_LABELS))
for row in table.rows:
    print(f"{row.n:>2}   " + "  ".join(f"{e:9.5f}" for e in row.errors))

# least-squares slope of log(err) against log(h)
print("rate " + "  ".join(f"{r:9.4f}" for r in table.rates_lsq))

# %%
# The same study from the command line:
#
#     wgds convergence --n 4,8,16 --fit-from 4
