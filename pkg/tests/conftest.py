"""Test-session setup.

The suite works on tiny matrices where BLAS threading is pure overhead
(and sustained oversubscription trips CPU throttling in constrained
environments), so pin the math libraries to one thread before numpy loads.
"""

import os

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(var, "1")
