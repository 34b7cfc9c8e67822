"""Long-tail node classification on graphs.

Importing this package before numpy honors ``T2L_THREADS``: the value caps
the BLAS/OpenMP thread pools that back the dense kernels.
"""

import os as _os

_threads = _os.environ.get("T2L_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
