"""Video synthesis by discovering trajectories in a fixed image generator's latent space."""

import os as _os

# LML_THREADS caps BLAS/OpenMP worker threads; it must be applied before numpy loads.
_threads = _os.environ.get("LML_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
