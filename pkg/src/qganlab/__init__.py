"""Ablation laboratory for energy-regularized auxiliary-classifier GANs."""

import os

import numpy  # noqa: F401  (BLAS must be loaded before it can be clamped)
import threadpoolctl

__version__ = "0.1.0"

# One BLAS thread per process: the small GEMMs here run faster unthreaded, and
# a fixed thread count keeps reduction order (and therefore every downstream
# byte) reproducible across CLI, tests, and campaign workers. Override with
# QGANLAB_BLAS_THREADS at your own reproducibility risk.
_BLAS_LIMIT = threadpoolctl.threadpool_limits(
    limits=int(os.environ.get("QGANLAB_BLAS_THREADS", "1")), user_api="blas"
)
