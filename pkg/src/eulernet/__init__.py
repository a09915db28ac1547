"""Temporal face anti-spoofing toolkit."""

import os as _os

# EULER_THREADS caps BLAS threads; only effective before numpy is first imported
if _os.environ.get("EULER_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["EULER_THREADS"])

__version__ = "0.1.0"
