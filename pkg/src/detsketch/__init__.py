"""Deterministic linear sketches for l1 heavy hitters with sublinear decoding.

The general-turnstile schemes stack two-layer hashing systems whose
buckets carry error-corrected index bits; the strict-turnstile scheme
uses Reed-Solomon code matrices with recursive bit splitting.
"""

from .core import (
    DimensionError,
    ParameterError,
    SketchMatrix,
    SketchVector,
    SparseVector,
    StreamFormatError,
    Update,
    apply,
    head_set,
    ingest,
    oracle_verify_l1,
    oracle_verify_linf,
    tail_norm,
)
from .kernels import BACKEND
from .recover_l1 import build_l1_scheme, l1_decode
from .recover_linf import build_combined_scheme, build_linf_scheme, combined_decode_sketch, linf_decode
from .strict import SplitTree, StrictViolationError, build_split_tree, recursive_decode
from .weak import Flavor, WeakMatrix, weak_decode

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DimensionError",
    "Flavor",
    "ParameterError",
    "SketchMatrix",
    "SketchVector",
    "SparseVector",
    "SplitTree",
    "StreamFormatError",
    "StrictViolationError",
    "Update",
    "WeakMatrix",
    "apply",
    "build_combined_scheme",
    "build_l1_scheme",
    "build_linf_scheme",
    "build_split_tree",
    "combined_decode_sketch",
    "head_set",
    "ingest",
    "l1_decode",
    "linf_decode",
    "oracle_verify_l1",
    "oracle_verify_linf",
    "recursive_decode",
    "tail_norm",
    "weak_decode",
]
