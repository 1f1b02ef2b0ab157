"""Leighton-Micali signatures with reuse-proof signer state.

The LM-OTS hash chains dominate keygen and signing cost. A compiled
kernel module (``_ckernels``) is used when it was built; otherwise the
pure-Python kernels take over transparently. ``BACKEND`` names the one
selected at import time.
"""

from ._backend import BACKEND, kernels
from .core import (
    LmsPublicKey,
    LmsSignature,
    lms_keygen,
    lms_sign,
    lms_verify,
)
from .params import (
    LMOTS_SHA256_N32_W8,
    LMS_SHA256_M32_H5,
    LMS_SHA256_M32_H10,
    LmotsParams,
    LmsParams,
    signature_length,
)
from .state import FileStateStore, LmsPrivateState, MemoryStateStore, StateStore

__all__ = [
    "BACKEND",
    "kernels",
    "LmsPublicKey",
    "LmsSignature",
    "LmsPrivateState",
    "LmotsParams",
    "LmsParams",
    "LMOTS_SHA256_N32_W8",
    "LMS_SHA256_M32_H5",
    "LMS_SHA256_M32_H10",
    "StateStore",
    "FileStateStore",
    "MemoryStateStore",
    "lms_keygen",
    "lms_sign",
    "lms_verify",
    "signature_length",
]
