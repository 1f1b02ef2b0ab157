"""Post-quantum trusted computing simulator: hash-based firmware signing,
a software TPM with PQ and hybrid quotes, IMA-style runtime measurement and
challenge-response remote attestation."""

__version__ = "0.1.0"

from .crypto import *  # noqa: F401,F403
from .errors import *  # noqa: F401,F403
from .lms import BACKEND  # noqa: F401
