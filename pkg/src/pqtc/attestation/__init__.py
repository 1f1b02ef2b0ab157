from .messages import (
    CHECK_NAMES,
    Ack,
    AttestationResult,
    AttestRequest,
    Challenge,
    Check,
    Enroll,
    ErrorMessage,
    Evidence,
    GetResult,
    ReferenceValues,
    Verdict,
)
from .nonces import DEFAULT_EXPIRY, NonceStatus, NonceStore
from .protocol import (
    DEFAULT_SELECTION,
    appraise,
    attester_respond,
    make_challenge,
    negotiate,
    reference_from_golden,
)
from .wire import MAX_FRAME, Channel, decode_frame, encode_frame

__all__ = [
    "CHECK_NAMES", "Ack", "AttestationResult", "AttestRequest", "Challenge", "Check", "Enroll",
    "ErrorMessage", "Evidence", "GetResult", "ReferenceValues", "Verdict", "DEFAULT_EXPIRY",
    "NonceStatus", "NonceStore", "DEFAULT_SELECTION", "appraise", "attester_respond",
    "make_challenge", "negotiate", "reference_from_golden", "MAX_FRAME", "Channel",
    "decode_frame", "encode_frame",
]
