"""Exception hierarchy shared by every pqtc module."""


class PqtcError(Exception):
    """Base class for all framework errors."""


class UnknownAlgorithm(PqtcError):
    pass


class UnknownScheme(PqtcError):
    pass


class ProviderUnavailable(PqtcError):
    """The scheme is registered but no implementation is installed."""


class StateExhausted(PqtcError):
    """A stateful hash-based key has no unused leaves left."""


class PersistenceFailure(PqtcError):
    """Signer state could not be durably stored; no signature was released."""


class ConcurrentSignError(PqtcError):
    """Another sign operation holds this key state."""


class UnsupportedParams(PqtcError):
    pass


class KeyFormatError(PqtcError):
    pass


class PolicyViolation(PqtcError):
    """A hash algorithm is too weak for the configured quantum policy."""


class IndexOutOfRange(PqtcError):
    pass


class BankMismatch(PqtcError):
    pass


class WrongFlavor(PqtcError):
    pass


class InvalidUpdateSignature(PqtcError):
    pass


class PolicyMiss(PqtcError):
    """A path is not covered by the measurement policy."""


class ParseError(PqtcError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EntropyFailure(PqtcError):
    pass


class NoCommonScheme(PqtcError):
    """Attester and verifier share no signature scheme."""


class UnknownAttester(PqtcError):
    pass


class DecodeError(PqtcError):
    """A wire frame is malformed, oversized, truncated or of unknown type."""


class StoreCorrupt(PqtcError):
    pass


class KeyLoadFailure(PqtcError):
    pass


class ConfigError(PqtcError):
    pass


class AddressInUse(PqtcError):
    pass
