from .attester import AttesterAgent
from .config import AttesterConfig, VerifierConfig
from .server import ServiceHandle, serve
from .store import ReferenceStore
from .verifier import Verifier, run_verifier


def run_attester(config: AttesterConfig) -> ServiceHandle:
    return AttesterAgent(config).serve()


__all__ = [
    "AttesterAgent", "AttesterConfig", "VerifierConfig", "ServiceHandle", "serve",
    "ReferenceStore", "Verifier", "run_verifier", "run_attester",
]
