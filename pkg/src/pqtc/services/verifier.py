"""Verifier service: enrollment, pull-model attestation and result lookup.

On an AttestRequest the verifier issues a Challenge to the agent address
recorded at enrollment, waits for Evidence, appraises it and returns the
result. The verifier doubles as the relying party.
"""

from __future__ import annotations

import logging
from typing import Callable, Optional

from ..attestation.messages import (
    Ack,
    AttestationResult,
    AttestRequest,
    Challenge,
    Enroll,
    ErrorMessage,
    Evidence,
    GetResult,
)
from ..attestation.nonces import NonceStore
from ..attestation.protocol import appraise, make_challenge
from ..attestation.wire import Channel
from ..errors import ConfigError, DecodeError, UnknownAttester
from .config import VerifierConfig
from .server import ServiceHandle, serve
from .store import ReferenceStore

log = logging.getLogger(__name__)

Transport = Callable[[Challenge], Evidence]


class Verifier:
    def __init__(self, config: Optional[VerifierConfig] = None, store: Optional[ReferenceStore] = None,
                 nonces: Optional[NonceStore] = None):
        self.config = config or VerifierConfig()
        self.store = store if store is not None else ReferenceStore(self.config.store_path)
        self.nonces = nonces or NonceStore(self.config.nonce_expiry)

    def challenge(self) -> Challenge:
        c = self.config
        return make_challenge(self.nonces, c.bank_alg, tuple(c.pcr_selection), tuple(c.accepted_schemes))

    def appraise(self, evidence: Evidence, challenge: Challenge) -> AttestationResult:
        result = appraise(evidence, challenge, self.store, self.nonces, self.config.min_hash_bits)
        self.store.record_result(result)
        return result

    def attest(self, attester_id: str, transport: Optional[Transport] = None) -> AttestationResult:
        """One attestation round; ``transport`` defaults to the enrolled agent address."""
        refs = self.store.get(attester_id)
        if transport is None:
            if not refs.address:
                raise ConfigError(f"no agent address enrolled for {attester_id!r}")
            transport = self._remote(refs.address)
        challenge = self.challenge()
        evidence = transport(challenge)
        if not isinstance(evidence, Evidence):
            detail = evidence.message if isinstance(evidence, ErrorMessage) else type(evidence).__name__
            raise DecodeError(f"agent did not return evidence: {detail}")
        if evidence.attester_id != attester_id:
            raise UnknownAttester(f"agent answered as {evidence.attester_id!r}, expected {attester_id!r}")
        return self.appraise(evidence, challenge)

    def _remote(self, address: str) -> Transport:
        def transport(challenge: Challenge):
            with Channel.connect(address, timeout=self.config.agent_timeout) as chan:
                return chan.request(challenge)

        return transport

    def handle(self, message):
        if isinstance(message, Enroll):
            self.store.enroll(message.refs)
            return Ack(f"enrolled {message.refs.attester_id}")
        if isinstance(message, AttestRequest):
            return self.attest(message.attester_id)
        if isinstance(message, GetResult):
            result = self.store.last_result(message.attester_id)
            if result is None:
                self.store.get(message.attester_id)  # UnknownAttester if not enrolled
                return ErrorMessage("NoResult", f"{message.attester_id} has not been attested yet")
            return result
        return ErrorMessage("UnexpectedMessage", f"verifier does not handle {type(message).__name__}")

    def serve(self, address: Optional[str] = None) -> ServiceHandle:
        return serve(address or self.config.listen, self.handle)


def run_verifier(config: VerifierConfig) -> ServiceHandle:
    return Verifier(config).serve()
