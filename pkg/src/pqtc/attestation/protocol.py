"""Challenge issue, evidence assembly and appraisal.

Appraisal always runs all six checks and reports each one; the verdict is
their conjunction. The nonce is consumed on the first appraisal attempt,
pass or fail.
"""

from __future__ import annotations

import secrets
from typing import Callable, Mapping, Optional, Union

from ..boot import BOOT_PCR, BootReport, replay_boot_log
from ..crypto.hashes import DEFAULT_MIN_BITS, Digest, HashAlgId, policy_allows_hash
from ..crypto.hybrid import CLASSICAL_SCHEME, hybrid_verify
from ..crypto.schemes import KeyPair, SchemeId, available_schemes, scheme_metadata, verify
from ..errors import EntropyFailure, NoCommonScheme, ParseError, UnknownAttester, WrongFlavor
from ..ima import ImaLog, parse_log, replay_log, serialize_log, template_hash
from ..tpm import NONCE_LEN, Flavor, HybridQuote, QuoteBody, SignedQuote, TpmInstance, composite_digest
from .messages import (
    CHECK_NAMES,
    AttestationResult,
    Challenge,
    Check,
    Evidence,
    ReferenceValues,
    Verdict,
)
from .nonces import NonceStatus, NonceStore

DEFAULT_SELECTION = (BOOT_PCR, 10)


def make_challenge(
    store: NonceStore,
    bank_alg: HashAlgId = HashAlgId.SHA384,
    selection=DEFAULT_SELECTION,
    schemes=(SchemeId.ML_DSA_65,),
    randomness: Callable[[int], bytes] = secrets.token_bytes,
) -> Challenge:
    schemes = tuple(SchemeId.parse(s) for s in schemes)
    if not schemes:
        raise ValueError("a challenge must accept at least one signature scheme")
    try:
        nonce = randomness(NONCE_LEN)
    except Exception as exc:
        raise EntropyFailure(f"random source failed: {exc}") from exc
    if not isinstance(nonce, bytes) or len(nonce) != NONCE_LEN:
        raise EntropyFailure("random source returned a short nonce")
    expiry = store.register(nonce)
    return Challenge(nonce, HashAlgId.parse(bank_alg), tuple(selection), schemes, expiry)


def negotiate(accepted, offered) -> SchemeId:
    """First scheme in the verifier's preference order the attester can sign with."""
    usable = set(offered) & set(available_schemes())
    for scheme in accepted:
        if scheme in usable:
            return scheme
    raise NoCommonScheme(
        "no common signature scheme: verifier accepts "
        f"{[s.value for s in accepted]}, attester offers {sorted(s.value for s in offered)}"
    )


def attester_respond(
    challenge: Challenge,
    tpm: TpmInstance,
    ima_log: Union[ImaLog, bytes],
    boot_report: Optional[BootReport],
    keys: Optional[Mapping] = None,
    attester_id: str = "attester",
) -> Evidence:
    """Quote with the challenge nonce and bundle the current logs.

    ``keys`` holds the PQ wrapper keys of a hybrid attester (scheme -> KeyPair
    or a list of KeyPairs); an fTPM attester signs with its own keys.
    """
    wrappers: dict[SchemeId, KeyPair] = {}
    for k in (keys.values() if isinstance(keys, Mapping) else keys or ()):
        wrappers[k.scheme] = k
    with tpm.lock:
        if tpm.flavor is Flavor.FTPM_PQ:
            offered = [s for s in tpm.schemes() if scheme_metadata(s).quantum_safe]
            scheme = negotiate(challenge.accepted_schemes, offered)
            quote = tpm.quote_pq(challenge.bank_alg, challenge.pcr_selection, challenge.nonce, scheme)
            pks = {scheme: tpm.key_for(scheme).public_key}
        else:
            offered = [s for s, k in wrappers.items() if k.meta.quantum_safe]
            if not offered:
                raise WrongFlavor("a physical_hybrid attester needs a PQ wrapper key")
            scheme = negotiate(challenge.accepted_schemes, offered)
            quote = tpm.quote_hybrid(wrappers[scheme], challenge.bank_alg, challenge.pcr_selection, challenge.nonce)
            pks = {
                CLASSICAL_SCHEME: tpm.key_for(CLASSICAL_SCHEME).public_key,
                scheme: wrappers[scheme].public_key,
            }
        log_bytes = ima_log if isinstance(ima_log, (bytes, bytearray)) else serialize_log(ima_log)
    boot_log = tuple(boot_report.event_log) if boot_report is not None else ()
    return Evidence(attester_id, quote, bytes(log_bytes), boot_log, pks)


# -- appraisal ------------------------------------------------------------


def _resolve_refs(evidence: Evidence, refs) -> ReferenceValues:
    if isinstance(refs, ReferenceValues):
        if refs.attester_id != evidence.attester_id:
            raise UnknownAttester(evidence.attester_id)
        return refs
    try:
        return refs[evidence.attester_id]
    except KeyError:
        raise UnknownAttester(f"no reference values for {evidence.attester_id!r}") from None


def _check_nonce(status: NonceStatus, body: Optional[QuoteBody], challenge: Challenge) -> Check:
    if status is not NonceStatus.OK:
        return Check("nonce", False, f"challenge nonce {status.value}")
    if body is None:
        return Check("nonce", False, "quote body unreadable")
    if body.nonce != challenge.nonce:
        return Check("nonce", False, "quote answers a different nonce")
    return Check("nonce", True)


def _check_signature(evidence: Evidence, body, challenge: Challenge, refs: ReferenceValues) -> Check:
    q = evidence.quote
    if body is None:
        return Check("signature", False, "quote body unreadable")
    if body.flavor is not refs.flavor:
        return Check("signature", False, f"quote flavor {body.flavor.value}, enrolled {refs.flavor.value}")
    if isinstance(q, SignedQuote):
        if refs.flavor is not Flavor.FTPM_PQ:
            return Check("signature", False, "plain PQ quote from a hybrid-enrolled attester")
        scheme = q.scheme
        if scheme not in challenge.accepted_schemes:
            return Check("signature", False, f"{scheme.value} not accepted by this challenge")
        pk = refs.keys.get(scheme)
        if pk is None:
            return Check("signature", False, f"no enrolled {scheme.value} key")
        ok = verify(pk, scheme, q.body, q.signature)
        return Check("signature", ok, f"{scheme.value}" + ("" if ok else " signature invalid"))
    if isinstance(q, HybridQuote):
        if refs.flavor is not Flavor.PHYSICAL_HYBRID:
            return Check("signature", False, "hybrid quote from an fTPM-enrolled attester")
        scheme = q.hybrid.pq_scheme
        if scheme not in challenge.accepted_schemes:
            return Check("signature", False, f"{scheme.value} not accepted by this challenge")
        cpk, ppk = refs.keys.get(CLASSICAL_SCHEME), refs.keys.get(scheme)
        if cpk is None or ppk is None:
            return Check("signature", False, "missing enrolled hybrid keys")
        res = hybrid_verify(cpk, ppk, q.body, q.hybrid)
        detail = f"{CLASSICAL_SCHEME.value}+{scheme.value}"
        if not res.ok:
            detail += " failed legs: " + ",".join(res.failed_legs)
        return Check("signature", res.ok, detail)
    return Check("signature", False, "unknown quote type")


def _check_hash_policy(body, challenge, refs, log: Optional[ImaLog], min_bits: int) -> Check:
    if body is None:
        return Check("hash-policy", False, "quote body unreadable")
    problems = []
    if not policy_allows_hash(body.bank_alg, min_bits):
        problems.append(f"bank {body.bank_alg.value} below {min_bits} bits")
    if body.bank_alg is not challenge.bank_alg or body.bank_alg is not refs.bank_alg:
        problems.append(f"bank {body.bank_alg.value} differs from the requested bank")
    if log is not None:
        weak = {e.file_digest.alg.value for e in log.events if not policy_allows_hash(e.file_digest.alg, min_bits)}
        if weak:
            problems.append(f"runtime digests use {sorted(weak)}")
    return Check("hash-policy", not problems, "; ".join(problems))


def _check_replay(body, challenge, refs, evidence: Evidence, log: Optional[ImaLog], log_error: str) -> Check:
    if body is None:
        return Check("log-replay", False, "quote body unreadable")
    if log is None:
        return Check("log-replay", False, log_error)
    if tuple(body.pcr_selection) != tuple(sorted(set(challenge.pcr_selection))):
        return Check("log-replay", False, "quoted PCR selection differs from the challenge")
    bank = body.bank_alg
    if any(d.alg is not bank for _, d in evidence.boot_log):
        return Check("log-replay", False, "boot log uses a different bank algorithm")
    bad = [n for n, e in enumerate(log.events) if template_hash(bank, e.file_digest, e.path) != e.template_hash]
    if bad:
        return Check("log-replay", False, f"template hash mismatch at event {bad[0]}")
    expected = []
    for i in body.pcr_selection:
        acc = Digest.zero(bank)
        if i == BOOT_PCR:
            acc = replay_boot_log(evidence.boot_log, bank)
        if i == refs.ima_pcr:
            acc = replay_log(log, acc, pcr_index=i)
        elif any(e.pcr_index == i for e in log.events):
            acc = replay_log(log, acc, pcr_index=i)
        expected.append(acc)
    if any(e.pcr_index not in body.pcr_selection for e in log.events):
        return Check("log-replay", False, "runtime events extend an unquoted PCR")
    if composite_digest(bank, expected) != body.composite_digest:
        return Check("log-replay", False, "replayed logs do not reproduce the quoted composite")
    return Check("log-replay", True)


def _check_boot(evidence: Evidence, refs: ReferenceValues) -> Check:
    got = [d for _, d in evidence.boot_log]
    want = list(refs.golden_boot)
    if got == want:
        return Check("boot-reference", True)
    if len(got) != len(want):
        return Check("boot-reference", False, f"{len(got)} boot events, expected {len(want)}")
    first = next(i for i, (a, b) in enumerate(zip(got, want)) if a != b)
    name = evidence.boot_log[first][0]
    return Check("boot-reference", False, f"stage {first} ({name}) differs from the golden value")


def _check_runtime(log: Optional[ImaLog], refs: ReferenceValues, log_error: str) -> Check:
    if log is None:
        return Check("runtime-allowlist", False, log_error)
    unknown = [e.path for e in log.events if e.file_digest not in refs.allowed_runtime]
    if unknown:
        return Check("runtime-allowlist", False, f"{len(unknown)} file(s) not allowed, first {unknown[0]!r}")
    return Check("runtime-allowlist", True)


def appraise(
    evidence: Evidence,
    challenge: Challenge,
    refs,
    store: NonceStore,
    min_bits: int = DEFAULT_MIN_BITS,
) -> AttestationResult:
    refs = _resolve_refs(evidence, refs)
    # consume first so every attempt burns the nonce
    status = store.consume(challenge.nonce)
    now = store.clock()
    try:
        body = evidence.quote.parsed()
    except ParseError:
        body = None
    log, log_error = None, ""
    if body is not None:
        try:
            log = parse_log(evidence.ima_log, body.bank_alg)
        except ParseError as exc:
            log_error = f"IMA log does not parse: {exc}"
    else:
        log_error = "quote body unreadable"

    checks = (
        _check_nonce(status, body, challenge),
        _check_signature(evidence, body, challenge, refs),
        _check_hash_policy(body, challenge, refs, log, min_bits),
        _check_replay(body, challenge, refs, evidence, log, log_error),
        _check_boot(evidence, refs),
        _check_runtime(log, refs, log_error),
    )
    assert tuple(c.name for c in checks) == CHECK_NAMES
    verdict = Verdict.TRUSTED if all(c.passed for c in checks) else Verdict.UNTRUSTED
    return AttestationResult(evidence.attester_id, verdict, checks, now)


def reference_from_golden(
    attester_id: str,
    flavor: Flavor,
    keys: Mapping,
    boot_report: BootReport,
    ima_log: ImaLog,
    bank_alg: HashAlgId = HashAlgId.SHA384,
    address: Optional[str] = None,
) -> ReferenceValues:
    """Export reference values from a known-good boot and runtime snapshot."""
    return ReferenceValues(
        attester_id,
        Flavor(flavor),
        {SchemeId.parse(s): pk for s, pk in keys.items()},
        tuple(d for _, d in boot_report.event_log),
        frozenset(e.file_digest for e in ima_log.events),
        HashAlgId.parse(bank_alg),
        address,
    )

