import random
import threading
from dataclasses import replace

import pytest

from pqtc.attestation import (
    CHECK_NAMES,
    Ack,
    AttestationResult,
    AttestRequest,
    Enroll,
    ErrorMessage,
    Evidence,
    GetResult,
    NonceStatus,
    NonceStore,
    Verdict,
    appraise,
    decode_frame,
    encode_frame,
    make_challenge,
)
from pqtc.attestation.messages import ReferenceValues
from pqtc.crypto.hashes import HashAlgId
from pqtc.crypto.schemes import SchemeId
from pqtc.errors import DecodeError, EntropyFailure, NoCommonScheme, UnknownAttester
from pqtc.tpm import Flavor, HybridQuote, SignedQuote
from scenario import RUNTIME, enroll, make_attester, make_manifest, round_trip


@pytest.fixture(scope="module")
def manifest():
    return make_manifest()


@pytest.fixture(scope="module", params=list(Flavor), ids=lambda f: f.value)
def setup(request, manifest):
    att = make_attester(request.param, manifest)
    return att, enroll(att)


class FakeClock:
    def __init__(self):
        self.now = 1000.0

    def __call__(self):
        return self.now


def test_nonce_store_lifecycle():
    clock = FakeClock()
    store = NonceStore(expiry=120, clock=clock)
    store.register(b"a" * 32)
    store.register(b"b" * 32)
    assert store.consume(b"a" * 32) is NonceStatus.OK
    assert store.consume(b"a" * 32) is NonceStatus.USED
    assert store.consume(b"c" * 32) is NonceStatus.UNKNOWN
    clock.now += 121
    assert store.consume(b"b" * 32) is NonceStatus.EXPIRED
    with pytest.raises(ValueError):
        store.register(b"a" * 32)


def test_challenges_are_unique():
    store = NonceStore()
    nonces = {make_challenge(store).nonce for _ in range(10_000)}
    assert len(nonces) == 10_000 == len(store)


def test_challenge_echo_and_preconditions():
    store = NonceStore()
    ch = make_challenge(store, HashAlgId.SHA512, (0, 7, 10), (SchemeId.ML_DSA_87,))
    assert (ch.bank_alg, ch.pcr_selection, ch.accepted_schemes) == (HashAlgId.SHA512, (0, 7, 10), (SchemeId.ML_DSA_87,))
    with pytest.raises(ValueError):
        make_challenge(store, schemes=())
    with pytest.raises(EntropyFailure):
        make_challenge(store, randomness=lambda n: b"")

    def broken(n):
        raise OSError("no entropy")

    with pytest.raises(EntropyFailure):
        make_challenge(store, randomness=broken)


def test_consistent_evidence_is_trusted(setup):
    att, refs = setup
    _, ev, res, _ = round_trip(att, refs)
    assert res.verdict is Verdict.TRUSTED
    assert tuple(c.name for c in res.checks) == CHECK_NAMES
    expected = SignedQuote if att.tpm.flavor is Flavor.FTPM_PQ else HybridQuote
    assert isinstance(ev.quote, expected)


def test_resubmission_fails_nonce(setup):
    att, refs = setup
    ch, ev, res, store = round_trip(att, refs)
    again = appraise(ev, ch, {att.attester_id: refs}, store)
    assert again.verdict is Verdict.UNTRUSTED and again.failed == ["nonce"]


def test_evidence_for_other_challenge(setup):
    att, refs = setup
    store = NonceStore()
    ch1, ch2 = make_challenge(store), make_challenge(store)
    ev = att.respond(ch1)
    res = appraise(ev, ch2, {att.attester_id: refs}, store)
    assert res.failed == ["nonce"]


def test_expired_nonce(setup):
    att, refs = setup
    clock = FakeClock()
    store = NonceStore(clock=clock)
    ch = make_challenge(store)
    ev = att.respond(ch)
    clock.now += 500
    assert appraise(ev, ch, {att.attester_id: refs}, store).failed == ["nonce"]


def test_runtime_outside_allowlist_reports_all_checks(setup, manifest):
    att, refs = setup
    rogue = make_attester(att.tpm.flavor, manifest, att.attester_id,
                          RUNTIME + [("/usr/bin/miner", b"evil")], like=att)
    _, _, res, _ = round_trip(rogue, refs)
    assert res.verdict is Verdict.UNTRUSTED
    assert res.failed == ["runtime-allowlist"]
    assert len(res.checks) == 6


def test_tampered_boot_stage_fails_boot_reference(setup, manifest):
    att, refs = setup
    stages = list(manifest.stages)
    stages[2] = replace(stages[2], image=b"patched")
    bad = make_attester(att.tpm.flavor, replace(manifest, stages=tuple(stages)), att.attester_id, like=att)
    _, _, res, _ = round_trip(bad, refs)
    assert res.failed == ["boot-reference"]
    assert "bl2" in res.check("boot-reference").detail


def test_log_line_dropped_fails_replay(setup):
    att, refs = setup
    store = NonceStore()
    ch = make_challenge(store)
    ev = att.respond(ch)
    lines = ev.ima_log.split(b"\n")
    shortened = replace(ev, ima_log=b"\n".join(lines[1:]))
    res = appraise(shortened, ch, {att.attester_id: refs}, store)
    assert res.verdict is Verdict.UNTRUSTED and "log-replay" in res.failed


def test_weak_bank_fails_hash_policy(setup):
    att, refs = setup
    store = NonceStore()
    ch = make_challenge(store, HashAlgId.SHA256)
    ev = att.respond(ch)
    res = appraise(ev, ch, {att.attester_id: refs}, store)
    assert "hash-policy" in res.failed and res.verdict is Verdict.UNTRUSTED


def test_unknown_attester(setup):
    att, refs = setup
    store = NonceStore()
    ch = make_challenge(store)
    ev = att.respond(ch)
    with pytest.raises(UnknownAttester):
        appraise(replace(ev, attester_id="ghost"), ch, {att.attester_id: refs}, store)


def test_wrong_enrolled_key(setup, manifest):
    att, refs = setup
    other = make_attester(att.tpm.flavor, manifest, att.attester_id)
    _, _, res, _ = round_trip(other, refs)
    assert "signature" in res.failed


def test_agility_negotiation(manifest):
    att = make_attester(Flavor.FTPM_PQ, manifest, ak_schemes=[SchemeId.ML_DSA_44, SchemeId.ML_DSA_87])
    refs = enroll(att)
    for accepted, expected in [
        ((SchemeId.ML_DSA_87, SchemeId.ML_DSA_44), SchemeId.ML_DSA_87),
        ((SchemeId.FN_DSA_512, SchemeId.ML_DSA_44), SchemeId.ML_DSA_44),
    ]:
        _, ev, res, _ = round_trip(att, refs, schemes=accepted)
        assert ev.quote.scheme is expected and res.verdict is Verdict.TRUSTED
    with pytest.raises(NoCommonScheme):
        att.respond(make_challenge(NonceStore(), schemes=(SchemeId.FN_DSA_512,)))
    with pytest.raises(NoCommonScheme):
        att.respond(make_challenge(NonceStore(), schemes=(SchemeId.ML_DSA_65,)))


def test_enrollment_invariants(setup):
    att, refs = setup
    with pytest.raises(ValueError):
        replace(refs, flavor=Flavor.FTPM_PQ, keys={SchemeId.ECDSA_P256: b"x"})
    with pytest.raises(ValueError):
        replace(refs, flavor=Flavor.PHYSICAL_HYBRID, keys={SchemeId.ML_DSA_65: b"x"})


def test_concurrent_duplicates_single_success(setup):
    att, refs = setup
    store = NonceStore()
    ch = make_challenge(store)
    ev = att.respond(ch)
    results, barrier = [], threading.Barrier(16)

    def worker():
        barrier.wait()
        results.append(appraise(ev, ch, {att.attester_id: refs}, store))

    threads = [threading.Thread(target=worker) for _ in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sum(r.verdict is Verdict.TRUSTED for r in results) == 1
    assert all(r.failed == ["nonce"] for r in results if r.verdict is Verdict.UNTRUSTED)


# -- wire ------------------------------------------------------------------


def test_frames_round_trip(setup):
    att, refs = setup
    ch, ev, res, _ = round_trip(att, refs)
    for msg in [AttestRequest("n1"), ch, ev, res, Enroll(refs), GetResult("n1"), Ack("ok"), ErrorMessage("E", "m")]:
        frame = encode_frame(msg)
        back = decode_frame(frame)
        assert back == msg
        assert encode_frame(back) == frame


def test_frame_bounds():
    frame = encode_frame(AttestRequest("x"))
    with pytest.raises(DecodeError):
        decode_frame(frame[:-1])
    with pytest.raises(DecodeError):
        decode_frame(frame[:3])
    with pytest.raises(DecodeError):
        decode_frame((2 << 20).to_bytes(4, "big") + b"{}")
    with pytest.raises(DecodeError):
        decode_frame(encode_frame(AttestRequest("x"), max_size=100), max_size=10)
    body = b'{"v":1,"type":"launch-missiles"}'
    with pytest.raises(DecodeError):
        decode_frame(len(body).to_bytes(4, "big") + body)
    body = b'{"v":2,"type":"attest-request","attester_id":"x"}'
    with pytest.raises(DecodeError):
        decode_frame(len(body).to_bytes(4, "big") + body)
    body = b'{"v":1,"type":"challenge","nonce":"!!"}'
    with pytest.raises(DecodeError):
        decode_frame(len(body).to_bytes(4, "big") + body)
    with pytest.raises(DecodeError):
        decode_frame(b"\x00\x00\x00\x02\xff\xfe")


def test_random_frame_corruption_never_surfaces_partial_messages(setup):
    att, refs = setup
    ch, ev, res, _ = round_trip(att, refs)
    frame = encode_frame(ev)
    rng = random.Random(7)
    for _ in range(200):
        data = bytearray(frame)
        data[rng.randrange(len(data))] ^= 1 << rng.randrange(8)
        try:
            msg = decode_frame(bytes(data))
        except DecodeError:
            continue
        assert isinstance(msg, Evidence)


def test_reference_values_strict_parse(setup):
    _, refs = setup
    wire = refs.to_wire()
    assert ReferenceValues.from_wire(wire, strict=True) == refs
    with pytest.raises(ValueError):
        ReferenceValues.from_wire({**wire, "extra": 1}, strict=True)


def test_result_wire_roundtrip():
    r = AttestationResult("a", Verdict.UNTRUSTED, (), 5.0)
    assert AttestationResult.from_wire(r.to_wire()) == r
