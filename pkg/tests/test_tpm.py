import hashlib
import struct

import pytest

from pqtc.crypto.hashes import Digest, HashAlgId, digest
from pqtc.crypto.hybrid import hybrid_verify
from pqtc.crypto.schemes import SchemeId, keygen, verify
from pqtc.errors import BankMismatch, IndexOutOfRange, KeyFormatError, ParseError, WrongFlavor
from pqtc.tpm import (
    Flavor,
    QuoteBody,
    TpmInstance,
    selected_indices,
    selection_bitmap,
)

NONCE = bytes(range(32))


@pytest.fixture
def ftpm():
    return TpmInstance.create(Flavor.FTPM_PQ)


@pytest.fixture
def dtpm():
    return TpmInstance.create(Flavor.PHYSICAL_HYBRID)


def test_extend_matches_hashlib(ftpm):
    m = digest(HashAlgId.SHA384, b"stage")
    new = ftpm.pcr_extend(HashAlgId.SHA384, 3, m)
    assert new.value == hashlib.sha384(bytes(48) + m.value).digest()
    again = ftpm.pcr_extend(HashAlgId.SHA384, 3, m)
    assert again.value == hashlib.sha384(new.value + m.value).digest()
    assert ftpm.pcr_read(HashAlgId.SHA384, [3]) == [(3, again)]


def test_extend_errors(ftpm):
    with pytest.raises(IndexOutOfRange):
        ftpm.pcr_extend(HashAlgId.SHA384, 24, Digest.zero(HashAlgId.SHA384))
    with pytest.raises(BankMismatch):
        ftpm.pcr_extend(HashAlgId.SHA384, 0, Digest.zero(HashAlgId.SHA512))
    with pytest.raises(BankMismatch):
        TpmInstance.create(Flavor.FTPM_PQ, banks=[HashAlgId.SHA384]).pcr_extend(
            HashAlgId.SHA512, 0, Digest.zero(HashAlgId.SHA512)
        )


def test_bitmap_layout():
    assert selection_bitmap([0, 10, 23]) == bytes([0b1, 0b100, 0b10000000])
    assert selected_indices(bytes([0b1, 0b100, 0b10000000])) == (0, 10, 23)
    with pytest.raises(IndexOutOfRange):
        selection_bitmap([24])


def test_quote_body_layout(ftpm):
    ftpm.pcr_extend(HashAlgId.SHA384, 0, digest(HashAlgId.SHA384, b"a"))
    q = ftpm.quote_pq(HashAlgId.SHA384, [0, 10], NONCE)
    regs = [r for _, r in ftpm.pcr_read(HashAlgId.SHA384, [0, 10])]
    composite = hashlib.sha384(b"".join(r.value for r in regs)).digest()
    expected = b"PQTC" + bytes([1, HashAlgId.SHA384.tag]) + bytes([1, 4, 0]) + composite + NONCE + struct.pack(">Q", 1)
    assert q.body == expected
    body = QuoteBody.from_bytes(q.body)
    assert body.to_bytes() == q.body and body.counter == 1 and body.pcr_selection == (0, 10)
    assert q.scheme is SchemeId.ML_DSA_65
    assert verify(ftpm.key_for(SchemeId.ML_DSA_65).public_key, q.scheme, q.body, q.signature)


def test_counter_is_monotonic(ftpm):
    counters = [ftpm.quote_pq(HashAlgId.SHA512, [0], NONCE).parsed().counter for _ in range(3)]
    assert counters == [1, 2, 3]


@pytest.mark.parametrize("data", [b"", b"XXXX" + bytes(100), b"PQTC\x01\x02" + bytes(10)])
def test_body_parse_errors(data):
    with pytest.raises(ParseError):
        QuoteBody.from_bytes(data)


def test_flavors_are_enforced(ftpm, dtpm):
    with pytest.raises(WrongFlavor):
        dtpm.quote_pq(HashAlgId.SHA384, [0], NONCE)
    with pytest.raises(WrongFlavor):
        ftpm.quote_hybrid(keygen(SchemeId.ML_DSA_65), HashAlgId.SHA384, [0], NONCE)
    with pytest.raises(WrongFlavor):
        TpmInstance(Flavor.FTPM_PQ, {"ak": keygen(SchemeId.ECDSA_P256)})
    with pytest.raises(WrongFlavor):
        dtpm.quote_hybrid(keygen(SchemeId.ECDSA_P256), HashAlgId.SHA384, [0], NONCE)


def test_stateful_attestation_key_rejected():
    with pytest.raises(KeyFormatError):
        TpmInstance(Flavor.FTPM_PQ, {"ak": keygen(SchemeId.LMS_H5_W8)})


def test_hybrid_quote(dtpm):
    wrapper = keygen(SchemeId.ML_DSA_65)
    q = dtpm.quote_hybrid(wrapper, HashAlgId.SHA384, [0, 10], NONCE)
    ak = dtpm.key_for(SchemeId.ECDSA_P256)
    assert hybrid_verify(ak.public_key, wrapper.public_key, q.body, q.hybrid).ok
    assert q.parsed().flavor is Flavor.PHYSICAL_HYBRID


def test_multiple_pq_keys_and_explicit_scheme():
    tpm = TpmInstance.create(Flavor.FTPM_PQ, [SchemeId.ML_DSA_44, SchemeId.ML_DSA_87])
    assert tpm.quote_pq(HashAlgId.SHA384, [0], NONCE, SchemeId.ML_DSA_87).scheme is SchemeId.ML_DSA_87
    assert tpm.quote_pq(HashAlgId.SHA384, [0], NONCE).scheme is SchemeId.ML_DSA_44


def test_save_load(tmp_path, ftpm):
    ftpm.pcr_extend(HashAlgId.SHA3_512, 7, digest(HashAlgId.SHA3_512, b"x"))
    ftpm.quote_pq(HashAlgId.SHA384, [0], NONCE)
    ftpm.save(tmp_path / "tpm.json")
    back = TpmInstance.load(tmp_path / "tpm.json")
    assert back.monotonic_counter == 1
    assert back.pcr_read(HashAlgId.SHA3_512, [7]) == ftpm.pcr_read(HashAlgId.SHA3_512, [7])
    assert back.key_for(SchemeId.ML_DSA_65).public_key == ftpm.key_for(SchemeId.ML_DSA_65).public_key


def test_pcr_record_restore(ftpm):
    ftpm.pcr_extend(HashAlgId.SHA384, 10, digest(HashAlgId.SHA384, b"x"))
    rec = ftpm.pcr_record()
    fresh = TpmInstance(Flavor.FTPM_PQ, ftpm.attestation_keys)
    fresh.restore_pcrs(rec)
    assert fresh.pcr_read(HashAlgId.SHA384, [10]) == ftpm.pcr_read(HashAlgId.SHA384, [10])
    with pytest.raises(KeyFormatError):
        fresh.restore_pcrs({**rec, "schema": "other"})
