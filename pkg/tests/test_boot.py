from dataclasses import replace

import pytest

from pqtc.boot import (
    BootManifest,
    BootStage,
    Outcome,
    build_manifest,
    measured_boot,
    replay_boot_log,
    rotate_root_key,
    secure_boot,
    sign_root_update,
    sign_stage,
    signed_stage,
)
from pqtc.crypto.hashes import HashAlgId
from pqtc.crypto.schemes import SchemeId, keygen, verify
from pqtc.errors import InvalidUpdateSignature, KeyFormatError, PolicyViolation
from pqtc.tpm import Flavor, TpmInstance

IMAGES = [(f"stage{i}", bytes([i]) * 64) for i in range(6)]


@pytest.fixture(scope="module")
def root():
    return keygen(SchemeId.LMS_H5_W8)


@pytest.fixture(scope="module")
def manifest(root):
    return build_manifest(root, IMAGES)


def tamper(manifest, i):
    stages = list(manifest.stages)
    img = bytearray(stages[i].image)
    img[0] ^= 0xFF
    stages[i] = replace(stages[i], image=bytes(img))
    return replace(manifest, stages=tuple(stages))


def test_clean_boot(manifest):
    report = secure_boot(manifest)
    assert report.outcome is Outcome.BOOTED
    assert report.verified == [n for n, _ in IMAGES]


@pytest.mark.parametrize("i", range(1, 6))
def test_halts_at_tampered_stage(manifest, i):
    report = secure_boot(tamper(manifest, i))
    assert report.outcome is Outcome.HALTED and report.halted_at == i
    assert report.verified == [n for n, _ in IMAGES[:i]]


def test_signature_tamper_halts(manifest):
    stages = list(manifest.stages)
    sig = bytearray(stages[3].signature)
    sig[100] ^= 1
    stages[3] = replace(stages[3], signature=bytes(sig))
    assert secure_boot(replace(manifest, stages=tuple(stages))).halted_at == 3


def test_measured_boot_never_checks_signatures(manifest):
    calls = []

    def counting_verify(*a):
        calls.append(a)
        return verify(*a)

    tpm = TpmInstance.create(Flavor.FTPM_PQ)
    report = measured_boot(tamper(manifest, 2), tpm)
    assert len(report.event_log) == 6 and calls == []
    secure_boot(manifest, counting_verify)
    assert len(calls) == 5


def test_secure_boot_does_not_touch_tpm(manifest):
    tpm = TpmInstance.create(Flavor.FTPM_PQ)
    before = tpm.pcr_record()
    secure_boot(manifest)
    assert tpm.pcr_record() == before


def test_measured_boot_deterministic_and_replayable(manifest):
    a, b = (TpmInstance.create(Flavor.FTPM_PQ) for _ in range(2))
    ra, _ = measured_boot(manifest, a), measured_boot(manifest, b)
    pcr_a = a.pcr_read(HashAlgId.SHA384, [0])[0][1]
    assert pcr_a == b.pcr_read(HashAlgId.SHA384, [0])[0][1]
    assert replay_boot_log(ra.event_log, HashAlgId.SHA384) == pcr_a


def test_measured_boot_policy(manifest):
    with pytest.raises(PolicyViolation):
        measured_boot(manifest, TpmInstance.create(Flavor.FTPM_PQ), HashAlgId.SHA256)
    tpm = TpmInstance.create(Flavor.FTPM_PQ)
    rep = measured_boot(manifest, tpm, HashAlgId.SHA3_512)
    assert all(len(d.value) == 64 for _, d in rep.event_log)


def test_only_stateful_signers(root):
    with pytest.raises(ValueError):
        sign_stage(keygen(SchemeId.ML_DSA_65), b"img")
    with pytest.raises(ValueError):
        BootManifest((BootStage("a", b""), BootStage("b", b"")), SchemeId.ML_DSA_65, b"")


def test_delegated_stage_keys(root):
    stage_key = keygen(SchemeId.LMS_H5_W8)
    s1 = signed_stage(root, "loader", b"L", provides={"os": (stage_key.scheme, stage_key.public_key)})
    s2 = signed_stage(stage_key, "kernel", b"K", signer_pk_ref="os")
    m = BootManifest((BootStage("crtm", b"C"), s1, s2), root.scheme, root.public_key)
    assert secure_boot(m).outcome is Outcome.BOOTED
    # swapping the delegated key invalidates the stage that delivered it
    other = keygen(SchemeId.LMS_H5_W8)
    forged = replace(s1, provides={"os": (other.scheme, other.public_key)})
    assert secure_boot(replace(m, stages=(m.stages[0], forged, s2))).halted_at == 1
    unknown = replace(s2, signer_pk_ref="nobody")
    assert secure_boot(replace(m, stages=(m.stages[0], s1, unknown))).halted_at == 2


def test_manifest_json_roundtrip(tmp_path, manifest):
    manifest.save(tmp_path / "m.json")
    assert BootManifest.load(tmp_path / "m.json") == manifest
    (tmp_path / "bad.json").write_text('{"schema": "x"}')
    with pytest.raises(KeyFormatError):
        BootManifest.load(tmp_path / "bad.json")


def test_root_rotation(manifest, root):
    new_root = keygen(SchemeId.LMS_H5_W8)
    rotated = rotate_root_key(manifest, new_root, sign_root_update(root, new_root))
    assert rotated.manifest_version == 2
    assert secure_boot(rotated).halted_at == 1
    resigned = build_manifest(new_root, IMAGES)
    assert secure_boot(replace(rotated, stages=resigned.stages)).outcome is Outcome.BOOTED
    stranger = keygen(SchemeId.LMS_H5_W8)
    with pytest.raises(InvalidUpdateSignature):
        rotate_root_key(manifest, new_root, sign_root_update(stranger, new_root))
