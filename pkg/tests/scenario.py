"""A complete in-process attester used by the attestation and acceptance tests."""

from dataclasses import dataclass

from pqtc.attestation import NonceStore, appraise, attester_respond, make_challenge, reference_from_golden
from pqtc.boot import BootManifest, build_manifest, measured_boot
from pqtc.crypto.hashes import HashAlgId
from pqtc.crypto.schemes import KeyPair, SchemeId, keygen
from pqtc.ima import ImaLog, ImaMeasurer, ImaPolicy
from pqtc.tpm import Flavor, TpmInstance

BANK = HashAlgId.SHA384
POLICY = ImaPolicy(("/usr/*", "/etc/*"))
RUNTIME = [("/usr/bin/init", b"init"), ("/usr/bin/sshd", b"sshd"), ("/etc/passwd", b"root:x:0:0")]
SIX_STAGES = [("crtm", b"CRTM"), ("bl1", b"BL1"), ("bl2", b"BL2"), ("tee", b"TEE"), ("uboot", b"U-Boot"), ("kernel", b"Linux")]


@dataclass
class Attester:
    attester_id: str
    tpm: TpmInstance
    log: ImaLog
    boot: object
    wrapper: KeyPair = None
    manifest: BootManifest = None

    def respond(self, challenge):
        return attester_respond(challenge, self.tpm, self.log, self.boot,
                                [self.wrapper] if self.wrapper else None, self.attester_id)

    def public_keys(self):
        keys = {k.scheme: k.public_key for k in self.tpm.attestation_keys.values()}
        if self.wrapper:
            keys[self.wrapper.scheme] = self.wrapper.public_key
        return keys


def make_manifest(root=None, images=SIX_STAGES):
    root = root or keygen(SchemeId.LMS_H5_W8)
    return build_manifest(root, list(images))


def make_attester(flavor, manifest=None, attester_id=None, files=RUNTIME, ak_schemes=(), like=None):
    """Boot and measure a fresh attester; ``like`` reuses another attester's keys."""
    flavor = Flavor(flavor)
    manifest = manifest or make_manifest()
    if like is not None:
        tpm = TpmInstance(flavor, like.tpm.attestation_keys)
        wrapper = like.wrapper
    else:
        tpm = TpmInstance.create(flavor, ak_schemes)
        wrapper = keygen(SchemeId.ML_DSA_65) if flavor is Flavor.PHYSICAL_HYBRID else None
    boot = measured_boot(manifest, tpm, BANK)
    log = ImaLog(BANK)
    ImaMeasurer(POLICY, tpm, log).measure_many(files)
    return Attester(attester_id or flavor.value, tpm, log, boot, wrapper, manifest)


def enroll(att: Attester):
    return reference_from_golden(att.attester_id, att.tpm.flavor, att.public_keys(), att.boot, att.log, BANK)


def round_trip(att, refs, store=None, schemes=(SchemeId.ML_DSA_65,)):
    store = store or NonceStore()
    ch = make_challenge(store, BANK, (0, 10), schemes)
    ev = att.respond(ch)
    return ch, ev, appraise(ev, ch, {att.attester_id: refs}, store), store


__all__ = [
    "Attester", "make_manifest", "make_attester", "enroll", "round_trip", "BANK", "POLICY",
    "RUNTIME", "SIX_STAGES",
]
