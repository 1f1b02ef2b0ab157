"""pqtc command line.

Exit codes: 0 success, 1 usage error, 2 I/O, configuration or key error,
3 attestation UNTRUSTED or boot Halted.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .attestation.messages import (
    AttestationResult,
    AttestRequest,
    Enroll,
    ErrorMessage,
    GetResult,
    Verdict,
)
from .attestation.wire import Channel
from .boot import BootManifest, BootStage, Outcome, measured_boot, secure_boot, signed_stage
from .crypto.hashes import HashAlgId
from .crypto.keyfiles import load_private_key, read_public_key, save_private_key, write_public_key
from .crypto.schemes import SchemeId, keygen
from .errors import PqtcError
from .tpm import Flavor, TpmInstance

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_FAIL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=1, sort_keys=True))
    else:
        print(text)


def _named_file(spec: str) -> tuple[str, bytes]:
    name, sep, path = spec.partition("=")
    if not sep or not name:
        raise UsageError(f"expected NAME=FILE, got {spec!r}")
    return name, Path(path).read_bytes()


# -- commands ---------------------------------------------------------------


def cmd_keygen(args) -> int:
    key = keygen(SchemeId.parse(args.scheme))
    save_private_key(args.out, key)
    pub = args.pub or f"{args.out}.pub"
    write_public_key(pub, key)
    _emit(args, {"scheme": key.scheme.value, "private": str(args.out), "public": str(pub)},
          f"{key.scheme.value} key written to {args.out} (public key {pub})")
    return EXIT_OK


def cmd_sign_firmware(args) -> int:
    signer = load_private_key(args.key)
    crtm_name, crtm = _named_file(args.crtm)
    stages = [BootStage(crtm_name, crtm)]
    for spec in args.stage:
        name, image = _named_file(spec)
        stages.append(signed_stage(signer, name, image))
    manifest = BootManifest(tuple(stages), signer.scheme, signer.public_key)
    manifest.save(args.out)
    remaining = signer.private_key.remaining
    _emit(args, {"manifest": str(args.out), "stages": len(stages), "remaining_signatures": remaining},
          f"signed {len(stages) - 1} stage(s) into {args.out}; {remaining} signature(s) left on {args.key}")
    return EXIT_OK


def cmd_secure_boot(args) -> int:
    report = secure_boot(BootManifest.load(args.manifest))
    text = f"{report.outcome.value}: verified {', '.join(report.verified)}"
    if report.outcome is Outcome.HALTED:
        text += f"\nhalted at stage {report.halted_at}: {report.reason}"
    _emit(args, report.to_dict(), text)
    return EXIT_OK if report.outcome is Outcome.BOOTED else EXIT_FAIL


def cmd_measured_boot(args) -> int:
    manifest = BootManifest.load(args.manifest)
    tpm_path = Path(args.tpm)
    tpm = TpmInstance.load(tpm_path) if tpm_path.exists() else TpmInstance.create(Flavor(args.flavor))
    bank = HashAlgId.parse(args.bank)
    report = measured_boot(manifest, tpm, bank)
    tpm.save(tpm_path)
    (pcr0,) = tpm.pcr_read(bank, [0])
    out = report.to_dict()
    out["pcr0"] = str(pcr0[1])
    lines = [f"{name} {d}" for name, d in report.event_log] + [f"PCR0 {pcr0[1]}"]
    _emit(args, out, "\n".join(lines))
    return EXIT_OK


def _agent(path):
    from .services import AttesterAgent, AttesterConfig

    return AttesterAgent(AttesterConfig.load(path))


def cmd_enroll(args) -> int:
    agent = _agent(args.config)
    refs = agent.reference_values(args.address)
    if args.store:
        from .services import ReferenceStore

        ReferenceStore(args.store).enroll(refs)
        where = args.store
    else:
        with Channel.connect(args.verifier) as chan:
            reply = chan.request(Enroll(refs))
        if isinstance(reply, ErrorMessage):
            raise PqtcError(f"{reply.code}: {reply.message}")
        where = args.verifier
    _emit(args, {"enrolled": refs.to_wire(), "where": str(where)},
          f"enrolled {refs.attester_id} ({refs.flavor.value}, {len(refs.golden_boot)} boot and "
          f"{len(refs.allowed_runtime)} runtime reference values) at {where}")
    return EXIT_OK


def _result_exit(args, result: AttestationResult) -> int:
    lines = [f"{result.attester_id}: {result.verdict.value}"]
    lines += [f"  [{'pass' if c.passed else 'FAIL'}] {c.name}" + (f": {c.detail}" if c.detail else "")
              for c in result.checks]
    _emit(args, result.to_wire(), "\n".join(lines))
    return EXIT_OK if result.verdict is Verdict.TRUSTED else EXIT_FAIL


def cmd_attest(args) -> int:
    if args.loopback:
        from .services import ReferenceStore, Verifier, VerifierConfig

        if not (args.config and args.store):
            raise UsageError("--loopback needs --config (attester) and --store (reference store)")
        cfg = VerifierConfig.load(args.verifier_config) if args.verifier_config else VerifierConfig()
        verifier = Verifier(cfg, ReferenceStore(args.store))
        agent = _agent(args.config)
        return _result_exit(args, verifier.attest(agent.config.attester_id, agent.respond))
    if not (args.verifier and args.attester_id):
        raise UsageError("attest needs --verifier and --attester-id, or --loopback")
    with Channel.connect(args.verifier, timeout=args.timeout) as chan:
        reply = chan.request(GetResult(args.attester_id) if args.last else AttestRequest(args.attester_id))
    if isinstance(reply, ErrorMessage):
        raise PqtcError(f"{reply.code}: {reply.message}")
    return _result_exit(args, reply)


def _serve_forever(args, handle) -> int:
    # one line, so supervisors can read the bound address
    print(json.dumps({"listening": handle.address}) if args.json else f"listening on {handle.address}", flush=True)
    try:
        handle.wait()
    except KeyboardInterrupt:
        handle.shutdown()
    return EXIT_OK


def cmd_serve_verifier(args) -> int:
    from .services import Verifier, VerifierConfig

    cfg = VerifierConfig.load(args.config) if args.config else VerifierConfig()
    if args.store:
        cfg.store_path = args.store
    return _serve_forever(args, Verifier(cfg).serve(args.listen))


def cmd_serve_attester(args) -> int:
    return _serve_forever(args, _agent(args.config).serve(args.listen))


def cmd_show_state(args) -> int:
    if args.key:
        try:
            key = load_private_key(args.key)
        except PqtcError:
            key = read_public_key(args.key)
        info = {"scheme": key.scheme.value, "public_key_bytes": len(key.public_key),
                "has_private": key.private_key is not None}
        if key.meta.stateful and key.private_key is not None:
            st = key.private_key
            info.update(next_leaf=st.q, max_leaves=st.max_leaves, remaining=st.remaining)
    elif args.tpm:
        tpm = TpmInstance.load(args.tpm)
        info = {"flavor": tpm.flavor.value, "counter": tpm.monotonic_counter,
                "keys": sorted(s.value for s in tpm.schemes()),
                "pcrs": {a.value: {str(i): d.hex() for i, d in tpm.pcr_read(a, range(24)) if any(d.value)}
                         for a in tpm.banks}}
    elif args.store:
        from .services import ReferenceStore

        store = ReferenceStore(args.store)
        info = {"attesters": {a: {"flavor": r.flavor.value, "address": r.address,
                                  "last_verdict": (store.results[a].verdict.value if a in store.results else None)}
                              for a, r in store.refs.items()}}
    else:
        raise UsageError("show-state needs --key, --tpm or --store")
    _emit(args, info, "\n".join(f"{k}: {v}" for k, v in info.items()))
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="pqtc", description="Post-quantum trusted computing simulator")
    p.add_argument("--version", action="version", version=f"pqtc {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("keygen", parents=[common], help="generate a key pair")
    s.add_argument("--scheme", required=True, help="e.g. ML-DSA-65, ECDSA-P256, LMS-H10-W8")
    s.add_argument("--out", required=True, help="private key file")
    s.add_argument("--pub", help="public key file (default OUT.pub)")
    s.set_defaults(func=cmd_keygen)

    s = sub.add_parser("sign-firmware", parents=[common], help="sign boot stages into a manifest")
    s.add_argument("--key", required=True, help="stateful (LMS) signing key file")
    s.add_argument("--crtm", required=True, metavar="NAME=FILE", help="unsigned first stage")
    s.add_argument("--stage", action="append", default=[], metavar="NAME=FILE", help="signed stage, repeatable")
    s.add_argument("--out", required=True, help="manifest file")
    s.set_defaults(func=cmd_sign_firmware)

    s = sub.add_parser("secure-boot", parents=[common], help="verify a manifest stage by stage")
    s.add_argument("--manifest", required=True)
    s.set_defaults(func=cmd_secure_boot)

    s = sub.add_parser("measured-boot", parents=[common], help="measure a manifest into a TPM state file")
    s.add_argument("--manifest", required=True)
    s.add_argument("--tpm", required=True, help="TPM state file, created if missing")
    s.add_argument("--flavor", default=Flavor.FTPM_PQ.value, choices=[f.value for f in Flavor])
    s.add_argument("--bank", default=HashAlgId.SHA384.value)
    s.set_defaults(func=cmd_measured_boot)

    s = sub.add_parser("enroll", parents=[common], help="export golden values of an attester and enroll it")
    s.add_argument("--config", required=True, help="attester config file")
    dest = s.add_mutually_exclusive_group(required=True)
    dest.add_argument("--store", help="write directly into a reference store file")
    dest.add_argument("--verifier", help="send to a running verifier at host:port")
    s.add_argument("--address", help="agent address the verifier should contact")
    s.set_defaults(func=cmd_enroll)

    s = sub.add_parser("attest", parents=[common], help="run one attestation round")
    s.add_argument("--verifier", help="verifier host:port")
    s.add_argument("--attester-id")
    s.add_argument("--last", action="store_true", help="fetch the last result instead of attesting")
    s.add_argument("--timeout", type=float, default=60.0)
    s.add_argument("--loopback", action="store_true", help="attester and verifier in this process")
    s.add_argument("--config", help="attester config (loopback)")
    s.add_argument("--store", help="reference store (loopback)")
    s.add_argument("--verifier-config", help="verifier config (loopback)")
    s.set_defaults(func=cmd_attest)

    s = sub.add_parser("serve-verifier", parents=[common], help="run the verifier service")
    s.add_argument("--config")
    s.add_argument("--store")
    s.add_argument("--listen")
    s.set_defaults(func=cmd_serve_verifier)

    s = sub.add_parser("serve-attester", parents=[common], help="run the attester agent")
    s.add_argument("--config", required=True)
    s.add_argument("--listen")
    s.set_defaults(func=cmd_serve_attester)

    s = sub.add_parser("show-state", parents=[common], help="inspect a key, TPM state or reference store")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--key")
    g.add_argument("--tpm")
    g.add_argument("--store")
    s.set_defaults(func=cmd_show_state)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pqtc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PqtcError, OSError, ValueError) as exc:
        msg = f"{type(exc).__name__}: {exc}"
        if args.json:
            print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        print(f"pqtc: {msg}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
