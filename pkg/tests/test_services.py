import json
import threading
from dataclasses import replace

import pytest

from pqtc.attestation import AttestRequest, Channel, Enroll, ErrorMessage, GetResult, Verdict
from pqtc.crypto.keyfiles import save_private_key
from pqtc.crypto.schemes import SchemeId, keygen
from pqtc.errors import AddressInUse, ConfigError, KeyLoadFailure, StoreCorrupt
from pqtc.ima import parse_log
from pqtc.services import AttesterAgent, AttesterConfig, ReferenceStore, Verifier, VerifierConfig, serve
from pqtc.tpm import Flavor
from scenario import SIX_STAGES, make_manifest


@pytest.fixture(scope="module")
def manifest_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("fw") / "manifest.json"
    make_manifest(images=SIX_STAGES).save(path)
    return path


def provision(tmp_path, name, flavor, manifest_file, ak_schemes=None):
    base = tmp_path / name
    (base / "watch").mkdir(parents=True)
    (base / "watch" / "app.bin").write_bytes(b"app")
    flavor = Flavor(flavor)
    if ak_schemes is None:
        ak_schemes = [SchemeId.ML_DSA_65] if flavor is Flavor.FTPM_PQ else [SchemeId.ECDSA_P256]
    aks = []
    for i, s in enumerate(ak_schemes):
        save_private_key(base / f"ak{i}.key", keygen(s))
        aks.append(str(base / f"ak{i}.key"))
    wrapper = None
    if flavor is Flavor.PHYSICAL_HYBRID:
        save_private_key(base / "wrap.key", keygen(SchemeId.ML_DSA_65))
        wrapper = str(base / "wrap.key")
    return AttesterConfig(
        attester_id=name, flavor=flavor, state_dir=str(base / "state"), ak_keys=aks,
        wrapper_key=wrapper, watched_dir=str(base / "watch"), manifest=str(manifest_file),
        listen="127.0.0.1:0",
    )


def vcfg(tmp_path):
    return VerifierConfig(listen="127.0.0.1:0", store_path=str(tmp_path / "store.json"))


def call(address, msg):
    with Channel.connect(address, timeout=30) as chan:
        return chan.request(msg)


@pytest.mark.parametrize("flavor", list(Flavor), ids=lambda f: f.value)
def test_socket_round_and_restart(tmp_path, manifest_file, flavor):
    agent = AttesterAgent(provision(tmp_path, "node", flavor, manifest_file))
    with agent.serve() as ah, Verifier(vcfg(tmp_path)).serve() as vh:
        assert "enrolled" in call(vh.address, Enroll(agent.reference_values(ah.address))).detail
        res = call(vh.address, AttestRequest("node"))
        assert res.verdict is Verdict.TRUSTED, res.failed
        assert call(vh.address, GetResult("node")) == res
    # verifier restart: enrollment and last result survive
    with agent.serve(ah.address), Verifier(vcfg(tmp_path)).serve() as vh2:
        assert call(vh2.address, GetResult("node")).verdict is Verdict.TRUSTED
        assert call(vh2.address, AttestRequest("node")).verdict is Verdict.TRUSTED


def test_unknown_attester_over_wire(tmp_path):
    with Verifier(vcfg(tmp_path)).serve() as vh:
        reply = call(vh.address, AttestRequest("ghost"))
        assert isinstance(reply, ErrorMessage) and reply.code == "UnknownAttester"
        assert call(vh.address, GetResult("ghost")).code == "UnknownAttester"


def test_parallel_sessions(tmp_path, manifest_file):
    agents = [AttesterAgent(provision(tmp_path, f"n{i}", f, manifest_file))
              for i, f in enumerate([Flavor.FTPM_PQ, Flavor.PHYSICAL_HYBRID])]
    handles = [a.serve() for a in agents]
    try:
        with Verifier(vcfg(tmp_path)).serve() as vh:
            for a, h in zip(agents, handles):
                call(vh.address, Enroll(a.reference_values(h.address)))
            results = {}

            def run(name):
                results[name] = call(vh.address, AttestRequest(name))

            threads = [threading.Thread(target=run, args=(a.config.attester_id,)) for a in agents]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            assert {n: r.verdict for n, r in results.items()} == {"n0": Verdict.TRUSTED, "n1": Verdict.TRUSTED}
            assert all(r.attester_id == n for n, r in results.items())
    finally:
        for h in handles:
            h.shutdown()


def test_new_file_adds_one_event(tmp_path, manifest_file):
    cfg = provision(tmp_path, "node", Flavor.FTPM_PQ, manifest_file)
    agent = AttesterAgent(cfg)
    verifier = Verifier(vcfg(tmp_path))
    verifier.store.enroll(agent.reference_values())
    first = agent.respond(verifier.challenge())
    (tmp_path / "node" / "watch" / "new.bin").write_bytes(b"new")
    second = agent.respond(verifier.challenge())
    n1, n2 = (len(parse_log(e.ima_log, cfg.bank_alg).events) for e in (first, second))
    assert n2 == n1 + 1
    res = verifier.attest("node", agent.respond)
    assert res.failed == ["runtime-allowlist"]


def test_agent_restart_keeps_replay_consistent(tmp_path, manifest_file):
    cfg = provision(tmp_path, "node", Flavor.PHYSICAL_HYBRID, manifest_file)
    agent = AttesterAgent(cfg)
    verifier = Verifier(vcfg(tmp_path))
    verifier.store.enroll(agent.reference_values())
    assert verifier.attest("node", agent.respond).verdict is Verdict.TRUSTED
    restarted = AttesterAgent(cfg)
    assert restarted.tpm.pcr_record() == agent.tpm.pcr_record()
    assert verifier.attest("node", restarted.respond).verdict is Verdict.TRUSTED


def test_crash_between_log_and_pcr_write_is_not_trusted(tmp_path, manifest_file):
    cfg = provision(tmp_path, "node", Flavor.FTPM_PQ, manifest_file)
    agent = AttesterAgent(cfg)
    verifier = Verifier(vcfg(tmp_path))
    refs = agent.reference_values()
    stale_pcrs = agent.pcr_path.read_bytes()
    (tmp_path / "node" / "watch" / "late.bin").write_bytes(b"late")
    agent.refresh()
    allowed = refs.allowed_runtime | {e.file_digest for e in agent.ima_log.events}
    verifier.store.enroll(replace(refs, allowed_runtime=allowed))
    agent.pcr_path.write_bytes(stale_pcrs)  # PCR write lost, log write kept
    res = verifier.attest("node", AttesterAgent(cfg).respond)
    assert res.verdict is Verdict.UNTRUSTED and "log-replay" in res.failed


def test_verifier_restart_mid_session_is_not_trusted(tmp_path, manifest_file):
    agent = AttesterAgent(provision(tmp_path, "node", Flavor.FTPM_PQ, manifest_file))
    v1 = Verifier(vcfg(tmp_path))
    v1.store.enroll(agent.reference_values())
    ch = v1.challenge()
    ev = agent.respond(ch)
    v2 = Verifier(vcfg(tmp_path))  # outstanding nonces are lost on restart
    assert v2.appraise(ev, ch).failed == ["nonce"]


def test_key_load_failures(tmp_path, manifest_file):
    cfg = provision(tmp_path, "a", Flavor.FTPM_PQ, manifest_file, ak_schemes=[SchemeId.ECDSA_P256])
    with pytest.raises(KeyLoadFailure):
        AttesterAgent(cfg)
    cfg = provision(tmp_path, "b", Flavor.FTPM_PQ, manifest_file)
    cfg.ak_keys = [str(tmp_path / "missing.key")]
    with pytest.raises(KeyLoadFailure):
        AttesterAgent(cfg)
    cfg = provision(tmp_path, "c", Flavor.PHYSICAL_HYBRID, manifest_file, ak_schemes=[SchemeId.ML_DSA_65])
    with pytest.raises(KeyLoadFailure):
        AttesterAgent(cfg)


def test_store_is_strict(tmp_path, manifest_file):
    agent = AttesterAgent(provision(tmp_path, "node", Flavor.FTPM_PQ, manifest_file))
    path = tmp_path / "store.json"
    store = ReferenceStore(path)
    store.enroll(agent.reference_values())
    again = ReferenceStore(path)
    assert again.refs == store.refs
    data = json.loads(path.read_text())
    data["attesters"]["node"]["surprise"] = 1
    path.write_text(json.dumps(data))
    with pytest.raises(StoreCorrupt):
        ReferenceStore(path)
    path.write_text("[]")
    with pytest.raises(StoreCorrupt):
        ReferenceStore(path)
    path.write_text("{")
    with pytest.raises(StoreCorrupt):
        Verifier(VerifierConfig(store_path=str(path)))


def test_address_in_use():
    with serve("127.0.0.1:0", lambda m: m) as h:
        with pytest.raises(AddressInUse):
            serve(h.address, lambda m: m)


def test_config_validation(tmp_path, manifest_file):
    with pytest.raises(ConfigError):
        VerifierConfig(accepted_schemes=[])
    with pytest.raises(ConfigError):
        VerifierConfig(accepted_schemes=["ECDSA-P256"])
    cfg = provision(tmp_path, "node", Flavor.FTPM_PQ, manifest_file)
    cfg.save(tmp_path / "a.json")
    assert AttesterConfig.load(tmp_path / "a.json").to_dict() == cfg.to_dict()
    d = cfg.to_dict()
    d["colour"] = "blue"
    with pytest.raises(ConfigError):
        AttesterConfig.from_dict(d)
    v = VerifierConfig()
    assert VerifierConfig.from_dict(v.to_dict()) == v


def test_garbage_on_the_wire_gets_error_reply():
    import socket

    with serve("127.0.0.1:0", lambda m: m) as h:
        host, port = h.address.split(":")
        s = socket.create_connection((host, int(port)))
        s.sendall(b"\x00\x00\x00\x03abc")
        chan = Channel(s)
        reply = chan.recv()
        chan.close()
        assert isinstance(reply, ErrorMessage) and reply.code == "DecodeError"
