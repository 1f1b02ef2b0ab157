"""Attester agent: owns a simulated TPM, measures a watched directory and
answers verifier challenges with evidence.

State directory layout::

    pcrs.json     PCR registers and quote counter
    boot.json     measured-boot report (event log)
    ima.log       serialized runtime measurement log
"""

from __future__ import annotations

import json
import logging
import os
import threading
from pathlib import Path
from typing import Optional

from ..attestation.messages import Challenge, ErrorMessage, Evidence, ReferenceValues
from ..attestation.protocol import attester_respond, reference_from_golden
from ..boot import BootManifest, BootReport, Outcome, measured_boot
from ..crypto.hybrid import CLASSICAL_SCHEME
from ..crypto.keyfiles import load_private_key
from ..errors import KeyLoadFailure, PqtcError, WrongFlavor
from ..ima import ImaLog, ImaMeasurer, parse_log, serialize_log
from ..lms.state import atomic_write
from ..tpm import Flavor, TpmInstance
from .config import AttesterConfig
from .server import serve

log = logging.getLogger(__name__)


def _load_keys(paths):
    keys = []
    for p in paths:
        try:
            keys.append(load_private_key(p))
        except (OSError, PqtcError, ValueError) as exc:
            raise KeyLoadFailure(f"cannot load key {p}: {exc}") from exc
    return keys


class AttesterAgent:
    def __init__(self, config: AttesterConfig):
        self.config = config
        self.state_dir = Path(config.state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        aks = _load_keys(config.ak_keys)
        self.wrapper = _load_keys([config.wrapper_key])[0] if config.wrapper_key else None
        try:
            self.tpm = TpmInstance(config.flavor, {k.scheme.value: k for k in aks})
        except (WrongFlavor, PqtcError) as exc:
            raise KeyLoadFailure(f"keys do not fit a {config.flavor.value} TPM: {exc}") from exc
        if config.flavor is Flavor.FTPM_PQ and not all(k.meta.quantum_safe for k in aks):
            raise KeyLoadFailure("an ftpm_pq attester holds post-quantum attestation keys only")
        if config.flavor is Flavor.PHYSICAL_HYBRID:
            if self.wrapper is None or not self.wrapper.meta.quantum_safe:
                raise KeyLoadFailure("the hybrid wrapper key must be post-quantum")
        self._session = threading.Lock()  # one attestation at a time
        self._restore()

    # -- persistence ----------------------------------------------------
    @property
    def pcr_path(self) -> Path:
        return self.state_dir / "pcrs.json"

    @property
    def boot_path(self) -> Path:
        return self.state_dir / "boot.json"

    @property
    def log_path(self) -> Path:
        return self.state_dir / "ima.log"

    def _restore(self) -> None:
        bank = self.config.bank_alg
        if self.pcr_path.exists():
            try:
                self.tpm.restore_pcrs(json.loads(self.pcr_path.read_text()))
                self.boot_report = (
                    BootReport.from_dict(json.loads(self.boot_path.read_text()))
                    if self.boot_path.exists() else None
                )
                self.ima_log = parse_log(self.log_path.read_bytes(), bank) if self.log_path.exists() else ImaLog(bank)
            except (OSError, ValueError, PqtcError) as exc:
                raise KeyLoadFailure(f"cannot restore agent state from {self.state_dir}: {exc}") from exc
        else:
            self.ima_log = ImaLog(bank)
            self.boot_report = None
            if self.config.manifest:
                self.boot_report = measured_boot(BootManifest.load(self.config.manifest), self.tpm, bank)
            self._persist()
        self.measurer = ImaMeasurer(self.config.ima_policy, self.tpm, self.ima_log)

    def _persist(self) -> None:
        # log before PCRs: a crash in between leaves a log that fails replay
        # rather than PCRs that silently match a shorter log
        atomic_write(self.log_path, serialize_log(self.ima_log))
        if self.boot_report is not None:
            atomic_write(self.boot_path, json.dumps(self.boot_report.to_dict()).encode())
        atomic_write(self.pcr_path, json.dumps(self.tpm.pcr_record()).encode())

    # -- measurement ----------------------------------------------------
    def watched_files(self):
        root = self.config.watched_dir
        if not root or not os.path.isdir(root):
            return []
        out = []
        for dirpath, dirnames, filenames in os.walk(root):
            dirnames.sort()
            for name in sorted(filenames):
                full = os.path.join(dirpath, name)
                try:
                    with open(full, "rb") as fh:
                        out.append((full, fh.read()))
                except OSError as exc:
                    log.warning("skipping unreadable %s: %s", full, exc)
        return out

    def refresh(self) -> int:
        """Measure new or changed files; returns the number of new events."""
        with self.tpm.lock:
            events = self.measurer.measure_many(self.watched_files())
            if events:
                self._persist()
        return len(events)

    # -- protocol -------------------------------------------------------
    def respond(self, challenge: Challenge) -> Evidence:
        with self._session:
            self.refresh()
            with self.tpm.lock:
                ev = attester_respond(
                    challenge,
                    self.tpm,
                    self.ima_log,
                    self.boot_report,
                    [self.wrapper] if self.wrapper else None,
                    self.config.attester_id,
                )
                self._persist()  # quote counter advanced
            return ev

    def public_keys(self) -> dict:
        keys = {k.scheme: k.public_key for k in self.tpm.attestation_keys.values()}
        if self.wrapper is not None:
            keys[self.wrapper.scheme] = self.wrapper.public_key
        return keys

    def reference_values(self, address: Optional[str] = None) -> ReferenceValues:
        """Golden values from the agent's current, presumed good, state."""
        self.refresh()
        boot = self.boot_report or BootReport(Outcome.BOOTED)
        keys = self.public_keys()
        if self.config.flavor is Flavor.PHYSICAL_HYBRID:
            keys = {s: pk for s, pk in keys.items() if s is CLASSICAL_SCHEME or s.meta.quantum_safe}
        return reference_from_golden(
            self.config.attester_id,
            self.config.flavor,
            keys,
            boot,
            self.ima_log,
            self.config.bank_alg,
            address or self.config.listen,
        )

    def handle(self, message):
        if isinstance(message, Challenge):
            return self.respond(message)
        return ErrorMessage("UnexpectedMessage", f"agent does not handle {type(message).__name__}")

    def serve(self, address: Optional[str] = None):
        return serve(address or self.config.listen, self.handle)
