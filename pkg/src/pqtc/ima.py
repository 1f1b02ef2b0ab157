"""User-space model of the Linux Integrity Measurement Architecture.

Measured files are appended to an ordered log and their template hash is
extended into a PCR, so a verifier can replay the log and compare it with a
quoted register. The log line format mirrors ``ima-ng`` but uses its own
template name because every hash here is post-quantum sized::

    10 <template hash> pqtc-ng sha512:<file digest> /usr/bin/foo

Paths are percent-escaped (``%``, whitespace and control bytes) so the
format stays line- and space-delimited and serialization is injective.
"""

from __future__ import annotations

import fnmatch
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .crypto.hashes import (
    DEFAULT_MIN_BITS,
    Digest,
    HashAlgId,
    digest,
    policy_allows_hash,
)
from .errors import ParseError, PolicyMiss, PolicyViolation, UnknownAlgorithm

TEMPLATE = "pqtc-ng"
DEFAULT_PCR = 10


@dataclass(frozen=True)
class ImaPolicy:
    path_patterns: tuple[str, ...]
    measure_alg: HashAlgId = HashAlgId.SHA512
    pcr_index: int = DEFAULT_PCR

    def __post_init__(self):
        object.__setattr__(self, "path_patterns", tuple(self.path_patterns))
        object.__setattr__(self, "measure_alg", HashAlgId.parse(self.measure_alg))
        if not policy_allows_hash(self.measure_alg, DEFAULT_MIN_BITS):
            raise PolicyViolation(
                f"{self.measure_alg.value} is below the {DEFAULT_MIN_BITS}-bit quantum policy"
            )

    def covers(self, path: str) -> bool:
        return any(fnmatch.fnmatchcase(path, pat) for pat in self.path_patterns)

    def to_dict(self) -> dict:
        return {
            "path_patterns": list(self.path_patterns),
            "measure_alg": self.measure_alg.value,
            "pcr_index": self.pcr_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImaPolicy":
        return cls(tuple(d["path_patterns"]), HashAlgId.parse(d["measure_alg"]), int(d["pcr_index"]))


@dataclass(frozen=True)
class ImaEvent:
    pcr_index: int
    template_hash: Digest
    file_digest: Digest
    path: str


@dataclass
class ImaLog:
    bank_alg: HashAlgId
    events: list[ImaEvent] = field(default_factory=list)


def template_hash(bank_alg: HashAlgId, file_digest: Digest, path: str) -> Digest:
    data = (
        file_digest.alg.log_name.encode("ascii")
        + b"\x00"
        + file_digest.value
        + b"\x00"
        + path.encode("utf-8")
    )
    return digest(bank_alg, data)


def make_event(policy: ImaPolicy, bank_alg: HashAlgId, path: str, content: bytes) -> ImaEvent:
    fd = digest(policy.measure_alg, content)
    return ImaEvent(policy.pcr_index, template_hash(bank_alg, fd, path), fd, path)


def measure_file(policy: ImaPolicy, path: str, content: bytes, tpm, log: ImaLog) -> ImaEvent:
    """Measure ``content`` under ``path``, extend the PCR and append to ``log``.

    Extend and append happen under one lock so log order equals extend
    order for a given TPM.
    """
    if not policy_allows_hash(policy.measure_alg, DEFAULT_MIN_BITS) or not policy_allows_hash(
        log.bank_alg, DEFAULT_MIN_BITS
    ):
        raise PolicyViolation("measurement or bank algorithm is below the quantum policy")
    if not policy.covers(path):
        raise PolicyMiss(f"{path} is not covered by the measurement policy")
    event = make_event(policy, log.bank_alg, path, content)
    with tpm.lock:
        tpm.pcr_extend(log.bank_alg, event.pcr_index, event.template_hash)
        log.events.append(event)
    return event


def replay_log(log: ImaLog, initial: Optional[Digest] = None, pcr_index: Optional[int] = None) -> Digest:
    """Left fold of ``H(acc || template_hash)``; optionally only one PCR's events."""
    acc = initial if initial is not None else Digest.zero(log.bank_alg)
    for ev in log.events:
        if pcr_index is None or ev.pcr_index == pcr_index:
            acc = digest(log.bank_alg, acc.value + ev.template_hash.value)
    return acc


def replay_pcrs(log: ImaLog) -> dict[int, Digest]:
    return {i: replay_log(log, pcr_index=i) for i in sorted({e.pcr_index for e in log.events})}


def bad_templates(log: ImaLog) -> list[int]:
    """Indices of events whose stored template hash does not recompute."""
    return [
        n
        for n, ev in enumerate(log.events)
        if template_hash(log.bank_alg, ev.file_digest, ev.path) != ev.template_hash
    ]


# -- serialization --------------------------------------------------------

_ESCAPE = {ord("%"), ord(" "), 0x7F} | set(range(0x20))


def escape_path(path: str) -> str:
    out = []
    for b in path.encode("utf-8"):
        out.append(f"%{b:02x}" if b in _ESCAPE else chr(b))
    return bytes("".join(out), "latin-1").decode("utf-8")


def unescape_path(text: str) -> str:
    raw = bytearray()
    data = text.encode("utf-8")
    i = 0
    while i < len(data):
        if data[i] == ord("%"):
            h = data[i + 1 : i + 3]
            if len(h) != 2 or not re.fullmatch(rb"[0-9a-f]{2}", h):
                raise ValueError("bad percent escape")
            raw.append(int(h, 16))
            i += 3
        else:
            raw.append(data[i])
            i += 1
    return raw.decode("utf-8")


def serialize_log(log: ImaLog) -> bytes:
    lines = []
    for ev in log.events:
        lines.append(
            f"{ev.pcr_index} {ev.template_hash.hex()} {TEMPLATE} "
            f"{ev.file_digest.alg.log_name}:{ev.file_digest.hex()} {escape_path(ev.path)}\n"
        )
    return "".join(lines).encode("utf-8")


_LINE = re.compile(
    r"(0|[1-9][0-9]?) ([0-9a-f]+) " + re.escape(TEMPLATE) + r" ([a-z0-9-]+):([0-9a-f]+) ([^ \n]+)"
)


def parse_log(data: bytes, bank_alg: HashAlgId = HashAlgId.SHA384) -> ImaLog:
    """Exact inverse of :func:`serialize_log`; non-canonical input is rejected."""
    bank_alg = HashAlgId.parse(bank_alg)
    log = ImaLog(bank_alg)
    if not data:
        return log
    try:
        text = bytes(data).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"log is not UTF-8: {exc}") from None
    if not text.endswith("\n"):
        raise ParseError("missing final newline", text.count("\n") + 1)
    for lineno, line in enumerate(text[:-1].split("\n"), start=1):
        m = _LINE.fullmatch(line)
        if not m:
            raise ParseError("malformed event line", lineno)
        pcr, th, alg_name, fd, path = m.groups()
        try:
            alg = HashAlgId.parse(alg_name)
            if alg.log_name != alg_name:
                raise UnknownAlgorithm(alg_name)
            event = ImaEvent(
                int(pcr),
                Digest(bank_alg, bytes.fromhex(th)),
                Digest(alg, bytes.fromhex(fd)),
                unescape_path(path),
            )
        except (ValueError, UnknownAlgorithm) as exc:
            raise ParseError(str(exc), lineno) from None
        if escape_path(event.path) != path or int(pcr) > 23:
            raise ParseError("non-canonical event line", lineno)
        log.events.append(event)
    return log


class ImaMeasurer:
    """Measurement pipeline bound to one TPM and log; remembers what it saw.

    Files are re-measured only when their content changes, as the kernel
    does for an unchanged inode.
    """

    def __init__(self, policy: ImaPolicy, tpm, log: ImaLog):
        self.policy = policy
        self.tpm = tpm
        self.log = log
        self._seen = {ev.path: ev.file_digest for ev in log.events}

    def measure(self, path: str, content: bytes) -> Optional[ImaEvent]:
        fd = digest(self.policy.measure_alg, content)
        if self._seen.get(path) == fd:
            return None
        ev = measure_file(self.policy, path, content, self.tpm, self.log)
        self._seen[path] = ev.file_digest
        return ev

    def measure_many(self, files: Iterable[tuple[str, bytes]]) -> list[ImaEvent]:
        out = []
        for path, content in files:
            if self.policy.covers(path):
                ev = self.measure(path, content)
                if ev is not None:
                    out.append(ev)
        return out
