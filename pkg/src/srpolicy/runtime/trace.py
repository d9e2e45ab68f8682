"""Hash-chained audit trace entries and their NDJSON persistence."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Optional, Sequence, Union

FIELDS = (
    "ts",
    "policy_version",
    "source_hash",
    "tree",
    "branch",
    "branch_idx",
    "signals",
    "thresholds_crossed",
    "prev_hash",
)


class ChainBreak(ValueError):
    def __init__(self, index: int, expected: Optional[str], found: Optional[str]) -> None:
        self.index = index
        self.expected = expected
        self.found = found
        super().__init__(f"entry {index}: prev_hash {found!r} does not match expected {expected!r}")


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class AuditTraceEntry:
    ts: float
    policy_version: str
    source_hash: str
    tree: str
    branch: str
    branch_idx: int
    signals: Mapping[str, Union[float, bool]] = field(default_factory=dict)
    thresholds_crossed: Mapping[str, str] = field(default_factory=dict)
    prev_hash: Optional[str] = None

    def to_dict(self, include_prev: bool = True) -> dict[str, Any]:
        d = {
            "ts": self.ts,
            "policy_version": self.policy_version,
            "source_hash": self.source_hash,
            "tree": self.tree,
            "branch": self.branch,
            "branch_idx": self.branch_idx,
            "signals": dict(self.signals),
            "thresholds_crossed": dict(self.thresholds_crossed),
        }
        if include_prev:
            d["prev_hash"] = self.prev_hash
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AuditTraceEntry":
        if not isinstance(d, Mapping) or set(d) != set(FIELDS):
            raise TraceFormatError(f"trace entry must have exactly the fields {', '.join(FIELDS)}")
        try:
            entry = cls(
                ts=d["ts"],
                policy_version=d["policy_version"],
                source_hash=d["source_hash"],
                tree=d["tree"],
                branch=d["branch"],
                branch_idx=d["branch_idx"],
                signals=d["signals"],
                thresholds_crossed=d["thresholds_crossed"],
                prev_hash=d["prev_hash"],
            )
        except (TypeError, KeyError) as exc:
            raise TraceFormatError(str(exc)) from None
        _check_types(entry)
        return entry


def _check_types(e: AuditTraceEntry) -> None:
    ok = (
        isinstance(e.ts, (int, float))
        and not isinstance(e.ts, bool)
        and math.isfinite(e.ts)
        and all(isinstance(v, str) for v in (e.policy_version, e.source_hash, e.tree, e.branch))
        and isinstance(e.branch_idx, int)
        and not isinstance(e.branch_idx, bool)
        and isinstance(e.signals, Mapping)
        and isinstance(e.thresholds_crossed, Mapping)
        and (e.prev_hash is None or isinstance(e.prev_hash, str))
    )
    if not ok:
        raise TraceFormatError("trace entry has a field of the wrong type")


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def entry_digest(entry: AuditTraceEntry) -> str:
    """sha256 over the canonical serialization of the entry with prev_hash excluded."""
    return hashlib.sha256(canonical_json(entry.to_dict(include_prev=False)).encode("utf-8")).hexdigest()


def chain(entry: AuditTraceEntry, prev: Optional[AuditTraceEntry]) -> AuditTraceEntry:
    """The entry with ``prev_hash`` linked to ``prev`` (cleared when there is none)."""
    return replace(entry, prev_hash=entry_digest(prev) if prev is not None else None)


def append_trace(log: Sequence[AuditTraceEntry], entry: AuditTraceEntry) -> list[AuditTraceEntry]:
    """Return a new log with ``entry`` appended; raises :class:`ChainBreak` on a bad link."""
    expected = entry_digest(log[-1]) if log else None
    if entry.prev_hash != expected:
        raise ChainBreak(len(log), expected, entry.prev_hash)
    return [*log, entry]


@dataclass(frozen=True)
class ChainVerdict:
    ok: bool
    break_index: Optional[int] = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok

    def __iter__(self) -> Iterator[Any]:
        return iter((self.ok, self.break_index))


def verify_chain(log: Sequence[AuditTraceEntry]) -> ChainVerdict:
    """True iff every entry's prev_hash equals the digest of its predecessor."""
    for i, e in enumerate(log):
        expected = entry_digest(log[i - 1]) if i else None
        if e.prev_hash != expected:
            return ChainVerdict(False, i, f"prev_hash of entry {i} does not match entry {i - 1}" if i else "first entry must not carry prev_hash")
    return ChainVerdict(True)


def dumps_line(entry: AuditTraceEntry) -> str:
    return canonical_json(entry.to_dict())


def verify_lines(lines: Iterable[Union[str, bytes]]) -> ChainVerdict:
    """Verify a persisted log line by line.

    A line that is not the canonical serialization of a valid entry breaks
    the chain at that line.
    """
    entries: list[AuditTraceEntry] = []
    for i, raw in enumerate(lines):
        try:
            text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
            text = text.rstrip("\n")
            entry = AuditTraceEntry.from_dict(json.loads(text))
        except (UnicodeDecodeError, ValueError) as exc:
            return ChainVerdict(False, i, f"line {i} is not a valid trace entry: {exc}")
        if dumps_line(entry) != text:
            return ChainVerdict(False, i, f"line {i} is not in canonical form")
        expected = entry_digest(entries[-1]) if entries else None
        if entry.prev_hash != expected:
            return ChainVerdict(False, i, f"prev_hash of entry {i} does not match entry {i - 1}" if i else "first entry must not carry prev_hash")
        entries.append(entry)
    return ChainVerdict(True)


def write_ndjson(log: Iterable[AuditTraceEntry], path: Union[str, Path]) -> None:
    Path(path).write_text("".join(dumps_line(e) + "\n" for e in log), encoding="utf-8")


def read_ndjson(path: Union[str, Path]) -> list[AuditTraceEntry]:
    out = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if line.strip():
            try:
                out.append(AuditTraceEntry.from_dict(json.loads(line)))
            except ValueError as exc:
                raise TraceFormatError(f"line {i + 1}: {exc}") from None
    return out
