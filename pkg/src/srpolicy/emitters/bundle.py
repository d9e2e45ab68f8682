"""Whole-bundle emission with a hash-ubiquity post-check and atomic writes."""

from __future__ import annotations

import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

from ..ast_core import Policy
from ..diagnostics import Diagnostic, DiagnosticError, warning
from ..verifier import VerificationReport, verify
from .common import ALL_TARGETS, ArtifactBundle, ArtifactEntry, EmissionTarget, structural_hash
from .gates import EmitterConfig, emit_protocol_gates
from .kubernetes import emit_kubernetes
from .langgraph import Strategy, emit_langgraph
from .openclaw import emit_openclaw
from .routing import emit_routing_yaml
from .yang import emit_netconf, emit_yang


class EmitRefused(DiagnosticError):
    """Verification reported errors, so nothing was emitted."""


class HashMismatch(AssertionError):
    """An emitted artifact does not carry the bundle's source hash."""


def parse_targets(spec: Union[str, Iterable[str], None]) -> tuple[EmissionTarget, ...]:
    """``"all"``, a comma list or an iterable of names, returned in canonical target order."""
    if spec is None:
        return ALL_TARGETS
    if isinstance(spec, str) and not isinstance(spec, EmissionTarget):
        names = [s.strip() for s in spec.split(",")]
    else:
        items = [spec] if isinstance(spec, EmissionTarget) else list(spec)
        names = [s.value if isinstance(s, EmissionTarget) else str(s) for s in items]
    names = [n for n in names if n]
    if "all" in names:
        return ALL_TARGETS
    wanted = set()
    for n in names:
        try:
            wanted.add(EmissionTarget(n))
        except ValueError:
            raise ValueError(f"unknown target {n!r}; expected one of: all, {', '.join(t.value for t in ALL_TARGETS)}") from None
    return tuple(t for t in ALL_TARGETS if t in wanted)


def _emit_target(policy: Policy, target: EmissionTarget, config: EmitterConfig) -> list[ArtifactEntry]:
    if target is EmissionTarget.ROUTING_YAML:
        return emit_routing_yaml(policy)
    if target is EmissionTarget.LANGGRAPH_A:
        return emit_langgraph(policy, Strategy.A)
    if target is EmissionTarget.LANGGRAPH_B:
        return emit_langgraph(policy, Strategy.B)
    if target is EmissionTarget.OPENCLAW:
        return emit_openclaw(policy)
    if target is EmissionTarget.KUBERNETES:
        return emit_kubernetes(policy)
    if target is EmissionTarget.YANG:
        return emit_yang(policy)
    if target is EmissionTarget.NETCONF:
        return emit_netconf(policy)
    return emit_protocol_gates(policy, config)


def _mapping_diagnostics(policy: Policy, targets: tuple[EmissionTarget, ...]) -> list[Diagnostic]:
    diags = []
    for plugin in policy.plugins:
        diags.append(
            warning(
                "W060_NOT_MAPPED",
                f"PLUGIN {plugin.kind} {plugin.name} has no mapping in any emission target and was skipped",
                plugin.span,
            )
        )
    if EmissionTarget.PROTOCOL_GATES in targets and not policy.decision_trees:
        diags.append(warning("W061_NO_GATE_TREE", "no DECISION_TREE declared, so no protocol gate specs were emitted"))
    return diags


def emit_all(
    policy: Policy,
    targets: Union[str, Iterable[str], None] = None,
    config: Optional[EmitterConfig] = None,
    report: Optional[VerificationReport] = None,
) -> ArtifactBundle:
    """Emit the selected targets (all by default) from one verified policy.

    Raises :class:`EmitRefused` when verification reports errors. Every
    entry is checked for the source hash before the bundle is returned.
    """
    report = report if report is not None else verify(policy)
    if report.errors:
        raise EmitRefused(report.errors)
    chosen = parse_targets(targets)
    config = config or EmitterConfig()
    entries: list[ArtifactEntry] = []
    for target in chosen:
        entries.extend(_emit_target(policy, target, config))
    bundle = ArtifactBundle(
        entries=entries,
        source_hash=policy.source_hash,
        structural_hashes={t.name: structural_hash(t, policy) for t in policy.trees.values()},
        diagnostics=_mapping_diagnostics(policy, chosen),
    )
    missing = [e.path for e in entries if policy.source_hash.encode() not in e.content]
    if missing:
        raise HashMismatch(f"source hash {policy.source_hash} missing from: {', '.join(missing)}")
    return bundle


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bundle(bundle: ArtifactBundle, out_dir: Union[str, Path]) -> list[Path]:
    out = Path(out_dir)
    written = []
    for e in bundle.entries:
        path = out / e.path
        atomic_write(path, e.content)
        written.append(path)
    return written


@dataclass(frozen=True)
class BundleScan:
    expected: str
    consistent: list[str]
    drifted: dict[str, list[str]]

    @property
    def ok(self) -> bool:
        return bool(self.consistent) and not self.drifted


_HASH_LINE = re.compile(r"(?:source[-_]hash)\W{0,4}([0-9a-f]{8})\b", re.IGNORECASE)


def scan_bundle(out_dir: Union[str, Path], expected: str) -> BundleScan:
    """Check every file under ``out_dir`` for the expected hash token.

    A file drifts when the token is absent or when it names another hash in a
    source-hash field.
    """
    root = Path(out_dir)
    consistent, drifted = [], {}
    for path in sorted(p for p in root.rglob("*") if p.is_file() and not p.name.startswith(".")):
        rel = path.relative_to(root).as_posix()
        text = path.read_text(encoding="utf-8", errors="replace")
        others = sorted({h for h in _HASH_LINE.findall(text) if h != expected})
        if expected not in text or others:
            drifted[rel] = others
        else:
            consistent.append(rel)
    return BundleScan(expected, consistent, drifted)
