"""Artifact generators for every emission target."""

from .bundle import BundleScan, EmitRefused, HashMismatch, emit_all, parse_targets, scan_bundle, write_bundle
from .common import (
    ALL_TARGETS,
    ArtifactBundle,
    ArtifactEntry,
    ArtifactKind,
    EmissionTarget,
    branch_labels,
    routing_document,
    structural_hash,
)
from .gates import EmitterConfig, emit_protocol_gates, load_emitter_config
from .kubernetes import emit_kubernetes
from .langgraph import Strategy, emit_langgraph
from .openclaw import emit_openclaw, tools_allow
from .routing import emit_routing_yaml
from .yang import emit_netconf, emit_yang

__all__ = [
    "ALL_TARGETS",
    "ArtifactBundle",
    "ArtifactEntry",
    "ArtifactKind",
    "BundleScan",
    "EmissionTarget",
    "EmitRefused",
    "EmitterConfig",
    "HashMismatch",
    "Strategy",
    "branch_labels",
    "emit_all",
    "emit_kubernetes",
    "emit_langgraph",
    "emit_netconf",
    "emit_openclaw",
    "emit_protocol_gates",
    "emit_routing_yaml",
    "emit_yang",
    "load_emitter_config",
    "parse_targets",
    "routing_document",
    "scan_bundle",
    "structural_hash",
    "tools_allow",
    "write_bundle",
]
