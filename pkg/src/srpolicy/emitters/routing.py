"""Routing configuration YAML."""

from __future__ import annotations

from ..ast_core import Policy
from .common import GENERATOR, ArtifactEntry, ArtifactKind, EmissionTarget, dumps_yaml, entry, routing_document


def emit_routing_yaml(policy: Policy) -> list[ArtifactEntry]:
    header = f"# Generated by {GENERATOR}. Do not edit.\n# source_hash: {policy.source_hash}\n"
    return [entry(EmissionTarget.ROUTING_YAML, "policy.yaml", header + dumps_yaml(routing_document(policy)), ArtifactKind.YAML)]
