"""Kubernetes manifests, one set per agent."""

from __future__ import annotations

from typing import Any, Optional

from ..ast_core import AgentDef, Policy
from .common import (
    GENERATOR,
    MANAGED_BY,
    ArtifactEntry,
    ArtifactKind,
    EmissionTarget,
    LiteralStr,
    dumps_yaml,
    entry,
    hyphenate,
    render_policy_json,
    structural_hash,
)
from .openclaw import effective_agent

PRIVATE_RANGES = ("10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16")
MODEL_HUB = "huggingface"
MODEL_HUB_PORT = 443
DEFAULT_IMAGE = "agent-runtime:latest"
DEFAULT_CPU = "1"
DEFAULT_MEMORY = "2Gi"
WORKSPACE_STORAGE = "5Gi"
ANN = "dsl-framework.io"


def _labels(policy: Policy, app: Optional[str] = None) -> dict[str, str]:
    labels = {}
    if app:
        labels["app.kubernetes.io/name"] = app
    labels["app.kubernetes.io/managed-by"] = MANAGED_BY
    labels[f"{ANN}/source-hash"] = policy.source_hash
    return labels


def _meta(policy: Policy, name: str, app: Optional[str] = None, annotations: Optional[dict] = None) -> dict:
    meta: dict[str, Any] = {"name": name, "namespace": policy.namespace, "labels": _labels(policy, app)}
    if annotations:
        meta["annotations"] = annotations
    return meta


def _struct_annotation(policy: Policy) -> str:
    return ",".join(f"{t.name}={structural_hash(t, policy)}" for t in policy.trees.values())


def _endpoints(policy: Policy, agent: Optional[AgentDef]):
    if agent is None:
        return list(policy.networks.values())
    return [n for n in policy.networks.values() if n.skill in agent.skills]


def _network_policy(policy: Policy, app: str, agent: Optional[AgentDef]) -> dict:
    eps = _endpoints(policy, agent)
    model_egress = any(s.model for s in policy.signals.values())
    networks = [n.name for n in eps] + ([MODEL_HUB] if model_egress else [])
    ports = sorted({n.port for n in eps} | ({MODEL_HUB_PORT} if model_egress else set()))
    annotations = {
        f"{ANN}/networks": ",".join(networks),
        f"{ANN}/skills": ",".join(agent.skills if agent else []),
        f"{ANN}/structural-hashes": _struct_annotation(policy),
    }
    egress: list[dict] = [
        {
            "to": [
                {
                    "namespaceSelector": {"matchLabels": {"kubernetes.io/metadata.name": "kube-system"}},
                    "podSelector": {"matchLabels": {"k8s-app": "kube-dns"}},
                }
            ],
            "ports": [{"protocol": "UDP", "port": 53}, {"protocol": "TCP", "port": 53}],
        }
    ]
    if ports:
        egress.append(
            {
                "to": [{"ipBlock": {"cidr": "0.0.0.0/0", "except": list(PRIVATE_RANGES)}}],
                "ports": [{"protocol": "TCP", "port": p} for p in ports],
            }
        )
    return {
        "apiVersion": "networking.k8s.io/v1",
        "kind": "NetworkPolicy",
        "metadata": _meta(policy, f"{app}-egress", annotations=annotations),
        "spec": {
            "podSelector": {"matchLabels": {"app.kubernetes.io/name": app}},
            "policyTypes": ["Egress"],
            "egress": egress,
        },
    }


def _config_map(policy: Policy, app: str) -> dict:
    return {
        "apiVersion": "v1",
        "kind": "ConfigMap",
        "metadata": _meta(policy, f"{app}-routing-policy"),
        "data": {"policy.json": LiteralStr(render_policy_json(policy))},
    }


def _sandbox(policy: Policy, app: str, agent: Optional[AgentDef]) -> dict:
    dep = policy.deploys.get(agent.name) if agent else None
    cpu = (dep.cpu if dep else None) or DEFAULT_CPU
    memory = (dep.memory if dep else None) or DEFAULT_MEMORY
    image = (dep.image if dep else None) or DEFAULT_IMAGE
    replicas = (dep.replicas if dep else None) or 1
    workspace = effective_agent(policy, agent)["workspace"] if agent else None
    annotations = {
        f"{ANN}/policy-configmap": f"{app}-routing-policy",
        f"{ANN}/networkpolicy": f"{app}-egress",
        f"{ANN}/audit-level": "full",
        f"{ANN}/skills": ",".join(agent.skills if agent else []),
        f"{ANN}/permitted-hosts": ",".join(n.host for n in _endpoints(policy, agent)),
    }
    if agent is not None:
        annotations[f"{ANN}/sandbox-mode"] = effective_agent(policy, agent)["sandbox_mode"].value
    mounts: list[dict] = [{"name": "policy-config", "mountPath": "/etc/policy", "readOnly": True}]
    if workspace:
        mounts.append({"name": "agent-workspace", "mountPath": workspace})
    return {
        "apiVersion": "agents.x-k8s.io/v1alpha1",
        "kind": "Sandbox",
        "metadata": _meta(policy, app, app=app, annotations=annotations),
        "spec": {
            "podTemplate": {
                "metadata": {"labels": {"app.kubernetes.io/name": app}},
                "spec": {
                    "containers": [
                        {
                            "name": "agent",
                            "image": image,
                            "resources": {
                                "requests": {"cpu": cpu, "memory": memory},
                                "limits": {"cpu": cpu, "memory": memory},
                            },
                            "env": [
                                {"name": "POLICY_CONFIG", "value": "/etc/policy/policy.json"},
                                {"name": "AUDIT_LEVEL", "value": "full"},
                            ],
                            "volumeMounts": mounts,
                        }
                    ],
                    "volumes": [{"name": "policy-config", "configMap": {"name": f"{app}-routing-policy"}}],
                },
            },
            "volumeClaimTemplates": [
                {
                    "metadata": {"name": "agent-workspace"},
                    "spec": {
                        "accessModes": ["ReadWriteOnce"],
                        "resources": {"requests": {"storage": WORKSPACE_STORAGE}},
                    },
                }
            ],
            "replicas": replicas,
        },
    }


def _doc(policy: Policy, obj: dict) -> str:
    return f"# Generated by {GENERATOR}. Do not edit.\n# source_hash: {policy.source_hash}\n" + dumps_yaml(obj)


def emit_kubernetes(policy: Policy) -> list[ArtifactEntry]:
    """Three manifests per agent; a single set named after the policy when there are no agents."""
    subjects: list[tuple[str, Optional[AgentDef]]] = [(a.id, a) for a in policy.agents.values()]
    if not subjects:
        subjects = [(hyphenate(policy.name), None)]
    out = []
    k = EmissionTarget.KUBERNETES
    for app, agent in subjects:
        out.append(entry(k, f"{app}-networkpolicy.yaml", _doc(policy, _network_policy(policy, app, agent)), ArtifactKind.YAML))
        out.append(entry(k, f"{app}-configmap.yaml", _doc(policy, _config_map(policy, app)), ArtifactKind.YAML))
        out.append(entry(k, f"{app}-sandbox.yaml", _doc(policy, _sandbox(policy, app, agent)), ArtifactKind.YAML))
    return out
