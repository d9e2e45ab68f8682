"""YANG data model and NETCONF ``<edit-config>`` payload."""

from __future__ import annotations

import re
from xml.sax.saxutils import escape

from ..ast_core import Policy, fmt_real, render_condition
from .common import GENERATOR, ArtifactEntry, ArtifactKind, EmissionTarget, entry, hyphenate, structural_hash

MODULE = "vllm-sr-policy"
NAMESPACE = "urn:vllm:semantic-router:policy"
PREFIX = "vsr"
NETCONF_NS = "urn:ietf:params:xml:ns:netconf:base:1.0"
_VERSION_DATE = re.compile(r"v?(\d{4})\.(\d{2})\.(\d{2})\Z")


def revision_date(version: str):
    m = _VERSION_DATE.match(version)
    return f"{m.group(1)}-{m.group(2)}-{m.group(3)}" if m else None


def emit_yang(policy: Policy) -> list[ArtifactEntry]:
    kinds = sorted({s.kind.value for s in policy.signals.values()})
    lines = [
        f"// Generated by {GENERATOR}. Do not edit.",
        f"// source_hash: {policy.source_hash}",
    ]
    for t in policy.trees.values():
        lines.append(f"// structural_hash {t.name}: {structural_hash(t, policy)}")
    lines += [
        f"module {MODULE} {{",
        "  yang-version 1.1;",
        f'  namespace "{NAMESPACE}";',
        f"  prefix {PREFIX};",
        "",
        f'  description "Semantic router policy (source_hash {policy.source_hash}).";',
    ]
    rev = revision_date(policy.version)
    if rev:
        lines.append(f"  revision {rev};")
    lines += ["", "  identity signal-kind;"]
    lines += [f"  identity {k} {{ base signal-kind; }}" for k in kinds]
    lines += [
        "",
        "  container policy {",
        "    leaf version { type string; }",
        "    leaf source-hash {",
        '      type string { length "8"; }',
        "    }",
        "    container signals {",
        "      list signal {",
        '        key "name";',
        "        leaf name { type string; }",
        "        leaf kind {",
        "          type identityref { base signal-kind; }",
        "        }",
        "        leaf threshold {",
        "          type decimal64 {",
        "            fraction-digits 2;",
        '            range "0.00..1.00";',
        "          }",
        "        }",
        "        leaf model { type string; }",
        "        leaf-list candidates { type string; }",
        "        leaf-list pii-types-allowed { type string; }",
        "        leaf-list keywords { type string; }",
        "        leaf role { type string; }",
        "      }",
        "      list signal-group {",
        '        key "name";',
        "        leaf name { type string; }",
        "        leaf-list members {",
        "          type string;",
        "          ordered-by user;",
        "        }",
        "        leaf temperature {",
        "          type decimal64 { fraction-digits 2; }",
        "        }",
        "        leaf tie-break { type string; }",
        "      }",
        "    }",
        "    container routing {",
        "      list decision-tree {",
        '        key "name";',
        "        leaf name { type string; }",
        "        leaf structural-hash {",
        '          type string { length "8"; }',
        "        }",
        "        list branch {",
        '          key "priority";',
        "          ordered-by user;",
        "          leaf priority { type uint8; }",
        "          leaf condition { type string; }",
        "          leaf backend { type string; }",
        "        }",
        "      }",
        "    }",
        "    container network {",
        "      list network-endpoint {",
        '        key "name";',
        "        leaf name { type string; }",
        "        leaf host { type string; }",
        "        leaf port { type uint16; }",
        "        leaf skill { type string; }",
        "      }",
        "    }",
        "  }",
        "}",
    ]
    return [entry(EmissionTarget.YANG, f"{MODULE}.yang", "\n".join(lines) + "\n", ArtifactKind.YANG)]


def netconf_condition(cond) -> str:
    return render_condition(cond, lambda r: hyphenate(r.name))


def _leaf(indent: int, tag: str, value) -> str:
    return f"{' ' * indent}<{tag}>{escape(str(value))}</{tag}>"


def emit_netconf(policy: Policy) -> list[ArtifactEntry]:
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f"<!-- Generated by {GENERATOR}. source_hash: {policy.source_hash} -->",
        f'<rpc xmlns="{NETCONF_NS}" message-id="1">',
        "  <edit-config>",
        "    <target><candidate/></target>",
        "    <config>",
        f'      <policy xmlns="{NAMESPACE}" xmlns:{PREFIX}="{NAMESPACE}">',
        _leaf(8, "version", policy.version),
        _leaf(8, "source-hash", policy.source_hash),
        "        <signals>",
    ]
    for s in policy.signals.values():
        lines.append("          <signal>")
        lines.append(_leaf(12, "name", hyphenate(s.name)))
        lines.append(_leaf(12, "kind", f"{PREFIX}:{s.kind.value}"))
        if s.threshold is not None:
            lines.append(_leaf(12, "threshold", fmt_real(s.threshold)))
        if s.model:
            lines.append(_leaf(12, "model", s.model))
        lines += [_leaf(12, "candidates", c) for c in s.candidates]
        lines += [_leaf(12, "pii-types-allowed", p) for p in s.pii_types_allowed]
        lines += [_leaf(12, "keywords", k) for k in s.keywords]
        if s.role is not None:
            lines.append(_leaf(12, "role", s.role))
        lines.append("          </signal>")
    for g in policy.signal_groups.values():
        lines.append("          <signal-group>")
        lines.append(_leaf(12, "name", hyphenate(g.name)))
        lines += [_leaf(12, "members", hyphenate(m)) for m in g.members]
        lines.append(_leaf(12, "temperature", fmt_real(g.temperature)))
        lines.append(_leaf(12, "tie-break", g.tie_break.value))
        lines.append("          </signal-group>")
    lines += ["        </signals>", "        <routing>"]
    for t in policy.trees.values():
        lines.append("          <decision-tree>")
        lines.append(_leaf(12, "name", hyphenate(t.name)))
        lines.append(_leaf(12, "structural-hash", structural_hash(t, policy)))
        rows = [(netconf_condition(b.condition), b.backend) for b in t.branches] + [("else", t.else_backend)]
        for i, (cond, backend) in enumerate(rows, start=1):
            lines.append("            <branch>")
            lines.append(_leaf(14, "priority", i))
            lines.append(_leaf(14, "condition", cond))
            lines.append(_leaf(14, "backend", hyphenate(backend)))
            lines.append("            </branch>")
        lines.append("          </decision-tree>")
    lines += ["        </routing>", "        <network>"]
    for n in policy.networks.values():
        lines.append("          <network-endpoint>")
        lines.append(_leaf(12, "name", hyphenate(n.name)))
        lines.append(_leaf(12, "host", n.host))
        lines.append(_leaf(12, "port", n.port))
        if n.skill:
            lines.append(_leaf(12, "skill", n.skill))
        lines.append("          </network-endpoint>")
    lines += ["        </network>", "      </policy>", "    </config>", "  </edit-config>", "</rpc>"]
    return [entry(EmissionTarget.NETCONF, "edit-config.xml", "\n".join(lines) + "\n", ArtifactKind.XML)]
