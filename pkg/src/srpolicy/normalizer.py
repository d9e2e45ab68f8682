"""Signal-group math: temperature-scaled softmax and argmax-gated firing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

from .ast_core import SignalGroup, TieBreak


class MemberMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ScoreVector:
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple((str(n), float(s)) for n, s in self.entries))
        for name, s in self.entries:
            if not math.isfinite(s):
                raise ValueError(f"score for {name} is not finite")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.entries)

    @property
    def scores(self) -> tuple[float, ...]:
        return tuple(s for _, s in self.entries)


@dataclass(frozen=True)
class NormalizedScores:
    entries: tuple[tuple[str, float], ...]

    def as_dict(self) -> dict[str, float]:
        return dict(self.entries)

    @property
    def scores(self) -> tuple[float, ...]:
        return tuple(s for _, s in self.entries)


ScoresLike = Union[ScoreVector, Mapping[str, float], Sequence[tuple[str, float]]]


def _as_vector(scores: ScoresLike) -> ScoreVector:
    if isinstance(scores, ScoreVector):
        return scores
    if isinstance(scores, Mapping):
        return ScoreVector(tuple(scores.items()))
    return ScoreVector(tuple(scores))


def softmax_values(raw: Sequence[float], temperature: float) -> list[float]:
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    if not raw:
        raise ValueError("softmax needs at least one score")
    top = max(raw)
    exps = [math.exp((r - top) / temperature) for r in raw]
    total = math.fsum(exps)
    return [e / total for e in exps]


def softmax(scores: ScoresLike, temperature: float) -> NormalizedScores:
    """exp(raw_i / tau) / sum_j exp(raw_j / tau), max-subtracted, order preserved."""
    vec = _as_vector(scores)
    return NormalizedScores(tuple(zip(vec.names, softmax_values(vec.scores, temperature))))


def _ordered_raw(group: SignalGroup, raw: ScoresLike) -> list[float]:
    vec = _as_vector(raw)
    by_name = dict(vec.entries)
    if len(by_name) != len(vec.entries) or set(by_name) != set(group.members):
        raise MemberMismatch(
            f"scores for {sorted(by_name)} do not match members {list(group.members)} of group {group.name}"
        )
    return [by_name[m] for m in group.members]


def group_fire(
    group: SignalGroup,
    raw: ScoresLike,
    signal_thresholds: Mapping[str, float],
) -> Optional[str]:
    """Return the single member that fires, or None.

    The argmax member fires when its normalized score clears the group gate
    (1/k unless the group declares its own threshold) and its raw score
    clears the member's own threshold. An exact tie at the maximum fires
    nothing unless the group uses ``tie_break: priority_order``, in which
    case the earliest declared tied member is taken and the gate becomes >=.
    """
    scores = _ordered_raw(group, raw)
    normalized = softmax_values(scores, group.temperature)
    top = max(scores)
    tied = [i for i, s in enumerate(scores) if s == top]
    inclusive = False
    if len(tied) > 1:
        if group.tie_break is TieBreak.NONE:
            return None
        inclusive = True
    idx = tied[0]
    name = group.members[idx]
    gate = group.gate
    n = normalized[idx]
    if not (n >= gate if inclusive else n > gate):
        return None
    if not scores[idx] > signal_thresholds[name]:
        return None
    return name


def argmax(values: Iterable[float]) -> int:
    vals = list(values)
    return max(range(len(vals)), key=lambda i: (vals[i], -i))
