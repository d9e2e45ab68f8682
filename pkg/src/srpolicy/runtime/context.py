"""Per-request evaluation context."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping


@dataclass(frozen=True)
class EvaluationContext:
    user_roles: tuple[str, ...] = ()
    channel: Mapping[str, Any] = field(default_factory=dict)
    clock: Callable[[], float] = field(default=time.time, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "user_roles", tuple(str(r) for r in self.user_roles))
