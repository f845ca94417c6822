from __future__ import annotations

import enum
from dataclasses import dataclass, field


class Status(enum.Enum):
    SAT = "SAT"
    UNSAT = "UNSAT"
    UNKNOWN = "UNKNOWN"  # budget exhausted


@dataclass(frozen=True)
class SolveOutcome:
    status: Status
    model: tuple[bool, ...] | None = None  # indexed by variable; slot 0 unused
    core: tuple[int, ...] = ()             # subset of the assumptions, UNSAT only

    def __bool__(self) -> bool:
        return self.status is Status.SAT

    def value(self, lit: int) -> bool:
        v = self.model[abs(lit)] if abs(lit) < len(self.model) else False
        return v if lit > 0 else not v


@dataclass(frozen=True)
class Propagation:
    conflict: bool
    true_lits: frozenset[int] = field(default_factory=frozenset)

    def fixed(self, lit: int) -> bool | None:
        if lit in self.true_lits:
            return True
        if -lit in self.true_lits:
            return False
        return None


def luby(y: float, x: int) -> float:
    """x-th element (0-based) of the Luby sequence scaled by powers of y."""
    size, seq = 1, 0
    while size < x + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != x:
        size = (size - 1) >> 1
        seq -= 1
        x = x % size
    return y ** seq
