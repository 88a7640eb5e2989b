"""Event stores: per-handle multisets of emitted messages.

Comparison of emitted events (and the emits conditions of specifications)
is phrased in terms of multiset inclusion per event handle.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field


@dataclass
class EventStore:
    # handle guid -> multiset of (frozen) messages
    handles: dict[int, Counter] = field(default_factory=dict)

    def copy(self) -> "EventStore":
        return EventStore({h: Counter(c) for h, c in self.handles.items()})

    def extend(self, handle: int, msg) -> None:
        self.handles.setdefault(handle, Counter())[msg] += 1

    def count(self, handle: int, msg) -> int:
        return self.handles.get(handle, Counter())[msg]

    def includes(self, other: "EventStore") -> bool:
        """True if every message of `other` occurs here at least as often."""
        for h, c in other.handles.items():
            mine = self.handles.get(h, Counter())
            for m, n in c.items():
                if mine[m] < n:
                    return False
        return True

    def subtract(self, other: "EventStore") -> "EventStore":
        """Per-handle multiset difference (clipped at zero)."""
        out = EventStore()
        for h, c in self.handles.items():
            d = c - other.handles.get(h, Counter())
            if d:
                out.handles[h] = d
        return out

    def union(self, other: "EventStore") -> "EventStore":
        out = self.copy()
        for h, c in other.handles.items():
            mine = out.handles.setdefault(h, Counter())
            mine.update(c)
        return out

    def is_empty(self) -> bool:
        return not any(c for c in self.handles.values())

    def total(self) -> int:
        return sum(sum(c.values()) for c in self.handles.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStore):
            return NotImplemented
        return self.includes(other) and other.includes(self)

    def items(self):
        for h, c in sorted(self.handles.items()):
            for m, n in c.items():
                yield h, m, n


def singleton(handle: int, msg) -> EventStore:
    es = EventStore()
    es.extend(handle, msg)
    return es
