"""Process-wide work counters used to check the expensive/cheap split.

Counting is always on; it is a dict increment under a lock and costs nothing
next to the work being counted.
"""

from __future__ import annotations

import threading
from collections import Counter

_lock = threading.Lock()
_counts: Counter = Counter()


def count(name: str, n: int = 1) -> None:
    with _lock:
        _counts[name] += n


def reset() -> None:
    with _lock:
        _counts.clear()


def snapshot() -> dict[str, int]:
    with _lock:
        return dict(_counts)
