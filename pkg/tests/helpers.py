"""Shared test oracles, independent of the implementation paths they check."""

import numpy as np

from mvgc import priority_of


def interval_covers(low, high, value) -> bool:
    return low <= value < high


def tree_depths(limit: int) -> np.ndarray:
    """Explicit-tree oracle: depth of every counter in [2, limit], built by
    recursive minimum-priority splitting (no use of the closed form's
    structure).  Also verifies that every subrange has a unique minimum."""
    prio = np.array([0, 0] + [priority_of(c) for c in range(2, limit + 1)],
                    dtype=np.int64)
    depths = np.zeros(limit + 1, dtype=np.int64)
    stack = [(2, limit, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        if lo > hi:
            continue
        segment = prio[lo:hi + 1]
        root = lo + int(np.argmin(segment))
        m = prio[root]
        assert int((segment == m).sum()) == 1, (lo, hi, m)
        depths[root] = depth
        stack.append((lo, root - 1, depth + 1))
        stack.append((root + 1, hi, depth + 1))
    return depths
