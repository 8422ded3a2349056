"""Parallelism cap shared by all modules.

The environment variable ``MOBOUND_THREADS`` limits the number of worker
threads used for embarrassingly parallel trial loops.  Work is always split
into seed-derived chunks combined in a fixed order, so results do not depend
on the cap.
"""

import os


def thread_cap() -> int:
    raw = os.environ.get("MOBOUND_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError:
        return 1
    return max(1, cap)
