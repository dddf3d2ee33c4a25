"""Counter-based random streams derived from hashable labels.

Every stream is a Philox generator keyed through a SeedSequence built from
the SHA-256 hash of each label, so any (master seed, purpose, indices...)
tuple maps to its own independent stream, stably across processes and
platforms.  Streams are single-consumer: one generator per purpose per run.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _canon(label):
    # lists arrive from JSON round-trips; fold them into tuples so the
    # derived key does not depend on the container type
    if isinstance(label, (list, tuple)):
        return tuple(_canon(item) for item in label)
    return label


def label_code(label) -> int:
    """Stable 64-bit code for a label (int, str, or nested tuple/list)."""
    digest = hashlib.sha256(repr(_canon(label)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream_key(*labels) -> tuple[int, ...]:
    """The tuple of entropy words that identifies the stream for ``labels``."""
    return tuple(label_code(label) for label in labels)


def stream(*labels) -> np.random.Generator:
    """A fresh generator for the stream identified by ``labels``."""
    seq = np.random.SeedSequence(list(stream_key(*labels)))
    return np.random.Generator(np.random.Philox(seed=seq))
