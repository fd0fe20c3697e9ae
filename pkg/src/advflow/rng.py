"""Deterministic random-stream derivation.

Every stochastic component draws from its own named substream so that
adding or removing one consumer never shifts the draws seen by another.
A substream is addressed by a master seed plus a scope path of strings
and integers, e.g. ``stream(seed, "flow-init", example_index)``.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Scope labels used by the attack and training code. Centralised here so
# callers and tests spell them identically.
FLOW_INIT = "flow-init"
DELTA_INIT = "delta-init"
TARGET_LABEL = "target-label"


def _scope_key(scope: tuple) -> list[int]:
    """Hash a scope path into spawn-key integers for SeedSequence."""
    h = hashlib.sha256()
    for part in scope:
        if isinstance(part, (int, np.integer)):
            h.update(b"i" + int(part).to_bytes(16, "little", signed=True))
        elif isinstance(part, str):
            enc = part.encode("utf-8")
            h.update(b"s" + len(enc).to_bytes(4, "little") + enc)
        else:
            raise TypeError(f"scope parts must be str or int, got {type(part)!r}")
    digest = h.digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def stream(seed: int, *scope) -> np.random.Generator:
    """Return the generator for a named substream of ``seed``.

    The same (seed, scope) pair always yields an identical stream; distinct
    scopes yield statistically independent streams.
    """
    if scope:
        ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_scope_key(scope))
    else:
        ss = np.random.SeedSequence(entropy=int(seed))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *scope) -> int:
    """Collapse a named substream into a plain integer seed.

    Used when a sub-component takes a scalar seed of its own (for example
    per-batch attack seeds inside the training loop).
    """
    if scope:
        ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_scope_key(scope))
    else:
        ss = np.random.SeedSequence(entropy=int(seed))
    return int(ss.generate_state(2, np.uint32).view(np.uint64)[0])
