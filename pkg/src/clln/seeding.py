"""Named RNG streams derived from one master seed per trial.

Each consumer (gate init, action selection, reward noise, resets,
oracle and evaluation rollouts) gets an independent generator keyed by a
fixed stream id, so adding or removing draws in one consumer never
shifts the sequences seen by the others.
"""

from __future__ import annotations

import numpy as np

__all__ = ["STREAMS", "stream"]

STREAMS = {
    "gate_init": 0,
    "action": 1,
    "reward_noise": 2,
    "reset": 3,
    "oracle": 4,
    "eval": 5,
    "topology": 6,
}


def stream(master_seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named consumer of a master seed."""
    try:
        key = STREAMS[name]
    except KeyError:
        raise ValueError(
            f"unknown stream {name!r}; expected one of {sorted(STREAMS)}"
        ) from None
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(key,))
    )
