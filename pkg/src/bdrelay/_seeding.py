"""Deterministic stream derivation for gains, coins and calibration draws.

Every random consumer gets its own Philox stream keyed by the base seed plus
a purpose code, so runs are reproducible slot-for-slot at any parallelism and
the calibration sample depends on nothing but the base seed.
"""

from __future__ import annotations

import numpy as np

PURPOSE_GAINS = 0
PURPOSE_COINS = 1
PURPOSE_CALIB = 2

# stable ids used in stream keys; never renumber
PROTOCOL_IDS = {
    "proposed": 0,
    "twoway": 1,
    "tdbc": 2,
    "mabc": 3,
    "threemode": 4,
}


def make_stream(*key: int) -> np.random.Generator:
    """Philox generator for an integer key tuple."""
    seq = np.random.SeedSequence(tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def calibration_stream(base_seed: int) -> np.random.Generator:
    return make_stream(base_seed, PURPOSE_CALIB)


def run_stream(base_seed: int, omega1_index: int, pr_index: int,
               protocol: str, purpose: int) -> np.random.Generator:
    return make_stream(base_seed, omega1_index, pr_index,
                       PROTOCOL_IDS[protocol], purpose)
