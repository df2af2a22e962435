"""Channel model: block-fading gains and the per-slot link capacities.

All links are reciprocal within a slot and noise is unit variance, so a
transmit power P over a squared gain S gives capacity log2(1 + P*S).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CapacitySet",
    "ChannelDraw",
    "ChannelStats",
    "DiscreteGains",
    "NodePowers",
    "RayleighGains",
    "capacity",
    "db_to_linear",
    "mode_capacities",
    "mode_capacity_arrays",
    "sample_gains",
    "sample_uniforms",
]

_LN2 = math.log(2.0)


def db_to_linear(value_db):
    """Convert a dB quantity (scalar or array) to linear scale."""
    value_db = np.asarray(value_db, dtype=float)
    if not np.all(np.isfinite(value_db)):
        raise ValueError("dB value must be finite")
    out = 10.0 ** (value_db / 10.0)
    return float(out) if out.ndim == 0 else out


def capacity(snr):
    """Capacity log2(1 + snr) of a unit-noise AWGN link.

    Parameters
    ----------
    snr : float or ndarray
        Received signal-to-noise ratio, nonnegative.

    Returns
    -------
    float or ndarray
    """
    arr = np.asarray(snr, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
        raise ValueError("snr must be finite and nonnegative")
    out = np.log1p(arr) / _LN2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NodePowers:
    """Transmit powers (linear scale) of user 1, user 2 and the relay."""

    p1: float
    p2: float
    pr: float

    def __post_init__(self):
        for name in ("p1", "p2", "pr"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0.0:
                raise ValueError(f"{name} must be finite and positive, got {v!r}")

    @classmethod
    def from_db(cls, p1_db, p2_db, pr_db):
        return cls(db_to_linear(p1_db), db_to_linear(p2_db), db_to_linear(pr_db))


@dataclass(frozen=True)
class ChannelStats:
    """Mean squared gains (linear scale) of the user1-relay and user2-relay links."""

    omega1: float
    omega2: float

    def __post_init__(self):
        for name in ("omega1", "omega2"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0.0:
                raise ValueError(f"{name} must be finite and positive, got {v!r}")

    @classmethod
    def from_db(cls, omega1_db, omega2_db):
        return cls(db_to_linear(omega1_db), db_to_linear(omega2_db))


@dataclass(frozen=True)
class ChannelDraw:
    """One slot's squared channel gains, constant within the slot."""

    s1: float
    s2: float

    def __post_init__(self):
        for name in ("s1", "s2"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v!r}")


@dataclass(frozen=True)
class CapacitySet:
    """Per-slot capacities of the five physical links.

    Fields may be scalars or equally shaped arrays.  ``c1r``/``c2r`` are the
    single-user uplinks, ``cr1``/``cr2`` the downlinks, and ``cr`` the sum
    capacity of the two-user multiple-access uplink.
    """

    c1r: object
    c2r: object
    cr1: object
    cr2: object
    cr: object

    def c12r(self, t):
        """User-1 share of the multiple-access sum capacity at time share ``t``.

        ``t`` interpolates between the two decoding-order corner points, so
        ``c12r(t) + c21r(t)`` equals ``cr`` for every ``t`` in [0, 1].
        """
        _check_share(t)
        return t * self.c1r + (1.0 - t) * (self.cr - self.c2r)

    def c21r(self, t):
        """User-2 share of the multiple-access sum capacity at time share ``t``."""
        _check_share(t)
        return t * (self.cr - self.c1r) + (1.0 - t) * self.c2r


def _check_share(t):
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"time share must lie in [0, 1], got {t!r}")


def mode_capacities(draw: ChannelDraw, powers: NodePowers) -> CapacitySet:
    """Capacities of all links for one channel draw."""
    snr1 = powers.p1 * draw.s1
    snr2 = powers.p2 * draw.s2
    return CapacitySet(
        c1r=capacity(snr1),
        c2r=capacity(snr2),
        cr1=capacity(powers.pr * draw.s1),
        cr2=capacity(powers.pr * draw.s2),
        cr=capacity(snr1 + snr2),
    )


def mode_capacity_arrays(s1, s2, powers: NodePowers) -> CapacitySet:
    """Vectorized :func:`mode_capacities` over gain arrays (no input checks)."""
    snr1 = powers.p1 * s1
    snr2 = powers.p2 * s2
    return CapacitySet(
        c1r=np.log1p(snr1) / _LN2,
        c2r=np.log1p(snr2) / _LN2,
        cr1=np.log1p(powers.pr * s1) / _LN2,
        cr2=np.log1p(powers.pr * s2) / _LN2,
        cr=np.log1p(snr1 + snr2) / _LN2,
    )


class RayleighGains:
    """Independent Rayleigh-faded links: squared gains are exponential."""

    def __init__(self, stats: ChannelStats):
        self.stats = stats

    def from_uniforms(self, u1, u2):
        """Map uniforms on (0, 1] to gain pairs by the inverse exponential CDF."""
        return -self.stats.omega1 * np.log(u1), -self.stats.omega2 * np.log(u2)


class DiscreteGains:
    """Finite-alphabet gains, mainly for checks against closed-form expectations."""

    def __init__(self, atoms1, probs1, atoms2, probs2):
        self.atoms1 = np.asarray(atoms1, dtype=float)
        self.probs1 = np.asarray(probs1, dtype=float)
        self.atoms2 = np.asarray(atoms2, dtype=float)
        self.probs2 = np.asarray(probs2, dtype=float)
        for atoms, probs in ((self.atoms1, self.probs1), (self.atoms2, self.probs2)):
            if atoms.shape != probs.shape or atoms.ndim != 1 or atoms.size == 0:
                raise ValueError("atoms and probs must be matching 1-D arrays")
            if np.any(atoms < 0.0) or not np.all(np.isfinite(atoms)):
                raise ValueError("atoms must be finite and nonnegative")
            if np.any(probs < 0.0) or abs(probs.sum() - 1.0) > 1e-9:
                raise ValueError("probs must be nonnegative and sum to 1")
        self._cum1 = np.cumsum(self.probs1)
        self._cum2 = np.cumsum(self.probs2)
        # force an exact upper edge so u = 1 always lands in the last atom
        self._cum1[-1] = 1.0
        self._cum2[-1] = 1.0

    def from_uniforms(self, u1, u2):
        i1 = np.searchsorted(self._cum1, u1, side="left")
        i2 = np.searchsorted(self._cum2, u2, side="left")
        return self.atoms1[i1], self.atoms2[i2]


def sample_uniforms(rng: np.random.Generator, n: int):
    """Two independent uniform arrays on (0, 1], sized for ``from_uniforms``."""
    return 1.0 - rng.random(n), 1.0 - rng.random(n)


def sample_gains(rng: np.random.Generator, model, n: int):
    """Draw ``n`` gain pairs from a gain model using inverse-CDF sampling."""
    u1, u2 = sample_uniforms(rng, n)
    return model.from_uniforms(u1, u2)
