"""Adaptive mode-selection policy: slot metrics, indicator rules, calibration.

Each slot the policy scores the six modes with fixed weights ``mu1``/``mu2``
that price data sitting in the two relay queues, then picks the eligible mode
with the largest score.  Calibration classifies the link geometry into one of
three regimes and solves that regime's long-run flow-balance conditions on an
empirical sample, by bisection over threshold weights:

- ``"R1"``: the user-1 side is dominant; the single-user uplink of user 1 and
  the single-user downlink toward user 1 are never scheduled.
- ``"R2"``: the mirror image, user-2 side dominant.
- ``"R0"``: balanced; only the two-user uplink and the two-user downlink are
  scheduled and the uplink time share splits the sum capacity.

Some regimes need randomized eligibility to hit balance exactly; the Bernoulli
probabilities for those coins are part of the calibrated parameters.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from ._seeding import calibration_stream
from .channel import (
    CapacitySet,
    ChannelStats,
    NodePowers,
    RayleighGains,
    mode_capacity_arrays,
)

__all__ = [
    "BISECT_MAX_ITER",
    "CalibrationError",
    "CalibrationResult",
    "COIN_LAYOUTS",
    "PolicyParams",
    "POWER_REL_TOL",
    "RESIDUAL_TOL",
    "TIE_TOL",
    "build_calibration_sample",
    "calibrate",
    "coin_case",
    "draw_coin_arrays",
    "estimate_expectations",
    "indicator_arrays",
    "metric_arrays",
    "select_mode",
    "select_modes",
    "tie_gate",
]

POWER_REL_TOL = 1e-12   # relative tolerance deciding power equality
TIE_TOL = 1e-12         # absolute score tolerance for lowest-index tie-break
RESIDUAL_TOL = 1e-4     # bisection stops once the balance residual is this small
BISECT_MAX_ITER = 60

DEFAULT_CALIB_SAMPLES = 100_000

REGIONS = ("R0", "R1", "R2")

# coins consumed by each calibration sub-case, in draw order
COIN_LAYOUTS = {
    "p2_above_pr": ("p1",),
    "p2_below_pr": ("p2",),
    "p2_equal_pr": ("p3", "p4", "p5"),
    "p1_above_pr": ("p1",),
    "p1_below_pr": ("p2",),
    "p1_equal_pr": ("p3", "p4", "p5"),
    "interior_t": (),
    "t_zero": (),
    "t_one": (),
    "t_zero_tie": ("p2",),
    "t_one_tie": ("p2",),
}

_MIRROR_CASE = {
    "p2_above_pr": "p1_above_pr",
    "p2_below_pr": "p1_below_pr",
    "p2_equal_pr": "p1_equal_pr",
    "p1_above_pr": "p2_above_pr",
    "p1_below_pr": "p2_below_pr",
    "p1_equal_pr": "p2_equal_pr",
    "interior_t": "interior_t",
    "t_zero": "t_one",
    "t_one": "t_zero",
    "t_zero_tie": "t_one_tie",
    "t_one_tie": "t_zero_tie",
}

_JSON_FIELDS = ("region", "mu1", "mu2", "t_share", "p1", "p2", "p3", "p4", "p5")


class CalibrationError(RuntimeError):
    """No regime admits a balanced solution; carries the solver trace."""

    def __init__(self, trace):
        self.trace = list(trace)
        super().__init__("calibration failed:\n" + "\n".join(self.trace))


@dataclass(frozen=True)
class PolicyParams:
    """Calibrated selection weights, uplink time share and coin probabilities.

    ``p1`` through ``p5`` are ``None`` whenever the regime does not use that
    coin.  The object round-trips through JSON with exactly these nine fields.

    One regime overloads two slots: when the time share is pinned and the
    matching user power equals the relay power, every active metric ties, so
    ``p1`` stores the capacity-ratio gate level splitting uplink from downlink
    slots and ``p2`` the coin balancing the second queue (see ``tie_gate``).
    """

    region: str
    mu1: float
    mu2: float
    t_share: float
    p1: float | None = None
    p2: float | None = None
    p3: float | None = None
    p4: float | None = None
    p5: float | None = None

    def __post_init__(self):
        if self.region not in REGIONS:
            raise ValueError(f"unknown region tag {self.region!r}")
        for name in ("mu1", "mu2", "t_share"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
            object.__setattr__(self, name, float(v))
        for name in ("p1", "p2", "p3", "p4", "p5"):
            v = getattr(self, name)
            if v is None:
                continue
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be None or in [0, 1], got {v!r}")
            object.__setattr__(self, name, float(v))

    def to_json_dict(self) -> dict:
        return {name: getattr(self, name) for name in _JSON_FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def from_json_dict(cls, data: dict) -> "PolicyParams":
        missing = [k for k in _JSON_FIELDS if k not in data]
        extra = [k for k in data if k not in _JSON_FIELDS]
        if missing or extra:
            raise ValueError(
                f"policy parameters need exactly {list(_JSON_FIELDS)}; "
                f"missing {missing}, unexpected {extra}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "PolicyParams":
        return cls.from_json_dict(json.loads(text))


@dataclass
class CalibrationResult:
    """Calibrated parameters plus solver diagnostics.

    ``case`` identifies the sub-case actually used; ``omegas`` holds the
    regime-test statistics of that sub-case; ``diagnostics`` records solver
    residuals; ``trace`` lists, in order, every regime that was tried.
    """

    params: PolicyParams
    case: str
    omegas: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# runtime side: metrics, coins, indicators, selection


def metric_arrays(caps: CapacitySet, mu1: float, mu2: float, t: float):
    """Scores of the six modes, shape ``(6,) + shape(caps fields)``.

    Admission modes are weighted down by the queue prices, delivery modes up;
    mode 3 uses the uplink time share ``t``.
    """
    lam1 = (1.0 - mu1) * caps.c1r
    lam2 = (1.0 - mu2) * caps.c2r
    lam3 = (1.0 - mu1) * caps.c12r(t) + (1.0 - mu2) * caps.c21r(t)
    lam4 = mu2 * caps.cr1
    lam5 = mu1 * caps.cr2
    lam6 = mu1 * caps.cr2 + mu2 * caps.cr1
    return np.stack([np.asarray(lam, dtype=float)
                     for lam in (lam1, lam2, lam3, lam4, lam5, lam6)])


def coin_case(params: PolicyParams, powers: NodePowers) -> str:
    """Sub-case id deciding the eligibility layout for given parameters."""
    if params.region == "R1":
        return "p2_" + _power_side(powers.p2, powers.pr)
    if params.region == "R2":
        return "p1_" + _power_side(powers.p1, powers.pr)
    if params.t_share <= 0.0:
        return "t_zero_tie" if params.p1 is not None else "t_zero"
    if params.t_share >= 1.0:
        return "t_one_tie" if params.p1 is not None else "t_one"
    return "interior_t"


def _power_side(p: float, pr: float) -> str:
    if abs(p - pr) <= POWER_REL_TOL * max(p, pr):
        return "equal_pr"
    return "above_pr" if p > pr else "below_pr"


def draw_coin_arrays(case: str, params: PolicyParams,
                     rng: np.random.Generator, n: int) -> dict:
    """Bernoulli coin outcomes for ``n`` slots, one array per active coin."""
    coins = {}
    for name in COIN_LAYOUTS[case]:
        p = getattr(params, name)
        if p is None:
            raise ValueError(f"case {case!r} needs coin {name!r} but it is unset")
        coins[name] = rng.random(n) < p
    return coins


def tie_gate(caps: CapacitySet, params: PolicyParams, case: str) -> np.ndarray:
    """Uplink mask for the pinned-share equal-power regimes.

    With the time share pinned and the matching user power equal to the relay
    power, the active metrics tie on every slot, so slots go uplink when the
    sum capacity is large relative to the competing drains.  The gate level is
    stored in ``params.p1``.
    """
    if params.p1 is None:
        raise ValueError(f"case {case!r} needs the gate level in p1")
    if case == "t_zero_tie":
        ratio = _safe_ratio(caps.cr, caps.c2r + caps.cr1, fill=1.0)
    elif case == "t_one_tie":
        ratio = _safe_ratio(caps.cr, caps.c1r + caps.cr2, fill=1.0)
    else:
        raise ValueError(f"case {case!r} has no gate")
    return ratio >= params.p1


def indicator_arrays(case: str, coins: dict, n: int) -> np.ndarray:
    """Mode eligibility as a boolean array of shape ``(6, n)``.

    The two ``*_tie`` cases expect the uplink mask of :func:`tie_gate` under
    the key ``"up"`` next to the drawn coins.
    """
    f = np.zeros(n, dtype=bool)
    t = np.ones(n, dtype=bool)
    if case in ("interior_t", "t_zero", "t_one"):
        rows = [f, f, t, f, f, t]
    elif case == "t_zero_tie":
        up, x = coins["up"], coins["p2"]
        rows = [f, f, up, f, ~up & ~x, ~up & x]
    elif case == "t_one_tie":
        up, x = coins["up"], coins["p2"]
        rows = [f, f, up, ~up & ~x, f, ~up & x]
    elif case == "p2_above_pr":
        x = coins["p1"]
        rows = [f, ~x, x, f, f, t]
    elif case == "p2_below_pr":
        x = coins["p2"]
        rows = [f, f, t, f, ~x, x]
    elif case == "p2_equal_pr":
        x3, x4, x5 = coins["p3"], coins["p4"], coins["p5"]
        rows = [f, x3 & ~x4, x3 & x4, f, ~x3 & ~x5, ~x3 & x5]
    elif case == "p1_above_pr":
        x = coins["p1"]
        rows = [~x, f, x, f, f, t]
    elif case == "p1_below_pr":
        x = coins["p2"]
        rows = [f, f, t, ~x, f, x]
    elif case == "p1_equal_pr":
        x3, x4, x5 = coins["p3"], coins["p4"], coins["p5"]
        rows = [x3 & ~x4, f, x3 & x4, ~x3 & ~x5, f, ~x3 & x5]
    else:
        raise ValueError(f"unknown case {case!r}")
    return np.stack(rows)


def select_modes(metrics: np.ndarray, indicators: np.ndarray) -> np.ndarray:
    """Pick per slot the eligible mode with the largest score.

    Scores within ``TIE_TOL`` of the best are tied and the lowest mode index
    wins.  Every eligibility layout leaves at least one mode eligible, so the
    masked sentinel never gets selected.
    """
    scores = np.where(indicators, metrics, -1.0)
    best = scores.max(axis=0)
    return (np.argmax(scores >= best - TIE_TOL, axis=0) + 1).astype(np.int8)


def select_mode(caps: CapacitySet, params: PolicyParams, case: str,
                coins: dict) -> int:
    """Scalar convenience wrapper around :func:`select_modes`."""
    lam = metric_arrays(caps, params.mu1, params.mu2, params.t_share)
    coin_arrays = {k: np.asarray([v], dtype=bool) for k, v in coins.items()}
    ind = indicator_arrays(case, coin_arrays, 1)
    return int(select_modes(lam.reshape(6, 1), ind)[0])


# ---------------------------------------------------------------------------
# calibration sample and solver building blocks


def build_calibration_sample(powers: NodePowers, gains, m: int,
                             seed: int) -> CapacitySet:
    """Link-capacity arrays over a common low-discrepancy gain sample.

    The same sample backs every expectation inside one calibration, and it
    depends only on ``m``, ``seed`` and the gain model, so cached parameters
    stay valid across runs.
    """
    m = int(m)
    if m < 2:
        raise ValueError("calibration needs at least 2 samples")
    rng = calibration_stream(seed)
    with warnings.catch_warnings():
        # the generator warns when m is not a power of two; any m is fine here
        warnings.simplefilter("ignore", UserWarning)
        u = qmc.Sobol(d=2, scramble=True, seed=rng).random(m)
    s1, s2 = gains.from_uniforms(1.0 - u[:, 0], 1.0 - u[:, 1])
    return mode_capacity_arrays(s1, s2, powers)


def _safe_ratio(num, den, fill):
    out = np.full(num.shape, fill, dtype=float)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else math.inf


class _ThresholdBalance:
    """Fast threshold sweeps of E{a; ratio >= thr} - E{b; ratio < thr}.

    Sorting once lets every candidate threshold be evaluated from prefix sums
    in O(log m).  Several (a, b) pairs may share one ratio.
    """

    def __init__(self, ratio: np.ndarray, pairs):
        order = np.argsort(ratio, kind="stable")
        self._ratio = ratio[order]
        self._m = ratio.size
        self._cums = []
        for a, b in pairs:
            ca = np.zeros(self._m + 1)
            cb = np.zeros(self._m + 1)
            np.cumsum(a[order], out=ca[1:])
            np.cumsum(b[order], out=cb[1:])
            self._cums.append((ca, cb))

    def residual(self, thr: float, pair: int = 0) -> float:
        k = int(np.searchsorted(self._ratio, thr, side="left"))
        ca, cb = self._cums[pair]
        return ((ca[self._m] - ca[k]) - cb[k]) / self._m


@dataclass
class _BisectOutcome:
    value: float
    lo: float
    hi: float
    residual: float
    iterations: int
    bracketed: bool

    def summary(self) -> dict:
        return {"value": self.value, "lo": self.lo, "hi": self.hi,
                "residual": self.residual, "iterations": self.iterations,
                "bracketed": self.bracketed}


def _bisect_decreasing(f: Callable[[float], float], tol: float = RESIDUAL_TOL,
                       max_iter: int = BISECT_MAX_ITER) -> _BisectOutcome:
    """Root of a decreasing function on [0, 1].

    Endpoints within ``tol`` count as roots.  When no sign change exists the
    nearest endpoint is returned with ``bracketed=False``.  The returned value
    is always a point where ``f`` was actually evaluated.
    """
    f0 = f(0.0)
    if f0 <= tol:
        return _BisectOutcome(0.0, 0.0, 0.0, f0, 1, f0 >= -tol)
    f1 = f(1.0)
    if f1 >= -tol:
        return _BisectOutcome(1.0, 1.0, 1.0, f1, 2, f1 <= tol)
    lo, hi = 0.0, 1.0
    mid, fm = 0.5, f0
    it = 2
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        it += 1
        if abs(fm) <= tol:
            return _BisectOutcome(mid, lo, hi, fm, it, True)
        if fm > 0.0:
            lo = mid
        else:
            hi = mid
    # the root stays bracketed; the residual can exceed tol only at a jump
    return _BisectOutcome(mid, lo, hi, fm, it, True)


def _mirror_caps(caps: CapacitySet) -> CapacitySet:
    return CapacitySet(c1r=caps.c2r, c2r=caps.c1r, cr1=caps.cr2,
                       cr2=caps.cr1, cr=caps.cr)


def _mirror_powers(powers: NodePowers) -> NodePowers:
    return NodePowers(p1=powers.p2, p2=powers.p1, pr=powers.pr)


def _mirror_params(params: PolicyParams) -> PolicyParams:
    region = {"R1": "R2", "R2": "R1", "R0": "R0"}[params.region]
    return PolicyParams(region=region, mu1=params.mu2, mu2=params.mu1,
                        t_share=1.0 - params.t_share, p1=params.p1,
                        p2=params.p2, p3=params.p3, p4=params.p4, p5=params.p5)


# ---------------------------------------------------------------------------
# regime tests and solvers


def _try_strong_user(caps: CapacitySet, powers: NodePowers, label: str,
                     trace: list) -> CalibrationResult | None:
    """Test the user-1-dominant regime in local coordinates.

    The mirrored regime reuses this with swapped roles, so all formulas below
    are written for ``label == "R1"``.
    """
    c2r, cr1, cr2, cr = caps.c2r, caps.cr1, caps.cr2, caps.cr
    side = _power_side(powers.p2, powers.pr)
    case = "p2_" + side
    # result stays in local coordinates; the caller mirrors R2 solutions back
    shown = case if label == "R1" else _MIRROR_CASE[case]

    if side == "above_pr":
        # balance of queue 2: admissions at c2r against broadcast drains at cr1
        ratio = _safe_ratio(c2r - cr2, c2r + cr1, fill=-np.inf)
        bal = _ThresholdBalance(ratio, [(c2r, cr1)])
        sol = _bisect_decreasing(bal.residual)
        admit = ratio >= sol.value
        omega1 = _safe_div(cr2[~admit].sum(), (cr - c2r)[admit].sum())
        trace.append(f"{label}/{shown}: threshold={sol.value:.8g} "
                     f"residual={sol.residual:.3g} omega1={omega1:.8g} "
                     f"in_region={sol.bracketed and omega1 < 1.0}")
        if not (sol.bracketed and omega1 < 1.0):
            return None
        params = PolicyParams(region="R1", mu1=1.0, mu2=sol.value,
                              t_share=0.0, p1=omega1)
        return CalibrationResult(params, case, omegas={"omega1": omega1},
                                 diagnostics={"balance": sol.summary()})

    if side == "below_pr":
        # balance of queue 1: admissions at cr - c2r against drains at cr2
        ratio = _safe_ratio(cr, cr - c2r + cr2, fill=np.inf)
        bal = _ThresholdBalance(ratio, [(cr - c2r, cr2)])
        sol = _bisect_decreasing(bal.residual)
        admit = ratio >= sol.value
        omega2 = _safe_div(c2r[admit].sum(), cr1[~admit].sum())
        trace.append(f"{label}/{shown}: threshold={sol.value:.8g} "
                     f"residual={sol.residual:.3g} omega2={omega2:.8g} "
                     f"in_region={sol.bracketed and omega2 < 1.0}")
        if not (sol.bracketed and omega2 < 1.0):
            return None
        params = PolicyParams(region="R1", mu1=sol.value, mu2=0.0,
                              t_share=0.0, p2=omega2)
        return CalibrationResult(params, case, omegas={"omega2": omega2},
                                 diagnostics={"balance": sol.summary()})

    # equal powers: both flows balance through coins alone
    omega3_lower = _safe_div(float(cr2.sum()), float(cr.sum()))
    omega3_upper = _safe_div(float(cr1.sum()), float((cr1 + c2r).sum()))
    in_region = (math.isfinite(omega3_lower) and math.isfinite(omega3_upper)
                 and omega3_lower < omega3_upper)
    trace.append(f"{label}/{shown}: omega3_lower={omega3_lower:.8g} "
                 f"omega3_upper={omega3_upper:.8g} in_region={in_region}")
    if not in_region:
        return None
    p3 = 0.5 * (omega3_lower + omega3_upper)
    p4 = (1.0 - p3) * omega3_lower / (p3 * (1.0 - omega3_lower))
    p5 = p3 * (1.0 - omega3_upper) / ((1.0 - p3) * omega3_upper)
    params = PolicyParams(region="R1", mu1=1.0, mu2=0.0, t_share=0.0,
                          p3=p3, p4=p4, p5=p5)
    return CalibrationResult(
        params, case,
        omegas={"omega3_lower": omega3_lower, "omega3_upper": omega3_upper})


@dataclass
class _ClippedSolution:
    mu1: float
    mu2: float
    outer: _BisectOutcome
    inner: _BisectOutcome

    @property
    def feasible(self) -> bool:
        # an infinite outer residual marks a steering-guard point where the
        # inner balance never converged, so the pair is not a solution
        return (self.outer.bracketed and self.inner.bracketed
                and math.isfinite(self.outer.residual))


def _solve_clipped_low(caps: CapacitySet) -> _ClippedSolution:
    """Balanced regime pinned at time share 0, local coordinates.

    The outer bisection walks ``mu1``; for each candidate the inner bisection
    finds the ``mu2`` restoring total flow balance, then the outer residual is
    the queue-1 balance on that curve.
    """
    c2r, cr1, cr2, cr = caps.c2r, caps.cr1, caps.cr2, caps.cr
    den = c2r + cr1
    total_down = cr1 + cr2
    admit1 = cr - c2r
    # on an empirical sample the balance lands within one sample's worth of
    # flow, so anything beyond a few such atoms marks a genuine discontinuity
    inner_atol = max(RESIDUAL_TOL,
                     8.0 * float(np.max(cr + total_down)) / cr.size)
    inner_cache: dict[float, _BisectOutcome] = {}

    def outer_residual(mu1: float) -> float:
        num = (1.0 - mu1) * cr + mu1 * (c2r - cr2)
        rho = _safe_ratio(num, den, fill=np.inf)
        bal = _ThresholdBalance(rho, [(cr, total_down), (admit1, cr2)])
        inner = _bisect_decreasing(lambda th: bal.residual(th, 0))
        inner_cache[mu1] = inner
        if not inner.bracketed or abs(inner.residual) > inner_atol:
            # total balance unreachable here; steer the outer bracket past it
            return math.copysign(math.inf, inner.residual)
        return bal.residual(inner.value, 1)

    outer = _bisect_decreasing(outer_residual)
    inner = inner_cache[outer.value]
    return _ClippedSolution(outer.value, inner.value, outer, inner)


@dataclass
class _TiedSolution:
    theta: float
    pc: float
    balance: _BisectOutcome

    @property
    def feasible(self) -> bool:
        return self.balance.bracketed and 0.0 <= self.pc <= 1.0


def _solve_tied_low(caps: CapacitySet) -> _TiedSolution:
    """Pinned time share 0 with the user-2 power equal to the relay power.

    Reciprocity then makes ``c2r`` and ``cr2`` identical, every active metric
    ties on every slot, and the weight pair collapses to a single degree of
    freedom, so the nested solver cannot balance both queues.  Instead the
    slots are split directly: a slot goes uplink when its sum capacity is
    large relative to the drains it displaces, with the gate level balancing
    queue 1, and a coin on the remaining slots balances queue 2 by choosing
    between the broadcast and the single downlink to user 1.
    """
    c2r, cr1, cr2, cr = caps.c2r, caps.cr1, caps.cr2, caps.cr
    ratio = _safe_ratio(cr, c2r + cr1, fill=1.0)
    bal = _ThresholdBalance(ratio, [(cr - c2r, cr2)])
    sol = _bisect_decreasing(bal.residual)
    up = ratio >= sol.value
    pc = _safe_div(c2r[up].sum(), cr1[~up].sum())
    return _TiedSolution(sol.value, pc, sol)


def _solve_balanced(caps: CapacitySet, powers: NodePowers,
                    trace: list) -> CalibrationResult:
    c1r, c2r, cr1, cr2, cr = caps.c1r, caps.c2r, caps.cr1, caps.cr2, caps.cr
    m = cr.size
    total_down = cr1 + cr2
    ratio = _safe_ratio(cr, cr + total_down, fill=1.0)
    bal = _ThresholdBalance(ratio, [(cr, total_down)])
    sol = _bisect_decreasing(bal.residual)
    mu = sol.value
    admit = ratio >= mu
    numer = ((cr - c2r)[admit].sum() - cr2[~admit].sum()) / m
    denom = (cr - c1r - c2r)[admit].sum() / m
    if denom != 0.0:
        t = numer / denom
    else:
        t = -math.inf if numer >= 0.0 else math.inf
    trace.append(f"R0: mu={mu:.8g} residual={sol.residual:.3g} "
                 f"t_unclipped={t:.8g}")
    if sol.bracketed and 0.0 < t < 1.0:
        params = PolicyParams(region="R0", mu1=mu, mu2=mu, t_share=t)
        return CalibrationResult(params, "interior_t",
                                 diagnostics={"balance": sol.summary(),
                                              "t_unclipped": t},
                                 )
    sides = ("t_zero", "t_one") if t <= 0.0 else ("t_one", "t_zero")
    for side in sides:
        local = caps if side == "t_zero" else _mirror_caps(caps)
        pinned_user = powers.p2 if side == "t_zero" else powers.p1
        if _power_side(pinned_user, powers.pr) == "equal_pr":
            tied = _solve_tied_low(local)
            trace.append(f"R0/{side}_tie: theta={tied.theta:.8g} "
                         f"pc={tied.pc:.8g} "
                         f"residual={tied.balance.residual:.3g} "
                         f"feasible={tied.feasible}")
            if tied.feasible:
                if side == "t_zero":
                    params = PolicyParams(region="R0", mu1=1.0, mu2=0.0,
                                          t_share=0.0, p1=tied.theta,
                                          p2=tied.pc)
                else:
                    params = PolicyParams(region="R0", mu1=0.0, mu2=1.0,
                                          t_share=1.0, p1=tied.theta,
                                          p2=tied.pc)
                return CalibrationResult(
                    params, side + "_tie",
                    diagnostics={"balance": tied.balance.summary(),
                                 "pc": tied.pc, "t_unclipped": t})
            continue
        clip = _solve_clipped_low(local)
        if side == "t_zero":
            mu1, mu2, t_share = clip.mu1, clip.mu2, 0.0
        else:
            mu1, mu2, t_share = clip.mu2, clip.mu1, 1.0
        trace.append(f"R0/{side}: mu1={mu1:.8g} mu2={mu2:.8g} "
                     f"flow_residual={clip.outer.residual:.3g} "
                     f"total_residual={clip.inner.residual:.3g} "
                     f"feasible={clip.feasible}")
        if clip.feasible:
            params = PolicyParams(region="R0", mu1=mu1, mu2=mu2,
                                  t_share=t_share)
            return CalibrationResult(params, side,
                                     diagnostics={"outer": clip.outer.summary(),
                                                  "inner": clip.inner.summary(),
                                                  "t_unclipped": t})
    raise CalibrationError(trace)


def calibrate(powers: NodePowers, gains,
              calib_samples: int = DEFAULT_CALIB_SAMPLES,
              seed: int = 0) -> CalibrationResult:
    """Classify the link geometry and solve the selection weights.

    Parameters
    ----------
    powers : NodePowers
    gains : ChannelStats or gain model
        Anything exposing ``from_uniforms``; plain stats select Rayleigh
        fading.
    calib_samples : int
        Size of the empirical sample behind every expectation.
    seed : int
        Base seed; the sample is a pure function of it.

    Returns
    -------
    CalibrationResult

    Raises
    ------
    CalibrationError
        If no regime yields a balanced solution.
    """
    if isinstance(gains, ChannelStats):
        gains = RayleighGains(gains)
    caps = build_calibration_sample(powers, gains, calib_samples, seed)
    trace: list[str] = []

    res = _try_strong_user(caps, powers, "R1", trace)
    if res is None:
        mirrored = _try_strong_user(_mirror_caps(caps), _mirror_powers(powers),
                                    "R2", trace)
        if mirrored is not None:
            res = CalibrationResult(_mirror_params(mirrored.params),
                                    _MIRROR_CASE[mirrored.case],
                                    omegas=mirrored.omegas,
                                    diagnostics=mirrored.diagnostics)
    if res is None:
        res = _solve_balanced(caps, powers, trace)
    res.trace = trace
    return res


# ---------------------------------------------------------------------------
# diagnostic expectations


def _expected_flows(caps: CapacitySet, params: PolicyParams, case: str) -> dict:
    """Coin-averaged admitted and delivered flow rates for both queues."""
    if case.startswith("p1_") or case == "t_one_tie":
        sub = _expected_flows(_mirror_caps(caps), _mirror_params(params),
                              _MIRROR_CASE[case])
        return {"admit_b1": sub["admit_b2"], "admit_b2": sub["admit_b1"],
                "deliver_b1": sub["deliver_b2"],
                "deliver_b2": sub["deliver_b1"]}
    c2r, cr1, cr2, cr = caps.c2r, caps.cr1, caps.cr2, caps.cr
    m = cr.size
    if case == "t_zero_tie":
        up = tie_gate(caps, params, case)
        down = ~up
        return {"admit_b1": (cr - c2r)[up].sum() / m,
                "admit_b2": c2r[up].sum() / m,
                "deliver_b1": cr2[down].sum() / m,
                "deliver_b2": params.p2 * cr1[down].sum() / m}
    if case == "p2_equal_pr":
        p3, p4, p5 = params.p3, params.p4, params.p5
        return {"admit_b1": p3 * p4 * float(np.mean(cr - c2r)),
                "admit_b2": p3 * float(np.mean(c2r)),
                "deliver_b1": (1.0 - p3) * float(np.mean(cr2)),
                "deliver_b2": (1.0 - p3) * p5 * float(np.mean(cr1))}
    lam = metric_arrays(caps, params.mu1, params.mu2, params.t_share)
    up = lam[2] >= lam[5]
    down = ~up
    if case == "p2_above_pr":
        return {"admit_b1": params.p1 * (cr - c2r)[up].sum() / m,
                "admit_b2": c2r[up].sum() / m,
                "deliver_b1": cr2[down].sum() / m,
                "deliver_b2": cr1[down].sum() / m}
    if case == "p2_below_pr":
        return {"admit_b1": (cr - c2r)[up].sum() / m,
                "admit_b2": c2r[up].sum() / m,
                "deliver_b1": cr2[down].sum() / m,
                "deliver_b2": params.p2 * cr1[down].sum() / m}
    if case in ("interior_t", "t_zero", "t_one"):
        t = params.t_share
        return {"admit_b1": caps.c12r(t)[up].sum() / m,
                "admit_b2": caps.c21r(t)[up].sum() / m,
                "deliver_b1": cr2[down].sum() / m,
                "deliver_b2": cr1[down].sum() / m}
    raise ValueError(f"unknown case {case!r}")


def estimate_expectations(powers: NodePowers, gains, params: PolicyParams,
                          calib_samples: int = DEFAULT_CALIB_SAMPLES,
                          seed: int = 0) -> dict:
    """Empirical expectations behind the balance conditions of ``params``.

    Returns the capacity means, coin-averaged admitted and delivered flow
    rates per queue and the two flow-balance residuals, all on the same
    sample that :func:`calibrate` would use.
    """
    if isinstance(gains, ChannelStats):
        gains = RayleighGains(gains)
    caps = build_calibration_sample(powers, gains, calib_samples, seed)
    case = coin_case(params, powers)
    flows = _expected_flows(caps, params, case)
    out = {"mean_c1r": float(np.mean(caps.c1r)),
           "mean_c2r": float(np.mean(caps.c2r)),
           "mean_cr1": float(np.mean(caps.cr1)),
           "mean_cr2": float(np.mean(caps.cr2)),
           "mean_cr": float(np.mean(caps.cr)),
           "case": case}
    out.update(flows)
    out["residual_b1"] = flows["admit_b1"] - flows["deliver_b1"]
    out["residual_b2"] = flows["admit_b2"] - flows["deliver_b2"]
    return out
