"""Simulation engine: run one protocol over a slot sequence, or sweep a grid.

Runs are deterministic functions of the configuration.  Gains, coins and the
calibration sample all draw from separate streams keyed by the base seed (and
for sweeps, the grid indices), so a sweep produces identical numbers at any
parallelism and any subset of its points.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import baselines
from ._kernels import queue_walk
from ._seeding import PURPOSE_COINS, PURPOSE_GAINS, run_stream
from .channel import (
    ChannelStats,
    NodePowers,
    RayleighGains,
    mode_capacity_arrays,
    sample_gains,
)
from .policy import (
    DEFAULT_CALIB_SAMPLES,
    CalibrationError,
    CalibrationResult,
    PolicyParams,
    calibrate,
    coin_case,
    draw_coin_arrays,
    indicator_arrays,
    metric_arrays,
    select_modes,
    tie_gate,
)

__all__ = [
    "NUM_BATCHES",
    "PROTOCOLS",
    "RunOutput",
    "SimConfig",
    "SumRateReport",
    "SweepRow",
    "cache_key",
    "run",
    "sweep",
]

PROTOCOLS = ("proposed", "twoway", "tdbc", "mabc", "mabc_opt_t", "threemode")

NUM_BATCHES = 100   # batch-means batches for the standard error

MIN_SLOTS = 1_000


def _stream_protocol(protocol: str) -> str:
    # the tuned-t variant replays the fixed-t gain stream
    return "mabc" if protocol == "mabc_opt_t" else protocol


@dataclass(frozen=True)
class SimConfig:
    """Everything one run depends on."""

    stats: ChannelStats
    powers: NodePowers
    protocol: str = "proposed"
    n_slots: int = 1_000_000
    seed: int = 0
    warmup_discard: int = 0
    calib_samples: int = DEFAULT_CALIB_SAMPLES

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.n_slots < MIN_SLOTS:
            raise ValueError(f"n_slots must be at least {MIN_SLOTS}")
        if not 0 <= self.warmup_discard < self.n_slots:
            raise ValueError("warmup_discard must lie in [0, n_slots)")


@dataclass(frozen=True)
class SumRateReport:
    """Long-run rates of one run, averaged over the kept slots."""

    protocol: str
    r1r_bar: float
    r2r_bar: float
    rr1_bar: float
    rr2_bar: float
    sum_rate: float
    residual_c1: float
    residual_c2: float
    mode_histogram: tuple
    final_queues: tuple
    std_error: float
    n_slots_used: int


@dataclass
class RunOutput:
    report: SumRateReport
    calibration: object | None = None


def _mean(arr: np.ndarray) -> float:
    # extended-precision accumulation keeps the flow-balance residuals honest
    return float(np.sum(arr, dtype=np.longdouble) / arr.size)


def _summarize(slots: baselines.ProtocolSlots, config: SimConfig,
               protocol: str) -> SumRateReport:
    n_used = slots.modes.size
    w = config.warmup_discard
    if w >= n_used:
        raise ValueError("warmup discards every usable slot")
    kept = slice(w, n_used)
    nk = n_used - w
    r1r = _mean(slots.r1r[kept])
    r2r = _mean(slots.r2r[kept])
    rr1 = _mean(slots.rr1[kept])
    rr2 = _mean(slots.rr2[kept])
    hist = np.bincount(slots.modes[kept], minlength=7)[1:] / nk
    series = slots.rr1[kept] + slots.rr2[kept]
    b = nk // NUM_BATCHES
    if b >= 1:
        bm = series[:NUM_BATCHES * b].reshape(NUM_BATCHES, b).mean(axis=1)
        se = float(bm.std(ddof=1) / math.sqrt(NUM_BATCHES))
    else:
        se = math.nan
    return SumRateReport(
        protocol=protocol,
        r1r_bar=r1r, r2r_bar=r2r, rr1_bar=rr1, rr2_bar=rr2,
        sum_rate=rr1 + rr2,
        residual_c1=abs(r1r - rr2), residual_c2=abs(r2r - rr1),
        mode_histogram=tuple(float(h) for h in hist),
        final_queues=(slots.q1_final, slots.q2_final),
        std_error=se,
        n_slots_used=nk,
    )


def _run_proposed(caps, config: SimConfig, calibration: CalibrationResult,
                  indices) -> baselines.ProtocolSlots:
    params = calibration.params
    case = coin_case(params, config.powers)
    rng = run_stream(config.seed, indices[0], indices[1],
                     _stream_protocol(config.protocol), PURPOSE_COINS)
    coins = draw_coin_arrays(case, params, rng, config.n_slots)
    if case in ("t_zero_tie", "t_one_tie"):
        coins["up"] = tie_gate(caps, params, case)
    lam = metric_arrays(caps, params.mu1, params.mu2, params.t_share)
    ind = indicator_arrays(case, coins, config.n_slots)
    modes = select_modes(lam, ind)
    t = params.t_share
    c12 = caps.c12r(t)
    c21 = caps.c21r(t)
    in1 = np.where(modes == 1, caps.c1r, 0.0)
    in1 += np.where(modes == 3, c12, 0.0)
    in2 = np.where(modes == 2, caps.c2r, 0.0)
    in2 += np.where(modes == 3, c21, 0.0)
    out1 = np.where((modes == 4) | (modes == 6), caps.cr1, 0.0)
    out2 = np.where((modes == 5) | (modes == 6), caps.cr2, 0.0)
    rr1, rr2, q1f, q2f = queue_walk(in1, in2, out1, out2)
    return baselines.ProtocolSlots(in1, in2, rr1, rr2, modes, q1f, q2f)


def run(config: SimConfig, calibration=None, gains_model=None,
        indices=(0, 0)) -> RunOutput:
    """Simulate one protocol at one grid point.

    Parameters
    ----------
    config : SimConfig
    calibration : optional
        Precomputed calibration (cache hit); computed here when needed.
    gains_model : optional
        Override for the fading model; Rayleigh with ``config.stats`` means
        by default.
    indices : (int, int)
        Grid indices used in stream derivation; sweeps set them, standalone
        runs keep (0, 0).

    Returns
    -------
    RunOutput
        The rate report plus whatever calibration the protocol used.
    """
    model = gains_model if gains_model is not None else RayleighGains(config.stats)
    rng = run_stream(config.seed, indices[0], indices[1],
                     _stream_protocol(config.protocol), PURPOSE_GAINS)
    s1, s2 = sample_gains(rng, model, config.n_slots)
    caps = mode_capacity_arrays(s1, s2, config.powers)

    proto = config.protocol
    if proto == "proposed":
        if calibration is None:
            calibration = calibrate(config.powers, model,
                                    config.calib_samples, config.seed)
        slots = _run_proposed(caps, config, calibration, indices)
    elif proto == "twoway":
        slots = baselines.run_two_way(caps)
    elif proto == "tdbc":
        slots = baselines.run_tdbc(caps)
    elif proto == "mabc":
        slots = baselines.run_mabc(caps, optimize_t=False)
    elif proto == "mabc_opt_t":
        slots = baselines.run_mabc(caps, optimize_t=True)
    else:
        if calibration is None:
            calibration = baselines.calibrate_three_mode(
                config.powers, model, config.calib_samples, config.seed)
        slots = baselines.run_three_mode(caps, calibration)
    return RunOutput(_summarize(slots, config, proto), calibration)


# ---------------------------------------------------------------------------
# grid sweeps


@dataclass
class SweepRow:
    """One (channel mean, relay power, protocol) cell of a sweep."""

    omega1_db: float
    omega2_db: float
    pr_db: float
    omega1_index: int
    pr_index: int
    protocol: str
    seed: int
    output: RunOutput | None = None
    error: str | None = None
    cache_hit: bool = False


def cache_key(omega1_db, omega2_db, p1_db, p2_db, pr_db, calib_samples,
              seed) -> str:
    parts = [repr(float(v)) for v in (omega1_db, omega2_db, p1_db, p2_db,
                                      pr_db)]
    parts += [str(int(calib_samples)), str(int(seed))]
    return "|".join(parts)


def _sweep_worker(task):
    config, o_idx, p_idx, cached_params = task
    try:
        calibration = None
        if cached_params is not None and config.protocol == "proposed":
            calibration = CalibrationResult(
                params=cached_params,
                case=coin_case(cached_params, config.powers))
        return ("ok", run(config, calibration=calibration,
                          indices=(o_idx, p_idx)))
    except CalibrationError as err:
        return ("error", "\n".join(err.trace))


def sweep(omega1_db_values, pr_db_values, *, omega2_db, p1_db, p2_db,
          protocols=("proposed",), n_slots=1_000_000,
          calib_samples=DEFAULT_CALIB_SAMPLES, seed=0, warmup_discard=0,
          jobs=1, param_cache=None) -> list[SweepRow]:
    """Run a grid of scenarios and return rows in deterministic order.

    Rows iterate the mean-gain values outermost, then relay powers, then the
    requested protocols.  ``param_cache`` maps :func:`cache_key` strings to
    ``PolicyParams``; hits skip calibration and solved points are added back
    to the dict.  Failures land in ``SweepRow.error`` without stopping the
    sweep.
    """
    for proto in protocols:
        if proto not in PROTOCOLS:
            raise ValueError(f"unknown protocol {proto!r}")
    omega1_db_values = [float(v) for v in omega1_db_values]
    pr_db_values = [float(v) for v in pr_db_values]

    rows: list[SweepRow] = []
    tasks = []
    for o_idx, o1 in enumerate(omega1_db_values):
        for p_idx, pr in enumerate(pr_db_values):
            stats = ChannelStats.from_db(o1, omega2_db)
            powers = NodePowers.from_db(p1_db, p2_db, pr)
            key = cache_key(o1, omega2_db, p1_db, p2_db, pr, calib_samples,
                            seed)
            for proto in protocols:
                config = SimConfig(stats=stats, powers=powers, protocol=proto,
                                   n_slots=n_slots, seed=seed,
                                   warmup_discard=warmup_discard,
                                   calib_samples=calib_samples)
                cached = None
                if proto == "proposed" and param_cache is not None:
                    cached = param_cache.get(key)
                rows.append(SweepRow(o1, float(omega2_db), pr, o_idx, p_idx,
                                     proto, int(seed),
                                     cache_hit=cached is not None))
                tasks.append((config, o_idx, p_idx, cached))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_worker, tasks))
    else:
        results = [_sweep_worker(t) for t in tasks]

    for row, (status, payload) in zip(rows, results):
        if status == "ok":
            row.output = payload
            if (row.protocol == "proposed" and param_cache is not None
                    and not row.cache_hit):
                key = cache_key(row.omega1_db, row.omega2_db, p1_db, p2_db,
                                row.pr_db, calib_samples, seed)
                param_cache[key] = payload.calibration.params
        else:
            row.error = payload
    return rows
