"""Queue-walk kernels.

The hot loop advancing the two relay queues over a slot sequence is compiled
with numba by default.  Setting the environment variable ``BDRELAY_NO_NUMBA``
(to any nonempty value) before import selects a vectorized numpy fallback
instead; the fallback evaluates the same recursion through running-extremum
form, so its results can differ from the loop by float round-off.

Inputs are per-slot inflow and outflow-capacity arrays.  Admission and
delivery never happen in the same slot, so for every slot at most one of
``in1[i] + in2[i]`` and ``out1cap[i] + out2cap[i]`` is nonzero; callers must
respect that, the kernels do not check it.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["BACKEND", "queue_walk", "walk_loop_reference"]


def _walk_loop(in1, in2, out1cap, out2cap, q1, q2, rr1, rr2):
    n = in1.shape[0]
    for i in range(n):
        q1 = q1 + in1[i]
        q2 = q2 + in2[i]
        # deliveries are truncated by the queue content at slot start;
        # on delivery slots the inflows are zero, so q1/q2 still hold it
        d1 = out1cap[i]
        if d1 > q2:
            d1 = q2
        d2 = out2cap[i]
        if d2 > q1:
            d2 = q1
        q2 -= d1
        q1 -= d2
        rr1[i] = d1
        rr2[i] = d2
    return q1, q2


def _lindley(a, b, q0, out):
    """Backlog recursion q <- max(q + a - b, 0) in running-extremum form.

    Fills ``out`` with the delivered amounts min(b, backlog) and returns the
    final backlog.
    """
    s = np.cumsum(a - b)
    low = np.minimum.accumulate(s)
    q = s + np.maximum(q0, -low)
    np.maximum(q, 0.0, out=q)
    qprev = np.empty_like(q)
    qprev[0] = q0
    qprev[1:] = q[:-1]
    np.subtract(qprev + a, q, out=out)
    np.clip(out, 0.0, b, out=out)
    return float(q[-1])


def _walk_vec(in1, in2, out1cap, out2cap, q1, q2, rr1, rr2):
    # queue 1 feeds deliveries to user 2, queue 2 feeds deliveries to user 1
    q1f = _lindley(in1, out2cap, q1, rr2)
    q2f = _lindley(in2, out1cap, q2, rr1)
    return q1f, q2f


# the plain loop stays importable for tests whatever the backend
walk_loop_reference = _walk_loop

_DISABLED = bool(os.environ.get("BDRELAY_NO_NUMBA", ""))
if not _DISABLED:
    try:
        from numba import njit
    except ImportError:
        njit = None
    if njit is not None:
        _kernel = njit(cache=True)(_walk_loop)
        BACKEND = "numba"
    else:
        _kernel = _walk_vec
        BACKEND = "numpy"
else:
    _kernel = _walk_vec
    BACKEND = "numpy"


def queue_walk(in1, in2, out1cap, out2cap, q1_0=0.0, q2_0=0.0):
    """Run the queue recursion over a slot sequence.

    Returns ``(rr1, rr2, q1_final, q2_final)`` where the arrays hold the
    per-slot delivered amounts toward user 1 and user 2.
    """
    in1 = np.ascontiguousarray(in1, dtype=np.float64)
    in2 = np.ascontiguousarray(in2, dtype=np.float64)
    out1cap = np.ascontiguousarray(out1cap, dtype=np.float64)
    out2cap = np.ascontiguousarray(out2cap, dtype=np.float64)
    n = in1.shape[0]
    if not (in2.shape[0] == out1cap.shape[0] == out2cap.shape[0] == n):
        raise ValueError("slot arrays must share one length")
    rr1 = np.empty(n, dtype=np.float64)
    rr2 = np.empty(n, dtype=np.float64)
    q1f, q2f = _kernel(in1, in2, out1cap, out2cap, float(q1_0), float(q2_0),
                       rr1, rr2)
    return rr1, rr2, float(q1f), float(q2f)
