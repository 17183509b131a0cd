"""Embedded Dormand-Prince 5(4) integrator with independent step control per batch row.

Each row of the stacked state carries its own step size and acceptance
decision, so a sample's trajectory does not depend on which other samples
share the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# Dormand-Prince tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B4

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


@dataclass(frozen=True)
class IntegratorSettings:
    rtol: float = 1e-6
    atol: float = 1e-9
    min_step: float = 1e-8
    max_steps: int = 10_000


@dataclass
class IntervalResult:
    y: np.ndarray
    h_next: np.ndarray
    ok: np.ndarray
    n_steps: np.ndarray
    n_rejected: np.ndarray


RhsFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def integrate_interval(
    f: RhsFn,
    t0: float,
    t1: float,
    y0: np.ndarray,
    settings: IntegratorSettings = IntegratorSettings(),
    h0: np.ndarray | None = None,
) -> IntervalResult:
    """Advance every row of ``y0`` (shape ``(B, n)``) from ``t0`` to ``t1``.

    ``f(t, y, rows)`` returns derivatives for the subset of batch rows listed
    in ``rows``; ``t`` has one entry per listed row.  Rows whose step size
    collapses below ``settings.min_step`` or that produce non-finite values
    are flagged in ``ok`` and left at their last accepted state.
    """
    y = np.array(y0, dtype=float, copy=True)
    B = y.shape[0]
    span = t1 - t0
    t = np.full(B, float(t0))
    h = np.full(B, span) if h0 is None else np.minimum(np.asarray(h0, dtype=float), span)
    ok = np.ones(B, dtype=bool)
    n_steps = np.zeros(B, dtype=int)
    n_rej = np.zeros(B, dtype=int)
    active = np.arange(B)
    while active.size:
        ta = t[active]
        ya = y[active]
        remaining = t1 - ta
        last = h[active] >= remaining
        hh = np.where(last, remaining, h[active])
        hcol = hh[:, None]
        k = [f(ta, ya, active)]
        for i in range(1, 6):
            incr = sum(a * ki for a, ki in zip(_A[i], k) if a != 0.0)
            k.append(f(ta + _C[i] * hh, ya + hcol * incr, active))
        y_new = ya + hcol * sum(b * ki for b, ki in zip(_B, k) if b != 0.0)
        k.append(f(ta + hh, y_new, active))
        err = hcol * sum(e * ki for e, ki in zip(_E, k) if e != 0.0)
        scale = settings.atol + settings.rtol * np.maximum(np.abs(ya), np.abs(y_new))
        enorm = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        finite = np.all(np.isfinite(y_new), axis=1) & np.isfinite(enorm)
        accept = finite & (enorm <= 1.0)

        acc_rows = active[accept]
        y[acc_rows] = y_new[accept]
        t[acc_rows] = np.where(last[accept], t1, ta[accept] + hh[accept])
        n_steps[acc_rows] += 1
        n_rej[active[~accept]] += 1

        with np.errstate(divide="ignore"):
            factor = np.where(enorm > 0.0, SAFETY * enorm ** -0.2, MAX_FACTOR)
        factor = np.clip(np.nan_to_num(factor, nan=MIN_FACTOR), MIN_FACTOR, MAX_FACTOR)
        factor = np.where(accept, factor, np.minimum(factor, 1.0))
        proposed = hh * factor
        # A step shortened only to land on t1 should not shrink the next one.
        proposed = np.where(accept & last, np.maximum(proposed, h[active]), proposed)
        h[active] = np.minimum(proposed, span)

        failed = (~finite) | (h[active] < settings.min_step) | (n_steps[active] + n_rej[active] > settings.max_steps)
        failed &= ~(accept & last)
        ok[active[failed]] = False
        still = (t[active] < t1) & ~failed
        active = active[still]
    return IntervalResult(y=y, h_next=h, ok=ok, n_steps=n_steps, n_rejected=n_rej)
