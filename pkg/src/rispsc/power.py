"""Weighted water-filling for interference-free power control.

Maximises ``sum_k u_k log2(1 + p_k g_k / noise)`` subject to
``sum_k p_k <= P`` and ``p_k >= 0`` through bisection on the dual price.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

__all__ = ["PowerAllocation", "waterfill", "weighted_rate"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PowerAllocation:
    p: np.ndarray
    price: float
    kkt_residual: float

    def __post_init__(self) -> None:
        self.p.setflags(write=False)


def weighted_rate(p, weights, gains, noise: float) -> float:
    p = np.asarray(p, dtype=float)
    return float(np.sum(np.asarray(weights) * np.log2(1.0 + p * np.asarray(gains) / noise)))


def _powers(price: float, u: np.ndarray, g: np.ndarray, noise: float) -> np.ndarray:
    return np.maximum(0.0, u / (price * math.log(2)) - noise / g)


def waterfill(weights, gains, noise: float, total_power: float,
              max_iter: int = 100) -> PowerAllocation:
    """Optimal powers for positive weights and non-negative gains.

    Users with zero gain receive no power.  The budget always binds when at
    least one gain is positive because every term increases in its power.
    """
    u = np.asarray(weights, dtype=float)
    g = np.asarray(gains, dtype=float)
    if u.shape != g.shape:
        raise ValueError("weights and gains must have the same shape")
    if np.any(u <= 0) or np.any(g < 0) or not total_power > 0 or not noise > 0:
        raise ValueError("need positive weights, non-negative gains, noise and power")
    p = np.zeros_like(g)
    active = g > 0
    if not np.any(active):
        log.warning("all effective gains are zero; allocating no power")
        return PowerAllocation(p, 0.0, 0.0)

    ua, ga = u[active], g[active]
    ln2 = math.log(2)
    lo = float(np.min(ua * ga / ((noise + total_power * ga) * ln2)))
    hi = float(np.max(ua * ga / (noise * ln2)))
    # the price is where the allocation exactly exhausts the budget; sum_p is decreasing in price
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        excess = _powers(mid, ua, ga, noise).sum() - total_power
        if abs(excess) <= 1e-12 * total_power:
            lo = hi = mid
            break
        if excess > 0:
            lo = mid
        else:
            hi = mid
    price = 0.5 * (lo + hi)
    pa = _powers(price, ua, ga, noise)
    # remove the last rounding slack so the budget holds and binds
    pa *= total_power / pa.sum()
    p[active] = pa
    marginal = ua * ga / ((noise + pa * ga) * ln2)
    on = pa > 0
    residual = float(np.max(np.abs(marginal[on] - price)) / price) if np.any(on) else 0.0
    return PowerAllocation(p, price, residual)
