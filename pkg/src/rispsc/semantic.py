"""Piecewise-linear computation overhead and greedy compression-ratio allocation.

Each user owns a decreasing, convex-shaped overhead curve ``f_k(rho)`` made of
``D`` linear segments.  Segment ``d`` (1-based) covers
``C[d] < rho <= C[d-1]`` with ``C[0] = 1``; the bottom segment is closed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "SemanticProfile",
    "RatioAllocation",
    "overhead",
    "segment_budgets",
    "allocate_ratios",
    "ProfileError",
]

log = logging.getLogger(__name__)

_CONT_TOL = 1e-9
_BUDGET_TOL = 1e-9


class ProfileError(ValueError):
    """Raised for malformed overhead profiles or out-of-domain ratios."""


@dataclass(frozen=True)
class SemanticProfile:
    """Overhead curve of one user.

    ``slopes[d-1]``/``intercepts[d-1]`` describe segment ``d``;
    ``bounds = (C_0=1, C_1, ..., C_D)``.
    """

    slopes: tuple[float, ...]
    intercepts: tuple[float, ...]
    bounds: tuple[float, ...]
    rho_min: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "slopes", tuple(float(a) for a in self.slopes))
        object.__setattr__(self, "intercepts", tuple(float(b) for b in self.intercepts))
        object.__setattr__(self, "bounds", tuple(float(c) for c in self.bounds))
        object.__setattr__(self, "rho_min", float(self.rho_min))
        self.validate()

    @property
    def n_segments(self) -> int:
        return len(self.slopes)

    def validate(self) -> None:
        A, B, C = self.slopes, self.intercepts, self.bounds
        D = len(A)
        if D < 1 or len(B) != D or len(C) != D + 1:
            raise ProfileError(
                f"profile needs D slopes, D intercepts and D+1 bounds, got "
                f"{len(A)}, {len(B)}, {len(C)}")
        if abs(C[0] - 1.0) > 1e-12:
            raise ProfileError(f"first bound must be 1, got {C[0]}")
        if any(not np.isfinite(v) for v in (*A, *B, *C, self.rho_min)):
            raise ProfileError("profile entries must be finite")
        if any(a >= 0 for a in A):
            raise ProfileError(f"slopes must be negative: {A}")
        if any(b <= 0 for b in B):
            raise ProfileError(f"intercepts must be positive: {B}")
        if any(C[d] <= C[d + 1] for d in range(D)) or C[D] <= 0:
            raise ProfileError(f"bounds must decrease strictly towards a positive floor: {C}")
        if any(abs(A[d]) >= abs(A[d + 1]) for d in range(D - 1)):
            raise ProfileError(f"slope magnitudes must grow segment by segment: {A}")
        for d in range(D - 1):
            left = A[d] * C[d + 1] + B[d]
            right = A[d + 1] * C[d + 1] + B[d + 1]
            if abs(left - right) > _CONT_TOL * max(1.0, abs(left)):
                raise ProfileError(
                    f"overhead is discontinuous at C_{d + 1}={C[d + 1]}: {left} vs {right}")
        floor = C[D - 1] if D > 1 else C[0]
        if not (C[D] <= self.rho_min <= floor) or self.rho_min <= 0:
            raise ProfileError(
                f"rho_min={self.rho_min} must lie in [C_D={C[D]}, C_(D-1)={floor}]")
        if A[0] + B[0] < -_CONT_TOL:
            raise ProfileError("overhead at rho=1 must be non-negative")

    def segment_of(self, rho: float) -> int:
        """1-based segment index containing ``rho``."""
        C = self.bounds
        if rho > C[0] + 1e-12 or rho < C[-1] - 1e-12:
            raise ProfileError(f"rho={rho} outside [{C[-1]}, {C[0]}]")
        for d in range(1, self.n_segments):
            if rho > C[d]:
                return d
        return self.n_segments

    def to_config(self) -> dict:
        return {"A": list(self.slopes), "B": list(self.intercepts),
                "C": list(self.bounds), "rho_min": self.rho_min}

    @classmethod
    def from_segments(cls, slopes: Sequence[float], bounds: Sequence[float],
                      rho_min: float, value_at_one: float = 0.0) -> "SemanticProfile":
        """Build a continuous profile from slopes and bounds.

        Intercepts follow from continuity, anchored at ``f(1) = value_at_one``.
        """
        intercepts = [value_at_one - slopes[0] * bounds[0]]
        for d in range(1, len(slopes)):
            intercepts.append(intercepts[-1] + (slopes[d - 1] - slopes[d]) * bounds[d])
        return cls(tuple(slopes), tuple(intercepts), tuple(bounds), rho_min)


@dataclass(frozen=True)
class RatioAllocation:
    rho: np.ndarray
    segment: int
    consumed: float

    def __post_init__(self) -> None:
        self.rho.setflags(write=False)


def overhead(profile: SemanticProfile, rho: float) -> float:
    """Computation overhead ``f_k(rho)``."""
    d = profile.segment_of(rho)
    return profile.slopes[d - 1] * rho + profile.intercepts[d - 1]


def _common_depth(profiles: Sequence[SemanticProfile]) -> int:
    if not profiles:
        raise ProfileError("need at least one profile")
    depths = {p.n_segments for p in profiles}
    if len(depths) != 1:
        raise ProfileError(f"all users must share one segment count, got {sorted(depths)}")
    return depths.pop()


def segment_budgets(profiles: Sequence[SemanticProfile]) -> np.ndarray:
    """Total overhead ``Q_1..Q_{D+1}`` with every user parked at a segment's upper edge.

    Returned array is 0-indexed: ``out[d-1] == Q_d``.
    """
    D = _common_depth(profiles)
    out = np.zeros(D + 1)
    for p in profiles:
        for d in range(1, D + 1):
            out[d - 1] += p.slopes[d - 1] * p.bounds[d - 1] + p.intercepts[d - 1]
        out[D] += overhead(p, p.rho_min)
    return out


def allocate_ratios(profiles: Sequence[SemanticProfile], rates: Sequence[float],
                    budget: float) -> RatioAllocation:
    """Greedy compression-ratio allocation under a total overhead budget.

    All users are first parked at the upper edge of the segment the budget
    reaches; the remaining budget is then spent user by user in order of
    decreasing rate (ties by lower index), each either jumping to the segment
    floor, moving part-way, or staying.
    """
    rates = np.asarray(rates, dtype=float)
    K = len(profiles)
    if rates.shape != (K,):
        raise ValueError(f"expected {K} rates, got shape {rates.shape}")
    D = _common_depth(profiles)
    Q = segment_budgets(profiles)

    if budget >= Q[D]:
        rho = np.array([p.rho_min for p in profiles])
        return RatioAllocation(rho, D + 1, _total(profiles, rho))

    if budget < Q[0]:
        log.warning("budget %.3g below the overhead at rho=1 (%.3g); no compression", budget, Q[0])
        rho = np.ones(K)
        return RatioAllocation(rho, 1, _total(profiles, rho))

    # Q_{d*} <= budget < Q_{d*+1}
    d_star = int(np.searchsorted(Q, budget, side="right"))
    upper = np.array([p.bounds[d_star - 1] for p in profiles])
    rho = upper.copy()
    assert Q[d_star - 1] <= budget + _BUDGET_TOL

    order = sorted(range(K), key=lambda k: (-rates[k], k))
    residual = budget - Q[d_star - 1]
    prev = np.inf
    for k in order:
        p = profiles[k]
        A = p.slopes[d_star - 1]
        target = p.bounds[d_star]
        if d_star == D:
            target = max(target, p.rho_min)
        full_step = A * (target - upper[k])
        assert residual <= prev + _BUDGET_TOL
        prev = residual
        if residual >= full_step:
            rho[k] = target
        elif residual > 0:
            rho[k] = upper[k] + residual / A
        residual -= full_step

    return RatioAllocation(rho, d_star, _total(profiles, rho))


def _total(profiles: Sequence[SemanticProfile], rho: np.ndarray) -> float:
    return float(sum(overhead(p, r) for p, r in zip(profiles, rho)))
