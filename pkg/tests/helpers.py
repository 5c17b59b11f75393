"""Factories and brute-force oracles shared by the test modules."""

from __future__ import annotations

import copy
import itertools
import json

import numpy as np

from rispsc.channel import ChannelSet
from rispsc.scenario import NetworkScenario, load_scenario
from rispsc.semantic import SemanticProfile

BASE_CONFIG = {
    "rf": {"N": 4, "M1": 4, "M2": 3, "L": 2, "K": 3, "power_w": 1.0},
    "geometry": {"seed": 3},
    "limits": {"K0": 2, "L0": 2},
}


def config(**sections) -> dict:
    """``BASE_CONFIG`` with per-section overrides, e.g. ``config(rf={"K": 5})``."""
    cfg = copy.deepcopy(BASE_CONFIG)
    for name, values in sections.items():
        cfg.setdefault(name, {}).update(values)
    return cfg


def scenario(**sections) -> NetworkScenario:
    return load_scenario(json.dumps(config(**sections)))


def crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_channels(rng: np.random.Generator, L: int, K: int, m1: int, m2: int,
                    N: int) -> ChannelSet:
    """Full-rank Gaussian channels with log-uniform large-scale gains."""
    N0 = m1 * m2
    gain = 10.0 ** rng.uniform(-12, -8, (L, K))
    return ChannelSet(crandn(rng, L, N0, N), crandn(rng, L, K, N0), gain, m1, m2)


def random_profile(rng: np.random.Generator, D: int, value_at_one: float = 0.0) -> SemanticProfile:
    """Continuous profile with ``D`` segments and slopes of growing magnitude.

    No compression costs ``value_at_one`` (zero by default).
    """
    cuts = np.sort(rng.uniform(0.1, 0.95, D))[::-1]
    bounds = (1.0, *cuts)
    slopes = -np.cumsum(rng.uniform(0.2, 3.0, D))
    floor = bounds[D - 1] if D > 1 else 1.0
    rho_min = float(rng.uniform(bounds[D], floor))
    return SemanticProfile.from_segments(tuple(slopes), bounds, rho_min,
                                         value_at_one=value_at_one)


def overhead_many(profile: SemanticProfile, rho: np.ndarray) -> np.ndarray:
    """Vectorised overhead, evaluated independently of the library."""
    rho = np.asarray(rho, dtype=float)
    out = np.empty_like(rho)
    C = profile.bounds
    for d, (a, b) in enumerate(zip(profile.slopes, profile.intercepts), start=1):
        lower = C[d] if d < profile.n_segments else -np.inf
        mask = (rho <= C[d - 1] + 1e-15) & (rho > lower)
        out[mask] = a * rho[mask] + b
    return out


def cheapest_ratio(profile: SemanticProfile, spend: np.ndarray) -> np.ndarray:
    """Smallest ratio whose overhead fits in ``spend`` (NaN when even 1 does not)."""
    spend = np.asarray(spend, dtype=float)
    rho = np.full(spend.shape, np.nan)
    top = profile.slopes[0] + profile.intercepts[0]
    floor_cost = float(overhead_many(profile, np.array([profile.rho_min]))[0])
    rho[spend >= floor_cost] = profile.rho_min
    C = profile.bounds
    for d, (a, b) in enumerate(zip(profile.slopes, profile.intercepts), start=1):
        lo_cost, hi_cost = a * C[d - 1] + b, a * max(C[d], profile.rho_min) + b
        mask = np.isnan(rho) & (spend >= lo_cost - 1e-15) & (spend < hi_cost)
        rho[mask] = (spend[mask] - b) / a
    rho[spend < top - 1e-15] = np.nan
    return rho


def grid_ratio_optimum(profiles, rates, budget: float, step: float = 1e-3) -> float:
    """Best ``sum r_k / rho_k`` over a ``step`` grid on all but the last ratio.

    The last ratio is then set exactly to the cheapest value the leftover
    budget allows, which is optimal for it because the objective falls and the
    overhead rises as a ratio grows.
    """
    grids = [np.append(np.arange(p.rho_min, 1.0, step), 1.0) for p in profiles[:-1]]
    if grids:
        mesh = np.meshgrid(*grids, indexing="ij")
        cost = sum(overhead_many(p, m) for p, m in zip(profiles, mesh))
        head = sum(r / m for r, m in zip(rates, mesh))
    else:
        cost, head = np.zeros(1), np.zeros(1)
    last = cheapest_ratio(profiles[-1], budget - cost)
    total = head + rates[-1] / last
    total = np.where(np.isnan(last), -np.inf, total)
    return float(np.max(total))


def feasible_matchings(K: int, L: int, K0: int, L0: int):
    """Every 0/1 ``K x L`` matrix meeting both cardinality caps."""
    for bits in itertools.product((0, 1), repeat=K * L):
        x = np.array(bits, dtype=np.int8).reshape(K, L)
        if np.all(x.sum(axis=0) <= K0) and np.all(x.sum(axis=1) <= L0):
            yield x


def kron_loop(h: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Horizontal-major Kronecker product written as a double loop."""
    out = np.empty(len(h) * len(v), dtype=complex)
    for i in range(len(h)):
        for j in range(len(v)):
            out[i * len(v) + j] = h[i] * v[j]
    return out
