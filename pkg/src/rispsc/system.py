"""Sum semantic-aware rate evaluation and the alternating optimiser.

Each outer iteration updates four blocks in turn: RIS-user association,
compression ratios, phase/transmit beamforming and transmit power.  A block's
result is kept only if it does not lower the objective, so the recorded trace
never decreases.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import association
from .beamforming import (DegenerateZFError, PartitionError, canonical, matched_beam,
                          noma_phase, ssd_phase, user_phase_table, zf_beam)
from .channel import ChannelSet, build_channel_set
from .power import waterfill
from .scenario import AngleSet, NetworkScenario, SolverOptions, geometry_angles
from .semantic import allocate_ratios

__all__ = [
    "Beams",
    "Solution",
    "SystemModel",
    "achievable_rates",
    "achievable_rate",
    "evaluate_objective",
    "optimize",
    "power_continuation",
    "iter_power_continuation",
]

log = logging.getLogger(__name__)


@dataclass
class Beams:
    """Phase and transmit design.

    ``theta[l]`` is the surface profile of RIS ``l``.  ``rx_theta[l, k]`` is
    the profile user ``k`` sees on RIS ``l`` during its own resource (it only
    differs from ``theta[l]`` under time division).  ``elements[l, k]`` marks
    the elements that carry user ``k``'s link on RIS ``l`` (its block under
    surface space division, the whole surface otherwise).
    """

    theta: np.ndarray
    rx_theta: np.ndarray
    elements: np.ndarray | None
    w: np.ndarray
    degenerate: tuple[int, ...] = ()


@dataclass
class Solution:
    x: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    w: np.ndarray
    p: np.ndarray
    objective: float
    rates: np.ndarray
    trace: list[float]
    iterations: int
    converged: bool
    scheme: str
    degenerate: tuple[int, ...] = ()
    beams: Beams | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "objective_bps": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "association": self.x.astype(int).tolist(),
            "rho": self.rho.tolist(),
            "power_w": self.p.tolist(),
            "rates_bps": self.rates.tolist(),
            "phases_rad": self.theta.tolist(),
            "beams": {"re": self.w.real.tolist(), "im": self.w.imag.tolist()},
            "zf_fallback_users": list(self.degenerate),
            "trace": list(self.trace),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


class SystemModel:
    """Everything about a scenario that stays fixed during optimisation."""

    def __init__(self, scenario: NetworkScenario, channels: ChannelSet | None = None,
                 angles: AngleSet | None = None, scheme: str | None = None):
        self.scenario = scenario
        self.angles = angles if angles is not None else geometry_angles(scenario)
        self.channels = channels if channels is not None else build_channel_set(scenario, self.angles)
        self.scheme = scheme or scenario.solver.ma_scheme
        self.noise = scenario.noise_power_w
        self.bandwidth = scenario.bandwidth_hz
        self.table = user_phase_table(self.angles, scenario)
        self.preferences = association.build_preference_lists(self.channels)

    @property
    def n_users(self) -> int:
        return self.channels.n_users

    @property
    def n_ris(self) -> int:
        return self.channels.n_ris

    # -- channel algebra ----------------------------------------------------
    def rows(self, beams: Beams) -> np.ndarray:
        """Per-cascade effective rows, shape ``(L, K, N)``."""
        ch = self.channels
        coeff = ch.h.conj() * np.exp(1j * beams.rx_theta)
        if beams.elements is not None:
            coeff = coeff * beams.elements
        coeff = coeff * np.sqrt(ch.gain)[..., None]
        return np.einsum("lkn,lnm->lkm", coeff, ch.G)

    def rates(self, x: np.ndarray, rows: np.ndarray, w: np.ndarray, p: np.ndarray) -> np.ndarray:
        return achievable_rates(x, rows, w, p, self.scheme, self.bandwidth, self.noise)

    def objective(self, x, rows, w, p, rho) -> float:
        return float(np.sum(self.rates(x, rows, w, p) / rho))

    # -- block designs ------------------------------------------------------
    def initial_beams(self) -> Beams:
        L, K, N0 = self.table.shape
        zeros = np.zeros((L, N0))
        rx = np.zeros((L, K, N0))
        beams = Beams(zeros, rx, None, np.zeros((K, self.channels.n_bs), dtype=complex))
        rows = self.rows(beams)
        w = np.empty_like(beams.w)
        for k in range(K):
            w[k] = _unit_or_default(rows[self.preferences[k][0], k], self.channels.n_bs)
        beams.w = w
        return beams

    def design(self, x: np.ndarray, previous_w: np.ndarray) -> Beams:
        """Phases per RIS from the sharing scheme, then one transmit vector per user."""
        L, K, N0 = self.table.shape
        served = [np.flatnonzero(x[:, l]) for l in range(L)]
        theta = np.zeros((L, N0))
        elements = None
        if self.scheme == "td":
            rx = self.table.copy()
            for l, users in enumerate(served):
                if len(users):
                    theta[l] = self.table[l, users[0]]
        else:
            if self.scheme in ("noma", "fd"):
                for l, users in enumerate(served):
                    if len(users):
                        theta[l] = noma_phase(self.table[l, users])
            else:
                elements = np.ones((L, K, N0), dtype=bool)
                for l, users in enumerate(served):
                    if len(users):
                        theta[l], blocks = ssd_phase(l, users, self.angles, self.scenario)
                        for k, idx in blocks.items():
                            elements[l, k] = False
                            elements[l, k, idx] = True
            rx = np.broadcast_to(theta[:, None, :], (L, K, N0)).copy()

        beams = Beams(canonical(theta), rx, elements, previous_w.copy())
        R = np.einsum("kl,lkn->kn", x, self.rows(beams))
        shared = (x @ x.T) > 0
        degenerate = []
        for k in range(K):
            if not np.any(R[k]):
                continue
            others = np.flatnonzero(shared[k])
            others = others[others != k]
            if self.scheme == "ssd" and len(others):
                try:
                    beams.w[k] = zf_beam(R[k], R[others])
                    continue
                except DegenerateZFError:
                    degenerate.append(k)
            beams.w[k] = matched_beam(R[k])
        beams.degenerate = tuple(degenerate)
        return beams

    def share_counts(self, x: np.ndarray) -> np.ndarray:
        load = x.sum(axis=0)
        return np.maximum((x * load[None, :]).max(axis=1), 1)

    def power(self, x, rows, w, rho, total_power: float | None = None) -> np.ndarray:
        R = np.einsum("kl,lkn->kn", x, rows)
        g = np.abs(np.einsum("kn,kn->k", R, w)) ** 2
        n = self.share_counts(x)
        u = self.bandwidth / np.asarray(rho)
        if self.scheme == "fd":
            u, g = u / n, g * n
        elif self.scheme == "td":
            u = u / n
        if total_power is None:
            total_power = self.scenario.power_w
        return waterfill(u, g, self.noise, total_power).p


def _unit_or_default(row: np.ndarray, n: int) -> np.ndarray:
    if np.any(row):
        return matched_beam(row)
    return np.full(n, 1 / math.sqrt(n), dtype=complex)


def achievable_rates(x: np.ndarray, rows: np.ndarray, w: np.ndarray, p: np.ndarray,
                     scheme: str, bandwidth: float, noise: float) -> np.ndarray:
    """Exact SINR rate of every user in bits/s.

    User ``k`` hears every stream through the cascades of its own associated
    RISs.  Under frequency and time division, users sharing a RIS use
    orthogonal resources and do not interfere with each other; the pre-log
    shrinks by the largest number of users on any of the user's RISs.
    """
    x = np.asarray(x)
    K = x.shape[0]
    R = np.einsum("kl,lkn->kn", x, rows)
    received = np.abs(R @ w.T) ** 2 * np.asarray(p)[None, :]
    desired = np.diag(received).copy()
    if scheme in ("noma", "ssd"):
        interferers = ~np.eye(K, dtype=bool)
        n = np.ones(K)
    elif scheme in ("fd", "td"):
        interferers = (x @ x.T) == 0
        load = x.sum(axis=0)
        n = np.maximum((x * load[None, :]).max(axis=1), 1)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    interference = np.sum(received * interferers, axis=1)
    if scheme == "fd":
        sinr = n * desired / (noise + n * interference)
    else:
        sinr = desired / (noise + interference)
    return bandwidth / n * np.log2(1 + sinr)


def achievable_rate(k: int, x, rows, w, p, scheme: str, bandwidth: float, noise: float) -> float:
    return float(achievable_rates(x, rows, w, p, scheme, bandwidth, noise)[k])


def evaluate_objective(rates, rho) -> float:
    """Sum semantic-aware rate ``sum_k r_k / rho_k``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("compression ratios must be positive")
    return float(np.sum(np.asarray(rates) / rho))


def _warm_state(initial: Solution, total_power: float, K: int, L: int):
    if initial.beams is None or initial.x.shape != (K, L):
        raise ValueError("warm start does not match the scenario")
    old = initial.beams
    beams = Beams(old.theta.copy(), old.rx_theta.copy(),
                  None if old.elements is None else old.elements.copy(), old.w.copy(),
                  old.degenerate)
    spent = float(np.sum(initial.p))
    p = initial.p * (total_power / spent) if spent > 0 else np.full(K, total_power / K)
    return initial.x.copy(), np.array(initial.rho, dtype=float), beams, p


def optimize(scenario: NetworkScenario, options: SolverOptions | None = None, *,
             model: SystemModel | None = None, initial: Solution | None = None) -> Solution:
    """Alternate association, ratios, beamforming and power until the objective settles.

    Starts from no association, no compression, zero phases, per-user matched
    filters towards each user's preferred RIS and an even power split.  Stops
    when the relative objective gain of a full iteration drops below
    ``options.tol`` or after ``options.max_iters`` iterations.

    Parameters
    ----------
    initial : Solution, optional
        Warm start.  Its association, ratios and beams are reused and its
        powers are rescaled to the scenario's power budget.  It must come from
        a scenario with the same users, RISs and channels.
    """
    options = options or scenario.solver
    if model is None:
        model = SystemModel(scenario, scheme=options.ma_scheme)
    if model.scheme == "ssd" and scenario.max_users_per_ris > scenario.m1:
        raise PartitionError(
            f"K0={scenario.max_users_per_ris} users cannot share {scenario.m1} RIS columns")
    K, L = model.n_users, model.n_ris
    profiles = scenario.profiles
    order_rng = np.random.default_rng([scenario.seed, 2]) if options.shuffle_users else None

    if initial is None:
        x = np.zeros((K, L), dtype=np.int8)
        rho = np.ones(K)
        beams = model.initial_beams()
        p = np.full(K, scenario.power_w / K)
    else:
        x, rho, beams, p = _warm_state(initial, scenario.power_w, K, L)
    rows = model.rows(beams)
    best = model.objective(x, rows, beams.w, p, rho)
    trace = [best]
    converged = False
    iterations = 0

    for iterations in range(1, options.max_iters + 1):
        start = best

        def frozen(candidate, rows=rows, w=beams.w, p=p, rho=rho):
            return model.objective(candidate, rows, w, p, rho)

        x_new = association.match(scenario, model.channels, frozen, rng=order_rng)
        if not np.array_equal(x_new, x):
            value = frozen(x_new)
            if value >= best:
                x, best = x_new, value

        rates = model.rates(x, rows, beams.w, p)
        rho_new = allocate_ratios(profiles, rates, scenario.budget).rho
        value = model.objective(x, rows, beams.w, p, rho_new)
        if value >= best:
            rho, best = np.array(rho_new), value

        beams_new = model.design(x, beams.w)
        rows_new = model.rows(beams_new)
        value = model.objective(x, rows_new, beams_new.w, p, rho)
        if value >= best:
            beams, rows, best = beams_new, rows_new, value

        if x.any():
            p_new = model.power(x, rows, beams.w, rho, scenario.power_w)
            value = model.objective(x, rows, beams.w, p_new, rho)
            if value >= best:
                p, best = p_new, value

        trace.append(best)
        if best - start <= options.tol * max(abs(start), 1e-300) and iterations > 1:
            converged = True
            break
        if best == start == 0.0:
            converged = True
            break

    rates = model.rates(x, rows, beams.w, p)
    if not converged:
        log.warning("alternation stopped after %d iterations without converging", iterations)
    return Solution(x=x, rho=rho, theta=beams.theta, w=beams.w, p=p, objective=best,
                    rates=rates, trace=trace, iterations=iterations, converged=converged,
                    scheme=model.scheme, degenerate=beams.degenerate, beams=beams)


def iter_power_continuation(scenario: NetworkScenario, powers,
                            options: SolverOptions | None = None, *,
                            model: SystemModel | None = None):
    """Yield ``(index, solution)`` for each power budget, smallest budget first.

    Every budget after the first is solved twice, once from the default
    start and once from the previous budget's solution with its powers scaled
    up, and the better result is kept.  Raising every power by the same factor
    cannot lower any SINR, so the warm start alone already guarantees that the
    objectives never decrease as the budget grows.
    """
    options = options or scenario.solver
    if model is None:
        model = SystemModel(scenario, scheme=options.ma_scheme)
    powers = [float(v) for v in powers]
    previous = None
    for i in sorted(range(len(powers)), key=lambda i: powers[i]):
        sc = scenario.replace(power_w=powers[i])
        sol = optimize(sc, options, model=model)
        if previous is not None:
            warm = optimize(sc, options, model=model, initial=previous)
            if warm.objective > sol.objective:
                sol = warm
        previous = sol
        yield i, sol


def power_continuation(scenario: NetworkScenario, powers, options: SolverOptions | None = None,
                       *, model: SystemModel | None = None) -> list[Solution]:
    """Solutions at several power budgets, in the order of ``powers``.

    See :func:`iter_power_continuation` for the warm-start scheme.
    """
    out: list[Solution | None] = [None] * len(powers)
    for i, sol in iter_power_continuation(scenario, powers, options, model=model):
        out[i] = sol
    return out
