"""RIS phase designs, BS transmit vectors and per-scheme rate formulas.

Phase profiles are arrays of radians in ``[0, 2*pi)``; the RIS reflection
matrix is ``diag(exp(1j * theta))``.  Four ways of sharing one RIS among its
users are supported:

``noma``  whole surface, phases averaged over the served users
``ssd``   surface split into per-user blocks, zero-forcing transmit vectors
``fd``    averaged phases, users on separate sub-bands
``td``    per-user phases, users in separate time slots
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .channel import ChannelSet, ula_response, upa_arguments
from .scenario import AngleSet, NetworkScenario

__all__ = [
    "DegenerateZFError",
    "PartitionError",
    "canonical",
    "user_phase_profile",
    "user_phase_table",
    "noma_phase",
    "ssd_blocks",
    "ssd_phase",
    "ssd_design",
    "zf_projector",
    "zf_beam",
    "matched_beam",
    "cascade_row",
    "multi_ris_design",
    "scheme_rate",
]

TWO_PI = 2 * np.pi
PINV_RCOND = 1e-10
DEGENERATE_TOL = 1e-8


class DegenerateZFError(ArithmeticError):
    """The intended channel lies inside the span being nulled."""


class PartitionError(ValueError):
    """The surface cannot be split among the requested users."""


def canonical(theta) -> np.ndarray:
    out = np.mod(theta, TWO_PI)
    # tiny negative inputs round up to exactly 2 pi
    return np.where(out >= TWO_PI, 0.0, out)


def _difference_arguments(angles: AngleSet, scenario: NetworkScenario, l, k):
    s = scenario.ris_spacing_m / scenario.wavelength
    u_dep, v_dep = upa_arguments(angles.ris_departure[l, k, 0], angles.ris_departure[l, k, 1], s)
    u_arr, v_arr = upa_arguments(angles.ris_arrival[l, 0], angles.ris_arrival[l, 1], s)
    return u_dep - u_arr, v_dep - v_arr


def _kron_phase(du, dv, m1: int, m2: int) -> np.ndarray:
    return canonical(np.angle(np.kron(ula_response(du, m1), ula_response(dv, m2))))


def user_phase_profile(l: int, k: int, angles: AngleSet, scenario: NetworkScenario,
                       m1: int | None = None, m2: int | None = None) -> np.ndarray:
    """Phases that co-phase user ``k``'s cascade through RIS ``l``.

    With these phases every summand of ``h_kl^H diag(e^{j theta}) a_I`` has
    the same phase.  ``m1``/``m2`` default to the scenario's surface size;
    smaller values give the profile of a sub-surface.
    """
    du, dv = _difference_arguments(angles, scenario, l, k)
    return _kron_phase(du, dv, m1 or scenario.m1, m2 or scenario.m2)


def user_phase_table(angles: AngleSet, scenario: NetworkScenario) -> np.ndarray:
    """All single-user profiles at once, shape ``(L, K, N0)``."""
    L, K = angles.ris_departure.shape[:2]
    ls, ks = np.meshgrid(np.arange(L), np.arange(K), indexing="ij")
    du, dv = _difference_arguments(angles, scenario, ls, ks)
    m1, m2 = scenario.m1, scenario.m2
    phase = np.pi * (du[..., None, None] * np.arange(m1)[:, None]
                     + dv[..., None, None] * np.arange(m2)[None, :])
    return canonical(phase.reshape(L, K, m1 * m2))


def noma_phase(profiles: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Element-wise arithmetic mean of canonicalised per-user profiles."""
    profiles = np.asarray(profiles, dtype=float)
    if profiles.ndim != 2 or profiles.shape[0] == 0:
        raise ValueError("need at least one served user")
    return canonical(profiles).mean(axis=0)


def ssd_blocks(m1: int, m2: int, n_users: int) -> list[np.ndarray]:
    """Element indices of contiguous column blocks, one per user.

    Columns are split as evenly as possible (block widths differ by at most
    one) and elements are indexed horizontal-major, ``i = col * m2 + row``.
    """
    if n_users < 1:
        raise PartitionError("need at least one user")
    if n_users > m1:
        raise PartitionError(f"cannot split {m1} columns among {n_users} users")
    cols = np.array_split(np.arange(m1), n_users)
    return [(c[:, None] * m2 + np.arange(m2)).ravel() for c in cols]


def ssd_phase(l: int, users: Sequence[int], angles: AngleSet,
              scenario: NetworkScenario) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Composite surface profile with each block steered to its own user.

    Returns the ``N0`` phase vector and the element indices of each user's
    block.  Users are assigned blocks in the order given.
    """
    m2 = scenario.m2
    theta = np.zeros(scenario.n_elements)
    blocks = {}
    for k, idx in zip(users, ssd_blocks(scenario.m1, m2, len(users))):
        width = len(idx) // m2
        theta[idx] = user_phase_profile(l, k, angles, scenario, m1=width, m2=m2)
        blocks[int(k)] = idx
    return theta, blocks


def cascade_row(channels: ChannelSet, l: int, k: int, theta: np.ndarray,
                elements: np.ndarray | None = None) -> np.ndarray:
    """Effective BS-side row ``sqrt(gain) h^H diag(e^{j theta}) G`` of one cascade.

    ``elements`` restricts the cascade to a subset of RIS elements.
    """
    h = channels.h[l, k]
    G = channels.G[l]
    coeff = h.conj() * np.exp(1j * np.asarray(theta))
    if elements is not None:
        coeff, G = coeff[elements], G[elements]
    return math.sqrt(channels.gain[l, k]) * (coeff @ G)


def zf_projector(rows: np.ndarray) -> np.ndarray:
    """Projector onto the orthogonal complement of the row space of ``rows``."""
    rows = np.atleast_2d(rows)
    n = rows.shape[1]
    if rows.shape[0] == 0:
        return np.eye(n, dtype=complex)
    gram_inv = np.linalg.pinv(rows @ rows.conj().T, rcond=PINV_RCOND, hermitian=True)
    return np.eye(n) - rows.conj().T @ gram_inv @ rows


def matched_beam(row: np.ndarray) -> np.ndarray:
    row = np.asarray(row)
    norm = np.linalg.norm(row)
    if norm == 0:
        raise DegenerateZFError("zero effective channel")
    return row.conj() / norm


def zf_beam(row: np.ndarray, interference_rows: np.ndarray) -> np.ndarray:
    """Unit transmit vector aligned with ``row`` and orthogonal to every interference row."""
    v = np.asarray(row).conj()
    z = zf_projector(interference_rows) @ v
    norm = np.linalg.norm(z)
    if norm <= DEGENERATE_TOL * np.linalg.norm(v):
        raise DegenerateZFError("intended channel lies in the span of the nulled channels")
    return z / norm


def ssd_design(l: int, users: Sequence[int], angles: AngleSet, scenario: NetworkScenario,
               channels: ChannelSet) -> tuple[np.ndarray, dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Surface-space-division design for the users of one RIS.

    Returns ``(theta, blocks, w)``: the composite phase vector, each user's
    element block and each user's zero-forcing transmit vector.  A user's
    effective channel is the cascade through its own block only.
    """
    users = [int(k) for k in users]
    if len(users) > channels.n_bs:
        raise DegenerateZFError(f"{len(users)} users exceed {channels.n_bs} BS antennas")
    theta, blocks = ssd_phase(l, users, angles, scenario)
    rows = {k: cascade_row(channels, l, k, theta, blocks[k]) for k in users}
    w = {}
    for k in users:
        others = np.array([rows[i] for i in users if i != k]).reshape(-1, channels.n_bs)
        w[k] = zf_beam(rows[k], others)
    return theta, blocks, w


def multi_ris_design(k: int, serving: Iterable[int], angles: AngleSet,
                     scenario: NetworkScenario, channels: ChannelSet
                     ) -> tuple[dict[int, np.ndarray], np.ndarray]:
    """Co-phased profiles on every serving RIS plus the combining transmit vector."""
    serving = [int(l) for l in serving]
    if not serving:
        raise ValueError("user needs at least one serving RIS")
    theta = {l: user_phase_profile(l, k, angles, scenario) for l in serving}
    aggregate = sum(cascade_row(channels, l, k, theta[l]) for l in serving)
    return theta, matched_beam(aggregate)


def scheme_rate(scheme: str, n_shared: int, p: float, gain: float, bandwidth: float,
                noise: float) -> float:
    """Interference-free rate of one user on a RIS shared by ``n_shared`` users."""
    if gain < 0 or p < 0:
        raise ValueError("power and gain must be non-negative")
    n = max(int(n_shared), 1)
    snr = p * gain / noise
    if scheme in ("noma", "ssd"):
        return bandwidth * math.log2(1 + snr)
    if scheme == "fd":
        return bandwidth / n * math.log2(1 + n * snr)
    if scheme == "td":
        return bandwidth / n * math.log2(1 + snr)
    raise ValueError(f"unknown scheme {scheme!r}")
