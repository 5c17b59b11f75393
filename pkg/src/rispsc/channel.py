"""Steering vectors, cascaded BS-RIS-user channels and large-scale fading.

Steering vectors are unit-norm; the large-scale power gain of each
BS -> RIS l -> user k cascade is kept as a separate scalar ``gain[l, k]`` and
applied as an amplitude ``sqrt(gain)`` wherever rates are evaluated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .scenario import AngleSet, NetworkScenario, geometry_angles

__all__ = [
    "ChannelSet",
    "ula_response",
    "bs_response",
    "upa_arguments",
    "upa_response",
    "bs_ris_channel",
    "ris_user_channel",
    "path_gain",
    "large_scale_gain",
    "build_channel_set",
]


def ula_response(phase: float, n: int) -> np.ndarray:
    """Normalised ULA response ``exp(j*pi*i*phase)/sqrt(n)``, ``i = 0..n-1``."""
    if n < 1:
        raise ValueError("array needs at least one element")
    return np.exp(1j * np.pi * phase * np.arange(n)) / np.sqrt(n)


def bs_response(angle: float, scenario: NetworkScenario) -> np.ndarray:
    """BS ULA response towards ``angle`` (radians from broadside).

    The ULA argument is ``2 d_B sin(angle) / lambda`` so that adjacent
    antennas differ by ``2 pi d_B sin(angle) / lambda`` radians.
    """
    arg = 2 * scenario.bs_spacing_m / scenario.wavelength * np.sin(angle)
    return ula_response(arg, scenario.n_bs)


def upa_arguments(azimuth, elevation, spacing_over_lambda: float):
    """Horizontal and vertical ULA arguments of a UPA in the x-z plane."""
    scale = 2 * spacing_over_lambda
    return (scale * np.sin(elevation) * np.cos(azimuth), scale * np.cos(elevation))


def upa_response(azimuth: float, elevation: float, m1: int, m2: int,
                 scenario: NetworkScenario) -> np.ndarray:
    """Horizontal-major Kronecker UPA response of length ``m1*m2``."""
    u, v = upa_arguments(azimuth, elevation, scenario.ris_spacing_m / scenario.wavelength)
    return np.kron(ula_response(u, m1), ula_response(v, m2))


def _upa_batch(azimuth: np.ndarray, elevation: np.ndarray, m1: int, m2: int,
               spacing_over_lambda: float) -> np.ndarray:
    u, v = upa_arguments(azimuth, elevation, spacing_over_lambda)
    horiz = np.exp(1j * np.pi * u[..., None] * np.arange(m1))
    vert = np.exp(1j * np.pi * v[..., None] * np.arange(m2))
    out = (horiz[..., :, None] * vert[..., None, :]).reshape(*u.shape, m1 * m2)
    return out / np.sqrt(m1 * m2)


def bs_ris_channel(l: int, angles: AngleSet, scenario: NetworkScenario) -> np.ndarray:
    """Rank-one ``N0 x N`` channel ``a_I(arrival) a_B(departure)^H``."""
    az, el = angles.ris_arrival[l]
    a_i = upa_response(az, el, scenario.m1, scenario.m2, scenario)
    a_b = bs_response(angles.bs_departure[l], scenario)
    return np.outer(a_i, a_b.conj())


def ris_user_channel(l: int, k: int, angles: AngleSet, scenario: NetworkScenario) -> np.ndarray:
    az, el = angles.ris_departure[l, k]
    return upa_response(az, el, scenario.m1, scenario.m2, scenario)


def path_gain(distance_km, shadow_db=0.0):
    """Linear gain of one hop under ``128.1 + 37.6 log10(d)`` dB path loss."""
    d = np.asarray(distance_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distances must be positive")
    loss_db = 128.1 + 37.6 * np.log10(d) + shadow_db
    return 10.0 ** (-loss_db / 10.0)


def large_scale_gain(d_bs_ris_km, d_ris_user_km, shadow_bs_ris_db=0.0, shadow_ris_user_db=0.0):
    """Cascaded large-scale gain: product of the two per-hop gains."""
    return path_gain(d_bs_ris_km, shadow_bs_ris_db) * path_gain(d_ris_user_km, shadow_ris_user_db)


@dataclass(frozen=True)
class ChannelSet:
    """Small-scale steering channels plus large-scale gains.

    ``G[l]`` is ``N0 x N``, ``h[l, k]`` has ``N0`` entries and ``gain[l, k]``
    is the linear power gain of the BS -> RIS l -> user k cascade;
    ``m1``/``m2`` give the surface layout.
    """

    G: np.ndarray
    h: np.ndarray
    gain: np.ndarray
    m1: int
    m2: int

    def __post_init__(self) -> None:
        for arr in (self.G, self.h, self.gain):
            arr.setflags(write=False)

    @property
    def n_ris(self) -> int:
        return self.G.shape[0]

    @property
    def n_users(self) -> int:
        return self.h.shape[1]

    @property
    def n_bs(self) -> int:
        return self.G.shape[2]

    @property
    def n_elements(self) -> int:
        return self.G.shape[1]

    def to_json(self) -> str:
        def cplx(a):
            return {"re": np.real(a).tolist(), "im": np.imag(a).tolist()}
        return json.dumps({"m1": self.m1, "m2": self.m2, "G": cplx(self.G),
                           "h": cplx(self.h), "gain": self.gain.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ChannelSet":
        raw = json.loads(text)

        def cplx(d):
            return np.asarray(d["re"]) + 1j * np.asarray(d["im"])
        return cls(cplx(raw["G"]), cplx(raw["h"]), np.asarray(raw["gain"], dtype=float),
                   int(raw["m1"]), int(raw["m2"]))


def build_channel_set(scenario: NetworkScenario, angles: AngleSet | None = None,
                      rng: np.random.Generator | None = None, *,
                      shadowing: bool = True) -> ChannelSet:
    """Assemble every ``G_l``, ``h_kl`` and cascaded gain of a scenario.

    Shadowing is drawn once per hop (one BS-RIS value per RIS, one RIS-user
    value per pair) from ``rng``; by default the scenario seed drives it.
    """
    if angles is None:
        angles = geometry_angles(scenario)
    if rng is None:
        rng = np.random.default_rng([scenario.seed, 1])
    L, K = scenario.n_ris, scenario.n_users
    m1, m2 = scenario.m1, scenario.m2
    s_over_l = scenario.ris_spacing_m / scenario.wavelength

    a_i = _upa_batch(angles.ris_arrival[:, 0], angles.ris_arrival[:, 1], m1, m2, s_over_l)
    bs_arg = 2 * scenario.bs_spacing_m / scenario.wavelength * np.sin(angles.bs_departure)
    a_b = np.exp(1j * np.pi * bs_arg[:, None] * np.arange(scenario.n_bs)) / np.sqrt(scenario.n_bs)
    G = a_i[:, :, None] * a_b.conj()[:, None, :]
    h = _upa_batch(angles.ris_departure[..., 0], angles.ris_departure[..., 1], m1, m2, s_over_l)

    ris = scenario.ris_xyz
    d1 = np.linalg.norm(ris - scenario.bs_xyz, axis=-1) / 1e3
    d2 = np.linalg.norm(scenario.user_xyz[None, :, :] - ris[:, None, :], axis=-1) / 1e3
    std = scenario.shadow_std_db if shadowing else 0.0
    s1 = rng.normal(0.0, 1.0, L) * std
    s2 = rng.normal(0.0, 1.0, (L, K)) * std
    gain = large_scale_gain(d1[:, None], d2, s1[:, None], s2)
    return ChannelSet(G=G, h=h, gain=gain, m1=m1, m2=m2)
