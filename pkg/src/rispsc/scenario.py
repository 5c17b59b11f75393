"""Problem instances: configuration parsing, deployment presets and geometry.

Coordinates are right-handed with ``z`` up.  Azimuth is the ``atan2`` of the
horizontal displacement measured from ``+x``; elevation is measured from
``+z`` (so a point straight below has elevation ``pi``).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Sequence

import numpy as np

from .semantic import ProfileError, SemanticProfile

__all__ = [
    "ConfigError",
    "ValidationError",
    "SolverOptions",
    "NetworkScenario",
    "AngleSet",
    "load_scenario",
    "dump_scenario",
    "scenario_from_config",
    "scenario_to_config",
    "preset_deployment",
    "load_preset",
    "place_users",
    "geometry_angles",
    "DEPLOYMENTS",
    "USER_CASES",
    "MA_SCHEMES",
]

SPEED_OF_LIGHT = 299_792_458.0
DEPLOYMENTS = ("central", "distributed1", "distributed2")
USER_CASES = ("case1", "case2")
MA_SCHEMES = ("noma", "ssd", "fd", "td")


class ConfigError(ValueError):
    """Configuration text does not match the schema."""


class ValidationError(ValueError):
    """A parsed instance violates a model invariant."""


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-4
    max_iters: int = 50
    ma_scheme: str = "ssd"
    shuffle_users: bool = False

    def __post_init__(self) -> None:
        if self.ma_scheme not in MA_SCHEMES:
            raise ValidationError(f"solver.ma_scheme must be one of {MA_SCHEMES}, got {self.ma_scheme!r}")
        if not self.tol > 0:
            raise ValidationError("solver.tol must be positive")
        if self.max_iters < 1:
            raise ValidationError("solver.max_iters must be >= 1")


Point = tuple[float, float, float]


@dataclass(frozen=True)
class NetworkScenario:
    """Immutable problem instance.

    Positions are stored as tuples so instances compare and hash by value;
    use the ``*_xyz`` properties for array views.
    """

    n_bs: int
    m1: int
    m2: int
    n_users: int
    bs_position: Point
    ris_positions: tuple[Point, ...]
    user_positions: tuple[Point, ...]
    profiles: tuple[SemanticProfile, ...]
    bandwidth_hz: float = 1e6
    noise_psd_dbm_hz: float = -174.0
    carrier_hz: float = 2.4e9
    power_w: float = 1.0
    budget: float = 1.0
    max_users_per_ris: int = 2
    max_ris_per_user: int = 2
    bs_spacing_m: float | None = None
    ris_spacing_m: float | None = None
    shadow_std_db: float = 8.0
    seed: int = 0
    area_m: float = 100.0
    deployment: str | None = None
    user_case: str | None = None
    user_disc_radius_m: float = 20.0
    user_height_m: float = 1.5
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self) -> None:
        lam = self.wavelength
        if self.bs_spacing_m is None:
            object.__setattr__(self, "bs_spacing_m", lam / 2)
        if self.ris_spacing_m is None:
            object.__setattr__(self, "ris_spacing_m", lam / 2)
        object.__setattr__(self, "bs_position", _point(self.bs_position, "bs_position"))
        object.__setattr__(self, "ris_positions",
                           tuple(_point(p, "ris_positions") for p in self.ris_positions))
        object.__setattr__(self, "user_positions",
                           tuple(_point(p, "user_positions") for p in self.user_positions))
        object.__setattr__(self, "profiles", tuple(self.profiles))
        self._validate()

    # -- derived quantities -------------------------------------------------
    @property
    def n_ris(self) -> int:
        return len(self.ris_positions)

    @property
    def n_elements(self) -> int:
        return self.m1 * self.m2

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def noise_power_w(self) -> float:
        return 10 ** ((self.noise_psd_dbm_hz - 30) / 10) * self.bandwidth_hz

    @property
    def bs_xyz(self) -> np.ndarray:
        return np.array(self.bs_position)

    @property
    def ris_xyz(self) -> np.ndarray:
        return np.array(self.ris_positions).reshape(-1, 3)

    @property
    def user_xyz(self) -> np.ndarray:
        return np.array(self.user_positions).reshape(-1, 3)

    @property
    def rho_min(self) -> np.ndarray:
        return np.array([p.rho_min for p in self.profiles])

    def replace(self, **changes: Any) -> "NetworkScenario":
        return dataclasses.replace(self, **changes)

    def _validate(self) -> None:
        for name in ("n_bs", "m1", "m2", "n_users", "max_users_per_ris", "max_ris_per_user"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
        if self.n_ris < 1:
            raise ValidationError("at least one RIS is required")
        if len(self.user_positions) != self.n_users:
            raise ValidationError(
                f"{len(self.user_positions)} user positions for K={self.n_users} users")
        if len(self.profiles) != self.n_users:
            raise ValidationError(f"{len(self.profiles)} semantic profiles for K={self.n_users} users")
        if len({p.n_segments for p in self.profiles}) != 1:
            raise ValidationError("all semantic profiles must share one segment count")
        if not self.power_w > 0:
            raise ValidationError("rf.power_w must be positive")
        if not self.bandwidth_hz > 0:
            raise ValidationError("rf.bandwidth_hz must be positive")
        if not self.carrier_hz > 0:
            raise ValidationError("rf.carrier_hz must be positive")
        if not self.budget >= 0:
            raise ValidationError("semantic.budget must be non-negative")
        if not (self.bs_spacing_m > 0 and self.ris_spacing_m > 0):
            raise ValidationError("array spacings must be positive")
        if not self.shadow_std_db >= 0:
            raise ValidationError("rf.shadow_std_db must be non-negative")
        if not self.area_m > 0:
            raise ValidationError("geometry.area_m must be positive")
        ris = self.ris_xyz
        users = self.user_xyz
        gap = np.linalg.norm(users[:, None, :] - ris[None, :, :], axis=-1)
        if np.any(gap <= 0):
            raise ValidationError("a user is co-located with a RIS")
        if np.any(np.linalg.norm(ris - self.bs_xyz, axis=-1) <= 0):
            raise ValidationError("a RIS is co-located with the BS")


def _point(p: Sequence[float], name: str) -> Point:
    try:
        x, y, z = (float(v) for v in p)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name}: expected a 3-D coordinate, got {p!r}") from exc
    if not all(math.isfinite(v) for v in (x, y, z)):
        raise ValidationError(f"{name}: non-finite coordinate {p!r}")
    return (x, y, z)


@dataclass(frozen=True)
class AngleSet:
    """Arrival/departure angles in radians.

    ``bs_departure[l]`` is the BS azimuth towards RIS ``l``;
    ``ris_arrival[l] = (azimuth, elevation)`` of the BS->RIS direction;
    ``ris_departure[l, k] = (azimuth, elevation)`` of the RIS->user direction.
    """

    bs_departure: np.ndarray
    ris_arrival: np.ndarray
    ris_departure: np.ndarray

    def __post_init__(self) -> None:
        for arr in (self.bs_departure, self.ris_arrival, self.ris_departure):
            arr.setflags(write=False)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_SECTIONS = {"rf", "semantic", "geometry", "limits", "solver"}
_RF_KEYS = {"N", "M1", "M2", "L", "K", "bandwidth_hz", "noise_psd_dbm_hz", "carrier_hz",
            "power_w", "shadow_std_db", "bs_spacing_m", "ris_spacing_m"}
_GEOMETRY_KEYS = {"area_m", "seed", "bs_position", "ris_positions", "deployment",
                  "user_positions", "user_case", "user_disc_radius_m", "user_height_m"}
_SEMANTIC_KEYS = {"budget", "profiles"}
_LIMIT_KEYS = {"K0", "L0", "rho_min"}
_SOLVER_KEYS = {"tol", "max_iters", "ma_scheme", "shuffle_users"}


def _section(cfg: dict, name: str, allowed: set[str]) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"{name}: unknown field(s) {sorted(unknown)}")
    return sec


def _number(sec: dict, section: str, key: str, default: Any, kind: type = float) -> Any:
    if key not in sec or sec[key] is None:
        return default
    value = sec[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _profiles(raw: Any, K: int, rho_min_override: Any) -> tuple[SemanticProfile, ...]:
    if raw is None:
        raw = [DEFAULT_PROFILE]
    if not isinstance(raw, list) or not raw:
        raise ConfigError("semantic.profiles: expected a non-empty list")
    if rho_min_override is not None and not isinstance(rho_min_override, (list, int, float)):
        raise ConfigError("limits.rho_min: expected a number or a list")
    out = []
    for k in range(K):
        entry = raw[k % len(raw)]
        if not isinstance(entry, dict) or not {"A", "B", "C"} <= set(entry):
            raise ConfigError(f"semantic.profiles[{k % len(raw)}]: needs keys A, B, C")
        rho_min = entry.get("rho_min")
        if rho_min_override is not None:
            rho_min = (rho_min_override[k % len(rho_min_override)]
                       if isinstance(rho_min_override, list) else rho_min_override)
        if rho_min is None:
            rho_min = entry["C"][-1]
        try:
            out.append(SemanticProfile(tuple(entry["A"]), tuple(entry["B"]),
                                       tuple(entry["C"]), rho_min))
        except (ProfileError, TypeError) as exc:
            raise ValidationError(f"semantic profile for user {k}: {exc}") from exc
    return tuple(out)


DEFAULT_PROFILE = {
    "A": [-1.0, -3.0, -8.0],
    "B": [1.0, 2.4, 4.4],
    "C": [1.0, 0.7, 0.4, 0.2],
    "rho_min": 0.25,
}


def scenario_from_config(cfg: dict) -> NetworkScenario:
    """Validated scenario from an already-decoded configuration mapping."""
    if not isinstance(cfg, dict):
        raise ConfigError("configuration root must be an object")
    unknown = set(cfg) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")
    rf = _section(cfg, "rf", _RF_KEYS)
    sem = _section(cfg, "semantic", _SEMANTIC_KEYS)
    geo = _section(cfg, "geometry", _GEOMETRY_KEYS)
    lim = _section(cfg, "limits", _LIMIT_KEYS)
    sol = _section(cfg, "solver", _SOLVER_KEYS)

    N = _number(rf, "rf", "N", 16, int)
    M1 = _number(rf, "rf", "M1", 11, int)
    M2 = _number(rf, "rf", "M2", 11, int)
    L = _number(rf, "rf", "L", None, int)
    K = _number(rf, "rf", "K", None, int)
    seed = _number(geo, "geometry", "seed", 0, int)
    area = _number(geo, "geometry", "area_m", 100.0)
    disc = _number(geo, "geometry", "user_disc_radius_m", 20.0)
    user_h = _number(geo, "geometry", "user_height_m", 1.5)

    bs = geo.get("bs_position", [0.0, area / 2, 10.0])

    ris = geo.get("ris_positions")
    deployment = geo.get("deployment")
    if deployment is not None and deployment not in DEPLOYMENTS:
        raise ConfigError(f"geometry.deployment: unknown preset {deployment!r}")
    if ris is None:
        if L is None:
            L = 4
        ris = _grid_layout(load_preset("distributed1"), L, area)
        if deployment is None:
            deployment = "distributed1"
    elif not isinstance(ris, list):
        raise ConfigError("geometry.ris_positions: expected a list of coordinates")
    elif L is not None and len(ris) != L:
        raise ConfigError(f"geometry.ris_positions has {len(ris)} entries but rf.L={L}")

    users = geo.get("user_positions")
    user_case = geo.get("user_case")
    if user_case is not None and user_case not in USER_CASES:
        raise ConfigError(f"geometry.user_case: unknown case {user_case!r}")
    if users is None:
        if K is None:
            K = 1
        case = user_case or "case2"
        users = place_users(case, K, np.random.default_rng([seed, 0]), area_m=area,
                            disc_radius_m=disc, height_m=user_h).tolist()
        user_case = case
    elif not isinstance(users, list):
        raise ConfigError("geometry.user_positions: expected a list of coordinates")
    elif K is not None and len(users) != K:
        raise ConfigError(f"geometry.user_positions has {len(users)} entries but rf.K={K}")
    K = len(users)

    profiles = _profiles(sem.get("profiles"), K, lim.get("rho_min"))
    try:
        solver = SolverOptions(
            tol=_number(sol, "solver", "tol", 1e-4),
            max_iters=_number(sol, "solver", "max_iters", 50, int),
            ma_scheme=str(sol.get("ma_scheme", "ssd")).lower(),
            shuffle_users=bool(sol.get("shuffle_users", False)),
        )
        scenario = NetworkScenario(
            n_bs=N, m1=M1, m2=M2, n_users=K,
            bs_position=bs, ris_positions=tuple(ris), user_positions=tuple(users),
            profiles=profiles,
            bandwidth_hz=_number(rf, "rf", "bandwidth_hz", 1e6),
            noise_psd_dbm_hz=_number(rf, "rf", "noise_psd_dbm_hz", -174.0),
            carrier_hz=_number(rf, "rf", "carrier_hz", 2.4e9),
            power_w=_number(rf, "rf", "power_w", 1.0),
            budget=_number(sem, "semantic", "budget", 1.0),
            max_users_per_ris=_number(lim, "limits", "K0", 2, int),
            max_ris_per_user=_number(lim, "limits", "L0", 2, int),
            bs_spacing_m=_number(rf, "rf", "bs_spacing_m", None),
            ris_spacing_m=_number(rf, "rf", "ris_spacing_m", None),
            shadow_std_db=_number(rf, "rf", "shadow_std_db", 8.0),
            seed=seed, area_m=area, deployment=deployment, user_case=user_case,
            user_disc_radius_m=disc, user_height_m=user_h, solver=solver,
        )
    except ProfileError as exc:
        raise ValidationError(str(exc)) from exc
    if deployment is not None and geo.get("ris_positions") is None and deployment != "distributed1":
        scenario = preset_deployment(deployment, scenario, n_ris=L)
    return scenario


def load_scenario(config_text: str) -> NetworkScenario:
    """Parse JSON configuration text into a validated :class:`NetworkScenario`."""
    try:
        cfg = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return scenario_from_config(cfg)


def scenario_to_config(s: NetworkScenario) -> dict:
    """Explicit configuration mapping; positions are always written out."""
    return {
        "rf": {
            "N": s.n_bs, "M1": s.m1, "M2": s.m2, "L": s.n_ris, "K": s.n_users,
            "bandwidth_hz": s.bandwidth_hz, "noise_psd_dbm_hz": s.noise_psd_dbm_hz,
            "carrier_hz": s.carrier_hz, "power_w": s.power_w,
            "shadow_std_db": s.shadow_std_db,
            "bs_spacing_m": s.bs_spacing_m, "ris_spacing_m": s.ris_spacing_m,
        },
        "semantic": {"budget": s.budget, "profiles": [p.to_config() for p in s.profiles]},
        "geometry": {
            "area_m": s.area_m, "seed": s.seed,
            "bs_position": list(s.bs_position),
            "ris_positions": [list(p) for p in s.ris_positions],
            "user_positions": [list(p) for p in s.user_positions],
            "deployment": s.deployment, "user_case": s.user_case,
            "user_disc_radius_m": s.user_disc_radius_m, "user_height_m": s.user_height_m,
        },
        "limits": {"K0": s.max_users_per_ris, "L0": s.max_ris_per_user},
        "solver": dataclasses.asdict(s.solver),
    }


def dump_scenario(s: NetworkScenario) -> str:
    return json.dumps(scenario_to_config(s), indent=2)


# ---------------------------------------------------------------------------
# deployments and users
# ---------------------------------------------------------------------------

def load_preset(name: str) -> dict:
    """Bundled preset layout description (editable JSON under ``rispsc/presets``)."""
    if name not in DEPLOYMENTS:
        raise ValueError(f"unknown deployment preset {name!r}; expected one of {DEPLOYMENTS}")
    text = resources.files("rispsc").joinpath("presets").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def _grid_shape(n: int) -> tuple[int, int]:
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    return rows, cols


def _grid_layout(preset: dict, n: int, area: float) -> list[list[float]]:
    if "positions" in preset:
        pts = preset["positions"]
        if len(pts) < n:
            raise ValueError(f"preset lists {len(pts)} positions, {n} requested")
        return [[x * area, y * area, z] for x, y, z in pts[:n]]
    cx, cy = (c * area for c in preset.get("center", (0.5, 0.5)))
    half = preset.get("span", 0.5) * area / 2
    h = preset.get("height_m", 10.0)
    rows, cols = _grid_shape(n)
    xs = np.linspace(cx - half, cx + half, cols) if cols > 1 else np.array([cx])
    ys = np.linspace(cy - half, cy + half, rows) if rows > 1 else np.array([cy])
    pts = [[float(x), float(y), h] for y in ys for x in xs]
    return pts[:n]


def _balanced_factors(n: int) -> tuple[int, int]:
    a = int(math.isqrt(n))
    while n % a:
        a -= 1
    return n // a, a


def preset_deployment(name: str, scenario: NetworkScenario,
                      n_ris: int | None = None) -> NetworkScenario:
    """Re-place the RISs of ``scenario`` according to a bundled preset.

    ``central`` collapses the distributed RISs into one surface with the same
    total element count and the same total number of association slots.
    ``n_ris`` is the distributed RIS count the presets refer to (defaults to
    the scenario's current count).
    """
    preset = load_preset(name)
    L = n_ris or scenario.n_ris
    if preset["kind"] == "central":
        total = L * scenario.n_elements
        m1, m2 = _balanced_factors(total)
        cx, cy = (c * scenario.area_m for c in preset.get("center", (0.5, 0.5)))
        return scenario.replace(
            ris_positions=((cx, cy, preset.get("height_m", 10.0)),),
            m1=m1, m2=m2,
            max_users_per_ris=min(scenario.n_users, L * scenario.max_users_per_ris),
            deployment=name)
    pts = _grid_layout(preset, L, scenario.area_m)
    return scenario.replace(ris_positions=tuple(tuple(p) for p in pts), deployment=name)


def place_users(case: str, K: int, rng: np.random.Generator, *, area_m: float = 100.0,
                disc_radius_m: float = 20.0, height_m: float = 1.5,
                center: Sequence[float] | None = None) -> np.ndarray:
    """Draw ``K`` user positions (``K x 3``).

    ``case1`` is uniform over a disc of ``disc_radius_m`` around the area
    centre (the central-RIS site); ``case2`` is uniform over the square.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if case == "case1":
        cx, cy = center if center is not None else (area_m / 2, area_m / 2)
        r = disc_radius_m * np.sqrt(rng.uniform(0.0, 1.0, K))
        phi = rng.uniform(-np.pi, np.pi, K)
        xy = np.column_stack([cx + r * np.cos(phi), cy + r * np.sin(phi)])
    elif case == "case2":
        xy = rng.uniform(0.0, area_m, size=(K, 2))
    else:
        raise ValueError(f"unknown user case {case!r}; expected one of {USER_CASES}")
    return np.column_stack([xy, np.full(K, height_m)])


def direction_angles(vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(azimuth, elevation) of displacement vectors ``(..., 3)``."""
    vec = np.asarray(vec, dtype=float)
    r = np.linalg.norm(vec, axis=-1)
    if np.any(r == 0):
        raise ValueError("coincident positions have no direction")
    az = np.arctan2(vec[..., 1], vec[..., 0])
    el = np.arccos(np.clip(vec[..., 2] / r, -1.0, 1.0))
    return az, el


def geometry_angles(scenario: NetworkScenario) -> AngleSet:
    bs = scenario.bs_xyz
    ris = scenario.ris_xyz
    users = scenario.user_xyz
    incoming = ris - bs
    az_in, el_in = direction_angles(incoming)
    outgoing = users[None, :, :] - ris[:, None, :]
    az_out, el_out = direction_angles(outgoing)
    # the BS ULA lies along y, so its phase progression follows sin(azimuth)
    if np.any(np.linalg.norm(incoming[:, :2], axis=-1) == 0):
        raise ValueError("a RIS sits directly above or below the BS")
    return AngleSet(bs_departure=az_in,
                    ris_arrival=np.stack([az_in, el_in], axis=-1),
                    ris_departure=np.stack([az_out, el_out], axis=-1))
