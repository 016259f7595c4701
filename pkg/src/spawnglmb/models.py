"""Concrete survival, birth, spawning, detection and clutter models.

The default parameter set is a planar constant-velocity scenario: 4-D state
[px, py, vx, vy] in metres and metres/second, position-only measurements,
three fixed birth regions, a 70 m bearing-relative spawn offset model and
uniform Poisson clutter over a square surveillance region.  A scenario is
loaded from a JSON document with sections
{dynamics, birth, spawn, sensor, filter, ospa, montecarlo}; every field is
optional and defaults to the values above.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .gaussian import Gaussian, GaussianMixture
from .labels import Label, make_birth_label

logger = logging.getLogger(__name__)
_warned_zero_speed = False


@dataclass(frozen=True)
class MotionModel:
    """Constant-velocity transition F and white-acceleration noise Q."""

    F: np.ndarray
    Q: np.ndarray
    dt: float

    @classmethod
    def constant_velocity(cls, dt: float, sigma_nu: float) -> "MotionModel":
        I2 = np.eye(2)
        Z2 = np.zeros((2, 2))
        F = np.block([[I2, dt * I2], [Z2, I2]])
        Q = sigma_nu**2 * np.block(
            [[dt**4 / 4 * I2, dt**3 / 2 * I2], [dt**3 / 2 * I2, dt**2 * I2]]
        )
        return cls(F=F, Q=Q, dt=dt)


@dataclass(frozen=True)
class BirthRegion:
    prob: float
    density: GaussianMixture
    label_index: int


@dataclass(frozen=True)
class BirthModel:
    """Independent birth regions, each with existence probability r_B."""

    regions: tuple[BirthRegion, ...]

    def labels_at(self, time: int) -> tuple[Label, ...]:
        return tuple(make_birth_label(time, r.label_index) for r in self.regions)

    def region_for(self, label: Label) -> BirthRegion:
        for r in self.regions:
            if r.label_index == label.path[1]:
                return r
        raise KeyError(f"no birth region with index {label.path[1]}")


@dataclass(frozen=True)
class SpawnModel:
    """Bernoulli spawning with bearing-relative offset mixture.

    Each existing track may spawn up to ``per_parent`` objects per scan,
    each with probability ``p_t``.  A spawned state is displaced from the
    parent's transitioned state by one of ``offsets`` = (distance, relative
    bearing) choices, equally weighted, with additive noise Q_T; the offset
    velocity cancels the parent's velocity so spawn tracks start at rest.
    """

    p_t: float
    offsets: tuple[tuple[float, float], ...]  # (distance m, relative bearing rad)
    Q_T: np.ndarray
    per_parent: int = 1


@dataclass(frozen=True)
class SensorModel:
    """Position-only linear sensor plus uniform Poisson clutter."""

    H: np.ndarray
    R: np.ndarray
    p_d: float
    clutter_rate: float
    region: np.ndarray  # (2, 2): [[xmin, xmax], [ymin, ymax]]

    @property
    def area(self) -> float:
        return float(np.prod(self.region[:, 1] - self.region[:, 0]))

    @property
    def clutter_intensity(self) -> float:
        """Clutter intensity per unit area inside the surveillance region."""
        return self.clutter_rate / self.area

    def clutter_loglik(self, z: np.ndarray) -> float:
        """log of the clutter intensity at z; -inf outside the region."""
        z = np.asarray(z, dtype=float)
        inside = bool(
            np.all(z >= self.region[:, 0]) and np.all(z <= self.region[:, 1])
        )
        if not inside or self.clutter_rate <= 0:
            return -np.inf
        return math.log(self.clutter_intensity)

    def sample_clutter(self, rng: np.random.Generator) -> np.ndarray:
        count = rng.poisson(self.clutter_rate)
        lo = self.region[:, 0]
        hi = self.region[:, 1]
        return lo + rng.random((count, 2)) * (hi - lo)


@dataclass(frozen=True)
class SurvivalModel:
    p_s: float


def heading(state: np.ndarray) -> float:
    """Bearing of the velocity vector; 0 by convention for zero speed."""
    global _warned_zero_speed
    vx, vy = float(state[2]), float(state[3])
    if math.hypot(vx, vy) < 1e-12:
        if not _warned_zero_speed:
            logger.warning("zero-speed parent state: spawn bearing convention theta=0 applied")
            _warned_zero_speed = True
        return 0.0
    return math.atan2(vy, vx)


def spawn_offset(parent_state: np.ndarray, relative_bearing: float, distance: float) -> np.ndarray:
    """Additive offset placing a spawn at rest, ``distance`` from the parent.

    The offset position points at ``relative_bearing`` from the parent's
    heading; the offset velocity cancels the parent's velocity.
    """
    theta = heading(parent_state)
    angle = theta + relative_bearing
    return np.array(
        [
            distance * math.cos(angle),
            distance * math.sin(angle),
            -float(parent_state[2]),
            -float(parent_state[3]),
        ]
    )


def spawn_offset_mixture(spawn: SpawnModel, parent_mean: np.ndarray) -> GaussianMixture:
    """Equal-weight offset mixture for one spawn slot of a given parent.

    Offsets are evaluated at the parent component mean; the kinematic spawn
    noise Q_T is carried separately by the family construction, so the
    offset components here have zero covariance.
    """
    n = len(spawn.offsets)
    means = np.array(
        [spawn_offset(parent_mean, bearing, dist) for dist, bearing in spawn.offsets]
    )
    covs = np.zeros((n, 4, 4))
    return GaussianMixture(np.full(n, 1.0 / n), means, covs)


@dataclass(frozen=True)
class FilterParams:
    """Truncation and proposal-tempering knobs for the filter recursion."""

    h_max: int = 3000
    cap: int = 1000
    temper_s: float = 0.90
    temper_d: float = 0.90
    temper_t: float = 1.0
    gibbs_floor: int = 1
    mixture_cap: int = 10
    mixture_prune: float = 1e-5
    exhaustive: bool = False
    history_depth: int | None = None
    validate: bool = False


@dataclass(frozen=True)
class OspaParams:
    cutoff: float = 100.0
    order: float = 1.0


@dataclass(frozen=True)
class MonteCarloParams:
    trials: int = 100
    seed: int = 2017
    horizon: int = 100


@dataclass(frozen=True)
class Scenario:
    """Full model bundle used by the simulator, filter and evaluation."""

    motion: MotionModel
    survival: SurvivalModel
    birth: BirthModel
    spawn: SpawnModel
    sensor: SensorModel
    filter_params: FilterParams
    ospa: OspaParams
    montecarlo: MonteCarloParams
    birth_sigma: float = 10.0


_DEFAULTS: dict[str, dict[str, Any]] = {
    "dynamics": {"dt": 1.0, "sigma_nu": 1.0, "p_s": 0.99},
    "birth": {
        "r_b": 0.02,
        "sigma_b": 10.0,
        "means": [[0.0, 500.0, 0.0, 0.0], [433.0, -250.0, 0.0, 0.0], [-433.0, -250.0, 0.0, 0.0]],
    },
    "spawn": {
        "p_t": 0.01,
        "sigma_t": 5.0,
        "offsets": [[70.0, -80.0], [70.0, -90.0], [70.0, -100.0]],  # (distance m, bearing deg)
        "per_parent": 1,
    },
    "sensor": {
        "p_d": 0.88,
        "sigma_eps": 10.0,
        "clutter_rate": 66.0,
        "region": [[-1000.0, 1000.0], [-1000.0, 1000.0]],
    },
    "filter": {
        "h_max": 3000,
        "cap": 1000,
        "temper_s": 0.90,
        "temper_d": 0.90,
        "temper_t": 1.0,
        "gibbs_floor": 1,
        "mixture_cap": 10,
        "mixture_prune": 1e-5,
    },
    "ospa": {"cutoff": 100.0, "order": 1.0},
    "montecarlo": {"trials": 100, "seed": 2017, "horizon": 100},
}


class ConfigError(ValueError):
    """Scenario configuration violates the schema; message carries the field path."""


def _merged(section: str, overrides: dict) -> dict:
    out = dict(_DEFAULTS[section])
    for key, value in overrides.items():
        if key not in out:
            raise ConfigError(f"{section}.{key}: unknown field")
        out[key] = value
    return out


def _check_prob(path: str, value: float, closed_low: bool = False) -> float:
    v = float(value)
    low_ok = v >= 0 if closed_low else v > 0
    if not (low_ok and v < 1):
        raise ConfigError(f"{path}: must be a probability in {'[0,1)' if closed_low else '(0,1)'}, got {value}")
    return v


def _check_positive(path: str, value: float) -> float:
    v = float(value)
    if not v > 0:
        raise ConfigError(f"{path}: must be > 0, got {value}")
    return v


def load_scenario(text: str | None = None) -> Scenario:
    """Build the full model bundle from a JSON document (defaults if None)."""
    try:
        raw = json.loads(text) if text else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for section in raw:
        if section not in _DEFAULTS:
            raise ConfigError(f"{section}: unknown section")

    dyn = _merged("dynamics", raw.get("dynamics", {}))
    birth_cfg = _merged("birth", raw.get("birth", {}))
    spawn_cfg = _merged("spawn", raw.get("spawn", {}))
    sensor_cfg = _merged("sensor", raw.get("sensor", {}))
    filter_cfg = _merged("filter", raw.get("filter", {}))
    ospa_cfg = _merged("ospa", raw.get("ospa", {}))
    mc_cfg = _merged("montecarlo", raw.get("montecarlo", {}))

    motion = MotionModel.constant_velocity(
        dt=_check_positive("dynamics.dt", dyn["dt"]),
        sigma_nu=_check_positive("dynamics.sigma_nu", dyn["sigma_nu"]),
    )
    survival = SurvivalModel(p_s=_check_prob("dynamics.p_s", dyn["p_s"]))

    r_b = _check_prob("birth.r_b", birth_cfg["r_b"])
    sigma_b = _check_positive("birth.sigma_b", birth_cfg["sigma_b"])
    regions = []
    for i, mean in enumerate(birth_cfg["means"]):
        mean = np.asarray(mean, dtype=float)
        if mean.shape != (4,):
            raise ConfigError(f"birth.means[{i}]: must be a 4-vector")
        density = GaussianMixture.single(Gaussian(mean, sigma_b**2 * np.eye(4)))
        regions.append(BirthRegion(prob=r_b, density=density, label_index=i + 1))
    if not regions:
        raise ConfigError("birth.means: at least one birth region required")
    birth = BirthModel(regions=tuple(regions))

    per_parent = int(spawn_cfg["per_parent"])
    if per_parent < 0:
        raise ConfigError(f"spawn.per_parent: must be >= 0, got {per_parent}")
    offsets = []
    for i, pair in enumerate(spawn_cfg["offsets"]):
        if len(pair) != 2:
            raise ConfigError(f"spawn.offsets[{i}]: must be [distance_m, bearing_deg]")
        offsets.append((float(pair[0]), math.radians(float(pair[1]))))
    spawn = SpawnModel(
        p_t=_check_prob("spawn.p_t", spawn_cfg["p_t"], closed_low=True),
        offsets=tuple(offsets),
        Q_T=float(spawn_cfg["sigma_t"]) ** 2 * np.eye(4),
        per_parent=per_parent,
    )

    region = np.asarray(sensor_cfg["region"], dtype=float)
    if region.shape != (2, 2) or np.any(region[:, 1] <= region[:, 0]):
        raise ConfigError("sensor.region: must be [[xmin,xmax],[ymin,ymax]] with max > min")
    clutter_rate = float(sensor_cfg["clutter_rate"])
    if clutter_rate < 0:
        raise ConfigError(f"sensor.clutter_rate: must be >= 0, got {clutter_rate}")
    sensor = SensorModel(
        H=np.hstack([np.eye(2), np.zeros((2, 2))]),
        R=float(_check_positive("sensor.sigma_eps", sensor_cfg["sigma_eps"])) ** 2 * np.eye(2),
        p_d=_check_prob("sensor.p_d", sensor_cfg["p_d"]),
        clutter_rate=clutter_rate,
        region=region,
    )

    fp = FilterParams(
        h_max=int(filter_cfg["h_max"]),
        cap=int(filter_cfg["cap"]),
        temper_s=float(filter_cfg["temper_s"]),
        temper_d=float(filter_cfg["temper_d"]),
        temper_t=float(filter_cfg["temper_t"]),
        gibbs_floor=int(filter_cfg["gibbs_floor"]),
        mixture_cap=int(filter_cfg["mixture_cap"]),
        mixture_prune=float(filter_cfg["mixture_prune"]),
    )
    if fp.h_max < 1 or fp.cap < 1:
        raise ConfigError("filter.h_max and filter.cap must be >= 1")

    ospa = OspaParams(
        cutoff=_check_positive("ospa.cutoff", ospa_cfg["cutoff"]),
        order=float(ospa_cfg["order"]),
    )
    if ospa.order < 1:
        raise ConfigError(f"ospa.order: must be >= 1, got {ospa.order}")

    mc = MonteCarloParams(
        trials=int(mc_cfg["trials"]), seed=int(mc_cfg["seed"]), horizon=int(mc_cfg["horizon"])
    )
    if mc.trials < 1:
        raise ConfigError(f"montecarlo.trials: must be >= 1, got {mc.trials}")
    if mc.horizon < 1:
        raise ConfigError(f"montecarlo.horizon: must be >= 1, got {mc.horizon}")

    return Scenario(
        motion=motion,
        survival=survival,
        birth=birth,
        spawn=spawn,
        sensor=sensor,
        filter_params=fp,
        ospa=ospa,
        montecarlo=mc,
        birth_sigma=sigma_b,
    )


def default_config() -> dict:
    """Deep copy of the built-in configuration document."""
    return json.loads(json.dumps(_DEFAULTS))
