"""Domain types: building layout, thermal coefficients, scenario configuration.

All types are frozen dataclasses validated on construction, so instances can
be shared freely between threads and processes. Vector-valued fields are
plain tuples to keep the types hashable and comparable.

Unit conventions: Kelvin, hours, Joules, Watts. The heat-balance coefficients
are the reduced per-heat-capacity rates:

    alpha  ambient conduction rate          (1/h)
    beta   inter-room conduction rate       (1/h)
    omega  internal-device heating rate     (K/h)
    gamma  inverse room heat capacity       (K/J)
    phi    HVAC coupling rate               (1/h)
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .units import convert_temperature, convert_temperature_delta


class ValidationError(ValueError):
    """A domain invariant was violated; the message names the field."""


class RoomClass(enum.Enum):
    BIG_CONFERENCE = "big"
    SMALL_CONFERENCE = "small"
    OFFICE = "office"


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


@dataclass(frozen=True)
class BuildingLayout:
    """Rooms, who neighbours whom, and which rooms touch the ambient air.

    adjacency holds normalized (i, j) pairs with i < j, 0-based room indices.
    A room with no neighbours must be ambient-exposed, otherwise it would be
    thermally isolated.
    """

    k: int
    adjacency: tuple[tuple[int, int], ...]
    ambient_exposed: tuple[bool, ...]
    room_class: tuple[RoomClass, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        _require(self.k >= 1, f"k: room count must be positive, got {self.k}")
        seen = set()
        for pair in self.adjacency:
            i, j = pair
            _require(i != j, f"adjacency: self-edge {pair} is not allowed")
            _require(0 <= i < self.k and 0 <= j < self.k,
                     f"adjacency: edge {pair} out of range for k={self.k}")
            _require(i < j, f"adjacency: edge {pair} must be stored as (min, max)")
            _require(pair not in seen, f"adjacency: duplicate edge {pair}")
            seen.add(pair)
        for name, seq in (("ambient_exposed", self.ambient_exposed),
                          ("room_class", self.room_class),
                          ("weights", self.weights)):
            _require(len(seq) == self.k,
                     f"{name}: expected {self.k} entries, got {len(seq)}")
        _require(all(w > 0 for w in self.weights),
                 "weights: all room weights must be strictly positive")
        degree = [0] * self.k
        for i, j in self.adjacency:
            degree[i] += 1
            degree[j] += 1
        for room in range(self.k):
            _require(degree[room] > 0 or self.ambient_exposed[room],
                     f"ambient_exposed/adjacency: room {room + 1} is thermally "
                     "isolated (no neighbours and not ambient-exposed)")

    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        return _neighbor_lists(self.adjacency, self.k)

    def placement_probabilities(self) -> np.ndarray:
        """Probability that one occupant is assigned to each room."""
        w = np.asarray(self.weights, dtype=float)
        return w / w.sum()

    @staticmethod
    def grid(rows: int, cols: int,
             room_class: tuple[RoomClass, ...] | None = None,
             weights: tuple[float, ...] | None = None,
             ambient_exposed: tuple[bool, ...] | None = None) -> "BuildingLayout":
        """Rectangular grid with 4-neighbour adjacency, rooms numbered row-major.

        Boundary cells are ambient-exposed, interior cells are not, unless an
        explicit mask is given.
        """
        _require(rows >= 1 and cols >= 1, "grid: rows and cols must be positive")
        k = rows * cols
        edges = []
        for r in range(rows):
            for c in range(cols):
                idx = r * cols + c
                if c + 1 < cols:
                    edges.append((idx, idx + 1))
                if r + 1 < rows:
                    edges.append((idx, idx + cols))
        if ambient_exposed is None:
            ambient_exposed = tuple(
                r == 0 or r == rows - 1 or c == 0 or c == cols - 1
                for r in range(rows) for c in range(cols)
            )
        if room_class is None:
            room_class = (RoomClass.OFFICE,) * k
        if weights is None:
            weights = (1.0,) * k
        return BuildingLayout(k=k, adjacency=tuple(sorted(edges)),
                              ambient_exposed=ambient_exposed,
                              room_class=room_class, weights=weights)


@lru_cache(maxsize=64)
def _neighbor_lists(adjacency: tuple[tuple[int, int], ...], k: int):
    lists: list[list[int]] = [[] for _ in range(k)]
    for i, j in adjacency:
        lists[i].append(j)
        lists[j].append(i)
    return tuple(tuple(sorted(ns)) for ns in lists)


@lru_cache(maxsize=64)
def _adjacency_matrix_cached(adjacency: tuple[tuple[int, int], ...], k: int) -> np.ndarray:
    mat = np.zeros((k, k))
    for i, j in adjacency:
        mat[i, j] = 1.0
        mat[j, i] = 1.0
    mat.flags.writeable = False
    return mat


def adjacency_matrix(layout: BuildingLayout) -> np.ndarray:
    """Symmetric 0/1 neighbour matrix (read-only, cached per layout)."""
    return _adjacency_matrix_cached(layout.adjacency, layout.k)


@dataclass(frozen=True)
class ThermalParams:
    """Reduced heat-balance coefficients plus controller and occupant constants.

    t_hvac is the per-room supply-air temperature (K), constant in time. It
    must sit below t_min so the AC is actually able to cool every room.
    q_mean/q_std parameterize the per-person emitted power draw (W).
    """

    alpha: float
    beta: float
    omega: float
    gamma: float
    phi: float
    t_hvac: tuple[float, ...]
    t_min: float
    t_max: float
    delta_t: float
    q_mean: float
    q_std: float

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "phi", "delta_t"):
            _require(getattr(self, name) > 0, f"{name}: must be > 0, got {getattr(self, name)}")
        _require(self.omega >= 0, f"omega: must be >= 0, got {self.omega}")
        _require(self.q_mean > 0, f"q_mean: must be > 0, got {self.q_mean}")
        _require(self.q_std >= 0, f"q_std: must be >= 0, got {self.q_std}")
        _require(self.t_min < self.t_max,
                 f"t_min/t_max: setpoints must satisfy t_min < t_max, "
                 f"got t_min={self.t_min} K, t_max={self.t_max} K")
        for room, temp in enumerate(self.t_hvac):
            _require(temp < self.t_min,
                     f"t_hvac: room {room + 1} supply air at {temp} K is not below "
                     f"t_min={self.t_min} K; supply air must be able to cool")
        for name in ("alpha", "beta", "omega", "gamma", "phi", "t_min", "t_max",
                     "delta_t", "q_mean", "q_std"):
            _require(math.isfinite(getattr(self, name)), f"{name}: must be finite")


@dataclass(frozen=True)
class SyntheticAmbient:
    """Ambient temperature series drawn i.i.d. Gaussian then smoothed."""

    mean_k: float
    std_k: float

    def __post_init__(self):
        _require(self.std_k >= 0, f"ambient std: must be >= 0, got {self.std_k}")
        _require(math.isfinite(self.mean_k), "ambient mean: must be finite")


@dataclass(frozen=True)
class AmbientFile:
    """Ambient temperature profile read from a file and resampled."""

    path: str


AmbientSpec = SyntheticAmbient | AmbientFile


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to run one simulated day."""

    layout: BuildingLayout
    params: ThermalParams
    n_people: int
    horizon_steps: int
    time_range_steps: int
    ambient: AmbientSpec
    noise_std: float
    seed: int = 0

    def __post_init__(self):
        _require(self.n_people >= 0, f"n_people: must be >= 0, got {self.n_people}")
        _require(self.horizon_steps >= 2,
                 f"horizon_steps: need at least 2 steps for one finite difference, "
                 f"got {self.horizon_steps}")
        _require(1 <= self.time_range_steps <= self.horizon_steps,
                 f"time_range_steps: must be in [1, horizon_steps={self.horizon_steps}], "
                 f"got {self.time_range_steps}")
        _require(self.noise_std >= 0, f"noise_std: must be >= 0, got {self.noise_std}")
        _require(len(self.params.t_hvac) == self.layout.k,
                 f"t_hvac: expected {self.layout.k} per-room values, "
                 f"got {len(self.params.t_hvac)}")


# Class weights and supply temperatures used by the default 16-room scenario.
DEFAULT_CLASS_WEIGHTS = {
    RoomClass.BIG_CONFERENCE: 5.0,
    RoomClass.SMALL_CONFERENCE: 3.0,
    RoomClass.OFFICE: 1.0,
}
DEFAULT_HVAC_F = {
    RoomClass.BIG_CONFERENCE: 50.0,
    RoomClass.SMALL_CONFERENCE: 55.0,
    RoomClass.OFFICE: 55.0,
}


def default_paper_scenario() -> ScenarioConfig:
    """The stock 16-room scenario used throughout the test suite and demos.

    4x4 grid of rooms numbered row-major: room 1 is the big conference room,
    room 16 the small conference room, the rest offices. The four interior
    rooms (6, 7, 10, 11) exchange heat only with their neighbours. 45 people,
    a 10 h day at 1-minute steps, hourly occupancy reshuffles, and a hot
    synthetic ambient so the cooling side of the controller gets exercised.
    """
    classes = [RoomClass.OFFICE] * 16
    classes[0] = RoomClass.BIG_CONFERENCE
    classes[15] = RoomClass.SMALL_CONFERENCE
    classes = tuple(classes)
    weights = tuple(DEFAULT_CLASS_WEIGHTS[c] for c in classes)
    layout = BuildingLayout.grid(4, 4, room_class=classes, weights=weights)
    t_hvac = tuple(convert_temperature(DEFAULT_HVAC_F[c], "F", "K") for c in classes)
    params = ThermalParams(
        alpha=0.1,
        beta=0.1,
        omega=1.36,
        gamma=1e-6,
        phi=0.6,
        t_hvac=t_hvac,
        t_min=convert_temperature(70.0, "F", "K"),
        t_max=convert_temperature(80.0, "F", "K"),
        delta_t=1.0 / 60.0,
        q_mean=110.0,
        q_std=1.0,
    )
    ambient = SyntheticAmbient(
        mean_k=convert_temperature(85.0, "F", "K"),
        std_k=convert_temperature_delta(4.33, "F", "K"),
    )
    return ScenarioConfig(
        layout=layout,
        params=params,
        n_people=45,
        horizon_steps=600,
        time_range_steps=60,
        ambient=ambient,
        noise_std=0.1,
        seed=0,
    )
