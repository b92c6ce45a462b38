"""Forward simulation of the multi-room heat balance under bang-bang HVAC.

One simulated day is an explicit Euler integration of

    T_i(t+1) = T_i(t) + dt * ( alpha * amb_i * (T_ext(t) - T_i(t))
                             + beta * sum_{j ~ i} (T_j(t) - T_i(t))
                             + omega
                             + gamma * 3600 * mobheat_i(t)
                             + phi * (T_hvac_i - T_i(t)) * u_i(t) )

with amb_i the ambient-exposure indicator, mobheat in W (the 3600 factor
brings it to J/h before gamma, which is K/J, applies), and u_i the on/off
state of the AC. The estimator fits exactly this discrete form, so there is
deliberately no higher-order integrator here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    AmbientFile,
    BuildingLayout,
    ScenarioConfig,
    SyntheticAmbient,
    ThermalParams,
    ValidationError,
    adjacency_matrix,
)

# Width of the centered moving average applied to synthetic ambient series.
# Real outdoor temperature averaged over a month is smooth; raw i.i.d. draws
# are not, so we smooth to avoid nonphysical step-to-step jumps.
AMBIENT_SMOOTHING_STEPS = 5


class SimulationError(RuntimeError):
    """Simulation produced non-finite temperatures (unstable step size)."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class OccupancySchedule:
    """Who is where: occupant counts per (room, step) plus per-person power.

    counts is piecewise constant: people are reassigned independently at each
    Time Range boundary and stay put within the window. per_person_power holds
    one emitted-power draw (W) per person, fixed for the whole day.
    room_of_person maps (person, window) to the assigned room index.
    """

    counts: np.ndarray            # (k, z) int
    per_person_power: np.ndarray  # (n_people,) W
    room_of_person: np.ndarray    # (n_people, n_windows) int
    tr_steps: int

    def __post_init__(self):
        _freeze(self.counts)
        _freeze(self.per_person_power)
        _freeze(self.room_of_person)

    @property
    def n_people(self) -> int:
        return self.per_person_power.shape[0]

    def mob_heat(self) -> np.ndarray:
        """Exact per-(room, step) occupant heat in W: sum of assigned draws."""
        k, z = self.counts.shape
        n_windows = self.room_of_person.shape[1]
        per_window = np.zeros((k, n_windows))
        for win in range(n_windows):
            np.add.at(per_window[:, win], self.room_of_person[:, win],
                      self.per_person_power)
        step_window = np.minimum(np.arange(z) // self.tr_steps, n_windows - 1)
        return per_window[:, step_window]


@dataclass(frozen=True)
class SimulationTrace:
    """Ground truth of one simulated day."""

    temps: np.ndarray       # (k, z) K
    ambient: np.ndarray     # (z,) K
    hvac_state: np.ndarray  # (k, z) in {0, 1}
    mob_heat: np.ndarray    # (k, z) W
    schedule: OccupancySchedule
    config: ScenarioConfig

    def __post_init__(self):
        _freeze(self.temps)
        _freeze(self.ambient)
        _freeze(self.hvac_state)
        _freeze(self.mob_heat)


@dataclass(frozen=True)
class SensorTrace:
    """What the estimator sees: noisy temperatures, exact controller states.

    Each room reports two independently noised readings per step, as from a
    redundant sensor pair: temps_rate_meas feeds the temperature-change
    (differencing) side of the fit and temps_meas the level terms
    (conduction differences, HVAC term). Keeping the two channels
    independent stops the differenced noise from correlating with the
    regressors, which would otherwise bias the recovered conduction rates.
    When temps_rate_meas is None (single-sensor data, e.g. ingested CSVs)
    the level series is used for both. The AC state u is read from the
    control system and carries no noise.
    """

    temps_meas: np.ndarray      # (k, z) K
    ambient_meas: np.ndarray    # (z,) K
    hvac_temp_meas: np.ndarray  # (k, z) K
    hvac_state: np.ndarray      # (k, z) in {0, 1}
    delta_t: float              # h
    layout: BuildingLayout
    temps_rate_meas: np.ndarray | None = None   # (k, z) K

    def __post_init__(self):
        _freeze(self.temps_meas)
        _freeze(self.ambient_meas)
        _freeze(self.hvac_temp_meas)
        _freeze(self.hvac_state)
        if self.temps_rate_meas is not None:
            _freeze(self.temps_rate_meas)

    @property
    def n_steps(self) -> int:
        return self.temps_meas.shape[1]

    def rate_series(self) -> np.ndarray:
        if self.temps_rate_meas is not None:
            return self.temps_rate_meas
        return self.temps_meas


def generate_ambient(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Ambient temperature series T_ext(t), length horizon_steps, in K.

    Synthetic mode draws i.i.d. Gaussian(mean, std) per step and smooths with
    a centered moving average (partial windows at the edges). File mode reads
    a profile and linearly resamples it onto the step grid.
    """
    z = cfg.horizon_steps
    spec = cfg.ambient
    if isinstance(spec, SyntheticAmbient):
        raw = rng.normal(spec.mean_k, spec.std_k, size=z)
        return _freeze(_smooth(raw, AMBIENT_SMOOTHING_STEPS))
    if isinstance(spec, AmbientFile):
        profile = _read_profile(spec.path)
        if len(profile) < 2:
            raise ValidationError(
                f"ambient profile {spec.path}: need at least 2 points, got {len(profile)}")
        if not np.all(np.isfinite(profile)):
            raise ValidationError(f"ambient profile {spec.path}: non-finite values")
        src = np.linspace(0.0, 1.0, len(profile))
        dst = np.linspace(0.0, 1.0, z)
        return _freeze(np.interp(dst, src, profile))
    raise ValidationError(f"ambient: unsupported spec {spec!r}")


def _smooth(series: np.ndarray, width: int) -> np.ndarray:
    """Centered moving average; edge windows shrink to the available samples."""
    if width <= 1 or len(series) == 1:
        return series.copy()
    kernel = np.ones(width)
    sums = np.convolve(series, kernel, mode="same")
    counts = np.convolve(np.ones_like(series), kernel, mode="same")
    return sums / counts


def _read_profile(path: str) -> np.ndarray:
    """One temperature per line; optional single-column CSV header T_K/T_F/T_C."""
    from .units import convert_temperature

    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise ValidationError(f"ambient profile {path}: {exc}") from exc
    unit = "K"
    if lines and lines[0].upper() in ("T_K", "T_F", "T_C"):
        unit = lines[0][-1].upper()
        lines = lines[1:]
    try:
        values = np.array([float(ln) for ln in lines])
    except ValueError as exc:
        raise ValidationError(f"ambient profile {path}: unparsable value ({exc})") from exc
    return convert_temperature(values, unit, "K")


def generate_schedule(cfg: ScenarioConfig, rng: np.random.Generator) -> OccupancySchedule:
    """Assign people to rooms, reshuffling independently at every TR boundary.

    Each of the N people lands in room i with probability w_i / sum(w),
    independently of everyone else and of previous windows. Per-person power
    is drawn once at t=0 and held for the day.
    """
    k, z, tr = cfg.layout.k, cfg.horizon_steps, cfg.time_range_steps
    n = cfg.n_people
    n_windows = math.ceil(z / tr)
    powers = rng.normal(cfg.params.q_mean, cfg.params.q_std, size=n)
    probs = cfg.layout.placement_probabilities()
    rooms = rng.choice(k, size=(n, n_windows), p=probs) if n > 0 else \
        np.zeros((0, n_windows), dtype=int)
    counts_per_window = np.zeros((k, n_windows), dtype=int)
    for win in range(n_windows):
        counts_per_window[:, win] = np.bincount(rooms[:, win], minlength=k)
    step_window = np.minimum(np.arange(z) // tr, n_windows - 1)
    counts = counts_per_window[:, step_window]
    return OccupancySchedule(counts=counts, per_person_power=powers,
                             room_of_person=rooms, tr_steps=tr)


def controller_update(temp: float, u_prev: int, params: ThermalParams) -> int:
    """Bang-bang AC rule: on at/above t_max, off at/below t_min, else hold."""
    if not math.isfinite(temp):
        raise ValidationError(f"controller_update: non-finite temperature {temp}")
    if temp >= params.t_max:
        return 1
    if temp <= params.t_min:
        return 0
    return int(u_prev)


def _controller_vec(temps: np.ndarray, u_prev: np.ndarray,
                    params: ThermalParams) -> np.ndarray:
    return np.where(temps >= params.t_max, 1,
                    np.where(temps <= params.t_min, 0, u_prev)).astype(np.int8)


def step_temperature(temps: np.ndarray, t_ext: float, u: np.ndarray,
                     mob_heat_w: np.ndarray, params: ThermalParams,
                     layout: BuildingLayout) -> np.ndarray:
    """One explicit Euler step of the heat balance; returns temps at t+1."""
    temps = np.asarray(temps, dtype=float)
    u = np.asarray(u)
    mob_heat_w = np.asarray(mob_heat_w, dtype=float)
    if temps.shape != (layout.k,) or u.shape != (layout.k,) or \
            mob_heat_w.shape != (layout.k,):
        raise ValidationError(
            f"step_temperature: expected {layout.k} rooms, got shapes "
            f"{temps.shape}, {u.shape}, {mob_heat_w.shape}")
    adj = adjacency_matrix(layout)
    amb = np.asarray(layout.ambient_exposed, dtype=float)
    t_hvac = np.asarray(params.t_hvac)
    rate = (
        params.alpha * amb * (t_ext - temps)
        + params.beta * (adj @ temps - adj.sum(axis=1) * temps)
        + params.omega
        + params.gamma * (mob_heat_w * 3600.0)
        + params.phi * (t_hvac - temps) * u
    )
    return temps + params.delta_t * rate


def simulate(cfg: ScenarioConfig, rng: np.random.Generator | None = None) -> SimulationTrace:
    """Run one full day and return the ground-truth trace.

    Draw order is fixed for reproducibility: ambient series, then schedule
    (powers, then room assignments), then initial temperatures uniform in
    [t_min, t_max]. At each step the controller fires on current temperatures
    (previous state held inside the deadband, initially off), then the Euler
    update advances the temperatures.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    k, z = cfg.layout.k, cfg.horizon_steps
    params = cfg.params
    ambient = generate_ambient(cfg, rng)
    schedule = generate_schedule(cfg, rng)
    mob_heat = schedule.mob_heat()

    adj = adjacency_matrix(cfg.layout)
    degree = adj.sum(axis=1)
    amb_mask = np.asarray(cfg.layout.ambient_exposed, dtype=float)
    t_hvac = np.asarray(params.t_hvac)

    temps = np.empty((k, z))
    states = np.empty((k, z), dtype=np.int8)
    temps[:, 0] = rng.uniform(params.t_min, params.t_max, size=k)
    u_prev = np.zeros(k, dtype=np.int8)
    for t in range(z):
        cur = temps[:, t]
        u = _controller_vec(cur, u_prev, params)
        states[:, t] = u
        if t + 1 < z:
            rate = (
                params.alpha * amb_mask * (ambient[t] - cur)
                + params.beta * (adj @ cur - degree * cur)
                + params.omega
                + params.gamma * (mob_heat[:, t] * 3600.0)
                + params.phi * (t_hvac - cur) * u
            )
            temps[:, t + 1] = cur + params.delta_t * rate
        u_prev = u
    if not np.all(np.isfinite(temps)):
        raise SimulationError(
            "simulation produced non-finite temperatures; delta_t is too large "
            "for the given conduction rates")
    return SimulationTrace(temps=temps, ambient=np.asarray(ambient).copy(),
                           hvac_state=states, mob_heat=mob_heat,
                           schedule=schedule, config=cfg)


def add_sensor_noise(trace: SimulationTrace, eta_std: float,
                     rng: np.random.Generator) -> SensorTrace:
    """Overlay one independent Gaussian draw per (sensor, step).

    Room temperatures are read twice per step (redundant sensor pair, see
    SensorTrace); ambient and supply-air temperatures each get one draw per
    step. The controller state is copied exactly.
    """
    if eta_std < 0:
        raise ValidationError(f"eta_std: must be >= 0, got {eta_std}")
    cfg = trace.config
    k, z = trace.temps.shape
    t_hvac_true = np.asarray(cfg.params.t_hvac)[:, None] * np.ones((1, z))
    if eta_std == 0:
        temps_meas = trace.temps.copy()
        temps_rate = trace.temps.copy()
        ambient_meas = trace.ambient.copy()
        hvac_meas = t_hvac_true
    else:
        temps_meas = trace.temps + rng.normal(0.0, eta_std, size=(k, z))
        temps_rate = trace.temps + rng.normal(0.0, eta_std, size=(k, z))
        ambient_meas = trace.ambient + rng.normal(0.0, eta_std, size=z)
        hvac_meas = t_hvac_true + rng.normal(0.0, eta_std, size=(k, z))
    return SensorTrace(temps_meas=temps_meas, ambient_meas=ambient_meas,
                       hvac_temp_meas=hvac_meas,
                       hvac_state=trace.hvac_state.copy(),
                       delta_t=cfg.params.delta_t, layout=cfg.layout,
                       temps_rate_meas=temps_rate)


def replay_controller(trace: SimulationTrace) -> np.ndarray:
    """Recompute u from the stored temperatures; must equal the stored states."""
    k, z = trace.temps.shape
    states = np.empty((k, z), dtype=np.int8)
    u_prev = np.zeros(k, dtype=np.int8)
    for t in range(z):
        u_prev = _controller_vec(trace.temps[:, t], u_prev, trace.config.params)
        states[:, t] = u_prev
    return states
