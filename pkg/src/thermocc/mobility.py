"""Turning per-step occupant-heat estimates into integer occupancy maps,
and scoring them against a ground-truth schedule.

Counts are obtained by dividing estimated heat by the mean per-person
emission and rounding half away from zero (clamped at zero); each reporting
window then gets the lower median of its per-step counts, which keeps the
reported value an integer actually attained within the window.

The error metric is the per-room normalized mean absolute error over windows,

    NMAE_i = mean_w |n_i(w) - nhat_i(w)| / mean_w n_i(w),

averaged across rooms into a single total reconstruction error. Rooms that
are empty all day have an undefined NMAE and are excluded from the average
(reported separately).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import ValidationError
from .simulate import OccupancySchedule


@dataclass(frozen=True)
class MobilityMap:
    counts: np.ndarray   # (k, n_windows) non-negative int
    tr_steps: int

    def __post_init__(self):
        self.counts.flags.writeable = False

    @property
    def n_windows(self) -> int:
        return self.counts.shape[1]


@dataclass(frozen=True)
class ReconstructionScore:
    nmae_per_room: tuple[float, ...]   # nan for excluded rooms
    tre: float
    excluded_rooms: tuple[int, ...]    # 0-based indices with zero mean occupancy


def round_half_away(values: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero (2.5 -> 3, -2.5 -> -3)."""
    return np.copysign(np.floor(np.abs(values) + 0.5), values)


def lower_median(sorted_axis: np.ndarray, axis: int = -1) -> np.ndarray:
    """Median taking the lower of the two central values for even lengths."""
    ordered = np.sort(sorted_axis, axis=axis)
    idx = (ordered.shape[axis] - 1) // 2
    return np.take(ordered, idx, axis=axis)


def to_mobility_map(mob_heat_hat: np.ndarray, q_avg: float,
                    tr_steps: int) -> MobilityMap:
    """Heat estimates (W, rooms by steps) to integer counts per window."""
    if q_avg <= 0:
        raise ValidationError(f"q_avg: must be > 0, got {q_avg}")
    if tr_steps < 1:
        raise ValidationError(f"tr_steps: must be >= 1, got {tr_steps}")
    heat = np.asarray(mob_heat_hat, dtype=float)
    k, z = heat.shape
    per_step = np.maximum(round_half_away(heat / q_avg), 0.0).astype(int)
    n_windows = z // tr_steps
    windowed = per_step[:, : n_windows * tr_steps].reshape(k, n_windows, tr_steps)
    counts = lower_median(windowed, axis=2).astype(int)
    return MobilityMap(counts=counts, tr_steps=tr_steps)


def schedule_to_map(schedule: OccupancySchedule, tr_steps: int) -> MobilityMap:
    """Ground-truth counts aggregated onto the same reporting windows.

    The true schedule is constant within its own TR windows; when the
    reporting window matches, aggregation just picks that constant value.
    """
    counts = schedule.counts
    k, z = counts.shape
    n_windows = z // tr_steps
    windowed = counts[:, : n_windows * tr_steps].reshape(k, n_windows, tr_steps)
    agg = lower_median(windowed, axis=2).astype(int)
    return MobilityMap(counts=agg, tr_steps=tr_steps)


def score(truth: OccupancySchedule | MobilityMap,
          inferred: MobilityMap) -> ReconstructionScore:
    """NMAE per room and their average, truth vs. inferred counts."""
    if isinstance(truth, OccupancySchedule):
        truth = schedule_to_map(truth, inferred.tr_steps)
    if truth.counts.shape != inferred.counts.shape:
        raise ValidationError(
            f"window mismatch: truth {truth.counts.shape} vs "
            f"inferred {inferred.counts.shape}")
    true_counts = truth.counts.astype(float)
    err = np.abs(true_counts - inferred.counts).mean(axis=1)
    mean_occ = true_counts.mean(axis=1)
    excluded = tuple(int(i) for i in np.nonzero(mean_occ == 0)[0])
    nmae = np.full(true_counts.shape[0], np.nan)
    included = mean_occ > 0
    nmae[included] = err[included] / mean_occ[included]
    if excluded:
        warnings.warn(
            f"rooms {[i + 1 for i in excluded]} have zero mean occupancy and "
            "are excluded from the error average", stacklevel=2)
    tre = float(np.mean(nmae[included])) if included.any() else float("nan")
    return ReconstructionScore(nmae_per_room=tuple(float(v) for v in nmae),
                               tre=tre, excluded_rooms=excluded)
