"""Result containers shared by the analytic predictor and the tag analysis."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class CoincidenceHistogram:
    """Binned coincidences over T_S + T_AS with matched accidentals.

    ``counts`` are totals over the conditional trials; ``accidental_counts``
    are the unconditional-trial estimate scaled to the same exposure
    (raw unconditional pairings divided by ``k_unconditional_per_trigger``).
    """

    bin_size_ns: int
    axis_origin_ns: int
    counts: np.ndarray
    accidental_counts: np.ndarray
    n_conditional_trials: int
    n_unconditional_trials: int
    k_unconditional_per_trigger: int

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        self.accidental_counts = np.asarray(self.accidental_counts, dtype=float)
        if self.counts.shape != self.accidental_counts.shape:
            raise ValueError("counts and accidental_counts must have equal length")
        if (self.counts < 0).any() or (self.accidental_counts < 0).any():
            raise ValueError("histogram entries must be non-negative")

    def bin_centers_ns(self):
        n = len(self.counts)
        return self.axis_origin_ns + self.bin_size_ns * (np.arange(n) + 0.5)

    def bin_index(self, time_ns) -> int:
        return int((time_ns - self.axis_origin_ns) // self.bin_size_ns)


@dataclass
class PredictedHistogram:
    """Expected per-trial coincidence counts with the three-peak decomposition."""

    bin_size_ns: int
    axis_origin_ns: int
    expected: np.ndarray
    accidental: np.ndarray
    early_early: np.ndarray
    central: np.ndarray
    late_late: np.ndarray
    floor: np.ndarray
    peak_centers_ns: tuple

    def bin_centers_ns(self):
        n = len(self.expected)
        return self.axis_origin_ns + self.bin_size_ns * (np.arange(n) + 0.5)


@dataclass
class EValue:
    alpha_rad: float
    beta_rad: float
    e: float
    sigma: float


@dataclass
class ChshResult:
    e_values: list
    s: float
    sigma_s: float
    significance: float
    unphysical: bool = False

    @classmethod
    def from_e_values(cls, e_values) -> "ChshResult":
        s = e_values[0].e + e_values[1].e + e_values[2].e - e_values[3].e
        sigma_s = math.sqrt(sum(ev.sigma**2 for ev in e_values))
        significance = (s - 2.0) / sigma_s if sigma_s > 0 else math.inf
        return cls(
            e_values=list(e_values),
            s=s,
            sigma_s=sigma_s,
            significance=significance,
            unphysical=abs(s) > 2.0 * math.sqrt(2.0) + 1e-9,
        )


@dataclass
class FringeFit:
    visibility: float
    visibility_sigma: float
    phase_offset_rad: float
    phase_offset_sigma: float
    amplitude: float
    floor: float
    residuals: np.ndarray
    chi2_dof: float


@dataclass
class ScanPoint:
    x: float
    s: float
    sigma: float
    significance: float
    defined: bool = True


@dataclass
class ScanResult:
    variable: str
    points: list

    def best(self) -> ScanPoint:
        usable = [p for p in self.points if p.defined]
        if not usable:
            raise ValueError("no defined scan points")
        return max(usable, key=lambda p: p.s)
