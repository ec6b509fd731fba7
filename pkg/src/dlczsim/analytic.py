"""Closed-form predictor for the protocol observables.

Expected tag intensities and coincidence histograms are computed on a 1 ns
grid (matching the integer-nanosecond tag times of the simulator), with the
thermal pair statistics entering through truncated factorial moments. The
same grid helpers back the brute-force enumeration oracle in the tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .config import ExperimentConfig, phase_from_detuning, require_valid
from .errors import UndefinedStatisticError, ValidationError
from .results import ChshResult, EValue, PredictedHistogram

DEFAULT_BIN_NS = 600
DEFAULT_N_MAX = 12


# -- photon statistics -------------------------------------------------------

def thermal_distribution(mean: float, n_max: int):
    """Thermal photon-number distribution truncated at ``n_max``.

    Returns ``(probs, truncated_mass)`` with ``probs[n] = mean^n/(1+mean)^(n+1)``
    for n = 0..n_max. The truncated mass is the analytic tail
    ``(mean/(1+mean))^(n_max+1)``.
    """
    if mean < 0:
        raise ValueError(f"thermal mean must be non-negative, got {mean}")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    n = np.arange(n_max + 1)
    if mean == 0.0:
        probs = np.zeros(n_max + 1)
        probs[0] = 1.0
        return probs, 0.0
    q = mean / (1.0 + mean)
    probs = (1.0 - q) * q**n
    return probs, q ** (n_max + 1)


def thermal_moments(mean: float, n_max: int):
    """Truncated E[n] and E[n(n-1)] of the thermal distribution."""
    probs, _ = thermal_distribution(mean, n_max)
    n = np.arange(n_max + 1, dtype=float)
    return float(np.sum(n * probs)), float(np.sum(n * (n - 1) * probs))


def stokes_probability(write_power_uw: float, slope_pct_per_uw: float,
                       background_pct: float) -> float:
    """Stokes detection probability (percent) vs write power.

    Linear law with the power -> 0 intercept from stray-light background.
    Valid at moderate powers only; at the highest powers the comb structure
    degrades and the measured probability falls below this line.
    """
    if write_power_uw < 0:
        raise ValueError("write power must be non-negative")
    if slope_pct_per_uw < 0 or background_pct < 0:
        raise ValueError("slope and background must be non-negative")
    return slope_pct_per_uw * write_power_uw + background_pct


@dataclass(frozen=True)
class PairModePopulation:
    """One temporal Stokes mode: thermal mean pair number and envelope weight."""

    mode_index: int
    mode_time_ns: float
    mean_pairs: float
    weight: float


def pair_mode_populations(cfg: ExperimentConfig):
    centers = cfg.mode_centers_ns()
    weights = cfg.mode_weights()
    total = cfg.mean_pairs_total()
    return [
        PairModePopulation(m, centers[m], weights[m] * total, weights[m])
        for m in range(cfg.n_temporal_modes)
    ]


# -- 1 ns grid helpers -------------------------------------------------------

def box_mass(length: int, lo_ns: float, hi_ns: float) -> np.ndarray:
    """Cell masses of a uniform density on [lo, hi); cell n covers [n-.5, n+.5)."""
    out = np.zeros(length)
    if hi_ns <= lo_ns:
        return out
    edges = np.arange(length + 1) - 0.5
    cover = np.clip(np.minimum(edges[1:], hi_ns) - np.maximum(edges[:-1], lo_ns),
                    0.0, None)
    out[:] = cover / (hi_ns - lo_ns)
    return out


def gauss_mass(length: int, center_ns: float, sigma_ns: float) -> np.ndarray:
    """Cell masses of a Gaussian; degenerate sigma collapses to one cell."""
    out = np.zeros(length)
    if sigma_ns <= 0:
        idx = int(round(center_ns))
        if 0 <= idx < length:
            out[idx] = 1.0
        return out
    edges = (np.arange(length + 1) - 0.5 - center_ns) / sigma_ns
    cdf = ndtr(edges)
    out[:] = np.diff(cdf)
    return out


def shift_mass(mass: np.ndarray, shift_ns: int) -> np.ndarray:
    out = np.zeros_like(mass)
    if shift_ns >= 0:
        out[shift_ns:] = mass[: len(mass) - shift_ns]
    else:
        out[:shift_ns] = mass[-shift_ns:]
    return out


def clip_gate(mass: np.ndarray, gate_ns: int) -> np.ndarray:
    out = mass.copy()
    out[gate_ns + 1:] = 0.0
    return out


# -- per-trial intensity model -----------------------------------------------

class TrialModel:
    """Expected per-trial tag intensities and pair-path probabilities.

    Everything needed by predict_* and by the Monte Carlo engine's sampling
    tables: per-mode Stokes/anti-Stokes detection masses on the 1 ns grid,
    path probabilities of the joint four-path pair model, and noise masses.
    """

    def __init__(self, cfg: ExperimentConfig, n_max: int = DEFAULT_N_MAX):
        self.cfg = cfg
        self.n_max = n_max
        self.theta = 0.0
        self.phi_s = 0.0
        self.phi_as = 0.0
        if cfg.analyzer_s is not None:
            self.phi_s = phase_from_detuning(cfg.analyzer_s)
        if cfg.analyzer_as is not None:
            self.phi_as = phase_from_detuning(cfg.analyzer_as)
        self.theta = self.phi_s - self.phi_as
        self.mu = cfg.overlap_for_basis(self.phi_s)

        # analyzer path efficiencies; transparency window = transmit all
        self.eta_ts = cfg.analyzer_s.eta_transmit if cfg.analyzer_s else 1.0
        self.eta_es = cfg.analyzer_s.eta_echo if cfg.analyzer_s else 0.0
        self.eta_ta = cfg.analyzer_as.eta_transmit if cfg.analyzer_as else 1.0
        self.eta_ea = cfg.analyzer_as.eta_echo if cfg.analyzer_as else 0.0
        self.tau_s = cfg.analyzer_s.tau_ifc_ns if cfg.analyzer_s else 0
        self.tau_as = cfg.analyzer_as.tau_ifc_ns if cfg.analyzer_as else 0

        cs = cfg.stokes_chain()
        cas = cfg.antistokes_chain()
        self.s_t = self.eta_ts * cs
        self.s_e = self.eta_es * cs

        self.modes = pair_mode_populations(cfg)
        self.half_slot = cfg.write_fwhm_ns / 2.0
        self.sigma_j = cfg.jitter_sigma_ns()
        self.gate = cfg.antistokes_gate_length_ns

        # conversion probability per mode (spin decoherence at slot center)
        self.rho = np.array(
            [cfg.conversion_probability(m.mode_time_ns) for m in self.modes]
        )
        self.a_t = self.rho * self.eta_ta * cas
        self.a_e = self.rho * self.eta_ea * cas

        self.len_s = int(cfg.stokes_window_start_ns + cfg.stokes_window_length_ns
                         + self.tau_s + 1)
        self.len_as = int(self.gate + 1)

        self._build_masses()
        self._build_pair_cells()

    # -- time densities --

    def _stokes_emission_mass(self, m):
        c = self.modes[m].mode_time_ns
        return box_mass(self.len_s, c - self.half_slot, c + self.half_slot)

    def _build_masses(self):
        cfg = self.cfg
        # per-pair detected Stokes mass (unit pair), per mode
        self.pair_s_mass = []
        self.pair_as_mass = []
        jit_len = self.len_as
        for m in range(len(self.modes)):
            em = self._stokes_emission_mass(m)
            s_mass = self.s_t * em + self.s_e * shift_mass(em, self.tau_s)
            self.pair_s_mass.append(s_mass)

            c = cfg.tau_mc_ns - self.modes[m].mode_time_ns
            emission = _box_gauss_mass(jit_len, c - self.half_slot,
                                       c + self.half_slot, self.sigma_j)
            as_mass = self.a_t[m] * clip_gate(emission, self.gate) + self.a_e[
                m
            ] * clip_gate(shift_mass(emission, self.tau_as), self.gate)
            self.pair_as_mass.append(as_mass)

        # Stokes background (detected intercept in transparency mode)
        w0 = cfg.stokes_window_start_ns
        w1 = w0 + cfg.stokes_window_length_ns
        bg_raw = box_mass(self.len_s, w0, w1)
        self.bg_s_mass = cfg.p_s_background * (
            self.eta_ts * bg_raw + self.eta_es * shift_mass(bg_raw, self.tau_s)
        )

        # anti-Stokes noise incident on the analyzer stage, per read
        noise_raw = np.zeros(self.len_as)
        noise_raw += cfg.antistokes_noise_per_us * 1e-3 * (
            box_mass(self.len_as, 0.0, self.gate) * self.gate
        )
        for pk in cfg.leakage_peaks:
            noise_raw += pk.rate * gauss_mass(self.len_as, pk.center_ns, pk.width_ns)
        self.noise_as_mass = self.eta_ta * clip_gate(noise_raw, self.gate) + (
            self.eta_ea * clip_gate(shift_mass(noise_raw, self.tau_as), self.gate)
        )

        # trial totals (truncated thermal means)
        self.mean_n = np.array(
            [thermal_moments(m.mean_pairs, self.n_max)[0] for m in self.modes]
        )
        self.fact2 = np.array(
            [thermal_moments(m.mean_pairs, self.n_max)[1] for m in self.modes]
        )
        self.f_s = self.bg_s_mass.copy()
        self.g_as = self.noise_as_mass.copy()
        for m in range(len(self.modes)):
            self.f_s += self.mean_n[m] * self.pair_s_mass[m]
            self.g_as += self.mean_n[m] * self.pair_as_mass[m]

    # -- joint four-path pair model --

    def pair_cells(self, m: int):
        """Joint (S-path, AS-path) probabilities for one pair in mode ``m``.

        Rows: S in {transmit, echo, none}; columns: AS in {transmit, echo,
        none}. The central (TE/ET) cells carry the two-photon interference
        cross-term; singles marginals are phase independent.
        """
        from .config import joint_pair_cells

        cells = joint_pair_cells(
            self.s_t, self.s_e, self.a_t[m], self.a_e[m], self.mu,
            math.cos(self.theta),
        )
        if (cells < -1e-12).any():
            raise ValidationError(
                ["analyzer interference model infeasible for these parameters"]
            )
        return np.clip(cells, 0.0, None)

    def _build_pair_cells(self):
        self.cells = [self.pair_cells(m) for m in range(len(self.modes))]

    def _same_pair_sum_mass(self, m, delta_s, delta_a, length):
        """Sum-time mass of a correlated pair with gate-coupled clipping.

        The pair sum is tau_mc + delta_s + delta_a + jitter; the anti-Stokes
        gate clips jitter excursions depending on where in the mode slot the
        pair was born.
        """
        cfg = self.cfg
        center = cfg.tau_mc_ns + delta_s + delta_a
        mass = gauss_mass(length, center, self.sigma_j)
        idx = np.nonzero(mass)[0]
        if len(idx) == 0:
            return mass
        j = idx - center  # jitter value at each sum cell
        c = self.modes[m].mode_time_ns
        lo, hi = c - self.half_slot, c + self.half_slot
        # gate constraint: 0 <= tau_mc - T_S + j + delta_a <= gate
        ts_min = np.maximum(lo, cfg.tau_mc_ns + j + delta_a - self.gate)
        ts_max = np.minimum(hi, cfg.tau_mc_ns + j + delta_a)
        frac = np.clip(ts_max - ts_min, 0.0, None) / (hi - lo)
        mass[idx] *= frac
        return mass

    # -- expected histograms --

    def sum_length(self):
        return self.len_s + self.len_as - 1

    def expected_grids(self):
        """Per-trial expected coincidence mass on the sum grid.

        Returns (expected, accidental, early_early, central, late_late, floor);
        ``expected`` = sum of the decomposition, ``accidental`` is the
        unconditional-pairing estimate at the same exposure.
        """
        n = self.sum_length()
        acc = np.convolve(self.f_s, self.g_as)[:n]
        # Same-mode intensity correlation: thermal bunching of pair numbers
        # (quantum) and common-intensity correlation (classical baseline)
        # produce the same excess E[n_s n_as] - E[n_s]E[n_as] = p^2.
        same_mode = np.zeros(n)
        for m in range(len(self.modes)):
            w = self.fact2[m] - self.mean_n[m] ** 2
            if w != 0.0:
                same_mode += w * np.convolve(
                    self.pair_s_mass[m], self.pair_as_mass[m]
                )[:n]
        ee = np.zeros(n)
        central = np.zeros(n)
        ll = np.zeros(n)
        if not self.cfg.classical_baseline:
            # number-correlated same-pair term: the nonclassical part
            for m in range(len(self.modes)):
                cells = self.cells[m]
                mean = self.mean_n[m]
                ee += mean * cells[0, 0] * self._same_pair_sum_mass(m, 0, 0, n)
                central += mean * cells[0, 1] * self._same_pair_sum_mass(
                    m, 0, self.tau_as, n
                )
                central += mean * cells[1, 0] * self._same_pair_sum_mass(
                    m, self.tau_s, 0, n
                )
                ll += mean * cells[1, 1] * self._same_pair_sum_mass(
                    m, self.tau_s, self.tau_as, n
                )
        floor = acc + same_mode
        expected = floor + ee + central + ll
        return expected, acc, ee, central, ll, floor

    def window_sums(self, grid, center_ns, width_ns):
        lo = int(round(center_ns - width_ns / 2.0))
        hi = lo + int(round(width_ns))
        lo = max(lo, 0)
        hi = min(hi, len(grid))
        return float(grid[lo:hi].sum())

    # -- singles --

    def stokes_mean_tags(self) -> float:
        return float(self.bg_s_mass.sum() + np.dot(
            self.mean_n, [m.sum() for m in self.pair_s_mass]
        ))

    def stokes_click_probability(self) -> float:
        """P(at least one Stokes tag in a trial), exact thermal closed form."""
        cfg = self.cfg
        p_none = math.exp(-cfg.p_s_background * (self.eta_ts + self.eta_es))
        eta = self.s_t + self.s_e
        for m in self.modes:
            p_none /= 1.0 + m.mean_pairs * eta
        return 1.0 - p_none

    def antistokes_mean_tags(self) -> float:
        return float(self.g_as.sum())


def _box_gauss_mass(length, lo, hi, sigma):
    """Mass of box(lo, hi) convolved with a centered Gaussian of width sigma."""
    if sigma <= 0:
        return box_mass(length, lo, hi)
    x = np.arange(length)
    a = (x + 0.5 - lo) / sigma
    b = (x + 0.5 - hi) / sigma
    a0 = (x - 0.5 - lo) / sigma
    b0 = (x - 0.5 - hi) / sigma

    def _igauss(z):
        # integral of ndtr: z*Phi(z) + phi(z)
        return z * ndtr(z) + np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    mass = sigma / (hi - lo) * (
        _igauss(a) - _igauss(b) - _igauss(a0) + _igauss(b0)
    )
    return np.clip(mass, 0.0, None)


# -- public prediction API -----------------------------------------------------

def predict_histogram(cfg: ExperimentConfig, bin_size_ns: int = DEFAULT_BIN_NS,
                      n_max: int = DEFAULT_N_MAX) -> PredictedHistogram:
    """Expected coincidence histogram per conditional trial.

    Bin centers sit on multiples of ``bin_size_ns`` (axis origin at
    -bin_size/2) so the pair peak at tau_mc falls on a bin center.
    """
    require_valid(cfg)
    model = TrialModel(cfg, n_max=n_max)
    expected, acc, ee, central, ll, floor = model.expected_grids()
    origin = -bin_size_ns // 2
    n_bins = (len(expected) - origin) // bin_size_ns + 1

    def _binned(grid):
        idx = (np.arange(len(grid)) - origin) // bin_size_ns
        return np.bincount(idx, weights=grid, minlength=n_bins)[:n_bins]

    peaks = [cfg.tau_mc_ns]
    if cfg.analyzer_s is not None and cfg.analyzer_as is not None:
        peaks = [
            cfg.tau_mc_ns,
            cfg.tau_mc_ns + cfg.analyzer_as.tau_ifc_ns,
            cfg.tau_mc_ns + cfg.analyzer_s.tau_ifc_ns + cfg.analyzer_as.tau_ifc_ns,
        ]
    return PredictedHistogram(
        bin_size_ns=bin_size_ns,
        axis_origin_ns=origin,
        expected=_binned(expected),
        accidental=_binned(acc),
        early_early=_binned(ee),
        central=_binned(central),
        late_late=_binned(ll),
        floor=_binned(floor),
        peak_centers_ns=tuple(peaks),
    )


def predict_g2(cfg: ExperimentConfig, bin_size_ns: int = DEFAULT_BIN_NS,
               n_max: int = DEFAULT_N_MAX, window_center_ns: int | None = None
               ) -> float:
    """Expected cross-correlation in a bin centered on the pair peak.

    Ratio of expected conditional coincidences to the accidental estimate
    in a window of ``bin_size_ns`` centered at tau_mc (coincidence counts
    normalized by the unconditional-trial estimate of the singles product).
    """
    require_valid(cfg)
    model = TrialModel(cfg, n_max=n_max)
    expected, acc, *_ = model.expected_grids()
    center = cfg.tau_mc_ns if window_center_ns is None else window_center_ns
    num = model.window_sums(expected, center, bin_size_ns)
    den = model.window_sums(acc, center, bin_size_ns)
    if den <= 0.0:
        raise UndefinedStatisticError(
            "accidental expectation is zero in the g2 window; widen the bin"
        )
    return num / den


def predict_fringe(cfg: ExperimentConfig, phi_s: float, phi_as_list,
                   bin_size_ns: int = DEFAULT_BIN_NS,
                   n_max: int = DEFAULT_N_MAX):
    """Expected central-peak coincidences per trial at each analyzer phase.

    Returns ``(values, floor)`` where ``values[i]`` is the expected count in
    the central window at ``phi_as_list[i]`` and ``floor`` the phase
    independent part.
    """
    require_valid(cfg)
    if cfg.analyzer_s is None or cfg.analyzer_as is None:
        raise ValidationError(["fringe prediction requires both analyzers"])
    from .config import detuning_for_phase, replace

    center = cfg.tau_mc_ns + cfg.analyzer_as.tau_ifc_ns
    values = []
    floor_val = None
    for phi_as in phi_as_list:
        c = replace(
            cfg,
            analyzer_s=replace(cfg.analyzer_s,
                               detuning_mhz=detuning_for_phase(cfg.analyzer_s, phi_s)),
            analyzer_as=replace(cfg.analyzer_as,
                                detuning_mhz=detuning_for_phase(cfg.analyzer_as,
                                                                phi_as)),
        )
        model = TrialModel(c, n_max=n_max)
        expected, _, _, _, _, floor = model.expected_grids()
        values.append(model.window_sums(expected, center, bin_size_ns))
        if floor_val is None:
            floor_val = model.window_sums(floor, center, bin_size_ns)
    return np.array(values), floor_val


def predict_visibility(cfg: ExperimentConfig, phi_s: float = 0.0,
                       bin_size_ns: int = DEFAULT_BIN_NS,
                       n_max: int = DEFAULT_N_MAX) -> float:
    """Raw fringe contrast (max-min)/(max+min) of the central-peak counts."""
    vals, _ = predict_fringe(cfg, phi_s, [phi_s, phi_s + math.pi],
                             bin_size_ns=bin_size_ns, n_max=n_max)
    c_max, c_min = vals[0], vals[1]
    if c_max + c_min <= 0:
        raise UndefinedStatisticError("no central-peak coincidences predicted")
    return float((c_max - c_min) / (c_max + c_min))


def predict_chsh(cfg: ExperimentConfig, alpha: float, alpha_p: float,
                 beta: float, beta_p: float,
                 bin_size_ns: int = DEFAULT_BIN_NS,
                 n_max: int = DEFAULT_N_MAX) -> ChshResult:
    """Analytic CHSH parameter; sigma fields are zero.

    E(a, b) = V(a) cos(a - b) with the visibility from the central-peak
    post-selection model (per Stokes basis when per-basis overlap is set).
    """
    require_valid(cfg)
    if cfg.analyzer_s is None or cfg.analyzer_as is None:
        raise ValidationError(["CHSH prediction requires both analyzers"])
    vis = {}
    for a in (alpha, alpha_p):
        vis[a] = predict_visibility(cfg, phi_s=a, bin_size_ns=bin_size_ns,
                                    n_max=n_max)
    e_values = [
        EValue(alpha, beta, vis[alpha] * math.cos(alpha - beta), 0.0),
        EValue(alpha_p, beta, vis[alpha_p] * math.cos(alpha_p - beta), 0.0),
        EValue(alpha, beta_p, vis[alpha] * math.cos(alpha - beta_p), 0.0),
        EValue(alpha_p, beta_p, vis[alpha_p] * math.cos(alpha_p - beta_p), 0.0),
    ]
    result = ChshResult.from_e_values(e_values)
    result.sigma_s = 0.0
    result.significance = math.inf if result.s > 2 else -math.inf
    return result
