"""Statistics reconstruction from raw tag streams.

Coincidences pair every Stokes tag with every anti-Stokes tag of the same
conditional trial at T_S + T_AS. Accidentals pair the triggering trial's
Stokes tags with the anti-Stokes tags of the following unconditional trials
and are divided by the number of unconditional trials per trigger, which
matches the conditional exposure exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .config import (
    CHANNEL_ANTISTOKES,
    CHANNEL_STOKES,
    KIND_CONDITIONAL,
    KIND_UNCONDITIONAL,
)
from .errors import (
    FitRankError,
    StreamOrderError,
    UndefinedStatisticError,
)
from .results import (
    ChshResult,
    CoincidenceHistogram,
    EValue,
    FringeFit,
    ScanPoint,
    ScanResult,
)
from .tags import TagStream

SMALL_COUNT = 10


@dataclass
class PairSums:
    """All coincidence pair sums of a stream, conditional and accidental."""

    cond_sums: np.ndarray
    acc_sums: np.ndarray
    n_triggers: int
    n_conditional_estimate: int
    n_unconditional_trials: int
    k_unconditional: int


def pair_sums(stream: TagStream, n_unconditional: int) -> PairSums:
    """Extract T_S + T_AS values for every conditional and accidental pairing."""
    if not stream.is_ordered():
        raise StreamOrderError("tag stream is not ordered by (trial, channel, time)")
    t = stream.tags
    k = n_unconditional
    period = k + 1

    cond = t[t["kind"] == KIND_CONDITIONAL]
    unc = t[t["kind"] != KIND_CONDITIONAL]

    cond_s = cond[cond["channel"] == CHANNEL_STOKES]
    cond_as = cond[cond["channel"] == CHANNEL_ANTISTOKES]
    unc_as = unc[unc["channel"] == CHANNEL_ANTISTOKES]

    s_ids = cond_s["trial_id"]
    s_times = cond_s["time_ns"].astype(np.int64)

    # conditional same-trial pairings
    cond_sums = []
    ids_as = cond_as["trial_id"]
    as_times = cond_as["time_ns"].astype(np.int64)
    common = np.intersect1d(s_ids, ids_as)
    for tid in common:
        st = s_times[s_ids == tid]
        at = as_times[ids_as == tid]
        cond_sums.append((st[:, None] + at[None, :]).ravel())
    cond_sums = np.concatenate(cond_sums) if cond_sums else np.zeros(0, np.int64)

    # accidental pairings: trigger Stokes tags x unconditional anti-Stokes tags
    acc_sums = []
    if k > 0 and len(unc_as) > 0:
        trig_of_unc = (unc_as["trial_id"] // period) * period
        ua_times = unc_as["time_ns"].astype(np.int64)
        for trig in np.unique(trig_of_unc):
            st = s_times[s_ids == trig]
            if len(st) == 0:
                continue
            at = ua_times[trig_of_unc == trig]
            acc_sums.append((st[:, None] + at[None, :]).ravel())
    acc_sums = np.concatenate(acc_sums) if acc_sums else np.zeros(0, np.int64)

    n_triggers = len(np.unique(s_ids))
    if len(t):
        n_cond_est = int(t["trial_id"].max() // period) + 1
    else:
        n_cond_est = 0
    return PairSums(
        cond_sums=cond_sums,
        acc_sums=acc_sums,
        n_triggers=n_triggers,
        n_conditional_estimate=n_cond_est,
        n_unconditional_trials=n_triggers * k,
        k_unconditional=k,
    )


def build_histogram(stream: TagStream, bin_size_ns: int, n_unconditional: int,
                    n_conditional: int | None = None) -> CoincidenceHistogram:
    """Histogram of coincidence sums with the matched accidental estimate.

    Bin centers sit on multiples of ``bin_size_ns`` (axis origin at
    -bin_size/2).
    """
    ps = pair_sums(stream, n_unconditional)
    origin = -bin_size_ns // 2
    top = 0
    for arr in (ps.cond_sums, ps.acc_sums):
        if len(arr):
            top = max(top, int(arr.max()))
    n_bins = (top - origin) // bin_size_ns + 1

    def _binned(sums):
        idx = (sums - origin) // bin_size_ns
        return np.bincount(idx, minlength=n_bins)[:n_bins].astype(float)

    counts = _binned(ps.cond_sums)
    raw_acc = _binned(ps.acc_sums)
    k = max(ps.k_unconditional, 1)
    return CoincidenceHistogram(
        bin_size_ns=bin_size_ns,
        axis_origin_ns=origin,
        counts=counts,
        accidental_counts=raw_acc / k,
        n_conditional_trials=(
            n_conditional if n_conditional is not None
            else ps.n_conditional_estimate
        ),
        n_unconditional_trials=ps.n_unconditional_trials,
        k_unconditional_per_trigger=ps.k_unconditional,
    )


@dataclass
class G2Estimate:
    value: float
    sigma: float
    peak_bin: int
    peak_center_ns: float
    counts: float
    accidental_raw: float
    small_count: bool
    interval: tuple


def _poisson_interval(count, cl=0.6827):
    """Exact (Garwood) central Poisson interval on a count."""
    a = 1.0 - cl
    lo = 0.0 if count == 0 else chi2.ppf(a / 2, 2 * count) / 2.0
    hi = chi2.ppf(1 - a / 2, 2 * (count + 1)) / 2.0
    return lo, hi


def g2_estimate(hist: CoincidenceHistogram, peak_bin: int | None = None,
                search_center_ns: float | None = None,
                search_halfwidth_ns: float = 3000.0) -> G2Estimate:
    """Cross-correlation at the peak bin with Poisson error propagation.

    The peak bin defaults to the argmax of the counts inside the declared
    search window (reported in the output to avoid silent look-elsewhere
    bias). For bins with fewer than 10 counts on either side the interval
    switches to exact Poisson (Garwood) bounds and is flagged.
    """
    centers = hist.bin_centers_ns()
    if peak_bin is None:
        if search_center_ns is None:
            mask = np.ones(len(centers), dtype=bool)
        else:
            mask = np.abs(centers - search_center_ns) <= search_halfwidth_ns
        if not mask.any():
            raise UndefinedStatisticError("empty search window for the g2 peak")
        masked = np.where(mask, hist.counts, -1.0)
        peak_bin = int(np.argmax(masked))
    if not 0 <= peak_bin < len(hist.counts):
        raise UndefinedStatisticError(f"peak bin {peak_bin} outside histogram")

    c = float(hist.counts[peak_bin])
    k = max(hist.k_unconditional_per_trigger, 1)
    acc = float(hist.accidental_counts[peak_bin])
    raw = acc * k
    if raw <= 0:
        raise UndefinedStatisticError(
            "zero accidentals in the g2 bin; use a wider bin"
        )
    g2 = c / acc
    small = c < SMALL_COUNT or raw < SMALL_COUNT
    if c > 0:
        sigma = g2 * math.sqrt(1.0 / c + 1.0 / raw)
    else:
        sigma = float("inf")
    c_lo, c_hi = _poisson_interval(c)
    r_lo, r_hi = _poisson_interval(raw)
    interval = (
        (c_lo / r_hi * k) if r_hi > 0 else 0.0,
        (c_hi / r_lo * k) if r_lo > 0 else float("inf"),
    )
    if small and math.isfinite(interval[1]):
        sigma = (interval[1] - interval[0]) / 2.0
    return G2Estimate(
        value=g2,
        sigma=sigma,
        peak_bin=peak_bin,
        peak_center_ns=float(centers[peak_bin]),
        counts=c,
        accidental_raw=raw,
        small_count=small,
        interval=interval,
    )


def count_in_window(stream_or_sums, n_unconditional: int, center_ns: float,
                    width_ns: float):
    """Conditional and raw accidental coincidences with sums inside a window."""
    ps = (stream_or_sums if isinstance(stream_or_sums, PairSums)
          else pair_sums(stream_or_sums, n_unconditional))
    lo = center_ns - width_ns / 2.0
    hi = center_ns + width_ns / 2.0
    c = int(np.count_nonzero((ps.cond_sums >= lo) & (ps.cond_sums < hi)))
    a = int(np.count_nonzero((ps.acc_sums >= lo) & (ps.acc_sums < hi)))
    return c, a


def fit_fringe(points, phi_s: float, fix_floor: float = 0.0) -> FringeFit:
    """Weighted fit of C(phi_AS) = A (1 + V cos(phi_S - phi_AS + phi0)) + B.

    ``points`` is a sequence of (phi_as_rad, counts, sigma). B is fixed
    (default 0, the raw-contrast convention; pass the measured accidental
    level to fit the background-subtracted visibility). The cosine model is
    linear in (A, A V cos phi0, A V sin phi0), so the fit is a weighted
    linear least-squares solve.
    """
    pts = [(float(p), float(c), float(s)) for p, c, s in points]
    if len(pts) < 4:
        raise FitRankError(f"need at least 4 phase points, got {len(pts)}")
    phases = np.array([p for p, _, _ in pts])
    span = phases.max() - phases.min()
    if span <= math.pi:
        raise FitRankError(
            f"phase coverage {span:.3f} rad must exceed pi for a stable fit"
        )
    y = np.array([c for _, c, _ in pts]) - fix_floor
    sig = np.array([s for _, _, s in pts])
    sig = np.where(sig > 0, sig, 1.0)
    delta = phi_s - phases
    design = np.column_stack([np.ones_like(delta), np.cos(delta), np.sin(delta)])
    w = 1.0 / sig
    dw = design * w[:, None]
    yw = y * w
    gram = dw.T @ dw
    if np.linalg.matrix_rank(gram) < 3:
        raise FitRankError("degenerate phase coverage: singular design matrix")
    coef = np.linalg.solve(gram, dw.T @ yw)
    cov = np.linalg.inv(gram)
    a0, p, q = coef
    if a0 <= 0:
        raise FitRankError("non-positive fitted offset; cannot define visibility")
    amp = math.hypot(p, q)
    vis = amp / a0
    phi0 = math.atan2(-q, p)
    # delta-method gradients
    if amp > 0:
        grad_v = np.array([-amp / a0**2, p / (amp * a0), q / (amp * a0)])
        grad_phi = np.array([0.0, q / amp**2, -p / amp**2])
    else:
        grad_v = np.array([0.0, 1.0 / a0, 1.0 / a0])
        grad_phi = np.array([0.0, 0.0, 0.0])
    var_v = float(grad_v @ cov @ grad_v)
    var_phi = float(grad_phi @ cov @ grad_phi)
    model = design @ coef
    resid = y - model
    dof = max(len(pts) - 3, 1)
    chi2_dof = float(np.sum((resid / sig) ** 2) / dof)
    return FringeFit(
        visibility=vis,
        visibility_sigma=math.sqrt(max(var_v, 0.0)),
        phase_offset_rad=phi0,
        phase_offset_sigma=math.sqrt(max(var_phi, 0.0)),
        amplitude=a0,
        floor=fix_floor,
        residuals=resid,
        chi2_dof=chi2_dof,
    )


def compute_E(alpha: float, beta: float, counts) -> EValue:
    """Correlation coefficient from the four phase-pair coincidence counts.

    ``counts`` = (C(a,b), C(a+pi,b+pi), C(a,b+pi), C(a+pi,b)), all at the
    same exposure. Sigma is first-order Poisson propagation through the
    normalized difference.
    """
    c1, c2, c3, c4 = (float(c) for c in counts)
    total = c1 + c2 + c3 + c4
    if total <= 0:
        raise UndefinedStatisticError("all four coincidence counts are zero")
    e = (c1 + c2 - c3 - c4) / total
    var = ((c1 + c2) * (1.0 - e) ** 2 + (c3 + c4) * (1.0 + e) ** 2) / total**2
    return EValue(alpha_rad=alpha, beta_rad=beta, e=e, sigma=math.sqrt(var))


def compute_S(e_values) -> ChshResult:
    """CHSH S = E(a,b) + E(a',b) + E(a,b') - E(a',b') with propagated sigma."""
    if len(e_values) != 4:
        raise ValueError("compute_S needs exactly four E values")
    return ChshResult.from_e_values(list(e_values))


# -- CHSH setting sets --------------------------------------------------------

@dataclass
class ChshSettings:
    """The 16 phase settings of a CHSH run and their tag streams.

    ``streams`` maps (phi_s_deg, phi_as_deg) to a TagStream (or PairSums).
    """

    alpha_deg: float
    alpha_p_deg: float
    beta_deg: float
    beta_p_deg: float
    streams: dict
    n_unconditional: int = 10

    def setting_pairs(self):
        out = []
        for a in (self.alpha_deg, self.alpha_p_deg):
            for b in (self.beta_deg, self.beta_p_deg):
                out.append((a, b))
        return out

    def e_group(self, a, b):
        return [
            (a % 360, b % 360),
            ((a + 180) % 360, (b + 180) % 360),
            (a % 360, (b + 180) % 360),
            ((a + 180) % 360, b % 360),
        ]

    def cached_sums(self):
        out = {}
        for key, stream in self.streams.items():
            out[key] = (stream if isinstance(stream, PairSums)
                        else pair_sums(stream, self.n_unconditional))
        return ChshSettings(
            self.alpha_deg, self.alpha_p_deg, self.beta_deg, self.beta_p_deg,
            out, self.n_unconditional,
        )


def chsh_from_settings(settings: ChshSettings, center_ns: float,
                       width_ns: float) -> ChshResult:
    """Assemble the four E values and S from the 16-setting streams."""
    e_values = []
    for a, b in settings.setting_pairs():
        counts = []
        for key in settings.e_group(a, b):
            c, _ = count_in_window(
                settings.streams[key], settings.n_unconditional, center_ns,
                width_ns,
            )
            counts.append(c)
        e_values.append(
            compute_E(math.radians(a), math.radians(b), counts)
        )
    return compute_S(e_values)


def scan_window(settings: ChshSettings, bin_size_ns: float, centers_ns,
                ) -> ScanResult:
    """S as a function of the coincidence window position."""
    settings = settings.cached_sums()
    pts = []
    for c in centers_ns:
        try:
            r = chsh_from_settings(settings, c, bin_size_ns)
            pts.append(ScanPoint(x=float(c), s=r.s, sigma=r.sigma_s,
                                 significance=r.significance))
        except UndefinedStatisticError:
            pts.append(ScanPoint(x=float(c), s=float("nan"), sigma=float("nan"),
                                 significance=float("nan"), defined=False))
    return ScanResult(variable="window_center_ns", points=pts)


def scan_binsize(settings: ChshSettings, center_ns: float, sizes_ns) -> ScanResult:
    """S as a function of the coincidence window width at fixed center."""
    settings = settings.cached_sums()
    pts = []
    for w in sizes_ns:
        try:
            r = chsh_from_settings(settings, center_ns, w)
            pts.append(ScanPoint(x=float(w), s=r.s, sigma=r.sigma_s,
                                 significance=r.significance))
        except UndefinedStatisticError:
            pts.append(ScanPoint(x=float(w), s=float("nan"), sigma=float("nan"),
                                 significance=float("nan"), defined=False))
    return ScanResult(variable="bin_size_ns", points=pts)


def scan_g2_vs_width(stream: TagStream, n_unconditional: int, widths_ns,
                     center_ns: float, duration_s: float | None = None):
    """g2, coincidence rate and accidental rate vs coincidence window width.

    Rates are per hour of wall-clock-equivalent experiment time when
    ``duration_s`` is given, else per 10^6 conditional trials.
    """
    ps = pair_sums(stream, n_unconditional)
    k = max(n_unconditional, 1)
    if duration_s and duration_s > 0:
        scale = 3600.0 / duration_s
        rate_unit = "per_hour"
    else:
        n = max(ps.n_conditional_estimate, 1)
        scale = 1e6 / n
        rate_unit = "per_1e6_trials"
    rows = []
    for w in widths_ns:
        c, raw = count_in_window(ps, n_unconditional, center_ns, w)
        acc = raw / k
        if raw > 0 and c > 0:
            g2 = c / acc
            sigma = g2 * math.sqrt(1.0 / c + 1.0 / raw)
        else:
            g2, sigma = float("nan"), float("nan")
        rows.append(
            {
                "width_ns": float(w),
                "g2": g2,
                "sigma": sigma,
                "coincidences": c,
                "accidentals": acc,
                "coincidence_rate": c * scale,
                "accidental_rate": acc * scale,
                "rate_unit": rate_unit,
            }
        )
    return rows


def shuffle_antistokes(stream: TagStream, n_unconditional: int,
                       seed: int = 0) -> TagStream:
    """Reassign anti-Stokes tags uniformly across all read-fired trials.

    Null-model tool: detaches every anti-Stokes tag from its trial (both the
    timing correlation and the heralding rate enhancement) while keeping the
    arrival-time marginal, so the g2 of the shuffled stream is 1 up to
    statistics.
    """
    rng = np.random.default_rng(seed)
    tags = stream.tags.copy()
    period = n_unconditional + 1
    s_mask = tags["channel"] == CHANNEL_STOKES
    trigger_ids = np.unique(
        tags["trial_id"][s_mask & (tags["kind"] == KIND_CONDITIONAL)]
    )
    if len(trigger_ids) == 0:
        return TagStream(config_hash=stream.config_hash, tags=tags).sort()
    # read-fired slots: each trigger plus its unconditional partners
    slots = (trigger_ids[:, None]
             + np.arange(period, dtype=np.uint64)[None, :]).ravel()
    kinds = np.tile(
        np.array([KIND_CONDITIONAL] + [KIND_UNCONDITIONAL] * n_unconditional,
                 dtype=np.uint8),
        len(trigger_ids),
    )
    as_mask = tags["channel"] == CHANNEL_ANTISTOKES
    pick = rng.integers(0, len(slots), int(as_mask.sum()))
    tags["trial_id"][as_mask] = slots[pick]
    tags["kind"][as_mask] = kinds[pick]
    return TagStream(config_hash=stream.config_hash, tags=tags).sort()
