import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dlczsim.analysis import (
    ChshSettings,
    build_histogram,
    chsh_from_settings,
    compute_E,
    compute_S,
    count_in_window,
    fit_fringe,
    g2_estimate,
    pair_sums,
    scan_binsize,
    scan_g2_vs_width,
    scan_window,
    shuffle_antistokes,
)
from dlczsim.config import replace
from dlczsim.errors import (
    FitRankError,
    StreamOrderError,
    UndefinedStatisticError,
)
from dlczsim.mc import run_experiment
from dlczsim.results import CoincidenceHistogram, EValue
from dlczsim.tags import TagStream, empty_tags

HASH = bytes(32)


def _stream(rows):
    tags = empty_tags(len(rows))
    for i, r in enumerate(rows):
        tags[i] = r
    return TagStream(config_hash=HASH, tags=tags).sort()


def _hist(counts, acc, k=1):
    return CoincidenceHistogram(
        bin_size_ns=600, axis_origin_ns=-300,
        counts=np.asarray(counts, float),
        accidental_counts=np.asarray(acc, float),
        n_conditional_trials=1000, n_unconditional_trials=1000 * k,
        k_unconditional_per_trigger=k,
    )


class TestBuildHistogram:
    def test_single_pair_lands_in_nine_us_bin(self):
        s = _stream([(0, 0, 0, 2000), (0, 0, 1, 7000)])
        h = build_histogram(s, 600, n_unconditional=10)
        assert h.counts.sum() == 1
        assert h.bin_centers_ns()[np.argmax(h.counts)] == 9000.0

    def test_counts_equal_all_pairings(self):
        # trial 0: 2 Stokes x 3 anti-Stokes = 6 pairs; trial 11: 1 x 1
        rows = [(0, 0, 0, 1000), (0, 0, 0, 2000)]
        rows += [(0, 0, 1, 5000), (0, 0, 1, 6000), (0, 0, 1, 7000)]
        rows += [(11, 0, 0, 1500), (11, 0, 1, 7500)]
        h = build_histogram(_stream(rows), 600, n_unconditional=10)
        assert h.counts.sum() == 7

    def test_accidental_pairs_trigger_with_following_unconditionals(self):
        # conditional trigger at stream id 0 with one Stokes tag; two of the
        # following unconditional trials carry anti-Stokes tags
        rows = [(0, 0, 0, 2000)]
        rows += [(1, 1, 1, 7000), (4, 1, 1, 7300)]
        h = build_histogram(_stream(rows), 600, n_unconditional=10)
        assert h.counts.sum() == 0
        assert h.accidental_counts.sum() == pytest.approx(2 / 10)
        raw_bin = h.accidental_counts[h.bin_index(9000)] * 10
        assert raw_bin == 1.0  # 2000+7000 lands at 9 us

    def test_unordered_stream_rejected(self):
        tags = empty_tags(2)
        tags[0] = (5, 0, 0, 100)
        tags[1] = (1, 0, 0, 100)
        with pytest.raises(StreamOrderError):
            build_histogram(TagStream(config_hash=HASH, tags=tags), 600, 10)

    def test_three_peak_positions_from_mc(self, ana_cfg):
        stream, _ = run_experiment(replace(ana_cfg, rng_seed=5), 1_500_000)
        h = build_histogram(stream, 600, ana_cfg.n_unconditional)
        centers = h.bin_centers_ns()
        for peak in (9000, 11000, 13000):
            region = np.abs(centers - peak) <= 900
            local = centers[region][np.argmax(h.counts[region])]
            assert abs(local - peak) <= 600


class TestG2Estimate:
    def test_ratio_and_sigma(self):
        counts = np.zeros(31)
        acc = np.full(31, 10.0)
        counts[15] = 173.0
        est = g2_estimate(_hist(counts, acc, k=1), peak_bin=15)
        assert est.value == pytest.approx(17.3)
        assert est.sigma == pytest.approx(17.3 * math.sqrt(1 / 173 + 1 / 10))

    def test_uncorrelated_is_one(self):
        counts = np.full(31, 40.0)
        est = g2_estimate(_hist(counts, counts, k=1), peak_bin=4)
        assert est.value == 1.0

    def test_zero_accidentals_rejected(self):
        counts = np.ones(31)
        with pytest.raises(UndefinedStatisticError, match="wider bin"):
            g2_estimate(_hist(counts, np.zeros(31)), peak_bin=3)

    def test_small_count_flag_and_interval(self):
        counts = np.zeros(31)
        counts[15] = 5.0
        acc = np.full(31, 0.4)
        est = g2_estimate(_hist(counts, acc, k=10), peak_bin=15)
        assert est.small_count
        lo, hi = est.interval
        assert lo < est.value < hi

    def test_peak_search_window(self):
        counts = np.zeros(31)
        counts[15] = 50.0
        counts[25] = 80.0  # outside the declared search window
        acc = np.full(31, 5.0)
        est = g2_estimate(_hist(counts, acc), search_center_ns=9000,
                          search_halfwidth_ns=1500)
        assert est.peak_bin == 15

    def test_shuffled_stream_is_uncorrelated(self, paper_cfg):
        stream, _ = run_experiment(paper_cfg, 2_000_000)
        shuffled = shuffle_antistokes(stream, paper_cfg.n_unconditional,
                                      seed=1)
        h = build_histogram(shuffled, 600, paper_cfg.n_unconditional)
        est = g2_estimate(h, search_center_ns=9000)
        assert abs(est.value - 1.0) <= 3.0 * est.sigma


class TestFitFringe:
    @staticmethod
    def _cosine_points(v, phi_s=0.0, phi0=0.0, amp=100.0, n=8, noise_rng=None):
        pts = []
        for k in range(n):
            pa = 2 * math.pi * k / n
            c = amp * (1 + v * math.cos(phi_s - pa + phi0))
            if noise_rng is not None:
                c = noise_rng.poisson(max(c, 0))
            pts.append((pa, c, math.sqrt(max(c, 1.0))))
        return pts

    def test_exact_cosine_recovers_unit_visibility(self):
        fit = fit_fringe(self._cosine_points(1.0), phi_s=0.0)
        assert fit.visibility == pytest.approx(1.0, abs=1e-12)
        assert fit.phase_offset_rad == pytest.approx(0.0, abs=1e-9)
        assert fit.chi2_dof == pytest.approx(0.0, abs=1e-18)

    def test_flat_points_give_zero_visibility(self):
        pts = [(2 * math.pi * k / 8, 50.0, 7.0) for k in range(8)]
        fit = fit_fringe(pts, phi_s=0.0)
        assert fit.visibility == pytest.approx(0.0, abs=1e-12)

    def test_too_few_points(self):
        with pytest.raises(FitRankError):
            fit_fringe(self._cosine_points(0.8)[:3], phi_s=0.0)

    def test_degenerate_span(self):
        pts = [(0.1 * k, 50.0, 7.0) for k in range(6)]
        with pytest.raises(FitRankError):
            fit_fringe(pts, phi_s=0.0)

    @pytest.mark.parametrize("v", [0.4, 0.7, 0.95])
    @pytest.mark.parametrize("amp", [50.0, 500.0])
    def test_recovery_within_two_sigma(self, v, amp):
        rng = np.random.default_rng(int(v * 100) + int(amp))
        phi0 = 0.35
        fit = fit_fringe(
            self._cosine_points(v, phi0=phi0, amp=amp, n=12, noise_rng=rng),
            phi_s=0.0,
        )
        assert abs(fit.visibility - v) <= 2.5 * fit.visibility_sigma
        assert abs(fit.phase_offset_rad - phi0) <= 2.5 * fit.phase_offset_sigma

    def test_fixed_floor_subtracts(self):
        pts = [(p, c + 20.0, s) for p, c, s in self._cosine_points(0.8)]
        raw = fit_fringe(pts, phi_s=0.0)
        corrected = fit_fringe(pts, phi_s=0.0, fix_floor=20.0)
        assert corrected.visibility == pytest.approx(0.8, abs=1e-9)
        assert raw.visibility < corrected.visibility


class TestComputeE:
    def test_perfect_correlation(self):
        ev = compute_E(0.0, 0.0, (100, 100, 0, 0))
        assert ev.e == 1.0
        assert ev.sigma == 0.0

    def test_equal_counts_no_correlation(self):
        ev = compute_E(0.0, 0.0, (50, 50, 50, 50))
        assert ev.e == 0.0
        assert ev.sigma == pytest.approx(1 / math.sqrt(200))

    def test_all_zero_rejected(self):
        with pytest.raises(UndefinedStatisticError):
            compute_E(0.0, 0.0, (0, 0, 0, 0))


class TestComputeS:
    def test_appendix_values_reproduce_s(self):
        # E(0,45)=0.50+-0.03, E(90,45)=0.56+-0.03, E(0,135)=-0.59+-0.03,
        # E(90,135)=0.50+-0.04; with alpha=90deg, alpha'=0, beta=45,
        # beta'=135 the published combination gives S = 2.15
        a, ap, b, bp = (math.radians(x) for x in (90, 0, 45, 135))
        evs = [
            EValue(a, b, 0.56, 0.03),
            EValue(ap, b, 0.50, 0.03),
            EValue(a, bp, 0.50, 0.04),
            EValue(ap, bp, -0.59, 0.03),
        ]
        r = compute_S(evs)
        assert r.s == pytest.approx(2.15, abs=1e-12)
        assert r.sigma_s == pytest.approx(
            math.sqrt(0.03**2 + 0.03**2 + 0.04**2 + 0.03**2)
        )
        assert r.sigma_s == pytest.approx(0.066, abs=2e-3)
        assert r.significance > 2.0
        assert not r.unphysical

    def test_unphysical_flagged(self):
        evs = [EValue(0, 0, 1.0, 0.01), EValue(0, 0, 1.0, 0.01),
               EValue(0, 0, 1.0, 0.01), EValue(0, 0, -1.0, 0.01)]
        r = compute_S(evs)
        assert r.s == 4.0
        assert r.unphysical

    def test_zero_correlations(self):
        evs = [EValue(0, 0, 0.0, 0.1)] * 4
        r = compute_S(evs)
        assert r.s == 0.0
        assert r.significance < 0

    @given(st.lists(st.floats(-1, 1), min_size=4, max_size=4),
           st.floats(0.001, 0.2))
    @settings(max_examples=100)
    def test_combination_algebra(self, es, sig):
        evs = [EValue(0, 0, e, sig) for e in es]
        r = compute_S(evs)
        assert r.s == pytest.approx(es[0] + es[1] + es[2] - es[3])
        # relabeling beta <-> beta' permutes the inputs to (3,4,1,2)
        swapped = [evs[2], evs[3], evs[0], evs[1]]
        assert compute_S(swapped).s == pytest.approx(
            es[2] + es[3] + es[0] - es[1]
        )
        # shifting both analyzer-B phases by pi flips every E: S -> -S
        flipped = [EValue(0, 0, -e, sig) for e in es]
        assert compute_S(flipped).s == pytest.approx(-r.s)
        assert compute_S(evs).sigma_s == pytest.approx(2 * sig)

    def test_wrong_arity(self):
        with pytest.raises(ValueError):
            compute_S([EValue(0, 0, 0.5, 0.1)] * 3)


def _synthetic_chsh(v, n0=400):
    """Hand-built 16-setting streams with exact cosine coincidence counts."""
    streams = {}
    for s_deg in (90, 270, 0, 180):
        for a_deg in (45, 225, 135, 315):
            theta = math.radians(s_deg - a_deg)
            n = int(round(n0 * (1 + v * math.cos(theta))))
            rows = []
            for i in range(n):
                rows.append((i * 11, 0, 0, 4000))
                rows.append((i * 11, 0, 1, 7000))
            streams[(s_deg, a_deg)] = _stream(rows)
    return ChshSettings(90, 0, 45, 135, streams, n_unconditional=10)


class TestChshPipeline:
    def test_synthetic_cosine_counts(self):
        v = 0.8
        settings_set = _synthetic_chsh(v)
        r = chsh_from_settings(settings_set, 11000, 600)
        assert r.s == pytest.approx(2 * math.sqrt(2) * v, abs=0.01)

    def test_scan_window_marks_empty_windows_undefined(self):
        settings_set = _synthetic_chsh(0.8)
        res = scan_window(settings_set, 600, [9000.0, 11000.0])
        assert not res.points[0].defined  # no counts at the 9 us window
        assert res.points[1].defined
        assert res.best().x == 11000.0

    def test_scan_binsize_points(self):
        settings_set = _synthetic_chsh(0.8)
        res = scan_binsize(settings_set, 11000.0, [600, 1200])
        assert all(p.defined for p in res.points)
        assert res.points[0].s == pytest.approx(res.points[1].s)


def test_leakage_bumps_appear_in_both_curves_and_wash_out(paper_cfg):
    # the write-echo leakage enters the end of the anti-Stokes gate, so pair
    # sums with it pile up beyond the 9 us peak; it must raise the
    # conditional and accidental histograms alike and cancel in their ratio
    boosted = replace(paper_cfg, rng_seed=31,
                      leakage_peaks=(replace(paper_cfg.leakage_peaks[0],
                                             rate=0.05),))
    quiet = replace(boosted, leakage_peaks=())
    h = build_histogram(run_experiment(boosted, 4_000_000)[0], 600,
                        paper_cfg.n_unconditional)
    h0 = build_histogram(run_experiment(quiet, 4_000_000)[0], 600,
                         paper_cfg.n_unconditional)
    centers = h.bin_centers_ns()
    region = (centers >= 11000) & (centers <= 15000)
    n = min(len(h.counts), len(h0.counts))
    region = region[:n]
    raw = h.accidental_counts[:n][region].sum() * 10
    raw0 = h0.accidental_counts[:n][region].sum() * 10
    assert raw > raw0 + 4.0 * math.sqrt(raw0 + 1)  # bump in the accidentals
    cond = h.counts[:n][region].sum()
    assert cond > h0.counts[:n][region].sum()  # and in the conditionals
    ratio = cond / (raw / 10)
    sigma = ratio * math.sqrt(1 / max(cond, 1) + 1 / max(raw, 1))
    assert abs(ratio - 1.0) <= 3.0 * sigma  # washed out in the ratio


def test_scan_g2_vs_width_uncorrelated_stream_flat_at_one(paper_cfg):
    stream, _ = run_experiment(replace(paper_cfg, rng_seed=13), 4_000_000)
    null = shuffle_antistokes(stream, paper_cfg.n_unconditional, seed=2)
    rows = scan_g2_vs_width(null, paper_cfg.n_unconditional,
                            [600, 2000, 6000], 9000)
    for r in rows:
        assert abs(r["g2"] - 1.0) <= 3.0 * r["sigma"], r


def test_scan_g2_vs_width_trends(paper_cfg):
    stream, report = run_experiment(replace(paper_cfg, rng_seed=9), 3_000_000)
    widths = [200, 600, 2000, 6000]
    rows = scan_g2_vs_width(stream, paper_cfg.n_unconditional, widths, 9000,
                            duration_s=report.wall_clock_equivalent_s)
    g2s = [r["g2"] for r in rows]
    rates = [r["coincidence_rate"] for r in rows]
    assert g2s[0] > g2s[-1]
    assert all(a < b for a, b in zip(rates, rates[1:]))
    assert rows[0]["rate_unit"] == "per_hour"


def test_count_in_window_matches_histogram(paper_cfg):
    stream, _ = run_experiment(paper_cfg, 500_000)
    h = build_histogram(stream, 600, paper_cfg.n_unconditional)
    c, raw = count_in_window(stream, paper_cfg.n_unconditional, 9000, 600)
    assert c == h.counts[h.bin_index(9000)]
    assert raw == pytest.approx(
        h.accidental_counts[h.bin_index(9000)] * 10
    )
