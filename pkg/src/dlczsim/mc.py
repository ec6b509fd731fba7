"""Trial-by-trial stochastic engine emitting raw time-tag streams.

Randomness is counter based: every trial owns an independent substream of
64-bit words derived from (master seed, stream id) with the splitmix64
finalizer, and each random quantity reads a fixed word slot, so trials can
be simulated in any order, in any batch split, on any number of workers,
with bit-identical output. Stream ids encode the interleaving: conditional
trial ``ci`` has id ``ci*(K+1)``, and the ``k``-th unconditional accidental
trial following it (emitted only when the conditional trial records a
Stokes detection) has id ``ci*(K+1)+k``, K = n_unconditional.

Word layout per trial (quantum model): slots 0..M-1 per-mode pair numbers,
slot M the Stokes background count, slot M+1 the anti-Stokes noise count;
detail slots start at ``detail_base``: four per pair (birth time, Stokes
path, anti-Stokes fate, echo jitter), then two per background tag, then
three per noise tag. The classical baseline uses three slots per mode
(intensity, Stokes count, anti-Stokes count), two detail slots per Stokes
tag and three per anti-Stokes tag.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .config import (
    CHANNEL_ANTISTOKES,
    CHANNEL_STOKES,
    KIND_CONDITIONAL,
    KIND_UNCONDITIONAL,
    ExperimentConfig,
    config_hash,
    require_valid,
)
from .analytic import TrialModel
from .tags import TAG_DTYPE, TagStream, TimeTag, empty_tags

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_GOLDEN2 = np.uint64(0xD1B54A32D192ED03)
_BLOCK = 65536


def _mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _stream_base(master_seed, stream_ids):
    sid = np.asarray(stream_ids, dtype=np.uint64)
    return _mix64(np.uint64(master_seed) + _mix64(sid * _GOLDEN + _GOLDEN2))


def _words(base, slots):
    return _mix64(base + np.asarray(slots, dtype=np.uint64) * _GOLDEN)


def _uniform(base, slots):
    """Uniforms in the open interval (0, 1)."""
    w = _words(base, slots)
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class RngStreamSpec:
    """Counter-based substream derivation: (master seed, stream id, slot).

    Substreams for distinct stream ids are statistically independent and
    reproducible regardless of evaluation order or batching; every random
    quantity in a trial reads a fixed slot of its stream.
    """

    master_seed: int

    def words(self, stream_ids, slots):
        return _words(_stream_base(self.master_seed, stream_ids), slots)

    def uniforms(self, stream_ids, slots):
        return _uniform(_stream_base(self.master_seed, stream_ids), slots)


def _geometric_inv(u, q):
    """Thermal (geometric on n >= 0) inverse CDF; q = mean/(1+mean)."""
    if q <= 0.0:
        return np.zeros(len(u), dtype=np.int64)
    return np.floor(np.log1p(-u) / math.log(q)).astype(np.int64)


def _poisson_inv(u, lam):
    """Poisson inverse CDF for scalar or per-element means."""
    lam = np.broadcast_to(np.asarray(lam, dtype=float), u.shape).copy()
    out = np.zeros(u.shape, dtype=np.int64)
    pk = np.exp(-lam)
    cdf = pk.copy()
    active = u >= cdf
    k = 0
    while active.any():
        k += 1
        if k > 200:
            break
        pk = pk * lam / k
        cdf = cdf + pk
        out[active] += 1
        active = u >= cdf
    return out


@dataclass
class TrialOutcome:
    """Full trace of one simulated trial."""

    trial_id: int
    trial_kind: int
    pair_emissions: list
    spin_waves_stored: int
    read_fired: bool
    tags: list


@dataclass
class ExperimentReport:
    """Bookkeeping for one run_experiment call."""

    n_conditional: int
    n_triggers: int
    n_unconditional: int
    total_trials: int
    wall_clock_equivalent_s: float


class _Tables:
    """Values precomputed from the config for the sampling hot path."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        model = TrialModel(cfg)
        self.model = model
        m = cfg.n_temporal_modes
        self.n_modes = m
        self.means = np.array([p.mean_pairs for p in model.modes])
        self.qs = self.means / (1.0 + self.means)
        self.centers = np.array([p.mode_time_ns for p in model.modes])
        self.half_slot = model.half_slot
        self.sigma_j = model.sigma_j
        self.gate = model.gate
        self.tau_s = model.tau_s
        self.tau_as = model.tau_as
        self.tau_mc = cfg.tau_mc_ns
        self.s_t, self.s_e = model.s_t, model.s_e
        self.eta_ts, self.eta_es = model.eta_ts, model.eta_es
        self.eta_ta, self.eta_ea = model.eta_ta, model.eta_ea
        self.bg_mean = cfg.p_s_background
        self.w0 = cfg.stokes_window_start_ns
        self.wlen = cfg.stokes_window_length_ns
        self.classical = cfg.classical_baseline

        # anti-Stokes noise components: [uniform read noise, leakage peaks...]
        comp_rates = [cfg.antistokes_noise_per_us * 1e-3 * self.gate]
        self.leak_centers = [0.0]
        self.leak_widths = [0.0]
        for pk in cfg.leakage_peaks:
            comp_rates.append(pk.rate)
            self.leak_centers.append(float(pk.center_ns))
            self.leak_widths.append(float(pk.width_ns))
        self.noise_total = float(sum(comp_rates))
        self.noise_cum = (
            np.cumsum(comp_rates) / self.noise_total
            if self.noise_total > 0
            else np.array([1.0])
        )
        self.leak_centers = np.array(self.leak_centers)
        self.leak_widths = np.array(self.leak_widths)

        if self.classical:
            self.stage1_slots = 3 * m + 2
            self.s_marg = self.s_t + self.s_e
            self.a_marg = model.a_t + model.a_e
        else:
            self.stage1_slots = m + 2
            # conditional AS fate given S row: cumulative thresholds
            marg = np.array([self.s_t, self.s_e, 1.0 - self.s_t - self.s_e])
            self.cond_t = np.zeros((m, 3))
            self.cond_te = np.zeros((m, 3))
            for mm in range(m):
                cells = model.cells[mm]
                for r in range(3):
                    if marg[r] > 0:
                        self.cond_t[mm, r] = cells[r, 0] / marg[r]
                        self.cond_te[mm, r] = (cells[r, 0] + cells[r, 1]) / marg[r]
        self.a_t = model.a_t
        self.a_e = model.a_e
        self.detail_base = max(16, self.stage1_slots + 2)


def _rank_within(groups_counts):
    """Index of each expanded element within its group."""
    total = int(groups_counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    starts = np.concatenate(([0], np.cumsum(groups_counts)[:-1]))
    return np.arange(total, dtype=np.int64) - np.repeat(starts, groups_counts)


def _simulate_streams(tables: _Tables, master_seed, stream_ids, kinds):
    """Simulate a batch of trials; returns (tags, stokes_detected flags).

    ``stream_ids`` and ``kinds`` are parallel arrays; output tags carry the
    stream id as trial id.
    """
    if tables.classical:
        return _simulate_classical(tables, master_seed, stream_ids, kinds)
    t = tables
    sids = np.asarray(stream_ids, dtype=np.uint64)
    kinds = np.asarray(kinds, dtype=np.uint8)
    n = len(sids)
    base = _stream_base(master_seed, sids)
    m = t.n_modes

    n_pairs = np.zeros((n, m), dtype=np.int64)
    for mm in range(m):
        n_pairs[:, mm] = _geometric_inv(_uniform(base, np.full(n, mm)), t.qs[mm])
    k_bg = _poisson_inv(_uniform(base, np.full(n, m)), t.bg_mean)
    k_noise = _poisson_inv(_uniform(base, np.full(n, m + 1)), t.noise_total)

    pairs_per_trial = n_pairs.sum(axis=1)
    interesting = (pairs_per_trial > 0) | (k_bg > 0) | (
        (kinds == KIND_UNCONDITIONAL) & (k_noise > 0)
    )
    idx = np.nonzero(interesting)[0]
    stokes_detected = np.zeros(n, dtype=bool)
    if len(idx) == 0:
        return empty_tags(), stokes_detected

    sids_i = sids[idx]
    base_i = base[idx]
    kinds_i = kinds[idx]
    np_i = n_pairs[idx]
    kbg_i = k_bg[idx]
    knoise_i = k_noise[idx]
    ppt_i = np_i.sum(axis=1)
    ni = len(idx)

    # -- per-pair expansion
    flat = np_i.ravel()
    pair_mode = np.repeat(np.tile(np.arange(m), ni), flat)
    pair_trial = np.repeat(np.repeat(np.arange(ni), m), flat)
    pair_rank = _rank_within(ppt_i)
    pair_base = base_i[pair_trial]
    j0 = t.detail_base + 4 * pair_rank

    u_birth = _uniform(pair_base, j0)
    u_spath = _uniform(pair_base, j0 + 1)
    u_asfate = _uniform(pair_base, j0 + 2)
    u_jit = _uniform(pair_base, j0 + 3)

    birth = t.centers[pair_mode] - t.half_slot + u_birth * (2.0 * t.half_slot)
    s_row = np.where(u_spath < t.s_t, 0, np.where(u_spath < t.s_t + t.s_e, 1, 2))

    # -- background Stokes tags
    bg_trial = np.repeat(np.arange(ni), kbg_i)
    bg_rank = _rank_within(kbg_i)
    bg_base = base_i[bg_trial]
    bg_j0 = t.detail_base + 4 * ppt_i[bg_trial] + 2 * bg_rank
    u_bgt = _uniform(bg_base, bg_j0)
    u_bgp = _uniform(bg_base, bg_j0 + 1)
    bg_time = t.w0 + u_bgt * t.wlen
    bg_row = np.where(u_bgp < t.eta_ts, 0, np.where(u_bgp < t.eta_ts + t.eta_es, 1, 2))

    # -- read decision: any detected Stokes tag
    det_pair = s_row < 2
    det_bg = bg_row < 2
    np.logical_or.at(stokes_detected, idx[pair_trial[det_pair]], True)
    np.logical_or.at(stokes_detected, idx[bg_trial[det_bg]], True)
    read_fired = stokes_detected[idx] | (kinds_i == KIND_UNCONDITIONAL)

    # -- anti-Stokes fate of each pair, conditioned on its Stokes row
    can_convert = read_fired[pair_trial]
    ct = t.cond_t[pair_mode, s_row]
    cte = t.cond_te[pair_mode, s_row]
    as_row = np.where(u_asfate < ct, 0, np.where(u_asfate < cte, 1, 2))
    as_row = np.where(can_convert, as_row, 2)
    jitter = ndtri(u_jit) * t.sigma_j
    as_time = t.tau_mc - birth + jitter + np.where(as_row == 1, t.tau_as, 0.0)
    as_ok = (as_row < 2) & (as_time >= 0.0) & (as_time <= t.gate)

    # -- noise / leakage anti-Stokes tags (only when the read fires)
    noise_counts = np.where(read_fired, knoise_i, 0)
    nz_trial = np.repeat(np.arange(ni), noise_counts)
    nz_rank = _rank_within(noise_counts)
    nz_base = base_i[nz_trial]
    nz_j0 = t.detail_base + 4 * ppt_i[nz_trial] + 2 * kbg_i[nz_trial] + 3 * nz_rank
    u_comp = _uniform(nz_base, nz_j0)
    u_time = _uniform(nz_base, nz_j0 + 1)
    u_path = _uniform(nz_base, nz_j0 + 2)
    comp = np.searchsorted(t.noise_cum, u_comp, side="right")
    comp = np.clip(comp, 0, len(t.noise_cum) - 1)
    nz_time = np.where(
        comp == 0,
        u_time * t.gate,
        t.leak_centers[comp] + ndtri(u_time) * t.leak_widths[comp],
    )
    nz_row = np.where(u_path < t.eta_ta, 0,
                      np.where(u_path < t.eta_ta + t.eta_ea, 1, 2))
    nz_time = nz_time + np.where(nz_row == 1, t.tau_as, 0.0)
    nz_ok = (nz_row < 2) & (nz_time >= 0.0) & (nz_time <= t.gate)

    # -- assemble tag records
    s_time = birth + np.where(s_row == 1, t.tau_s, 0.0)
    recs = []
    recs.append(_records(sids_i[pair_trial[det_pair]], kinds_i[pair_trial[det_pair]],
                         CHANNEL_STOKES, s_time[det_pair]))
    recs.append(_records(sids_i[bg_trial[det_bg]], kinds_i[bg_trial[det_bg]],
                         CHANNEL_STOKES, bg_time[det_bg]))
    recs.append(_records(sids_i[pair_trial[as_ok]], kinds_i[pair_trial[as_ok]],
                         CHANNEL_ANTISTOKES, as_time[as_ok]))
    recs.append(_records(sids_i[nz_trial[nz_ok]], kinds_i[nz_trial[nz_ok]],
                         CHANNEL_ANTISTOKES, nz_time[nz_ok]))
    tags = np.concatenate(recs)
    order = np.lexsort((tags["time_ns"], tags["channel"], tags["trial_id"]))
    return tags[order], stokes_detected


def _simulate_classical(tables: _Tables, master_seed, stream_ids, kinds):
    """Classical baseline: common thermal intensity, independent channel counts."""
    t = tables
    sids = np.asarray(stream_ids, dtype=np.uint64)
    kinds = np.asarray(kinds, dtype=np.uint8)
    n = len(sids)
    base = _stream_base(master_seed, sids)
    m = t.n_modes

    n_s = np.zeros((n, m), dtype=np.int64)
    n_a = np.zeros((n, m), dtype=np.int64)
    for mm in range(m):
        u_i = _uniform(base, np.full(n, 3 * mm))
        intensity = -t.means[mm] * np.log1p(-u_i)
        n_s[:, mm] = _poisson_inv(_uniform(base, np.full(n, 3 * mm + 1)),
                                  intensity * t.s_marg)
        n_a[:, mm] = _poisson_inv(_uniform(base, np.full(n, 3 * mm + 2)),
                                  intensity * t.a_marg[mm])
    k_bg = _poisson_inv(_uniform(base, np.full(n, 3 * m)), t.bg_mean)
    k_noise = _poisson_inv(_uniform(base, np.full(n, 3 * m + 1)), t.noise_total)

    interesting = (n_s.sum(axis=1) > 0) | (n_a.sum(axis=1) > 0) | (k_bg > 0) | (
        (kinds == KIND_UNCONDITIONAL) & (k_noise > 0)
    )
    idx = np.nonzero(interesting)[0]
    stokes_detected = np.zeros(n, dtype=bool)
    if len(idx) == 0:
        return empty_tags(), stokes_detected

    sids_i, base_i, kinds_i = sids[idx], base[idx], kinds[idx]
    ns_i, na_i = n_s[idx], n_a[idx]
    kbg_i, knoise_i = k_bg[idx], k_noise[idx]
    ni = len(idx)
    spt = ns_i.sum(axis=1)
    apt = na_i.sum(axis=1)

    # Stokes tags: 2 slots each (time, path); already detected counts
    s_trial = np.repeat(np.repeat(np.arange(ni), m), ns_i.ravel())
    s_mode = np.repeat(np.tile(np.arange(m), ni), ns_i.ravel())
    s_rank = _rank_within(spt)
    s_j0 = t.detail_base + 2 * s_rank
    s_base = base_i[s_trial]
    u_st = _uniform(s_base, s_j0)
    u_sp = _uniform(s_base, s_j0 + 1)
    s_time = t.centers[s_mode] - t.half_slot + u_st * 2.0 * t.half_slot
    s_echo = u_sp >= (t.s_t / t.s_marg if t.s_marg > 0 else 2.0)
    s_time = s_time + np.where(s_echo, t.tau_s, 0.0)

    np.logical_or.at(stokes_detected, idx[s_trial], True)

    # background Stokes tags (thinned by analyzer)
    bg_trial = np.repeat(np.arange(ni), kbg_i)
    bg_rank = _rank_within(kbg_i)
    bg_base = base_i[bg_trial]
    bg_j0 = t.detail_base + 2 * spt[bg_trial] + 2 * bg_rank
    u_bgt = _uniform(bg_base, bg_j0)
    u_bgp = _uniform(bg_base, bg_j0 + 1)
    bg_time = t.w0 + u_bgt * t.wlen
    bg_row = np.where(u_bgp < t.eta_ts, 0, np.where(u_bgp < t.eta_ts + t.eta_es, 1, 2))
    det_bg = bg_row < 2
    np.logical_or.at(stokes_detected, idx[bg_trial[det_bg]], True)
    read_fired = stokes_detected[idx] | (kinds_i == KIND_UNCONDITIONAL)

    # anti-Stokes tags: 3 slots each (birth, jitter, path); detected counts
    a_counts = np.where(read_fired[:, None], na_i, 0)
    a_trial = np.repeat(np.repeat(np.arange(ni), m), a_counts.ravel())
    a_mode = np.repeat(np.tile(np.arange(m), ni), a_counts.ravel())
    a_rank = _rank_within(a_counts.sum(axis=1))
    a_base = base_i[a_trial]
    a_j0 = t.detail_base + 2 * spt[a_trial] + 2 * kbg_i[a_trial] + 3 * a_rank
    u_ab = _uniform(a_base, a_j0)
    u_aj = _uniform(a_base, a_j0 + 1)
    u_ap = _uniform(a_base, a_j0 + 2)
    a_birth = t.centers[a_mode] - t.half_slot + u_ab * 2.0 * t.half_slot
    a_time = t.tau_mc - a_birth + ndtri(u_aj) * t.sigma_j
    marg = t.a_marg[a_mode]
    a_echo = u_ap >= np.where(marg > 0, t.a_t[a_mode] / np.where(marg > 0, marg, 1.0),
                              2.0)
    a_time = a_time + np.where(a_echo, t.tau_as, 0.0)
    a_ok = (a_time >= 0.0) & (a_time <= t.gate)

    # noise tags
    noise_counts = np.where(read_fired, knoise_i, 0)
    nz_trial = np.repeat(np.arange(ni), noise_counts)
    nz_rank = _rank_within(noise_counts)
    nz_base = base_i[nz_trial]
    nz_j0 = (t.detail_base + 2 * spt[nz_trial] + 2 * kbg_i[nz_trial]
             + 3 * apt[nz_trial] + 3 * nz_rank)
    u_comp = _uniform(nz_base, nz_j0)
    u_time = _uniform(nz_base, nz_j0 + 1)
    u_path = _uniform(nz_base, nz_j0 + 2)
    comp = np.clip(np.searchsorted(t.noise_cum, u_comp, side="right"), 0,
                   len(t.noise_cum) - 1)
    nz_time = np.where(comp == 0, u_time * t.gate,
                       t.leak_centers[comp] + ndtri(u_time) * t.leak_widths[comp])
    nz_row = np.where(u_path < t.eta_ta, 0,
                      np.where(u_path < t.eta_ta + t.eta_ea, 1, 2))
    nz_time = nz_time + np.where(nz_row == 1, t.tau_as, 0.0)
    nz_ok = (nz_row < 2) & (nz_time >= 0.0) & (nz_time <= t.gate)

    recs = [
        _records(sids_i[s_trial], kinds_i[s_trial], CHANNEL_STOKES, s_time),
        _records(sids_i[bg_trial[det_bg]], kinds_i[bg_trial[det_bg]],
                 CHANNEL_STOKES, bg_time[det_bg]),
        _records(sids_i[a_trial[a_ok]], kinds_i[a_trial[a_ok]],
                 CHANNEL_ANTISTOKES, a_time[a_ok]),
        _records(sids_i[nz_trial[nz_ok]], kinds_i[nz_trial[nz_ok]],
                 CHANNEL_ANTISTOKES, nz_time[nz_ok]),
    ]
    tags = np.concatenate(recs)
    order = np.lexsort((tags["time_ns"], tags["channel"], tags["trial_id"]))
    return tags[order], stokes_detected


def _records(sids, kinds, channel, times):
    out = np.zeros(len(sids), dtype=TAG_DTYPE)
    out["trial_id"] = sids
    out["kind"] = kinds
    out["channel"] = channel
    out["time_ns"] = np.rint(times).astype(np.int64).astype(np.uint64)
    return out


# -- public API ---------------------------------------------------------------

def conditional_stream_id(ci: int, n_unconditional: int) -> int:
    return ci * (n_unconditional + 1)


def run_trial(cfg: ExperimentConfig, trial_id: int, kind: int,
              tables: _Tables | None = None) -> TrialOutcome:
    """Simulate one trial standalone; identical output to the batch engine."""
    require_valid(cfg)
    t = tables if tables is not None else _Tables(cfg)
    tags, detected = _simulate_streams(
        t, cfg.rng_seed, np.array([trial_id], dtype=np.uint64),
        np.array([kind], dtype=np.uint8),
    )
    pair_emissions, spin_waves = _trial_trace(t, cfg.rng_seed, trial_id)
    read = bool(detected[0]) or kind == KIND_UNCONDITIONAL
    return TrialOutcome(
        trial_id=trial_id,
        trial_kind=kind,
        pair_emissions=pair_emissions,
        spin_waves_stored=spin_waves,
        read_fired=read,
        tags=[
            TimeTag(int(r["trial_id"]), int(r["kind"]), int(r["channel"]),
                    int(r["time_ns"]))
            for r in tags
        ],
    )


def _trial_trace(t: _Tables, seed, trial_id):
    """Pair-level trace (births and Stokes survival) for one trial."""
    if t.classical:
        return [], 0
    base = _stream_base(seed, np.array([trial_id], dtype=np.uint64))
    n_pairs = [
        int(_geometric_inv(_uniform(base, np.array([mm])), t.qs[mm])[0])
        for mm in range(t.n_modes)
    ]
    emissions = []
    rank = 0
    for mm in range(t.n_modes):
        for _ in range(n_pairs[mm]):
            j0 = t.detail_base + 4 * rank
            u_birth = float(_uniform(base, np.array([j0]))[0])
            u_spath = float(_uniform(base, np.array([j0 + 1]))[0])
            birth = t.centers[mm] - t.half_slot + u_birth * 2.0 * t.half_slot
            emissions.append(
                {
                    "mode_index": mm,
                    "t_s_ns": int(round(birth)),
                    "survived_stokes": bool(u_spath < t.s_t + t.s_e),
                }
            )
            rank += 1
    return emissions, sum(n_pairs)


def _simulate_block(cfg, seed, ci_start, ci_stop):
    t = _Tables(cfg)
    k = cfg.n_unconditional
    ci = np.arange(ci_start, ci_stop, dtype=np.uint64)
    cond_sids = ci * np.uint64(k + 1)
    cond_tags, detected = _simulate_streams(
        t, seed, cond_sids, np.full(len(ci), KIND_CONDITIONAL, dtype=np.uint8)
    )
    triggers = cond_sids[detected]
    if k > 0 and len(triggers) > 0:
        unc_sids = (triggers[:, None] + np.arange(1, k + 1, dtype=np.uint64)).ravel()
        unc_tags, _ = _simulate_streams(
            t, seed, unc_sids,
            np.full(len(unc_sids), KIND_UNCONDITIONAL, dtype=np.uint8),
        )
        tags = np.concatenate([cond_tags, unc_tags])
        order = np.lexsort((tags["time_ns"], tags["channel"], tags["trial_id"]))
        tags = tags[order]
    else:
        tags = cond_tags
    return tags, int(detected.sum())


def run_experiment(cfg: ExperimentConfig, n_conditional: int, workers: int = 1):
    """Simulate the full interleaved sequence; returns (TagStream, report).

    The stream is a pure function of (cfg, n_conditional) including the
    master seed, independent of ``workers``.
    """
    require_valid(cfg)
    if n_conditional < 1:
        raise ValueError("n_conditional must be >= 1")
    seed = cfg.rng_seed
    blocks = [
        (b, min(b + _BLOCK, n_conditional)) for b in range(0, n_conditional, _BLOCK)
    ]
    results = []
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_simulate_block, cfg, seed, b0, b1)
                    for b0, b1 in blocks]
            results = [f.result() for f in futs]
    else:
        results = [_simulate_block(cfg, seed, b0, b1) for b0, b1 in blocks]

    tags = np.concatenate([r[0] for r in results]) if results else empty_tags()
    n_triggers = sum(r[1] for r in results)
    n_unc = n_triggers * cfg.n_unconditional
    total = n_conditional + n_unc
    preps = math.ceil(total / cfg.trials_per_prep)
    report = ExperimentReport(
        n_conditional=n_conditional,
        n_triggers=n_triggers,
        n_unconditional=n_unc,
        total_trials=total,
        wall_clock_equivalent_s=float(preps),
    )
    return TagStream(config_hash=config_hash(cfg), tags=tags), report
