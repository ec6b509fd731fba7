"""Command-line front end: predict, simulate, analyze, calibrate, report.

Every run writes its outputs plus a ``manifest.json`` (config hash, seed,
command line, output list) into ``--out`` so results can be replayed
exactly. Exit codes: 0 success, 2 validation error, 3 infeasible
calibration, 4 I/O or parse error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    ChshSettings,
    build_histogram,
    chsh_from_settings,
    count_in_window,
    fit_fringe,
    g2_estimate,
    scan_binsize,
    scan_g2_vs_width,
    scan_window,
)
from .analytic import (
    predict_chsh,
    predict_fringe,
    predict_g2,
    predict_histogram,
    predict_visibility,
)
from .calibrate import calibrate
from .config import (
    config_hash,
    config_to_mapping,
    detuning_for_phase,
    load_config,
    replace,
    save_config,
    validate_config,
)
from .errors import (
    CalibrationInfeasibleError,
    ConfigError,
    TagFormatError,
    UndefinedStatisticError,
    ValidationError,
)
from .mc import run_experiment
from .results import ChshResult, EValue
from .tags import TagStream, empty_tags, read_tags, write_tags

# CHSH phase assignment reproducing the published E-value signs with
# E(a, b) = V cos(a - b) and the minus sign on the (alpha', beta') term
CHSH_ALPHA_DEG = 90.0
CHSH_ALPHA_P_DEG = 0.0
CHSH_BETA_DEG = 45.0
CHSH_BETA_P_DEG = 135.0


def _utc_now():
    return datetime.now(timezone.utc).isoformat()


class _Run:
    """Collects outputs and writes the manifest at the end of a command."""

    def __init__(self, args, cfg=None, cfg_path=None):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = args.command
        self.argv = sys.argv[1:]
        self.cfg = cfg
        self.cfg_path = str(cfg_path) if cfg_path else None
        self.outputs = []
        self.extra = {}
        self.started = _utc_now()

    def path(self, name):
        p = self.out / name
        self.outputs.append(name)
        return p

    def finish(self):
        manifest = {
            "tool": "dlczsim",
            "version": __version__,
            "command": self.command,
            "argv": self.argv,
            "config_path": self.cfg_path,
            "config_sha256": config_hash(self.cfg).hex() if self.cfg else None,
            "master_seed": self.cfg.rng_seed if self.cfg else None,
            "outputs": self.outputs,
            "started_utc": self.started,
            "finished_utc": _utc_now(),
            **self.extra,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2))
        return manifest


def _csv_header(cfg, extra=None):
    lines = [f"# dlczsim {__version__}",
             f"# config_sha256: {config_hash(cfg).hex()}"]
    for k, v in (extra or {}).items():
        lines.append(f"# {k}: {v}")
    return lines


def _write_csv(path, cfg, columns, rows, extra=None):
    with open(path, "w", newline="") as fh:
        for line in _csv_header(cfg, extra):
            fh.write(line + "\n")
        w = csv.writer(fh)
        w.writerow(columns)
        w.writerows(rows)


def _load_cfg(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, rng_seed=args.seed)
    violations = validate_config(cfg)
    if violations:
        raise ValidationError(violations)
    return cfg


def _with_phases(cfg, phi_s_rad, phi_as_rad):
    if cfg.analyzer_s is None or cfg.analyzer_as is None:
        raise ValidationError(["this command needs analyzer_s and analyzer_as"])
    return replace(
        cfg,
        analyzer_s=replace(
            cfg.analyzer_s,
            detuning_mhz=detuning_for_phase(cfg.analyzer_s, phi_s_rad),
        ),
        analyzer_as=replace(
            cfg.analyzer_as,
            detuning_mhz=detuning_for_phase(cfg.analyzer_as, phi_as_rad),
        ),
    )


def chsh_setting_grid():
    """The 16 (phi_S, phi_AS) settings (degrees) of a full CHSH run."""
    s_phases = []
    for a in (CHSH_ALPHA_DEG, CHSH_ALPHA_P_DEG):
        s_phases += [a % 360, (a + 180) % 360]
    as_phases = []
    for b in (CHSH_BETA_DEG, CHSH_BETA_P_DEG):
        as_phases += [b % 360, (b + 180) % 360]
    return [(s, a) for s in sorted(set(s_phases)) for a in sorted(set(as_phases))]


# -- predict -------------------------------------------------------------------

def _cmd_predict(args):
    cfg = _load_cfg(args)
    run = _Run(args, cfg, args.config)
    bin_ns = args.bin_ns

    wants_all = not (args.histogram or args.fringe or args.chsh)
    if args.histogram or wants_all:
        h = predict_histogram(cfg, bin_size_ns=bin_ns)
        rows = [
            (c / 1000.0, e, a, ee, ce, ll, fl)
            for c, e, a, ee, ce, ll, fl in zip(
                h.bin_centers_ns(), h.expected, h.accidental, h.early_early,
                h.central, h.late_late, h.floor,
            )
        ]
        _write_csv(
            run.path("histogram.csv"), cfg,
            ["bin_center_us", "expected_per_trial", "accidental_per_trial",
             "early_early", "central", "late_late", "floor"],
            rows, {"bin_size_ns": bin_ns},
        )
        run.extra["g2_peak"] = predict_g2(cfg, bin_size_ns=bin_ns)

    has_analyzers = cfg.analyzer_s is not None and cfg.analyzer_as is not None
    if args.fringe or (wants_all and has_analyzers):
        phi_s = math.radians(args.phi_s_deg)
        phases = [2.0 * math.pi * k / args.points for k in range(args.points)]
        vals, floor = predict_fringe(cfg, phi_s, phases, bin_size_ns=bin_ns)
        _write_csv(
            run.path("fringe.csv"), cfg,
            ["phi_s_deg", "phi_as_deg", "expected_per_trial"],
            [(args.phi_s_deg, math.degrees(p), v) for p, v in zip(phases, vals)],
            {"bin_size_ns": bin_ns, "floor_per_trial": floor},
        )

    if args.chsh or (wants_all and has_analyzers):
        angles = [math.radians(x) for x in
                  (CHSH_ALPHA_DEG, CHSH_ALPHA_P_DEG, CHSH_BETA_DEG,
                   CHSH_BETA_P_DEG)]
        if args.visibility is not None:
            v = args.visibility
            a, ap, b, bp = angles
            e_values = [
                EValue(a, b, v * math.cos(a - b), 0.0),
                EValue(ap, b, v * math.cos(ap - b), 0.0),
                EValue(a, bp, v * math.cos(a - bp), 0.0),
                EValue(ap, bp, v * math.cos(ap - bp), 0.0),
            ]
            result = ChshResult.from_e_values(e_values)
        else:
            result = predict_chsh(cfg, *angles, bin_size_ns=bin_ns)
        rows = [
            (math.degrees(e.alpha_rad), math.degrees(e.beta_rad), e.e, e.sigma)
            for e in result.e_values
        ]
        _write_csv(
            run.path("chsh.csv"), cfg,
            ["alpha_deg", "beta_deg", "E", "sigma"],
            rows,
            {"S": result.s, "sigma_S": result.sigma_s,
             "unphysical": result.unphysical},
        )
        run.extra["S"] = result.s

    run.finish()
    return 0


# -- simulate ------------------------------------------------------------------

def _tagfile_name(phi_s_deg, phi_as_deg, fmt):
    ext = "bin" if fmt == "binary" else "txt"
    return f"tags_s{int(round(phi_s_deg)) % 360:03d}_a{int(round(phi_as_deg)) % 360:03d}.{ext}"


def _simulate_one(cfg, trials, workers):
    if trials == 0:
        return TagStream(config_hash=config_hash(cfg), tags=empty_tags()), None
    return run_experiment(cfg, trials, workers=workers)


def _cmd_simulate(args):
    cfg = _load_cfg(args)
    run = _Run(args, cfg, args.config)
    fmt = args.format
    ext = "bin" if fmt == "binary" else "txt"

    if args.sweep == "none":
        stream, report = _simulate_one(cfg, args.trials, args.workers)
        path = run.path(f"tags.{ext}")
        write_tags(stream, path, fmt)
        if report:
            run.extra["trials"] = report.n_conditional
            run.extra["n_triggers"] = report.n_triggers
            run.extra["total_trials"] = report.total_trials
            run.extra["wall_clock_equivalent_s"] = report.wall_clock_equivalent_s
    else:
        if args.sweep == "chsh":
            settings = chsh_setting_grid()
        else:
            step = 360.0 / args.points
            settings = [(args.phi_s_deg % 360, (k * step) % 360)
                        for k in range(args.points)]
        files = []
        for i, (s_deg, a_deg) in enumerate(settings):
            c = _with_phases(cfg, math.radians(s_deg), math.radians(a_deg))
            c = replace(c, rng_seed=cfg.rng_seed + i)
            stream, report = _simulate_one(c, args.trials, args.workers)
            name = _tagfile_name(s_deg, a_deg, fmt)
            write_tags(stream, run.path(name), fmt)
            files.append(
                {"file": name, "phi_s_deg": s_deg, "phi_as_deg": a_deg,
                 "seed": c.rng_seed,
                 "trials": args.trials,
                 "wall_clock_equivalent_s":
                     report.wall_clock_equivalent_s if report else 0.0}
            )
        run.extra["sweep"] = args.sweep
        run.extra["settings"] = files
    run.finish()
    return 0


# -- analyze -------------------------------------------------------------------

def _read_sweep(tags_path):
    """Load a sweep directory: returns (manifest, {(s_deg, a_deg): stream})."""
    d = Path(tags_path)
    manifest = json.loads((d / "manifest.json").read_text())
    streams = {}
    for entry in manifest.get("settings", []):
        streams[(entry["phi_s_deg"] % 360, entry["phi_as_deg"] % 360)] = read_tags(
            d / entry["file"]
        )
    return manifest, streams


def _cmd_analyze(args):
    cfg = _load_cfg(args)
    run = _Run(args, cfg, args.config)
    bin_ns = args.bin_ns
    k_unc = cfg.n_unconditional
    center_default = cfg.tau_mc_ns + (
        cfg.analyzer_as.tau_ifc_ns if cfg.analyzer_as else 0
    )

    if args.mode == "g2":
        stream = read_tags(args.tags)
        if args.shuffle_null:
            from .analysis import shuffle_antistokes

            stream = shuffle_antistokes(stream, k_unc, seed=cfg.rng_seed)
        hist = build_histogram(stream, bin_ns, k_unc)
        est = g2_estimate(hist, search_center_ns=cfg.tau_mc_ns)
        rows = [
            (c / 1000.0, n, a)
            for c, n, a in zip(hist.bin_centers_ns(), hist.counts,
                               hist.accidental_counts)
        ]
        _write_csv(run.path("histogram.csv"), cfg,
                   ["bin_center_us", "counts", "accidental"], rows,
                   {"bin_size_ns": bin_ns})
        _write_csv(
            run.path("g2.csv"), cfg,
            ["g2", "sigma", "peak_center_us", "counts", "accidental_raw",
             "small_count", "interval_low", "interval_high"],
            [(est.value, est.sigma, est.peak_center_ns / 1000.0, est.counts,
              est.accidental_raw, est.small_count, est.interval[0],
              est.interval[1])],
        )
        run.extra["g2"] = est.value
        run.extra["g2_sigma"] = est.sigma

    elif args.mode == "fringe":
        manifest, streams = _read_sweep(args.tags)
        pts = []
        for (s_deg, a_deg), stream in sorted(streams.items()):
            c, _ = count_in_window(stream, k_unc, center_default, bin_ns)
            pts.append((math.radians(a_deg), c, math.sqrt(max(c, 1.0))))
        phi_s = math.radians(next(iter(streams))[0])
        fit = fit_fringe(pts, phi_s, fix_floor=args.fringe_floor)
        _write_csv(
            run.path("fringe.csv"), cfg,
            ["phi_as_deg", "counts", "sigma"],
            [(math.degrees(p), c, s) for p, c, s in pts],
            {"bin_size_ns": bin_ns, "window_center_ns": center_default},
        )
        fitdoc = {
            "visibility": fit.visibility,
            "visibility_sigma": fit.visibility_sigma,
            "phase_offset_deg": math.degrees(fit.phase_offset_rad),
            "phase_offset_sigma_deg": math.degrees(fit.phase_offset_sigma),
            "amplitude": fit.amplitude,
            "floor": fit.floor,
            "chi2_dof": fit.chi2_dof,
        }
        p = run.path("fringe_fit.json")
        p.write_text(json.dumps(fitdoc, indent=2))
        run.extra["visibility"] = fit.visibility

    elif args.mode in ("chsh", "scan-window", "scan-binsize"):
        manifest, streams = _read_sweep(args.tags)
        settings = ChshSettings(
            alpha_deg=CHSH_ALPHA_DEG, alpha_p_deg=CHSH_ALPHA_P_DEG,
            beta_deg=CHSH_BETA_DEG, beta_p_deg=CHSH_BETA_P_DEG,
            streams=streams, n_unconditional=k_unc,
        )
        if args.mode == "chsh":
            result = chsh_from_settings(settings, center_default, bin_ns)
            rows = [
                (math.degrees(e.alpha_rad), math.degrees(e.beta_rad), e.e,
                 e.sigma)
                for e in result.e_values
            ]
            _write_csv(
                run.path("chsh.csv"), cfg,
                ["alpha_deg", "beta_deg", "E", "sigma"], rows,
                {"S": result.s, "sigma_S": result.sigma_s,
                 "significance": result.significance,
                 "window_center_ns": center_default, "bin_size_ns": bin_ns,
                 "unphysical": result.unphysical},
            )
            run.extra["S"] = result.s
            run.extra["sigma_S"] = result.sigma_s
            run.extra["significance"] = result.significance
        elif args.mode == "scan-window":
            centers = np.arange(args.scan_start_us, args.scan_stop_us + 1e-9,
                                args.scan_step_us) * 1000.0
            res = scan_window(settings, bin_ns, centers)
            _write_csv(
                run.path("scan_window.csv"), cfg,
                ["window_center_us", "S", "sigma", "significance"],
                [(p.x / 1000.0, p.s, p.sigma, p.significance)
                 for p in res.points],
                {"bin_size_ns": bin_ns},
            )
            run.extra["best_center_us"] = res.best().x / 1000.0
        else:
            sizes = [float(s) for s in args.sizes_ns.split(",")]
            res = scan_binsize(settings, center_default, sizes)
            _write_csv(
                run.path("scan_binsize.csv"), cfg,
                ["bin_size_ns", "S", "sigma", "significance"],
                [(p.x, p.s, p.sigma, p.significance) for p in res.points],
                {"window_center_ns": center_default},
            )

    elif args.mode == "scan-width":
        stream = read_tags(args.tags)
        widths = [float(s) for s in args.widths_ns.split(",")]
        duration = args.duration_s
        rows = scan_g2_vs_width(stream, k_unc, widths, cfg.tau_mc_ns,
                                duration_s=duration)
        _write_csv(
            run.path("g2_vs_width.csv"), cfg,
            ["width_ns", "g2", "sigma", "coincidences", "accidentals",
             "coincidence_rate", "accidental_rate", "rate_unit"],
            [tuple(r.values()) for r in rows],
        )
    else:
        raise ConfigError(f"unknown analyze mode {args.mode!r}")

    run.finish()
    return 0


# -- calibrate -----------------------------------------------------------------

def _cmd_calibrate(args):
    cfg = _load_cfg(args)
    run = _Run(args, cfg, args.config)
    by_basis = {}
    for spec in args.visibility_basis or []:
        k, v = spec.split("=")
        by_basis[int(k)] = float(v)
    derived, diag = calibrate(
        cfg,
        target_g2=args.target_g2,
        target_visibility=args.target_visibility,
        visibility_by_basis=by_basis or None,
        bin_size_ns=args.bin_ns,
    )
    out_cfg = run.path(args.derived_name)
    save_config(derived, out_cfg)
    run.cfg = derived
    run.extra["calibration"] = diag
    run.finish()
    print(json.dumps(diag, indent=2))
    return 0


# -- report --------------------------------------------------------------------

def _cmd_report(args):
    from . import report as rpt
    from .analysis import pair_sums

    cfg = _load_cfg(args)
    ana_cfg = load_config(args.analyzers_config) if args.analyzers_config else None
    if getattr(args, "seed", None) is not None and ana_cfg is not None:
        ana_cfg = replace(ana_cfg, rng_seed=args.seed)
    run = _Run(args, cfg, args.config)
    bin_ns = args.bin_ns
    trials = args.trials

    # histogram: prediction vs simulation
    pred = predict_histogram(cfg, bin_size_ns=bin_ns)
    stream, report = run_experiment(cfg, trials, workers=args.workers)
    hist = build_histogram(stream, bin_ns, cfg.n_unconditional,
                           n_conditional=trials)
    pred_cols = np.zeros(len(hist.counts))
    m = min(len(pred_cols), len(pred.expected))
    pred_cols[:m] = pred.expected[:m]
    rows = [
        (c / 1000.0, n, a, e * trials)
        for c, n, a, e in zip(hist.bin_centers_ns(), hist.counts,
                              hist.accidental_counts, pred_cols)
    ]
    _write_csv(run.path("histogram.csv"), cfg,
               ["bin_center_us", "counts", "accidental", "expected"], rows,
               {"bin_size_ns": bin_ns, "trials": trials})
    rpt.render_histogram(run.path("histogram.png"), pred, hist)

    est = g2_estimate(hist, search_center_ns=cfg.tau_mc_ns)
    run.extra["g2"] = est.value
    run.extra["g2_sigma"] = est.sigma

    # g2 vs P_S sweep (analytic line + a few simulated points)
    ps_grid = np.geomspace(0.0004, 0.02, 12)
    g2_line, rate_line = [], []
    for ps in ps_grid:
        c = replace(cfg, p_s_per_us=float(ps))
        g2_line.append(predict_g2(c, bin_size_ns=bin_ns))
        from .analytic import TrialModel
        m = TrialModel(c)
        expected, *_ = m.expected_grids()
        per_trial = m.window_sums(expected, cfg.tau_mc_ns, bin_ns)
        rate_line.append(per_trial * cfg.trials_per_prep * 3600.0)
    ps_mc, g2_mc, g2_sig = [], [], []
    for ps in np.geomspace(0.001, 0.02, args.sweep_points):
        c = replace(cfg, p_s_per_us=float(ps), rng_seed=cfg.rng_seed + 17)
        s, _ = run_experiment(c, trials, workers=args.workers)
        h = build_histogram(s, bin_ns, cfg.n_unconditional, n_conditional=trials)
        try:
            e = g2_estimate(h, search_center_ns=cfg.tau_mc_ns)
        except UndefinedStatisticError:
            continue
        ps_mc.append(ps * 100)
        g2_mc.append(e.value)
        g2_sig.append(e.sigma)
    _write_csv(run.path("g2_vs_ps.csv"), cfg,
               ["p_s_pct_per_us", "g2_model", "coincidences_per_hour"],
               [(p * 100, g, r) for p, g, r in zip(ps_grid, g2_line, rate_line)])
    rpt.render_g2_vs_ps(run.path("g2_vs_ps.png"), ps_grid * 100, g2_line,
                        rate_line, ps_mc, g2_mc, g2_sig)

    # g2 vs window width from the simulated stream
    widths = [200, 400, 600, 1000, 1600, 2400, 3600, 4800]
    width_rows = scan_g2_vs_width(
        stream, cfg.n_unconditional, widths, cfg.tau_mc_ns,
        duration_s=report.wall_clock_equivalent_s,
    )
    _write_csv(run.path("g2_vs_width.csv"), cfg,
               ["width_ns", "g2", "sigma", "coincidences", "accidentals",
                "coincidence_rate", "accidental_rate", "rate_unit"],
               [tuple(r.values()) for r in width_rows])
    rpt.render_g2_vs_width(run.path("g2_vs_width.png"), width_rows)

    if ana_cfg is not None:
        # fringes: predicted curves for both bases + simulated points at 0 deg
        phases = np.linspace(0, 2 * math.pi, 73)
        curves = {}
        for basis_deg in (0, 90):
            vals, _ = predict_fringe(ana_cfg, math.radians(basis_deg),
                                     phases, bin_size_ns=bin_ns)
            curves[f"phi_S = {basis_deg} deg (model x trials)"] = vals * trials
        mc_phases = [k * math.pi / 4 for k in range(8)]
        pts_c, pts_s = [], []
        center = ana_cfg.tau_mc_ns + ana_cfg.analyzer_as.tau_ifc_ns
        for i, pa in enumerate(mc_phases):
            c = _with_phases(ana_cfg, 0.0, pa)
            c = replace(c, rng_seed=ana_cfg.rng_seed + 100 + i)
            s, _ = run_experiment(c, trials, workers=args.workers)
            cc, _ = count_in_window(s, ana_cfg.n_unconditional, center, bin_ns)
            pts_c.append(cc)
            pts_s.append(math.sqrt(max(cc, 1)))
        rpt.render_fringes(
            run.path("fringes.png"), phases, curves,
            {"simulated, phi_S = 0 deg": (np.array(mc_phases), pts_c, pts_s)},
        )
        _write_csv(run.path("fringe_points.csv"), ana_cfg,
                   ["phi_as_deg", "counts", "sigma"],
                   [(math.degrees(p), c, s)
                    for p, c, s in zip(mc_phases, pts_c, pts_s)])

        # CHSH scans from a compact 16-setting run
        streams = {}
        for i, (s_deg, a_deg) in enumerate(chsh_setting_grid()):
            c = _with_phases(ana_cfg, math.radians(s_deg), math.radians(a_deg))
            c = replace(c, rng_seed=ana_cfg.rng_seed + 200 + i)
            s, _ = run_experiment(c, args.trials_chsh, workers=args.workers)
            streams[(s_deg, a_deg)] = s
        settings = ChshSettings(
            alpha_deg=CHSH_ALPHA_DEG, alpha_p_deg=CHSH_ALPHA_P_DEG,
            beta_deg=CHSH_BETA_DEG, beta_p_deg=CHSH_BETA_P_DEG,
            streams=streams, n_unconditional=ana_cfg.n_unconditional,
        ).cached_sums()
        centers = np.arange(9800.0, 12201.0, 300.0)
        wscan = scan_window(settings, bin_ns, centers)
        bscan = scan_binsize(settings, center_default_ns(ana_cfg),
                             [300, 600, 1200, 1800, 2400, 3600, 4800])
        _write_csv(run.path("scan_window.csv"), ana_cfg,
                   ["window_center_us", "S", "sigma", "significance"],
                   [(p.x / 1000.0, p.s, p.sigma, p.significance)
                    for p in wscan.points])
        _write_csv(run.path("scan_binsize.csv"), ana_cfg,
                   ["bin_size_ns", "S", "sigma", "significance"],
                   [(p.x, p.s, p.sigma, p.significance) for p in bscan.points])
        rpt.render_s_scans(run.path("s_scans.png"), wscan, bscan)
        r = chsh_from_settings(settings, center_default_ns(ana_cfg), bin_ns)
        run.extra["S"] = r.s
        run.extra["sigma_S"] = r.sigma_s

    run.finish()
    return 0


def center_default_ns(cfg):
    return cfg.tau_mc_ns + (cfg.analyzer_as.tau_ifc_ns if cfg.analyzer_as else 0)


# -- argument parsing ----------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="dlczsim",
        description="Simulate and analyze AFC-DLCZ time-bin entanglement runs",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", required=True, help="experiment config YAML")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--bin-ns", type=int, default=600,
                        help="coincidence bin size in ns")
        if seed:
            sp.add_argument("--seed", type=int, default=None,
                            help="override the config master seed")

    sp = sub.add_parser("predict", help="analytic tables from the model")
    common(sp)
    sp.add_argument("--histogram", action="store_true")
    sp.add_argument("--fringe", action="store_true")
    sp.add_argument("--chsh", action="store_true")
    sp.add_argument("--phi-s-deg", type=float, default=0.0)
    sp.add_argument("--points", type=int, default=8)
    sp.add_argument("--visibility", type=float, default=None,
                    help="CHSH from a bare visibility instead of the model")
    sp.set_defaults(func=_cmd_predict)

    sp = sub.add_parser("simulate", help="generate tag streams")
    common(sp)
    sp.add_argument("--trials", type=int, required=True,
                    help="conditional trials per stream")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--format", choices=["binary", "text"], default="binary")
    sp.add_argument("--sweep", choices=["none", "fringe", "chsh"],
                    default="none")
    sp.add_argument("--phi-s-deg", type=float, default=0.0)
    sp.add_argument("--points", type=int, default=8)
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("analyze", help="statistics from tag streams")
    common(sp)
    sp.add_argument("--tags", required=True,
                    help="tag file (g2, scan-width) or sweep directory")
    sp.add_argument("--mode", required=True,
                    choices=["g2", "fringe", "chsh", "scan-window",
                             "scan-binsize", "scan-width"])
    sp.add_argument("--fringe-floor", type=float, default=0.0,
                    help="fixed fringe floor (default 0 = raw contrast)")
    sp.add_argument("--shuffle-null", action="store_true",
                    help="g2 mode: destroy correlations first (null check)")
    sp.add_argument("--scan-start-us", type=float, default=9.8)
    sp.add_argument("--scan-stop-us", type=float, default=12.2)
    sp.add_argument("--scan-step-us", type=float, default=0.3)
    sp.add_argument("--sizes-ns", default="300,600,1200,1800,2400,3600,4800")
    sp.add_argument("--widths-ns", default="200,400,600,1000,1600,2400,3600")
    sp.add_argument("--duration-s", type=float, default=None,
                    help="wall-clock-equivalent exposure for rates")
    sp.set_defaults(func=_cmd_analyze)

    sp = sub.add_parser("calibrate",
                        help="fit noise and overlap to target observables")
    common(sp)
    sp.add_argument("--target-g2", type=float, default=None)
    sp.add_argument("--target-visibility", type=float, default=None)
    sp.add_argument("--visibility-basis", action="append", default=None,
                    metavar="DEG=V",
                    help="per-basis visibility target, e.g. 90=0.701")
    sp.add_argument("--derived-name", default="calibrated.yaml")
    sp.set_defaults(func=_cmd_calibrate)

    sp = sub.add_parser("report",
                        help="render the standard figures and tables")
    common(sp)
    sp.add_argument("--analyzers-config", default=None,
                    help="analyzer-mode config for fringe/CHSH figures")
    sp.add_argument("--trials", type=int, default=1_000_000)
    sp.add_argument("--trials-chsh", type=int, default=2_000_000)
    sp.add_argument("--sweep-points", type=int, default=4)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=_cmd_report)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print("configuration invalid:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return 2
    except CalibrationInfeasibleError as exc:
        print(f"calibration infeasible: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, TagFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except UndefinedStatisticError as exc:
        print(f"statistic undefined: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
