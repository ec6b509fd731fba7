"""Fit the unreported noise parameters to the published observables.

The experiment reports outcomes (the peak cross-correlation and the fringe
visibilities), not noise rates, so the anti-Stokes noise density is fitted
so the analytic cross-correlation hits its target without analyzers, and
the mode overlap so the central-peak visibility hits its target with
analyzers. Both responses are monotone, so plain bisection suffices.
"""
from __future__ import annotations

import math

from .analytic import DEFAULT_BIN_NS, predict_g2, predict_visibility
from .config import ExperimentConfig, replace
from .errors import CalibrationInfeasibleError, ValidationError

_REL_TOL = 1e-7
_MAX_ITER = 200


def fit_noise_for_g2(cfg: ExperimentConfig, target: float,
                     bin_size_ns: int = DEFAULT_BIN_NS) -> float:
    """Anti-Stokes noise density (per us) reproducing the target g2.

    Evaluated without analyzers (the reference measurement is taken through
    transparency windows). Monotone decreasing in the noise rate.
    """
    base = replace(cfg, analyzer_s=None, analyzer_as=None)

    def g2_at(nu):
        return predict_g2(replace(base, antistokes_noise_per_us=nu),
                          bin_size_ns=bin_size_ns)

    if target <= 1.0:
        raise CalibrationInfeasibleError(
            f"g2 target {target} not reachable: accidental-normalized g2 "
            "tends to 1 from above"
        )
    g2_max = g2_at(0.0)
    if target > g2_max:
        raise CalibrationInfeasibleError(
            f"g2 target {target} exceeds the zero-noise maximum {g2_max:.3f}"
        )
    if abs(g2_max - target) <= _REL_TOL * target:
        return 0.0
    lo, hi = 0.0, 1e-4
    while g2_at(hi) > target:
        hi *= 4.0
        if hi > 1e3:
            raise CalibrationInfeasibleError(
                f"g2 target {target} not bracketed by any noise rate"
            )
    for _ in range(_MAX_ITER):
        mid = 0.5 * (lo + hi)
        val = g2_at(mid)
        if abs(val - target) <= _REL_TOL * target:
            return mid
        if val > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fit_overlap_for_visibility(cfg: ExperimentConfig, target: float,
                               phi_s_rad: float = 0.0,
                               bin_size_ns: int = DEFAULT_BIN_NS) -> float:
    """Mode overlap reproducing the target central-peak visibility."""
    if cfg.analyzer_s is None or cfg.analyzer_as is None:
        raise CalibrationInfeasibleError(
            "visibility calibration requires analyzers in the config"
        )
    if not 0.0 < target <= 1.0:
        raise CalibrationInfeasibleError(
            f"visibility target {target} outside (0, 1]"
        )

    def vis_at(mu):
        c = replace(cfg, mode_overlap=mu, mode_overlap_by_basis=())
        try:
            return predict_visibility(c, phi_s=phi_s_rad, bin_size_ns=bin_size_ns)
        except ValidationError as exc:
            raise CalibrationInfeasibleError(str(exc)) from exc

    v_max = vis_at(1.0)
    if target > v_max + 1e-12:
        raise CalibrationInfeasibleError(
            f"visibility target {target} exceeds the mu=1 maximum {v_max:.4f}"
        )
    lo, hi = 0.0, 1.0
    for _ in range(_MAX_ITER):
        mid = 0.5 * (lo + hi)
        val = vis_at(mid)
        if abs(val - target) <= _REL_TOL * max(target, 1e-12):
            return mid
        if val < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate(cfg: ExperimentConfig, target_g2: float | None = None,
              target_visibility: float | None = None,
              visibility_by_basis: dict | None = None,
              bin_size_ns: int = DEFAULT_BIN_NS):
    """Return (derived config, diagnostics) hitting the requested targets.

    The noise density is fitted first (it also sets the fringe floor), the
    overlap second.
    """
    out = cfg
    diag = {}
    if target_g2 is not None:
        nu = fit_noise_for_g2(out, target_g2, bin_size_ns=bin_size_ns)
        out = replace(out, antistokes_noise_per_us=nu)
        diag["antistokes_noise_per_us"] = nu
        diag["g2_achieved"] = predict_g2(
            replace(out, analyzer_s=None, analyzer_as=None),
            bin_size_ns=bin_size_ns,
        )
    if target_visibility is not None:
        mu = fit_overlap_for_visibility(out, target_visibility,
                                        bin_size_ns=bin_size_ns)
        out = replace(out, mode_overlap=mu)
        diag["mode_overlap"] = mu
        diag["visibility_achieved"] = predict_visibility(
            out, phi_s=0.0, bin_size_ns=bin_size_ns
        )
    if visibility_by_basis:
        entries = []
        for basis_deg, v_target in sorted(visibility_by_basis.items()):
            mu = fit_overlap_for_visibility(
                out, v_target, phi_s_rad=math.radians(basis_deg),
                bin_size_ns=bin_size_ns,
            )
            entries.append((int(basis_deg), mu))
        out = replace(out, mode_overlap_by_basis=tuple(entries))
        diag["mode_overlap_by_basis"] = dict(entries)
    return out, diag
