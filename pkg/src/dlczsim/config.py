"""Domain types and configuration handling.

All durations are stored internally as integer nanoseconds so that tag
streams and histograms are bit-reproducible; configuration files use
microsecond decimals and are converted exactly on load. Probabilities are
stored as fractions in [0, 1].
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import yaml

from .errors import ConfigError, InvalidAnalyzerError, ValidationError

TWO_PI = 2.0 * math.pi

# fwhm -> sigma of a Gaussian
FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

CHANNEL_STOKES = 0
CHANNEL_ANTISTOKES = 1
KIND_CONDITIONAL = 0
KIND_UNCONDITIONAL = 1


def us_to_ns(value_us: float) -> int:
    """Convert a duration in microseconds to integer nanoseconds."""
    ns = round(float(value_us) * 1000.0)
    return int(ns)


def ns_to_us(value_ns: int) -> float:
    return value_ns / 1000.0


@dataclass(frozen=True)
class SpinDecoherence:
    """Decay of the readout efficiency with spin storage time.

    ``gaussian`` models inhomogeneous spin broadening, exp(-(t/tc)^2);
    ``exponential`` is exp(-t/tc).
    """

    form: str = "gaussian"
    time_constant_ns: int = 30_000

    def decay(self, storage_ns) -> float:
        import numpy as np

        t = np.asarray(storage_ns, dtype=float) / float(self.time_constant_ns)
        if self.form == "gaussian":
            out = np.exp(-(t**2))
        else:
            out = np.exp(-t)
        if out.ndim == 0:
            return float(out)
        return out


@dataclass(frozen=True)
class LeakagePeak:
    """Structured anti-Stokes background from write-pulse echo leakage.

    ``center_ns`` is measured from the read pulse; ``rate`` is the mean
    number of leakage photons reaching the analyzer stage per read.
    """

    center_ns: int
    width_ns: int
    rate: float


@dataclass(frozen=True)
class AnalyzerSetting:
    """One AFC time-bin analyzer (transmit = early, echo = late).

    The early/late phase is set by detuning the comb center frequency:
    a detuning of one comb spacing gives a 2*pi phase shift.
    """

    tau_ifc_ns: int = 2000
    eta_transmit: float = 0.3
    eta_echo: float = 0.3
    comb_spacing_mhz: float = 0.5
    detuning_mhz: float = 0.0


def phase_from_detuning(a: AnalyzerSetting) -> float:
    """Early/late phase in radians, in [0, 2*pi).

    Linear in the detuning with period one comb spacing.
    """
    if a.comb_spacing_mhz <= 0:
        raise InvalidAnalyzerError(
            f"comb_spacing must be positive, got {a.comb_spacing_mhz}"
        )
    phase = (TWO_PI * (a.detuning_mhz / a.comb_spacing_mhz)) % TWO_PI
    # float modulo can land exactly on the period for tiny negative inputs
    return 0.0 if phase >= TWO_PI else phase


def detuning_for_phase(a: AnalyzerSetting, phase_rad: float) -> float:
    """Detuning (MHz) that realizes ``phase_rad`` on analyzer ``a``."""
    if a.comb_spacing_mhz <= 0:
        raise InvalidAnalyzerError(
            f"comb_spacing must be positive, got {a.comb_spacing_mhz}"
        )
    return (phase_rad % TWO_PI) / TWO_PI * a.comb_spacing_mhz


@dataclass(frozen=True)
class ExperimentConfig:
    """Every physical and protocol parameter of one experiment run.

    Durations are integer nanoseconds. ``p_s_per_us`` is the genuine
    Stokes-pair creation probability density per microsecond of write
    window (a fraction, before any transmission or detection loss);
    ``p_s_background`` is the uncorrelated Stokes-channel detection
    probability per trial (the write-power -> 0 intercept).
    ``readout_efficiency`` is the per-spin-wave conversion probability at
    zero storage time, before anti-Stokes arm losses; the spin_decoherence
    law multiplies it per trial.
    """

    tau_mc_ns: int = 9000
    stokes_window_start_ns: int = 1000
    stokes_window_length_ns: int = 4000
    write_fwhm_ns: int = 700
    n_temporal_modes: int = 5
    read_delay_ns: int = 16000
    antistokes_gate_length_ns: int = 10000
    p_s_per_us: float = 0.004
    p_s_background: float = 0.005
    readout_efficiency: float = 0.10
    spin_decoherence: SpinDecoherence = field(default_factory=SpinDecoherence)
    antistokes_noise_per_us: float = 0.0
    leakage_peaks: tuple = ()
    detector_efficiency_s: float = 0.5
    detector_efficiency_as: float = 0.5
    transmission_s: float = 0.59
    transmission_as: float = 0.56
    analyzer_s: AnalyzerSetting | None = None
    analyzer_as: AnalyzerSetting | None = None
    mode_overlap: float = 1.0
    mode_overlap_by_basis: tuple = ()
    stokes_envelope: str = "uniform"
    stokes_envelope_tc_ns: int = 2000
    classical_baseline: bool = False
    rep_rate_khz: float = 3.7
    trials_per_prep: int = 1100
    n_unconditional: int = 10
    rng_seed: int = 12345

    # -- derived geometry -------------------------------------------------

    def mode_centers_ns(self):
        """Centers of the temporal Stokes mode slots, ns from the write pulse."""
        m = self.n_temporal_modes
        pitch = self.stokes_window_length_ns / m
        return [
            self.stokes_window_start_ns + (k + 0.5) * pitch for k in range(m)
        ]

    def mode_weights(self):
        """Envelope weights of the temporal modes, normalized to 1."""
        centers = self.mode_centers_ns()
        if self.stokes_envelope == "uniform":
            w = [1.0] * len(centers)
        elif self.stokes_envelope == "exponential":
            t0 = centers[0]
            w = [
                math.exp(-(c - t0) / float(self.stokes_envelope_tc_ns))
                for c in centers
            ]
        else:
            raise ValueError(f"unknown stokes_envelope {self.stokes_envelope!r}")
        total = sum(w)
        return [x / total for x in w]

    def mean_pairs_total(self) -> float:
        """Mean number of pairs created per trial across all modes."""
        return self.p_s_per_us * (self.stokes_window_length_ns / 1000.0)

    def mean_pairs_per_mode(self):
        total = self.mean_pairs_total()
        return [w * total for w in self.mode_weights()]

    def stokes_chain(self) -> float:
        """Transmission times detector efficiency in the Stokes arm."""
        return self.transmission_s * self.detector_efficiency_s

    def antistokes_chain(self) -> float:
        return self.transmission_as * self.detector_efficiency_as

    def jitter_sigma_ns(self) -> float:
        """Anti-Stokes echo timing jitter; the echo inherits the write envelope."""
        return self.write_fwhm_ns / FWHM_TO_SIGMA

    def conversion_probability(self, mode_center_ns) -> float:
        """Spin wave -> anti-Stokes photon probability for a given mode slot."""
        storage = self.read_delay_ns - float(mode_center_ns)
        return self.readout_efficiency * self.spin_decoherence.decay(storage)

    def overlap_for_basis(self, phi_s_rad: float) -> float:
        """Indistinguishability factor, optionally per Stokes measurement basis.

        Bases are keyed by phi_S mod pi in degrees (phi and phi+pi select the
        same basis).
        """
        if not self.mode_overlap_by_basis:
            return self.mode_overlap
        key = round(math.degrees(phi_s_rad % math.pi))
        for basis_deg, mu in self.mode_overlap_by_basis:
            if abs(((key - basis_deg) % 180)) < 1 or abs(((basis_deg - key) % 180)) < 1:
                return mu
        return self.mode_overlap


# -- validation ------------------------------------------------------------

_PROB_FIELDS = (
    "p_s_background",
    "readout_efficiency",
    "detector_efficiency_s",
    "detector_efficiency_as",
    "transmission_s",
    "transmission_as",
    "mode_overlap",
)

_POSITIVE_DURATIONS = (
    "tau_mc_ns",
    "stokes_window_length_ns",
    "write_fwhm_ns",
    "read_delay_ns",
    "antistokes_gate_length_ns",
)


def _analyzer_violations(name: str, a: AnalyzerSetting):
    out = []
    if a.tau_ifc_ns <= 0:
        out.append(f"{name}.tau_ifc must be positive")
    if a.comb_spacing_mhz <= 0:
        out.append(f"{name}.comb_spacing must be positive")
    for f in ("eta_transmit", "eta_echo"):
        v = getattr(a, f)
        if not 0.0 <= v <= 1.0:
            out.append(f"{name}.{f} must be in [0, 1], got {v}")
    if a.eta_transmit + a.eta_echo > 1.0 + 1e-12:
        out.append(f"{name}: eta_transmit+eta_echo>1 (remainder must be loss)")
    return out


def validate_config(cfg: ExperimentConfig):
    """Return a list of human-readable invariant violations (empty = valid)."""
    v = []
    for name in _PROB_FIELDS:
        val = getattr(cfg, name)
        if not 0.0 <= val <= 1.0:
            v.append(f"{name} must be in [0, 1], got {val}")
    for name in _POSITIVE_DURATIONS:
        if getattr(cfg, name) <= 0:
            v.append(f"{name} must be positive, got {getattr(cfg, name)}")
    if cfg.stokes_window_start_ns < 0:
        v.append("stokes_window_start must be non-negative")
    if cfg.n_temporal_modes < 1:
        v.append("n_temporal_modes must be >= 1")
    if cfg.stokes_window_start_ns + cfg.stokes_window_length_ns > cfg.tau_mc_ns:
        v.append(
            "Stokes gate overlaps memory echo: "
            "stokes_window_start + stokes_window_length must be <= tau_mc"
        )
    if cfg.p_s_per_us < 0:
        v.append("p_s_per_us must be non-negative")
    if cfg.antistokes_noise_per_us < 0:
        v.append("antistokes_noise_per_us must be non-negative")
    for i, pk in enumerate(cfg.leakage_peaks):
        if pk.rate < 0:
            v.append(f"leakage_peaks[{i}].rate must be non-negative")
        if pk.width_ns <= 0:
            v.append(f"leakage_peaks[{i}].width must be positive")
    if cfg.spin_decoherence.form not in ("gaussian", "exponential"):
        v.append(
            f"spin_decoherence.form must be gaussian or exponential, "
            f"got {cfg.spin_decoherence.form!r}"
        )
    if cfg.spin_decoherence.time_constant_ns <= 0:
        v.append("spin_decoherence.time_constant must be positive")
    if cfg.stokes_envelope not in ("uniform", "exponential"):
        v.append(f"stokes_envelope must be uniform or exponential")
    if cfg.rep_rate_khz <= 0:
        v.append("rep_rate must be positive")
    if cfg.trials_per_prep < 1:
        v.append("trials_per_prep must be >= 1")
    if cfg.n_unconditional < 0:
        v.append("n_unconditional must be >= 0")
    if not 0 <= cfg.rng_seed < 2**64:
        v.append("rng_seed must fit in 64 bits")
    for mu_entry in cfg.mode_overlap_by_basis:
        if not 0.0 <= mu_entry[1] <= 1.0:
            v.append(f"mode_overlap for basis {mu_entry[0]} must be in [0, 1]")
    if cfg.analyzer_s is not None:
        v.extend(_analyzer_violations("analyzer_s", cfg.analyzer_s))
    if cfg.analyzer_as is not None:
        v.extend(_analyzer_violations("analyzer_as", cfg.analyzer_as))
    if cfg.analyzer_s is not None and cfg.analyzer_as is not None and not v:
        v.extend(_interference_feasibility(cfg))
    return v


def joint_pair_cells(s_t, s_e, a_t, a_e, mu, cos_theta):
    """Joint (S-path, AS-path) probability table for one correlated pair.

    Rows index the Stokes fate {transmit, echo, undetected}, columns the
    anti-Stokes fate. The central TE/ET cells carry the two-photon
    interference cross-term 2*mu*sqrt(...)*cos(theta), split between them in
    proportion to their raw weights; the undetected rows and columns absorb
    the remainder so that both singles marginals stay phase independent.
    Entries can go negative for infeasible (mu, efficiency) combinations.
    """
    import numpy as np

    cross = 2.0 * mu * math.sqrt(s_t * a_e * s_e * a_t) * cos_theta
    raw_te = s_t * a_e
    raw_et = s_e * a_t
    denom = raw_te + raw_et
    w_te = raw_te / denom if denom > 0 else 0.0
    te = raw_te + cross * w_te
    et = raw_et + cross * (1.0 - w_te)
    cells = np.array(
        [
            [s_t * a_t, te, s_t - s_t * a_t - te],
            [et, s_e * a_e, s_e - et - s_e * a_e],
            [a_t - s_t * a_t - et, a_e - te - s_e * a_e, 0.0],
        ]
    )
    cells[2, 2] = 1.0 - cells[:2, :].sum() - cells[2, :2].sum()
    return cells


def _interference_feasibility(cfg):
    """Check the joint four-path pair model keeps probabilities non-negative.

    The interference cross-term can exceed what the loss channels absorb
    when the analyzers are nearly lossless and mu is large; the check runs
    at the worst case cos(theta) = +/-1 for every mode and basis.
    """
    cs = cfg.stokes_chain()
    cas = cfg.antistokes_chain()
    s_t = cfg.analyzer_s.eta_transmit * cs
    s_e = cfg.analyzer_s.eta_echo * cs
    mus = [cfg.mode_overlap] + [m for _, m in cfg.mode_overlap_by_basis]
    for center in cfg.mode_centers_ns():
        rho = cfg.conversion_probability(center)
        a_t = cfg.analyzer_as.eta_transmit * cas * rho
        a_e = cfg.analyzer_as.eta_echo * cas * rho
        for mu in mus:
            for cos_theta in (1.0, -1.0):
                cells = joint_pair_cells(s_t, s_e, a_t, a_e, mu, cos_theta)
                if (cells < -1e-12).any():
                    return [
                        "analyzer interference model infeasible: joint path "
                        "probabilities go negative; reduce mode_overlap or "
                        "analyzer efficiencies"
                    ]
    return []


def require_valid(cfg: ExperimentConfig) -> ExperimentConfig:
    violations = validate_config(cfg)
    if violations:
        raise ValidationError(violations)
    return cfg


# -- file I/O ----------------------------------------------------------------

_DURATION_KEYS_US = {
    "tau_mc_us": "tau_mc_ns",
    "stokes_window_start_us": "stokes_window_start_ns",
    "stokes_window_length_us": "stokes_window_length_ns",
    "write_fwhm_us": "write_fwhm_ns",
    "read_delay_us": "read_delay_ns",
    "antistokes_gate_length_us": "antistokes_gate_length_ns",
    "stokes_envelope_tc_us": "stokes_envelope_tc_ns",
}

_SCALAR_KEYS = (
    "n_temporal_modes",
    "p_s_per_us",
    "p_s_background",
    "readout_efficiency",
    "antistokes_noise_per_us",
    "detector_efficiency_s",
    "detector_efficiency_as",
    "transmission_s",
    "transmission_as",
    "mode_overlap",
    "stokes_envelope",
    "classical_baseline",
    "rep_rate_khz",
    "trials_per_prep",
    "n_unconditional",
    "rng_seed",
)

_KNOWN_KEYS = (
    set(_DURATION_KEYS_US)
    | set(_SCALAR_KEYS)
    | {"spin_decoherence", "leakage_peaks", "analyzer_s", "analyzer_as",
       "mode_overlap_by_basis"}
)


def _analyzer_from_mapping(name, m):
    unknown = set(m) - {"tau_ifc_us", "eta_transmit", "eta_echo",
                        "comb_spacing_mhz", "detuning_mhz"}
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    kwargs = {}
    if "tau_ifc_us" in m:
        kwargs["tau_ifc_ns"] = us_to_ns(m["tau_ifc_us"])
    for k in ("eta_transmit", "eta_echo", "comb_spacing_mhz", "detuning_mhz"):
        if k in m:
            kwargs[k] = float(m[k])
    return AnalyzerSetting(**kwargs)


def config_from_mapping(doc: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed mapping. Unknown keys rejected."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    unknown = set(doc) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key_us, key_ns in _DURATION_KEYS_US.items():
        if key_us in doc:
            kwargs[key_ns] = us_to_ns(doc[key_us])
    for key in _SCALAR_KEYS:
        if key in doc:
            kwargs[key] = doc[key]
    if "spin_decoherence" in doc:
        sd = doc["spin_decoherence"]
        unknown = set(sd) - {"form", "time_constant_us"}
        if unknown:
            raise ConfigError(f"unknown keys in spin_decoherence: {sorted(unknown)}")
        kwargs["spin_decoherence"] = SpinDecoherence(
            form=sd.get("form", "gaussian"),
            time_constant_ns=us_to_ns(sd.get("time_constant_us", 30.0)),
        )
    if "leakage_peaks" in doc:
        peaks = []
        for pk in doc["leakage_peaks"]:
            unknown = set(pk) - {"center_us", "width_us", "rate"}
            if unknown:
                raise ConfigError(f"unknown keys in leakage_peaks: {sorted(unknown)}")
            peaks.append(
                LeakagePeak(
                    center_ns=us_to_ns(pk["center_us"]),
                    width_ns=us_to_ns(pk["width_us"]),
                    rate=float(pk["rate"]),
                )
            )
        kwargs["leakage_peaks"] = tuple(peaks)
    if "mode_overlap_by_basis" in doc:
        kwargs["mode_overlap_by_basis"] = tuple(
            (int(k), float(v)) for k, v in sorted(doc["mode_overlap_by_basis"].items())
        )
    for name in ("analyzer_s", "analyzer_as"):
        if name in doc and doc[name] is not None:
            kwargs[name] = _analyzer_from_mapping(name, doc[name])
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_mapping(cfg: ExperimentConfig) -> dict:
    doc = {}
    for key_us, key_ns in _DURATION_KEYS_US.items():
        doc[key_us] = ns_to_us(getattr(cfg, key_ns))
    for key in _SCALAR_KEYS:
        doc[key] = getattr(cfg, key)
    doc["spin_decoherence"] = {
        "form": cfg.spin_decoherence.form,
        "time_constant_us": ns_to_us(cfg.spin_decoherence.time_constant_ns),
    }
    doc["leakage_peaks"] = [
        {"center_us": ns_to_us(pk.center_ns), "width_us": ns_to_us(pk.width_ns),
         "rate": pk.rate}
        for pk in cfg.leakage_peaks
    ]
    if cfg.mode_overlap_by_basis:
        doc["mode_overlap_by_basis"] = {k: v for k, v in cfg.mode_overlap_by_basis}
    for name in ("analyzer_s", "analyzer_as"):
        a = getattr(cfg, name)
        if a is not None:
            doc[name] = {
                "tau_ifc_us": ns_to_us(a.tau_ifc_ns),
                "eta_transmit": a.eta_transmit,
                "eta_echo": a.eta_echo,
                "comb_spacing_mhz": a.comb_spacing_mhz,
                "detuning_mhz": a.detuning_mhz,
            }
    return doc


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_mapping(doc)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(
        yaml.safe_dump(config_to_mapping(cfg), sort_keys=True, default_flow_style=False)
    )


def config_hash(cfg: ExperimentConfig) -> bytes:
    """SHA-256 over the canonical YAML serialization (32 bytes)."""
    canon = yaml.safe_dump(config_to_mapping(cfg), sort_keys=True)
    return hashlib.sha256(canon.encode()).digest()


def replace(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    import dataclasses

    return dataclasses.replace(cfg, **changes)
