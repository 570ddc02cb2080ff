"""Scenario file: the complete experiment configuration.

Scenarios are JSON with a strict schema: every key is checked and unknown
keys are rejected, so calibration typos fail at load time rather than
producing silently wrong data.  The storage-ordering constraint
(storage_time < fiber_delay) is enforced here, never at runtime.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .detection import DetectorParams, LossBudget, TimingConfig
from .errors import ConfigurationError
from .interferometer import AttenuatorSetting, balance_attenuation
from .memory import EITParams, MemoryDecayParams, MemoryNoiseParams
from .source import SourceParams, eta_from_tan2, tan2_eta_from_detuning

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CorrelationConstants:
    """Auto/cross-correlation constants and the g2-channel noise floor.

    The autocorrelation values are measured inputs (they are never
    simulated microscopically); g2_channel_background is the per-slot
    uncorrelated arm-2 click probability seen by the cross-correlation
    channel during retrieval.  pair_correlated=False models a coherent
    (classically correlated) source: no excess coincidences.
    """

    pair_correlated: bool = True
    g2_autocorr_s1: float = 1.2
    g2_autocorr_s2_pre: float = 1.38
    g2_autocorr_s2_post: float = 2.0
    g2_channel_background: float = 0.0

    def __post_init__(self):
        for name in ("g2_autocorr_s1", "g2_autocorr_s2_pre", "g2_autocorr_s2_post"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.g2_channel_background < 0:
            raise ConfigurationError("g2_channel_background must be >= 0")


@dataclass(frozen=True)
class MeasurementPlan:
    """Which measurements run and for how long."""

    chsh_angles: tuple[float, float, float, float] = (
        0.0,
        np.pi / 8,
        np.pi / 4,
        3 * np.pi / 8,
    )
    visibility_thetas: tuple[float, ...] = tuple(np.linspace(0.0, np.pi / 2, 16))
    visibility_arm1: str = "A"
    acquisition_s: dict = field(
        default_factory=lambda: {
            "tomo_pre": 120.0,
            "tomo_post": 1200.0,
            "chsh_pre": 60.0,
            "chsh_post": 600.0,
            "vis_pre": 60.0,
            "vis_post": 600.0,
            "alpha_pre": 3600.0,
            "alpha_post": 7200.0,
            "g2": 600.0,
        }
    )
    n_resamples: int = 200
    error_bars: bool = True

    def __post_init__(self):
        if len(self.chsh_angles) != 4:
            raise ConfigurationError("chsh_angles must hold exactly 4 angles")
        if len(self.visibility_thetas) < 8:
            raise ConfigurationError("visibility sweep needs at least 8 angles")
        if self.visibility_arm1 not in ("H", "V", "D", "A", "R", "L"):
            raise ConfigurationError(f"unknown visibility arm-1 state {self.visibility_arm1!r}")
        missing = {
            "tomo_pre", "tomo_post", "chsh_pre", "chsh_post",
            "vis_pre", "vis_post", "alpha_pre", "alpha_post", "g2",
        } - set(self.acquisition_s)
        if missing:
            raise ConfigurationError(f"acquisition_s missing entries {sorted(missing)}")
        for key, val in self.acquisition_s.items():
            if val <= 0:
                raise ConfigurationError(f"acquisition_s[{key!r}] must be > 0")


@dataclass(frozen=True)
class Scenario:
    """Full experiment configuration; the unit the CLI operates on."""

    source: SourceParams
    eit: EITParams
    decay: MemoryDecayParams
    mem_noise: MemoryNoiseParams
    losses: LossBudget
    detector1: DetectorParams
    detector2: DetectorParams
    timing: TimingConfig
    correlations: CorrelationConstants = CorrelationConstants()
    plan: MeasurementPlan = MeasurementPlan()
    attenuator: AttenuatorSetting | None = None  # None -> "auto"
    tan2_eta_anchors: tuple = ()
    master_seed: int = 0
    notes: tuple[str, ...] = ()

    def resolved_attenuator(self) -> AttenuatorSetting:
        if self.attenuator is not None:
            return self.attenuator
        return balance_attenuation(self.source.eta_f)


def classicalize(scenario: Scenario) -> Scenario:
    """Classical twin: full white noise and coherent-light correlations."""
    return replace(
        scenario,
        source=replace(scenario.source, p_white=1.0),
        correlations=replace(
            scenario.correlations,
            pair_correlated=False,
            g2_autocorr_s1=1.0,
            g2_autocorr_s2_pre=1.0,
            g2_autocorr_s2_post=1.0,
        ),
    )


# ---------------------------------------------------------------------------
# Strict JSON (de)serialization.
# ---------------------------------------------------------------------------


def _take(section: dict, allowed: dict, where: str) -> dict:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigurationError(f"unknown keys {sorted(unknown)} in {where}")
    out = {}
    for key, default in allowed.items():
        if key in section:
            out[key] = section[key]
        elif default is ...:
            raise ConfigurationError(f"missing required key {key!r} in {where}")
        else:
            out[key] = default
    return out


def scenario_from_dict(data: dict) -> Scenario:
    top = _take(
        data,
        {
            "schema_version": ...,
            "master_seed": ...,
            "source": ...,
            "attenuator": "auto",
            "eit": ...,
            "decay": ...,
            "mem_noise": ...,
            "losses": {},
            "detectors": ...,
            "timing": {},
            "correlations": {},
            "settings": {},
            "notes": [],
        },
        "scenario",
    )
    if top["schema_version"] != SCHEMA_VERSION:
        raise ConfigurationError(
            f"unsupported schema_version {top['schema_version']} (expected {SCHEMA_VERSION})"
        )

    src = _take(
        top["source"],
        {
            "eta_f": "auto",
            "phi_f": 0.0,
            "two_photon_detuning": -20.0,
            "tan2_eta_anchors": ...,
            "p_white": ...,
            "pair_prob": ...,
            "s2_spectral_fwhm": 150.0,
            "s2_temporal_fwhm": 7.0,
            "s1_temporal_fwhm": 50.0,
        },
        "source",
    )
    anchors = tuple((float(d), float(v)) for d, v in src.pop("tan2_eta_anchors"))
    if src["eta_f"] == "auto":
        src["eta_f"] = eta_from_tan2(
            tan2_eta_from_detuning(src["two_photon_detuning"], list(anchors))
        )
    source = SourceParams(**src)

    att_spec = top["attenuator"]
    if att_spec == "auto":
        attenuator = None
    else:
        att = _take(att_spec, {"t_h": ..., "balanced": True}, "attenuator")
        attenuator = AttenuatorSetting(**att)

    eit_d = _take(
        top["eit"],
        {
            "optical_depth": ...,
            "rabi_coupling": ...,
            "gamma_e": 2.875,
            "gamma_g": 0.03,
            "probe_grid_mhz": [-60.0, 60.0, 2401],
        },
        "eit",
    )
    lo, hi, n = eit_d.pop("probe_grid_mhz")
    eit = EITParams(probe_detuning_grid=np.linspace(lo, hi, int(n)), **eit_d)

    decay = MemoryDecayParams(
        **_take(
            top["decay"],
            {"model": "gaussian", "tau_mem": ..., "eta_peak": 0.9},
            "decay",
        )
    )
    mem_noise = MemoryNoiseParams(
        **_take(top["mem_noise"], {"p_depol": ..., "background_flux": ...}, "mem_noise")
    )
    losses = LossBudget(
        **_take(
            top["losses"],
            {
                "s2_path": 0.75,
                "s1_fiber_coupling": 0.82,
                "s1_detector_coupling": 0.80,
                "s1_filters": 0.9405,
                "s2_filters": 0.40,
            },
            "losses",
        )
    )
    dets = _take(top["detectors"], {"d1": ..., "d2": ...}, "detectors")
    det_fields = {"efficiency": ..., "dark_rate": 0.0, "dead_time": 0.0, "gate_width": 8.0}
    detector1 = DetectorParams(**_take(dets["d1"], det_fields, "detectors.d1"))
    detector2 = DetectorParams(**_take(dets["d2"], det_fields, "detectors.d2"))
    timing = TimingConfig(
        **_take(
            top["timing"],
            {
                "rep_rate": 100.0,
                "duty_window_ms": 1.3,
                "cycles_per_duty": 2600,
                "cycle_period_ns": 500.0,
                "pump1_fwhm_ns": 20.0,
                "fiber_delay_ns": 1000.0,
                "storage_time_ns": 100.0,
            },
            "timing",
        )
    )
    correlations = CorrelationConstants(
        **_take(
            top["correlations"],
            {
                "pair_correlated": True,
                "g2_autocorr_s1": 1.2,
                "g2_autocorr_s2_pre": 1.38,
                "g2_autocorr_s2_post": 2.0,
                "g2_channel_background": 0.0,
            },
            "correlations",
        )
    )
    plan_d = _take(
        top["settings"],
        {
            "chsh_angles": list(MeasurementPlan().chsh_angles),
            "visibility_thetas": list(MeasurementPlan().visibility_thetas),
            "visibility_arm1": "A",
            "acquisition_s": dict(MeasurementPlan().acquisition_s),
            "n_resamples": 200,
            "error_bars": True,
        },
        "settings",
    )
    plan = MeasurementPlan(
        chsh_angles=tuple(plan_d["chsh_angles"]),
        visibility_thetas=tuple(plan_d["visibility_thetas"]),
        visibility_arm1=plan_d["visibility_arm1"],
        acquisition_s=dict(plan_d["acquisition_s"]),
        n_resamples=int(plan_d["n_resamples"]),
        error_bars=bool(plan_d["error_bars"]),
    )

    return Scenario(
        source=source,
        eit=eit,
        decay=decay,
        mem_noise=mem_noise,
        losses=losses,
        detector1=detector1,
        detector2=detector2,
        timing=timing,
        correlations=correlations,
        plan=plan,
        attenuator=attenuator,
        tan2_eta_anchors=anchors,
        master_seed=int(top["master_seed"]),
        notes=tuple(top["notes"]),
    )


def scenario_to_dict(s: Scenario) -> dict:
    grid = s.eit.probe_detuning_grid
    return {
        "schema_version": SCHEMA_VERSION,
        "master_seed": s.master_seed,
        "notes": list(s.notes),
        "source": {
            "eta_f": s.source.eta_f,
            "phi_f": s.source.phi_f,
            "two_photon_detuning": s.source.two_photon_detuning,
            "tan2_eta_anchors": [list(a) for a in s.tan2_eta_anchors],
            "p_white": s.source.p_white,
            "pair_prob": s.source.pair_prob,
            "s2_spectral_fwhm": s.source.s2_spectral_fwhm,
            "s2_temporal_fwhm": s.source.s2_temporal_fwhm,
            "s1_temporal_fwhm": s.source.s1_temporal_fwhm,
        },
        "attenuator": (
            "auto"
            if s.attenuator is None
            else {"t_h": s.attenuator.t_h, "balanced": s.attenuator.balanced}
        ),
        "eit": {
            "optical_depth": s.eit.optical_depth,
            "rabi_coupling": s.eit.rabi_coupling,
            "gamma_e": s.eit.gamma_e,
            "gamma_g": s.eit.gamma_g,
            "probe_grid_mhz": [float(grid[0]), float(grid[-1]), int(grid.size)],
        },
        "decay": {
            "model": s.decay.model,
            "tau_mem": s.decay.tau_mem,
            "eta_peak": s.decay.eta_peak,
        },
        "mem_noise": {
            "p_depol": s.mem_noise.p_depol,
            "background_flux": s.mem_noise.background_flux,
        },
        "losses": {
            "s2_path": s.losses.s2_path,
            "s1_fiber_coupling": s.losses.s1_fiber_coupling,
            "s1_detector_coupling": s.losses.s1_detector_coupling,
            "s1_filters": s.losses.s1_filters,
            "s2_filters": s.losses.s2_filters,
        },
        "detectors": {
            "d1": {
                "efficiency": s.detector1.efficiency,
                "dark_rate": s.detector1.dark_rate,
                "dead_time": s.detector1.dead_time,
                "gate_width": s.detector1.gate_width,
            },
            "d2": {
                "efficiency": s.detector2.efficiency,
                "dark_rate": s.detector2.dark_rate,
                "dead_time": s.detector2.dead_time,
                "gate_width": s.detector2.gate_width,
            },
        },
        "timing": {
            "rep_rate": s.timing.rep_rate,
            "duty_window_ms": s.timing.duty_window_ms,
            "cycles_per_duty": s.timing.cycles_per_duty,
            "cycle_period_ns": s.timing.cycle_period_ns,
            "pump1_fwhm_ns": s.timing.pump1_fwhm_ns,
            "fiber_delay_ns": s.timing.fiber_delay_ns,
            "storage_time_ns": s.timing.storage_time_ns,
        },
        "correlations": {
            "pair_correlated": s.correlations.pair_correlated,
            "g2_autocorr_s1": s.correlations.g2_autocorr_s1,
            "g2_autocorr_s2_pre": s.correlations.g2_autocorr_s2_pre,
            "g2_autocorr_s2_post": s.correlations.g2_autocorr_s2_post,
            "g2_channel_background": s.correlations.g2_channel_background,
        },
        "settings": {
            "chsh_angles": list(s.plan.chsh_angles),
            "visibility_thetas": list(s.plan.visibility_thetas),
            "visibility_arm1": s.plan.visibility_arm1,
            "acquisition_s": dict(s.plan.acquisition_s),
            "n_resamples": s.plan.n_resamples,
            "error_bars": s.plan.error_bars,
        },
    }


def load_scenario(path: str | Path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=True) + "\n")


def bundled_scenario_path(name: str = "baseline") -> Path:
    return Path(__file__).parent / "scenarios" / f"{name}.json"


def load_bundled_scenario(name: str = "baseline") -> Scenario:
    return load_scenario(bundled_scenario_path(name))
