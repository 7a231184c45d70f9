"""Scenario files (JSON or TOML) into an :class:`ExperimentSpec`.

Layout::

    [experiment]   snr_grid_db, baseline_counts, n_trials, seed, algorithms,
                   n_snapshots, height_range_m, range_gate_m, spectra_targets
    [scene]        Scene fields; targets = [{position_m, rcs_m2, reflection_coefficient}]
    [waveform]     WaveformConfig fields, plus ssb_mask = true | {n_active_subcarriers, ...}
    [detector]     DetectorSettings fields
    [classifier]   ClassifierConfig fields
    [elevation]    ElevationConfig fields
    [radar]        RadarRequirements fields; fills waveform.scs_hz and scene.pri_s when absent

Every section is optional. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import tomli

from .bench import ExperimentSpec, default_scene, default_waveform, plan_frame
from .nr_frame import InfeasibleError, RadarRequirements
from .path_classify import ClassifierConfig
from .pipeline import DetectorSettings
from .scene_sim import Scene, Target, WaveformConfig
from .tomo_fusion import ElevationConfig


class ConfigError(ValueError):
    pass


SECTIONS = ("experiment", "scene", "waveform", "detector", "classifier", "elevation", "radar")


def load_config_file(path) -> dict:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        if p.suffix.lower() == ".toml":
            return tomli.loads(raw.decode("utf-8"))
        return json.loads(raw.decode("utf-8"))
    except (tomli.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc


def _check_keys(name: str, block: dict, allowed) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"[{name}] must be a table")
    extra = set(block) - set(allowed)
    if extra:
        raise ConfigError(f"[{name}] unknown keys: {sorted(extra)}")


def _fields(cls) -> list[str]:
    return [f.name for f in dataclasses.fields(cls)]


def _complex(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError("complex values are [re, im]")
        return complex(value[0], value[1])
    return complex(value)


def _target(block: dict) -> Target:
    _check_keys("scene.targets", block, _fields(Target))
    return Target(
        position_m=tuple(block["position_m"]),
        rcs_m2=float(block.get("rcs_m2", 1.0)),
        reflection_coefficient=_complex(block.get("reflection_coefficient")),
    )


def _waveform(block: dict, scs_from_plan: float | None) -> WaveformConfig:
    base = default_waveform()
    allowed = [f for f in _fields(WaveformConfig) if f != "mask"] + ["ssb_mask"]
    _check_keys("waveform", block, allowed)
    kw = {f: block.get(f, getattr(base, f)) for f in allowed if f not in ("ssb_mask",)}
    if "scs_hz" not in block and scs_from_plan is not None:
        kw["scs_hz"] = scs_from_plan
    wf = WaveformConfig(**kw)
    ssb = block.get("ssb_mask", False)
    if ssb is True:
        wf = wf.with_ssb_mask()
    elif isinstance(ssb, dict):
        _check_keys("waveform.ssb_mask", ssb, ("n_active_subcarriers", "burst_symbols", "burst_period"))
        wf = wf.with_ssb_mask(**ssb)
    elif ssb is not False:
        raise ConfigError("waveform.ssb_mask must be a boolean or a table")
    return wf


def _scene(block: dict, pri_from_plan: float | None) -> Scene:
    base = default_scene()
    allowed = _fields(Scene)
    _check_keys("scene", block, allowed)
    kw = {f: block.get(f, getattr(base, f)) for f in allowed}
    if "targets" in block:
        kw["targets"] = tuple(_target(t) for t in block["targets"])
    if "pri_s" not in block and pri_from_plan is not None:
        kw["pri_s"] = pri_from_plan
    return Scene(**kw)


def _simple(cls, name: str, block: dict):
    _check_keys(name, block, _fields(cls))
    return cls(**block)


def spec_from_dict(cfg: dict, overrides: dict | None = None) -> ExperimentSpec:
    """Build a spec; ``overrides`` replaces ``[experiment]`` keys (CLI flags)."""
    try:
        _check_keys("config", cfg, SECTIONS)
        radar = plan = None
        if "radar" in cfg:
            radar = _simple(RadarRequirements, "radar", cfg["radar"])
            plan = plan_frame(radar)
        wf = _waveform(cfg.get("waveform", {}), plan.scs_hz if plan else None)
        scene = _scene(cfg.get("scene", {}), plan.pri_s if plan else None)
        exp = dict(cfg.get("experiment", {}))
        exp.update({k: v for k, v in (overrides or {}).items() if v is not None})
        allowed = [f for f in _fields(ExperimentSpec) if f not in ("scene", "waveform", "detector", "classifier", "elevation", "radar")]
        _check_keys("experiment", exp, allowed)
        if "height_range_m" in exp and exp["height_range_m"] is not None:
            exp["height_range_m"] = tuple(exp["height_range_m"])
        return ExperimentSpec(
            scene=scene,
            waveform=wf,
            detector=_simple(DetectorSettings, "detector", cfg.get("detector", {})),
            classifier=_simple(ClassifierConfig, "classifier", cfg.get("classifier", {})),
            elevation=_simple(ElevationConfig, "elevation", cfg.get("elevation", {})),
            radar=radar,
            **exp,
        )
    except (ConfigError, InfeasibleError):
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_spec(path=None, overrides: dict | None = None) -> ExperimentSpec:
    cfg = load_config_file(path) if path else {}
    return spec_from_dict(cfg, overrides)


def radar_from_dict(block: dict) -> RadarRequirements:
    try:
        return _simple(RadarRequirements, "radar", block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
