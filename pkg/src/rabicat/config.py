"""Run configuration: sectioned key=value files with shipped presets.

A config file has a ``[run]`` section naming the experiment and an
optional preset, a ``[model]`` section and one section named after the
experiment. Missing keys come from the preset (``desk`` unless stated);
unknown keys and out-of-range values are rejected with the key path.
"""

import configparser
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ParseError, ValidationError

EXPERIMENTS = ("toy", "phase-diagram", "density", "contour", "ebk", "flow", "transient",
               "crossing", "quench", "thermo", "gs-indicators")
PRESETS = ("desk", "paper")

RUN_KEYS = {"experiment": str, "preset": str, "output_dir": str, "cache_dir": str,
            "precision_bits": int, "jobs": int}
MODEL_KEYS = {"omega": float, "omega0": float, "alpha": float}

FLOAT, INT, STR, FLOATS = float, int, str, "floats"

SCHEMA = {
    "toy": {"b": FLOATS, "c": FLOAT},
    "phase-diagram": {"g_min_over_gstar": FLOAT, "g_max_over_gstar": FLOAT, "n_g": INT},
    "density": {"g_over_gstar": FLOATS, "eps_min": FLOAT, "eps_max": FLOAT, "n_eps": INT,
                "scan_step": FLOAT},
    "contour": {"g_over_gstar": FLOAT, "eps": FLOATS, "n_grid": INT},
    "ebk": {"g_min_over_gstar": FLOAT, "g_max_over_gstar": FLOAT, "n_g": INT, "n_ph": INT,
            "eps_margin": FLOAT, "tolerance": FLOAT},
    "flow": {"g_min_over_gstar": FLOAT, "g_max_over_gstar": FLOAT, "n_g": INT, "n_ph": INT,
             "eps_min": FLOAT, "eps_max": FLOAT},
    "transient": {"omega0_values": FLOATS, "n_ph_per_omega0": FLOAT, "g_min_over_gstar": FLOAT,
                  "g_max_over_gstar": FLOAT, "n_g": INT, "eps_anchor": FLOAT},
    "crossing": {"omega0_values": FLOATS, "n_ph_per_omega0": FLOAT, "eps_anchors": FLOATS,
                 "window_lo_over_gstar": FLOATS, "window_hi_over_gstar": FLOATS, "n_scan": INT,
                 "lz_omega0": FLOAT, "lz_p_nd": FLOAT},
    "quench": {"g_ini_over_gstar": FLOAT, "g_fin_over_gstar": FLOAT, "delta_g": FLOAT,
               "tau": FLOAT, "n_ph": INT, "snapshots": FLOATS, "eps_cut": FLOAT},
    "thermo": {"source": STR, "half_window": INT, "half_window_mod": INT,
               "smoothing_spacings": FLOAT},
    "gs-indicators": {"g_min": FLOAT, "g_max": FLOAT, "n_g": INT, "n_ph": INT},
}


@dataclass
class RunConfig:
    experiment: str
    preset: str
    model: dict
    params: dict
    output_dir: str = "results"
    cache_dir: str = None
    precision_bits: int = 256
    jobs: int = 1
    extra: dict = field(default_factory=dict)

    def canonical(self):
        """Everything that affects results, as plain JSON-ready data."""
        return {"experiment": self.experiment, "model": self.model, "params": self.params,
                "precision_bits": self.precision_bits}

    def hash(self):
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _convert(kind, key, raw):
    try:
        if kind == FLOATS:
            vals = [float(x) for x in str(raw).replace(";", ",").split(",") if x.strip()]
            if not vals:
                raise ValueError("empty list")
            return vals
        if kind is int:
            f = float(raw)
            if f != int(f):
                raise ValueError("not an integer")
            return int(f)
        if kind is float:
            return float(raw)
        return str(raw).strip()
    except (TypeError, ValueError) as exc:
        raise ValidationError(key, f"cannot read {raw!r}: {exc}") from None


def preset_path(experiment, preset):
    name = f"{experiment.replace('-', '_')}_{preset}.cfg"
    return resources.files("rabicat").joinpath("presets").joinpath(name)


def _read(text, source):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ParseError(f"{source}: {exc}") from None
    return {s: dict(cp[s]) for s in cp.sections()}


def _preset_sections(experiment, preset):
    path = preset_path(experiment, preset)
    if not path.is_file():
        raise ValidationError("run.preset", f"no {preset!r} preset for {experiment!r}")
    return _read(path.read_text(), str(path))


def from_sections(sections, overrides=None):
    """Merge user sections over the preset, convert types and validate."""
    user = {s: dict(v) for s, v in sections.items()}
    for key, val in (overrides or {}).items():
        sec, _, k = key.rpartition(".")
        user.setdefault(sec or "run", {})[k] = val
    run = user.get("run", {})
    exp = run.get("experiment")
    if exp is None:
        raise ValidationError("run.experiment", "missing")
    if exp not in EXPERIMENTS:
        raise ValidationError("run.experiment", f"unknown experiment {exp!r}")
    preset = run.get("preset", "desk")
    if preset not in PRESETS:
        raise ValidationError("run.preset", f"expected one of {PRESETS}")
    base = _preset_sections(exp, preset)
    allowed = {"run": RUN_KEYS, "model": MODEL_KEYS, exp: SCHEMA[exp]}
    for sec, vals in user.items():
        if sec not in allowed:
            raise ValidationError(sec, "unknown section")
        for k in vals:
            if k not in allowed[sec]:
                raise ValidationError(f"{sec}.{k}", "unknown key")
    merged = {s: {**base.get(s, {}), **user.get(s, {})} for s in allowed}
    typed = {s: {k: _convert(allowed[s][k], f"{s}.{k}", v) for k, v in merged[s].items()}
             for s in allowed}
    cfg = RunConfig(
        experiment=exp, preset=preset, model=typed["model"], params=typed[exp],
        output_dir=typed["run"].get("output_dir", "results"),
        cache_dir=typed["run"].get("cache_dir") or None,
        precision_bits=typed["run"].get("precision_bits", 256),
        jobs=typed["run"].get("jobs", 1))
    validate(cfg)
    return cfg


def load_config(path, overrides=None):
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"config file {path} does not exist")
    return from_sections(_read(path.read_text(), str(path)), overrides)


def preset_config(experiment, preset="desk", overrides=None):
    return from_sections({"run": {"experiment": experiment, "preset": preset}}, overrides)


def _require(ok, key, message):
    if not ok:
        raise ValidationError(key, message)


def validate(cfg):
    m, p = cfg.model, cfg.params
    for key in ("omega", "omega0"):
        if key in m:
            _require(math.isfinite(m[key]) and m[key] > 0, f"model.{key}", "must be > 0")
    if "alpha" in m:
        _require(math.isfinite(m["alpha"]) and m["alpha"] >= 0, "model.alpha", "must be finite and >= 0")
    _require(cfg.precision_bits >= 128 or cfg.experiment != "crossing", "run.precision_bits",
             "must be >= 128 for extended precision")
    _require(cfg.jobs >= 1, "run.jobs", "must be >= 1")
    for key, val in p.items():
        path = f"{cfg.experiment}.{key}"
        vals = val if isinstance(val, list) else [val]
        if key.startswith("n_") and key != "n_ph_per_omega0":
            _require(all(v >= 1 for v in vals), path, "must be >= 1")
        if key in ("n_ph",):
            _require(val >= 2, path, "must be >= 2")
        if key in ("delta_g", "n_ph_per_omega0", "scan_step", "tolerance", "smoothing_spacings"):
            _require(all(v > 0 for v in vals), path, "must be > 0")
        if key in ("tau", "eps_margin"):
            _require(all(v >= 0 for v in vals), path, "must be >= 0")
        if key == "omega0_values":
            _require(all(v > 0 for v in vals), path, "must be > 0")
        if key == "lz_p_nd":
            _require(0 < val < 1, path, "must lie in (0, 1)")
        if key.endswith("over_gstar") or key in ("g_min", "g_max"):
            _require(all(math.isfinite(v) and v >= 0 for v in vals), path, "must be >= 0")
        if isinstance(val, float):
            _require(math.isfinite(val), path, "must be finite")
    for lo, hi in (("g_min_over_gstar", "g_max_over_gstar"), ("g_min", "g_max"), ("eps_min", "eps_max")):
        if lo in p and hi in p:
            _require(p[lo] < p[hi], f"{cfg.experiment}.{hi}", f"must exceed {lo}")
    if cfg.experiment == "quench":
        _require(min(p["snapshots"]) >= p["g_fin_over_gstar"] - 1e-12, "quench.snapshots",
                 "must not lie below g_fin_over_gstar")
    if cfg.experiment == "crossing":
        n = len(p["eps_anchors"])
        _require(len(p["window_lo_over_gstar"]) == n and len(p["window_hi_over_gstar"]) == n,
                 "crossing.eps_anchors", "needs one window per anchor")
        _require(len(p["omega0_values"]) >= 4, "crossing.omega0_values", "needs at least 4 values")
    if cfg.experiment == "transient":
        _require(len(p["omega0_values"]) >= 2, "transient.omega0_values", "needs at least 2 values")
