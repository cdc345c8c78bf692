"""Experiment configuration files.

Configs are INI-style files read with :mod:`configparser`::

    [run]
    label = d1
    seed = 20240101

    [model]
    name = sir
    npop = 120
    x0 = 119, 1
    beta = 0.00091
    gamma = 0.082

    [obs]
    kind = binomial
    target = infections
    lambda = 0.8

    [priors]
    beta = gamma(10, 1e4)
    gamma = gamma(10, 100)
    lam = uniform(0, 1)

    [inference]
    scheme = ffmh
    iterations = 10000

    [simulate]
    t_end = 80
    grid = 10

Exactly one of ``[data]`` (``path = ...``, resolved relative to the config
file) and ``[simulate]`` must be present.  Model values of free parameters
are only used as truth when simulating; the prior centre fills them in when
absent.
"""
import configparser
import json
import os
from dataclasses import asdict, dataclass, field
from importlib import resources
from io import StringIO
from typing import Optional

import numpy as np

from .exceptions import ConfigError, InvalidInputError
from .inference.mcmc import SCHEMES, ChainSettings
from .inference.priors import FREE_PARAMETERS, OBS_FIELDS, PriorSpec, parse_prior
from .lna import DEFAULT_STEPS
from .models import MODEL_NAMES, Params, get_model
from .observation import KINDS, TARGETS, ObsParams

__all__ = [
    "ExperimentConfig",
    "load_config",
    "parse_config_text",
    "preset_path",
    "PRESETS",
    "read_data",
    "write_data",
]

PRESETS = ("d1", "d2", "d3", "opm-sir-bin", "opm-sir-negbin", "opm-sirs-bin", "opm-sirs-negbin")

_SECTIONS = {
    "run": {"label", "seed", "out"},
    "model": {"name", "npop", "x0", "beta", "gamma", "kappa", "sigma_beta", "log_beta0"},
    "obs": {"kind", "target", "lambda", "sigma2", "phi"},
    "priors": set(FREE_PARAMETERS),
    "inference": {"scheme", "iterations", "particles", "rho", "pilot_fraction", "rk4_steps",
                  "interval", "target_accept", "sample_paths", "path_thin", "propagation"},
    "data": {"path", "unit"},
    "simulate": {"t_end", "grid", "substep"},
}


@dataclass
class ExperimentConfig:
    """Fully resolved experiment description."""

    model: str
    npop: int
    x0: tuple
    obs_kind: str
    obs_target: str = "infections"
    gamma: Optional[float] = None
    beta: Optional[float] = None
    kappa: Optional[float] = None
    sigma_beta: Optional[float] = None
    log_beta0: Optional[float] = None
    lam: Optional[float] = None
    sigma2: Optional[float] = None
    phi: Optional[float] = None
    priors: dict = field(default_factory=dict)
    scheme: str = "ffmh"
    iterations: int = 10_000
    n_particles: Optional[int] = None
    rho: Optional[float] = None
    pilot_fraction: float = 0.1
    n_steps: int = DEFAULT_STEPS
    interval: float = 1.0
    target_accept: Optional[float] = None
    sample_paths: bool = False
    path_thin: int = 10
    propagation: str = "lna"
    data_path: Optional[str] = None
    unit: str = "time"
    t_end: Optional[float] = None
    grid: Optional[float] = None
    substep: float = 0.01
    label: str = "run"
    seed: int = 0
    out: Optional[str] = None
    source: Optional[str] = None

    # ------------------------------------------------------------------ build
    def get_model(self):
        return get_model(self.model, self.npop)

    def obs_params(self, fill=True):
        vals = {"lam": self.lam, "sigma2": self.sigma2, "phi": self.phi}
        if fill:
            for name in OBS_FIELDS:
                if vals[name] is None and name in self.priors:
                    vals[name] = parse_prior(self.priors[name]).center()
        need = {"gaussian": ("sigma2",), "binomial": ("lam",), "negbinomial": ("lam", "phi")}
        kw = {k: vals[k] for k in need[self.obs_kind]}
        return ObsParams(self.obs_kind, target=self.obs_target, **kw)

    def params(self, fill=True):
        """Model parameters; free values missing from ``[model]`` take the prior centre."""
        vals = {k: getattr(self, k) for k in ("beta", "gamma", "kappa", "sigma_beta")}
        for name, v in vals.items():
            if v is None:
                if fill and name in self.priors:
                    vals[name] = parse_prior(self.priors[name]).center()
                else:
                    vals[name] = 0.0
        return Params(x0=tuple(self.x0), log_beta0=self.log_beta0,
                      obs=self.obs_params(fill), **vals)

    def settings(self, seed=None):
        return ChainSettings(
            iterations=self.iterations,
            n_particles=self.n_particles,
            rho=self.rho,
            pilot_fraction=self.pilot_fraction,
            n_steps=self.n_steps,
            interval=self.interval,
            seed=self.seed if seed is None else seed,
            target_accept=self.target_accept,
            sample_paths=self.sample_paths,
            path_thin=self.path_thin,
            propagation=self.propagation,
        )

    def prior_spec(self):
        return PriorSpec({k: parse_prior(v) for k, v in self.priors.items()})

    def to_dict(self):
        d = asdict(self)
        d["x0"] = list(self.x0)
        return d

    def to_text(self):
        """Equivalent config file text (data paths made absolute)."""
        cp = configparser.ConfigParser(interpolation=None)
        cp["run"] = _clean({"label": self.label, "seed": self.seed, "out": self.out})
        cp["model"] = _clean({
            "name": self.model, "npop": self.npop, "x0": ", ".join(_fmt(v) for v in self.x0),
            "beta": self.beta, "gamma": self.gamma, "kappa": self.kappa,
            "sigma_beta": self.sigma_beta, "log_beta0": self.log_beta0})
        cp["obs"] = _clean({"kind": self.obs_kind, "target": self.obs_target,
                            "lambda": self.lam, "sigma2": self.sigma2, "phi": self.phi})
        cp["priors"] = dict(self.priors)
        cp["inference"] = _clean({
            "scheme": self.scheme, "iterations": self.iterations,
            "particles": self.n_particles, "rho": self.rho,
            "pilot_fraction": self.pilot_fraction, "rk4_steps": self.n_steps,
            "interval": self.interval, "target_accept": self.target_accept,
            "sample_paths": "yes" if self.sample_paths else "no",
            "path_thin": self.path_thin, "propagation": self.propagation})
        if self.data_path is not None:
            cp["data"] = {"path": os.path.abspath(self.data_path), "unit": self.unit}
        else:
            cp["simulate"] = _clean({"t_end": self.t_end, "grid": self.grid,
                                     "substep": self.substep})
        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _clean(d):
    return {k: _fmt(v) for k, v in d.items() if v is not None}


def _line_numbers(text):
    """Map ``(section, key)`` to its 1-based line in ``text``."""
    out = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            out[(section, None)] = no
        elif section and line and line[0] not in "#;" and ("=" in line or ":" in line):
            key = line.split("=", 1)[0].split(":", 1)[0].strip().lower()
            out[(section, key)] = no
    return out


class _Reader:
    def __init__(self, cp, lines, source):
        self.cp, self.lines, self.source = cp, lines, source

    def error(self, section, key, message):
        no = self.lines.get((section, key)) or self.lines.get((section, None))
        where = f"{self.source}:{no}" if no else self.source
        label = f"[{section}] {key}" if key else f"[{section}]"
        return ConfigError(f"{where}: {label}: {message}")

    def has(self, section, key):
        return self.cp.has_option(section, key)

    def get(self, section, key, conv=str, default=None, required=False):
        if not self.cp.has_option(section, key):
            if required:
                raise self.error(section, None, f"missing required key {key!r}")
            return default
        raw = self.cp.get(section, key).strip()
        try:
            return conv(raw)
        except (ValueError, InvalidInputError) as exc:
            raise self.error(section, key, f"invalid value {raw!r} ({exc})") from None


def _int(raw):
    v = float(raw)
    if v != int(v):
        raise ValueError("expected an integer")
    return int(v)


def _bool(raw):
    low = raw.lower()
    if low in ("1", "yes", "true", "on"):
        return True
    if low in ("0", "no", "false", "off"):
        return False
    raise ValueError("expected yes/no")


def _pair(raw):
    parts = [float(p) for p in raw.replace(";", ",").split(",")]
    if len(parts) != 2:
        raise ValueError("expected two comma-separated numbers")
    return tuple(int(p) if p == int(p) else p for p in parts)


def parse_config_text(text, source="<config>", base_dir="."):
    """Parse config text into a validated :class:`ExperimentConfig`."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    r = _Reader(cp, _line_numbers(text), source)
    for section in cp.sections():
        if section not in _SECTIONS:
            raise r.error(section, None, f"unknown section; expected one of {sorted(_SECTIONS)}")
        for key in cp[section]:
            if key not in _SECTIONS[section]:
                raise r.error(section, key, "unknown key")
    for section in ("model", "obs", "inference"):
        if not cp.has_section(section):
            raise ConfigError(f"{source}: missing section [{section}]")

    name = r.get("model", "name", required=True)
    if name not in MODEL_NAMES:
        raise r.error("model", "name", f"unknown model {name!r}; choose from {MODEL_NAMES}")
    kw = dict(
        model=name,
        npop=r.get("model", "npop", _int, required=True),
        x0=r.get("model", "x0", _pair, required=True),
        beta=r.get("model", "beta", float),
        gamma=r.get("model", "gamma", float),
        kappa=r.get("model", "kappa", float),
        sigma_beta=r.get("model", "sigma_beta", float),
        log_beta0=r.get("model", "log_beta0", float),
        obs_kind=r.get("obs", "kind", required=True),
        obs_target=r.get("obs", "target", default="infections"),
        lam=r.get("obs", "lambda", float),
        sigma2=r.get("obs", "sigma2", float),
        phi=r.get("obs", "phi", float),
        scheme=r.get("inference", "scheme", required=True),
        iterations=r.get("inference", "iterations", _int, default=10_000),
        n_particles=r.get("inference", "particles", _int),
        rho=r.get("inference", "rho", float),
        pilot_fraction=r.get("inference", "pilot_fraction", float, default=0.1),
        n_steps=r.get("inference", "rk4_steps", _int, default=DEFAULT_STEPS),
        interval=r.get("inference", "interval", float, default=1.0),
        target_accept=r.get("inference", "target_accept", float),
        sample_paths=r.get("inference", "sample_paths", _bool, default=False),
        path_thin=r.get("inference", "path_thin", _int, default=10),
        propagation=r.get("inference", "propagation", default="lna"),
        label=r.get("run", "label", default=os.path.splitext(os.path.basename(source))[0]),
        seed=r.get("run", "seed", _int, default=0),
        out=r.get("run", "out"),
        source=source,
    )
    priors = {}
    if cp.has_section("priors"):
        for key in cp["priors"]:
            r.get("priors", key, parse_prior)
            priors[key] = cp.get("priors", key).strip()
    kw["priors"] = priors

    if kw["obs_kind"] not in KINDS:
        raise r.error("obs", "kind", f"unknown observation model; choose from {KINDS}")
    if kw["obs_target"] not in TARGETS:
        raise r.error("obs", "target", f"choose from {TARGETS}")
    if kw["scheme"] not in SCHEMES:
        raise r.error("inference", "scheme", f"choose from {SCHEMES}")
    if kw["scheme"] in ("pmmh", "cpmmh"):
        if kw["n_particles"] is None or kw["n_particles"] < 1:
            raise r.error("inference", "particles", f"{kw['scheme']} needs particles >= 1")
    elif kw["n_particles"] is not None:
        raise r.error("inference", "particles", "only pmmh/cpmmh use particles")
    if kw["scheme"] == "cpmmh":
        if kw["rho"] is None or not 0 <= kw["rho"] <= 1:
            raise r.error("inference", "rho", "cpmmh needs rho in [0, 1]")
    elif kw["rho"] is not None:
        raise r.error("inference", "rho", "rho is only used by cpmmh")
    if kw["iterations"] < 0:
        raise r.error("inference", "iterations", "must be >= 0")
    if kw["n_steps"] < 1:
        raise r.error("inference", "rk4_steps", "must be >= 1")
    if not kw["interval"] > 0:
        raise r.error("inference", "interval", "must be positive")
    if not 0 <= kw["pilot_fraction"] < 1:
        raise r.error("inference", "pilot_fraction", "must lie in [0, 1)")
    if kw["propagation"] not in ("lna", "mjp"):
        raise r.error("inference", "propagation", "choose lna or mjp")
    if kw["npop"] < 1:
        raise r.error("model", "npop", "must be positive")

    model = get_model(name, kw["npop"])
    if model.tv_beta:
        if kw["log_beta0"] is None:
            raise r.error("model", "log_beta0", "time-varying models need log_beta0")
        if "beta" in priors:
            raise r.error("priors", "beta", "time-varying models have no constant beta")
    if not model.has_kappa and (kw["kappa"] or "kappa" in priors):
        raise r.error("model", "kappa", f"model {name!r} has no immunity-loss rate")
    if not model.tv_beta and (kw["sigma_beta"] or "sigma_beta" in priors):
        raise r.error("model", "sigma_beta", f"model {name!r} has a constant infection rate")

    has_data, has_sim = cp.has_section("data"), cp.has_section("simulate")
    if has_data == has_sim:
        raise ConfigError(f"{source}: exactly one of [data] and [simulate] is required")
    if has_data:
        path = r.get("data", "path", required=True)
        path = path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))
        if not os.path.isfile(path):
            raise r.error("data", "path", f"file not found: {path}")
        kw["data_path"] = path
        kw["unit"] = r.get("data", "unit", default="time")
    else:
        kw["t_end"] = r.get("simulate", "t_end", float, required=True)
        kw["grid"] = r.get("simulate", "grid", float, required=True)
        kw["substep"] = r.get("simulate", "substep", float, default=0.01)
        if not (kw["t_end"] > 0 and kw["grid"] > 0):
            raise r.error("simulate", "grid", "t_end and grid must be positive")
        n = kw["t_end"] / kw["grid"]
        if abs(n - round(n)) > 1e-9:
            raise r.error("simulate", "grid", "grid must divide t_end")
        if kw["grid"] != kw["interval"] and cp.has_option("inference", "interval"):
            raise r.error("inference", "interval", "must equal the simulation grid")
        kw["interval"] = kw["grid"]
        for key in ("beta", "gamma") if not model.tv_beta else ("gamma",):
            if kw[key] is None:
                raise r.error("model", None, f"simulation needs a value for {key}")

    cfg = ExperimentConfig(**kw)
    # free parameters on the observation side need a base value to exist
    try:
        cfg.params()
    except InvalidInputError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def preset_path(name):
    """Path of a bundled preset config."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    return str(resources.files("lnaepi") / "configs" / f"{name}.cfg")


def load_config(path_or_preset):
    """Load a config file, a preset name, or a run manifest (``.json``)."""
    target = path_or_preset
    if not os.path.exists(target) and target in PRESETS:
        target = preset_path(target)
    if not os.path.isfile(target):
        raise ConfigError(f"config not found: {path_or_preset}")
    with open(target) as fh:
        text = fh.read()
    if target.endswith(".json"):
        try:
            manifest = json.loads(text)
            text = manifest["config_text"]
        except (ValueError, KeyError):
            raise ConfigError(f"{target}: not a run manifest") from None
    return parse_config_text(text, source=target, base_dir=os.path.dirname(os.path.abspath(target)))


def read_data(path):
    """Read a ``t,y`` CSV; returns ``(t, y)`` arrays."""
    try:
        arr = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{path}: cannot read data ({exc})") from None
    if arr.dtype.names is None or tuple(arr.dtype.names[:2]) != ("t", "y"):
        raise ConfigError(f"{path}: expected header 't,y'")
    t, y = np.atleast_1d(arr["t"]), np.atleast_1d(arr["y"])
    if t.size == 0 or not np.all(np.isfinite(y)):
        raise ConfigError(f"{path}: data must be non-empty and finite")
    if np.any(np.diff(t) <= 0):
        raise ConfigError(f"{path}: times must increase")
    steps = np.diff(np.concatenate([[0.0], t]))
    if not np.allclose(steps, steps[0]):
        raise ConfigError(f"{path}: observations must be equally spaced from t=0")
    return t, y


def write_data(path, t, y):
    with open(path, "w") as fh:
        fh.write("t,y\n")
        for ti, yi in zip(t, y):
            fh.write(f"{_fmt(float(ti))},{_fmt(float(yi))}\n")

