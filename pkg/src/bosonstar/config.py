"""Run configuration: JSON sections with per-command defaults and dotted overrides."""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path

from .errors import ConfigurationError

LAMBDA_CRIT = -4 / math.pi

COMMANDS = (
    "evolve",
    "ground-state",
    "collapse-scan",
    "lambda-crit",
    "nbody-compare",
    "bbgky-residual",
    "cutoff-epsilon",
    "cutoff-kappa",
    "apriori",
    "ineq",
)

#: commands whose coupling must stay above the critical value unless overridden
GUARDED = {"evolve", "ground-state", "nbody-compare", "bbgky-residual", "cutoff-epsilon", "apriori"}

DEFAULTS = {
    "grid": {"n": 32, "L": 16.0},
    "physics": {"lambda": -1.0, "kernel": "exact", "epsilon": 0.5, "kappa": 0.0, "N": 4},
    "initial": {"sigma": 1.0, "momentum": [0.0, 0.0, 0.0]},
    "integrator": {"dt": 1e-3, "T": 1.0, "sample_every": 10, "energy_tol": 1e-5, "norm_tol": 1e-10},
    "solver": {"tau": 0.1, "tol": 1e-9, "max_iter": 50000, "ascent_iters": 300, "restarts": 5},
    "scan": {"lambdas": [-1.0, -1.2, -1.4, -1.6], "mus": [0.25, 0.35, 0.5, 0.7, 1.0, 1.4, 2.0]},
    "fock": {
        "radius": 1,
        "L": 2 * math.pi,
        "modes": None,
        "amplitudes": None,
        "N_list": [2, 4, 8, 16],
        "t": 1.0,
        "dt": 1e-3,
        "krylov_dt": 0.05,
        "hierarchy": "finite",
        "residual_tol": 1e-4,
    },
    "cutoff": {"epsilons": [0.5, 0.25, 0.125, 0.0625], "kappas": [0.1, 1.0, 10.0], "N_list": [1, 10, 100], "fields": 100, "rate": 0.25},
    "ineq": {"mode": "herbst", "samples": 1000, "a": 1.0, "alpha": 1.0, "beta": 1.0, "n": 16, "refine_n": 24},
    "output": {"dir": "out", "fields": False, "plots": True},
    "seed": 0,
}

COMMAND_DEFAULTS = {
    "ground-state": {"grid": {"L": 32.0}},
    "lambda-crit": {"grid": {"n": 64}},
    "bbgky-residual": {"physics": {"N": 2}, "fock": {"modes": [[0, 0, 0], [1, 0, 0]], "t": 0.1}},
    "cutoff-kappa": {"grid": {"n": 16}},
    "apriori": {"physics": {"N": 8, "kappa": 1.0}},
    "ineq": {"ineq": {"samples": 1000}},
}

_CHOICES = {
    ("physics", "kernel"): ("exact", "regularized"),
    ("fock", "hierarchy"): ("finite", "infinite"),
    ("ineq", "mode"): ("herbst", "mixed"),
}


def _merge(base: dict, extra: dict, path=""):
    for key, val in extra.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigurationError("unknown key", key=where)
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigurationError("expected a section object", key=where)
            _merge(base[key], val, where + ".")
        else:
            base[key] = val


def _set_dotted(cfg: dict, dotted: str, raw: str):
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigurationError("unknown key", key=dotted)
        node = node[p]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigurationError("unknown key", key=dotted)
    try:
        node[parts[-1]] = json.loads(raw)
    except json.JSONDecodeError:
        node[parts[-1]] = raw


def _require(cond, key, message):
    if not cond:
        raise ConfigurationError(message, key=key)


def _number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def validate(cfg: dict, command: str, allow_supercritical: bool = False):
    g, ph, it, fk = cfg["grid"], cfg["physics"], cfg["integrator"], cfg["fock"]
    _require(isinstance(g["n"], int) and g["n"] >= 4 and g["n"] % 2 == 0, "grid.n", f"must be an even integer >= 4, got {g['n']!r}")
    _require(_number(g["L"]) and g["L"] > 0, "grid.L", "must be positive")
    _require(_number(ph["lambda"]), "physics.lambda", "must be a finite number")
    if command in GUARDED and not allow_supercritical:
        _require(ph["lambda"] > LAMBDA_CRIT, "physics.lambda", f"{ph['lambda']} is not above the critical coupling -4/pi; pass --allow-supercritical to override")
    for (sec, key), choices in _CHOICES.items():
        _require(cfg[sec][key] in choices, f"{sec}.{key}", f"must be one of {choices}")
    _require(_number(ph["epsilon"]) and ph["epsilon"] > 0, "physics.epsilon", "must be positive")
    _require(_number(ph["kappa"]) and ph["kappa"] >= 0, "physics.kappa", "must be >= 0")
    _require(isinstance(ph["N"], int) and ph["N"] >= 1, "physics.N", "must be an integer >= 1")
    _require(_number(cfg["initial"]["sigma"]) and cfg["initial"]["sigma"] > 0, "initial.sigma", "must be positive")
    _require(len(cfg["initial"]["momentum"]) == 3, "initial.momentum", "must have three components")
    for key in ("dt", "T"):
        _require(_number(it[key]) and it[key] > 0, f"integrator.{key}", "must be positive")
    _require(isinstance(it["sample_every"], int) and it["sample_every"] >= 1, "integrator.sample_every", "must be an integer >= 1")
    _require(isinstance(fk["radius"], int) and fk["radius"] >= 0, "fock.radius", "must be an integer >= 0")
    _require(all(isinstance(n, int) and n >= 1 for n in fk["N_list"]), "fock.N_list", "must list integers >= 1")
    for key in ("t", "dt", "krylov_dt", "L"):
        _require(_number(fk[key]) and fk[key] >= 0 and (key == "t" or fk[key] > 0), f"fock.{key}", "out of range")
    _require(_number(cfg["ineq"]["a"]) and 0 < cfg["ineq"]["a"] < 3, "ineq.a", "must lie in (0, 3)")
    _require(isinstance(cfg["ineq"]["samples"], int) and cfg["ineq"]["samples"] >= 1, "ineq.samples", "must be an integer >= 1")
    eps = cfg["cutoff"]["epsilons"]
    _require(all(_number(e) and e > 0 for e in eps), "cutoff.epsilons", "must be positive")
    _require(all(a > b for a, b in zip(eps, eps[1:])), "cutoff.epsilons", "must be strictly decreasing")
    _require(isinstance(cfg["seed"], int) and 0 <= cfg["seed"] < 2**64, "seed", "must be an unsigned 64-bit integer")
    _require(all(abs(l - LAMBDA_CRIT) > 1e-12 for l in cfg["scan"]["lambdas"]), "scan.lambdas", "the critical coupling itself is excluded")


def resolve(command: str, config: dict | None = None, overrides=(), seed=None, out=None, allow_supercritical=False) -> dict:
    """Defaults, then command defaults, then ``config``, then ``overrides``."""
    if command not in COMMANDS:
        raise ConfigurationError(f"unknown command {command!r}")
    cfg = copy.deepcopy(DEFAULTS)
    _merge(cfg, COMMAND_DEFAULTS.get(command, {}))
    _merge(cfg, config or {})
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        _set_dotted(cfg, key.strip(), raw.strip())
    if seed is not None:
        cfg["seed"] = int(seed)
    if out is not None:
        cfg["output"]["dir"] = str(out)
    validate(cfg, command, allow_supercritical)
    return cfg


def load(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file {p} does not exist")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be an object")
    return data


def parse_config(command: str, path=None, overrides=(), seed=None, out=None, allow_supercritical=False) -> dict:
    return resolve(command, load(path) if path else {}, overrides, seed, out, allow_supercritical)


def dumps(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True)
