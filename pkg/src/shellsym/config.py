"""Line-based configuration: ``key = value`` lines, optional ``[section]`` headers, ``#`` comments.

Keys form one flat namespace; a section header only has to be one of the
known names.  ``--set key=value`` overrides are applied on top of the file.
Every value is type-checked and range-checked before a command runs, and
errors name the key and the line it came from.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigurationError
from .minimizer import DEFAULT_DELTA, DELTA_TOKENS, MinimizeConfig, critical_exponent
from .symmetry import Family, GroupSpec

SECTIONS = {"group", "minimize", "sweep", "run", "reduce", "lemmas", "orbits"}
U64_MAX = 2**64 - 1


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(s: str) -> int:
    f = float(s)
    if f != int(f):
        raise ValueError("must be an integer")
    return int(f)


def _float_or(word: str) -> Callable[[str], Any]:
    def conv(s: str):
        return word if s.strip() == word else _float(s)

    return conv


def _delta(s: str):
    return s.strip() if s.strip() in DELTA_TOKENS else _float(s)


def _float_list(s: str) -> list[float]:
    items = [t for t in s.replace(";", ",").split(",") if t.strip()]
    if not items:
        raise ValueError("empty list")
    return [_float(t) for t in items]


def _bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _family(s: str) -> str:
    t = s.strip().lower().replace("-", "_")
    aliases = {"gk4": "gk4", "g4": "gk4", "gk_prime": "gk_prime", "prime": "gk_prime", "gk_tilde": "gk_tilde", "tilde": "gk_tilde"}
    if t not in aliases:
        raise ValueError("expected gk4, gk_prime or gk_tilde")
    return aliases[t]


_MIN_DEFAULTS = MinimizeConfig()

KEYS: dict[str, tuple[Callable[[str], Any], Any]] = {
    # group
    "family": (_family, "gk4"),
    "k": (_int, 2),
    "n": (_int, 4),
    "m": (_int, 2),
    "m0": (_int, 0),
    "l": (_int, None),
    "l0": (_int, 2),
    # minimization
    "p": (_float, _MIN_DEFAULTS.p),
    "q": (_float, _MIN_DEFAULTS.q),
    "R": (_float, _MIN_DEFAULTS.R),
    "kappa": (_float, _MIN_DEFAULTS.kappa),
    "delta": (_delta, DEFAULT_DELTA),
    "h": (_float, _MIN_DEFAULTS.h),
    "eps_reg": (_float_or("auto"), "auto"),
    "max_iter": (_int, _MIN_DEFAULTS.max_iter),
    "initial_step": (_float, _MIN_DEFAULTS.initial_step),
    "armijo_c": (_float, _MIN_DEFAULTS.armijo_c),
    "shrink": (_float, _MIN_DEFAULTS.shrink),
    "min_step": (_float, _MIN_DEFAULTS.min_step),
    "tol": (_float, _MIN_DEFAULTS.tol),
    "window": (_int, _MIN_DEFAULTS.window),
    "init_radius": (_float, _MIN_DEFAULTS.init_radius),
    "precond_shift": (_float, _MIN_DEFAULTS.precond_shift),
    "restart_noise": (_float, _MIN_DEFAULTS.restart_noise),
    # sweeps, sampling and output
    "R_list": (_float_list, [6.0, 10.0, 14.0, 20.0]),
    "p_list": (_float_list, [1.5, 2.0, 3.0]),
    "q_list": (_float_list, [2.0, 4.0]),
    "samples": (_int, 1_000_000),
    "random": (_int, 50),
    "grid_n": (_int, 400),
    "seed": (_int, 20240601),
    "out": (str, "shellsym-out"),
    "verbosity": (_int, 1),
    "binary_dump": (_bool, False),
}

MINIMIZE_KEYS = [
    "p", "q", "k", "R", "kappa", "delta", "h", "eps_reg", "max_iter", "initial_step", "armijo_c",
    "shrink", "min_step", "tol", "window", "init_radius", "precond_shift", "restart_noise",
]  # fmt: skip


@dataclass
class RunConfig:
    values: dict[str, Any]
    origin: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def where(self, key: str) -> str:
        return self.origin.get(key, "default")

    def group_spec(self) -> GroupSpec:
        fam = self.values["family"]
        k = self.values["k"]
        if fam == "gk4":
            return GroupSpec.gk4(k)
        if fam == "gk_prime":
            return GroupSpec.gk_prime(k, self.values["n"])
        return GroupSpec.gk_tilde(k, self.values["m"], self.values["m0"])

    def minimize_config(self) -> MinimizeConfig:
        return MinimizeConfig(**{key: self.values[key] for key in MINIMIZE_KEYS}, seed=self.values["seed"])

    def echo(self) -> dict:
        return dict(sorted(self.values.items()))


def _error(key: str, where: str, msg: str) -> ConfigurationError:
    return ConfigurationError(f"{key} ({where}): {msg}")


def parse_text(text: str, source: str = "<config>") -> tuple[dict[str, Any], dict[str, str]]:
    values: dict[str, Any] = {}
    origin: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source} line {lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigurationError(f"{where}: malformed section header {raw.strip()!r}")
            name = line[1:-1].strip()
            if name not in SECTIONS:
                raise ConfigurationError(f"{where}: unknown section [{name}]")
            continue
        if "=" not in line:
            raise ConfigurationError(f"{where}: expected 'key = value'")
        key, val = (t.strip() for t in line.split("=", 1))
        _store(values, origin, key, val, where)
    return values, origin


def _store(values: dict, origin: dict, key: str, val: str, where: str) -> None:
    if key not in KEYS:
        raise ConfigurationError(f"{where}: unknown key {key!r}")
    conv = KEYS[key][0]
    try:
        values[key] = conv(val)
    except (TypeError, ValueError) as exc:
        raise _error(key, where, f"cannot parse {val!r}: {exc}") from None
    origin[key] = where


def parse_config(path: str | Path | None = None, overrides: list[str] | None = None, seed: int | None = None) -> RunConfig:
    values: dict[str, Any] = {}
    origin: dict[str, str] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigurationError(f"configuration file {str(p)!r} does not exist")
        values, origin = parse_text(p.read_text(), str(p))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"--set {item!r}: expected key=value")
        key, val = (t.strip() for t in item.split("=", 1))
        _store(values, origin, key, val, f"--set {key}")
    if seed is not None:
        values["seed"] = seed
        origin["seed"] = "--seed"
    full = {key: default for key, (_, default) in KEYS.items()}
    full.update(values)
    cfg = RunConfig(full, origin)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    v = cfg.values
    w = cfg.where
    if not (0 <= v["seed"] <= U64_MAX):
        raise _error("seed", w("seed"), "must be an unsigned 64-bit integer")
    if v["p"] <= 1:
        raise _error("p", w("p"), "p must exceed 1")
    pstar = critical_exponent(v["p"])
    if not (v["p"] < v["q"] < pstar):
        raise _error("q", w("q"), f"q must lie in (p, p*) = ({v['p']:g}, {pstar:g}); subcritical for the 3D profile")
    if not (0 < v["kappa"] < 1 / math.sqrt(2)):
        raise _error(
            "kappa", w("kappa"), "kappa must lie in (0, 1/sqrt(2)); larger values put the polar point N*R inside A_kappa"
        )
    if not isinstance(v["delta"], str) and not (0 < v["delta"] < 1):
        raise _error("delta", w("delta"), "delta must lie in (0, 1)")
    if v["k"] < 1:
        raise _error("k", w("k"), "k must be a positive integer")
    if not (0 < v["h"] <= 0.5):
        raise _error("h", w("h"), "h must lie in (0, 0.5]")
    if not v["R"] > 2:
        raise _error("R", w("R"), "R must exceed 2")
    for key in ("samples", "random", "grid_n", "max_iter", "window"):
        if v[key] < 1:
            raise _error(key, w(key), "must be positive")
    if any(r <= 2 for r in v["R_list"]):
        raise _error("R_list", w("R_list"), "every radius must exceed 2")
    if any(p <= 1 for p in v["p_list"]) or any(q < 1 for q in v["q_list"]):
        raise _error("p_list", w("p_list"), "exponents out of range")
    try:
        spec = cfg.group_spec()
    except ConfigurationError as exc:
        raise _error("family", w("family"), str(exc)) from None
    if spec.family is Family.GK_TILDE and v["l"] is not None and not (1 <= v["l"] <= spec.m):
        raise _error("l", w("l"), "l must lie in [1, m]")
    try:
        cfg.minimize_config()
    except ConfigurationError as exc:
        raise ConfigurationError(f"minimization settings: {exc}") from None
