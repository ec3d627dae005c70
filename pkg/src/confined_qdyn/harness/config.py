"""Flat ``key=value`` experiment configuration with dotted section names."""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass
from pathlib import Path

from ..geometry import Curve, TubeParams, make_curve
from ..operators import ConfinementProfile

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "DEFAULTS"]

EXPERIMENTS = ("e1", "e2", "validate")

# None marks a required key
DEFAULTS: dict[str, object] = {
    "experiment": None,
    "lambdas": None,
    "curve.kind": "circle",
    "curve.params": "1.0",
    "curve.samples": 1024,
    "profile.omega": 1.0,
    "profile.v0": 0.5,
    "tube.delta": 0.5,
    "tube.epsilon": 0.25,
    "tube.a_min": 0.5,
    "T": 1.0,
    "dt_rule": "0.02/lambda^2",
    "grid.half_width": "auto",
    "grid.count": "auto",
    "grid.ns": 128,
    "grid.ny": 127,
    "grid.y_max": "auto",
    "state.k0": 2.0,
    "state.w_s": 0.5,
    "state.s0": 0.0,
    "s_exp": 0.5,
    "output_dir": "out",
    "noise_floor": 1e-12,
    "solver.tol": 1e-10,
    "solver.kind": "lu",
}

_RULE = re.compile(r"^\s*([0-9.eE+-]+)\s*/\s*lambda\s*\^\s*([0-9.]+)\s*$")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _float(key, raw):
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {raw!r}") from None


def _int(key, raw):
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected an integer, got {raw!r}") from None
    if value != int(value):
        raise ConfigError(key, f"expected an integer, got {raw!r}")
    return int(value)


def _float_list(key, raw):
    if isinstance(raw, (list, tuple)):
        items = list(raw)
    else:
        items = [p for p in re.split(r"[,\s]+", str(raw).strip().strip("[]")) if p]
    return tuple(_float(key, p) for p in items)


def _auto_float(key, raw):
    return None if str(raw).strip() == "auto" else _float(key, raw)


def _auto_int(key, raw):
    return None if str(raw).strip() == "auto" else _int(key, raw)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    lambdas: tuple[float, ...]
    curve_kind: str = "circle"
    curve_params: tuple[float, ...] = (1.0,)
    curve_samples: int = 1024
    omega: float = 1.0
    v0: float = 0.5
    delta: float = 0.5
    epsilon: float = 0.25
    a_min: float = 0.5
    T: float = 1.0
    dt_rule: str = "0.02/lambda^2"
    half_width: float | None = None
    box_count: int | None = None
    ns: int = 128
    ny: int = 127
    y_max: float | None = None
    k0: float = 2.0
    w_s: float = 0.5
    s0: float = 0.0
    s_exp: float = 0.5
    output_dir: str = "out"
    noise_floor: float = 1e-12
    solver_tol: float = 1e-10
    solver: str = "lu"

    # derived objects

    def curve(self) -> Curve:
        return make_curve(self.curve_kind, self.curve_params, self.curve_samples)

    def profile(self) -> ConfinementProfile:
        return ConfinementProfile(self.omega, self.v0)

    def tube(self) -> TubeParams:
        return TubeParams(self.delta, self.epsilon, self.a_min)

    def dt(self, lam: float) -> float:
        """Time step for coupling ``lam`` from ``dt_rule``."""
        match = _RULE.match(self.dt_rule)
        if match:
            return float(match.group(1)) / lam ** float(match.group(2))
        return float(self.dt_rule)

    def normal_extent(self) -> float:
        return 8.0 / math.sqrt(self.omega) if self.y_max is None else self.y_max

    def config_hash(self) -> str:
        text = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def as_dict(self) -> dict:
        """Config echo with every default filled in."""
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


def _parse_lines(text: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in raw and raw[key] != value:
            raise ConfigError(key, f"given twice with different values ({raw[key]!r}, {value!r})")
        raw[key] = value
    return raw


def parse_config(source: str | dict) -> ExperimentConfig:
    """Parse and validate config text (or an already split key/value dict)."""
    raw = _parse_lines(source) if isinstance(source, str) else {k: v for k, v in source.items()}
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    merged = {k: raw.get(k, v) for k, v in DEFAULTS.items()}
    for key in ("experiment", "lambdas"):
        if merged[key] is None and not (key == "lambdas" and merged["experiment"] == "validate"):
            raise ConfigError(key, "required key missing")

    experiment = str(merged["experiment"]).strip()
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {EXPERIMENTS}, got {experiment!r}")

    lambdas = _float_list("lambdas", merged["lambdas"]) if merged["lambdas"] is not None else ()
    if experiment != "validate":
        if len(lambdas) < 3:
            raise ConfigError("lambdas", f"need at least 3 values, got {len(lambdas)}")
        if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
            raise ConfigError("lambdas", "values must be strictly increasing")
        if lambdas[0] < 1:
            raise ConfigError("lambdas", "values must be >= 1")

    cfg = ExperimentConfig(
        experiment=experiment,
        lambdas=lambdas,
        curve_kind=str(merged["curve.kind"]).strip(),
        curve_params=_float_list("curve.params", merged["curve.params"]),
        curve_samples=_int("curve.samples", merged["curve.samples"]),
        omega=_float("profile.omega", merged["profile.omega"]),
        v0=_float("profile.v0", merged["profile.v0"]),
        delta=_float("tube.delta", merged["tube.delta"]),
        epsilon=_float("tube.epsilon", merged["tube.epsilon"]),
        a_min=_float("tube.a_min", merged["tube.a_min"]),
        T=_float("T", merged["T"]),
        dt_rule=str(merged["dt_rule"]).strip(),
        half_width=_auto_float("grid.half_width", merged["grid.half_width"]),
        box_count=_auto_int("grid.count", merged["grid.count"]),
        ns=_int("grid.ns", merged["grid.ns"]),
        ny=_int("grid.ny", merged["grid.ny"]),
        y_max=_auto_float("grid.y_max", merged["grid.y_max"]),
        k0=_float("state.k0", merged["state.k0"]),
        w_s=_float("state.w_s", merged["state.w_s"]),
        s0=_float("state.s0", merged["state.s0"]),
        s_exp=_float("s_exp", merged["s_exp"]),
        output_dir=str(merged["output_dir"]).strip(),
        noise_floor=_float("noise_floor", merged["noise_floor"]),
        solver_tol=_float("solver.tol", merged["solver.tol"]),
        solver=str(merged["solver.kind"]).strip(),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if not cfg.T > 0:
        raise ConfigError("T", "must be positive")
    if not cfg.omega > 0:
        raise ConfigError("profile.omega", "must be positive")
    if not 0 < cfg.epsilon < cfg.delta:
        raise ConfigError("tube.epsilon", f"need 0 < epsilon < delta, got epsilon={cfg.epsilon}, delta={cfg.delta}")
    if not 0 < cfg.s_exp < 1:
        raise ConfigError("s_exp", "must lie in (0, 1)")
    if not cfg.noise_floor >= 0:
        raise ConfigError("noise_floor", "must be non-negative")
    if cfg.solver not in ("lu", "cg"):
        raise ConfigError("solver.kind", f"must be lu or cg, got {cfg.solver!r}")
    if not (_RULE.match(cfg.dt_rule) or _is_number(cfg.dt_rule)):
        raise ConfigError("dt_rule", f"expected 'C/lambda^p' or a number, got {cfg.dt_rule!r}")
    if cfg.experiment == "validate":
        return
    if min(cfg.dt(lam) for lam in cfg.lambdas) <= 0 or max(cfg.dt(lam) for lam in cfg.lambdas) > cfg.T:
        raise ConfigError("dt_rule", "time steps must be positive and not exceed T")
    try:
        curve = cfg.curve()
    except ValueError as exc:
        raise ConfigError("curve.params", str(exc)) from None
    try:
        cfg.tube().check(curve)
    except ValueError as exc:
        raise ConfigError("tube.delta", str(exc)) from None
    if not 0.2 <= cfg.w_s <= 1.0:
        raise ConfigError("state.w_s", "must lie in [0.2, 1]")
    if abs(cfg.k0) > 4:
        raise ConfigError("state.k0", "|k0| must be <= 4")


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_config(path) -> ExperimentConfig:
    """Read and validate a config file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text())
