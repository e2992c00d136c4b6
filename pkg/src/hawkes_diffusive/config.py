"""Run configuration: a plain-text ``key.path = value`` document.

Example::

    # Figure-1 style run
    alpha = 1
    rate.kind = quadratic
    jump.kind = gaussian
    jump.sigma = 1
    n = 100
    experiment = simulate
    T = 10
    seed = 42

Lists are comma separated; a schedule is written ``2:25, 5:100``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import JumpDistribution, ModelSpec, RateFunction, default_epsilon


class ConfigError(ValueError):
    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append("line %d" % line)
        if key is not None:
            where.append("key %r" % key)
        super().__init__("%s: %s" % (", ".join(where), message) if where else message)
        self.line = line
        self.key = key


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError("not a boolean: %r" % text)


def _int(text):
    if not any(c in text for c in ".eE"):
        return int(text)  # exact, also beyond 2^53
    v = float(text)
    if not v.is_integer():
        raise ValueError("not an integer: %r" % text)
    return int(v)


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text):
    return [_int(x.strip()) for x in text.split(",") if x.strip()]


def _schedule(text):
    out = []
    for item in text.split(","):
        if not item.strip():
            continue
        t, n = item.split(":")
        out.append((float(t), _int(n.strip())))
    return out


def _str(text):
    return text.strip().strip('"').strip("'")


MODEL_KEYS = {
    "alpha": float, "rate.kind": _str, "rate.c": float, "rate.params": _float_list,
    "jump.kind": _str, "jump.sigma": float, "jump.a": float, "jump.b": float, "jump.p": float,
    "jump.unit_variance": _bool, "jump.params": _float_list, "n": _int, "x0": float,
}
EXPERIMENT_KEYS = {
    "experiment": _str, "T": float, "h": float, "reps": _int, "t": float, "x": float,
    "g": _str, "n_grid": _int_list, "x_grid": _float_list, "times": _float_list, "k": _int,
    "schedule": _schedule, "epsilon": float, "R": float, "T_grid": _float_list, "cap": _int,
    "control_variate": _bool, "threshold": float, "sigma2": float, "L": float,
}
OUTPUT_KEYS = {"out": _str, "emit_paths": _bool, "seed": _int}

EXPERIMENTS = ("simulate-n", "simulate-limit", "generator-gap", "semigroup-rate",
               "invariant-law", "chaos-test", "joint-limit", "constants", "validate")
ALIASES = {"simulate": "simulate-n"}

U64_MAX = (1 << 64) - 1


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def name(self):
        return self.experiment.get("experiment")

    def get(self, key, default=None):
        for d in (self.model, self.experiment, self.output):
            if key in d:
                return d[key]
        return default


def _section(key):
    if key in MODEL_KEYS:
        return "model", MODEL_KEYS[key]
    if key in EXPERIMENT_KEYS:
        return "experiment", EXPERIMENT_KEYS[key]
    if key in OUTPUT_KEYS:
        return "output", OUTPUT_KEYS[key]
    return None, None


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        section, conv = _section(key)
        if section is None:
            raise ConfigError("unknown key", lineno, key)
        if key in seen:
            raise ConfigError("duplicate key", lineno, key)
        seen.add(key)
        try:
            v = conv(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError("bad value %r (%s)" % (value, exc), lineno, key)
        if key == "seed":
            if not 0 <= v <= U64_MAX:
                raise ConfigError("seed must be an unsigned 64-bit integer", lineno, key)
            cfg.seed = v
            continue
        if key == "experiment":
            v = ALIASES.get(v, v)
            if v not in EXPERIMENTS:
                raise ConfigError("unknown experiment %r (have %s)" % (v, ", ".join(EXPERIMENTS)),
                                  lineno, key)
        getattr(cfg, section)[key] = v
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    m = cfg.model
    if "alpha" not in m:
        raise ConfigError("missing required key", key="alpha")
    if not (m["alpha"] > 0 and math.isfinite(m["alpha"])):
        raise ConfigError("alpha must be positive", key="alpha")
    for k in ("rate.kind", "jump.kind"):
        if k not in m:
            raise ConfigError("missing required key", key=k)
    if "n" in m and m["n"] < 1:
        raise ConfigError("n must be a positive integer", key="n")
    for k in ("h", "T", "t", "epsilon", "R"):
        if k in cfg.experiment and not cfg.experiment[k] > 0 and not (k == "t" and cfg.experiment[k] == 0):
            raise ConfigError("%s must be positive" % k, key=k)
    if "reps" in cfg.experiment and cfg.experiment["reps"] < 1:
        raise ConfigError("reps must be >= 1", key="reps")
    try:
        build_spec(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc))


def build_rate(m: dict) -> RateFunction:
    kind = m["rate.kind"]
    if kind == "quadratic":
        return RateFunction.quadratic()
    if kind == "root_quadratic":
        return RateFunction.root_quadratic()
    if kind == "arctan_sq":
        return RateFunction.arctan_sq()
    if kind == "constant":
        c = m.get("rate.c", (m.get("rate.params") or [1.0])[0])
        return RateFunction.constant(c)
    raise ValueError("unknown rate.kind %r (user_defined rates are not configurable)" % kind)


def build_jump(m: dict) -> JumpDistribution:
    kind = m["jump.kind"]
    params = m.get("jump.params")
    if kind == "gaussian":
        sigma = m.get("jump.sigma", params[0] if params else 1.0)
        return JumpDistribution.gaussian(sigma)
    if kind == "two_point":
        if params:
            if len(params) != 3:
                raise ValueError("jump.params for two_point is 'a, b, p'")
            a, b, p = params
        else:
            try:
                a, b, p = m["jump.a"], m["jump.b"], m["jump.p"]
            except KeyError as exc:
                raise ValueError("two_point needs jump.a, jump.b, jump.p (missing %s)" % exc)
        if m.get("jump.unit_variance", False):
            return JumpDistribution.two_point_unit(a, b, p)
        return JumpDistribution.two_point(a, b, p)
    raise ValueError("unknown jump.kind %r" % kind)


def build_spec(cfg: RunConfig) -> ModelSpec:
    m = cfg.model
    return ModelSpec(float(m["alpha"]), build_rate(m), build_jump(m), int(m.get("n", 1)),
                     float(m.get("x0", 0.0)))


def resolved(cfg: RunConfig) -> RunConfig:
    """Copy with the documented defaults filled in."""
    spec = build_spec(cfg)
    model = dict(cfg.model)
    model.setdefault("x0", 0.0)
    model.setdefault("n", spec.n_components)
    exp = dict(cfg.experiment)
    exp.setdefault("h", 1e-3)
    exp.setdefault("R", 20.0)
    s2 = exp.get("sigma2", spec.sigma2)
    L = exp.get("L", spec.L)
    exp.setdefault("epsilon", default_epsilon(spec.alpha, s2, L))
    out = dict(cfg.output)
    out.setdefault("emit_paths", False)
    return RunConfig(model, exp, out, cfg.seed)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, (list, tuple)):
        if v and isinstance(v[0], tuple):
            return ", ".join("%r:%d" % (t, n) for t, n in v)
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def emit_config(cfg: RunConfig) -> str:
    lines = []
    for section in (cfg.model, cfg.experiment, cfg.output):
        for k, v in section.items():
            lines.append("%s = %s" % (k, _fmt(v)))
    lines.append("seed = %d" % cfg.seed)
    return "\n".join(lines) + "\n"


def config_to_dict(cfg: RunConfig) -> dict:
    return {"model": dict(cfg.model), "experiment": dict(cfg.experiment),
            "output": dict(cfg.output), "seed": cfg.seed}
