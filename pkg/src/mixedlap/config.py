"""Run configuration: `key = value` files, flag overrides, validation.

A RunConfig is fully serializable and round-trips byte-identically through
render()/parse_config_text().  Unknown keys are rejected with the offending
line; parameter validation reuses the ProblemParams invariants so e.g.
p >= 2N/(N-2) fails here, before any work starts.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

from .groundstate import ProblemParams, critical_exponent

__all__ = ["ConfigError", "RunConfig", "parse_config_file", "parse_config_text",
           "merge_config"]

_FORMATS = ("json", "csv", "svg")


class ConfigError(ValueError):
    pass


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _parse_str_list(text: str) -> tuple[str, ...]:
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


@dataclass(frozen=True)
class RunConfig:
    command: str = "verify"
    dim: int = 2
    s: float = 0.5
    p: float = 3.0
    lam: float = 0.0
    mesh: int = 192
    grading: float = 2.0
    rmax: float = 4.0
    quad: int = 96
    tol: float = 1e-8
    seed: int = 0
    jobs: int = 0  # 0 -> logical cores, resolved at use
    out: str = "out"
    format: tuple[str, ...] = ("json", "csv")
    # continuation / extension knobs (config-file keys, no dedicated flags)
    p_start: float = 2.2
    p_stop: float = 3.5
    s_start: float = 0.1
    s_stop: float = 0.9
    knots: int = 0  # 0 -> per-command default
    heights: tuple[float, ...] = (0.1, 0.05, 0.025)
    t_large: float = 50.0
    negative_control: str = ""

    def resolved_jobs(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)

    def problem(self) -> ProblemParams:
        return ProblemParams(dim=self.dim, s=self.s, p=self.p, lam=self.lam)

    def validate(self) -> "RunConfig":
        if self.command not in ("solve", "spectrum", "verify", "continue-p",
                                "continue-s", "extend"):
            raise ConfigError(f"unknown command {self.command!r}")
        if self.dim < 2:
            raise ConfigError("dim: must be an integer >= 2")
        if not 0.0 < self.s < 1.0:
            raise ConfigError("s: must lie in (0, 1)")
        if not self.p > 2.0:
            raise ConfigError("p: must exceed 2")
        if self.p >= critical_exponent(self.dim):
            raise ConfigError(
                f"p: must stay below the critical exponent "
                f"{critical_exponent(self.dim):g} for dim = {self.dim}"
            )
        try:
            self.problem()
        except ValueError as err:
            raise ConfigError(str(err))
        if self.mesh < 16:
            raise ConfigError("mesh: need at least 16 elements")
        if self.grading < 1.0:
            raise ConfigError("grading: must be >= 1")
        if self.rmax < 2.0:
            raise ConfigError("rmax: exterior cutoff must be >= 2")
        if self.quad < 8:
            raise ConfigError("quad: need at least 8 quadrature points")
        if not self.tol > 0.0:
            raise ConfigError("tol: must be positive")
        if not 0 <= self.seed < 2 ** 63:
            raise ConfigError("seed: must fit in a 64-bit integer")
        if self.jobs < 0:
            raise ConfigError("jobs: must be positive (0 = logical cores)")
        if self.knots < 0 or self.knots == 1:
            raise ConfigError("knots: need at least 2 (0 = command default)")
        bad = [f for f in self.format if f not in _FORMATS]
        if bad:
            raise ConfigError(f"format: unknown format(s) {', '.join(bad)}")
        if any(h <= 0.0 for h in self.heights):
            raise ConfigError("heights: must be positive")
        if self.negative_control not in ("", "third-eigenfunction",
                                         "shifted-potential"):
            raise ConfigError(
                "negative_control: must be third-eigenfunction or shifted-potential"
            )
        return self

    def as_dict(self) -> dict:
        """Plain dict under the config-file key spellings (lambda, not lam)."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[_FIELD_TO_KEY[f.name]] = list(v) if isinstance(v, tuple) else v
        return out

    def render(self) -> str:
        """Config-file text that parses back to an identical RunConfig."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{_FIELD_TO_KEY[f.name]} = {v}")
        return "\n".join(lines) + "\n"


# config-file key <-> dataclass field (the file uses the flag spellings)
_KEY_TO_FIELD = {
    "command": ("command", str),
    "dim": ("dim", int),
    "s": ("s", float),
    "p": ("p", float),
    "lambda": ("lam", float),
    "mesh": ("mesh", int),
    "grading": ("grading", float),
    "rmax": ("rmax", float),
    "quad": ("quad", int),
    "tol": ("tol", float),
    "seed": ("seed", int),
    "jobs": ("jobs", int),
    "out": ("out", str),
    "format": ("format", _parse_str_list),
    "p_start": ("p_start", float),
    "p_stop": ("p_stop", float),
    "s_start": ("s_start", float),
    "s_stop": ("s_stop", float),
    "knots": ("knots", int),
    "heights": ("heights", _parse_float_list),
    "t_large": ("t_large", float),
    "negative_control": ("negative_control", str),
}
_FIELD_TO_KEY = {f: k for k, (f, _) in _KEY_TO_FIELD.items()}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse `key = value` lines into a field dict; reject unknown keys."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEY_TO_FIELD:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        field_name, conv = _KEY_TO_FIELD[key]
        try:
            out[field_name] = conv(value)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {value!r}")
    return out


def parse_config_file(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config file: {err}")
    return parse_config_text(text, source=os.fspath(path))


def merge_config(command: str, file_fields: dict, flag_fields: dict) -> RunConfig:
    """Defaults < config file < explicit flags; then validate."""
    cfg = RunConfig(command=command)
    file_fields = dict(file_fields)
    file_fields.pop("command", None)
    if file_fields:
        cfg = replace(cfg, **file_fields)
    flag_fields = {k: v for k, v in flag_fields.items() if v is not None}
    if flag_fields:
        cfg = replace(cfg, **flag_fields)
    return cfg.validate()
