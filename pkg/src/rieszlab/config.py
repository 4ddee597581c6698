"""Experiment configuration: strict INI-style files.

Strictness is the point: unknown sections or keys are errors (no silent
typos), duplicate keys are reported with both line numbers, and every
domain constraint failure names the field and the constraint.  A config
plus a seed is meant to be a pure function to outputs, so nothing here is
guessed or defaulted silently except the documented defaults below.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .potential import RieszParams

# section -> key -> (type, default); REQUIRED means no default
_REQUIRED = object()

_SCHEMA: dict[str, dict[str, tuple]] = {
    "model": {
        "d": (int, 1),
        "s": (float, _REQUIRED),
        "n": (int, _REQUIRED),
        "beta": (float, _REQUIRED),
    },
    "sampler": {
        "steps": (int, 20000),
        "burn_in": (int, 2000),
        "thin": (int, 10),
        "seed": (int, _REQUIRED),
        "schedule": (str, "plain"),
        "step_size": (float, None),
    },
    "windows": {
        "geometry": ("floats", ()),
        "u_list": ("floats", ()),
    },
    "outputs": {
        "directory": (str, "out"),
        "formats": ("strings", ("csv", "json", "png")),
    },
    "oracle": {
        "points_per_axis": (int, 32),
    },
}

_SCHEDULES = ("plain", "dlr", "swap")
_FORMATS = ("csv", "json", "png")


class ConfigError(ValueError):
    """Parse or validation failure; message carries location and field."""


@dataclass(frozen=True)
class ExperimentConfig:
    d: int
    s: float
    n: int
    beta: float
    steps: int
    burn_in: int
    thin: int
    seed: int
    schedule: str
    step_size: float | None
    window_volumes: tuple[float, ...]
    u_list: tuple[float, ...]
    output_directory: str
    formats: tuple[str, ...]
    points_per_axis: int
    source: str = field(default="<defaults>", compare=False)

    @property
    def params(self) -> RieszParams:
        return RieszParams(d=self.d, s=self.s)

    def as_dict(self) -> dict:
        return {
            "model": {"d": self.d, "s": self.s, "n": self.n, "beta": self.beta},
            "sampler": {
                "steps": self.steps,
                "burn_in": self.burn_in,
                "thin": self.thin,
                "seed": self.seed,
                "schedule": self.schedule,
                "step_size": self.step_size,
            },
            "windows": {
                "geometry": list(self.window_volumes),
                "u_list": list(self.u_list),
            },
            "outputs": {
                "directory": self.output_directory,
                "formats": list(self.formats),
            },
            "oracle": {"points_per_axis": self.points_per_axis},
        }


def _scan_duplicates(text: str, path: str) -> dict[tuple[str, str], int]:
    """First pass over the raw lines: record key locations, reject repeats."""
    seen: dict[tuple[str, str], int] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{path}:{lineno}: malformed section header {line!r}")
            section = line[1:-1].strip().lower()
            continue
        if "=" not in line and ":" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        sep = min((i for i in (line.find("="), line.find(":")) if i >= 0))
        key = line[:sep].strip().lower()
        loc = (section, key)
        if loc in seen:
            raise ConfigError(
                f"{path}: duplicate key {key!r} in section [{section}] "
                f"on lines {seen[loc]} and {lineno}"
            )
        seen[loc] = lineno
    return seen


def _coerce(kind, raw: str, where: str):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw.strip()
        if kind == "floats":
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
        if kind == "strings":
            return tuple(tok.strip() for tok in raw.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {getattr(kind, '__name__', kind)}")
    raise AssertionError(f"unhandled kind {kind!r}")


def validate(values: dict, source: str = "<args>") -> ExperimentConfig:
    """Build an ExperimentConfig from a flat {section: {key: value}} dict,
    applying defaults and domain validation.  Raises ConfigError naming the
    field and constraint on any violation.
    """
    out = {}
    for section, keys in _SCHEMA.items():
        given = values.get(section, {})
        unknown = set(given) - set(keys)
        if unknown:
            raise ConfigError(
                f"{source}: unknown key(s) {sorted(unknown)} in section [{section}]"
            )
        for key, (kind, default) in keys.items():
            if key in given and given[key] is not None:
                out[(section, key)] = given[key]
            elif default is _REQUIRED:
                raise ConfigError(f"{source}: missing required field '{key}' in [{section}]")
            else:
                out[(section, key)] = default
    unknown_sections = set(values) - set(_SCHEMA)
    if unknown_sections:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown_sections)}")

    d = out[("model", "d")]
    s = out[("model", "s")]
    n = out[("model", "n")]
    beta = out[("model", "beta")]
    if d < 1:
        raise ConfigError(f"{source}: d must be a positive integer, got {d}")
    if not (d - 1 < s < d):
        raise ConfigError(f"{source}: s must lie in (d-1, d) = ({d - 1}, {d}), got {s}")
    if beta <= 0:
        raise ConfigError(f"{source}: beta must be positive, got {beta}")
    if n < 1:
        raise ConfigError(f"{source}: n must be at least 1, got {n}")
    if out[("sampler", "steps")] < 1:
        raise ConfigError(f"{source}: steps must be positive")
    if out[("sampler", "burn_in")] < 0 or out[("sampler", "burn_in")] > out[("sampler", "steps")]:
        raise ConfigError(f"{source}: burn_in must lie in [0, steps]")
    if out[("sampler", "thin")] < 1:
        raise ConfigError(f"{source}: thin must be at least 1")
    if out[("sampler", "schedule")] not in _SCHEDULES:
        raise ConfigError(
            f"{source}: schedule must be one of {_SCHEDULES}, got {out[('sampler', 'schedule')]!r}"
        )
    step = out[("sampler", "step_size")]
    if step is not None and step <= 0:
        raise ConfigError(f"{source}: step_size must be positive when given")
    for v in out[("windows", "geometry")]:
        if not (0 < v < n):
            raise ConfigError(f"{source}: window volume {v} must lie in (0, n)")
    for fmt in out[("outputs", "formats")]:
        if fmt not in _FORMATS:
            raise ConfigError(f"{source}: unknown output format {fmt!r} (allowed: {_FORMATS})")
    if out[("oracle", "points_per_axis")] < 2:
        raise ConfigError(f"{source}: points_per_axis must be at least 2")

    return ExperimentConfig(
        d=d,
        s=s,
        n=n,
        beta=beta,
        steps=out[("sampler", "steps")],
        burn_in=out[("sampler", "burn_in")],
        thin=out[("sampler", "thin")],
        seed=out[("sampler", "seed")],
        schedule=out[("sampler", "schedule")],
        step_size=step,
        window_volumes=tuple(out[("windows", "geometry")]),
        u_list=tuple(out[("windows", "u_list")]),
        output_directory=out[("outputs", "directory")],
        formats=tuple(out[("outputs", "formats")]),
        points_per_axis=out[("oracle", "points_per_axis")],
        source=source,
    )


def load_config(
    path: str, overrides: dict | None = None, defaults: dict | None = None
) -> ExperimentConfig:
    """Parse and validate a config file.

    overrides is a {section: {key: value}} dict of already-typed values
    (from command-line flags) that take precedence over the file;
    defaults sit below the file (used only where the file is silent).
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    _scan_duplicates(text, path)

    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_file(io.StringIO(text), source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    values: dict[str, dict] = {
        sec: {k: v for k, v in keys.items() if v is not None}
        for sec, keys in (defaults or {}).items()
    }
    for section in parser.sections():
        sec = section.lower()
        if sec not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        values.setdefault(sec, {})
        for key, raw in parser.items(section):
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"{path}: unknown key '{key}' in section [{section}]")
            kind = _SCHEMA[sec][key][0]
            values[sec][key] = _coerce(kind, raw, f"{path}: [{section}] {key}")

    for section, keys in (overrides or {}).items():
        dest = values.setdefault(section, {})
        for key, val in keys.items():
            if val is not None:
                dest[key] = val

    return validate(values, source=path)
