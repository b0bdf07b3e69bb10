"""Run configuration: a line-oriented `key = value` grammar with [section] headers.

The grammar is deliberately small: blank lines and `#` comments are ignored,
values are scalars, words, or whitespace-separated lists.  Unknown sections or
keys, type mismatches, and invariant violations are reported with the key and
line number.  render() emits a canonical text whose parse round-trips exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

from .studies import EnsembleConfig, InitSpec, ModelSpec

COMMANDS = (
    "simulate",
    "moments",
    "hitting",
    "tightness",
    "tightness-functional",
    "cauchy",
    "equicontinuity",
    "hv-bounds",
    "assumptions",
    "energy-check",
    "strat-ito-check",
)


class ConfigError(ValueError):
    """A malformed or invalid configuration; carries key and line context."""


@dataclass(frozen=True)
class RunConfig:
    """Everything one batch run needs; nested specs mirror the config sections."""

    model: ModelSpec = ModelSpec()
    init: InitSpec = InitSpec()
    levels: tuple[int, ...] = (4, 8, 16)
    n_max: int = 16
    growth_p: float = 2.0
    dt: float = 1e-3
    T: float = 0.5
    scheme: str = "euler"
    M: float = 8.0
    M_list: tuple[float, ...] = (2.0, 4.0, 8.0, 16.0)
    R_policy: str = "auto"  # auto | a float rendered as text
    paths: int = 128
    master_seed: int = 12345
    chunk: int = 64
    deltas: tuple[float, ...] = (0.08, 0.04, 0.02, 0.01)
    m_levels: tuple[int, ...] = (4, 8, 16)
    partner_factor: int = 2
    probe_mode: tuple[int, int] = (1, 0)
    probe_time: float = -1.0  # -1 means T/2
    theta: float = -1.0  # -1 means T/2
    audit_samples: int = 500
    audit_level: int = 4
    energy_level: int = 8
    out_dir: str = "out"

    def ensemble(self) -> EnsembleConfig:
        return EnsembleConfig(
            model=self.model,
            init=self.init,
            levels=self.levels,
            paths=self.paths,
            master_seed=self.master_seed,
            dt=self.dt,
            T=self.T,
            M=self.M,
            M_list=self.M_list,
            deltas=self.deltas,
            m_levels=self.m_levels,
            partner_factor=self.partner_factor,
            probe_mode=self.probe_mode,
            probe_time=None if self.probe_time < 0 else self.probe_time,
            theta=None if self.theta < 0 else self.theta,
            scheme=self.scheme,
            chunk=self.chunk,
        )


# section -> key -> (target, attribute, parser-tag)
_SCHEMA = {
    "operator": {
        "kind": ("model", "kind", "word"),
        "nu": ("model", "nu", "float"),
        "noise_modes": ("model", "noise_modes", "int"),
        "xi_amplitude": ("model", "xi_amplitude", "float"),
        "xi_decay": ("model", "xi_decay", "float"),
        "xi_phase_seed": ("model", "xi_phase_seed", "opt_int"),
        "xi_file": ("model", "xi_file", "opt_word"),
        "additive_mode": ("model", "additive_mode", "int2"),
        "additive_amplitude": ("model", "additive_amplitude", "float"),
    },
    "init": {
        "kind": ("init", "kind", "word"),
        "amplitude": ("init", "amplitude", "float"),
        "spectrum_slope": ("init", "spectrum_slope", "float"),
        "seed": ("init", "seed", "int"),
        "clip": ("init", "clip", "opt_float"),
        "mode": ("init", "mode", "int2"),
    },
    "spaces": {
        "levels": ("root", "levels", "ints"),
        "n_max": ("root", "n_max", "int"),
        "p": ("root", "growth_p", "float"),
    },
    "integrator": {
        "dt": ("root", "dt", "float"),
        "T": ("root", "T", "float"),
        "scheme": ("root", "scheme", "word"),
    },
    "thresholds": {
        "M": ("root", "M", "float"),
        "M_list": ("root", "M_list", "floats"),
        "R_policy": ("root", "R_policy", "word"),
    },
    "ensemble": {
        "paths": ("root", "paths", "int"),
        "master_seed": ("root", "master_seed", "int"),
        "chunk": ("root", "chunk", "int"),
    },
    "study": {
        "deltas": ("root", "deltas", "floats"),
        "m_levels": ("root", "m_levels", "ints"),
        "partner_factor": ("root", "partner_factor", "int"),
        "probe_mode": ("root", "probe_mode", "int2"),
        "probe_time": ("root", "probe_time", "float"),
        "theta": ("root", "theta", "float"),
        "audit_samples": ("root", "audit_samples", "int"),
        "audit_level": ("root", "audit_level", "int"),
        "energy_level": ("root", "energy_level", "int"),
    },
    "output": {
        "dir": ("root", "out_dir", "word"),
    },
}


def _parse_value(tag: str, text: str, where: str):
    try:
        if tag == "word":
            if len(text.split()) != 1:
                raise ValueError("expected a single word")
            return text.strip()
        if tag == "opt_word":
            return None if text.strip().lower() == "none" else text.strip()
        if tag == "int":
            return int(text)
        if tag == "opt_int":
            return None if text.strip().lower() == "none" else int(text)
        if tag == "float":
            return float(text)
        if tag == "opt_float":
            return None if text.strip().lower() == "none" else float(text)
        if tag == "ints":
            return tuple(int(x) for x in text.split())
        if tag == "floats":
            return tuple(float(x) for x in text.split())
        if tag == "int2":
            parts = text.split()
            if len(parts) != 2:
                raise ValueError("expected two integers")
            return (int(parts[0]), int(parts[1]))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unknown value tag {tag}")


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a configuration text."""
    root: dict = {}
    model: dict = {}
    init: dict = {}
    buckets = {"root": root, "model": model, "init": init}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if section is None:
            raise ConfigError(f"line {lineno}: key {key!r} appears before any [section]")
        spec = _SCHEMA[section].get(key)
        if spec is None:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in section [{section}]")
        bucket, attr, tag = spec
        buckets[bucket][attr] = _parse_value(tag, value, f"line {lineno}, key {key!r}")
    cfg = RunConfig(model=ModelSpec(**model), init=InitSpec(**init), **root)
    validate(cfg)
    return cfg


def parse_config_file(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def validate(cfg: RunConfig) -> None:
    """Invariant checks shared by every command."""

    def bad(key, msg):
        raise ConfigError(f"key {key!r}: {msg}")

    if cfg.model.kind not in ("salt-ns", "heat", "zero", "additive-ou"):
        bad("kind", f"unknown operator kind {cfg.model.kind!r}")
    if cfg.model.kind != "zero" and cfg.model.nu <= 0:
        bad("nu", "viscosity must be positive")
    if cfg.model.noise_modes < 0:
        bad("noise_modes", "must be nonnegative")
    if cfg.init.kind not in ("random", "taylor-green", "single-mode", "zero"):
        bad("kind", f"unknown init kind {cfg.init.kind!r}")
    if cfg.scheme not in ("euler", "heun"):
        bad("scheme", f"unknown scheme {cfg.scheme!r}")
    if cfg.dt <= 0 or cfg.T <= 0:
        bad("dt", "dt and T must be positive")
    steps = cfg.T / cfg.dt
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        bad("dt", f"dt = {cfg.dt} does not divide T = {cfg.T}")
    if cfg.M <= 1:
        bad("M", f"threshold M = {cfg.M} violates M > 1")
    for m in cfg.M_list:
        if m <= 1:
            bad("M_list", f"threshold {m} violates M > 1")
    for d in cfg.deltas:
        r = d / cfg.dt
        if abs(r - round(r)) > 1e-9 * max(1.0, r):
            bad("deltas", f"delta = {d} is not a multiple of dt = {cfg.dt}")
        if not (0 < d < cfg.T):
            bad("deltas", f"delta = {d} outside (0, T)")
    if cfg.paths < 2:
        bad("paths", "an ensemble needs at least 2 paths")
    if not cfg.levels or any(n < 1 for n in cfg.levels):
        bad("levels", "levels must be positive")
    if cfg.n_max < max(cfg.levels):
        bad("n_max", "n_max must cover every requested level")
    if cfg.R_policy != "auto":
        try:
            r = float(cfg.R_policy)
        except ValueError:
            bad("R_policy", "expected `auto` or a positive number")
        if r <= 0:
            bad("R_policy", "cutoff threshold must be positive")
    if cfg.partner_factor < 2:
        bad("partner_factor", "partner levels need factor >= 2")
    if cfg.growth_p < 0:
        bad("p", "growth exponent must be nonnegative")
    if cfg.audit_samples < 100:
        bad("audit_samples", "the audit needs at least 100 samples")


def _render_value(tag: str, value) -> str:
    if value is None:
        return "none"
    if tag in ("ints", "floats"):
        return " ".join(repr(v) if tag == "floats" else str(v) for v in value)
    if tag == "int2":
        return f"{value[0]} {value[1]}"
    if tag in ("float", "opt_float"):
        return repr(float(value))
    return str(value)


def render(cfg: RunConfig) -> str:
    """Canonical text form; parse(render(cfg)) == cfg."""
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (bucket, attr, tag) in keys.items():
            source = {"root": cfg, "model": cfg.model, "init": cfg.init}[bucket]
            lines.append(f"{key} = {_render_value(tag, getattr(source, attr))}")
        lines.append("")
    return "\n".join(lines)
