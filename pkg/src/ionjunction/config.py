"""Typed INI configuration with a fixed schema.

Every key has a type, a default and a range check; unknown sections or keys
are rejected.  Angles accept plain floats or simple multiples of pi such as
``-pi/4`` or ``2*pi/3``.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable


class ConfigError(ValueError):
    """Invalid configuration file or override."""


_PI_RE = re.compile(r"^\s*([+-]?)\s*(\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d*\.?\d+))?\s*$")


def parse_angle(text: str) -> float:
    """'-pi/4' -> -0.785..., '0.3' -> 0.3."""
    t = text.strip().lower()
    m = _PI_RE.match(t)
    if m:
        sign, coef, den = m.groups()
        val = (float(coef) if coef else 1.0) * math.pi / (float(den) if den else 1.0)
        return -val if sign == "-" else val
    try:
        return float(t)
    except ValueError:
        raise ConfigError(f"cannot parse angle {text!r}") from None


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _int_list(text: str) -> list[int]:
    return [int(x) for x in re.split(r"[,\s]+", text.strip()) if x]


def _float_list(text: str) -> list[float]:
    return [parse_angle(x) for x in re.split(r"[,\s]+", text.strip()) if x]


def _states(text: str) -> list[tuple[float, ...]]:
    out = []
    for chunk in text.split(";"):
        if chunk.strip():
            vals = [float(eval_fraction(x)) for x in chunk.replace(",", " ").split()]
            if len(vals) != 4:
                raise ConfigError(f"hyperfine state needs 4 numbers (F_i m_Fi F_a m_Fa): {chunk!r}")
            out.append(tuple(vals))
    return out


def eval_fraction(x: str) -> float:
    if "/" in x:
        a, b = x.split("/")
        return float(a) / float(b)
    return float(x)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: str
    doc: str
    check: Callable[[Any], bool] | None = None
    optional: bool = False


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


SCHEMA: dict[str, dict[str, Key]] = {
    "species": {
        "atom_mass_u": Key(float, "86.909180527", "atom mass (u), 87Rb", _pos),
        "ion_mass_u": Key(float, "170.936323", "ion mass (u), 171Yb+", _pos),
        "c4_au": Key(float, "159.4", "C4 = alpha_p/2 in atomic units (Rb alpha_p = 318.8)", _pos),
        "atom_nuclear_spin": Key(eval_fraction, "3/2", "atom nuclear spin", _nonneg),
        "atom_electron_spin": Key(eval_fraction, "1/2", "atom electron spin", _nonneg),
        "ion_nuclear_spin": Key(eval_fraction, "1/2", "ion nuclear spin", _nonneg),
        "ion_electron_spin": Key(eval_fraction, "1/2", "ion electron spin", _nonneg),
    },
    "trap": {
        "alpha": Key(float, "10", "trap strength (R*/l0)^4; ignored when omega_hz is set", _pos),
        "omega_hz": Key(float, "", "trap frequency omega/2pi (Hz); overrides alpha", _pos, optional=True),
        "q": Key(float, "2.06", "half well separation (R*) for coupling", _pos),
        "q_min": Key(float, "1.8", "spectrum sweep start (R*)", _pos),
        "q_max": Key(float, "3.2", "spectrum sweep end (R*)", _pos),
        "q_points": Key(int, "29", "spectrum sweep points", _pos),
        "levels": Key(int, "8", "levels written per sweep point", _pos),
        "no_ion": Key(parse_bool, "false", "drop the ion (pure double well)"),
    },
    "phases": {
        "phi_up": Key(parse_angle, "-pi/4", "short-range phase for the ion in |up> (rad)"),
        "phi_down": Key(parse_angle, "-pi/3", "short-range phase for the ion in |down> (rad)"),
        "a_ia_up": Key(float, "", "atom-ion scattering length for |up> (R*); overrides phi_up", optional=True),
        "a_ia_down": Key(float, "", "atom-ion scattering length for |down> (R*); overrides phi_down",
                         optional=True),
        "scan": Key(_float_list, "", "extra phases for the coupling table (rad, comma separated)",
                    optional=True),
        "scan_points": Key(int, "0", "evenly spaced phases on (-pi/2, pi/2] added to the table", _nonneg),
    },
    "basis": {
        "K": Key(int, "1250", "number of radial states", _pos),
        "l_max": Key(int, "48", "largest partial wave", _nonneg),
        "E_min": Key(float, "-2000", "energy floor for bound states (E*)", lambda x: x < 0),
        "points_per_wavelength": Key(float, "240", "radial grid density", lambda x: x >= 16),
        "convergence_check": Key(parse_bool, "true", "repeat named couplings with 1.25 K"),
    },
    "scattering": {
        "a_aa_bohr": Key(float, "100", "atom-atom scattering length (Bohr radii)", _pos),
    },
    "sequence": {
        "q_far": Key(float, "2.3", "start and end separation (R*)", _pos),
        "q_near": Key(float, "2.06", "closest separation (R*)", _pos),
        "auto_tune": Key(parse_bool, "true", "choose ramp and hold times automatically"),
        "ramp_time": Key(float, "300", "ramp duration (hbar/E*) when not auto-tuned", _pos),
        "hold_time": Key(float, "100", "hold duration (hbar/E*) when not auto-tuned", _nonneg),
        "min_ramp": Key(float, "100", "shortest ramp the tuner may choose (hbar/E*)", _pos),
        "subspace": Key(int, "16", "propagation subspace vectors per parity sector and end point pair", _pos),
        "max_phase_step": Key(float, "0.1", "upper bound on dt * energy span", _pos),
        "samples": Key(int, "200", "trajectory samples per branch", lambda x: x >= 2),
        "snapshots": Key(int, "0", "z-density snapshots per branch (0 = none)", _nonneg),
        "target": Key(float, "0.98", "required final population of the target well", lambda x: 0 < x <= 1),
    },
    "twomode": {
        "N": Key(_int_list, "20, 100", "atom numbers", lambda v: bool(v) and all(n >= 1 for n in v)),
        "t_max_ms": Key(float, "40", "integration window (ms)", _pos),
        "dt_ms": Key(float, "0.02", "output spacing (ms)", _pos),
        "J_up_hz": Key(float, "1.7", "tunnelling J/2pi for |up> (Hz)", _pos),
        "U_up_hz": Key(float, "0.9", "interaction U/2pi for |up> (Hz)", _nonneg),
        "J_down_hz": Key(float, "42.7", "tunnelling J/2pi for |down> (Hz)", _pos),
        "U_down_hz": Key(float, "1.0", "interaction U/2pi for |down> (Hz)", _nonneg),
        "from_coupling": Key(str, "", "coupling_summary.json to take J and U from instead", optional=True),
        "rabi_below": Key(float, "1", "Lambda below which the junction is called Rabi-like", _pos),
        "fock_above": Key(float, "", "Lambda above which it is Fock-like (default N^2)", _pos, optional=True),
    },
    "channels": {
        "states": Key(_states, "0 0 2 2; 1 1 2 2; 1 0 2 2",
                      "hyperfine pair states F_i m_Fi F_a m_Fa, separated by ';'"),
    },
    "output": {
        "directory": Key(str, "results", "output directory"),
        "format": Key(str, "csv", "csv or json", lambda x: x in ("csv", "json")),
        "figures": Key(parse_bool, "false", "also render PNG figures next to the tables"),
    },
    "run": {
        "threads": Key(int, "1", "worker threads", _pos),
    },
}


class RunConfig:
    """Parsed configuration; ``cfg['trap']['alpha']`` or ``cfg.get('trap.alpha')``."""

    def __init__(self, values: dict[str, dict[str, Any]], raw: dict[str, dict[str, str]]):
        self._values = values
        self._raw = raw

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self._values[section]

    def get(self, dotted: str):
        s, k = dotted.split(".", 1)
        return self._values[s][k]

    def raw(self) -> dict[str, dict[str, str]]:
        return {s: dict(v) for s, v in self._raw.items()}

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.raw(), sort_keys=True).encode()).hexdigest()[:16]


def _parse_value(section: str, key: str, text: str):
    spec = SCHEMA[section][key]
    if text.strip() == "":
        if spec.optional:
            return None
        raise ConfigError(f"[{section}] {key} may not be empty")
    try:
        v = spec.parse(text)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key} = {text!r}: {exc}") from None
    if isinstance(v, float) and not math.isfinite(v):
        raise ConfigError(f"[{section}] {key} must be finite")
    if spec.check is not None and not spec.check(v):
        raise ConfigError(f"[{section}] {key} = {text!r} is out of range ({spec.doc})")
    return v


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Defaults, then the file, then ``section.key=value`` overrides."""
    raw = {s: {k: spec.default for k, spec in keys.items()} for s, keys in SCHEMA.items()}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        cp.optionxform = str
        try:
            with open(path) as f:
                cp.read_file(f)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for s in cp.sections():
            if s not in SCHEMA:
                raise ConfigError(f"unknown section [{s}]")
            for k, v in cp.items(s):
                if k not in SCHEMA[s]:
                    raise ConfigError(f"unknown key [{s}] {k}")
                raw[s][k] = v
    for ov in overrides or []:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {ov!r}")
        lhs, v = ov.split("=", 1)
        s, k = lhs.strip().split(".", 1)
        if s not in SCHEMA or k not in SCHEMA[s]:
            raise ConfigError(f"unknown key {lhs!r}")
        raw[s][k] = v.strip()
    values = {s: {k: _parse_value(s, k, raw[s][k]) for k in keys} for s, keys in SCHEMA.items()}
    t = values["trap"]
    if t["q_min"] > t["q_max"]:
        raise ConfigError("empty q range: q_min > q_max")
    q = values["sequence"]
    if not q["q_far"] > q["q_near"]:
        raise ConfigError("sequence needs q_far > q_near")
    return RunConfig(values, raw)


def default_config_text() -> str:
    """Fully commented default file (strong-trap scenario)."""
    lines = ["# ionjunction run configuration; every key is shown with its default.", ""]
    for s, keys in SCHEMA.items():
        lines.append(f"[{s}]")
        for k, spec in keys.items():
            lines.append(f"# {spec.doc}")
            lines.append(f"{k} = {spec.default}")
        lines.append("")
    return "\n".join(lines)
