"""Experiment configuration: an INI file with one section per concern.

Example::

    [problem]
    preset = A
    c = 0.0
    T = 1.0
    h = 1/64

    [splitting]
    kind = domain-decomposition
    q = 2
    beta = 1/16

    [coarse_splitting]        ; optional, defaults to [splitting]
    q = 4
    beta = 1/32

    [propagators]
    pair = FIE-FIE

    [time]
    Nc = 20
    s = 20

    [stopping]
    rule = reference          ; reference | increment | fixed
    eps = 1e-6
    max_iterations =          ; required for rule = fixed

    [run]
    threads = 1
    output = results
    seed = 0
    allow_large_mesh = false

Numbers accept fractions such as ``1/64``.  :meth:`ExperimentConfig.to_ini`
writes floats with ``repr`` so a round trip is exact.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from ..analysis import PAIRS
from ..errors import ConfigError
from ..grid import PRESETS
from ..parareal import RULES
from ..splitting import DIMENSIONAL, DOMAIN_DECOMPOSITION

KINDS = (DIMENSIONAL, DOMAIN_DECOMPOSITION)
MIN_DESK_H = 1 / 128

# field name -> (section, key)
LAYOUT = {
    "preset": ("problem", "preset"),
    "c": ("problem", "c"),
    "T": ("problem", "T"),
    "h": ("problem", "h"),
    "splitting": ("splitting", "kind"),
    "q": ("splitting", "q"),
    "beta": ("splitting", "beta"),
    "coarse_q": ("coarse_splitting", "q"),
    "coarse_beta": ("coarse_splitting", "beta"),
    "pair": ("propagators", "pair"),
    "Nc": ("time", "Nc"),
    "s": ("time", "s"),
    "rule": ("stopping", "rule"),
    "eps": ("stopping", "eps"),
    "max_iterations": ("stopping", "max_iterations"),
    "threads": ("run", "threads"),
    "output": ("run", "output"),
    "seed": ("run", "seed"),
    "allow_large_mesh": ("run", "allow_large_mesh"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "A"
    c: float = 0.0
    T: float = 1.0
    h: float = 1 / 64
    splitting: str = DOMAIN_DECOMPOSITION
    q: int = 2
    beta: float = 1 / 16
    coarse_q: int | None = None
    coarse_beta: float | None = None
    pair: str = "FIE-FIE"
    Nc: int = 20
    s: int = 20
    rule: str = "reference"
    eps: float = 1e-6
    max_iterations: int | None = None
    threads: int = 1
    output: str = "results"
    seed: int = 0
    allow_large_mesh: bool = False

    # -- derived ---------------------------------------------------------
    @property
    def n(self) -> int:
        return round(1.0 / self.h) - 1

    @property
    def dT(self) -> float:
        return self.T / self.Nc

    @property
    def dt(self) -> float:
        return self.dT / self.s

    @property
    def coarse_geometry(self) -> tuple[int, float]:
        return (self.coarse_q if self.coarse_q is not None else self.q,
                self.coarse_beta if self.coarse_beta is not None else self.beta)

    def replace(self, **changes) -> "ExperimentConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    # -- validation ------------------------------------------------------
    def validate(self) -> "ExperimentConfig":
        def need(cond, fld, msg):
            if not cond:
                raise ConfigError(f"{LAYOUT[fld][0]}.{LAYOUT[fld][1]}: {msg}", fld)

        need(self.preset in PRESETS, "preset", f"unknown preset {self.preset!r}, expected one of {PRESETS}")
        need(self.c >= 0, "c", f"reaction coefficient must be >= 0, got {self.c}")
        need(self.T > 0, "T", f"final time must be positive, got {self.T}")
        need(0 < self.h < 1, "h", f"mesh width must lie in (0, 1), got {self.h}")
        cells = round(1.0 / self.h)
        need(cells >= 2 and abs(cells * self.h - 1.0) < 1e-9, "h",
             f"1/h must be an integer >= 2, got h = {self.h}")
        need(self.h >= MIN_DESK_H - 1e-15 or self.allow_large_mesh, "h",
             f"h = {self.h} is below the desk range (>= 1/128); set run.allow_large_mesh = true")
        need(self.splitting in KINDS, "splitting", f"unknown kind {self.splitting!r}, expected one of {KINDS}")
        need(not (self.splitting == DIMENSIONAL and self.preset == "B"), "splitting",
             "dimensional splitting needs d12 = 0, which preset B does not satisfy")
        for qf, bf in (("q", "beta"), ("coarse_q", "coarse_beta")):
            q, beta = getattr(self, qf), getattr(self, bf)
            if qf == "coarse_q":
                q, beta = self.coarse_geometry
            need(isinstance(q, int) and q >= 1, qf, f"strip count must be a positive integer, got {q}")
            need(0 < beta < 1 / (2 * q), bf, f"overlap must lie in (0, 1/(2q)) = (0, {1 / (2 * q):g}), got {beta}")
        need(self.pair in PAIRS, "pair", f"unknown pair {self.pair!r}, expected one of {PAIRS}")
        need(isinstance(self.Nc, int) and self.Nc >= 1, "Nc", f"must be a positive integer, got {self.Nc}")
        need(isinstance(self.s, int) and self.s >= 1, "s", f"must be a positive integer, got {self.s}")
        need(self.rule in RULES, "rule", f"unknown rule {self.rule!r}, expected one of {RULES}")
        need(self.eps > 0, "eps", f"tolerance must be positive, got {self.eps}")
        need(self.rule != "fixed" or self.max_iterations is not None, "max_iterations",
             "required when rule = fixed")
        need(self.max_iterations is None or self.max_iterations >= 0, "max_iterations",
             f"must be >= 0, got {self.max_iterations}")
        need(isinstance(self.threads, int) and self.threads >= 1, "threads",
             f"must be a positive integer, got {self.threads}")
        need(bool(self.output), "output", "output directory must not be empty")
        return self

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(LAYOUT)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}", sorted(unknown)[0])
        return cls(**data).validate()

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for name, (section, key) in LAYOUT.items():
            if not cp.has_section(section):
                cp.add_section(section)
            cp.set(section, key, _format(getattr(self, name)))
        lines = []
        for section in cp.sections():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in cp.items(section))
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_ini(cls, text: str, overrides: dict[str, str] | None = None) -> "ExperimentConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from None
        known = {(sec, key): name for name, (sec, key) in LAYOUT.items()}
        raw: dict[str, str] = {}
        for section in cp.sections():
            for key, value in cp.items(section):
                name = known.get((section, key))
                if name is None:
                    raise ConfigError(f"unknown config key {section}.{key}", f"{section}.{key}")
                raw[name] = value
        for k, v in (overrides or {}).items():
            raw[_override_name(k)] = v
        return cls.from_strings(raw)

    @classmethod
    def from_strings(cls, raw: dict[str, str]) -> "ExperimentConfig":
        hints = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for name, text in raw.items():
            values[name] = _parse(name, hints[name], text)
        return cls(**values).validate()

    @classmethod
    def load(cls, path: str | Path, overrides: dict[str, str] | None = None) -> "ExperimentConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        return cls.from_ini(p.read_text(), overrides)


def _override_name(key: str) -> str:
    if key in LAYOUT:
        return key
    for name, (section, k) in LAYOUT.items():
        if key == f"{section}.{k}":
            return name
    raise ConfigError(f"unknown config key {key!r}", key)


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _number(text: str) -> float:
    try:
        return float(Fraction(text.replace(" ", "")))
    except (ValueError, ZeroDivisionError):
        return float(text)


def _parse(name: str, hint: str, text: str):
    text = text.strip()
    optional = "None" in hint
    if optional and text in ("", "none", "None"):
        return None
    try:
        if hint.startswith("bool"):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if hint.startswith("int"):
            v = _number(text)
            if v != int(v):
                raise ValueError(text)
            return int(v)
        if hint.startswith("float"):
            return _number(text)
        if name == "pair":
            return text.upper()
        if name == "preset":
            return text.upper()
        return text
    except (ValueError, OverflowError):
        sec, key = LAYOUT[name]
        raise ConfigError(f"{sec}.{key}: cannot parse {text!r} as {hint.split(' ')[0]}", name) from None
