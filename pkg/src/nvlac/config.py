"""Run configuration: sectioned ``key = value`` text with a fixed schema.

Every section and key is optional; omitted values take the defaults below.
Unknown sections or keys, duplicate keys and unparsable values are rejected
with a :class:`ConfigError` naming the line and field.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass

import numpy as np

SCHEMA = {
    "spin": {
        "d_gs": (float, 2870.0),
        "e_strain": (float, 0.0),
        "a_par": (float, -2.16),
        "a_perp": (float, 2.7),
        "p_quad": (float, 4.95),
        "g_s": (float, 2.003),
        "g_i": (float, 0.403),
        "gamma_nv": (float, 2.8),
    },
    "levels": {
        "direction": (str, "0,0,1"),
    },
    "field": {
        "direction": (str, "100"),
        "start": (float, -5.0),
        "stop": (float, 5.0),
        "count": (int, 1001),
    },
    "drive": {
        "omega_rf": (float, 4.9),
        "f_rf": (float, 5.3),
        "phase": (float, 0.0),
    },
    "strain": {
        "sigma_e": (float, 5.0),
        "n_nodes": (int, 41),
    },
    "model": {
        "c0": (float, None),
        "coupling_scale": (float, None),
        "linewidth": (float, None),
    },
    "floquet": {
        "coupling": (float, 5.0),
    },
    "lineshape": {
        "i0_ua": (float, 143.0),
    },
    "map": {
        "axis": (str, "f_rf"),
        "start": (float, 0.3),
        "stop": (float, 6.7),
        "count": (int, 33),
    },
    "slope": {
        "f_rf": (float, 5.3),
        "omega_start": (float, 0.0),
        "omega_stop": (float, 8.0),
        "omega_count": (int, 33),
    },
    "modulation": {
        "f_mod": (float, 70.0),
        "field_amplitude": (float, 0.5),
        "am_depth": (float, 1.0),
        "samples_per_period": (int, 64),
        "periods": (int, 10),
        "noise_rms": (float, 0.0),
    },
    "calibrate": {
        "hwhm_g": (float, 2.9),
        "depth": (float, 0.0093),
        "direction": (str, "100"),
        "linewidth": (float, 0.3),
    },
    "response": {
        "channel": (str, "field_mod"),
        "f_c": (float, 120.0),
        "exponent": (float, 1.5),
        "f_start": (float, 5.0),
        "f_stop": (float, 2000.0),
        "f_count": (int, 60),
    },
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Linear grid; ``count == 1`` yields ``[start]``."""

    axis: str
    start: float
    stop: float
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"{self.axis}: count must be >= 1")
        if self.start > self.stop:
            raise ValueError(f"{self.axis}: start must not exceed stop")

    def values(self):
        if self.count == 1:
            return np.array([self.start])
        return np.linspace(self.start, self.stop, self.count)


_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s\[][^=:]*?)\s*[=:]")


def _line_index(text):
    """Map (section, key) to the 1-based line where it is defined."""
    where = {}
    section = None
    for n, line in enumerate(text.splitlines(), 1):
        m = _SECTION.match(line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), n)
            continue
        m = _KEY.match(line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), n)
    return where


class RunConfig:
    """Parsed configuration; ``cfg[section][key]`` gives typed values."""

    def __init__(self, values, text=""):
        self.values = values
        self.text = text

    def __getitem__(self, section):
        return self.values[section]

    @classmethod
    def defaults(cls):
        return cls({s: {k: v[1] for k, v in keys.items()} for s, keys in SCHEMA.items()})

    @classmethod
    def from_text(cls, text, source="<config>"):
        parser = configparser.ConfigParser(interpolation=None, strict=True,
                                           inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}".replace("\n", " ")) from exc
        where = _line_index(text)
        values = cls.defaults().values
        for section in parser.sections():
            line = where.get((section, None), "?")
            if section not in SCHEMA:
                raise ConfigError(f"{source}:{line}: unknown section [{section}]")
            for key, raw in parser.items(section):
                line = where.get((section, key), "?")
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{source}:{line}: unknown key '{key}' in [{section}]")
                typ = SCHEMA[section][key][0]
                try:
                    values[section][key] = typ(raw)
                except ValueError as exc:
                    raise ConfigError(
                        f"{source}:{line}: [{section}] {key} = {raw!r} is not a valid "
                        f"{typ.__name__}") from exc
        return cls(values, text)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
        return cls.from_text(text, source=str(path))
