"""INI run configuration for the command line front end.

Sections and keys (all optional, defaults per scenario)::

    [scenario]     name
    [coefficient]  expr | file, dim, lattice
    [grid]         resolution (list), cell_resolution
    [heat]         t, eps, length, resolution, t_list, a, periods, per_period
    [bloch]        theta, path, n_bands, N, M, resolution, scheme
    [magnetic]     potential (three comma separated polynomials), coupling
    [tolerances]   cg, expected, expected_tol
    [output]       dir

Lists are comma separated.  ``path`` also accepts ``start:stop:count``.
A matrix ``expr`` is a JSON nested list of strings, ``null`` mirroring the
upper triangle.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError

SCENARIOS = ("homog1d", "homognd", "heisenberg", "bands", "refine", "heat-compare", "magnetic-closure", "validate")


class ConfigError(Exception):
    """Unreadable or unparseable configuration (exit status 2)."""


@dataclass
class RunConfig:
    scenario: str
    sections: dict = field(default_factory=dict)
    source: str | None = None

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def floats(self, section, key, default):
        raw = self.get(section, key)
        if raw is None:
            return tuple(default)
        try:
            vals = tuple(float(v) for v in raw.split(",") if v.strip())
        except ValueError:
            raise ValidationError(f"[{section}] {key}: expected a list of numbers, got {raw!r}") from None
        if not vals:
            raise ValidationError(f"[{section}] {key}: list is empty")
        return vals

    def positive_floats(self, section, key, default):
        vals = self.floats(section, key, default)
        if any(not v > 0 for v in vals):
            raise ValidationError(f"[{section}] {key}: values must be positive, got {vals}")
        return vals

    def float(self, section, key, default):
        return self.floats(section, key, (default,))[0]

    def ints(self, section, key, default):
        vals = self.floats(section, key, default)
        if any(v != int(v) or v < 1 for v in vals):
            raise ValidationError(f"[{section}] {key}: expected positive integers, got {vals}")
        return tuple(int(v) for v in vals)

    def int(self, section, key, default):
        return self.ints(section, key, (default,))[0]

    def path(self, section, key, default):
        raw = self.get(section, key)
        if raw is None:
            return np.asarray(default, dtype=float)
        if ":" in raw:
            parts = raw.split(":")
            if len(parts) != 3:
                raise ValidationError(f"[{section}] {key}: range syntax is start:stop:count")
            try:
                start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            except ValueError:
                raise ValidationError(f"[{section}] {key}: bad range {raw!r}") from None
            if count < 1:
                raise ValidationError(f"[{section}] {key}: count must be positive")
            return np.linspace(start, stop, count)
        return np.asarray(self.floats(section, key, default))

    def canonical(self):
        """Deterministic text form used for hashing and echoing."""
        lines = [f"scenario = {self.scenario}"]
        for sec in sorted(self.sections):
            lines.append(f"[{sec}]")
            for key in sorted(self.sections[sec]):
                lines.append(f"{key} = {self.sections[sec][key]}")
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def tolerances(self):
        return dict(sorted(self.sections.get("tolerances", {}).items()))


def load_config(path=None, scenario=None, overrides=None):
    """Read an INI file (or nothing) into a :class:`RunConfig`."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (configparser.Error, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
    sections = {sec: {k: v.strip() for k, v in parser.items(sec)} for sec in parser.sections()}
    for (sec, key), value in (overrides or {}).items():
        sections.setdefault(sec, {})[key] = str(value)
    named = sections.get("scenario", {}).get("name")
    if scenario is None:
        scenario = named
    elif named is not None and named != scenario and scenario != "validate":
        raise ConfigError(f"config names scenario {named!r} but {scenario!r} was requested")
    if scenario is None:
        raise ConfigError("no scenario given on the command line or in [scenario] name")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {', '.join(SCENARIOS)}")
    return RunConfig(scenario, sections, path)


def coefficient_source(cfg, default_expr="2 + sin(2*pi*x)", default_dim=1, lattice="cubic"):
    """``(kind, payload, dim, lattice)`` with ``kind`` in ``{'expr', 'file'}``."""
    lattice = cfg.get("coefficient", "lattice", lattice)
    dim = int(cfg.float("coefficient", "dim", 3 if lattice == "heisenberg" else default_dim))
    file = cfg.get("coefficient", "file")
    if file is not None:
        base = os.path.dirname(cfg.source) if cfg.source else ""
        full = file if os.path.isabs(file) else os.path.join(base, file)
        if not os.path.isfile(full):
            raise ConfigError(f"coefficient file not found: {full}")
        return "file", full, dim, lattice
    expr = cfg.get("coefficient", "expr", default_expr)
    if isinstance(expr, str) and expr.lstrip().startswith("["):
        try:
            expr = json.loads(expr)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"[coefficient] expr: bad matrix literal ({exc})") from None
    return "expr", expr, dim, lattice
