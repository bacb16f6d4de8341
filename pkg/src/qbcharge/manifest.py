"""Run manifests: INI-style files describing a grid of charging runs.

Example::

    [run]
    name = coherent_grid

    [transmon]
    ej_over_ec = 100

    [sweep]
    g = 4e-3, 8e-3          # units of omega_p
    q = 0:1:0.05            # start:stop:step, stop included
    tau = 1                 # units of tau_p
    c = 1

    [protocol]
    n_collisions = 5000
    record_every = 5

Unset keys take the defaults in :data:`DEFAULTS`. Every error names the
section, the key and, when it comes from a file, the line.
"""
from __future__ import annotations

import configparser
import itertools
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .collision import AncillaSpec, ProtocolConfig
from .exceptions import ManifestError
from .transmon import TransmonSpec

ENV_OUTPUT_ROOT = "QBCHARGE_OUTPUT_ROOT"
ENV_THREADS = "QBCHARGE_THREADS"

# section -> key -> (kind, default); kind "grid" is a non-empty list of floats
SCHEMA = {
    "run": {"name": ("str", "run")},
    "transmon": {"ej_over_ec": ("float", 100.0), "ng": ("float", 0.0),
                 "charge_cutoff": ("int", 35), "battery_levels": ("int", 15)},
    "ancilla": {"detuning": ("float", 0.0)},
    "sweep": {"g": ("grid", None), "q": ("grid", (0.5,)), "c": ("grid", (1.0,)),
              "tau": ("grid", (1.0,))},
    "protocol": {"n_collisions": ("int", 1000), "record_every": ("int", 1),
                 "frame": ("str", "interaction")},
    "output": {"directory": ("str", "out"), "workers": ("int", 0)},
}
DEFAULTS = {s: {k: v[1] for k, v in keys.items()} for s, keys in SCHEMA.items()}

_RANGE = re.compile(r"^\s*([^:]+):([^:]+):([^:]+)\s*$")


@dataclass(frozen=True)
class RunManifest:
    name: str = "run"
    transmon: TransmonSpec = field(default_factory=TransmonSpec)
    detuning: float = 0.0
    g: tuple = ()
    q: tuple = (0.5,)
    c: tuple = (1.0,)
    tau: tuple = (1.0,)
    n_collisions: int = 1000
    record_every: int = 1
    frame: str = "interaction"
    output_dir: str = "out"
    workers: int = 0  # 0 = available cores

    @property
    def product_size(self) -> int:
        return len(self.g) * len(self.tau) * len(self.q) * len(self.c)

    def resolved_workers(self) -> int:
        env = os.environ.get(ENV_THREADS)
        if env:
            return max(1, int(env))
        return self.workers or os.cpu_count() or 1

    def resolved_output(self) -> Path:
        return Path(os.environ.get(ENV_OUTPUT_ROOT) or self.output_dir)

    def configs(self) -> list[ProtocolConfig]:
        """Grid points in a fixed order: g, tau, q, c (last varies fastest)."""
        out = []
        for g, tau, q, c in itertools.product(self.g, self.tau, self.q, self.c):
            out.append(ProtocolConfig(
                coupling_g=g, tau=tau, n_collisions=self.n_collisions,
                transmon=self.transmon,
                ancilla=AncillaSpec(q=q, c=c, detuning=self.detuning),
                record_every=self.record_every, frame=self.frame))
        return out

    def to_dict(self) -> dict:
        t = self.transmon
        return {
            "run": {"name": self.name},
            "transmon": {"ej_over_ec": t.ej_over_ec, "ng": t.ng,
                         "charge_cutoff": t.charge_cutoff, "battery_levels": t.battery_levels},
            "ancilla": {"detuning": self.detuning},
            "sweep": {"g": list(self.g), "q": list(self.q), "c": list(self.c),
                      "tau": list(self.tau)},
            "protocol": {"n_collisions": self.n_collisions, "record_every": self.record_every,
                         "frame": self.frame},
            "output": {"directory": self.output_dir, "workers": self.workers},
        }


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def serialize_manifest(m: RunManifest) -> str:
    lines = []
    for section, keys in m.to_dict().items():
        lines.append(f"[{section}]")
        lines += [f"{k} = {_fmt(v)}" for k, v in keys.items()]
        lines.append("")
    return "\n".join(lines)


def _where(section, key, lines) -> str:
    ln = lines.get((section, key))
    return f"[{section}] {key}" + (f" (line {ln})" if ln else "")


def _parse_grid(text, where) -> tuple:
    text = text.strip()
    if not text:
        raise ManifestError(f"{where}: empty grid")
    m = _RANGE.match(text)
    try:
        parts = [float(x) for x in (m.groups() if m else text.split(",")) if x.strip()]
    except ValueError as exc:
        raise ManifestError(f"{where}: cannot parse {text!r} as numbers") from exc
    if m:
        start, stop, step = parts
        if step <= 0 or stop < start:
            raise ManifestError(f"{where}: range needs step > 0 and stop >= start")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = [float(f"{start + i * step:.12g}") for i in range(count)]
    else:
        vals = parts
    if not vals:
        raise ManifestError(f"{where}: empty grid")
    if any(not math.isfinite(v) for v in vals):
        raise ManifestError(f"{where}: non-finite value")
    return tuple(vals)


def _convert(kind, text, where):
    try:
        if kind == "float":
            return float(text)
        if kind == "int":
            f = float(text)
            if f != int(f):
                raise ValueError
            return int(f)
    except ValueError as exc:
        raise ManifestError(f"{where}: expected {kind}, got {text!r}") from exc
    if kind == "grid":
        return _parse_grid(text, where)
    return text.strip()


def _line_numbers(text: str) -> dict:
    out, section = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
        elif section and line and line[0] not in "#;":
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            out.setdefault((section, key), i)
    return out


def parse_manifest_text(text: str, overrides=(), source: str = "<manifest>") -> RunManifest:
    """Parse manifest text, then apply ``key=value`` or ``section.key=value`` overrides."""
    cp = configparser.ConfigParser(strict=True, inline_comment_prefixes=("#", ";"),
                                   interpolation=None, default_section="__none__")
    try:
        cp.read_string(text, source=source)
    except configparser.DuplicateOptionError as exc:
        raise ManifestError(
            f"{source}: duplicate key {exc.option!r} in [{exc.section}] (line {exc.lineno})") from exc
    except configparser.DuplicateSectionError as exc:
        raise ManifestError(f"{source}: duplicate section [{exc.section}] (line {exc.lineno})") from exc
    except configparser.Error as exc:
        raise ManifestError(f"{source}: {exc}") from exc
    lines = _line_numbers(text)

    raw = {s: {} for s in SCHEMA}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ManifestError(f"{source}: unknown section [{section}]")
        for key, value in cp.items(section):
            if key not in SCHEMA[section]:
                raise ManifestError(f"{source}: unknown key {_where(section, key, lines)}")
            raw[section][key] = value
    for item in overrides:
        section, key, value = _split_override(item)
        raw[section][key] = value
        lines.pop((section, key), None)

    vals = {}
    for section, keys in SCHEMA.items():
        for key, (kind, default) in keys.items():
            where = f"{source}: {_where(section, key, lines)}"
            if key in raw[section]:
                vals[(section, key)] = _convert(kind, raw[section][key], where)
            elif default is None:
                raise ManifestError(f"{source}: missing required key [{section}] {key}")
            else:
                vals[(section, key)] = default
    return _build(vals, lines, source)


def _split_override(item: str):
    if "=" not in item:
        raise ManifestError(f"override {item!r} is not of the form key=value")
    key, value = item.split("=", 1)
    key = key.strip().lower()
    if "." in key:
        section, key = key.split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ManifestError(f"override: unknown key {section}.{key}")
        return section, key, value
    owners = [s for s, keys in SCHEMA.items() if key in keys]
    if len(owners) != 1:
        raise ManifestError(f"override: unknown key {key!r}")
    return owners[0], key, value


def _build(vals, lines, source) -> RunManifest:
    def check(ok, section, key, msg):
        if not ok:
            raise ManifestError(f"{source}: {_where(section, key, lines)}: {msg}")

    for key in ("g", "tau"):
        check(all(v > 0 for v in vals[("sweep", key)]), "sweep", key, "values must be positive")
    check(all(v < 1 for v in vals[("sweep", "g")]), "sweep", "g",
          "couplings are in units of omega_p and must be < 1")
    for key in ("q", "c"):
        check(all(0 <= v <= 1 for v in vals[("sweep", key)]), "sweep", key,
              "values must lie in [0, 1]")
    check(vals[("transmon", "ej_over_ec")] > 0, "transmon", "ej_over_ec", "must be positive")
    check(vals[("transmon", "charge_cutoff")] >= 1, "transmon", "charge_cutoff", "must be >= 1")
    check(vals[("transmon", "battery_levels")] >= 2, "transmon", "battery_levels", "must be >= 2")
    check(vals[("protocol", "n_collisions")] >= 0, "protocol", "n_collisions", "must be >= 0")
    check(vals[("protocol", "record_every")] >= 1, "protocol", "record_every", "must be >= 1")
    check(vals[("protocol", "frame")] in ("interaction", "lab"), "protocol", "frame",
          "must be 'interaction' or 'lab'")
    check(vals[("output", "workers")] >= 0, "output", "workers", "must be >= 0")
    try:
        transmon = TransmonSpec(
            ej_over_ec=vals[("transmon", "ej_over_ec")], ng=vals[("transmon", "ng")],
            charge_cutoff=vals[("transmon", "charge_cutoff")],
            battery_levels=vals[("transmon", "battery_levels")])
    except ValueError as exc:
        raise ManifestError(f"{source}: [transmon]: {exc}") from exc
    return RunManifest(
        name=vals[("run", "name")], transmon=transmon, detuning=vals[("ancilla", "detuning")],
        g=vals[("sweep", "g")], q=vals[("sweep", "q")], c=vals[("sweep", "c")],
        tau=vals[("sweep", "tau")], n_collisions=vals[("protocol", "n_collisions")],
        record_every=vals[("protocol", "record_every")], frame=vals[("protocol", "frame")],
        output_dir=vals[("output", "directory")], workers=vals[("output", "workers")])


def parse_manifest(path, overrides=()) -> RunManifest:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest {path} does not exist")
    return parse_manifest_text(path.read_text(), overrides, source=str(path))


def with_overrides(m: RunManifest, overrides) -> RunManifest:
    return parse_manifest_text(serialize_manifest(m), overrides)


__all__ = ["RunManifest", "parse_manifest", "parse_manifest_text", "serialize_manifest",
           "with_overrides", "DEFAULTS", "ENV_OUTPUT_ROOT", "ENV_THREADS"]
