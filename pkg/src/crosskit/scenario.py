"""JSON scenario files: schema check and conversion to solver objects.

Top-level keys: mass, convention, driver, channels, continuum, commands.
Every problem found is reported with the dotted path of the offending key.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from crosskit.greens_core import GreenConvention, PotentialSpec

COMMANDS = ("green", "solve2", "solven", "continuum", "timedomain", "validate", "sweep")
TOP_KEYS = {"mass", "convention", "driver", "channels", "continuum", "commands"}
COMMAND_KEYS = {
    "green": {"energies", "x", "x0", "eta"},
    "solve2": {"energies", "incidence"},
    "solven": {"energies", "incidence"},
    "continuum": {"frequencies", "eta"},
    "timedomain": {"packet", "times", "eta", "omega_step", "omega_range"},
    "validate": {"energies"},
    "sweep": {"energies"},
}


class SchemaError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class Scenario:
    path: str
    raw: dict
    sha256: str

    @property
    def mass(self):
        return float(self.raw["mass"])

    @property
    def convention(self):
        return GreenConvention.parse(self.raw.get("convention", "retarded"))

    @property
    def directory(self):
        return os.path.dirname(os.path.abspath(self.path))


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def grid_values(spec):
    """A grid is a list of numbers or {"start", "stop", "num"}."""
    if isinstance(spec, dict):
        return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
    return np.asarray(spec, dtype=float)


def _check_grid(spec, key, problems):
    if isinstance(spec, dict):
        missing = {"start", "stop", "num"} - set(spec)
        if missing:
            problems.append(f"{key}: missing {', '.join(sorted(missing))}")
            return
        if not all(_is_number(spec[k]) for k in ("start", "stop")):
            problems.append(f"{key}: start and stop must be finite numbers")
            return
        if not (isinstance(spec["num"], int) and spec["num"] >= 1):
            problems.append(f"{key}.num: must be a positive integer")
            return
        if spec["num"] > 1 and not spec["stop"] > spec["start"]:
            problems.append(f"{key}: grid must be strictly increasing")
        return
    if not isinstance(spec, list) or not spec:
        problems.append(f"{key}: expected a non-empty list or {{start, stop, num}}")
        return
    if not all(_is_number(v) for v in spec):
        problems.append(f"{key}: entries must be finite numbers")
        return
    if any(b <= a for a, b in zip(spec, spec[1:])):
        problems.append(f"{key}: grid must be strictly increasing")


def _check_potential(p, key, problems):
    if not isinstance(p, dict):
        problems.append(f"{key}: expected an object")
        return
    kind = p.get("kind")
    if kind == "constant":
        allowed = {"kind", "v0"}
    elif kind == "linear":
        allowed = {"kind", "v0", "slope"}
        if not _is_number(p.get("slope")):
            problems.append(f"{key}.slope: required finite number")
    elif kind == "sampled":
        allowed = {"kind", "x", "v"}
        xs, vs = p.get("x"), p.get("v")
        if not (isinstance(xs, list) and isinstance(vs, list) and len(xs) == len(vs) >= 3):
            problems.append(f"{key}: sampled potential needs equal-length x and v lists (>= 3)")
        else:
            _check_grid(xs, f"{key}.x", problems)
            if not all(_is_number(v) for v in vs):
                problems.append(f"{key}.v: entries must be finite numbers")
    else:
        problems.append(f"{key}.kind: expected constant, linear or sampled, got {kind!r}")
        return
    if kind != "sampled" and "v0" in p and not _is_number(p["v0"]):
        problems.append(f"{key}.v0: must be a finite number")
    for extra in sorted(set(p) - allowed):
        problems.append(f"{key}.{extra}: unknown key")


def build_potential(p, mass):
    if p["kind"] == "constant":
        return PotentialSpec.constant(p.get("v0", 0.0), mass)
    if p["kind"] == "linear":
        return PotentialSpec.linear(p.get("v0", 0.0), p["slope"], mass)
    return PotentialSpec.sampled(p["x"], p["v"], mass)


def check(raw, base_dir="."):
    """All schema problems in ``raw`` (empty list when valid)."""
    problems = []
    if not isinstance(raw, dict):
        return ["<root>: expected a JSON object"]
    for extra in sorted(set(raw) - TOP_KEYS):
        problems.append(f"{extra}: unknown key")
    mass = raw.get("mass")
    if not (_is_number(mass) and mass > 0):
        problems.append("mass: must be a positive finite number")
    try:
        GreenConvention.parse(raw.get("convention", "retarded"))
    except (ValueError, KeyError):
        problems.append(f"convention: unknown value {raw.get('convention')!r}")
    if "driver" not in raw:
        problems.append("driver: required")
    else:
        _check_potential(raw["driver"], "driver", problems)
    channels = raw.get("channels", [])
    if not isinstance(channels, list):
        problems.append("channels: expected a list")
        channels = []
    for i, ch in enumerate(channels):
        key = f"channels[{i}]"
        if not isinstance(ch, dict):
            problems.append(f"{key}: expected an object")
            continue
        _check_potential(ch.get("potential"), f"{key}.potential", problems)
        for name in ("strength", "point"):
            if not _is_number(ch.get(name)):
                problems.append(f"{key}.{name}: required finite number")
        for extra in sorted(set(ch) - {"potential", "strength", "point"}):
            problems.append(f"{key}.{extra}: unknown key")
    cont = raw.get("continuum")
    if cont is not None:
        _check_continuum(cont, base_dir, problems)
        if channels:
            problems.append("continuum: cannot be combined with a non-empty channels list")
    commands = raw.get("commands")
    if not isinstance(commands, list) or not commands:
        problems.append("commands: expected a non-empty list")
        commands = []
    for i, cmd in enumerate(commands):
        _check_command(cmd, f"commands[{i}]", raw, channels, cont, base_dir, problems)
    return problems


def _check_continuum(cont, base_dir, problems):
    if not isinstance(cont, dict):
        problems.append("continuum: expected an object")
        return
    form = cont.get("kernel")
    if form not in ("paper_exponential", "tabulated"):
        problems.append(f"continuum.kernel: expected paper_exponential or tabulated, got {form!r}")
    amp = cont.get("amplitude", 1.0)
    if not (_is_number(amp) and amp >= 0):
        problems.append("continuum.amplitude: must be a non-negative finite number")
    if not _is_number(cont.get("attach_point", 0.0)):
        problems.append("continuum.attach_point: must be a finite number")
    if form == "tabulated":
        table = cont.get("table")
        if not isinstance(table, str):
            problems.append("continuum.table: path to a two-column file required")
        elif not os.path.isfile(os.path.join(base_dir, table)):
            problems.append(f"continuum.table: file {table!r} not found")
        if not (_is_number(cont.get("tail_bound", 0.0)) and cont.get("tail_bound", 0.0) >= 0):
            problems.append("continuum.tail_bound: must be a non-negative number")
    allowed = {"kernel", "amplitude", "attach_point", "table", "tail_bound"}
    for extra in sorted(set(cont) - allowed):
        problems.append(f"continuum.{extra}: unknown key")


def _check_command(cmd, key, raw, channels, cont, base_dir, problems):
    if not isinstance(cmd, dict):
        problems.append(f"{key}: expected an object")
        return
    kind = cmd.get("type")
    if kind not in COMMANDS:
        problems.append(f"{key}.type: expected one of {', '.join(COMMANDS)}, got {kind!r}")
        return
    allowed = COMMAND_KEYS[kind] | {"type", "output"}
    for extra in sorted(set(cmd) - allowed):
        problems.append(f"{key}.{extra}: unknown key")
    out = cmd.get("output")
    if out is not None:
        if not isinstance(out, str) or not out or os.path.isabs(out):
            problems.append(f"{key}.output: must be a relative file name")
    grid_key = "frequencies" if kind == "continuum" else "times" if kind == "timedomain" else "energies"
    if grid_key not in cmd:
        problems.append(f"{key}.{grid_key}: required")
    else:
        _check_grid(cmd[grid_key], f"{key}.{grid_key}", problems)
    if kind == "green":
        if "x" not in cmd:
            problems.append(f"{key}.x: required")
        else:
            _check_grid(cmd["x"], f"{key}.x", problems)
        if "x0" in cmd and not _is_number(cmd["x0"]):
            problems.append(f"{key}.x0: must be a finite number")
    if kind in ("green", "continuum", "timedomain") and "eta" in cmd:
        if not (_is_number(cmd["eta"]) and cmd["eta"] >= 0):
            problems.append(f"{key}.eta: must be a non-negative number")
    if kind in ("solve2", "solven") and cmd.get("incidence", "left") not in ("left", "right"):
        problems.append(f"{key}.incidence: expected left or right")
    if kind == "solve2" and len(channels) != 1:
        problems.append(f"{key}.type: solve2 needs exactly one channel, found {len(channels)}")
    if kind in ("solve2", "solven", "sweep") and cont is not None:
        problems.append(f"{key}.type: {kind} works on discrete channels, not a continuum")
    if kind == "continuum" and cont is None:
        problems.append(f"{key}.type: continuum command needs a continuum block")
    if kind == "timedomain":
        _check_timedomain(cmd, key, raw, cont, problems)


def _check_timedomain(cmd, key, raw, cont, problems):
    drv = raw.get("driver")
    if isinstance(drv, dict) and drv.get("kind") != "constant":
        problems.append(f"{key}.type: timedomain needs a constant driver")
    if cont is not None:
        problems.append(f"{key}.type: timedomain works on discrete channels, not a continuum")
    pk = cmd.get("packet")
    if not isinstance(pk, dict):
        problems.append(f"{key}.packet: required object with center, momentum, width")
    else:
        for name in ("center", "momentum", "width"):
            if not _is_number(pk.get(name)):
                problems.append(f"{key}.packet.{name}: required finite number")
        if _is_number(pk.get("width")) and pk["width"] <= 0:
            problems.append(f"{key}.packet.width: must be positive")
    for name in ("eta", "omega_step"):
        if name in cmd and not (_is_number(cmd[name]) and cmd[name] > 0):
            problems.append(f"{key}.{name}: must be a positive number")
    if "omega_range" in cmd:
        r = cmd["omega_range"]
        if not (isinstance(r, list) and len(r) == 2 and all(_is_number(v) for v in r) and r[1] > r[0]):
            problems.append(f"{key}.omega_range: expected [low, high] with low < high")


def load(path):
    """Parse and check a scenario file; raise SchemaError listing every problem."""
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError([f"<root>: not valid JSON ({exc})"]) from None
    problems = check(raw, os.path.dirname(os.path.abspath(path)))
    if problems:
        raise SchemaError(problems)
    return Scenario(path, raw, hashlib.sha256(data).hexdigest())


def check_output_dir(out_dir, scenario):
    """Problems with writing the command outputs under ``out_dir``."""
    problems = []
    out_dir = os.path.abspath(out_dir)
    dirs = {out_dir}
    for cmd in scenario.raw["commands"]:
        name = cmd.get("output")
        if name:
            dirs.add(os.path.dirname(os.path.join(out_dir, name)))
    for d in sorted(dirs):
        probe = d
        while not os.path.exists(probe):
            parent = os.path.dirname(probe)
            if parent == probe:
                break
            probe = parent
        if not os.access(probe, os.W_OK):
            problems.append(f"output: directory {d!r} is not writable")
    return problems
