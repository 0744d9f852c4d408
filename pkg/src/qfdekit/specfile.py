"""Problem-spec text files: bracketed sections of ``key = value`` lines.

Example::

    [grid]
    t_end = 1.0
    n_points = 1001

    [equation]
    lambda = 1.0
    x0 = 1.0
    y0 = 1.0

    [fields]
    b = const(0)
    f1 = const(0)
    f2 = const(1)
    g = const(0)
    p = const(0)

    [constants]
    L = 1
    K = 1
    k = 0
    h_l1 = 0

``[lower]`` (u, v: a constant or n_points comma-separated values), ``[engine]``
(tol_outer, max_outer, direction = lower|upper, slack = auto|number) and
``[audit]`` (trials, rng_seed, box_lo, box_hi) are optional.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .engine import Direction, EngineConfig
from .fields import FieldSyntaxError, parse_field
from .operators import DEFAULT_SING_FLOOR, DomainBox
from .ordered_space import Grid, GridFunction
from .problem import ProblemInstance

REQUIRED = {
    "grid": ("t_end", "n_points"),
    "equation": ("lambda", "x0", "y0"),
    "fields": ("b", "f1", "f2", "g", "p"),
    "constants": ("L", "K", "k", "h_l1"),
}
OPTIONAL = {
    "equation": ("singularity_floor",),
    "lower": ("u", "v"),
    "engine": ("tol_outer", "max_outer", "direction", "slack"),
    "audit": ("trials", "rng_seed", "box_lo", "box_hi"),
}
SECTION_ORDER = ("grid", "equation", "fields", "constants", "lower", "engine", "audit")


class SpecError(ValueError):
    def __init__(self, msg: str, line: Optional[int] = None, col: Optional[int] = None):
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", column {col}" if col is not None else "") + ": "
        super().__init__(loc + msg)
        self.line = line
        self.col = col


@dataclass
class SpecDocument:
    """Parsed sections as raw strings; conversion happens in :meth:`instance`."""

    sections: dict
    locations: dict = field(default_factory=dict, compare=False)
    source: str = field(default="<string>", compare=False)

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def _loc(self, section, key):
        return self.locations.get((section, key), (None, None))

    def _float(self, section, key, default=None) -> float:
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise SpecError(f"[{section}] {key}: expected a number, got {raw!r}",
                            *self._loc(section, key)) from None

    def _int(self, section, key, default=None) -> int:
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise SpecError(f"[{section}] {key}: expected an integer, got {raw!r}",
                            *self._loc(section, key)) from None

    def _field(self, key):
        raw = self.get("fields", key)
        try:
            return parse_field(raw)
        except FieldSyntaxError as exc:
            line, col = self._loc("fields", key)
            if col is not None and exc.col is not None:
                col = col + exc.col
            raise SpecError(f"[fields] {key}: {exc}", line, col) from None

    def instance(self, n_points: Optional[int] = None) -> ProblemInstance:
        try:
            grid = Grid(self._float("grid", "t_end"), n_points or self._int("grid", "n_points"))
        except ValueError as exc:
            if isinstance(exc, SpecError):
                raise
            raise SpecError(f"[grid] {exc}", *self._loc("grid", "n_points")) from None
        lower = None
        if "lower" in self.sections:
            lower = (self._tabulated(grid, "u"), self._tabulated(grid, "v"))
        box = None
        if self.get("audit", "box_lo") is not None or self.get("audit", "box_hi") is not None:
            box = DomainBox(self._float("audit", "box_lo", 0.0), self._float("audit", "box_hi", 1.0))
        try:
            return ProblemInstance(
                lam=self._float("equation", "lambda"), grid=grid,
                b=self._field("b"), f1=self._field("f1"), f2=self._field("f2"),
                g=self._field("g"), p=self._field("p"),
                x0=self._float("equation", "x0"), y0=self._float("equation", "y0"),
                L=self._float("constants", "L"), K=self._float("constants", "K"),
                k=self._float("constants", "k"), h_l1=self._float("constants", "h_l1"),
                lower=lower,
                sing_floor=self._float("equation", "singularity_floor", DEFAULT_SING_FLOOR),
                box=box, name=Path(self.source).stem)
        except SpecError:
            raise
        except ValueError as exc:
            raise SpecError(str(exc)) from None

    def _tabulated(self, grid: Grid, key: str) -> GridFunction:
        raw = self.get("lower", key)
        if raw is None:
            raise SpecError(f"[lower] needs both u and v (missing {key})")
        try:
            vals = [float(v) for v in raw.replace("\n", " ").split(",") if v.strip()]
        except ValueError:
            raise SpecError(f"[lower] {key}: expected numbers", *self._loc("lower", key)) from None
        if len(vals) == 1:
            return GridFunction.constant(grid, vals[0])
        if len(vals) != grid.n_points:
            raise SpecError(f"[lower] {key}: {len(vals)} values for {grid.n_points} nodes",
                            *self._loc("lower", key))
        return GridFunction(grid, np.array(vals))

    def engine_config(self, record_full_iterates: bool = False) -> EngineConfig:
        direction = (self.get("engine", "direction") or "lower").strip().lower()
        if direction not in ("lower", "upper"):
            raise SpecError("[engine] direction must be 'lower' or 'upper'",
                            *self._loc("engine", "direction"))
        slack = (self.get("engine", "slack") or "auto").strip().lower()
        return EngineConfig(
            tol_outer=self._float("engine", "tol_outer", 1e-10),
            max_outer=self._int("engine", "max_outer", 200),
            slack=None if slack == "auto" else self._float("engine", "slack"),
            direction=Direction.FROM_LOWER if direction == "lower" else Direction.FROM_UPPER,
            record_full_iterates=record_full_iterates,
        )

    def audit_settings(self) -> tuple[int, int]:
        return self._int("audit", "trials", 200), self._int("audit", "rng_seed", 0)

    def to_text(self) -> str:
        out = []
        for sec in SECTION_ORDER:
            if sec not in self.sections:
                continue
            out.append(f"[{sec}]")
            keys = REQUIRED.get(sec, ()) + OPTIONAL.get(sec, ())
            for key in keys:
                if key in self.sections[sec]:
                    out.append(f"{key} = {self.sections[sec][key]}")
            out.append("")
        return "\n".join(out)


_KEY_RE = re.compile(r"^\s*([^=\s\[#;][^=]*?)\s*=\s*(.*)$")
_SEC_RE = re.compile(r"^\s*\[([^\]]+)\]")


def _locate(text: str) -> dict:
    locs, section = {}, None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SEC_RE.match(line)
        if m:
            section = m.group(1).strip()
            locs[(section, None)] = (lineno, m.start(1) + 1)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            locs[(section, m.group(1))] = (lineno, m.start(2) + 1)
    return locs


def parse_spec(text: str, source: str = "<string>") -> SpecDocument:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   default_section="__none__", strict=True)
    cp.optionxform = str  # K and k are different constants
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise SpecError("expected a [section] header before the first key", exc.lineno, 1) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise SpecError(exc.message.split(": ", 1)[-1], exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise SpecError(f"cannot parse {line!r}", lineno, 1) from None
    locs = _locate(text)
    sections = {}
    for sec in cp.sections():
        if sec not in REQUIRED and sec not in OPTIONAL:
            raise SpecError(f"unknown section [{sec}]", *locs.get((sec, None), (None, None)))
        allowed = REQUIRED.get(sec, ()) + OPTIONAL.get(sec, ())
        for key in cp[sec]:
            if key not in allowed:
                raise SpecError(f"unknown key {key!r} in [{sec}] (allowed: {', '.join(allowed)})",
                                *locs.get((sec, key), (None, None)))
        sections[sec] = {k: v.strip() for k, v in cp[sec].items()}
    for sec, keys in REQUIRED.items():
        if sec not in sections:
            raise SpecError(f"missing required section [{sec}]")
        for key in keys:
            if key not in sections[sec] or sections[sec][key] == "":
                raise SpecError(f"missing required key {key!r} in [{sec}]",
                                *locs.get((sec, None), (None, None)))
    return SpecDocument(sections, locs, source)


def load_spec(path) -> SpecDocument:
    path = Path(path)
    return parse_spec(path.read_text(), str(path))


def instance_to_text(inst: ProblemInstance, cfg: Optional[EngineConfig] = None,
                     trials: Optional[int] = None, rng_seed: Optional[int] = None) -> str:
    """Serialise an instance (and optional engine/audit settings) in full precision."""
    sec = {
        "grid": {"t_end": repr(inst.grid.t_end), "n_points": str(inst.grid.n_points)},
        "equation": {"lambda": repr(float(inst.lam)), "x0": repr(float(inst.x0)),
                     "y0": repr(float(inst.y0)), "singularity_floor": repr(float(inst.sing_floor))},
        "fields": {k: getattr(inst, k).to_text() for k in ("b", "f1", "f2", "g", "p")},
        "constants": {"L": repr(float(inst.L)), "K": repr(float(inst.K)), "k": repr(float(inst.k)),
                      "h_l1": repr(float(inst.h_l1))},
    }
    if inst.lower is not None:
        sec["lower"] = {}
        for key, fn in zip(("u", "v"), inst.lower):
            vals = fn.values
            sec["lower"][key] = (repr(float(vals[0])) if np.ptp(vals) == 0
                                 else ", ".join(repr(float(v)) for v in vals))
    if cfg is not None:
        sec["engine"] = {"tol_outer": repr(cfg.tol_outer), "max_outer": str(cfg.max_outer),
                         "direction": "lower" if cfg.direction is Direction.FROM_LOWER else "upper",
                         "slack": "auto" if cfg.slack is None else repr(cfg.slack)}
    audit = {}
    if trials is not None:
        audit["trials"] = str(trials)
    if rng_seed is not None:
        audit["rng_seed"] = str(rng_seed)
    if inst.box is not None:
        audit["box_lo"], audit["box_hi"] = repr(inst.box.lo), repr(inst.box.hi)
    if audit:
        sec["audit"] = audit
    return SpecDocument(sec).to_text()
