"""On-disk formats: binary snapshots, the sectioned config file and versioned CSV tables."""

import configparser
import csv
import io
import math
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ac_solver import INITIAL_KINDS, InitialDataSpec, SimConfig
from .errors import ConfigError, CorruptSnapshot
from .geometry import Disk, GeometrySpec, Rectangle

# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

MAGIC = b"ACNS"
SNAPSHOT_VERSION = 1
KIND_VELOCITY = 1
KIND_PRESSURE = 2
KIND_STATE = 3
PERIODIC_BIT = 0x100


@dataclass
class Snapshot:
    cell_counts: tuple
    spacing: tuple
    epsilon: float  # nan for incompressible data
    t: float
    periodic: bool
    velocity: list = None
    pressure: np.ndarray = None
    version: int = SNAPSHOT_VERSION

    @property
    def ndim(self):
        return len(self.cell_counts)


def face_shapes(cell_counts, periodic):
    out = []
    for k in range(len(cell_counts)):
        s = list(cell_counts)
        if not periodic:
            s[k] += 1
        out.append(tuple(s))
    return out


def write_snapshot(path, t, u=None, p=None, epsilon=None):
    """Write velocity and/or pressure; the grid comes from whichever field is given."""
    geom = (u if u is not None else p).geometry
    kind = (KIND_VELOCITY if u is not None else 0) | (KIND_PRESSURE if p is not None else 0)
    if geom.periodic:
        kind |= PERIODIC_BIT
    eps = math.nan if epsilon is None else float(epsilon)
    head = [MAGIC, struct.pack("<II", SNAPSHOT_VERSION, geom.ndim)]
    head.append(struct.pack(f"<{geom.ndim}I", *geom.cell_counts))
    head.append(struct.pack(f"<{geom.ndim}d", *geom.spacing))
    head.append(struct.pack("<ddI", eps, float(t), kind))
    parts = []
    if u is not None:
        parts += [np.ascontiguousarray(c, dtype="<f8").tobytes() for c in u.components]
    if p is not None:
        parts.append(np.ascontiguousarray(p.values, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(head + parts))


def read_snapshot(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CorruptSnapshot(str(path), f"unreadable: {exc}") from exc

    def take(fmt, pos):
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CorruptSnapshot(str(path), "truncated header")
        return struct.unpack_from(fmt, data, pos), pos + size

    if data[:4] != MAGIC:
        raise CorruptSnapshot(str(path), "bad magic bytes")
    (version, ndim), pos = take("<II", 4)
    if version != SNAPSHOT_VERSION:
        raise CorruptSnapshot(str(path), f"unsupported version {version}")
    if ndim not in (2, 3):
        raise CorruptSnapshot(str(path), f"bad dimension {ndim}")
    counts, pos = take(f"<{ndim}I", pos)
    spacing, pos = take(f"<{ndim}d", pos)
    (eps, t, kind), pos = take("<ddI", pos)
    periodic = bool(kind & PERIODIC_BIT)
    kind &= ~PERIODIC_BIT
    if kind not in (KIND_VELOCITY, KIND_PRESSURE, KIND_STATE):
        raise CorruptSnapshot(str(path), f"bad kind tag {kind}")
    shapes = face_shapes(counts, periodic) if kind & KIND_VELOCITY else []
    if kind & KIND_PRESSURE:
        shapes = shapes + [tuple(counts)]
    expected = sum(int(np.prod(s)) for s in shapes) * 8
    if len(data) - pos != expected:
        raise CorruptSnapshot(
            str(path), f"payload is {len(data) - pos} bytes, header declares {expected}"
        )
    arrays = []
    for s in shapes:
        n = int(np.prod(s))
        arrays.append(np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(s).copy())
        pos += n * 8
    vel = arrays[:ndim] if kind & KIND_VELOCITY else None
    pres = arrays[-1] if kind & KIND_PRESSURE else None
    return Snapshot(tuple(counts), tuple(spacing), eps, t, periodic, vel, pres, version)


def snapshot_name(index):
    return f"snap_{index:06d}.acns"


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

SECTIONS = {
    "geometry": ("box", "cells", "obstacle", "center", "radius", "lo", "hi", "periodic"),
    "solver": (
        "epsilon", "mu", "dt", "t_end", "snapshot_every", "tol", "chorin_cells",
        "velocity_bound",
    ),
    "initial_data": ("kind", "seed", "amplitude", "max_mode", "path"),
    "sweep": ("epsilons", "workers", "basis_rank", "modulus_multiples", "snapshots"),
    "output": ("directory", "basis_rank", "snapshots"),
}


@dataclass
class RunConfig:
    sim: SimConfig
    epsilons: tuple = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
    workers: int = None  # None: available parallelism
    sweep_basis_rank: int = 256
    modulus_multiples: tuple = (2, 4, 8, 16)
    sweep_snapshots: bool = False
    directory: str = None
    basis_rank: int = 64
    snapshots: bool = True
    path: str = None


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]\s*$")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_index(text):
    """Map ``(section, key)`` and section names to 1-based line numbers."""
    where = {}
    section = None
    for no, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip()[0] in "#;":
            continue
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            where.setdefault(section, no)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), no)
    return where


class _Reader:
    def __init__(self, parser, where, path):
        self.parser, self.where, self.path = parser, where, path

    def fail(self, section, key, message):
        raise ConfigError(message, self.where.get((section, key)), self.path)

    def raw(self, section, key):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        return None

    def float(self, section, key, default, allow_auto=False):
        v = self.raw(section, key)
        if v is None:
            return default
        if allow_auto and v.lower() == "auto":
            return None
        try:
            out = float(v)
        except ValueError:
            self.fail(section, key, f"{section}.{key}: not a number: {v!r}")
        if not math.isfinite(out):
            self.fail(section, key, f"{section}.{key}: must be finite")
        return out

    def int(self, section, key, default):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            return int(v)
        except ValueError:
            self.fail(section, key, f"{section}.{key}: not an integer: {v!r}")

    def floats(self, section, key, default, count=None):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            out = tuple(float(x) for x in v.replace(",", " ").split())
        except ValueError:
            self.fail(section, key, f"{section}.{key}: not a list of numbers: {v!r}")
        if count is not None and len(out) != count:
            self.fail(section, key, f"{section}.{key}: expected {count} values, got {len(out)}")
        return out

    def bool(self, section, key, default):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            self.fail(section, key, f"{section}.{key}: not a boolean: {v!r}")


def parse_config(text, path=None):
    """Parse config text into a :class:`RunConfig`; unknown keys are errors."""
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str.lower
    try:
        parser.read_string(text, source=str(path or "<config>"))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", exc.lineno, path) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line, path) from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.section}.{exc.option}", exc.lineno, path) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno, path) from exc
    where = _line_index(text)
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", where.get(section), path)
        for key in parser.options(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key {section}.{key}", where.get((section, key)), path)
    r = _Reader(parser, where, path)
    base = SimConfig()

    # geometry
    gb = base.geometry
    box = r.floats("geometry", "box", gb.box_extents)
    d = len(box)
    if d not in (2, 3):
        r.fail("geometry", "box", "geometry.box: need 2 or 3 extents")
    cells = tuple(int(round(c)) for c in r.floats("geometry", "cells", gb.cell_counts, d))
    periodic = r.bool("geometry", "periodic", gb.periodic)
    kind = (r.raw("geometry", "obstacle") or ("none" if periodic or d != 2 else "disk")).lower()
    if kind == "disk":
        default_c = gb.obstacle.center if isinstance(gb.obstacle, Disk) and d == 2 else None
        center = r.floats("geometry", "center", default_c, d)
        if center is None:
            r.fail("geometry", "obstacle", "geometry.center is required for a disk")
        radius = r.float("geometry", "radius", 0.3)
        if radius <= 0:
            r.fail("geometry", "radius", "geometry.radius must be positive")
        obstacle = Disk(tuple(center), radius)
    elif kind == "rectangle":
        lo, hi = r.floats("geometry", "lo", None, d), r.floats("geometry", "hi", None, d)
        if lo is None or hi is None:
            r.fail("geometry", "obstacle", "a rectangle needs geometry.lo and geometry.hi")
        obstacle = Rectangle(tuple(lo), tuple(hi))
    elif kind == "none":
        obstacle = None
    else:
        r.fail("geometry", "obstacle", f"geometry.obstacle: unknown shape {kind!r}")
    geometry = GeometrySpec(tuple(box), cells, obstacle, periodic)

    # initial data
    ikind = (r.raw("initial_data", "kind") or base.initial.kind).lower()
    if ikind not in INITIAL_KINDS:
        r.fail("initial_data", "kind", f"initial_data.kind: unknown kind {ikind!r}")
    initial = InitialDataSpec(
        kind=ikind,
        seed=r.int("initial_data", "seed", base.initial.seed),
        amplitude=r.float("initial_data", "amplitude", base.initial.amplitude),
        max_mode=r.int("initial_data", "max_mode", base.initial.max_mode),
        path=r.raw("initial_data", "path"),
    )

    # solver
    chorin = (r.raw("solver", "chorin_cells") or base.chorin_cells).lower()
    if chorin not in ("obstacle", "farfield", "all", "none"):
        r.fail("solver", "chorin_cells", f"solver.chorin_cells: unknown value {chorin!r}")
    sim = SimConfig(
        epsilon=r.float("solver", "epsilon", base.epsilon),
        mu=r.float("solver", "mu", base.mu),
        dt=r.float("solver", "dt", None, allow_auto=True),
        t_end=r.float("solver", "t_end", base.t_end),
        geometry=geometry,
        initial=initial,
        snapshot_every=r.int("solver", "snapshot_every", base.snapshot_every),
        solver_tol=r.float("solver", "tol", base.solver_tol),
        chorin_cells=chorin,
        velocity_bound=r.float("solver", "velocity_bound", None, allow_auto=True),
    )
    for key, ok in (
        ("epsilon", sim.epsilon > 0),
        ("mu", sim.mu > 0),
        ("t_end", sim.t_end >= 0),
        ("snapshot_every", sim.snapshot_every >= 1),
        ("tol", sim.solver_tol > 0),
    ):
        if not ok:
            r.fail("solver", key, f"solver.{key}: out of range")
    if sim.dt is not None and sim.dt <= 0:
        r.fail("solver", "dt", "solver.dt must be positive")

    out = RunConfig(sim=sim, path=str(path) if path else None)
    out.epsilons = r.floats("sweep", "epsilons", out.epsilons)
    workers = r.raw("sweep", "workers")
    if workers is not None and workers.lower() != "auto":
        out.workers = r.int("sweep", "workers", None)
        if out.workers < 1:
            r.fail("sweep", "workers", "sweep.workers must be >= 1")
    out.sweep_basis_rank = r.int("sweep", "basis_rank", out.sweep_basis_rank)
    out.modulus_multiples = tuple(
        int(round(m)) for m in r.floats("sweep", "modulus_multiples", out.modulus_multiples)
    )
    out.sweep_snapshots = r.bool("sweep", "snapshots", out.sweep_snapshots)
    out.directory = r.raw("output", "directory")
    out.basis_rank = r.int("output", "basis_rank", out.basis_rank)
    out.snapshots = r.bool("output", "snapshots", out.snapshots)
    return out


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from exc
    return parse_config(text, path)


def _num(x):
    return repr(float(x))


def _nums(xs):
    return " ".join(_num(x) for x in xs)


def format_config(rc, dt=None):
    """Fully expanded config text; parsing it gives back the same settings."""
    s = rc.sim
    g = s.geometry
    lines = ["[geometry]", f"box = {_nums(g.box_extents)}",
             f"cells = {' '.join(str(c) for c in g.cell_counts)}",
             f"periodic = {'true' if g.periodic else 'false'}"]
    if isinstance(g.obstacle, Disk):
        lines += ["obstacle = disk", f"center = {_nums(g.obstacle.center)}",
                  f"radius = {_num(g.obstacle.radius)}"]
    elif isinstance(g.obstacle, Rectangle):
        lines += ["obstacle = rectangle", f"lo = {_nums(g.obstacle.lo)}",
                  f"hi = {_nums(g.obstacle.hi)}"]
    else:
        lines.append("obstacle = none")
    dt = s.dt if dt is None else dt
    lines += [
        "", "[solver]", f"epsilon = {_num(s.epsilon)}", f"mu = {_num(s.mu)}",
        f"dt = {'auto' if dt is None else _num(dt)}", f"t_end = {_num(s.t_end)}",
        f"snapshot_every = {s.snapshot_every}", f"tol = {_num(s.solver_tol)}",
        f"chorin_cells = {s.chorin_cells}",
        f"velocity_bound = {'auto' if s.velocity_bound is None else _num(s.velocity_bound)}",
        "", "[initial_data]", f"kind = {s.initial.kind}", f"seed = {s.initial.seed}",
        f"amplitude = {_num(s.initial.amplitude)}", f"max_mode = {s.initial.max_mode}",
    ]
    if s.initial.path:
        lines.append(f"path = {s.initial.path}")
    lines += [
        "", "[sweep]", f"epsilons = {_nums(rc.epsilons)}",
        f"workers = {'auto' if rc.workers is None else rc.workers}",
        f"basis_rank = {rc.sweep_basis_rank}",
        f"modulus_multiples = {' '.join(str(m) for m in rc.modulus_multiples)}",
        f"snapshots = {'true' if rc.sweep_snapshots else 'false'}",
        "", "[output]",
    ]
    if rc.directory:
        lines.append(f"directory = {rc.directory}")
    lines += [f"basis_rank = {rc.basis_rank}",
              f"snapshots = {'true' if rc.snapshots else 'false'}"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

CSV_SCHEMA = "acns-csv/1"


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(kind, columns, rows, notes=()):
    """CSV with a leading ``# schema`` comment line (plus optional note lines)."""
    buf = io.StringIO()
    buf.write(f"# schema={CSV_SCHEMA} table={kind}\n")
    for n in notes:
        buf.write(f"# {n}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def read_csv(path):
    """Return ``(header_comments, columns, rows)`` with cells left as strings."""
    lines = Path(path).read_text().splitlines()
    comments = [ln[2:] for ln in lines if ln.startswith("# ")]
    body = [ln for ln in lines if not ln.startswith("#")]
    rows = list(csv.reader(body))
    return comments, rows[0], rows[1:]
