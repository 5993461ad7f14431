import math
import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from helpers import random_scalar, random_velocity
from acns.errors import ConfigError, CorruptSnapshot
from acns.geometry import Disk, Rectangle
from acns.io import (
    CSV_SCHEMA,
    MAGIC,
    csv_text,
    format_config,
    load_config,
    parse_config,
    read_csv,
    read_snapshot,
    snapshot_name,
    write_snapshot,
)

GOOD = """\
[geometry]
box = 2.0 2.0
cells = 32 32
obstacle = disk
center = 1.0 1.0
radius = 0.3

[solver]
epsilon = 0.01
mu = 0.5
t_end = 0.05
"""


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(seed=st.integers(0, 2**31), t=st.floats(0, 1e3), eps=st.none() | st.floats(1e-6, 1.0))
def test_snapshot_round_trip_is_bitwise(small_geom, tmp_path, seed, t, eps):
    rng = np.random.default_rng(seed)
    u, p = random_velocity(small_geom, rng), random_scalar(small_geom, rng)
    path = tmp_path / snapshot_name(seed % 1000)
    write_snapshot(path, t, u, p, eps)
    snap = read_snapshot(path)
    assert path.read_bytes()[:4] == MAGIC
    assert snap.t == t and snap.cell_counts == small_geom.cell_counts
    assert math.isnan(snap.epsilon) if eps is None else snap.epsilon == eps
    for a, b in zip(u.components, snap.velocity):
        assert np.array_equal(a, b)
    assert np.array_equal(p.values, snap.pressure)


def test_pressure_only_and_periodic(periodic_geom, tmp_path):
    p = random_scalar(periodic_geom, np.random.default_rng(0))
    write_snapshot(tmp_path / "p.acns", 0.5, p=p)
    snap = read_snapshot(tmp_path / "p.acns")
    assert snap.velocity is None and snap.periodic
    assert np.array_equal(snap.pressure, p.values)


def corrupt_cases(data):
    bad_version = data[:4] + struct.pack("<I", 99) + data[8:]
    bad_dim = data[:8] + struct.pack("<I", 7) + data[12:]
    return {
        "truncated": data[:-8],
        "extended": data + b"\0" * 8,
        "magic": b"XXXX" + data[4:],
        "version": bad_version,
        "dimension": bad_dim,
        "header": data[:10],
    }


@pytest.mark.parametrize("case", ["truncated", "extended", "magic", "version", "dimension", "header"])
def test_corrupt_snapshots(small_geom, tmp_path, case):
    path = tmp_path / "s.acns"
    write_snapshot(path, 0.0, random_velocity(small_geom, np.random.default_rng(1)))
    path.write_bytes(corrupt_cases(path.read_bytes())[case])
    with pytest.raises(CorruptSnapshot):
        read_snapshot(path)


def test_missing_snapshot(tmp_path):
    with pytest.raises(CorruptSnapshot):
        read_snapshot(tmp_path / "nope.acns")


def test_parse_good_config():
    rc = parse_config(GOOD)
    assert rc.sim.epsilon == 0.01 and rc.sim.dt is None
    assert rc.sim.geometry.obstacle == Disk((1.0, 1.0), 0.3)
    assert rc.sim.geometry.cell_counts == (32, 32)


@pytest.mark.parametrize(
    "extra,line,fragment",
    [
        ("bogus = 1\n", 12, "unknown key solver.bogus"),
        ("tol = fast\n", 12, "not a number"),
        ("[extras]\nx = 1\n", 12, "unknown section"),
        ("mu = 0.1\n", 12, "duplicate key solver.mu"),
        ("snapshot_every = 0\n", 12, "out of range"),
        ("chorin_cells = everywhere\n", 12, "chorin_cells"),
        ("[solver]\n", 12, "duplicate section [solver]"),
    ],
)
def test_config_errors_report_line(extra, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(GOOD + extra, "run.ini")
    assert info.value.line == line
    assert fragment in str(info.value)
    assert str(info.value).startswith(f"run.ini:{line}:")


def test_key_before_any_section():
    with pytest.raises(ConfigError) as info:
        parse_config("epsilon = 0.1\n" + GOOD)
    assert info.value.line == 1


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


@settings(max_examples=25, deadline=None)
@given(
    eps=st.floats(1e-5, 1.0),
    mu=st.floats(1e-3, 10.0),
    t_end=st.floats(0.0, 5.0),
    cadence=st.integers(1, 16),
    workers=st.none() | st.integers(1, 8),
    rect=st.booleans(),
)
def test_format_parse_round_trip(eps, mu, t_end, cadence, workers, rect):
    rc = parse_config(GOOD)
    geom = rc.sim.geometry
    if rect:
        geom = type(geom)(geom.box_extents, geom.cell_counts, Rectangle((0.8, 0.8), (1.2, 1.3)))
    rc.sim = rc.sim.with_(epsilon=eps, mu=mu, t_end=t_end, snapshot_every=cadence, geometry=geom)
    rc.workers = workers
    back = parse_config(format_config(rc))
    assert back.sim == rc.sim
    assert back.workers == workers and back.epsilons == rc.epsilons
    assert format_config(back) == format_config(rc)


def test_csv_round_trip(tmp_path):
    text = csv_text("demo", ["a", "b", "c"], [(1, 0.1, "x"), (2, float("nan"), True)], ["note"])
    assert text.splitlines()[0] == f"# schema={CSV_SCHEMA} table=demo"
    path = tmp_path / "t.csv"
    path.write_text(text)
    comments, cols, rows = read_csv(path)
    assert comments == [f"schema={CSV_SCHEMA} table=demo", "note"]
    assert cols == ["a", "b", "c"]
    assert rows == [["1", "0.1", "x"], ["2", "nan", "true"]]
