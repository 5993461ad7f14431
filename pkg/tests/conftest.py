import pytest

import helpers
from acns.elliptic import dirichlet_eigenbasis
from acns.geometry import standard_geometry


@pytest.fixture(autouse=True)
def _no_basis_cache(monkeypatch, tmp_path):
    monkeypatch.setenv("ACNS_CACHE_DIR", str(tmp_path / "cache"))


@pytest.fixture(scope="session")
def std_geom():
    return standard_geometry()


@pytest.fixture(scope="session")
def small_geom():
    return helpers.small_disk()


@pytest.fixture(scope="session")
def box_geom():
    return helpers.empty_box()


@pytest.fixture(scope="session")
def periodic_geom():
    return helpers.periodic_box()


@pytest.fixture(scope="session")
def geom_3d():
    return helpers.ball_3d()


@pytest.fixture(scope="session")
def small_basis(small_geom):
    return dirichlet_eigenbasis(small_geom, 40, use_cache=False)


@pytest.fixture(scope="session")
def std_basis(std_geom):
    return dirichlet_eigenbasis(std_geom, 256, use_cache=False)


def pytest_terminal_summary(terminalreporter):
    if not helpers.ACCEPTANCE:
        return
    terminalreporter.section("acceptance")
    for number in sorted(helpers.ACCEPTANCE):
        title, ok, details = helpers.ACCEPTANCE[number]
        terminalreporter.write_line(
            f"{number:>2} {'PASS' if ok else 'FAIL'}  {title}: {'; '.join(details)}"
        )
