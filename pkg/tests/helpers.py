from acns.fields import ScalarField, StaggeredField
from acns.geometry import Disk, GeometrySpec, build_domain


def small_disk(n=32):
    return build_domain(GeometrySpec((2.0, 2.0), (n, n), Disk((1.0, 1.0), 0.3)))


def empty_box(n=(32, 24), extents=(2.0, 1.5)):
    return build_domain(GeometrySpec(extents, n, None))


def periodic_box(n=32, extent=2.0):
    return build_domain(GeometrySpec((extent, extent), (n, n), None, True))


def ball_3d(n=16):
    return build_domain(GeometrySpec((2.0, 2.0, 2.0), (n, n, n), Disk((1.0, 1.0, 1.0), 0.35)))


def random_scalar(geom, rng):
    return ScalarField(rng.standard_normal(geom.cell_counts) * geom.fluid, geom)


def random_velocity(geom, rng):
    comps = [
        rng.standard_normal(geom.face_shape(k)) * geom.active_faces(k) for k in range(geom.ndim)
    ]
    return StaggeredField(comps, geom)


def zero_mean(f):
    g = f.geometry
    v = f.values.copy()
    v[g.fluid] -= v[g.fluid].mean()
    return ScalarField(v, g)


# acceptance verdicts, printed in the terminal summary: number -> (title, ok, details)
ACCEPTANCE = {}


def record(number, title, ok, detail):
    prev = ACCEPTANCE.get(number, (title, True, []))
    ACCEPTANCE[number] = (title, prev[1] and bool(ok), prev[2] + [detail])
    return ok
