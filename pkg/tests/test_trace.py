import math

import numpy as np
import pytest

from mvtrace import dyadic, trace
from mvtrace.corpus import generate
from mvtrace.errors import ContractError, DomainError, ResolutionError, SchemaError
from mvtrace.gridmap import GridMap
from mvtrace.slab import SlabMap, gradient_energy_box
from mvtrace.trace import gradient_energy, trace_inequality_check, trace_slice

from conftest import CIRCLE, NORTH, SPHERE, sphere_point


def closed_slab(values, h, m=SPHERE, traces=None, origin=None):
    dim = values.ndim - 1
    origin = np.zeros(dim) if origin is None else origin
    return SlabMap(origin, h, values, NORTH if m is SPHERE else np.array([1.0, 0.0]), m, closed=True,
                   traces=traces or {})


def geodesic_slab(a, b, n=16, nt=16, traces=None):
    h = 1.0 / n
    tc = h * (np.arange(nt) + 0.5)
    col = SPHERE.interpolate(a, b, tc)
    vals = np.broadcast_to(col, (n, nt, 3)).copy()
    return closed_slab(vals, h, traces=traces)


def test_constant_slab_has_zero_energy():
    U = closed_slab(np.broadcast_to(NORTH, (8, 8, 3)).copy(), 0.125)
    assert gradient_energy(U) == 0.0
    u = GridMap(np.zeros(1), 0.125, np.broadcast_to(NORTH, (8, 3)).copy(), NORTH, SPHERE)
    rep = trace_inequality_check(U, u, [0.25, 0.5])
    assert rep.lhs1 == [0.0, 0.0] and rep.lhs2 == [0.0, 0.0] and rep.ratio1 == [0.0, 0.0]


def test_geodesic_in_t_telescopes():
    a, b = sphere_point(0.2, 0.0), sphere_point(1.4, 2.0)
    D = SPHERE.dist(a, b)
    U = geodesic_slab(a, b)
    # steps between equally spaced samples of a constant-speed geodesic add up
    assert gradient_energy(U) == pytest.approx(15 / 16 * D, rel=1e-12)
    Ut = geodesic_slab(a, b, traces={"bottom": a})
    assert gradient_energy(Ut) == pytest.approx((15 / 16 + 1 / 32) * D, rel=1e-12)


def test_energy_over_subregion():
    a, b = sphere_point(0.2, 0.0), sphere_point(1.4, 2.0)
    D = SPHERE.dist(a, b)
    U = geodesic_slab(a, b)
    # cells with centers in (0, 0.5) carry eight t-steps, each of length D/16
    assert gradient_energy(U, ([0.0, 0.0], [1.0, 0.5])) == pytest.approx(0.5 * D, rel=1e-12)
    assert gradient_energy(U, ([0.0, 0.0], [0.5, 0.5])) == pytest.approx(0.25 * D, rel=1e-12)


def test_energy_region_validation():
    U = geodesic_slab(NORTH, sphere_point(1.0, 0.0))
    with pytest.raises(DomainError):
        gradient_energy(U, ([0.0, -0.5], [1.0, 0.5]))
    with pytest.raises(DomainError):
        gradient_energy(U, ([0.0, 0.5], [1.0, 0.5]))
    with pytest.raises(DomainError):
        gradient_energy(U, ([0.0], [1.0]))


def test_open_slab_counts_jump_into_tail():
    a = sphere_point(1.0, 0.0)
    vals = np.broadcast_to(a, (4, 4, 3)).copy()
    U = SlabMap(np.zeros(2), 0.25, vals, NORTH, SPHERE, closed=False)
    # two lateral faces of height 1 against the tail
    assert gradient_energy(U) == pytest.approx(2 * SPHERE.dist(a, NORTH), rel=1e-12)
    assert gradient_energy(U, ([None, 0.0], [None, 0.5])) == pytest.approx(SPHERE.dist(a, NORTH), rel=1e-12)


def tie_indicator(sq, rsq):
    return np.where(np.abs(sq - rsq) <= 1e-12 * rsq, 0.5, (sq < rsq).astype(float))


def brute_trace_sides(U, u, r):
    """Both left-hand sides by explicit loops over sample pairs (s = 1, closed slab)."""
    h = U.h
    xc = U.axis_centers(0)
    tc = U.axis_centers(1) - U.origin[1]
    ub = u.evaluate(xc[:, None])
    l1 = 0.0
    l2 = 0.0
    for i, x in enumerate(xc):
        for k, y in enumerate(xc):
            sq = (x - y) ** 2
            l1 += tie_indicator(sq, r * r) * SPHERE.dist(ub[i], ub[k]) * h * h
            for j, t in enumerate(tc):
                if t < r:
                    l2 += tie_indicator(sq + t * t, r * r) * SPHERE.dist(ub[i], U.values[k, j]) * h * h * h
    return l1 / r, l2 / r**2


@pytest.fixture
def random_closed_pair():
    rng = np.random.default_rng(5)
    n, nt, h = 12, 10, 1.0 / 12
    raw = rng.standard_normal((n, nt, 3))
    raw[..., 2] += 2
    U = closed_slab(SPHERE.project(raw), h)
    useg = SPHERE.project(rng.standard_normal((n // 2, 3)) + [0, 0, 2])
    u = GridMap(np.zeros(1), 2 * h, useg, NORTH, SPHERE)
    return U, u


def test_trace_sides_match_brute_force(random_closed_pair):
    U, u = random_closed_pair
    rs = [1 / 6, 0.25, 0.5]
    rep = trace_inequality_check(U, u, rs)
    for r, a, b in zip(rs, rep.lhs1, rep.lhs2):
        l1, l2 = brute_trace_sides(U, u, r)
        assert a == pytest.approx(l1, rel=1e-12) and b == pytest.approx(l2, rel=1e-12)


def test_class_grouping_matches_direct_loop(monkeypatch, random_closed_pair):
    U, u = random_closed_pair
    fast = trace_inequality_check(U, u, [0.25, 0.5])
    monkeypatch.setattr(trace, "MAX_CLASSES", 0)
    slow = trace_inequality_check(U, u, [0.25, 0.5])
    assert np.allclose(fast.lhs2, slow.lhs2, rtol=1e-12, atol=0)


def test_top_side_is_reflection(random_closed_pair):
    U, u = random_closed_pair
    flipped = closed_slab(U.values[:, ::-1].copy(), U.h)
    top = trace_inequality_check(flipped, u, [0.25, 0.5], side="top")
    bottom = trace_inequality_check(U, u, [0.25, 0.5], side="bottom")
    assert np.allclose(top.lhs2, bottom.lhs2, rtol=1e-12) and np.allclose(top.energy, bottom.energy, rtol=1e-12)


def test_trace_check_on_strip_extension():
    u0 = generate("single-bump", 1, d=1, n=16)
    u1 = generate("smooth-sampled", 2, d=1, n=16)
    res = dyadic.strip_extension(u0, u1, 1.0, 8, u0.h / 16)
    rep = trace_inequality_check(res.slab, u0, [0.0625, 0.25])
    assert all(math.isfinite(x) and x > 0 for x in rep.ratio1 + rep.ratio2)
    top = trace_inequality_check(res.slab, u1, [0.0625, 0.25], side="top")
    assert all(math.isfinite(x) for x in top.ratio1 + top.ratio2)
    d = rep.to_dict()
    assert d["max_ratio1"] == max(rep.ratio1) and d["side"] == "bottom"


def test_trace_check_with_other_tail_is_infinite():
    u0 = generate("single-bump", 1, d=1, n=16)
    res = dyadic.strip_extension(u0, u0, 1.0, 8, u0.h / 16)
    other = GridMap(u0.origin, u0.h, u0.values, sphere_point(0.5, 0.0), SPHERE)
    rep = trace_inequality_check(res.slab, other, [0.25])
    assert rep.lhs1 == [math.inf] and rep.ratio2 == [math.inf]


def test_trace_check_errors(random_closed_pair):
    U, u = random_closed_pair
    with pytest.raises(ResolutionError):
        trace_inequality_check(U, u, [U.h])
    with pytest.raises(DomainError):
        trace_inequality_check(U, u, [2.0])
    with pytest.raises(DomainError):
        trace_inequality_check(U, u, [0.5, 0.25])
    with pytest.raises(DomainError):
        trace_inequality_check(U, u, [0.25], side="left")
    shifted = GridMap(np.array([0.01]), u.h, u.values, u.tail, SPHERE)
    with pytest.raises(ContractError):
        trace_inequality_check(U, shifted, [0.25])
    circ = GridMap(np.zeros(1), u.h, np.broadcast_to([1.0, 0.0], (6, 2)).copy(), np.array([1.0, 0]), CIRCLE)
    with pytest.raises(ContractError):
        trace_inequality_check(U, circ, [0.25])


def test_trace_slice():
    U = geodesic_slab(NORTH, sphere_point(1.0, 0.0))
    assert np.array_equal(trace_slice(U).values, U.values[:, 0])
    assert np.array_equal(trace_slice(U, "top").values, U.values[:, -1])


def test_report_rejects_negative_entries():
    with pytest.raises(DomainError):
        trace.TraceReport("bottom", [1.0], [-1.0], [0.0], [0.0], [0.0], [0.0])


def test_slab_json_roundtrip():
    U = geodesic_slab(NORTH, sphere_point(1.0, 0.0), traces={"bottom": NORTH})
    V = SlabMap.from_json(__import__("json").dumps(U.to_dict()))
    assert np.array_equal(V.values, U.values) and V.closed and np.array_equal(V.traces["bottom"], U.traces["bottom"])
    assert gradient_energy_box(V) == gradient_energy_box(U)
    with pytest.raises(SchemaError):
        SlabMap.from_json('{"d": 2}')
    with pytest.raises(DomainError):
        SlabMap(np.zeros(2), 0.1, np.zeros((2, 2, 3)), NORTH, SPHERE, traces={"left": NORTH})


@pytest.mark.parametrize("d,n", [(1, 16), (2, 8)])
def test_energy_refinement_on_smooth_data(d, n):
    u0 = generate("smooth-sampled", 5, d=d, n=n)
    u1 = generate("smooth-sampled", 6, d=d, n=n)
    e = [gradient_energy(dyadic.strip_extension(u0, u1, 1.0, 8, u0.h / f).slab) for f in (16, 32)]
    assert abs(e[1] / e[0] - 1) <= 0.05
