import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvtrace import dyadic
from mvtrace import gridmap as gm
from mvtrace.corpus import generate
from mvtrace.errors import AlignmentError, ContractError, DomainError, ResolutionError
from mvtrace.gridmap import GridMap
from mvtrace.slab import gradient_energy_box
from mvtrace.trace import trace_slice

from conftest import CIRCLE, NORTH, SPHERE, sphere_point


def pair(d=1, n=8, f0="single-bump", f1="smooth-sampled", seed=3, man="sphere:3"):
    return (generate(f0, seed, d=d, n=n, manifold=man),
            generate(f1, seed + 100, d=d, n=n, manifold=man))


def random_window_map(seed, n=8, m=SPHERE):
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n, m.nu))
    raw[:, -1] += 1.5
    return GridMap(np.array([-1.0]), 2.0 / n, m.project(raw), NORTH if m is SPHERE else np.array([1.0, 0]), m)


# -- geometry and projection --------------------------------------------------


def test_dyadic_grid_levels():
    u = random_window_map(0, n=8)
    g = dyadic.dyadic_grid(u, 1.0)
    assert g.k_floor == 3 and g.n == (8,) and g.offset == (0,)
    assert g.side(0) == 2.0 and g.side(3) == 0.25 and g.block(1) == 4


def test_dyadic_grid_pads_to_level_zero_cubes():
    vals = np.broadcast_to(NORTH, (4, 3)).copy()
    u = GridMap(np.array([0.5]), 0.25, vals, NORTH, SPHERE)  # window [0.5, 1.5)
    g = dyadic.dyadic_grid(u, 1.0)
    assert np.allclose(g.lo, [-1.0]) and g.n == (16,) and g.offset == (6,)


@pytest.mark.parametrize("h,origin", [(0.3, -1.2), (0.25, -0.9)])
def test_dyadic_grid_alignment_errors(h, origin):
    u = GridMap(np.array([origin]), h, np.broadcast_to(NORTH, (4, 3)).copy(), NORTH, SPHERE)
    with pytest.raises(AlignmentError):
        dyadic.dyadic_grid(u, 1.0)


def test_floor_projection_is_identity():
    u = random_window_map(1)
    assert dyadic.projection_residual(u, 3, 1.0) == 0.0
    assert np.array_equal(dyadic.project_Ek(u, 3, 1.0).values, u.values)


def test_tie_rule_takes_lowest_index():
    a, b = sphere_point(0.5, 0.0), sphere_point(0.5, 2.0)
    for first, second in ((a, b), (b, a)):
        vals = np.array([first, second])
        u = GridMap(np.array([-1.0]), 1.0, vals, NORTH, SPHERE)
        assert np.array_equal(dyadic.project_Ek(u, 0, 1.0).values[0], first)


def test_projection_picks_median_value():
    a, b = sphere_point(0.4, 0.0), sphere_point(0.9, 1.0)
    vals = np.array([b, a, a, b, a, a, a, b])
    u = GridMap(np.array([-1.0]), 0.25, vals, NORTH, SPHERE)
    proj = dyadic.project_Ek(u, 0, 1.0)
    assert np.all(proj.values == a)
    assert dyadic.projection_residual(u, 0, 1.0) == pytest.approx(3 * 0.25 * SPHERE.dist(a, b))


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.integers(0, 3))
def test_median_inequality(seed, k):
    u = random_window_map(seed, n=8)
    assert dyadic.median_inequality_holds(u, k, 1.0)


# -- schedule -----------------------------------------------------------------


@pytest.mark.parametrize("d,n", [(1, 16), (2, 8)])
def test_schedule_thresholds(d, n):
    u0, u1 = pair(d, n)
    sch = dyadic.select_schedule(u0, u1, 1.0, n_max=8)
    assert sch.k[0] == 0 and sch.k[-1] == sch.grid.k_floor
    assert all(b > a for a, b in zip(sch.k, sch.k[1:]))
    for row in sch.residuals[1:]:
        if row["certified"]:
            assert max(row["e"]) <= row["e_thr"] and max(row["avg"]) <= row["avg_thr"]
    assert sch.gamma == pytest.approx(dyadic.gamma_energy(u0, u1, 1.0))
    ivs = sch.intervals(1)
    assert ivs[0][0] == 0.0 and ivs[-1][1] == 1.0
    assert all(math.isclose(a[1], b[0]) for a, b in zip(ivs, ivs[1:]))
    assert sch.intervals(0)[0] == (-ivs[0][1], -0.0)


def test_schedule_of_identical_constants_stops_at_floor():
    u = gm.constant_map(SPHERE, NORTH, [-1.0], 0.25, [8])
    sch = dyadic.select_schedule(u, u, 1.0, n_max=4)
    assert sch.gamma == 0.0 and sch.k[-1] == sch.grid.k_floor


def test_schedule_validation():
    u0, u1 = pair()
    with pytest.raises(DomainError):
        dyadic.select_schedule(u0, u1, 1.0, n_max=0)
    other = generate("constant", 1, d=1, n=16)
    with pytest.raises(DomainError):
        dyadic.select_schedule(u0, other, 1.0, n_max=4)


# -- BV joining map --------------------------------------------------------------


def brute_total_variation(e):
    """Anisotropic-grid total variation of the BV map: cells h laterally, h/2 in t."""
    g = e.grid
    d, h, L = g.d, g.h, e.L
    ht = h / 2
    nt = int(round(2 * L / ht))
    tc = -L + ht * (np.arange(nt) + 0.5)
    vol = np.broadcast_to(e.tail, tuple(n + 2 for n in g.n) + (nt, e.manifold.nu)).copy()
    inner = tuple(slice(1, -1) for _ in range(d))
    for j, t in enumerate(tc):
        i, n = e.layer_of(t)
        vol[inner + (j,)] = dyadic._unblocks(e.layers[(i, n)], g.block(e.schedule.k[n]))
    total = 0.0
    for ax in range(d + 1):
        a = np.take(vol, range(vol.shape[ax] - 1), axis=ax)
        b = np.take(vol, range(1, vol.shape[ax]), axis=ax)
        area = h**d if ax == d else h ** (d - 1) * ht
        total += float(np.sum(e.manifold.dist(a, b))) * area
    return total


@pytest.mark.parametrize("d,n,man", [(1, 16, "sphere:3"), (1, 8, "circle"), (2, 8, "sphere:3")])
def test_jump_energy_equals_brute_total_variation(d, n, man):
    u0, u1 = pair(d, n, man=man)
    sch = dyadic.select_schedule(u0, u1, 1.0, n_max=8)
    e = dyadic.build_bv_extension(u0, u1, sch)
    je = dyadic.jump_energy(e)
    assert je["total"] == pytest.approx(brute_total_variation(e), rel=1e-12)
    parts = sum(je[k] for k in ("interface", "parallel", "perpendicular", "boundary"))
    assert parts == pytest.approx(je["total"], rel=1e-12)


def test_identical_data_has_no_interface_jump():
    u0, _ = pair()
    e = dyadic.build_bv_extension(u0, u0, dyadic.select_schedule(u0, u0, 1.0, 8))
    assert dyadic.jump_energy(e)["interface"] == 0.0


@pytest.mark.parametrize("d,n", [(1, 16), (2, 8)])
def test_jump_bound_pieces_hold(d, n):
    u0, u1 = pair(d, n, "smooth-sampled", "single-bump", seed=11)
    e = dyadic.build_bv_extension(u0, u1, dyadic.select_schedule(u0, u1, 1.0, 8))
    je, pc = dyadic.jump_energy(e), dyadic.jump_bound_pieces(u0, u1, e)
    assert je["interface"] <= pc["interface_bound"]
    assert je["parallel"] <= pc["parallel_bound"]
    assert je["perpendicular"] <= pc["perpendicular_bound"]
    assert pc["C_d"] == 2.0**-d + 1 + d


def test_trace_defects_decay_and_vanish_at_floor():
    u0, u1 = pair(1, 16)
    e = dyadic.build_bv_extension(u0, u1, dyadic.select_schedule(u0, u1, 1.0, 8))
    rows = dyadic.trace_defects(e, u0, u1)
    assert all(r["defect"] <= r["bound"] * (1 + 1e-12) for r in rows)
    assert all(r["defect"] == 0.0 for r in rows if r["floor"])


def test_slice_at_layer():
    u0, u1 = pair(1, 16)
    e = dyadic.build_bv_extension(u0, u1, dyadic.select_schedule(u0, u1, 1.0, 8))
    top = e.slice_at(1.0 - 1e-6)
    assert np.array_equal(top.values, dyadic.padded_values(u1, e.grid))
    with pytest.raises(DomainError):
        e.slice_at(0.0)


# -- cone smoothing ----------------------------------------------------------------


def closed_form_constant(one_sided):
    # energy / (dist(a, b) |P|) of the smoothed face in the continuum limit
    x = np.linspace(0.0, 1.0, 200001)
    if one_sided:
        return float(np.trapezoid(3 * x * (1 - x) * np.sqrt(4 + x * x), x))
    return float(np.trapezoid(6 * x * (1 - x) * np.sqrt(1 + (2 * x - 1) ** 2 / 4), x))


@pytest.mark.parametrize("one_sided", [False, True])
@pytest.mark.parametrize("m,a,b,sides", [
    (SPHERE, np.array([1.0, 0, 0]), SPHERE.project([-0.9, 0.3, 0.2]), [1.0]),
    (CIRCLE, np.array([1.0, 0]), np.array([0.0, 1.0]), [1.0, 0.5]),
])
def test_single_face_energy_converges_to_closed_form(one_sided, m, a, b, sides):
    c = closed_form_constant(one_sided)
    unit = float(m.dist(a, b)) * float(np.prod(sides))
    errs = []
    for hf in (1 / 32, 1 / 64, 1 / 128):
        U = dyadic.smooth_single_face(m, a, b, sides, hf, one_sided)
        errs.append(gradient_energy_box(U) / unit - c)
    assert all(x >= 0 for x in errs) and errs[0] > errs[1] > errs[2]
    assert errs[-1] <= (0.01 if not one_sided else 0.03)
    assert c <= (8 if one_sided else 4)


@pytest.mark.parametrize("one_sided,bound", [(False, 1.0), (True, 2.0)])
def test_single_face_slice_defect(one_sided, bound):
    a, b = np.array([1.0, 0, 0]), np.array([0.0, 1.0, 0])
    U = dyadic.smooth_single_face(SPHERE, a, b, [1.0, 1.0], 1 / 32, one_sided)
    assert dyadic.face_slice_defect(U, a, b, one_sided) <= bound * SPHERE.dist(a, b)


def test_single_face_needs_divisible_sides():
    with pytest.raises(ResolutionError):
        dyadic.smooth_single_face(SPHERE, [1.0, 0, 0], [0, 1.0, 0], [1.0], 0.3)


# -- extensions ----------------------------------------------------------------------


@pytest.mark.parametrize("d,n", [(1, 16), (2, 8)])
def test_strip_extension_traces_and_report(d, n):
    u0, u1 = pair(d, n)
    res = dyadic.strip_extension(u0, u1, 1.0, 8, u0.h / 16)
    rep = res.report
    assert rep["cones_disjoint"] and math.isfinite(rep["ratio"])
    assert 0 < rep["grad_energy"] <= 4 * rep["jump_energy"]["total"]
    for side, u in (("bottom", u0), ("top", u1)):
        tr = trace_slice(res.slab, side)
        assert np.array_equal(tr.values, u.evaluate(tr.centers()))


def test_strip_extension_of_identical_constants_is_flat():
    u = gm.constant_map(SPHERE, NORTH, [-1.0], 0.25, [8])
    res = dyadic.strip_extension(u, u, 1.0, 4, 0.25 / 16)
    assert res.report["grad_energy"] == 0.0 and res.report["ratio"] == 0.0


def test_strip_extension_resolution_contract():
    u0, u1 = pair(1, 16)
    with pytest.raises(ResolutionError):
        dyadic.strip_extension(u0, u1, 1.0, 8, u0.h / 8)
    with pytest.raises(ResolutionError):
        dyadic.strip_extension(u0, u1, 1.0, 8, u0.h / 15)


def test_strip_extension_rejects_different_tails():
    u0 = generate("single-bump", 1, d=1, n=8)
    u1 = gm.constant_map(SPHERE, sphere_point(0.3, 0.0), [-1.0], 0.25, [8])
    with pytest.raises(DomainError):
        dyadic.strip_extension(u0, u1, 1.0, 4, 0.25 / 16)


def test_cube_extension():
    u0, u1 = pair(1, 8)
    res = dyadic.cube_extension({"bottom": u0, "top": u1}, u0.tail, u0.h / 16)
    rep = res.report
    assert rep["cones_disjoint"] and math.isfinite(rep["ratio"]) and rep["n_one_sided"] > 0
    assert rep["grad_energy"] > 0
    assert res.slab.traces["bottom"].shape == res.slab.values.shape[:-2] + (3,)


def test_cube_extension_contracts():
    u0, u1 = pair(1, 8)
    with pytest.raises(ContractError):
        dyadic.cube_extension({"bottom": u0}, u0.tail, u0.h / 16)
    with pytest.raises(ContractError):
        dyadic.cube_extension({"bottom": u0, "top": u1, "left": np.array([[1.0, 0, 0]])}, u0.tail, u0.h / 16)
    with pytest.raises(ContractError):
        dyadic.cube_extension({"bottom": u0, "top": u1}, sphere_point(0.2, 0.0), u0.h / 16)


def test_halfspace_extension():
    u, _ = pair(1, 8)
    res = dyadic.halfspace_extension(u, 1.0, 8, u.h / 16)
    assert np.allclose(res.report["b_star"], u.tail)
    assert res.slab.origin[-1] == 0.0
    assert np.array_equal(trace_slice(res.slab, "bottom").values, u.evaluate(trace_slice(res.slab).centers()))
    assert math.isfinite(res.report["ratio_halfspace"])


@pytest.mark.parametrize("d,n", [(1, 16), (2, 8)])
def test_cube_extension_of_a_single_bump(d, n):
    c = sphere_point(1.0, 0.5)
    bottom = gm.constant_map(SPHERE, NORTH, [-1.0] * d, 2.0 / n, [n] * d)
    vals = bottom.values.copy()
    vals[tuple([slice(n // 4, n // 2)] * d)] = c
    top = bottom.with_values(vals)
    ratios = []
    for f in ((16, 32) if d == 1 else (16,)):
        res = dyadic.cube_extension({"bottom": bottom, "top": top}, NORTH, top.h / f)
        rep = res.report
        assert rep["boundary_l1"] == pytest.approx(SPHERE.dist(c, NORTH) * 0.5**d)
        assert rep["cones_disjoint"] and rep["lateral_trace_defect"] == 0.0
        tr = trace_slice(res.slab, "top")
        assert np.array_equal(tr.values, top.evaluate(tr.centers()))
        ratios.append(rep["ratio"])
    assert all(math.isfinite(r) for r in ratios)
    if len(ratios) == 2:
        assert abs(ratios[1] / ratios[0] - 1) <= 0.05
