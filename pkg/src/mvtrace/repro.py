"""The acceptance runs: ten numerical checks, each returning a plain dict.

Every check reports the measured quantities together with a boolean
``pass``.  The fixtures are generated from one seed, so the whole report is
a deterministic function of the seed.
"""
from __future__ import annotations

import json
import math
import time

import numpy as np

from . import corpus, dyadic, kernels
from . import gridmap as gm
from .slab import gradient_energy_box
from .trace import trace_inequality_check, trace_slice

TITLES = {
    1: "BBM identity: relative error <= 5% at R = 100 diam, decreasing in R",
    2: "upper bound: theta(R) <= 2 int dist(u, tail) (1 + 5%), slack halves at s = 2",
    3: "scaling lemma with constant 2^(d+1), 10% slack, l in {L/2, L/4, L/8}",
    4: "single-face interpolation constants 4, 8 and slice bounds 1, 2",
    5: "BV jump bound with each explicit piece",
    6: "trace round trip: layer defects <= 2^-n Gamma, zero at the grid floor",
    7: "strip extension ratio finite, corpus-bounded, non-increasing under h_fine/2",
    8: "trace inequality ratios bounded and stable within 20% under refinement",
    9: "constancy dichotomy: window double integral strictly increasing over S, 2S, 4S",
    10: "determinism: identical seed gives byte-identical reports",
}


def child_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([seed, *key]).generate_state(1, dtype=np.uint64)[0] >> 1)


def energy_fixtures(seed: int) -> dict:
    """Five maps for the energy checks (d = 1, 2; circle and sphere targets)."""
    table = [
        ("d1-circle-single", "single-bump", 1, 32, "circle"),
        ("d1-sphere-multi", "multi-bump", 1, 32, "sphere:3"),
        ("d1-sphere-smooth", "smooth-sampled", 1, 32, "sphere:3"),
        ("d2-circle-single", "single-bump", 2, 16, "circle"),
        ("d2-sphere-smooth", "smooth-sampled", 2, 16, "sphere:3"),
    ]
    return {name: corpus.generate(fam, child_seed(seed, 1, j), d=d, n=n, manifold=man)
            for j, (name, fam, d, n, man) in enumerate(table)}


def strip_fixtures(seed: int) -> dict:
    """Pairs (u0, u1) on [-1, 1)^d sharing a tail, for the joining checks."""
    table = [
        ("d1-circle", 1, 32, "circle", "single-bump", "multi-bump"),
        ("d1-sphere", 1, 32, "sphere:3", "smooth-sampled", "multi-bump"),
        ("d2-sphere", 2, 8, "sphere:3", "single-bump", "smooth-sampled"),
    ]
    out = {}
    for j, (name, d, n, man, f0, f1) in enumerate(table):
        u0 = corpus.generate(f0, child_seed(seed, 2, j, 0), d=d, n=n, manifold=man)
        u1 = corpus.generate(f1, child_seed(seed, 2, j, 1), d=d, n=n, manifold=man)
        out[name] = (u0, u1)
    return out


def h_fine_for(u: gm.GridMap) -> float:
    """Coarsest admissible slab spacing: 8 samples across the half-cell floor layer."""
    return u.h / (2 * dyadic.MIN_LAYER_SAMPLES)


def _decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


def check_bbm(seed: int) -> dict:
    rows = {}
    ok = True
    for name, u in energy_fixtures(seed).items():
        diam = u.diameter
        rep = gm.asymptotic_mean(u, [diam, 10 * diam, 100 * diam])
        errs = rep.rel_errors
        tail_is_mean = bool(u.manifold.dist(rep.b_star, u.tail) <= u.manifold.on_manifold_tol)
        good = errs[-1] <= 0.05 and _decreasing(errs) and tail_is_mean
        ok &= good
        rows[name] = {"R": rep.R, "lhs": rep.lhs, "rhs": rep.rhs, "rel_errors": errs,
                      "b_star_is_tail": tail_is_mean, "pass": good}
    return {"pass": ok, "fixtures": rows}


def kernel_mass_slack(h: float, d: int, R: float, s: int) -> float:
    """Relative error of the discrete ball measure; the only way the bound can fail."""
    return abs(kernels.lattice_total(h, d, R, "euclidean", s) / (h**d * kernels.ball_volume(d, R)) - 1.0)


def check_upper_bound(seed: int) -> dict:
    rows = {}
    ok = True
    for name, u in energy_fixtures(seed).items():
        diam = u.diameter
        sweep = [diam * f for f in (1, 3, 10, 30, 100)]
        bound = 2.0 * gm.integral_dist_to_point(u, u.tail).value
        ratios = [gm.theta(u, R).value / bound for R in sweep]
        slack1 = max(kernel_mass_slack(u.h, u.d, R, 1) for R in sweep)
        slack2 = max(kernel_mass_slack(u.h, u.d, R, 2) for R in sweep)
        good = max(ratios) <= 1.05 and slack1 <= 0.05 and slack2 <= slack1 / 2 + 1e-12
        ok &= good
        rows[name] = {"R": sweep, "theta_over_bound": ratios, "slack_s1": slack1, "slack_s2": slack2,
                      "pass": good}
    return {"pass": ok, "fixtures": rows}


def check_scaling(seed: int, L: float = 1.0) -> dict:
    rows = {}
    ok = True
    for name, u in energy_fixtures(seed).items():
        d = u.d
        left = gm.pair_integral(u, L) / L ** (d + 1)
        margins = []
        for ell in (L / 2, L / 4, L / 8):
            right = 2 ** (d + 1) * gm.pair_integral(u, ell) / ell ** (d + 1)
            margins.append({"ell": ell, "left": left, "right": right,
                            "ratio": left / right if right > 0 else (0.0 if left == 0 else math.inf)})
        good = all(m["ratio"] <= 1.10 for m in margins)
        ok &= good
        rows[name] = {"L": L, "checks": margins, "pass": good}
    return {"pass": ok, "fixtures": rows}


def interpolation_cases():
    from .manifold import TargetManifold
    sph = TargetManifold.from_id("sphere:3")
    cir = TargetManifold.from_id("circle")
    a_s = np.array([1.0, 0.0, 0.0])
    b_s = sph.project([-0.9, 0.3, 0.2])
    a_c = np.array([1.0, 0.0])
    b_c = np.array([0.0, 1.0])
    return [
        ("sphere-d1", sph, a_s, b_s, [1.0]),
        ("circle-d1", cir, a_c, b_c, [1.0]),
        ("sphere-d2-square", sph, a_s, b_s, [1.0, 1.0]),
        ("circle-d2-rect", cir, a_c, b_c, [1.0, 0.5]),
    ]


def check_interpolation(h_fine: float = 1.0 / 32) -> dict:
    rows = {}
    ok = True
    for name, m, a, b, sides in interpolation_cases():
        unit = float(m.dist(a, b)) * float(np.prod(sides))
        row = {}
        for one_sided, c_energy, c_slice in ((False, 4.0, 1.0), (True, 8.0, 2.0)):
            key = "one_sided" if one_sided else "two_sided"
            vals = []
            for hf, tol in ((h_fine, 0.10), (h_fine / 2, 0.05)):
                U = dyadic.smooth_single_face(m, a, b, sides, hf, one_sided)
                e = gradient_energy_box(U) / unit
                sl = dyadic.face_slice_defect(U, a, b, one_sided) / unit
                good = e <= c_energy * (1 + tol) and sl <= c_slice * (1 + tol)
                ok &= good
                vals.append({"h_fine": hf, "energy_over_unit": e, "slice_over_unit": sl,
                             "energy_constant": c_energy, "slice_constant": c_slice, "tolerance": tol,
                             "pass": good})
            row[key] = vals
        rows[name] = row
    return {"pass": ok, "cases": rows}


def _joined(seed: int):
    out = {}
    for name, (u0, u1) in strip_fixtures(seed).items():
        sched = dyadic.select_schedule(u0, u1, 1.0, n_max=8)
        out[name] = (u0, u1, sched, dyadic.build_bv_extension(u0, u1, sched))
    return out


def check_jump_bound(seed: int) -> dict:
    rows = {}
    ok = True
    for name, (u0, u1, sched, bv) in _joined(seed).items():
        d = u0.d
        jumps = dyadic.jump_energy(bv)
        pieces = dyadic.jump_bound_pieces(u0, u1, bv)
        total_bound = pieces["int_dist_u0_u1"] + (6 + 11 * d) * pieces["gamma"] + pieces["C_d"] * pieces["sup_6L"] / bv.L**d
        checks = {
            "interface": jumps["interface"] <= pieces["interface_bound"],
            "parallel": jumps["parallel"] <= pieces["parallel_bound"],
            "perpendicular": jumps["perpendicular"] <= pieces["perpendicular_bound"],
            "total": jumps["total"] <= total_bound,
        }
        good = all(checks.values())
        ok &= good
        rows[name] = {"jumps": jumps, "pieces": pieces, "total_bound": total_bound, "k": sched.k,
                      "checks": checks, "pass": good}
    return {"pass": ok, "fixtures": rows}


def check_trace_roundtrip(seed: int) -> dict:
    rows = {}
    ok = True
    for name, (u0, u1, sched, bv) in _joined(seed).items():
        defects = dyadic.trace_defects(bv, u0, u1)
        layer_ok = all(r["defect"] <= r["bound"] * (1 + 1e-12) + 1e-14 for r in defects)
        floor_ok = all(r["defect"] == 0.0 for r in defects if r["floor"])
        # the smoothed map's boundary sample layers reproduce the data exactly
        res = dyadic.strip_extension(u0, u1, 1.0, 8, h_fine_for(u0))
        slice_err = []
        for side, u in (("bottom", u0), ("top", u1)):
            tr = trace_slice(res.slab, side)
            fine = u.evaluate(tr.centers())
            slice_err.append(float(np.sum(u.manifold.dist(tr.values, fine))) * tr.cell_volume)
        good = layer_ok and floor_ok and max(slice_err) == 0.0
        ok &= good
        rows[name] = {"defects": defects, "slice_l1": slice_err, "layers_ok": layer_ok, "floor_zero": floor_ok,
                      "pass": good}
    return {"pass": ok, "fixtures": rows}


def _strip_runs(seed: int) -> dict:
    out = {}
    for name, (u0, u1) in strip_fixtures(seed).items():
        hf = h_fine_for(u0)
        out[name] = (u0, u1, dyadic.strip_extension(u0, u1, 1.0, 8, hf), dyadic.strip_extension(u0, u1, 1.0, 8, hf / 2))
    return out


def check_strip(runs: dict) -> dict:
    rows = {}
    ratios = []
    ok = True
    for name, (u0, u1, coarse, fine) in runs.items():
        rc, rf = coarse.report, fine.report
        finite = math.isfinite(rc["ratio"]) and math.isfinite(rf["ratio"])
        monotone = rf["ratio"] <= rc["ratio"]
        per_face = max(rc["ratio_to_jumps"], rf["ratio_to_jumps"]) <= 4.0
        good = finite and monotone and per_face and rc["cones_disjoint"] and rf["cones_disjoint"]
        ok &= good
        ratios += [rc["ratio"], rf["ratio"]]
        rows[name] = {
            "h_fine": [rc["h_fine"], rf["h_fine"]], "grad_energy": [rc["grad_energy"], rf["grad_energy"]],
            "rhs": rc["rhs_cutoff_1"], "ratio": [rc["ratio"], rf["ratio"]],
            "ratio_to_jumps": [rc["ratio_to_jumps"], rf["ratio_to_jumps"]],
            "gamma": rc["gamma"], "k": rc["k"], "non_increasing": monotone, "pass": good,
        }
    return {"pass": ok, "corpus_constant": max(ratios), "fixtures": rows}


def trace_r_sweep(u: gm.GridMap) -> list:
    if u.d == 1:
        return [0.0625, 0.125, 0.25, 0.5]
    return [0.0625, 0.125]


def check_trace_inequalities(runs: dict) -> dict:
    rows = {}
    ok = True
    worst = [0.0, 0.0]
    for name, (u0, u1, coarse, fine) in runs.items():
        sweep = trace_r_sweep(u0)
        reps = [trace_inequality_check(res.slab, u0, sweep) for res in (coarse, fine)]
        stable = True
        for key in ("ratio1", "ratio2"):
            for a, b in zip(getattr(reps[0], key), getattr(reps[1], key)):
                if not (math.isfinite(a) and math.isfinite(b)):
                    stable = False
                elif a > 0 and abs(b / a - 1.0) > 0.20:
                    stable = False
        worst[0] = max(worst[0], reps[0].max_ratio1, reps[1].max_ratio1)
        worst[1] = max(worst[1], reps[0].max_ratio2, reps[1].max_ratio2)
        ok &= stable
        rows[name] = {"coarse": reps[0].to_dict(), "fine": reps[1].to_dict(), "stable": stable, "pass": stable}
    ok &= all(math.isfinite(w) for w in worst)
    return {"pass": ok, "K1": worst[0], "K2": worst[1], "fixtures": rows}


def check_constancy(seed: int) -> dict:
    rows = {}
    ok = True
    for d, n in ((1, 32), (2, 16)):
        u = corpus.generate("two-valued-step", child_seed(seed, 3, d), d=d, n=n, manifold="sphere:3")
        S = 0.5
        vals = [gm.window_double_integral(u, side) for side in (S, 2 * S, 4 * S)]
        good = all(b > a for a, b in zip(vals, vals[1:]))
        ok &= good
        rows[f"d{d}"] = {"sides": [S, 2 * S, 4 * S], "double_integral": vals, "pass": good}
    return {"pass": ok, "fixtures": rows}


def _clean(obj):
    """JSON-safe copy: numpy scalars to floats, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else ("-inf" if x < 0 else "nan"))
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=1)


def run_all(seed: int = 1, log=None) -> dict:
    """Criteria 1 to 9; criterion 10 compares two such reports."""
    def step(i, fn, *args):
        t0 = time.perf_counter()
        out = fn(*args)
        if log:
            log(f"criterion {i}: {'PASS' if out['pass'] else 'FAIL'} ({time.perf_counter() - t0:.1f}s)")
        return out

    report = {"seed": seed, "criteria": {}}
    c = report["criteria"]
    c["1"] = step(1, check_bbm, seed)
    c["2"] = step(2, check_upper_bound, seed)
    c["3"] = step(3, check_scaling, seed)
    c["4"] = step(4, check_interpolation)
    c["5"] = step(5, check_jump_bound, seed)
    c["6"] = step(6, check_trace_roundtrip, seed)
    runs = _strip_runs(seed)
    c["7"] = step(7, check_strip, runs)
    c["8"] = step(8, check_trace_inequalities, runs)
    c["9"] = step(9, check_constancy, seed)
    for key, val in c.items():
        val["title"] = TITLES[int(key)]
    return report
