"""Dyadic projection, BV joining of two maps, cone smoothing and extensions.

Dyadic cubes of level ``k`` have side ``2^(1-k) L``.  Level 0 is the lattice
of cubes ``[-L, L]^d + 2L Z^d`` and every finer level subdivides it, so cubes
of consecutive levels are nested and the cube ``[-L, L]^d`` is itself a level
0 cube.  The input grids must resolve every level down to the grid floor
``k_floor`` where cubes are single cells: ``2L/h`` a power of two and the
window aligned with ``-L + h Z``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import gridmap as gm
from .errors import AlignmentError, ContractError, DomainError, ResolutionError
from .gridmap import GridMap
from .slab import SlabMap, gradient_energy_box

INTERFACE, PARALLEL, PERPENDICULAR, BOUNDARY = 0, 1, 2, 3
CLASS_NAMES = {INTERFACE: "interface", PARALLEL: "parallel", PERPENDICULAR: "perpendicular", BOUNDARY: "boundary"}


# ---------------------------------------------------------------------------
# dyadic geometry and projection


@dataclass(frozen=True)
class DyadicCube:
    level: int
    center: tuple
    radius: float

    @property
    def measure(self) -> float:
        return (2.0 * self.radius) ** len(self.center)


@dataclass(frozen=True)
class DyadicGrid:
    """Padded cell grid covering every level-0 cube that meets the window."""

    L: float
    h: float
    d: int
    lo: np.ndarray  # lower corner of the padded region
    n: tuple  # padded cell counts
    offset: tuple  # window start index inside the padded grid
    k_floor: int

    def side(self, k: int) -> float:
        return 2.0 ** (1 - k) * self.L

    def block(self, k: int) -> int:
        return 2 ** (self.k_floor - k)

    def cube_counts(self, k: int) -> tuple:
        return tuple(n // self.block(k) for n in self.n)

    @property
    def upper(self) -> np.ndarray:
        return self.lo + self.h * np.asarray(self.n, dtype=float)

    def cubes(self, k: int):
        side = self.side(k)
        for idx in np.ndindex(*self.cube_counts(k)):
            center = tuple(float(self.lo[i] + side * (j + 0.5)) for i, j in enumerate(idx))
            yield DyadicCube(k, center, side / 2.0)


def dyadic_grid(u: GridMap, L: float) -> DyadicGrid:
    if not L > 0:
        raise DomainError("L must be positive")
    ratio = 2.0 * L / u.h
    k_floor = int(round(math.log2(ratio))) if ratio >= 1 else -1
    if k_floor < 0 or not math.isclose(2.0**k_floor, ratio, rel_tol=1e-9):
        raise AlignmentError(f"2L/h = {ratio:g} must be a power of two")
    shift = (u.origin + L) / u.h
    if np.any(np.abs(shift - np.round(shift)) > 1e-9):
        raise AlignmentError("window origin must lie on -L + h Z^d")
    two_l = 2.0 * L
    lo_idx = np.floor((u.origin + L) / two_l + 1e-12).astype(int)
    hi_idx = np.ceil((u.upper + L) / two_l - 1e-12).astype(int)
    lo = -L + two_l * lo_idx
    per = 2**k_floor
    n = tuple(int(per * (b - a)) for a, b in zip(lo_idx, hi_idx))
    offset = tuple(int(round(x)) for x in (u.origin - lo) / u.h)
    return DyadicGrid(float(L), float(u.h), u.d, lo, n, offset, k_floor)


def padded_values(u: GridMap, g: DyadicGrid) -> np.ndarray:
    out = np.broadcast_to(u.tail, g.n + (u.manifold.nu,)).copy()
    sl = tuple(slice(o, o + c) for o, c in zip(g.offset, u.counts))
    out[sl] = u.values
    return out


def _blocks(arr: np.ndarray, b: int, d: int) -> np.ndarray:
    """Reshape ``(n_1..n_d, nu)`` into ``(cubes..., b^d, nu)``."""
    nu = arr.shape[-1]
    shape, order = [], []
    for i, n in enumerate(arr.shape[:d]):
        shape += [n // b, b]
    x = arr.reshape(shape + [nu])
    outer = list(range(0, 2 * d, 2))
    inner = list(range(1, 2 * d, 2))
    x = x.transpose(outer + inner + [2 * d])
    return x.reshape([arr.shape[i] // b for i in range(d)] + [b**d, nu])


def _unblocks(cube_vals: np.ndarray, b: int) -> np.ndarray:
    """Upsample ``(cubes..., nu)`` to cell resolution by repetition."""
    out = cube_vals
    for axis in range(cube_vals.ndim - 1):
        out = np.repeat(out, b, axis=axis)
    return out


def _median_choice(manifold, cells: np.ndarray):
    """Argmin over the cube's cells of the mean distance to all its cells.

    ``cells`` has shape ``(C, B, nu)``.  Returns indices ``(C,)``, the chosen
    mean distances and the mean pair distances, with ties broken by the
    lowest in-cube (row-major) index.
    """
    C, B, _ = cells.shape
    idx = np.zeros(C, dtype=np.int64)
    chosen = np.zeros(C)
    pair_mean = np.zeros(C)
    flat_const = np.all(np.abs(cells - cells[:, :1]) == 0.0, axis=(1, 2))
    todo = np.flatnonzero(~flat_const)
    if B <= 64:
        for start in range(0, todo.size, 256):
            sel = todo[start:start + 256]
            blk = cells[sel]
            dd = manifold.dist(blk[:, :, None, :], blk[:, None, :, :])
            score = dd.mean(axis=2)
            best = score.min(axis=1, keepdims=True)
            tie = score <= best * (1 + 1e-12) + 1e-300
            idx[sel] = np.argmax(tie, axis=1)
            chosen[sel] = score[np.arange(sel.size), idx[sel]]
            pair_mean[sel] = score.mean(axis=1)
        return idx, chosen, pair_mean
    for q in todo:
        uniq, first, counts = np.unique(cells[q], axis=0, return_index=True, return_counts=True)
        dd = manifold.dist(uniq[:, None, :], uniq[None, :, :])
        score = dd @ counts / B
        best = score.min()
        tie = np.flatnonzero(score <= best * (1 + 1e-12) + 1e-300)
        # lowest original index among all cells carrying a tied value
        inv_first = first[tie]
        j = int(tie[np.argmin(inv_first)])
        idx[q] = int(first[j])
        chosen[q] = score[j]
        pair_mean[q] = float(score @ counts) / B
    return idx, chosen, pair_mean


@dataclass
class Projection:
    level: int
    cube_values: np.ndarray  # cube counts + (nu,)
    chosen_mean: np.ndarray  # mean distance from the chosen value over its cube
    pair_mean: np.ndarray  # mean pair distance over the cube
    residual: float  # integral of dist(E_k u, u)


def _project(u: GridMap, g: DyadicGrid, k: int, padded=None) -> Projection:
    if not 0 <= k <= g.k_floor:
        raise AlignmentError(f"level {k} is outside [0, {g.k_floor}] for this grid")
    padded = padded_values(u, g) if padded is None else padded
    b = g.block(k)
    cells = _blocks(padded, b, g.d)
    cshape = cells.shape[:-2]
    flat = cells.reshape(-1, b**g.d, u.manifold.nu)
    idx, chosen, pmean = _median_choice(u.manifold, flat)
    vals = flat[np.arange(flat.shape[0]), idx]
    residual = math.fsum((chosen * b**g.d * g.h**g.d).tolist())
    return Projection(k, vals.reshape(cshape + (u.manifold.nu,)), chosen.reshape(cshape),
                      pmean.reshape(cshape), residual)


def project_Ek(u: GridMap, k: int, L: float) -> GridMap:
    """Piecewise dyadic-constant projection on the padded window."""
    g = dyadic_grid(u, L)
    proj = _project(u, g, k)
    vals = _unblocks(proj.cube_values, g.block(k))
    return GridMap(g.lo, g.h, vals, u.tail, u.manifold)


def median_inequality_holds(u: GridMap, k: int, L: float) -> bool:
    g = dyadic_grid(u, L)
    p = _project(u, g, k)
    return bool(np.all(p.chosen_mean <= p.pair_mean * (1 + 1e-12) + 1e-15))


def projection_residual(u: GridMap, k: int, L: float) -> float:
    g = dyadic_grid(u, L)
    return _project(u, g, k).residual


# ---------------------------------------------------------------------------
# schedule


def gamma_energy(u0: GridMap, u1: GridMap, L: float, s: int = 1) -> float:
    if not u0.same_geometry(u1):
        raise DomainError("u0 and u1 must share the grid geometry")
    return (gm.pair_integral(u0, L, "euclidean", s) + gm.pair_integral(u1, L, "euclidean", s)) / L**u0.d


@dataclass
class DyadicSchedule:
    L: float
    gamma: float
    k: list
    n_max: int
    grid: DyadicGrid
    floor_layer: bool  # last level appended at grid scale without threshold search
    truncated: bool  # thresholds unreachable before the grid floor
    residuals: list  # per n: {"e": [e0, e1], "e_thr", "avg": [a0, a1], "avg_thr", "certified"}
    projections: dict = field(default_factory=dict, repr=False)  # (i, k) -> Projection

    def intervals(self, i: int) -> list:
        """Ascending layer intervals on side ``i``; layer 0 touches t = 0."""
        L = self.L
        out = []
        for n, kn in enumerate(self.k):
            a = (1 - 2.0**-kn) * L
            b = (1 - 2.0 ** -self.k[n + 1]) * L if n + 1 < len(self.k) else L
            out.append((a, b) if i == 1 else (-b, -a))
        return out

    @property
    def depth(self) -> int:
        return len(self.k) - 1

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "gamma": self.gamma,
            "k": list(self.k),
            "n_max": self.n_max,
            "k_floor": self.grid.k_floor,
            "floor_layer": self.floor_layer,
            "truncated": self.truncated,
            "intervals": {str(i): [list(iv) for iv in self.intervals(i)] for i in (0, 1)},
            "residuals": self.residuals,
        }


def select_schedule(u0: GridMap, u1: GridMap, L: float, n_max: int, s: int = 1) -> DyadicSchedule:
    """Increasing levels k_0 = 0 < k_1 < ... meeting both refinement thresholds.

    k_n is the smallest level above k_{n-1} with
    int dist(E_k u_i, u_i) <= Gamma / 2^n and
    averaged translation at 2^(1-k) L <= Gamma / 2^(k_{n-1}) for both maps.
    The search stops at the grid floor; the floor level is appended as the
    last layer so the outermost slices reproduce the data exactly.
    """
    if n_max < 1:
        raise DomainError("n_max must be at least 1")
    if not u0.same_geometry(u1):
        raise DomainError("u0 and u1 must share the grid geometry")
    g = dyadic_grid(u0, L)
    maps = (u0, u1)
    padded = [padded_values(u, g) for u in maps]
    gamma = gamma_energy(u0, u1, L, s)
    if not math.isfinite(gamma):
        raise DomainError("Gamma is infinite")
    projections = {}

    def proj(i, k):
        if (i, k) not in projections:
            projections[(i, k)] = _project(maps[i], g, k, padded[i])
        return projections[(i, k)]

    avg_cache = {}

    def avg(i, k):
        if (i, k) not in avg_cache:
            avg_cache[(i, k)] = gm.averaged_translation(maps[i], g.side(k), s).value
        return avg_cache[(i, k)]

    ks = [0]
    residuals = [{
        "n": 0, "k": 0,
        "e": [proj(0, 0).residual, proj(1, 0).residual],
        "e_thr": gamma, "avg": None, "avg_thr": None, "certified": False,
    }]
    truncated = False
    for n in range(1, n_max + 1):
        found = None
        e_thr = gamma / 2.0**n
        a_thr = gamma / 2.0 ** ks[-1]
        for k in range(ks[-1] + 1, g.k_floor + 1):
            e = [proj(0, k).residual, proj(1, k).residual]
            if max(e) > e_thr:
                continue
            a = [avg(0, k), avg(1, k)]
            if max(a) <= a_thr:
                found = (k, e, a)
                break
        if found is None:
            truncated = ks[-1] < g.k_floor
            break
        k, e, a = found
        ks.append(k)
        residuals.append({"n": n, "k": k, "e": e, "e_thr": e_thr, "avg": a, "avg_thr": a_thr, "certified": True})
        if k == g.k_floor:
            break
    floor_layer = False
    if ks[-1] < g.k_floor:
        n = len(ks)
        ks.append(g.k_floor)
        e = [proj(0, g.k_floor).residual, proj(1, g.k_floor).residual]
        residuals.append({"n": n, "k": g.k_floor, "e": e, "e_thr": gamma / 2.0**n,
                          "avg": None, "avg_thr": None, "certified": False})
        floor_layer = True
    return DyadicSchedule(float(L), gamma, ks, n_max, g, floor_layer, truncated, residuals, projections)


# ---------------------------------------------------------------------------
# BV joining map


@dataclass
class JumpFaces:
    """Jump faces of a piecewise constant map on cuboids in R^d x R (t last)."""

    lo: np.ndarray  # (F, d+1)
    hi: np.ndarray  # (F, d+1), lo == hi on the normal axis
    axis: np.ndarray  # (F,) normal axis
    area: np.ndarray  # (F,)
    a: np.ndarray  # (F, nu) value on the lower side of the normal axis
    b: np.ndarray  # (F, nu) value on the upper side
    cls: np.ndarray  # (F,)
    side: np.ndarray  # (F,) -1 for the interface, else i
    layer: np.ndarray  # (F,)

    def __len__(self):
        return self.area.size

    @classmethod
    def concat(cls, parts, nu, d):
        parts = [p for p in parts if p is not None and p["area"].size]
        if not parts:
            z = np.zeros((0, d + 1))
            return cls(z, z.copy(), np.zeros(0, int), np.zeros(0), np.zeros((0, nu)), np.zeros((0, nu)),
                       np.zeros(0, int), np.zeros(0, int), np.zeros(0, int))
        cat = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
        return cls(**cat)


def _face_batch(lo, hi, axis, area, a, b, cls_, side, layer, manifold):
    keep = manifold.dist(a, b) > 0
    n = int(keep.sum())
    return {
        "lo": lo[keep], "hi": hi[keep], "axis": np.full(n, axis, dtype=int),
        "area": np.broadcast_to(area, keep.shape)[keep].astype(float),
        "a": a[keep], "b": b[keep], "cls": np.full(n, cls_, dtype=int),
        "side": np.full(n, side, dtype=int), "layer": np.full(n, layer, dtype=int),
    }


def _cube_boxes(g: DyadicGrid, k: int):
    """Lower and upper corners ``(cubes..., d)`` of every level-k cube."""
    side = g.side(k)
    counts = g.cube_counts(k)
    axes = [g.lo[i] + side * np.arange(c) for i, c in enumerate(counts)]
    lo = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return lo, lo + side


@dataclass
class BVExtension:
    schedule: DyadicSchedule
    layers: dict  # (i, n) -> cube values at level k_n
    faces: JumpFaces
    tail: np.ndarray
    manifold: object

    @property
    def grid(self) -> DyadicGrid:
        return self.schedule.grid

    @property
    def L(self) -> float:
        return self.schedule.L

    def n_layers(self) -> int:
        return len(self.layers)

    def layer_of(self, t: float):
        for i in (0, 1):
            for n, (a, b) in enumerate(self.schedule.intervals(i)):
                if a < t < b:
                    return i, n
        raise DomainError(f"t={t} lies on a layer boundary or outside (-L, L)")

    def slice_at(self, t: float) -> GridMap:
        """Horizontal slice as a GridMap on the padded grid."""
        i, n = self.layer_of(t)
        g = self.grid
        vals = _unblocks(self.layers[(i, n)], g.block(self.schedule.k[n]))
        return GridMap(g.lo, g.h, vals, self.tail, self.manifold)

    def cuboids(self):
        """Yield ``(cube, interval, value)`` for every cuboid over the padded region."""
        for (i, n), vals in sorted(self.layers.items()):
            k = self.schedule.k[n]
            iv = self.schedule.intervals(i)[n]
            for cube, idx in zip(self.grid.cubes(k), np.ndindex(*vals.shape[:-1])):
                yield cube, iv, vals[idx]


def build_bv_extension(u0: GridMap, u1: GridMap, schedule: DyadicSchedule) -> BVExtension:
    """Piecewise constant joining map with its classified jump faces."""
    g = schedule.grid
    m = u0.manifold
    if m.dist(u0.tail, u1.tail) > m.on_manifold_tol:
        raise DomainError("u0 and u1 have different tails; their L1 distance is infinite")
    maps = (u0, u1)
    tail = u0.tail
    nu = m.nu
    d = g.d
    layers = {}
    for i in (0, 1):
        for n, k in enumerate(schedule.k):
            key = (i, k)
            if key not in schedule.projections:
                schedule.projections[key] = _project(maps[i], g, k)
            layers[(i, n)] = schedule.projections[key].cube_values
    parts = []
    # (i) interface t = 0 between level-0 projections
    lo, hi = _cube_boxes(g, 0)
    a = layers[(0, 0)].reshape(-1, nu)
    b = layers[(1, 0)].reshape(-1, nu)
    flo = np.concatenate([lo.reshape(-1, d), np.zeros((a.shape[0], 1))], axis=1)
    fhi = np.concatenate([hi.reshape(-1, d), np.zeros((a.shape[0], 1))], axis=1)
    parts.append(_face_batch(flo, fhi, d, g.side(0) ** d, a, b, INTERFACE, -1, 0, m))
    # (ii) parallel faces between consecutive layers on each side
    for i in (0, 1):
        ivs = schedule.intervals(i)
        for n in range(len(schedule.k) - 1):
            k_c, k_f = schedule.k[n], schedule.k[n + 1]
            coarse = _unblocks(layers[(i, n)], 2 ** (k_f - k_c)).reshape(-1, nu)
            fine = layers[(i, n + 1)].reshape(-1, nu)
            lo, hi = _cube_boxes(g, k_f)
            if i == 1:
                t_face = ivs[n][1]
                a, b = coarse, fine
            else:
                t_face = ivs[n][0]
                a, b = fine, coarse
            tcol = np.full((fine.shape[0], 1), t_face)
            flo = np.concatenate([lo.reshape(-1, d), tcol], axis=1)
            fhi = np.concatenate([hi.reshape(-1, d), tcol], axis=1)
            parts.append(_face_batch(flo, fhi, d, g.side(k_f) ** d, a, b, PARALLEL, i, n + 1, m))
    # (iii) perpendicular faces inside each layer, including the padded border
    for i in (0, 1):
        ivs = schedule.intervals(i)
        for n, k in enumerate(schedule.k):
            vals = layers[(i, n)]
            side = g.side(k)
            t0, t1 = ivs[n]
            padded = np.pad(vals, [(1, 1)] * d + [(0, 0)], mode="constant")
            ring = np.ones(padded.shape[:-1], dtype=bool)
            ring[tuple([slice(1, -1)] * d)] = False
            padded[ring] = tail
            counts = vals.shape[:-1]
            for ax in range(d):
                lo_sl = [slice(1, -1)] * d
                hi_sl = [slice(1, -1)] * d
                lo_sl[ax] = slice(0, -1)
                hi_sl[ax] = slice(1, None)
                a = padded[tuple(lo_sl)]
                b = padded[tuple(hi_sl)]
                fcounts = a.shape[:-1]
                axes = []
                for j in range(d):
                    if j == ax:
                        axes.append(g.lo[j] + side * np.arange(fcounts[j]))
                    else:
                        axes.append(g.lo[j] + side * np.arange(counts[j]))
                base = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
                top = base + side
                top[:, ax] = base[:, ax]
                F = base.shape[0]
                flo = np.concatenate([base, np.full((F, 1), t0)], axis=1)
                fhi = np.concatenate([top, np.full((F, 1), t1)], axis=1)
                area = side ** (d - 1) * (t1 - t0)
                parts.append(_face_batch(flo, fhi, ax, area, a.reshape(-1, nu), b.reshape(-1, nu),
                                         PERPENDICULAR, i, n, m))
    faces = JumpFaces.concat(parts, nu, d)
    return BVExtension(schedule, layers, faces, tail, m)


def jump_energy(e: BVExtension) -> dict:
    f = e.faces
    contrib = f.area * e.manifold.dist(f.a, f.b)
    out = {"total": math.fsum(contrib.tolist())}
    for c, name in CLASS_NAMES.items():
        out[name] = math.fsum(contrib[f.cls == c].tolist())
    return out


def jump_bound_pieces(u0: GridMap, u1: GridMap, e: BVExtension, s: int = 1) -> dict:
    """Right-hand sides of the explicit estimates for each class of jumps.

    interface     <= int dist(u0,u1) + L^-d 2^-d sum_i I_sup(2L)
    parallel      <= 6 Gamma + L^-d sum_i I_sup(2L)
    perpendicular <= 11 d Gamma + d L^-d sum_i I_sup(6L)
    with I_sup(r) the unnormalized pair integral over |x - y|_inf <= r.
    """
    L, d, gamma = e.L, u0.d, e.schedule.gamma
    int01 = gm.integral_dist_between(u0, u1)
    sup2 = sum(gm.pair_integral(u, 2 * L, "sup", s) for u in (u0, u1))
    sup6 = sum(gm.pair_integral(u, 6 * L, "sup", s) for u in (u0, u1))
    pieces = {
        "int_dist_u0_u1": int01,
        "gamma": gamma,
        "sup_2L": sup2,
        "sup_6L": sup6,
        "interface_bound": int01 + sup2 / (2.0**d * L**d),
        "parallel_bound": 6 * gamma + sup2 / L**d,
        "perpendicular_bound": 11 * d * gamma + d * sup6 / L**d,
    }
    pieces["total_bound"] = pieces["interface_bound"] + pieces["parallel_bound"] + pieces["perpendicular_bound"]
    pieces["C_d"] = 2.0**-d + 1 + d
    return pieces


def trace_defects(e: BVExtension, u0: GridMap, u1: GridMap) -> list:
    """L1 distance between every layer slice and the data on its side."""
    out = []
    for i, u in ((0, u0), (1, u1)):
        for n, k in enumerate(e.schedule.k):
            res = e.schedule.projections[(i, k)].residual
            out.append({"i": i, "n": n, "k": k, "defect": res, "bound": 2.0**-n * e.schedule.gamma,
                        "floor": k == e.grid.k_floor})
    return out


# ---------------------------------------------------------------------------
# cone smoothing


def _sample_axis(origin, h, n, lo, hi):
    a = int(math.ceil((lo - origin) / h - 0.5 - 1e-9))
    b = int(math.floor((hi - origin) / h - 0.5 + 1e-9))
    return max(a, 0), min(b, n - 1) + 1


def apply_cones(U: SlabMap, faces: JumpFaces, one_sided=None, claims=None) -> np.ndarray:
    """Replace each jump by the geodesic profile inside its double cone.

    For a face P with normal coordinate tau and in-face distance
    delta = dist(x, boundary of P), samples with |tau| <= delta/2 get
    gamma(2 tau / delta).  ``one_sided`` maps face indices to the inward
    direction (+1/-1): those faces use the one-sided profile starting from
    the outside value on the face itself.  Returns the per-sample claim
    counts (disjointness diagnostic).
    """
    m = U.manifold
    one_sided = one_sided or {}
    claims = np.zeros(U.counts, dtype=np.int16) if claims is None else claims
    centers = [U.axis_centers(ax) for ax in range(U.dim)]
    for f in range(len(faces)):
        ax = int(faces.axis[f])
        lo, hi = faces.lo[f], faces.hi[f]
        widths = np.delete(hi - lo, ax)
        reach = float(widths.min()) / 4.0
        direction = one_sided.get(f, 0)
        c = lo[ax]
        t_lo = c - reach if direction >= 0 and direction != 1 else c
        t_hi = c + reach if direction >= 0 else c
        if direction == 1:
            t_lo, t_hi = c, c + reach
        elif direction == -1:
            t_lo, t_hi = c - reach, c
        sl = []
        for j in range(U.dim):
            a0, a1 = (t_lo, t_hi) if j == ax else (lo[j], hi[j])
            i0, i1 = _sample_axis(U.origin[j], U.h, U.counts[j], a0, a1)
            if i1 <= i0:
                break
            sl.append(slice(i0, i1))
        else:
            grids = np.meshgrid(*[centers[j][sl[j]] for j in range(U.dim)], indexing="ij", sparse=True)
            delta = None
            for j in range(U.dim):
                if j == ax:
                    continue
                dj = np.minimum(grids[j] - lo[j], hi[j] - grids[j])
                delta = dj if delta is None else np.minimum(delta, dj)
            tau = grids[ax] - c
            delta, tau = np.broadcast_arrays(delta, tau)
            if direction == 0:
                mask = np.abs(tau) * 2.0 <= delta
                mask &= delta > 0
                prof = lambda x: m.geodesic_profile(faces.a[f], faces.b[f], x)  # noqa: E731
                arg = np.divide(2.0 * tau, delta, out=np.zeros_like(tau), where=delta > 0)
            else:
                inward = tau * direction
                mask = (inward >= 0) & (inward * 2.0 <= delta) & (delta > 0)
                outside, inside = (faces.a[f], faces.b[f]) if direction == 1 else (faces.b[f], faces.a[f])
                prof = lambda x, o=outside, i_=inside: m.one_sided_profile(o, i_, x)  # noqa: E731
                arg = np.divide(2.0 * inward, delta, out=np.zeros_like(tau), where=delta > 0)
            if np.any(mask):
                block = U.values[tuple(sl)]
                block[mask] = prof(arg[mask])
                U.values[tuple(sl)] = block
                cl = claims[tuple(sl)]
                cl[mask] += 1
                claims[tuple(sl)] = cl
    return claims


# Cones of the thinnest layer have half-width a quarter of its thickness; with
# 8 samples across it every cone holds at least two samples per side.
MIN_LAYER_SAMPLES = 8


def _check_resolution(h: float, h_fine: float, g: DyadicGrid):
    r = h / h_fine
    thinnest = 2.0**-g.k_floor * g.L
    if abs(r - round(r)) > 1e-9 or round(r) % 2:
        raise ResolutionError(f"h_fine={h_fine:g} must divide the thinnest layer {thinnest:g} evenly")
    if thinnest / h_fine < MIN_LAYER_SAMPLES - 1e-9:
        raise ResolutionError(
            f"h_fine={h_fine:g} puts fewer than {MIN_LAYER_SAMPLES} samples across the thinnest layer "
            f"(thickness {thinnest:g})"
        )
    return int(round(r))


def _piecewise_slab(e: BVExtension, h_fine: float, lat_lo, lat_counts, t_lo, t_hi, closed=False) -> SlabMap:
    g = e.grid
    m = e.manifold
    d = g.d
    r = _check_resolution(g.h, h_fine, g)
    nt = int(round((t_hi - t_lo) / h_fine))
    vals = np.empty(tuple(lat_counts) + (nt, m.nu))
    vals[...] = e.tail
    start = [int(round((g.lo[j] - lat_lo[j]) / h_fine)) for j in range(d)]
    U = SlabMap(np.concatenate([lat_lo, [t_lo]]), h_fine, vals, e.tail, m, closed)
    for (i, n), cube_vals in e.layers.items():
        k = e.schedule.k[n]
        a, b = e.schedule.intervals(i)[n]
        i0, i1 = _sample_axis(t_lo, h_fine, nt, a, b)
        if i1 <= i0:
            continue
        fine = _unblocks(cube_vals, g.block(k) * r)
        sl = []
        src = []
        for j in range(d):
            s0 = max(start[j], 0)
            s1 = min(start[j] + fine.shape[j], lat_counts[j])
            sl.append(slice(s0, s1))
            src.append(slice(s0 - start[j], s1 - start[j]))
        vals[tuple(sl) + (slice(i0, i1),)] = fine[tuple(src)][..., None, :]
    return U


def _border_reach(e: BVExtension) -> float:
    """How far cones of faces on the padded border reach into the tail."""
    g = e.grid
    f = e.faces
    reach = 0.0
    for j in range(len(f)):
        ax = int(f.axis[j])
        if ax == g.d:
            continue
        c = f.lo[j, ax]
        if abs(c - g.lo[ax]) < 1e-12 or abs(c - g.upper[ax]) < 1e-12:
            reach = max(reach, float(np.delete(f.hi[j] - f.lo[j], ax).min()) / 4.0)
    return reach


def smooth_extension(e: BVExtension, h_fine: float, margin: float | None = None) -> SlabMap:
    """Sample the BV map on a fine slab and smooth every jump inside its cone.

    The lateral margin defaults to the reach of the border cones, so the
    slab is no wider than the smoothed map needs.
    """
    g = e.grid
    L = e.L
    margin = _border_reach(e) if margin is None else margin
    mcells = int(math.ceil(margin / h_fine - 1e-9)) * h_fine
    lat_lo = g.lo - mcells
    lat_counts = [int(round((g.n[j] * g.h + 2 * mcells) / h_fine)) for j in range(g.d)]
    U = _piecewise_slab(e, h_fine, lat_lo, lat_counts, -L, L)
    claims = apply_cones(U, e.faces)
    U.meta["max_claims"] = int(claims.max()) if claims.size else 0
    return U


def smooth_single_face(manifold, a, b, sides, h_fine: float, one_sided: bool = False) -> SlabMap:
    """Cone smoothing of a single jump across P = prod [0, sides_j] x {0}.

    The slab covers P x (-T, T) with T = min(sides)/2 (or (0, T) one-sided)
    and is closed: only the smoothing itself contributes energy.  One-sided,
    the trace on P is ``a`` and the step from it to the first layer counts.
    """
    sides = np.asarray(sides, dtype=float)
    d = sides.size
    T = float(sides.min()) / 2.0
    counts = [int(round(s / h_fine)) for s in sides]
    if any(abs(c * h_fine - s) > 1e-9 * s for c, s in zip(counts, sides)):
        raise ResolutionError("h_fine must divide the face sides")
    t_lo = 0.0 if one_sided else -T
    nt = int(round((T - t_lo) / h_fine))
    a = manifold.check(a, "a")
    b = manifold.check(b, "b")
    vals = np.empty(tuple(counts) + (nt, manifold.nu))
    tc = t_lo + h_fine * (np.arange(nt) + 0.5)
    vals[...] = np.where((tc < 0)[:, None], a, b)
    traces = {"bottom": a} if one_sided else {}
    U = SlabMap(np.concatenate([np.zeros(d), [t_lo]]), h_fine, vals, b, manifold, closed=True, traces=traces)
    faces = JumpFaces(
        np.concatenate([np.zeros(d), [0.0]])[None], np.concatenate([sides, [0.0]])[None],
        np.array([d]), np.array([float(np.prod(sides))]), a[None], b[None],
        np.array([BOUNDARY if one_sided else PERPENDICULAR]), np.array([0]), np.array([0]),
    )
    apply_cones(U, faces, one_sided={0: 1} if one_sided else None)
    return U


def face_slice_defect(U: SlabMap, a, b, one_sided: bool = False) -> float:
    """sup over sample layers of the L1 distance to the unsmoothed step."""
    m = U.manifold
    tc = U.axis_centers(U.dim - 1)
    cell = U.h**U.d
    worst = 0.0
    for j, t in enumerate(tc):
        ref = b if (one_sided or t >= 0) else a
        worst = max(worst, float(np.sum(m.dist(U.values[..., j, :], ref))) * cell)
    return worst


# ---------------------------------------------------------------------------
# extensions


@dataclass
class ExtensionResult:
    slab: SlabMap
    report: dict
    bv: BVExtension | None = None


def _ratio(num, den):
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


def strip_extension(u0: GridMap, u1: GridMap, L: float, n_max: int, h_fine: float, s: int = 1) -> ExtensionResult:
    """W^{1,1} map on R^d x (-L, L) with traces u0 at -L and u1 at L."""
    int01 = gm.integral_dist_between(u0, u1)
    if not math.isfinite(int01):
        raise DomainError("the L1 distance between u0 and u1 is infinite")
    sched = select_schedule(u0, u1, L, n_max, s)
    bv = build_bv_extension(u0, u1, sched)
    U = smooth_extension(bv, h_fine)
    energy = gradient_energy_box(U)
    jumps = jump_energy(bv)
    unit = sum(gm.pair_integral(u, 1.0, "euclidean", s) for u in (u0, u1))
    rhs_unit = int01 + unit
    rhs_L = int01 + sched.gamma
    report = {
        "L": L, "n_max": n_max, "h_fine": h_fine, "d": u0.d,
        "gamma": sched.gamma, "k": list(sched.k), "truncated": sched.truncated,
        "floor_layer": sched.floor_layer,
        "jump_energy": jumps, "n_faces": len(bv.faces),
        "grad_energy": energy,
        "int_dist_u0_u1": int01,
        "nonlocal_cutoff_1": unit,
        "rhs_cutoff_1": rhs_unit,
        "rhs_cutoff_L": rhs_L,
        "ratio": _ratio(energy, rhs_unit),
        "ratio_cutoff_L": _ratio(energy, rhs_L),
        "ratio_to_jumps": _ratio(energy, jumps["total"]),
        "cones_disjoint": U.meta.get("max_claims", 0) <= 1,
        "schedule": sched.to_dict(),
    }
    return ExtensionResult(U, report, bv)


CUBE_FACES = ("bottom", "top")


def cube_extension(boundary: dict, p, h_fine: float, n_max: int = 8, s: int = 1) -> ExtensionResult:
    """Extension inside Q = [-1, 1]^(d+1) of boundary data equal to p off the t-faces.

    ``boundary`` maps ``"bottom"`` (t = -1) and ``"top"`` (t = 1) to GridMaps
    whose windows lie in [-1, 1]^d with tail ``p``.  Any other entry (a
    lateral face) must be identically ``p``.
    """
    try:
        bottom, top = boundary["bottom"], boundary["top"]
    except KeyError as exc:
        raise ContractError("boundary data needs 'bottom' and 'top' faces") from exc
    m = bottom.manifold
    p = m.check(p, "p")
    for name, face in boundary.items():
        if name in CUBE_FACES:
            continue
        vals = face.values if isinstance(face, GridMap) else np.asarray(face, float)
        if np.any(m.dist(vals, p) > m.on_manifold_tol):
            raise ContractError(f"lateral face {name!r} is not identically p")
    for face in (bottom, top):
        if m.dist(face.tail, p) > m.on_manifold_tol:
            raise ContractError("bottom/top tails must equal p")
        if np.any(face.origin < -1 - 1e-12) or np.any(face.upper > 1 + 1e-12):
            raise ContractError("bottom/top windows must lie in [-1, 1]^d")
    if not bottom.same_geometry(top):
        raise ContractError("bottom and top must share the grid geometry")
    sched = select_schedule(bottom, top, 1.0, n_max, s)
    g = sched.grid
    if np.any(np.abs(g.lo + 1) > 1e-12) or np.any(np.abs(g.upper - 1) > 1e-12):
        raise ContractError("padded region must be the cube [-1, 1]^d")
    bv = build_bv_extension(bottom, top, sched)
    d = g.d
    r = _check_resolution(g.h, h_fine, g)
    lat_counts = [g.n[j] * r for j in range(d)]
    # open slab with tail p: the lateral faces carry the trace p
    U = _piecewise_slab(bv, h_fine, g.lo.copy(), lat_counts, -1.0, 1.0, closed=False)
    for name, face in (("bottom", bottom), ("top", top)):
        fine = _unblocks(padded_values(face, g), r)
        U.traces[name] = fine
    f = bv.faces
    one_sided = {}
    for j in range(len(f)):
        if f.cls[j] == PERPENDICULAR:
            c = f.lo[j, f.axis[j]]
            if abs(c + 1.0) < 1e-12:
                one_sided[j] = 1
            elif abs(c - 1.0) < 1e-12:
                one_sided[j] = -1
    for j in one_sided:
        f.cls[j] = BOUNDARY
    claims = apply_cones(U, f, one_sided=one_sided)
    energy = gradient_energy_box(U)
    boundary_l1 = sum(gm.integral_dist_to_point(face, p).value for face in (bottom, top))
    lateral = _lateral_trace_defect(U, p)
    jumps = jump_energy(bv)
    report = {
        "d": d, "h_fine": h_fine, "gamma": sched.gamma, "k": list(sched.k),
        "jump_energy": jumps, "grad_energy": energy,
        "boundary_l1": boundary_l1,
        "ratio": _ratio(energy, boundary_l1),
        "lateral_trace_defect": lateral,
        "n_one_sided": len(one_sided),
        "cones_disjoint": int(claims.max()) <= 1 if claims.size else True,
        "schedule": sched.to_dict(),
    }
    return ExtensionResult(U, report, bv)


def _lateral_trace_defect(U: SlabMap, p) -> float:
    """L1 distance to p of the outermost lateral sample layers, per unit face area."""
    m = U.manifold
    total = 0.0
    cell = U.h**U.d
    for ax in range(U.d):
        for idx in (0, -1):
            sl = [slice(None)] * U.dim
            sl[ax] = idx
            total += float(np.sum(m.dist(U.values[tuple(sl)], p))) * cell
    return total


def halfspace_extension(u: GridMap, L: float, n_max: int, h_fine: float, R_schedule=None,
                        s: int = 1) -> ExtensionResult:
    """Extension to R^d x (0, inf): strip from u to b_* on (0, 2L), then constant b_*."""
    if R_schedule is None:
        diam = u.diameter + 2 * L
        R_schedule = [10 * diam, 100 * diam]
    bbm = gm.asymptotic_mean(u, R_schedule)
    b_star = bbm.b_star
    if u.manifold.dist(b_star, u.tail) > u.manifold.on_manifold_tol:
        raise DomainError("asymptotic mean differs from the tail; the map is not integrable")
    u1 = gm.constant_map(u.manifold, b_star, u.origin, u.h, u.counts)
    res = strip_extension(u, u1, L, n_max, h_fine, s)
    U = res.slab
    U.origin = U.origin.copy()
    U.origin[-1] += L
    theta_last = gm.theta(u, R_schedule[-1]).value
    report = dict(res.report)
    report.update({
        "b_star": [float(x) for x in b_star],
        "bbm": bbm.to_dict(),
        "theta_R_last": theta_last,
        "ratio_halfspace": _ratio(res.report["grad_energy"], theta_last),
        "above": "constant b_star for t > 2L",
    })
    return ExtensionResult(U, report, res.bv)
