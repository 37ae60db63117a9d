"""Discrete traces of slab maps and the nonlocal trace inequalities.

For a slab map U on R^d x (t_lo, t_hi) and boundary data u on t = t_lo the
two left-hand sides are

    lhs1(r) = iint_{|x - y| <= r} dist(u(x), u(y)) / r^d
    lhs2(r) = iint_{|x - y| <= r, y_t in (0, r)} dist(u(x), U(y)) / r^(d+1)

and both are compared with the gradient energy of U over R^d x (0, r).
For closed slabs every integral is restricted to the lateral box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gridmap as gm
from . import kernels
from .errors import ContractError, DomainError, ResolutionError
from .gridmap import GridMap
from .slab import SlabMap, gradient_energy_box

SIDES = ("bottom", "top")


def gradient_energy(U: SlabMap, region=None) -> float:
    """W^{1,1} energy of U over a box ``(lo, hi)`` in R^(d+1).

    ``None`` (or ``None`` entries) means unbounded along that axis; for open
    slabs this includes the jump into the lateral tail.  A region that does
    not meet the slab is an error.
    """
    if region is None:
        return gradient_energy_box(U)
    lo, hi = region
    lo = [None] * U.dim if lo is None else list(lo)
    hi = [None] * U.dim if hi is None else list(hi)
    if len(lo) != U.dim or len(hi) != U.dim:
        raise DomainError(f"region needs {U.dim} coordinates per corner")
    tol = 1e-12 * max(1.0, float(np.max(np.abs(U.upper))))
    for ax in range(U.dim):
        a = -math.inf if lo[ax] is None else lo[ax]
        b = math.inf if hi[ax] is None else hi[ax]
        if not a < b:
            raise DomainError("region corners must satisfy lo < hi")
        inside_lo = a >= U.origin[ax] - tol or (lo[ax] is None and (ax < U.d and not U.closed))
        inside_hi = b <= U.upper[ax] + tol or (hi[ax] is None and (ax < U.d and not U.closed))
        if not (inside_lo and inside_hi):
            raise DomainError(f"region leaves the slab along axis {ax}")
    return gradient_energy_box(U, lo, hi)


def _oriented(U: SlabMap, side: str) -> SlabMap:
    """U itself for the bottom side, U reflected in t for the top side."""
    if side not in SIDES:
        raise DomainError(f"side must be one of {SIDES}")
    if side == "bottom":
        return U
    origin = U.origin.copy()
    origin[-1] = -U.upper[-1]
    traces = {}
    if "top" in U.traces:
        traces["bottom"] = U.traces["top"]
    if "bottom" in U.traces:
        traces["top"] = U.traces["bottom"]
    return SlabMap(origin, U.h, U.values[..., ::-1, :], U.tail, U.manifold, U.closed, dict(U.meta), traces)


def trace_slice(U: SlabMap, side: str = "bottom") -> GridMap:
    """The sample layer adjacent to the chosen face, as a GridMap."""
    V = _oriented(U, side)
    return GridMap(V.origin[:-1], V.h, V.values[..., 0, :], V.tail, V.manifold)


@dataclass
class TraceReport:
    side: str
    r: list
    lhs1: list
    lhs2: list
    energy: list
    ratio1: list
    ratio2: list

    def __post_init__(self):
        for name in ("lhs1", "lhs2", "energy"):
            if any(not v >= 0 for v in getattr(self, name)):
                raise DomainError(f"{name} entries must be nonnegative")

    @property
    def max_ratio1(self) -> float:
        return max(self.ratio1, default=0.0)

    @property
    def max_ratio2(self) -> float:
        return max(self.ratio2, default=0.0)

    def to_dict(self) -> dict:
        return {
            "side": self.side,
            "r": [float(x) for x in self.r],
            "lhs1": [float(x) for x in self.lhs1],
            "lhs2": [float(x) for x in self.lhs2],
            "energy": [float(x) for x in self.energy],
            "ratio1": [float(x) for x in self.ratio1],
            "ratio2": [float(x) for x in self.ratio2],
            "max_ratio1": float(self.max_ratio1),
            "max_ratio2": float(self.max_ratio2),
        }


def _ratio(num, den):
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


def _resample(u: GridMap, V: SlabMap, pad: int) -> np.ndarray:
    """Values of u at the lateral sample centers of V, widened by ``pad`` cells."""
    m = V.manifold
    d = V.d
    if u.d != d or u.manifold != m:
        raise ContractError("boundary data and slab disagree on dimension or target")
    ratio = u.h / V.h
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ContractError("the data cell size must be an integer multiple of the slab spacing")
    shift = (u.origin - V.origin[:d]) / V.h
    if np.any(np.abs(shift - np.round(shift)) > 1e-9):
        raise ContractError("the data grid is not aligned with the slab samples")
    if np.any(u.origin < V.origin[:d] - 1e-9 * V.h) or np.any(u.upper > V.upper[:d] + 1e-9 * V.h):
        raise ContractError("the data window must lie inside the slab's lateral box")
    axes = [V.origin[j] + V.h * (np.arange(-pad, V.counts[j] + pad) + 0.5) for j in range(d)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return u.evaluate(pts)


def _pair_sum(a: np.ndarray, b: np.ndarray, m, offsets, weights, d: int) -> float:
    counts = a.shape[:d]
    parts = []
    for off, w in zip(offsets, weights):
        if any(abs(int(o)) >= n for o, n in zip(off, counts)):
            continue
        src, dst = kernels.slices_for_offset(counts, off)
        parts.append(w * float(np.sum(m.dist(a[src], b[dst]))))
    return math.fsum(parts)


# above this many distinct boundary values the direct offset loop is cheaper
MAX_CLASSES = 256


def _layer_pair_sums(ub, slab, m, kerns, d: int) -> list:
    """Per-layer sums over lateral pairs of w_j(y - x) dist(ub[x], slab[y, j]).

    The boundary data usually takes few distinct values.  Grouping x by
    value turns each sum into a correlation of an indicator with the layer
    kernel, done by FFT; otherwise the offsets are looped over directly.
    """
    counts = ub.shape[:d]
    n_layers = len(kerns)
    classes, inverse = np.unique(ub.reshape(-1, ub.shape[-1]), axis=0, return_inverse=True)
    inverse = inverse.reshape(counts)
    if classes.shape[0] > MAX_CLASSES:
        table = {}
        for j, (offsets, weights) in enumerate(kerns):
            for off, w in zip(map(tuple, offsets), weights):
                table.setdefault(off, np.zeros(n_layers))[j] = w
        parts = []
        for off, w in sorted(table.items()):
            if any(abs(o) >= n for o, n in zip(off, counts)):
                continue
            src, dst = kernels.slices_for_offset(counts, off)
            dd = m.dist(ub[src][..., None, :], slab[dst])
            parts.append(float(dd.reshape(-1, n_layers).sum(axis=0) @ w))
        return parts
    reach = max(int(np.max(np.abs(off))) if off.size else 0 for off, _ in kerns)
    shape = [n + 2 * reach for n in counts]
    crop = tuple(slice(reach, reach + n) for n in counts)
    axes = tuple(range(d))
    k_hat = []
    for offsets, weights in kerns:
        dense = np.zeros([2 * reach + 1] * d)
        dense[tuple((offsets + reach).T)] = weights
        k_hat.append(np.fft.rfftn(dense, shape, axes))
    parts = []
    for k, v in enumerate(classes):
        i_hat = np.fft.rfftn((inverse == k).astype(float), shape, axes)
        dist_k = m.dist(v, slab)  # counts + (layers,)
        for j in range(n_layers):
            conv = np.fft.irfftn(i_hat * k_hat[j], shape, axes)[crop]
            parts.append(float(np.sum(np.maximum(conv, 0.0) * dist_k[..., j])))
    return parts


def trace_inequality_check(U: SlabMap, u: GridMap, r_schedule, side: str = "bottom", s: int = 1) -> TraceReport:
    """Both trace left-hand sides, the energy over (0, r) and their ratios.

    ``u`` is the boundary data on the chosen face; it is resampled onto the
    slab's lateral grid (piecewise constant data on a coarser aligned grid
    is reproduced exactly).
    """
    V = _oriented(U, side)
    m = V.manifold
    d = V.d
    r_schedule = [float(r) for r in r_schedule]
    if not r_schedule:
        raise DomainError("empty r schedule")
    if any(b <= a for a, b in zip(r_schedule, r_schedule[1:])):
        raise DomainError("r schedule must be strictly increasing")
    thickness = V.upper[-1] - V.origin[-1]
    for r in r_schedule:
        if r < 2 * V.h * (1 - 1e-12):
            raise ResolutionError(f"r={r:g} is below twice the slab spacing {V.h:g}")
        if r > thickness * (1 + 1e-12):
            raise DomainError(f"r={r:g} exceeds the slab thickness {thickness:g}")
    if not V.closed and m.dist(u.tail, V.tail) > m.on_manifold_tol:
        inf = [math.inf] * len(r_schedule)
        return TraceReport(side, r_schedule, inf, inf,
                           [gradient_energy(V, ([None] * d + [V.origin[-1]],
                                                [None] * d + [V.origin[-1] + r])) for r in r_schedule],
                           inf, inf)
    t_lo = V.origin[-1]
    tc = V.axis_centers(d) - t_lo
    lhs1, lhs2, energy = [], [], []
    for r in r_schedule:
        pad = 0 if V.closed else int(math.ceil(r / V.h)) + 1
        ub = _resample(u, V, pad)
        if V.closed:
            offsets, weights = kernels.pair_kernel(V.h, d, r, "euclidean", s)
            lhs1.append(_pair_sum(ub, ub, m, offsets, weights, d) / r**d)
        else:
            ug = GridMap(V.origin[:d] - pad * V.h, V.h, ub, u.tail, m)
            lhs1.append(gm.pair_integral(ug, r, "euclidean", s) / r**d)
        layers = np.flatnonzero(tc < r)
        slab = V.values[..., : layers.size, :]
        if pad:
            slab = np.pad(slab, [(pad, pad)] * d + [(0, 0), (0, 0)], mode="constant")
            ring = np.ones(slab.shape[:d], dtype=bool)
            ring[tuple([slice(pad, -pad)] * d)] = False
            slab[ring] = V.tail
        kerns = [kernels.pair_kernel(V.h, d, r, "euclidean", s, extra_sq=float(tc[j]) ** 2) for j in layers]
        parts = _layer_pair_sums(ub, slab, m, kerns, d)
        lhs2.append(math.fsum(parts) * V.h / r ** (d + 1))
        lo = [None] * d + [t_lo]
        hi = [None] * d + [t_lo + r]
        if V.closed:
            lo = list(V.origin[:d]) + [t_lo]
            hi = list(V.upper[:d]) + [t_lo + r]
        energy.append(gradient_energy(V, (lo, hi)))
    ratio1 = [_ratio(a, e) for a, e in zip(lhs1, energy)]
    ratio2 = [_ratio(a, e) for a, e in zip(lhs2, energy)]
    return TraceReport(side, r_schedule, lhs1, lhs2, energy, ratio1, ratio2)
