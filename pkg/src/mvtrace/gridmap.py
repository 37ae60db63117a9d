"""Piecewise constant maps R^d -> N and their nonlocal energies.

A :class:`GridMap` is constant on the cells of a finite uniform window and
equal to a fixed ``tail`` point outside it.  Every double integral below is
computed exactly for that model except for the pair-measure kernel, which is
a (supersampled) midpoint rule near the cutoff shell.  Pairs with both points
outside the window contribute nothing; pairs with exactly one point inside
are handled through the complement measure ``|B_R| - |B_R(x) cap W|``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError, ResolutionError, SchemaError
from .manifold import TargetManifold


@dataclass(frozen=True, eq=False)
class GridMap:
    origin: np.ndarray
    h: float
    values: np.ndarray  # shape counts + (nu,)
    tail: np.ndarray
    manifold: TargetManifold

    def __post_init__(self):
        origin = np.atleast_1d(np.asarray(self.origin, dtype=float))
        values = np.asarray(self.values, dtype=float)
        tail = np.asarray(self.tail, dtype=float)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "tail", tail)
        if self.h <= 0:
            raise DomainError("cell size must be positive")
        if values.ndim != origin.size + 1:
            raise DomainError(f"values must have shape counts + (nu,), got {values.shape} for d={origin.size}")
        self.manifold.check(values, "cell values")
        self.manifold.check(tail, "tail")
        values.setflags(write=False)

    @property
    def d(self) -> int:
        return self.origin.size

    @property
    def counts(self) -> tuple:
        return self.values.shape[:-1]

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.h * np.asarray(self.counts, dtype=float)

    @property
    def window_volume(self) -> float:
        return self.cell_volume * self.n_cells

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.origin))

    def centers(self) -> np.ndarray:
        axes = [self.origin[i] + self.h * (np.arange(n) + 0.5) for i, n in enumerate(self.counts)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def evaluate(self, points) -> np.ndarray:
        """Values at ``points`` of shape ``(..., d)``; the tail outside the window."""
        points = np.asarray(points, dtype=float)
        idx = np.floor((points - self.origin) / self.h).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.asarray(self.counts)), axis=-1)
        out = np.broadcast_to(self.tail, points.shape[:-1] + (self.manifold.nu,)).copy()
        if np.any(inside):
            out[inside] = self.values[tuple(idx[inside].T)]
        return out

    def with_values(self, values) -> "GridMap":
        return GridMap(self.origin, self.h, values, self.tail, self.manifold)

    def same_geometry(self, other: "GridMap") -> bool:
        return (
            self.counts == other.counts
            and math.isclose(self.h, other.h, rel_tol=1e-12)
            and np.allclose(self.origin, other.origin, rtol=0, atol=1e-12 * self.h)
            and self.manifold == other.manifold
        )

    def tail_distances(self) -> np.ndarray:
        return self.manifold.dist(self.values, self.tail)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "origin": [float(x) for x in self.origin],
            "h": float(self.h),
            "counts": [int(n) for n in self.counts],
            "manifold_id": self.manifold.ident,
            "tail": [float(x) for x in self.tail],
            "values": self.values.reshape(-1, self.manifold.nu).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridMap":
        try:
            m = TargetManifold.from_id(data["manifold_id"])
            counts = tuple(int(n) for n in data["counts"])
            d = int(data["d"])
            values = np.asarray(data["values"], dtype=float)
            if len(counts) != d or len(data["origin"]) != d:
                raise SchemaError("d, origin and counts disagree")
            values = values.reshape(counts + (m.nu,))
            return cls(np.asarray(data["origin"], float), float(data["h"]), values, np.asarray(data["tail"], float), m)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise SchemaError(f"malformed GridMap: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GridMap":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise SchemaError("GridMap JSON must be an object")
        return cls.from_dict(data)


def constant_map(m: TargetManifold, point, origin, h, counts) -> GridMap:
    point = np.asarray(point, dtype=float)
    values = np.broadcast_to(point, tuple(counts) + point.shape).copy()
    return GridMap(np.asarray(origin, float), h, values, point, m)


@dataclass(frozen=True)
class EnergyValue:
    value: float
    quadrature: str = "midpoint"

    def __post_init__(self):
        if not (self.value >= 0):
            raise DomainError(f"energy must be nonnegative, got {self.value}")

    def __float__(self):
        return float(self.value)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)


def _quad_label(s: int) -> str:
    return "midpoint" if s == 1 else f"supersampled({s})"


def integral_dist_to_point(u: GridMap, b) -> EnergyValue:
    """Integral over R^d of dist(u(x), b); infinite unless b is the tail."""
    b = u.manifold.check(b, "b")
    if u.manifold.dist(u.tail, b) > u.manifold.on_manifold_tol:
        return EnergyValue(math.inf)
    return EnergyValue(math.fsum(u.cell_volume * u.manifold.dist(u.values, b).ravel()))


def integral_dist_between(u0: GridMap, u1: GridMap) -> float:
    """Integral of dist(u0(x), u1(x)) for maps on the same grid."""
    if not u0.same_geometry(u1):
        raise DomainError("maps must share the grid geometry")
    if u0.manifold.dist(u0.tail, u1.tail) > u0.manifold.on_manifold_tol:
        return math.inf
    return math.fsum(u0.cell_volume * u0.manifold.dist(u0.values, u1.values).ravel())


def pair_integral(u: GridMap, R: float, norm: str = "euclidean", s: int = 1) -> float:
    """Unnormalized double integral of dist(u(x), u(y)) over |x - y| <= R."""
    if not R > 0:
        raise DomainError("cutoff radius must be positive")
    if norm not in ("euclidean", "sup"):
        raise DomainError(f"unknown norm {norm!r}")
    m = u.manifold
    counts = u.counts
    offsets, weights = kernels.pair_kernel(u.h, u.d, R, norm, s, max_offset=[n - 1 for n in counts])
    dtail = u.tail_distances()
    covered = np.zeros(counts)
    partial = []
    for off, w in zip(offsets, weights):
        src, dst = kernels.slices_for_offset(counts, off)
        covered[src] += w
        # each unordered pair once: strictly positive offsets in lexicographic order
        nz = np.flatnonzero(off)
        if nz.size and off[nz[0]] > 0:
            dd = m.dist(u.values[src], u.values[dst])
            partial.append(2.0 * w * float(np.sum(dd)))
    total = kernels.lattice_total(u.h, u.d, R, norm, s)
    outside = np.maximum(total - covered, 0.0)
    partial.append(2.0 * float(np.sum(dtail * outside)))
    return math.fsum(partial)


def theta(u: GridMap, R: float, norm: str = "euclidean", s: int = 1) -> EnergyValue:
    """Normalized nonlocal energy: pair integral divided by the ball measure."""
    val = pair_integral(u, R, norm, s) / kernels.ball_volume(u.d, R, norm)
    return EnergyValue(val, _quad_label(s))


def translation_energy(u: GridMap, shift, s: int = 1) -> EnergyValue:
    """Integral of dist(u(x), u(x + shift)) by the midpoint rule on a dilated window."""
    shift = np.atleast_1d(np.asarray(shift, dtype=float))
    if shift.shape != (u.d,):
        raise DomainError(f"shift must have {u.d} components")
    if not np.any(shift):
        return EnergyValue(0.0, _quad_label(s))
    pad = np.ceil(np.abs(shift) / u.h).astype(int) + 1
    hs = u.h / s
    axes = []
    for i, n in enumerate(u.counts):
        k = np.arange(-pad[i] * s, (n + pad[i]) * s)
        axes.append(u.origin[i] + hs * (k + 0.5))
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    dd = u.manifold.dist(u.evaluate(pts), u.evaluate(pts + shift))
    return EnergyValue(float(np.sum(dd)) * hs**u.d, _quad_label(s))


def averaged_translation(u: GridMap, rho: float, s: int = 1) -> EnergyValue:
    """Integral over x of the mean over |h|_inf <= rho of dist(u(x), u(x + h)).

    By the change of variables y = x + h this is exactly the sup-norm
    normalized energy at radius ``rho``.
    """
    if not rho > 0:
        raise DomainError("rho must be positive")
    return theta(u, rho, "sup", s)


def ball_cell_measure(u: GridMap, radius: float, center=None, s: int = 4) -> np.ndarray:
    """Measure of each window cell inside the ball B(center, radius), by sampling."""
    center = np.zeros(u.d) if center is None else np.asarray(center, float)
    sub = (np.arange(s) + 0.5) / s - 0.5
    sub_pts = np.stack(np.meshgrid(*[sub] * u.d, indexing="ij"), axis=-1).reshape(-1, u.d) * u.h
    c = u.centers().reshape(-1, 1, u.d) - center
    sq = np.sum((c + sub_pts[None]) ** 2, axis=-1)
    frac = kernels._indicator(sq, radius * radius).mean(axis=1)
    return frac.reshape(u.counts) * u.cell_volume


@dataclass
class BbmReport:
    R: list
    eta: list
    y: list
    y_cell: list
    b_star: np.ndarray
    lhs: float
    rhs: list
    theta_n: list = field(default_factory=list)

    @property
    def rel_errors(self) -> list:
        denom = max(self.lhs, 1e-300)
        return [abs(self.lhs - r) / denom for r in self.rhs]

    def to_dict(self) -> dict:
        return {
            "R": [float(r) for r in self.R],
            "eta": [float(e) for e in self.eta],
            "y": [[float(c) for c in p] for p in self.y],
            "y_cell": self.y_cell,
            "b_star": [float(c) for c in self.b_star],
            "lhs": float(self.lhs),
            "rhs": [float(r) for r in self.rhs],
            "theta_n": [float(t) for t in self.theta_n],
            "rel_errors": [float(e) for e in self.rel_errors],
        }


def _tail_candidate(u: GridMap, radius: float):
    """A point of B(0, radius) outside the window, or None."""
    r = radius * (1.0 - 1e-9)
    for axis in range(u.d):
        for sign in (1.0, -1.0):
            p = np.zeros(u.d)
            p[axis] = sign * r
            if np.any(p < u.origin) or np.any(p >= u.upper):
                return p
    return None


def asymptotic_mean(u: GridMap, R_schedule, s: int = 2) -> BbmReport:
    """Constructive limit point b_* with the diagnostic sequences.

    For each R_n the candidate y_n ranges over window cells whose center lies
    in B((1 - eta_n) R_n) (plus the tail if that ball leaves the window) and
    minimizes the integral of dist(u(x), u(y_n)) over B(eta_n R_n).
    """
    R_schedule = [float(r) for r in R_schedule]
    if len(R_schedule) < 2:
        raise DomainError("need at least two schedule entries")
    if any(r <= 0 for r in R_schedule) or any(b <= a for a, b in zip(R_schedule, R_schedule[1:])):
        raise DomainError("schedule must be positive and strictly increasing")
    m = u.manifold
    flat_vals = u.values.reshape(-1, m.nu)
    centers = u.centers().reshape(-1, u.d)
    etas, ys, cells, thetas, rhs = [], [], [], [], []
    best_val = None
    for R in R_schedule:
        eta = 1.0 / max(2.0, math.sqrt(R))
        inner = eta * R
        outer = (1.0 - eta) * R
        meas = ball_cell_measure(u, inner, s=s).ravel()
        tail_meas = max(kernels.ball_volume(u.d, inner) - float(meas.sum()), 0.0)
        cand = np.flatnonzero(np.sum(centers**2, axis=1) <= outer * outer)
        tail_pt = _tail_candidate(u, outer)
        if cand.size == 0 and tail_pt is None:
            raise DomainError(f"no candidate point in B({outer})")
        support = np.flatnonzero(meas > 0)
        scores = []
        for start in range(0, cand.size, 512):
            blk = flat_vals[cand[start:start + 512]]
            dd = m.dist(flat_vals[support][None, :, :], blk[:, None, :])
            sc = dd @ meas[support] + tail_meas * m.dist(u.tail, blk)
            scores.append(sc)
        scores = np.concatenate(scores) if scores else np.zeros(0)
        tail_score = None
        if tail_pt is not None:
            tail_score = float(m.dist(flat_vals[support], u.tail) @ meas[support])
        if scores.size and (tail_score is None or scores.min() <= tail_score):
            j = int(np.argmin(scores))  # lowest row-major index on ties
            cell = int(cand[j])
            ys.append(centers[cell])
            cells.append(cell)
            best_val = flat_vals[cell]
        else:
            ys.append(tail_pt)
            cells.append(-1)
            best_val = u.tail
        etas.append(eta)
        th = theta(u, R).value
        thetas.append((th + (2 * eta) ** u.d * theta(u, 2 * eta * R).value) / (1 - eta) ** u.d)
        rhs.append(0.5 * th)
    lhs = integral_dist_to_point(u, best_val).value
    return BbmReport(R_schedule, etas, ys, cells, np.array(best_val), lhs, rhs, thetas)


def small_r_sweep(u: GridMap, r_schedule, s: int = 1) -> list:
    out = []
    for r in r_schedule:
        if r < 2 * u.h * (1 - 1e-12):
            raise ResolutionError(f"r={r} is below twice the cell size {u.h}")
        out.append((float(r), theta(u, r, "euclidean", s).value))
    return out


def window_double_integral(u: GridMap, side: float, center=None) -> float:
    """Double integral of dist(u(x), u(y)) over a box of the given side, both variables.

    The box must be aligned with the grid cells.
    """
    center = np.zeros(u.d) if center is None else np.asarray(center, float)
    lo = center - side / 2.0
    n = side / u.h
    if abs(n - round(n)) > 1e-9:
        raise ResolutionError("box side must be a multiple of the cell size")
    n = int(round(n))
    start = (lo - u.origin) / u.h
    if np.any(np.abs(start - np.round(start)) > 1e-9):
        raise ResolutionError("box must be aligned with grid cells")
    start = np.round(start).astype(int)
    axes = [u.origin[i] + u.h * (start[i] + np.arange(n) + 0.5) for i in range(u.d)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = u.evaluate(pts)
    counts = vals.shape[:-1]
    partial = []
    grids = np.meshgrid(*[np.arange(-(k - 1), k) for k in counts], indexing="ij")
    for off in np.stack([g.ravel() for g in grids], axis=-1):
        nz = np.flatnonzero(off)
        if nz.size and off[nz[0]] > 0:
            src, dst = kernels.slices_for_offset(counts, off)
            partial.append(2.0 * float(np.sum(u.manifold.dist(vals[src], vals[dst]))))
    return math.fsum(partial) * u.cell_volume**2
