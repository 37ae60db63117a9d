"""Uniform grids over slabs R^d x (t_lo, t_hi) and their W^{1,1} energy."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SchemaError
from .manifold import TargetManifold


@dataclass(eq=False)
class SlabMap:
    """Cell-centered samples of a map on a (d+1)-dimensional box; t is the last axis.

    Outside the box laterally the map equals ``tail`` unless ``closed`` is set,
    in which case the box itself is the whole domain.  ``traces`` optionally
    holds prescribed boundary values on the bottom (t = t_lo) and top faces,
    arrays of shape ``counts[:-1] + (nu,)``; the step from a trace to the
    adjacent sample layer is part of the energy.
    """

    origin: np.ndarray
    h: float
    values: np.ndarray
    tail: np.ndarray
    manifold: TargetManifold
    closed: bool = False
    meta: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.tail = np.asarray(self.tail, dtype=float)
        if self.values.ndim != self.origin.size + 1:
            raise DomainError("values must have shape counts + (nu,)")
        for key, tr in list(self.traces.items()):
            if key not in ("bottom", "top"):
                raise DomainError(f"unknown trace side {key!r}")
            tr = np.broadcast_to(np.asarray(tr, dtype=float), self.values.shape[:-2] + self.values.shape[-1:])
            self.traces[key] = tr

    @property
    def dim(self) -> int:
        return self.origin.size

    @property
    def d(self) -> int:
        return self.origin.size - 1

    @property
    def counts(self) -> tuple:
        return self.values.shape[:-1]

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.h * np.asarray(self.counts, dtype=float)

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.h * (np.arange(self.counts[axis]) + 0.5)

    def index_range(self, axis: int, lo: float, hi: float) -> slice:
        """Samples whose centers lie in (lo, hi) along ``axis``."""
        a = int(math.ceil((lo - self.origin[axis]) / self.h - 0.5 - 1e-9))
        b = int(math.floor((hi - self.origin[axis]) / self.h - 0.5 + 1e-9))
        a = max(a, 0)
        b = min(b, self.counts[axis] - 1)
        return slice(a, max(b + 1, a))

    def to_dict(self) -> dict:
        return {
            "d": self.dim,
            "origin": [float(x) for x in self.origin],
            "h": float(self.h),
            "counts": [int(n) for n in self.counts],
            "manifold_id": self.manifold.ident,
            "tail": [float(x) for x in self.tail],
            "closed": bool(self.closed),
            "values": self.values.reshape(-1, self.manifold.nu).tolist(),
            "traces": {k: v.reshape(-1, self.manifold.nu).tolist() for k, v in sorted(self.traces.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SlabMap":
        try:
            m = TargetManifold.from_id(data["manifold_id"])
            counts = tuple(int(n) for n in data["counts"])
            values = np.asarray(data["values"], dtype=float).reshape(counts + (m.nu,))
            traces = {k: np.asarray(v, dtype=float).reshape(counts[:-1] + (m.nu,))
                      for k, v in data.get("traces", {}).items()}
            return cls(np.asarray(data["origin"], float), float(data["h"]), values,
                       np.asarray(data["tail"], float), m, bool(data.get("closed", False)), traces=traces)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise SchemaError(f"malformed SlabMap: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "SlabMap":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise SchemaError("SlabMap JSON must be an object")
        return cls.from_dict(data)


def gradient_density(U: SlabMap):
    """Per-cell |DU| * h^(d+1) by forward differences (Frobenius norm).

    Each partial derivative is the geodesic distance between neighbouring
    samples over h.  On curved targets this is the intrinsic difference
    quotient: it converges to the same |DU| as the chordal one, but an
    unresolved jump a|b counts with its true jump size dist(a, b).

    For open slabs the box is first padded laterally by one ring of tail
    cells so jumps into the tail are counted on both sides.  The last layer
    along t gets no t-difference.  Returns the density, the padded origin
    and the boundary rows ``{side: (density, t_center)}`` holding the steps
    from prescribed traces to the adjacent layer (half cells, t-part only).
    """
    m = U.manifold
    vals = U.values
    origin = U.origin.copy()
    if not U.closed:
        pad = [(1, 1)] * U.d + [(0, 0), (0, 0)]
        vals = np.pad(vals, pad, mode="constant")
        ring = np.ones(vals.shape[:-1], dtype=bool)
        ring[tuple([slice(1, -1)] * U.d)] = False
        vals[ring] = U.tail
        origin[: U.d] -= U.h
    sq = np.zeros(vals.shape[:-1])
    for axis in range(U.dim):
        lead = [slice(None)] * U.dim
        nxt = [slice(None)] * U.dim
        lead[axis] = slice(0, -1)
        nxt[axis] = slice(1, None)
        step = m.dist(vals[tuple(nxt)], vals[tuple(lead)])
        sq[tuple(lead)] += step * step
    cell = U.h**U.d
    rows = {}
    for side, idx, tc in (("bottom", 0, U.origin[-1] + U.h / 4), ("top", -1, U.upper[-1] - U.h / 4)):
        if side not in U.traces:
            continue
        step = m.dist(U.traces[side], U.values[..., idx, :])
        if not U.closed:
            step = np.pad(step, [(1, 1)] * U.d)
        rows[side] = (step * cell, tc)
    return np.sqrt(sq) * cell, origin, rows


def _select(centers, lo, hi, axis):
    a = -np.inf if lo is None or lo[axis] is None else lo[axis]
    b = np.inf if hi is None or hi[axis] is None else hi[axis]
    return (centers > a) & (centers < b)


def gradient_energy_box(U: SlabMap, lo=None, hi=None) -> float:
    """Sum of the gradient density over cells with centers in the box [lo, hi]."""
    dens, origin, rows = gradient_density(U)
    sel = [_select(origin[axis] + U.h * (np.arange(dens.shape[axis]) + 0.5), lo, hi, axis)
           for axis in range(U.dim)]
    mask = sel[0]
    for s in sel[1:]:
        mask = np.multiply.outer(mask, s)
    parts = dens[mask].ravel().tolist()
    for row, tc in rows.values():
        if _select(np.array([tc]), lo, hi, U.dim - 1)[0]:
            lat = sel[0]
            for s in sel[1:-1]:
                lat = np.multiply.outer(lat, s)
            parts += row[lat].ravel().tolist()
    return math.fsum(parts)
