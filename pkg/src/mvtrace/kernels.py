"""Pair-measure kernels for piecewise constant maps on uniform grids.

For two cells ``c`` and ``c + m`` of side ``h`` the kernel weight is the
measure of ``{(x, y) in c x (c + m) : |x - y| <= R}``.  It depends only on the
integer offset ``m`` and is evaluated by the midpoint rule on ``s**d``
sub-cells per cell; the difference of two sub-cell midpoints takes the values
``(m + j/s) h`` with triangular weights ``(s - |j|)/s**2`` per axis.  Points
falling exactly on the cutoff sphere get weight one half.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

TIE_RTOL = 1e-12


def ball_volume(d: int, r: float, norm: str = "euclidean") -> float:
    if norm == "sup":
        return (2.0 * r) ** d
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * r**d


def _sub_offsets(s: int):
    j = np.arange(-(s - 1), s, dtype=float)
    return j / s, (s - np.abs(j)) / float(s * s)


def _indicator(sq, rsq):
    """1 inside, 1/2 on the boundary (relative tolerance), 0 outside."""
    tie = np.abs(sq - rsq) <= TIE_RTOL * max(rsq, 1e-300)
    return np.where(tie, 0.5, (sq < rsq).astype(float))


@lru_cache(maxsize=256)
def _kernel_cached(h, d, s, cutoff, norm, limits, extra_sq):
    delta, w = _sub_offsets(s)
    rho = cutoff / h
    axes_pos = []
    for lim in limits:
        m = np.arange(-lim, lim + 1, dtype=float)
        axes_pos.append(m[:, None] + delta[None, :])  # (M_i, S)
    shape = []
    for lim in limits:
        shape += [2 * lim + 1, len(delta)]
    total = None
    for i, pos in enumerate(axes_pos):
        expand = [1] * (2 * d)
        expand[2 * i] = pos.shape[0]
        expand[2 * i + 1] = pos.shape[1]
        if norm == "sup":
            term = _indicator(pos.reshape(expand) ** 2, rho * rho)
            total = term if total is None else total * term
        else:
            term = pos.reshape(expand) ** 2
            total = term if total is None else total + term
    if norm != "sup":
        total = _indicator(total + extra_sq / (h * h), rho * rho)
    else:
        total = np.broadcast_to(total, tuple(shape))
    for i in range(d):
        expand = [1] * (2 * d)
        expand[2 * i + 1] = len(w)
        total = total * w.reshape(expand)
    weights = total.sum(axis=tuple(range(1, 2 * d, 2)))
    grids = np.meshgrid(*[np.arange(-lim, lim + 1) for lim in limits], indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=-1)
    weights = weights.ravel() * h ** (2 * d)
    keep = weights > 0
    return offsets[keep], weights[keep]


def pair_kernel(h, d, cutoff, norm="euclidean", s=1, max_offset=None, extra_sq=0.0):
    """Offsets ``(M, d)`` and pair-measure weights ``(M,)`` for the cutoff.

    ``max_offset`` clips the offset box per axis (offsets larger than the
    window never pair two window cells).  ``extra_sq`` adds a fixed squared
    separation in an extra coordinate (Euclidean norm only).
    """
    reach = int(math.ceil(cutoff / h)) + 1
    limits = [reach] * d
    if max_offset is not None:
        limits = [min(reach, int(mo)) for mo in max_offset]
    return _kernel_cached(float(h), int(d), int(s), float(cutoff), norm, tuple(limits), float(extra_sq))


def _count_1d(rho, delta):
    """Sum over integers m of the tie-halved indicator of |m + delta| <= rho."""
    rho = np.asarray(rho, dtype=float)
    lo = -rho - delta
    hi = rho - delta
    eps = TIE_RTOL * np.maximum(np.abs(rho), 1.0) * 4
    n_hi = np.floor(hi + eps)
    n_lo = np.ceil(lo - eps)
    count = n_hi - n_lo + 1.0
    count -= 0.5 * (np.abs(hi - np.round(hi)) <= eps)
    count -= 0.5 * (np.abs(lo - np.round(lo)) <= eps)
    # degenerate radius: both ends tie on the same lattice point
    point = (hi - lo <= 2 * eps) & (np.abs(hi - np.round(hi)) <= eps)
    count = np.where(point, 0.5, count)
    return np.where(rho < 0, 0.0, np.maximum(count, 0.0))


def lattice_total(h, d, cutoff, norm="euclidean", s=1) -> float:
    """Sum of kernel weights over all offsets in Z^d, without clipping.

    This is the discrete counterpart of ``h^d |B_R|`` and makes the in/out
    tail pair measure exactly consistent with the in-window kernel.
    """
    delta, w = _sub_offsets(s)
    rho = cutoff / h
    if norm == "sup":
        one = float(np.sum(w * _count_1d(rho, delta)))
        return one**d * h ** (2 * d)

    def rec(rho_sq, dim):
        # rho_sq: array of remaining squared radii, returns weighted counts.
        if dim == 1:
            r = np.sqrt(np.maximum(rho_sq, 0.0))
            out = np.zeros_like(rho_sq)
            for dj, wj in zip(delta, w):
                out += wj * _count_1d(np.where(rho_sq >= 0, r, -1.0), dj)
            return out
        r_max = math.sqrt(max(float(np.max(rho_sq)), 0.0))
        ms = np.arange(-math.ceil(r_max) - 1, math.ceil(r_max) + 2, dtype=float)
        out = np.zeros_like(rho_sq)
        for dj, wj in zip(delta, w):
            pos_sq = (ms + dj) ** 2
            rem = rho_sq[..., None] - pos_sq
            # strict interior contributes; boundary points carry the tie rule
            # inside the lower-dimensional count through the radius.
            tie = np.abs(rem) <= TIE_RTOL * np.maximum(rho_sq[..., None], 1e-300)
            rem = np.where(tie, 0.0, rem)
            sub = np.where(rem < 0, 0.0, rec(rem, dim - 1))
            out += wj * sub.sum(axis=-1)
        return out

    total = rec(np.asarray([rho * rho]), d)[0]
    return float(total) * h ** (2 * d)


def slices_for_offset(counts, m):
    """Slices selecting cells ``c`` and ``c + m`` that both lie in the window."""
    src, dst = [], []
    for n, mi in zip(counts, m):
        mi = int(mi)
        if mi >= 0:
            src.append(slice(0, n - mi))
            dst.append(slice(mi, n))
        else:
            src.append(slice(-mi, n))
            dst.append(slice(0, n + mi))
    return tuple(src), tuple(dst)
