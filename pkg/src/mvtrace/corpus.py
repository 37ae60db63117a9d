"""Seeded fixture maps for tests, the CLI and the acceptance runs."""
from __future__ import annotations

import numpy as np

from .errors import DomainError, MvTraceError
from .gridmap import GridMap
from .manifold import TargetManifold

FAMILIES = ("constant", "single-bump", "multi-bump", "smooth-sampled", "two-valued-step")

# random values stay within this angle of the tail on curved targets, so no
# two of them are antipodal and every geodesic is unique
MAX_ANGLE = 0.45 * np.pi


class UnknownFamily(MvTraceError):
    """Usage error: the corpus family does not exist."""


def base_point(m: TargetManifold) -> np.ndarray:
    p = np.zeros(m.nu)
    if m.curved:
        p[-1] = 1.0
    return p


def random_point(m: TargetManifold, rng: np.random.Generator, near=None) -> np.ndarray:
    """A random point; on curved targets within MAX_ANGLE of ``near``."""
    near = base_point(m) if near is None else np.asarray(near, float)
    v = rng.standard_normal(m.nu)
    if not m.curved:
        return near + v
    v -= np.dot(v, near) * near
    v /= np.linalg.norm(v)
    angle = rng.uniform(0.2, 1.0) * MAX_ANGLE
    return np.cos(angle) * near + np.sin(angle) * v


def _bump_box(rng, lo, hi, n_min=1):
    """Random sub-interval [a, b) of [lo, hi) with at least n_min cells."""
    width = hi - lo
    size = int(rng.integers(n_min, max(n_min, width) + 1))
    start = int(rng.integers(lo, hi - size + 1))
    return start, start + size


def generate(family: str, seed: int, d: int = 1, n: int = 32, manifold: str = "sphere:3", L: float = 1.0,
             n_bumps: int = 3) -> GridMap:
    """One fixture on the window [-L, L)^d with n cells per axis.

    constant         every cell equals the tail
    single-bump      one random box holds one random value
    multi-bump       ``n_bumps`` boxes in separate slots along axis 0, so the
                     non-tail set has exactly ``n_bumps`` components
    smooth-sampled   closed-form field with compactly supported amplitude
                     and rotating direction, sampled at cell centers
    two-valued-step  value a on x_0 < 0, the tail b elsewhere
    """
    if family not in FAMILIES:
        raise UnknownFamily(f"unknown corpus family {family!r}; choose from {', '.join(FAMILIES)}")
    m = TargetManifold.from_id(manifold)
    rng = np.random.default_rng(seed)
    h = 2.0 * L / n
    origin = np.full(d, -L)
    tail = base_point(m)
    vals = np.broadcast_to(tail, (n,) * d + (m.nu,)).copy()
    if family == "single-bump":
        box = tuple(slice(*_bump_box(rng, n // 8, n - n // 8)) for _ in range(d))
        vals[box] = random_point(m, rng, tail)
    elif family == "multi-bump":
        if n_bumps < 1 or n < 3 * n_bumps:
            raise DomainError(f"cannot place {n_bumps} bumps on {n} cells")
        edges = np.linspace(0, n, n_bumps + 1).astype(int)
        for j in range(n_bumps):
            # one free cell on each side of a slot keeps the bumps apart
            box = [slice(*_bump_box(rng, edges[j] + 1, edges[j + 1] - 1))]
            box += [slice(*_bump_box(rng, 1, n - 1)) for _ in range(d - 1)]
            vals[tuple(box)] = random_point(m, rng, tail)
    elif family == "smooth-sampled":
        centers = origin + h * (np.indices((n,) * d).transpose(list(range(1, d + 1)) + [0]) + 0.5)
        c = rng.uniform(-0.3, 0.3, size=d) * L
        rho = rng.uniform(0.5, 0.7) * L
        amp = rng.uniform(0.5, 1.0) * MAX_ANGLE
        omega = rng.uniform(1.0, 3.0) * np.pi / L
        s = np.linalg.norm(centers - c, axis=-1) / rho
        inside = s < 1
        phi = np.zeros_like(s)
        phi[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        vals = _smooth_field(m, tail, amp * phi, omega * centers[..., 0])
    elif family == "two-valued-step":
        a = random_point(m, rng, tail)
        vals[: n // 2] = a
    return GridMap(origin, h, vals, tail, m)


def _smooth_field(m: TargetManifold, tail, theta, psi):
    """Point at angle ``theta`` from the tail in direction rotating with ``psi``."""
    theta = theta[..., None]
    if not m.curved:
        e = np.zeros(psi.shape + (m.nu,))
        e[..., 0] = np.cos(psi)
        if m.nu > 1:
            e[..., 1] = np.sin(psi)
        return tail + theta * e
    e = np.zeros(psi.shape + (m.nu,))
    if m.nu == 2:
        e[..., 0] = 1.0
    else:
        e[..., 0] = np.cos(psi)
        e[..., 1] = np.sin(psi)
    out = np.cos(theta) * tail + np.sin(theta) * e
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def generate_corpus(seed: int, families=FAMILIES, **kwargs) -> dict:
    """Fixtures for several families; child seeds are derived from ``seed``."""
    out = {}
    for fam in families:
        if fam not in FAMILIES:
            raise UnknownFamily(f"unknown corpus family {fam!r}")
        key = [seed, FAMILIES.index(fam)]
        child = int(np.random.SeedSequence(key).generate_state(1, dtype=np.uint64)[0] >> 1)
        out[fam] = generate(fam, child, **kwargs)
    return out
