"""Embedded target manifolds with closed-form geodesics.

Points are plain numpy arrays of shape ``(..., nu)`` in the ambient space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

EUCLIDEAN = "euclidean"
CIRCLE = "circle"
SPHERE = "sphere"


def smoothstep(tau):
    """Cubic smoothstep on [0, 1], clamped outside. Max slope 3/2."""
    tau = np.clip(tau, 0.0, 1.0)
    return tau * tau * (3.0 - 2.0 * tau)


@dataclass(frozen=True)
class TargetManifold:
    kind: str
    nu: int
    on_manifold_tol: float = 1e-9

    def __post_init__(self):
        if self.kind not in (EUCLIDEAN, CIRCLE, SPHERE):
            raise DomainError(f"unknown manifold kind {self.kind!r}")
        if self.kind == CIRCLE and self.nu != 2:
            raise DomainError("circle lives in R^2")
        if self.kind == SPHERE and self.nu < 2:
            raise DomainError("sphere needs nu >= 2")
        if self.nu < 1:
            raise DomainError("nu must be positive")

    @classmethod
    def from_id(cls, ident: str) -> "TargetManifold":
        """Parse ``euclidean:nu``, ``circle`` or ``sphere:nu``."""
        name, _, arg = ident.strip().partition(":")
        name = name.lower()
        try:
            if name == CIRCLE and not arg:
                return cls(CIRCLE, 2)
            if name in (EUCLIDEAN, SPHERE) and arg:
                return cls(name, int(arg))
        except ValueError:
            pass
        raise DomainError(f"bad manifold id {ident!r}")

    @property
    def ident(self) -> str:
        return CIRCLE if self.kind == CIRCLE else f"{self.kind}:{self.nu}"

    @property
    def curved(self) -> bool:
        return self.kind != EUCLIDEAN

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.nu:
            return np.zeros(x.shape[:-1], dtype=bool)
        if not self.curved:
            return np.all(np.isfinite(x), axis=-1)
        return np.abs(np.linalg.norm(x, axis=-1) - 1.0) <= self.on_manifold_tol

    def check(self, x, what="point") -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.nu,):
            raise DomainError(f"{what} has trailing dimension {x.shape[-1:]}, expected ({self.nu},)")
        if not np.all(self.contains(x)):
            raise DomainError(f"{what} lies off {self.ident} (tol {self.on_manifold_tol})")
        return x

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.nu:
            raise DomainError(f"expected trailing dimension {self.nu}")
        if not self.curved:
            return x.copy()
        norm = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(norm == 0.0):
            raise DomainError("cannot project the zero vector onto a sphere")
        return x / norm

    def dist(self, a, b) -> np.ndarray:
        """Geodesic distance, broadcasting over leading axes.

        On spheres the arc length is computed as 2*asin(|a - b|/2), which is
        the same as arccos(a.b) for unit vectors but keeps full relative
        precision for nearby points.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        chord = np.linalg.norm(a - b, axis=-1)
        if not self.curved:
            return chord
        return 2.0 * np.arcsin(np.minimum(chord * 0.5, 1.0))

    def _check_pair(self, a, b):
        a = self.check(a, "a")
        b = self.check(b, "b")
        if self.curved and np.linalg.norm(a + b) < 1e-8:
            raise DomainError("non-unique geodesic between antipodal points; perturb one endpoint")
        return a, b

    def interpolate(self, a, b, s) -> np.ndarray:
        """Point at arc-length fraction ``s`` in [0, 1] of the minimal geodesic."""
        a, b = self._check_pair(a, b)
        s = np.asarray(s, dtype=float)[..., None]
        if not self.curved:
            return a + s * (b - a)
        omega = self.dist(a, b)
        if omega < 1e-12:
            return np.broadcast_to(a, s.shape[:-1] + a.shape).copy()
        sin_omega = np.sin(omega)
        out = (np.sin((1.0 - s) * omega) * a + np.sin(s * omega) * b) / sin_omega
        return out / np.linalg.norm(out, axis=-1, keepdims=True)

    def geodesic_profile(self, a, b, t) -> np.ndarray:
        """Path equal to ``a`` for t <= -1 and ``b`` for t >= 1, speed <= dist(a, b)."""
        return self.interpolate(a, b, smoothstep((np.asarray(t, dtype=float) + 1.0) * 0.5))

    def one_sided_profile(self, a, b, t) -> np.ndarray:
        """Path with value ``a`` at t = 0, ``b`` for t >= 1, speed <= 2 dist(a, b)."""
        return self.interpolate(a, b, smoothstep(t))


def euclidean(nu: int) -> TargetManifold:
    return TargetManifold(EUCLIDEAN, nu)


def circle() -> TargetManifold:
    return TargetManifold(CIRCLE, 2)


def sphere(nu: int) -> TargetManifold:
    return TargetManifold(SPHERE, nu)


def dist(m: TargetManifold, a, b):
    a = m.check(a, "a")
    b = m.check(b, "b")
    return m.dist(a, b)


def geodesic_profile(m: TargetManifold, a, b, t):
    return m.geodesic_profile(a, b, t)


def one_sided_profile(m: TargetManifold, a, b, t):
    if np.any(np.asarray(t) < 0):
        raise DomainError("one-sided profile is defined for t >= 0")
    return m.one_sided_profile(a, b, t)


def project(m: TargetManifold, x):
    return m.project(x)
