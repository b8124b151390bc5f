"""Hyperbolic model spaces (upper half-plane H2, upper half-space H3).

Points of both models are stored as a horizontal coordinate ``z`` (real for
H2, complex for H3) together with a height ``tau > 0``; the metric is

    cosh d = 1 + (|z - z'|^2 + (tau - tau')^2) / (2 tau tau')

in both cases.  Isometries are determinant-one 2x2 matrices (real for H2,
complex for H3) acting by Moebius transformations, extended to the upper
half-space by the Poincare extension.  Boundary points are real/complex
numbers or the point at infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

__all__ = [
    "GromolabError", "InvalidPoint", "InvalidIsometry", "ModelMismatch",
    "INFINITY", "BoundaryPoint", "Point", "ModelSpace", "Isometry",
    "AffineTag", "distance", "gromov_product", "apply_isometry", "compose",
    "inverse", "affine_to_isometry", "estimate_delta_hyp",
    "dist_zt", "busemann", "boundary_product",
]


class GromolabError(Exception):
    """Base error for this package."""


class InvalidPoint(GromolabError):
    """Point outside the open model (non-positive height, etc.)."""


class InvalidIsometry(GromolabError):
    """Singular or otherwise unusable matrix."""


class ModelMismatch(GromolabError):
    """Operands belong to different model spaces."""


class _Infinity:
    """The boundary point at infinity (singleton)."""

    def __repr__(self):
        return "INFINITY"

    def __reduce__(self):
        return (_get_infinity, ())


def _get_infinity():
    return INFINITY


INFINITY = _Infinity()

#: a boundary point: a real (H2) / complex (H3) number, or INFINITY
BoundaryPoint = Union[float, complex, _Infinity]


def is_infinity(x) -> bool:
    return x is INFINITY


# ---------------------------------------------------------------------------
# low-level vectorised kernels (shared by the orbit engine)
# ---------------------------------------------------------------------------

def dist_zt(z1, t1, z2, t2):
    """Distance between points given by horizontal/height coordinate arrays."""
    num = np.abs(np.asarray(z1) - np.asarray(z2)) ** 2 + (np.asarray(t1) - np.asarray(t2)) ** 2
    arg = 1.0 + num / (2.0 * np.asarray(t1) * np.asarray(t2))
    return np.arccosh(np.maximum(arg, 1.0))


def busemann(xi, z, tau):
    """Horospherical height log((|z - xi|^2 + tau^2) / tau) based at finite xi.

    For ``xi = INFINITY`` use ``-log tau`` instead (see :func:`gromov_product`).
    """
    return np.log((np.abs(np.asarray(z) - xi) ** 2 + np.asarray(tau) ** 2) / np.asarray(tau))


def boundary_product(xi, eta, zb, tb):
    """Gromov product of two finite boundary points at base (zb, tb)."""
    num = (np.abs(xi - zb) ** 2 + tb ** 2) * (np.abs(eta - zb) ** 2 + tb ** 2)
    den = tb ** 2 * np.abs(np.asarray(xi) - np.asarray(eta)) ** 2
    with np.errstate(divide="ignore"):
        return 0.5 * np.log(num / den)


# ---------------------------------------------------------------------------
# points and spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Point:
    """Interior point: horizontal coordinate ``z`` and height ``tau > 0``."""

    z: complex
    tau: float

    def __post_init__(self):
        if not (self.tau > 0) or not math.isfinite(self.tau):
            raise InvalidPoint(f"height must be positive and finite, got {self.tau}")

    @classmethod
    def h2(cls, w: complex) -> "Point":
        """H2 point from the classic complex coordinate x + iy, y > 0."""
        return cls(float(np.real(w)), float(np.imag(w)))

    def as_h2_complex(self) -> complex:
        return complex(float(np.real(self.z)), self.tau)

    def coords(self):
        return (float(np.real(self.z)), float(np.imag(self.z)), self.tau)


@dataclass(frozen=True)
class ModelSpace:
    """A model space: kind ("H2" or "H3"), basepoint, and ambient delta.

    ``delta_hyp`` is the constant of the four-point inequality
    (x|z) >= min{(x|y), (y|z)} - delta.  It defaults to a sampled estimate,
    see :func:`estimate_delta_hyp`; certificate routines consume it
    explicitly.
    """

    kind: str = "H2"
    basepoint: Point = field(default_factory=lambda: Point(0.0, 1.0))
    delta_hyp: float = 0.0

    def __post_init__(self):
        if self.kind not in ("H2", "H3"):
            raise ModelMismatch(f"unknown model kind {self.kind!r}")
        if self.delta_hyp < 0:
            raise GromolabError("delta_hyp must be nonnegative")

    def with_delta(self, delta: float) -> "ModelSpace":
        return ModelSpace(self.kind, self.basepoint, delta)


def distance(space: ModelSpace, p: Point, q: Point) -> float:
    """Hyperbolic distance; cosh d = 1 + (|dz|^2 + dtau^2) / (2 tau tau')."""
    return float(dist_zt(p.z, p.tau, q.z, q.tau))


# ---------------------------------------------------------------------------
# isometries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineTag:
    """Provenance of an isometry built from x -> x/beta + t.

    ``exact`` optionally carries an exact representation of (scale, t),
    used by the exact dedup backends in the orbit engine.
    """

    beta: complex
    t: complex
    exact: Optional[object] = None

    def compose(self, other: "AffineTag") -> "AffineTag":
        # (b1,t1) o (b2,t2) = (b1 b2, t1 + t2/b1)
        exact = None
        if self.exact is not None and other.exact is not None:
            exact = self.exact.compose(other.exact)
        return AffineTag(self.beta * other.beta, self.t + other.t / self.beta, exact)

    def inverse(self) -> "AffineTag":
        return AffineTag(1.0 / self.beta, -self.t * self.beta)


def _canonical(mat: np.ndarray) -> np.ndarray:
    """Scale to determinant one, then fix the projective sign.

    The sign is chosen so that the first entry (scanning a, b, c, d) whose
    modulus exceeds 1e-12 has positive real part (positive imaginary part on
    the real-axis tie).  This makes equal Moebius actions hash equal.
    """
    det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
    if abs(det) < 1e-15:
        raise InvalidIsometry("matrix is singular")
    mat = mat / np.sqrt(complex(det))
    for e in (mat[0, 0], mat[0, 1], mat[1, 0], mat[1, 1]):
        if abs(e) > 1e-12:
            if e.real < 0 or (e.real == 0 and e.imag < 0):
                mat = -mat
            break
    return mat


@dataclass(frozen=True)
class Isometry:
    """Determinant-one 2x2 matrix acting on the model by Moebius extension."""

    model: str
    mat: np.ndarray
    affine_tag: Optional[AffineTag] = None

    @classmethod
    def from_matrix(cls, model: str, entries, affine_tag=None) -> "Isometry":
        mat = np.asarray(entries, dtype=complex).reshape(2, 2)
        if model == "H2" and np.max(np.abs(mat.imag)) > 1e-12:
            raise InvalidIsometry("H2 isometries must have real entries")
        mat = _canonical(mat)
        mat.setflags(write=False)
        return cls(model, mat, affine_tag)

    @classmethod
    def identity(cls, model: str = "H2") -> "Isometry":
        return cls.from_matrix(model, np.eye(2), AffineTag(1.0, 0.0))

    @property
    def a(self):
        return complex(self.mat[0, 0])

    @property
    def b(self):
        return complex(self.mat[0, 1])

    @property
    def c(self):
        return complex(self.mat[1, 0])

    @property
    def d(self):
        return complex(self.mat[1, 1])

    def is_identity(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.mat - np.eye(2))) <= tol
                    or np.max(np.abs(self.mat + np.eye(2))) <= tol)

    def entry_key(self, tol: float = 1e-9):
        """Quantised entries, used for tolerance-based dedup."""
        v = self.mat.ravel()
        return tuple(np.round(np.concatenate([v.real, v.imag]) / tol).astype(np.int64).tolist())

    def __repr__(self):
        return f"Isometry({self.model}, {np.round(self.mat, 6).tolist()})"


def compose(a: Isometry, b: Isometry) -> Isometry:
    """Product a*b: apply(compose(a, b), p) == apply(a, apply(b, p))."""
    if a.model != b.model:
        raise ModelMismatch(f"{a.model} vs {b.model}")
    tag = None
    if a.affine_tag is not None and b.affine_tag is not None:
        tag = a.affine_tag.compose(b.affine_tag)
    return Isometry.from_matrix(a.model, a.mat @ b.mat, tag)


def inverse(a: Isometry) -> Isometry:
    tag = a.affine_tag.inverse() if a.affine_tag is not None else None
    m = np.array([[a.mat[1, 1], -a.mat[0, 1]], [-a.mat[1, 0], a.mat[0, 0]]])
    return Isometry.from_matrix(a.model, m, tag)


def apply_isometry(iso: Isometry, p):
    """Apply to an interior Point or a BoundaryPoint.

    Interior points use the Poincare extension
        z' = ((az+b) conj(cz+d) + a conj(c) tau^2) / N,   tau' = tau / N,
        N  = |cz+d|^2 + |c|^2 tau^2,
    boundary points the plain Moebius action.
    """
    a, b, c, d = iso.a, iso.b, iso.c, iso.d
    if isinstance(p, Point):
        den = abs(c * p.z + d) ** 2 + abs(c) ** 2 * p.tau ** 2
        if den <= 0:
            raise InvalidIsometry("degenerate action")
        z = ((a * p.z + b) * np.conj(c * p.z + d) + a * np.conj(c) * p.tau ** 2) / den
        if iso.model == "H2":
            z = z.real
        return Point(z, p.tau / den)
    if is_infinity(p):
        if abs(c) < 1e-15:
            return INFINITY
        return a / c if iso.model == "H3" else (a / c).real
    w = complex(p)
    den = c * w + d
    if abs(den) < 1e-15:
        return INFINITY
    out = (a * w + b) / den
    return out if iso.model == "H3" else out.real


def affine_to_isometry(beta: complex, t: complex, model: Optional[str] = None,
                       exact=None) -> Isometry:
    """Isometry of x -> x/beta + t via the matrix (1/sqrt(b), t sqrt(b); 0, sqrt(b)).

    Real (beta, t) land on H2 by default; complex data on H3.
    """
    beta = complex(beta)
    t = complex(t)
    if abs(beta) == 0:
        raise InvalidIsometry("beta must be nonzero")
    if model is None:
        model = "H2" if abs(beta.imag) < 1e-15 and abs(t.imag) < 1e-15 else "H3"
    s = np.sqrt(beta)
    mat = np.array([[1.0 / s, t * s], [0.0, s]])
    return Isometry.from_matrix(model, mat, AffineTag(beta, t, exact))


# ---------------------------------------------------------------------------
# Gromov products
# ---------------------------------------------------------------------------

def gromov_product(space: ModelSpace, x, y, base: Optional[Point] = None) -> float:
    """(x|y) at ``base``; arguments may be interior or boundary points.

    Interior pairs use (x|y) = (d(x,o) + d(y,o) - d(x,y)) / 2.  Pairs with
    boundary points use the Busemann closed forms of the model; coinciding
    boundary points give +inf.
    """
    o = base if base is not None else space.basepoint
    xb, yb = not isinstance(x, Point), not isinstance(y, Point)
    if not xb and not yb:
        return 0.5 * (float(dist_zt(x.z, x.tau, o.z, o.tau))
                      + float(dist_zt(y.z, y.tau, o.z, o.tau))
                      - float(dist_zt(x.z, x.tau, y.z, y.tau)))
    if xb and yb:
        if is_infinity(x) and is_infinity(y):
            return math.inf
        if is_infinity(x) or is_infinity(y):
            xi = y if is_infinity(x) else x
            # (xi|inf)_b = log((|xi - zb|^2 + tb^2) / tb^2) / 2
            return 0.5 * math.log((abs(complex(xi) - o.z) ** 2 + o.tau ** 2) / o.tau ** 2)
        if complex(x) == complex(y):
            return math.inf
        return float(boundary_product(complex(x), complex(y), o.z, o.tau))
    xi, q = (x, y) if xb else (y, x)
    dqb = float(dist_zt(q.z, q.tau, o.z, o.tau))
    if is_infinity(xi):
        bq, bo = -math.log(q.tau), -math.log(o.tau)
    else:
        bq = float(busemann(complex(xi), q.z, q.tau))
        bo = float(busemann(complex(xi), o.z, o.tau))
    return 0.5 * (dqb + bo - bq)


# ---------------------------------------------------------------------------
# delta estimation
# ---------------------------------------------------------------------------

def _sample_points(space: ModelSpace, n: int, radius: float, rng) -> tuple:
    """n roughly-uniform points in the ball of the given radius around o."""
    u = rng.random(n)
    r = np.arccosh(1.0 + u * (np.cosh(radius) - 1.0))
    w = np.tanh(r / 2)
    if space.kind == "H2":
        th = rng.random(n) * 2 * np.pi
        disc = w * np.exp(1j * th)
    else:
        v = rng.normal(size=(3, n))
        v /= np.linalg.norm(v, axis=0)
        disc = w * (v[0] + 1j * v[1])  # project: heights from the third coord
        w3 = w * v[2]
        # ball-model point (disc, w3) -> upper half-space via inversion
        den = disc.real ** 2 + disc.imag ** 2 + (w3 - 1) ** 2
        z = 2 * disc / den
        tau = (1 - w ** 2) / den
        o = space.basepoint
        return z * o.tau + o.z, tau * o.tau
    # H2: disk model -> upper half plane around the basepoint
    zuhp = 1j * (1 + disc) / (1 - disc)
    o = space.basepoint
    return (zuhp.real * o.tau + np.real(o.z)), zuhp.imag * o.tau


def estimate_delta_hyp(space: ModelSpace, n_samples: int, radius: float = 10.0,
                       seed: int = 0) -> float:
    """Max sampled four-point defect min{(x|y),(y|z)} - (x|z), clamped at 0."""
    if n_samples < 1:
        raise GromolabError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    o = space.basepoint
    zx, tx = _sample_points(space, n_samples, radius, rng)
    zy, ty = _sample_points(space, n_samples, radius, rng)
    zz, tz = _sample_points(space, n_samples, radius, rng)
    dx = dist_zt(zx, tx, o.z, o.tau)
    dy = dist_zt(zy, ty, o.z, o.tau)
    dz = dist_zt(zz, tz, o.z, o.tau)
    gxy = 0.5 * (dx + dy - dist_zt(zx, tx, zy, ty))
    gyz = 0.5 * (dy + dz - dist_zt(zy, ty, zz, tz))
    gxz = 0.5 * (dx + dz - dist_zt(zx, tx, zz, tz))
    defect = np.minimum(gxy, gyz) - gxz
    return max(0.0, float(np.max(defect)))


def default_space(kind: str = "H2", n_samples: int = 100_000, radius: float = 10.0,
                  seed: int = 7, safety: float = 0.02) -> ModelSpace:
    """Model space with delta set to a sampled estimate plus a safety pad."""
    sp = ModelSpace(kind)
    return sp.with_delta(estimate_delta_hyp(sp, n_samples, radius, seed) + safety)
