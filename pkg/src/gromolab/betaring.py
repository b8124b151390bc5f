"""Exact arithmetic in Z[beta] and growth counting for digit semigroups.

``AlgebraicInteger`` wraps a monic irreducible integer polynomial and a
chosen root; ring elements are integer coefficient vectors in the power
basis reduced modulo the minimal polynomial, so equality is exact.  The
counting routines track the distinct values of digit polynomials
sum a_k beta^{n-1-k} level by level with integer matrices, which keeps the
whole computation in (vectorised) integer arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy

from .models import GromolabError

__all__ = [
    "AlgebraicInteger", "BetaRingElement", "PlaceSet", "RingAffine",
    "classify_beta", "ring_reduce", "ring_equal", "embed_places",
    "distinct_count", "growth_delta", "translation_bound", "overlap_count",
    "parse_beta", "clear_denominators",
]

UNIT_CIRCLE_TOL = 1e-10


# ---------------------------------------------------------------------------
# algebraic integers
# ---------------------------------------------------------------------------

def _polish_roots(coeffs: Sequence[int]) -> np.ndarray:
    """Roots of the monic integer polynomial, Newton-polished, sorted by
    descending modulus."""
    c = np.array(coeffs, dtype=float)  # c[0] + c[1] x + ... + x^d
    roots = np.roots(c[::-1])
    dc = np.polyder(c[::-1])
    for _ in range(4):
        f = np.polyval(c[::-1], roots)
        fp = np.polyval(dc, roots)
        step = np.where(np.abs(fp) > 1e-30, f / np.where(fp == 0, 1, fp), 0)
        roots = roots - step
    return roots[np.argsort(-np.abs(roots), kind="stable")]


@dataclass(frozen=True)
class AlgebraicInteger:
    """Monic irreducible integer polynomial with a chosen root."""

    min_poly: Tuple[int, ...]  # (c0, c1, ..., c_{d-1}, 1), constant term first
    chosen_root: complex

    def __post_init__(self):
        coeffs = self.min_poly
        if coeffs[-1] != 1:
            raise GromolabError("minimal polynomial must be monic")
        x = sympy.symbols("x")
        poly = sympy.Poly(list(coeffs[::-1]), x)
        if not poly.is_irreducible:
            raise GromolabError(f"{coeffs} is reducible over Q")
        val = abs(np.polyval(np.array(coeffs[::-1], dtype=complex), self.chosen_root))
        scale = max(1.0, abs(self.chosen_root) ** self.degree)
        if val / scale > 1e-10:
            raise GromolabError("chosen_root is not a root of min_poly")

    @classmethod
    def from_poly(cls, coeffs: Sequence[int], root_index: int = 0) -> "AlgebraicInteger":
        roots = _polish_roots(coeffs)
        if not (0 <= root_index < len(roots)):
            raise GromolabError("root index out of range")
        return cls(tuple(int(c) for c in coeffs), complex(roots[root_index]))

    @classmethod
    def from_int(cls, b: int) -> "AlgebraicInteger":
        return cls((-int(b), 1), complex(b))

    @property
    def degree(self) -> int:
        return len(self.min_poly) - 1

    def conjugates(self) -> np.ndarray:
        return _polish_roots(self.min_poly)

    def companion(self) -> np.ndarray:
        """Integer matrix of multiplication by beta in the power basis."""
        d = self.degree
        C = np.zeros((d, d), dtype=np.int64)
        for i in range(1, d):
            C[i, i - 1] = 1
        C[:, d - 1] = -np.array(self.min_poly[:-1], dtype=np.int64)
        return C

    def __repr__(self):
        return f"AlgebraicInteger({list(self.min_poly)}, root~{np.round(self.chosen_root, 6)})"


@dataclass(frozen=True)
class BetaRingElement:
    """Element of Z[beta] as reduced coefficients in the power basis."""

    beta: AlgebraicInteger
    coeffs: Tuple[int, ...]

    def __post_init__(self):
        if len(self.coeffs) != self.beta.degree:
            raise GromolabError("coefficient vector has wrong length")

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def __add__(self, other):
        return BetaRingElement(self.beta,
                               tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    def __mul__(self, other):
        raw = [0] * (2 * self.beta.degree - 1)
        for i, a in enumerate(self.coeffs):
            if a == 0:
                continue
            for j, b in enumerate(other.coeffs):
                raw[i + j] += a * b
        return ring_reduce(self.beta, raw)

    def value(self) -> complex:
        return complex(np.polyval(np.array(self.coeffs[::-1], dtype=complex),
                                  self.beta.chosen_root))


def ring_reduce(beta: AlgebraicInteger, coeffs: Sequence[int]) -> BetaRingElement:
    """Exact remainder of sum coeffs[k] x^k modulo the minimal polynomial."""
    d = beta.degree
    work = [int(c) for c in coeffs]
    if len(work) < d:
        work += [0] * (d - len(work))
    # synthetic division against the monic minimal polynomial
    for k in range(len(work) - 1, d - 1, -1):
        lead = work[k]
        if lead:
            work[k] = 0
            for j in range(d):
                work[k - d + j] -= lead * beta.min_poly[j]
    return BetaRingElement(beta, tuple(work[:d]))


def ring_equal(u: BetaRingElement, v: BetaRingElement) -> bool:
    return u.coeffs == v.coeffs


def ring_from_int(beta: AlgebraicInteger, n: int) -> BetaRingElement:
    return ring_reduce(beta, [n])


# ---------------------------------------------------------------------------
# places
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlaceSet:
    """Archimedean places of Q(beta): one embedding per real root, one per
    complex-conjugate pair, partitioned by |beta|_v against 1."""

    beta: AlgebraicInteger
    places: Tuple[complex, ...]
    is_complex: Tuple[bool, ...]
    part_minus: Tuple[int, ...]
    part_zero: Tuple[int, ...]
    part_plus: Tuple[int, ...]

    @classmethod
    def of(cls, beta: AlgebraicInteger) -> "PlaceSet":
        roots = beta.conjugates()
        places: List[complex] = []
        is_complex: List[bool] = []
        used = np.zeros(len(roots), dtype=bool)
        for i, r in enumerate(roots):
            if used[i]:
                continue
            if abs(r.imag) <= 1e-9:
                places.append(complex(r.real, 0.0))
                is_complex.append(False)
                used[i] = True
            else:
                rep = r if r.imag > 0 else np.conj(r)
                places.append(complex(rep))
                is_complex.append(True)
                used[i] = True
                j = int(np.argmin(np.abs(roots - np.conj(r)) + used * 1e9))
                used[j] = True
        pm, p0, pp = [], [], []
        for i, v in enumerate(places):
            m = abs(v)
            if m < 1 - UNIT_CIRCLE_TOL:
                pm.append(i)
            elif m <= 1 + UNIT_CIRCLE_TOL:
                p0.append(i)
            else:
                pp.append(i)
        ps = cls(beta, tuple(places), tuple(is_complex), tuple(pm), tuple(p0), tuple(pp))
        n_real = sum(1 for c in is_complex if not c)
        n_cpx = sum(1 for c in is_complex if c)
        if n_real + 2 * n_cpx != beta.degree:
            raise GromolabError("place bookkeeping does not match the degree")
        return ps


def classify_beta(beta: AlgebraicInteger) -> str:
    """"Pisot", "Salem" or "Neither" for |beta| > 1 (generalized sense:
    the complex conjugate of beta is exempted alongside beta itself)."""
    b = beta.chosen_root
    if abs(b) <= 1:
        raise GromolabError("classification requires |beta| > 1")
    others = [r for r in beta.conjugates()
              if abs(r - b) > 1e-8 and abs(r - np.conj(b)) > 1e-8]
    mods = np.array([abs(r) for r in others])
    if len(mods) == 0 or np.all(mods < 1 - UNIT_CIRCLE_TOL):
        return "Pisot"
    if np.all(mods <= 1 + UNIT_CIRCLE_TOL) and np.any(np.abs(mods - 1) <= UNIT_CIRCLE_TOL):
        return "Salem"
    return "Neither"


def embed_places(u: BetaRingElement, places: Optional[PlaceSet] = None) -> dict:
    """Values of u at every archimedean place plus the norm diagnostic.

    The product over all conjugate embeddings of |u| is the absolute field
    norm, an integer for u in Z[beta]; it is reported for sanity checking.
    """
    ps = places if places is not None else PlaceSet.of(u.beta)
    c = np.array(u.coeffs[::-1], dtype=complex)
    vals = [complex(np.polyval(c, v)) for v in ps.places]
    roots = u.beta.conjugates()
    norm = float(np.prod([abs(np.polyval(c, r)) for r in roots]))
    return {"values": vals, "abs_norm": norm}


# ---------------------------------------------------------------------------
# digit sets
# ---------------------------------------------------------------------------

def clear_denominators(beta: AlgebraicInteger, digits: Sequence) -> Tuple[List[BetaRingElement], int]:
    """Scale rational / ring-valued digits into Z[beta]; returns (ring digits,
    scale factor)."""
    fracs: List[Optional[Fraction]] = []
    ring: List[Optional[BetaRingElement]] = []
    denom = 1
    for t in digits:
        if isinstance(t, BetaRingElement):
            fracs.append(None)
            ring.append(t)
        else:
            f = Fraction(t).limit_denominator(10 ** 12) if isinstance(t, float) else Fraction(t)
            fracs.append(f)
            ring.append(None)
            denom = denom * f.denominator // math.gcd(denom, f.denominator)
    out = []
    for f, r in zip(fracs, ring):
        if r is not None:
            if denom != 1:
                r = ring_reduce(beta.beta if isinstance(beta, BetaRingElement) else beta,
                                [c * denom for c in r.coeffs])
            out.append(r)
        else:
            out.append(ring_from_int(beta, int(f * denom)))
    return out, denom


# ---------------------------------------------------------------------------
# counting
# ---------------------------------------------------------------------------

def _distinct_count_exact(beta: AlgebraicInteger, digits: Sequence, n: int,
                          budget: int) -> List[int]:
    """Counts of distinct sum a_k beta^{n-1-k} for lengths 1..n (exact)."""
    ring_digits, _ = clear_denominators(beta, digits)
    d = beta.degree
    C = beta.companion().T  # row-vector convention: v' = v @ C.T
    dig = np.array([e.coeffs for e in ring_digits], dtype=np.int64)
    level = np.unique(dig, axis=0)
    counts = [len(level)]
    for _ in range(1, n):
        if len(level) * len(dig) > budget:
            raise GromolabError("distinct_count exceeded its work budget; lower n or raise the cap")
        nxt = (level @ C)[:, None, :] + dig[None, :, :]
        level = np.unique(nxt.reshape(-1, d), axis=0)
        counts.append(len(level))
    return counts


def _distinct_count_numeric(beta: complex, digits: Sequence[complex], n: int,
                            budget: int, tol: float = 1e-9) -> List[int]:
    dig = np.unique(np.array(digits, dtype=complex))
    level = dig.copy()
    counts = [len(level)]
    for _ in range(1, n):
        if len(level) * len(dig) > budget:
            raise GromolabError("distinct_count exceeded its work budget; lower n or raise the cap")
        nxt = (beta * level[:, None] + dig[None, :]).ravel()
        q = np.round(nxt / tol)
        _, first = np.unique(q.view(np.float64).reshape(-1, 2) if np.iscomplexobj(q) else q,
                             axis=0 if np.iscomplexobj(q) else None, return_index=True)
        level = nxt[np.sort(first)]
        counts.append(len(level))
    return counts


def distinct_count(beta, digits: Sequence, n: int, n_cap: int = 16,
                   budget: int = 20_000_000) -> int:
    """Number of distinct digit polynomials of length n (exact when beta is
    an AlgebraicInteger, tolerance-quantised for numeric beta)."""
    if n > n_cap:
        raise GromolabError(f"n={n} exceeds the configured cap {n_cap}")
    return distinct_count_table(beta, digits, n, budget)[-1]


def distinct_count_table(beta, digits: Sequence, n: int,
                         budget: int = 20_000_000) -> List[int]:
    if isinstance(beta, AlgebraicInteger):
        return _distinct_count_exact(beta, digits, n, budget)
    return _distinct_count_numeric(complex(beta), [complex(t) for t in digits], n, budget)


def growth_delta(beta, digits: Sequence, n_max: int,
                 budget: int = 20_000_000) -> dict:
    """Per-length table of log(count_n) / (n log|beta|) and the final value.

    Equals log(#digits)/log|beta| exactly when the digit words are free.
    """
    b = beta.chosen_root if isinstance(beta, AlgebraicInteger) else complex(beta)
    if abs(b) <= 1:
        raise GromolabError("growth_delta requires |beta| > 1")
    counts = distinct_count_table(beta, digits, n_max, budget)
    logb = math.log(abs(b))
    per_n = [math.log(c) / (k * logb) for k, c in enumerate(counts, start=1)]
    # one-step growth ratios converge much faster than the 1/n-biased per_n
    ratio_per_n = [math.log(counts[k] / counts[k - 1]) / logb
                   for k in range(1, len(counts))]
    return {"counts": counts, "per_n": per_n, "estimate": per_n[-1],
            "ratio_per_n": ratio_per_n,
            "ratio_estimate": ratio_per_n[-1] if ratio_per_n else per_n[-1]}


def translation_bound(beta, digits: Sequence) -> float:
    """max_t |t| / (1 - 1/|beta|): bound on every word's translation part."""
    b = beta.chosen_root if isinstance(beta, AlgebraicInteger) else complex(beta)
    if abs(b) <= 1:
        raise GromolabError("translation bound requires |beta| > 1")
    tmax = max((abs(complex(t)) for t in digits), default=0.0)
    return tmax / (1.0 - 1.0 / abs(b))


# ---------------------------------------------------------------------------
# exact affine payload for the orbit engine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RingAffine:
    """Exact x -> x/beta^n + t with t*D*beta^{n-1} in Z[beta].

    ``poly`` holds the reduced coefficients of t * D * beta^{n-1}; D is the
    digit denominator (shared by all elements of one semigroup).
    """

    beta: AlgebraicInteger
    n: int
    poly: Tuple[int, ...]
    denom: int

    @classmethod
    def letter(cls, beta: AlgebraicInteger, digit, denom: int) -> "RingAffine":
        e, d2 = clear_denominators(beta, [Fraction(digit) * denom])
        if d2 != 1:
            raise GromolabError("digit denominator not cleared by denom")
        return cls(beta, 1, e[0].coeffs, denom)

    def compose(self, other: "RingAffine") -> "RingAffine":
        # t = t1 + t2 / beta^{n1}; scaled by D beta^{n1+n2-1}:
        # p = p1 * beta^{n2} + p2
        b = self.beta
        p1 = BetaRingElement(b, self.poly)
        shift = ring_reduce(b, [0] * other.n + [1])  # beta^{n2}
        p = p1 * shift + BetaRingElement(b, other.poly)
        return RingAffine(b, self.n + other.n, p.coeffs, self.denom)

    def key(self):
        return (self.n, self.poly)


# ---------------------------------------------------------------------------
# overlap counting
# ---------------------------------------------------------------------------

def overlap_count(beta, digits: Sequence, depth: int,
                  n_centers: int = 64, seed: int = 0) -> dict:
    """Multiplicity of the orbit of the basepoint in unit balls.

    Enumerates the digit semigroup to ``depth`` (exact dedup when beta is
    algebraic and the digits rational), picks orbit points as ball centers
    across the displacement range, and reports the maximal number of orbit
    points within distance 1 of a center together with a log-log fit of
    multiplicity against d(o, x).
    """
    from .models import affine_to_isometry, Point
    from .orbits import enumerate_orbit

    if isinstance(beta, AlgebraicInteger):
        b = beta.chosen_root
        denom = 1
        for t in digits:
            f = Fraction(t)
            denom = denom * f.denominator // math.gcd(denom, f.denominator)
        gens = [affine_to_isometry(b, complex(Fraction(t)),
                                   exact=RingAffine.letter(beta, t, denom))
                for t in digits]
        dedup = "exact"
    else:
        b = complex(beta)
        gens = [affine_to_isometry(b, complex(t)) for t in digits]
        dedup = "float"
    base = Point(0.0, 1.0)
    store = enumerate_orbit(gens, base, max_word_length=depth, dedup=dedup)

    # centers: orbit points spread over the reachable displacement window
    # (length window per the triangle-inequality bound; deepest centers are
    # excluded so their unit balls are fully enumerated)
    tb = translation_bound(beta, digits)
    cpad = 2.0 * math.asinh(tb / 2.0) + 1.0
    dmax = (depth - 1) * math.log(abs(b)) - cpad - 1.0
    ok = np.flatnonzero((store.disp > 1.0) & (store.disp <= max(dmax, 2.0)))
    if len(ok) == 0:
        ok = np.flatnonzero(store.disp > 0)
    rng = np.random.default_rng(seed)
    centers = ok[np.sort(rng.choice(len(ok), size=min(n_centers, len(ok)), replace=False))]
    mult = np.zeros(len(centers), dtype=np.int64)
    for j, i in enumerate(centers):
        mult[j] = len(store.proximity_query(store.point(int(i)), 1.0))
    dc = store.disp[centers]
    good = mult > 0
    slope = 0.0
    if np.count_nonzero(good) >= 3 and np.ptp(np.log(dc[good])) > 0.1:
        slope = float(np.polyfit(np.log(dc[good]), np.log(mult[good]), 1)[0])
    return {
        "max_multiplicity": int(mult.max()) if len(mult) else 0,
        "table": list(zip(dc.tolist(), mult.tolist())),
        "fit_exponent": slope,
        "store_size": len(store),
    }


# ---------------------------------------------------------------------------
# beta parsing
# ---------------------------------------------------------------------------

def parse_beta(spec: str):
    """Parse "poly:[c0,c1,...,1];root:k" into an AlgebraicInteger, or a
    numeric literal into a complex number."""
    s = spec.strip()
    if s.startswith("poly:"):
        body = s[len("poly:"):]
        if ";root:" in body:
            poly_s, root_s = body.split(";root:")
            k = int(root_s)
        else:
            poly_s, k = body, 0
        coeffs = [int(x) for x in poly_s.strip()[1:-1].split(",")]
        return AlgebraicInteger.from_poly(coeffs, k)
    return complex(s.replace("i", "j"))
