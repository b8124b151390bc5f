"""Orbit enumeration, annulus bookkeeping, separated nets, collisions.

An :class:`OrbitStore` keeps one record per enumerated word: the packed
word, the orbit point (z, tau), its displacement d(o, w o), and enough data
to reconstruct the isometry (affine scale/translation columns for affine
semigroups, full matrices otherwise).  Affine semigroups get vectorised
level-by-level enumeration; everything else goes through a generic BFS.

Words are packed little-endian into uint64, ``ceil(log2(#gens))`` bits per
letter, so stores stay columnar up to millions of records.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .models import (
    GromolabError, InvalidPoint, ModelMismatch, Point, ModelSpace, Isometry,
    affine_to_isometry, apply_isometry, compose, dist_zt,
)

__all__ = [
    "BudgetExceeded", "Word", "OrbitRecord", "OrbitStore", "FractionAffine",
    "enumerate_orbit", "ball_count", "greedy_separated_net",
    "separation_cover_check", "quasi_geodesic_defect", "collision_groups",
    "write_gorb", "read_gorb", "write_csv",
]


class BudgetExceeded(GromolabError):
    """Enumeration outgrew its configured record cap."""


# ---------------------------------------------------------------------------
# words
# ---------------------------------------------------------------------------

def _bits_per_letter(n_gens: int) -> int:
    return max(1, int(math.ceil(math.log2(max(n_gens, 2)))))


@dataclass(frozen=True)
class Word:
    """A word over generator indices, packed into a uint64."""

    bits: int
    length: int
    bpl: int

    @classmethod
    def empty(cls, n_gens: int) -> "Word":
        return cls(0, 0, _bits_per_letter(n_gens))

    @classmethod
    def from_letters(cls, letters: Sequence[int], n_gens: int) -> "Word":
        bpl = _bits_per_letter(n_gens)
        if len(letters) * bpl > 64:
            raise BudgetExceeded(f"word of length {len(letters)} exceeds packing capacity")
        bits = 0
        for j, a in enumerate(letters):
            if a >= n_gens:
                raise GromolabError(f"letter {a} out of range for {n_gens} generators")
            bits |= int(a) << (bpl * j)
        return cls(bits, len(letters), bpl)

    def letters(self) -> Tuple[int, ...]:
        mask = (1 << self.bpl) - 1
        return tuple((self.bits >> (self.bpl * j)) & mask for j in range(self.length))

    def append(self, letter: int) -> "Word":
        if (self.length + 1) * self.bpl > 64:
            raise BudgetExceeded("word exceeds packing capacity")
        return Word(self.bits | (int(letter) << (self.bpl * self.length)),
                    self.length + 1, self.bpl)

    def __str__(self):
        return "".join(str(a) for a in self.letters()) or "e"


# ---------------------------------------------------------------------------
# exact affine payloads
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FractionAffine:
    """Exact x -> x*scale + t with rational scale and translation.

    This represents the *action* of an affine isometry x -> x/beta + t,
    i.e. scale = 1/beta.  Used as exact dedup payload when all generators
    are rational.
    """

    scale: Fraction
    t: Fraction

    def compose(self, other: "FractionAffine") -> "FractionAffine":
        # self o other: x -> (x*so + to)*ss + ts
        return FractionAffine(self.scale * other.scale, self.scale * other.t + self.t)

    def key(self):
        return (self.scale, self.t)


# ---------------------------------------------------------------------------
# the store
# ---------------------------------------------------------------------------

@dataclass
class OrbitRecord:
    """Friendly view of one record: word, point, displacement, isometry."""

    word: Word
    point: Point
    displacement: float
    isometry: Isometry


class OrbitStore:
    """Columnar collection of orbit records with annulus bookkeeping.

    ``annulus(n)`` returns the record indices with displacement in [n, n+1);
    ``completion_radius`` is the displacement up to which ball counts are
    unaffected by the enumeration cutoff.
    """

    def __init__(self, space: ModelSpace, gens: List[Isometry], base: Point,
                 words_bits: np.ndarray, words_len: np.ndarray,
                 z: np.ndarray, tau: np.ndarray, disp: np.ndarray,
                 dedup: str = "none",
                 aff_beta: Optional[np.ndarray] = None,
                 aff_t: Optional[np.ndarray] = None,
                 mats: Optional[np.ndarray] = None,
                 completion_radius: Optional[float] = None,
                 exact_tags: Optional[list] = None):
        self.space = space
        self.gens = gens
        self.base = base
        self.words_bits = words_bits
        self.words_len = words_len
        self.z = z
        self.tau = tau
        self.disp = disp
        self.dedup = dedup
        self.aff_beta = aff_beta
        self.aff_t = aff_t
        self.mats = mats
        self.exact_tags = exact_tags
        self._order = np.argsort(disp, kind="stable")
        self._sorted_disp = disp[self._order]
        if completion_radius is None:
            completion_radius = float(disp.max()) if len(disp) else 0.0
        self.completion_radius = completion_radius
        self.bpl = _bits_per_letter(len(gens))

    def __len__(self):
        return len(self.disp)

    @property
    def is_affine(self) -> bool:
        return self.aff_beta is not None

    def word(self, i: int) -> Word:
        return Word(int(self.words_bits[i]), int(self.words_len[i]), self.bpl)

    def point(self, i: int) -> Point:
        return Point(complex(self.z[i]) if self.space.kind == "H3" else float(self.z[i].real),
                     float(self.tau[i]))

    def isometry(self, i: int) -> Isometry:
        if self.is_affine:
            exact = self.exact_tags[i] if self.exact_tags is not None else None
            return affine_to_isometry(complex(self.aff_beta[i]), complex(self.aff_t[i]),
                                      model=self.space.kind, exact=exact)
        return Isometry.from_matrix(self.space.kind, self.mats[i])

    def record(self, i: int) -> OrbitRecord:
        return OrbitRecord(self.word(i), self.point(i), float(self.disp[i]), self.isometry(i))

    def annulus(self, n: int) -> np.ndarray:
        lo = np.searchsorted(self._sorted_disp, n, side="left")
        hi = np.searchsorted(self._sorted_disp, n + 1, side="left")
        return self._order[lo:hi]

    def annulus_counts(self, n_max: Optional[int] = None) -> np.ndarray:
        if n_max is None:
            n_max = int(math.floor(self.completion_radius))
        bins = np.floor(self.disp).astype(np.int64)
        bins = bins[(bins >= 0) & (bins <= n_max)]
        return np.bincount(bins, minlength=n_max + 1)

    def subset(self, idx: np.ndarray) -> "OrbitStore":
        return OrbitStore(
            self.space, self.gens, self.base,
            self.words_bits[idx], self.words_len[idx],
            self.z[idx], self.tau[idx], self.disp[idx], self.dedup,
            None if self.aff_beta is None else self.aff_beta[idx],
            None if self.aff_t is None else self.aff_t[idx],
            None if self.mats is None else self.mats[idx],
            self.completion_radius,
            None if self.exact_tags is None else [self.exact_tags[int(i)] for i in idx],
        )

    # -- proximity ----------------------------------------------------------

    def proximity_query(self, p: Point, eps: float) -> np.ndarray:
        """Indices of records within metric distance eps of p (exact check)."""
        # superset filter: |dz| <= C*tau-ish box, then exact distances
        coarse = 2.0 * np.sinh(eps / 2.0) * np.sqrt(self.tau * p.tau)
        cand = np.flatnonzero(
            (np.abs(self.z - p.z) <= coarse * 1.0000001)
            & (np.abs(np.log(self.tau) - math.log(p.tau)) <= eps * 1.0000001))
        if len(cand) == 0:
            return cand
        d = dist_zt(self.z[cand], self.tau[cand], p.z, p.tau)
        return cand[d <= eps]


# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------

def enumerate_orbit(gens: List[Isometry], base: Point,
                    max_word_length: Optional[int] = None,
                    max_displacement: Optional[float] = None,
                    dedup: str = "none",
                    float_tol: float = 1e-9,
                    max_records: int = 20_000_000,
                    space: Optional[ModelSpace] = None) -> OrbitStore:
    """Breadth-first orbit of ``base`` under the semigroup of ``gens``.

    Exactly one of the limits must be given (``max_displacement`` may be
    combined with a word-length cap).  ``dedup`` is one of "none", "float",
    "exact": "none" records one entry per word, the others one entry per
    distinct isometry.  Exceeding ``max_records`` raises
    :class:`BudgetExceeded` rather than truncating.
    """
    if not gens:
        raise GromolabError("need at least one generator")
    if max_word_length is None and max_displacement is None:
        raise GromolabError("a finite limit is required")
    model = gens[0].model
    if any(g.model != model for g in gens):
        raise ModelMismatch("generators on different models")
    if space is None:
        space = ModelSpace(model)
    if dedup not in ("none", "float", "exact"):
        raise GromolabError(f"unknown dedup mode {dedup!r}")

    bpl = _bits_per_letter(len(gens))
    cap_len = 64 // bpl
    if max_word_length is not None and max_word_length > cap_len:
        raise BudgetExceeded(f"max_word_length {max_word_length} exceeds packing capacity {cap_len}")

    affine = all(g.affine_tag is not None for g in gens)
    if dedup == "exact":
        if not affine or any(g.affine_tag.exact is None for g in gens):
            raise GromolabError("exact dedup requires generators with exact affine tags")
        return _enumerate_exact(gens, base, max_word_length, max_displacement,
                                max_records, space, cap_len)
    if affine:
        return _enumerate_affine(gens, base, max_word_length, max_displacement,
                                 dedup, float_tol, max_records, space, cap_len)
    return _enumerate_matrix(gens, base, max_word_length, max_displacement,
                             dedup, float_tol, max_records, space, cap_len)


def _min_letter_displacement(gens, base) -> float:
    return min(float(dist_zt(apply_isometry(g, base).z, apply_isometry(g, base).tau,
                             base.z, base.tau)) for g in gens)


def _completion(gens, base, max_word_length, max_displacement) -> float:
    if max_displacement is not None:
        return float(max_displacement)
    return (max_word_length + 1) * _min_letter_displacement(gens, base)


def _level_stop(min_disp_level: float, max_displacement: float) -> bool:
    # expanding a level whose closest record is already far beyond the target
    # radius cannot create records inside it for the semigroups we enumerate;
    # the margin absorbs non-monotonicity of displacement along words.
    return min_disp_level > max_displacement + 2.0


class _SortedKeySet:
    """Sorted multi-column int64 key set with vectorised membership."""

    def __init__(self, ncols: int):
        self.keys = np.empty((0, ncols), dtype=np.int64)

    def _locate(self, other: np.ndarray) -> np.ndarray:
        """Row indices of ``other`` present in the set."""
        if len(self.keys) == 0 or len(other) == 0:
            return np.zeros(len(other), dtype=bool)
        # lexicographic search on the packed byte view
        a = np.ascontiguousarray(self.keys).view([("", np.int64)] * self.keys.shape[1]).ravel()
        b = np.ascontiguousarray(other).view([("", np.int64)] * other.shape[1]).ravel()
        pos = np.searchsorted(a, b)
        pos = np.clip(pos, 0, len(a) - 1)
        return a[pos] == b

    def add_new(self, other: np.ndarray) -> np.ndarray:
        """Insert rows not yet present; returns the mask of inserted rows
        (first occurrence wins within ``other``)."""
        uniq, first = np.unique(other, axis=0, return_index=True)
        mask = np.zeros(len(other), dtype=bool)
        fresh = ~self._locate(uniq)
        mask[np.sort(first[fresh])] = True
        merged = np.concatenate([self.keys, uniq[fresh]])
        view = np.ascontiguousarray(merged).view([("", np.int64)] * merged.shape[1]).ravel()
        self.keys = merged[np.argsort(view, kind="stable")]
        return mask


def _quantize_column(x: np.ndarray, tol: float) -> np.ndarray:
    """Snap to the tol-grid where that grid is exactly representable; for
    huge magnitudes the float64 bit pattern itself is finer than tol."""
    big = np.abs(x) >= 2.0 ** 52 * tol
    q = np.where(big, x, np.round(x / tol) * tol)
    return (q + 0.0).view(np.int64)  # bit-exact key; +0.0 folds -0.0 into 0.0


def _float_keys(nb, nt, float_tol):
    return np.column_stack([
        _quantize_column(nb.real.copy(), float_tol),
        _quantize_column(nb.imag.copy(), float_tol),
        _quantize_column(nt.real.copy(), float_tol),
        _quantize_column(nt.imag.copy(), float_tol),
    ])


def _enumerate_affine(gens, base, max_word_length, max_displacement, dedup,
                      float_tol, max_records, space, cap_len):
    gb = np.array([g.affine_tag.beta for g in gens])
    gt = np.array([g.affine_tag.t for g in gens])
    k = len(gens)
    bpl = _bits_per_letter(k)

    betas = np.array([], dtype=complex)
    ts = np.array([], dtype=complex)
    bits = np.array([], dtype=np.uint64)
    lens = np.array([], dtype=np.uint16)

    lvl_beta = np.array([1.0 + 0j])
    lvl_t = np.array([0.0 + 0j])
    lvl_bits = np.array([0], dtype=np.uint64)
    seen = _SortedKeySet(4) if dedup == "float" else None
    length = 0
    total = 0
    while True:
        length += 1
        if max_word_length is not None and length > max_word_length:
            break
        if length > cap_len:
            raise BudgetExceeded("enumeration exceeded word packing capacity")
        nb = (lvl_beta[None, :] * gb[:, None]).ravel()
        nt = (lvl_t[None, :] + gt[:, None] / lvl_beta[None, :]).ravel()
        shift = np.uint64(bpl * (length - 1))
        letters = np.repeat(np.arange(k, dtype=np.uint64), len(lvl_bits))
        nbits = np.tile(lvl_bits, k) | (letters << shift)
        if dedup == "float":
            new_mask = seen.add_new(_float_keys(nb, nt, float_tol))
            nb, nt, nbits = nb[new_mask], nt[new_mask], nbits[new_mask]
        total += len(nb)
        if total > max_records:
            raise BudgetExceeded(f"orbit exceeded record cap {max_records}")
        betas = np.concatenate([betas, nb])
        ts = np.concatenate([ts, nt])
        bits = np.concatenate([bits, nbits])
        lens = np.concatenate([lens, np.full(len(nb), length, dtype=np.uint16)])
        lvl_beta, lvl_t, lvl_bits = nb, nt, nbits
        if len(lvl_beta) == 0:
            break
        if max_displacement is not None:
            zl = base.z / lvl_beta + lvl_t
            tl = base.tau / np.abs(lvl_beta)
            if _level_stop(float(dist_zt(zl, tl, base.z, base.tau).min()), max_displacement):
                break

    z = base.z / betas + ts
    tau = base.tau / np.abs(betas)
    disp = dist_zt(z, tau, base.z, base.tau)
    if space.kind == "H2":
        z = z.real + 0j
    keep = slice(None)
    if max_displacement is not None:
        keep = disp <= max_displacement
    completion = _completion(gens, base, max_word_length, max_displacement)
    if max_displacement is None and len(lvl_beta):
        # frontier bound: displacement of missing (longer) words is at least
        # the minimum over the first unexplored level; under dedup, words
        # that only repeat stored isometries are not missing
        fb = (lvl_beta[None, :] * gb[:, None]).ravel()
        ft = (lvl_t[None, :] + gt[:, None] / lvl_beta[None, :]).ravel()
        fz = base.z / fb + ft
        ftau = base.tau / np.abs(fb)
        fd = dist_zt(fz, ftau, base.z, base.tau)
        if seen is None:
            completion = min(completion, float(fd.min()))
        else:
            # ascending-displacement scan, stopping at the first genuinely
            # new frontier element
            order = np.argsort(fd, kind="stable")
            found = None
            for i0 in range(0, len(order), 1 << 18):
                sel = order[i0:i0 + (1 << 18)]
                fresh = ~seen._locate(_float_keys(fb[sel], ft[sel], float_tol))
                if np.any(fresh):
                    found = float(fd[sel[fresh]].min())
                    break
            if found is not None:
                completion = min(completion, found)
    store = OrbitStore(space, gens, base, bits[keep], lens[keep], z[keep],
                       tau[keep], disp[keep], dedup, betas[keep], ts[keep],
                       completion_radius=completion)
    return store


def _mat_apply(mats, z, tau):
    a, b = mats[:, 0, 0], mats[:, 0, 1]
    c, d = mats[:, 1, 0], mats[:, 1, 1]
    den = np.abs(c * z + d) ** 2 + np.abs(c) ** 2 * tau ** 2
    zz = ((a * z + b) * np.conj(c * z + d) + a * np.conj(c) * tau ** 2) / den
    return zz, tau / den


def _enumerate_matrix(gens, base, max_word_length, max_displacement, dedup,
                      float_tol, max_records, space, cap_len):
    k = len(gens)
    bpl = _bits_per_letter(k)
    gm = np.stack([g.mat for g in gens])

    mats = np.empty((0, 2, 2), dtype=complex)
    bits = np.array([], dtype=np.uint64)
    lens = np.array([], dtype=np.uint16)

    lvl = np.eye(2, dtype=complex)[None, :, :]
    lvl_bits = np.array([0], dtype=np.uint64)
    seen = _SortedKeySet(8) if dedup == "float" else None
    length = 0
    total = 0
    while True:
        length += 1
        if max_word_length is not None and length > max_word_length:
            break
        if length > cap_len:
            raise BudgetExceeded("enumeration exceeded word packing capacity")
        nm = np.einsum("wij,gjk->gwik", lvl, gm).reshape(-1, 2, 2)
        shift = np.uint64(bpl * (length - 1))
        letters = np.repeat(np.arange(k, dtype=np.uint64), len(lvl_bits))
        nbits = np.tile(lvl_bits, k) | (letters << shift)
        if dedup == "float":
            det = nm[:, 0, 0] * nm[:, 1, 1] - nm[:, 0, 1] * nm[:, 1, 0]
            cn = nm / np.sqrt(det)[:, None, None]
            flat = cn.reshape(-1, 4)
            lead = np.argmax(np.abs(flat) > 1e-12, axis=1)
            le = flat[np.arange(len(flat)), lead]
            sign = np.where((le.real < 0) | ((le.real == 0) & (le.imag < 0)), -1.0, 1.0)
            flat = flat * sign[:, None]
            keys = np.column_stack(
                [_quantize_column(flat[:, j].real.copy(), float_tol) for j in range(4)]
                + [_quantize_column(flat[:, j].imag.copy(), float_tol) for j in range(4)])
            new_mask = seen.add_new(keys)
            nm, nbits = nm[new_mask], nbits[new_mask]
        total += len(nm)
        if total > max_records:
            raise BudgetExceeded(f"orbit exceeded record cap {max_records}")
        mats = np.concatenate([mats, nm])
        bits = np.concatenate([bits, nbits])
        lens = np.concatenate([lens, np.full(len(nm), length, dtype=np.uint16)])
        lvl, lvl_bits = nm, nbits
        if len(lvl) == 0:
            break
        if max_displacement is not None:
            zl, tl = _mat_apply(lvl, base.z, base.tau)
            if _level_stop(float(dist_zt(zl, tl, base.z, base.tau).min()), max_displacement):
                break

    z, tau = _mat_apply(mats, base.z, base.tau)
    disp = dist_zt(z, tau, base.z, base.tau)
    if space.kind == "H2":
        z = z.real + 0j
    keep = slice(None)
    if max_displacement is not None:
        keep = disp <= max_displacement
    completion = _completion(gens, base, max_word_length, max_displacement)
    if max_displacement is None and len(lvl):
        fm = np.einsum("wij,gjk->gwik", lvl, gm).reshape(-1, 2, 2)
        fz, ftau = _mat_apply(fm, base.z, base.tau)
        completion = min(completion, float(dist_zt(fz, ftau, base.z, base.tau).min()))
    return OrbitStore(space, gens, base, bits[keep], lens[keep], z[keep],
                      tau[keep], disp[keep], dedup, mats=mats[keep],
                      completion_radius=completion)


def _enumerate_exact(gens, base, max_word_length, max_displacement,
                     max_records, space, cap_len):
    """Python BFS with exact dedup keys; for moderate scales."""
    k = len(gens)
    gtags = [g.affine_tag for g in gens]
    records = []  # (word, tag)
    frontier = [(Word.empty(k), None)]
    seen = set()
    length = 0
    while frontier:
        length += 1
        if max_word_length is not None and length > max_word_length:
            break
        if length > cap_len:
            raise BudgetExceeded("enumeration exceeded word packing capacity")
        nxt = []
        for w, tag in frontier:
            for gi in range(k):
                ntag = gtags[gi] if tag is None else tag.compose(gtags[gi])
                key = ntag.exact.key()
                if key in seen:
                    continue
                seen.add(key)
                nw = w.append(gi)
                nxt.append((nw, ntag))
                records.append((nw, ntag))
                if len(records) > max_records:
                    raise BudgetExceeded(f"orbit exceeded record cap {max_records}")
        frontier = nxt
        if max_displacement is not None and frontier:
            ds = []
            for _, tag in frontier:
                zt = base.z / tag.beta + tag.t
                tt = base.tau / abs(tag.beta)
                ds.append(float(dist_zt(zt, tt, base.z, base.tau)))
            if _level_stop(min(ds), max_displacement):
                break

    bits = np.array([w.bits for w, _ in records], dtype=np.uint64)
    lens = np.array([w.length for w, _ in records], dtype=np.uint16)
    betas = np.array([t.beta for _, t in records], dtype=complex)
    ts = np.array([t.t for _, t in records], dtype=complex)
    z = base.z / betas + ts if len(betas) else np.array([], dtype=complex)
    tau = base.tau / np.abs(betas) if len(betas) else np.array([], dtype=float)
    disp = dist_zt(z, tau, base.z, base.tau) if len(betas) else np.array([], dtype=float)
    tags = [t.exact for _, t in records]
    keep = np.arange(len(disp))
    if max_displacement is not None:
        keep = np.flatnonzero(disp <= max_displacement)
    return OrbitStore(space, gens, base, bits[keep], lens[keep],
                      (z.real + 0j if space.kind == "H2" else z)[keep],
                      tau[keep], disp[keep], "exact",
                      betas[keep], ts[keep],
                      completion_radius=_completion(gens, base, max_word_length, max_displacement),
                      exact_tags=[tags[int(i)] for i in keep])


# ---------------------------------------------------------------------------
# counting and nets
# ---------------------------------------------------------------------------

def ball_count(store: OrbitStore, R: float) -> int:
    """Number of records with displacement <= R."""
    return int(np.searchsorted(store._sorted_disp, R, side="right"))


def _pairwise_far(z, tau, zs, taus, r):
    """True where point (z,tau) is farther than r from all (zs, taus)."""
    if len(zs) == 0:
        return True
    d = dist_zt(zs, taus, z, tau)
    return bool(np.all(d > r))


def greedy_separated_net(store: OrbitStore, r: float) -> np.ndarray:
    """Greedy r-separated subset of the orbit points, in enumeration order.

    The result is r-separated (pairwise distance strictly greater than r)
    and r-covering of the store points.  Level-structured affine stores on
    the real slice use an exact vectorised scan; the generic path checks
    each candidate against the points kept so far.
    """
    if r <= 0:
        raise GromolabError("net radius must be positive")
    n = len(store)
    if n == 0:
        return np.array([], dtype=np.int64)
    taus = store.tau
    levels = np.unique(taus)
    real_slice = np.max(np.abs(store.z.imag)) == 0.0
    if real_slice and len(levels) <= 80:
        return _greedy_net_levels(store, r, levels)
    return _greedy_net_generic(store, r)


def _greedy_net_levels(store, r, levels) -> np.ndarray:
    """Exact greedy in (level, coordinate) order for layered real stores.

    At fixed heights h (candidate) and k (kept), d <= r is an x-window of
    half-width sqrt(2 h k (cosh r - 1) - (h - k)^2), so cross-level kills
    are searchsorted range queries against the sorted kept coordinates.
    """
    x = store.z.real
    kept_x: List[np.ndarray] = []
    kept_tau: List[float] = []
    out = []
    coshr1 = math.cosh(r) - 1.0
    for h in sorted(levels)[::-1]:  # deepest last; scan order is by level
        sel = np.flatnonzero(store.tau == h)
        sel = sel[np.argsort(x[sel], kind="stable")]
        xs = x[sel]
        alive = np.ones(len(sel), dtype=bool)
        for kx, kt in zip(kept_x, kept_tau):
            w2 = 2.0 * h * kt * coshr1 - (h - kt) ** 2
            if w2 <= 0.0:
                continue
            w = math.sqrt(w2)
            left = np.searchsorted(kx, xs - w, side="left")
            right = np.searchsorted(kx, xs + w, side="right")
            alive &= right <= left  # no kept point strictly inside the window
            # boundary note: window endpoints have d == r exactly, which is
            # allowed (separation requires d > r); the closed window errs on
            # the conservative side.
        xs_alive = xs[alive]
        sel_alive = sel[alive]
        gap = 2.0 * h * math.sinh(r / 2.0)
        picks = []
        i = 0
        while i < len(xs_alive):
            picks.append(i)
            i = int(np.searchsorted(xs_alive, xs_alive[i] + gap, side="right"))
        picks = np.array(picks, dtype=np.int64)
        if len(picks):
            out.append(sel_alive[picks])
            kept_x.append(xs_alive[picks])
            kept_tau.append(float(h))
    if not out:
        return np.array([], dtype=np.int64)
    return np.sort(np.concatenate(out))


def _greedy_net_generic(store, r) -> np.ndarray:
    z, tau = store.z, store.tau
    kept: List[int] = []
    kz = np.empty(0, dtype=complex)
    kt = np.empty(0, dtype=float)
    for i in range(len(store)):
        if _pairwise_far(z[i], tau[i], kz, kt, r):
            kept.append(i)
            kz = np.append(kz, z[i])
            kt = np.append(kt, tau[i])
    return np.array(kept, dtype=np.int64)


def separation_cover_check(S_points: Sequence[Point], Y_points: Sequence[Point],
                           eps: float) -> dict:
    """Exact separation / covering report with witnesses."""
    sz = np.array([p.z for p in S_points], dtype=complex)
    st = np.array([p.tau for p in S_points], dtype=float)
    yz = np.array([p.z for p in Y_points], dtype=complex)
    yt = np.array([p.tau for p in Y_points], dtype=float)
    report = {"is_separated": True, "is_cover": True,
              "worst_pair": None, "worst_gap": None}
    n = len(sz)
    best_sep = math.inf
    for i in range(n):
        if i + 1 < n:
            d = dist_zt(sz[i], st[i], sz[i + 1:], st[i + 1:])
            j = int(np.argmin(d))
            if d[j] < best_sep:
                best_sep = float(d[j])
                report["worst_pair"] = (i, i + 1 + j)
    if n >= 2:
        report["is_separated"] = best_sep > eps
        report["worst_gap"] = best_sep
    if len(yz):
        if n == 0:
            report["is_cover"] = False
        else:
            worst_cov = -math.inf
            worst_y = None
            chunk = max(1, 10_000_000 // max(n, 1))
            for i0 in range(0, len(yz), chunk):
                d = dist_zt(yz[i0:i0 + chunk, None], yt[i0:i0 + chunk, None],
                            sz[None, :], st[None, :])
                dn = d.min(axis=1)
                j = int(np.argmax(dn))
                if dn[j] > worst_cov:
                    worst_cov = float(dn[j])
                    worst_y = i0 + j
            report["is_cover"] = worst_cov <= eps
            report["cover_radius"] = worst_cov
            report["worst_uncovered"] = worst_y
    return report


def quasi_geodesic_defect(path: Sequence[Point]) -> float:
    """Max restricted triangle defect along the path.

    Over triples a <= b <= c with max{d(a,b), d(b,c)} <= d(a,c), returns the
    largest d(a,b) + d(b,c) - d(a,c); zero if no triple qualifies.
    """
    m = len(path)
    if m < 3:
        return 0.0
    z = np.array([p.z for p in path], dtype=complex)
    t = np.array([p.tau for p in path], dtype=float)
    D = dist_zt(z[:, None], t[:, None], z[None, :], t[None, :])
    best = 0.0
    for a in range(m - 2):
        for b in range(a + 1, m - 1):
            dab = D[a, b]
            dbc = D[b, b + 1:]
            dac = D[a, b + 1:]
            ok = np.maximum(dab, dbc) <= dac
            if np.any(ok):
                best = max(best, float(np.max(dab + dbc[ok] - dac[ok])))
    return best


def _exact_keys_from_words(store: OrbitStore):
    """Compose exact affine payloads along each word (prefix-cached)."""
    gtags = [g.affine_tag.exact for g in store.gens]
    cache: dict = {(): None}
    keys = []
    for i in range(len(store)):
        letters = store.word(i).letters()
        j = len(letters)
        while j > 0 and letters[:j] not in cache:
            j -= 1
        acc = cache[letters[:j]]
        for a in letters[j:]:
            acc = gtags[a] if acc is None else acc.compose(gtags[a])
            j += 1
            cache[letters[:j]] = acc
        keys.append(acc.key())
    return keys


def collision_groups(store: OrbitStore, float_tol: float = 1e-9) -> dict:
    """Partition words by isometry identity; singleton classes omitted.

    Uses exact affine keys when the generators carry them (recomputing the
    payloads along words if the store was built without dedup); otherwise
    groups on quantised canonical parameters, reporting near-collisions
    within 10x the tolerance as warnings.
    """
    groups: dict = {}
    warnings: list = []
    have_exact = (store.exact_tags is not None
                  or all(g.affine_tag is not None and g.affine_tag.exact is not None
                         for g in store.gens))
    if have_exact:
        if store.exact_tags is not None:
            keys = [t.key() for t in store.exact_tags]
        else:
            keys = _exact_keys_from_words(store)
        buckets: dict = {}
        for i, k in enumerate(keys):
            buckets.setdefault(k, []).append(i)
        groups = {k: v for k, v in buckets.items() if len(v) > 1}
    else:
        if store.is_affine:
            vals = np.column_stack([store.aff_beta.real, store.aff_beta.imag,
                                    store.aff_t.real, store.aff_t.imag])
        else:
            vals = store.mats.reshape(len(store), 4)
            vals = np.column_stack([vals.real, vals.imag])
        fine = np.round(vals / float_tol).astype(np.int64)
        coarse = np.round(vals / (10 * float_tol)).astype(np.int64)
        buckets = {}
        for i in range(len(store)):
            buckets.setdefault(tuple(fine[i]), []).append(i)
        groups = {k: v for k, v in buckets.items() if len(v) > 1}
        cb = {}
        for i in range(len(store)):
            cb.setdefault(tuple(coarse[i]), []).append(i)
        for k, v in cb.items():
            if len(v) > 1 and len({tuple(fine[i]) for i in v}) > 1:
                warnings.append(tuple(v))
    return {
        "groups": [[store.word(i) for i in v] for v in groups.values()],
        "group_indices": list(groups.values()),
        "near_collision_warnings": warnings,
    }


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

_MAGIC = b"GORB1"


def write_gorb(store: OrbitStore, path: str) -> None:
    """Columnar binary dump: magic, count, then per record the word bytes
    (u32 length prefix), 3 little-endian f64 coordinates and the f64
    displacement."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(store)))
        for i in range(len(store)):
            letters = bytes(store.word(i).letters())
            fh.write(struct.pack("<I", len(letters)))
            fh.write(letters)
            x, y, t = store.point(i).coords()
            fh.write(struct.pack("<ddd", x, y, t))
            fh.write(struct.pack("<d", float(store.disp[i])))


def read_gorb(path: str) -> List[Tuple[Tuple[int, ...], Tuple[float, float, float], float]]:
    """Read back a GORB1 file as (letters, coords, displacement) rows."""
    out = []
    with open(path, "rb") as fh:
        if fh.read(5) != _MAGIC:
            raise GromolabError("not a GORB1 file")
        (count,) = struct.unpack("<Q", fh.read(8))
        for _ in range(count):
            (wl,) = struct.unpack("<I", fh.read(4))
            letters = tuple(fh.read(wl))
            x, y, t = struct.unpack("<ddd", fh.read(24))
            (d,) = struct.unpack("<d", fh.read(8))
            out.append((letters, (x, y, t), d))
    return out


def write_csv(store: OrbitStore, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["word", "x", "y", "tau", "displacement"])
        for i in range(len(store)):
            x, y, t = store.point(i).coords()
            w.writerow([str(store.word(i)), x, y, t, float(store.disp[i])])
