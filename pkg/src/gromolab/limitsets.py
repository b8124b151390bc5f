"""Boundary limit sets: sampling, box dimension, shadows, measures.

Limit-set samples live on the boundary chart (the real line for H2, the
complex plane for H3); box counting runs on that chart, which is
bi-Lipschitz to the visual metric away from infinity, and the bundled
fixtures keep infinity out of their limit sets.  Patterson-type measures
are truncated orbit sums e^{-s d(o, gamma o)} / P_s with s strictly above
the exponent estimate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .models import (
    GromolabError, Point, ModelSpace, Isometry, apply_isometry, dist_zt,
    busemann, INFINITY,
)
from .orbits import OrbitStore, Word, _bits_per_letter
from .growth import growth_series, critical_exponent

__all__ = [
    "BoundarySample", "BoxCountCurve", "DiscreteMeasure", "Shadow",
    "sample_limit_set", "box_counting_dim", "shadow", "patterson_measure",
    "frostman_check", "self_similarity_defect", "render", "write_pgm",
]


@dataclass
class BoundarySample:
    """Boundary point cloud with provenance words."""

    points: np.ndarray           # complex chart coordinates
    words_bits: np.ndarray
    words_len: np.ndarray
    depth: int
    mode: str                    # "ifs" | "orbit"
    n_gens: int

    def __len__(self):
        return len(self.points)

    def word(self, i: int) -> Word:
        return Word(int(self.words_bits[i]), int(self.words_len[i]),
                    _bits_per_letter(self.n_gens))


@dataclass
class BoxCountCurve:
    pairs: List[Tuple[float, int]]   # (eps, N(eps))
    fitted_dim: float
    fit_window: Tuple[int, int]
    residual: float


@dataclass
class DiscreteMeasure:
    """Weighted orbit atoms: weights proportional to e^{-s displacement}."""

    store: OrbitStore
    weights: np.ndarray
    s: float
    truncation: int

    def boundary_projection(self) -> np.ndarray:
        return self.store.z


@dataclass(frozen=True)
class Shadow:
    """Boundary region {xi : (o|xi)_x <= r}: disk, complement or all."""

    kind: str                    # "disk" | "outside" | "all"
    center: complex = 0.0
    radius: float = 0.0

    def contains(self, xi) -> bool:
        if self.kind == "all":
            return True
        if xi is INFINITY:
            return self.kind == "outside"
        inside = abs(complex(xi) - self.center) <= self.radius
        return inside if self.kind == "disk" else not inside


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_limit_set(gens: Sequence[Isometry], depth: int, mode: str = "ifs",
                     store: Optional[OrbitStore] = None,
                     max_points: int = 20_000_000) -> BoundarySample:
    """Limit-set point cloud.

    "ifs": images of a seed fixed point under all words of exact length
    ``depth`` (requires affine generators with |beta| > 1, which contract
    the boundary chart).  "orbit": boundary projections of the deepest
    records of ``store``.
    """
    k = len(gens)
    if mode == "orbit":
        if store is None:
            raise GromolabError("orbit mode needs a store")
        deep = store.words_len == store.words_len.max()
        return BoundarySample(store.z[deep].copy(), store.words_bits[deep].copy(),
                              store.words_len[deep].copy(), int(store.words_len.max()),
                              "orbit", len(store.gens))
    if mode != "ifs":
        raise GromolabError(f"unknown sampling mode {mode!r}")
    tags = []
    for g in gens:
        if g.affine_tag is None or abs(g.affine_tag.beta) <= 1:
            raise GromolabError("ifs mode requires affine generators with |beta| > 1")
        tags.append(g.affine_tag)
    if k ** depth > max_points:
        raise GromolabError("ifs sample would exceed the point budget")
    bpl = _bits_per_letter(k)
    if depth * bpl > 64:
        raise GromolabError("depth exceeds word packing capacity")
    b0, t0 = tags[0].beta, tags[0].t
    seed = t0 / (1.0 - 1.0 / b0)
    pts = np.array([seed], dtype=complex)
    bits = np.array([0], dtype=np.uint64)
    for level in range(depth):
        new_pts = np.concatenate([pts / tg.beta + tg.t for tg in tags])
        letters = np.repeat(np.arange(k, dtype=np.uint64), len(pts))
        # leftmost letter is applied last; store letters positionally anyway
        new_bits = np.tile(bits, k) | (letters << np.uint64(bpl * level))
        pts, bits = new_pts, new_bits
    lens = np.full(len(pts), depth, dtype=np.uint16)
    return BoundarySample(pts, bits, lens, depth, "ifs", k)


# ---------------------------------------------------------------------------
# box counting
# ---------------------------------------------------------------------------

def _nn_scale(points: np.ndarray) -> float:
    if np.max(np.abs(points.imag)) == 0.0:
        xs = np.sort(points.real)
        gaps = np.diff(xs)
        gaps = gaps[gaps > 0]
        return float(gaps.min()) if len(gaps) else 0.0
    xy = np.column_stack([points.real, points.imag])
    tree = cKDTree(xy)
    d, _ = tree.query(xy, k=2)
    nз = d[:, 1]
    nz = nз[nз > 0]
    return float(nz.min()) if len(nz) else 0.0


def box_counting_dim(sample: BoundarySample, eps_range: Sequence[float],
                     interior_trim: int = 1) -> BoxCountCurve:
    """Occupied-box counts over a geometric grid and the log-log slope.

    Epsilons below 4x the nearest-neighbour scale are rejected: boxes that
    small would resolve individual sample points, not the underlying set.
    """
    pts = sample.points
    if len(pts) < 100:
        raise GromolabError("need at least 100 sample points")
    eps_range = np.sort(np.asarray(eps_range, dtype=float))[::-1]
    floor_scale = 4.0 * _nn_scale(pts)
    if eps_range.min() < floor_scale:
        raise GromolabError(
            f"eps {eps_range.min():g} is below the sampling resolution "
            f"(>= {floor_scale:g} required); deepen the sample or raise eps")
    one_d = np.max(np.abs(pts.imag)) == 0.0
    pairs = []
    for eps in eps_range:
        if one_d:
            n = len(np.unique(np.floor(pts.real / eps)))
        else:
            keys = np.floor(np.column_stack([pts.real, pts.imag]) / eps)
            n = len(np.unique(keys, axis=0))
        pairs.append((float(eps), int(n)))
    x = np.log(1.0 / eps_range)
    y = np.log([n for _, n in pairs])
    i0, i1 = interior_trim, len(pairs) - interior_trim
    if i1 - i0 < 2:
        i0, i1 = 0, len(pairs)
    slope, icpt = np.polyfit(x[i0:i1], y[i0:i1], 1)
    resid = float(np.sqrt(np.mean((y[i0:i1] - (slope * x[i0:i1] + icpt)) ** 2)))
    return BoxCountCurve(pairs, float(slope), (i0, i1 - 1), resid)


# ---------------------------------------------------------------------------
# shadows
# ---------------------------------------------------------------------------

def shadow(space: ModelSpace, x: Point, r: float) -> Shadow:
    """O B(x, r) = {xi : (o|xi)_x <= r} via the quadratic closed form."""
    if r < 0:
        raise GromolabError("shadow radius must be nonnegative")
    o = space.basepoint
    d = float(dist_zt(x.z, x.tau, o.z, o.tau))
    K = math.exp(2.0 * r - d) * x.tau / o.tau
    # (|xi - x.z|^2 + x.tau^2) <= K (|xi - o.z|^2 + o.tau^2)
    a = 1.0 - K
    if abs(a) < 1e-14:
        return Shadow("all") if K >= 1 else Shadow("disk", 0.0, 0.0)
    c = (x.z - K * o.z) / a
    rho2 = abs(c) ** 2 - (abs(x.z) ** 2 + x.tau ** 2 - K * (abs(o.z) ** 2 + o.tau ** 2)) / a
    if a > 0:
        if rho2 <= 0:
            raise GromolabError("empty shadow (radius too small for this point)")
        return Shadow("disk", c, math.sqrt(rho2))
    if rho2 <= 0:
        return Shadow("all")
    return Shadow("outside", c, math.sqrt(rho2))


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

def patterson_measure(store: OrbitStore, s: float, margin: float = 0.02) -> DiscreteMeasure:
    """Normalised e^{-s displacement} weights on the orbit atoms.

    Refuses s at or below the store's exponent estimate plus the margin
    (divergence-forcing at the critical exponent is out of scope here).
    """
    if len(store) == 0:
        raise GromolabError("empty store")
    if len(store) > 1:
        try:
            est = critical_exponent(growth_series(store)).value
        except GromolabError:
            est = 0.0
        if s <= est + margin:
            raise GromolabError(
                f"s={s:g} is not above the exponent estimate {est:.4f} + {margin:g}")
    w = np.exp(-s * store.disp)
    total = float(w.sum())
    return DiscreteMeasure(store, w / total, s, int(store.words_len.max()))


def visual_ball_mass(measure: DiscreteMeasure, xi: complex, r: float,
                     space: Optional[ModelSpace] = None) -> float:
    """mu of the visual ball {x : (x|xi)_o > -log r}."""
    sp = space if space is not None else measure.store.space
    o = sp.basepoint
    st = measure.store
    d_o = st.disp
    b_xi = busemann(complex(xi), st.z, st.tau)
    b_o = float(busemann(complex(xi), o.z, o.tau))
    prod = 0.5 * (d_o + b_o - b_xi)
    return float(measure.weights[prod > -math.log(r)].sum())


def frostman_check(measure: DiscreteMeasure, delta: float,
                   ball_samples: int = 32,
                   radii: Optional[Sequence[float]] = None,
                   seed: int = 0) -> dict:
    """Sampled Frostman ratios mu(ball)/r^delta over visual balls.

    Ball centers are boundary projections of deep atoms; radii default to
    two decades.  Reports the per-radius max ratio, the overall max with
    its witness ball, and a divergence flag (ratio blowing up as r -> 0).
    """
    st = measure.store
    if radii is None:
        radii = np.geomspace(1e-4, 1e-2, 9)
    radii = np.asarray(sorted(radii))
    deep = np.flatnonzero(st.disp >= np.median(st.disp))
    rng = np.random.default_rng(seed)
    centers = st.z[rng.choice(deep, size=min(ball_samples, len(deep)), replace=False)]
    o = st.space.basepoint
    b_o_all = None
    per_radius = np.zeros(len(radii))
    worst = (None, None, -math.inf)
    for xi in centers:
        b_xi = busemann(complex(xi), st.z, st.tau)
        b_o = float(busemann(complex(xi), o.z, o.tau))
        prod = 0.5 * (st.disp + b_o - b_xi)
        for j, r in enumerate(radii):
            mass = float(measure.weights[prod > -math.log(r)].sum())
            ratio = mass / r ** delta
            per_radius[j] = max(per_radius[j], ratio)
            if ratio > worst[2]:
                worst = (complex(xi), float(r), ratio)
    c_min, c_max = float(per_radius.min()), float(per_radius.max())
    divergent = bool(per_radius[0] > 10.0 * per_radius[-1])
    return {"C_max": c_max, "per_radius": list(zip(radii.tolist(), per_radius.tolist())),
            "worst_ball": {"center": worst[0], "radius": worst[1], "ratio": worst[2]},
            "spread_factor": c_max / max(c_min, 1e-300), "divergent": divergent}


# ---------------------------------------------------------------------------
# self-similarity and rendering
# ---------------------------------------------------------------------------

def self_similarity_defect(sample: BoundarySample, gens: Sequence[Isometry]) -> float:
    """Symmetric chart-Hausdorff distance between the sample and the union
    of its generator images."""
    pts = sample.points
    imgs = []
    for g in gens:
        if g.affine_tag is None:
            raise GromolabError("self-similarity defect needs affine generators")
        imgs.append(pts / g.affine_tag.beta + g.affine_tag.t)
    union = np.concatenate(imgs)
    a = np.column_stack([pts.real, pts.imag])
    b = np.column_stack([union.real, union.imag])
    ta, tb = cKDTree(a), cKDTree(b)
    d_ab = tb.query(a, k=1)[0].max()
    d_ba = ta.query(b, k=1)[0].max()
    return float(max(d_ab, d_ba))


def render(points: np.ndarray, resolution: Tuple[int, int],
           viewport: Tuple[float, float, float, float]) -> np.ndarray:
    """Density-binned grayscale grid (0 = empty, 255 = densest bin)."""
    w, h = resolution
    x0, x1, y0, y1 = viewport
    if not (x1 > x0 and y1 > y0):
        raise GromolabError("empty viewport")
    pts = np.asarray(points)
    xs, ys = pts.real, pts.imag
    m = (xs >= x0) & (xs < x1) & (ys >= y0) & (ys < y1)
    img = np.zeros((h, w), dtype=np.int64)
    if np.any(m):
        ix = ((xs[m] - x0) / (x1 - x0) * w).astype(np.int64)
        iy = ((ys[m] - y0) / (y1 - y0) * h).astype(np.int64)
        np.add.at(img, (h - 1 - iy, ix), 1)
    if img.max() > 0:
        scaled = np.floor(255.0 * np.log1p(img) / math.log1p(img.max())).astype(np.uint8)
    else:
        scaled = img.astype(np.uint8)
    return scaled


def write_pgm(img: np.ndarray, path: str, meta: Optional[dict] = None) -> None:
    """Binary PGM (P5) plus a JSON sidecar with the viewport metadata."""
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(img.astype(np.uint8).tobytes())
    if meta is not None:
        with open(path + ".json", "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
