"""The projectivized accelerated induction on the sorted parameter simplex.

Chart: a point is (a, b) with c = 1 - a - b implicit and a > b > c > 0.
One application of the map runs the subtractive algorithm while the
leading length keeps winning (counter n), then renormalizes and re-sorts:

    D  = n a - (n - 1)            (the unnormalized new total)
    swap ending:  (a, b) -> (b / D, ((n+1) a - n) / D)
    cyc  ending:  (a, b) -> (b / D, c / D)

Both branches have Jacobian determinant 1 / D^3.  Two arithmetic paths
coexist: plain float (Monte Carlo, rendering) and an exact Fraction
shadow used near cell boundaries and in differential tests against the
interval-level induction.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .induction import CYC, SWAP

BOUNDARY_TOL = 1e-14
POINTS_MAGIC = b"RGPTS001"

_CHAIN_BLOCK = 4096  # chaos-game chains per seed block; fixed so the
# sample stream is independent of worker count


class TieOnBoundary(Exception):
    """Float point within tolerance of a cell boundary and no exact shadow
    available to resolve it."""


@dataclass(frozen=True)
class ChartPoint:
    a: float
    b: float
    shadow: Optional[tuple[Fraction, Fraction]] = None

    @property
    def c(self) -> float:
        return 1.0 - self.a - self.b

    @staticmethod
    def from_fractions(a: Fraction, b: Fraction) -> "ChartPoint":
        p = ChartPoint(a=float(a), b=float(b), shadow=(a, b))
        p.validate()
        return p

    def exact(self) -> tuple[Fraction, Fraction, Fraction]:
        if self.shadow is None:
            raise ValueError("point has no exact shadow")
        a, b = self.shadow
        return a, b, 1 - a - b

    def validate(self) -> "ChartPoint":
        if self.shadow is not None:
            a, b = self.shadow
            c = 1 - a - b
        else:
            a, b, c = self.a, self.b, self.c
        if not (a > b > c > 0):
            raise ValueError(f"not a sorted interior chart point: {self}")
        return self


@dataclass(frozen=True)
class MarkovCell:
    """One branch of the accelerated map: counter n plus how the run ends
    (swap: the shrunk leader stays in second place; cyc: it drops to
    third)."""

    n: int
    kind: str

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("counter must be >= 1")
        if self.kind not in (SWAP, CYC):
            raise ValueError(f"cell kind must be swap or cyc, got {self.kind!r}")


@dataclass(frozen=True)
class HoleCell:
    """The run dies: after ``steps`` wins the leader is still longest but
    shorter than the other two combined.  steps == 0 iff a < 1/2."""

    steps: int


def _counter(a, b, s) -> int:
    """First j >= 1 with a - j s < b.  The float floor can be off by one
    near boundaries, so nudge with exact comparisons."""
    n = int((a - b) / s) + 1
    while a - n * s >= b:
        n += 1
    while n > 1 and a - (n - 1) * s < b:
        n -= 1
    return n


def cell_of(p: ChartPoint, tol: float = BOUNDARY_TOL):
    """Markov cell of a chart point, or HoleCell.

    Exact boundary hits (rational shadow) raise TieOnBoundary; in the
    float path, anything within ``tol`` of a boundary is rejected the same
    way since the classification there is not trustworthy.
    """
    p.validate()
    if p.shadow is not None:
        a, b, c = p.exact()
        s = 1 - a
        n = _counter(a, b, s)
        rem = a - n * s
        if a - (n - 1) * s == b or rem == 0 or rem == b or rem == c:
            raise TieOnBoundary(f"exact boundary point {p.shadow}")
        if rem < 0:
            return HoleCell(steps=n - 1)
        return MarkovCell(n=n, kind=SWAP if rem > c else CYC)
    a, b = p.a, p.b
    s = 1.0 - a
    c = s - b
    n = _counter(a, b, s)
    rem = a - n * s
    margins = (abs(rem), abs(rem - b), abs(rem - c), abs(a - (n - 1) * s - b))
    if min(margins) < tol:
        raise TieOnBoundary(
            f"({a}, {b}) within {tol} of a cell boundary and no exact shadow"
        )
    if rem < 0:
        return HoleCell(steps=n - 1)
    return MarkovCell(n=n, kind=SWAP if rem > c else CYC)


def apply_T(p: ChartPoint, tol: float = BOUNDARY_TOL):
    """One accelerated step: returns (image ChartPoint, MarkovCell), or
    HoleCell.  The image is re-sorted, so it is again a chart point."""
    cell = cell_of(p, tol=tol)
    if isinstance(cell, HoleCell):
        return cell
    n, kind = cell.n, cell.kind
    shadow = None
    if p.shadow is not None:
        a, b, c = p.exact()
        d = n * a - (n - 1)
        rem = (n + 1) * a - n
        shadow = (b / d, (rem if kind == SWAP else c) / d)
        image = ChartPoint(a=float(shadow[0]), b=float(shadow[1]), shadow=shadow)
    else:
        a, b, c = p.a, p.b, p.c
        d = n * a - (n - 1)
        rem = (n + 1) * a - n
        image = ChartPoint(a=b / d, b=(rem if kind == SWAP else c) / d)
    return image.validate(), cell


def jacobian(p: ChartPoint, tol: float = BOUNDARY_TOL) -> float:
    """Expansion factor (n a - (n-1))^-3 of the branch through p."""
    cell = cell_of(p, tol=tol)
    if isinstance(cell, HoleCell):
        raise ValueError("no branch through a hole point")
    a = p.a if p.shadow is None else float(p.shadow[0])
    d = cell.n * a - (cell.n - 1)
    return 1.0 / d**3


def cell_vertices(n: int) -> tuple[tuple[Fraction, Fraction], ...]:
    """Exact chart vertices of the closure of the swap-ending cell with
    counter n."""
    if n < 1:
        raise ValueError("counter must be >= 1")
    return (
        (Fraction(n + 1, n + 2), Fraction(1, n + 2)),
        (Fraction(n, n + 1), Fraction(1, n + 1)),
        (Fraction(2 * n + 1, 2 * n + 3), Fraction(1, 2 * n + 3)),
    )


def branch_matrix(cell: MarkovCell) -> tuple[tuple[int, int, int], ...]:
    """Rank-coordinate length matrix of the branch (old = M . new)."""
    if cell.kind == SWAP:
        return ((cell.n, 1, cell.n), (1, 0, 0), (0, 0, 1))
    return ((cell.n, cell.n, 1), (1, 0, 0), (0, 1, 0))


def inverse_branch(cell: MarkovCell, p: ChartPoint) -> ChartPoint:
    """The inverse of the branch labeled by ``cell``, defined on the whole
    chart simplex: projective action of the branch matrix."""
    p.validate()
    m = branch_matrix(cell)
    if p.shadow is not None:
        a, b, c = p.exact()
        v = [sum(Fraction(m[i][k]) * (a, b, c)[k] for k in range(3)) for i in range(3)]
        t = sum(v)
        shadow = (v[0] / t, v[1] / t)
        return ChartPoint(float(shadow[0]), float(shadow[1]), shadow=shadow).validate()
    vec = (p.a, p.b, p.c)
    v = [sum(m[i][k] * vec[k] for k in range(3)) for i in range(3)]
    t = v[0] + v[1] + v[2]
    return ChartPoint(v[0] / t, v[1] / t).validate()


# --- vectorized float dynamics (shared by the Monte Carlo modules) ----------

def accelerated_step_batch(a, b):
    """Vectorized accelerated step on chart arrays.

    Returns (a', b', n, kind, D, alive) where kind is 0 for swap and 1 for
    cyc; entries with alive == False hit a hole and carry junk outputs.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = 1.0 - a
    c = s - b
    with np.errstate(divide="ignore", invalid="ignore"):
        n = np.floor((a - b) / s).astype(np.int64) + 1
    n = np.maximum(n, 1)
    # same off-by-one guards as the scalar path
    r = a - n * s
    bump = r >= b
    n = n + bump
    r = a - n * s
    back = (n > 1) & (a - (n - 1) * s < b)
    n = n - back
    rem = a - n * s
    alive = rem > 0
    kind = np.where(rem > c, 0, 1)
    d = a - (n - 1) * s
    with np.errstate(divide="ignore", invalid="ignore"):
        a2 = b / d
        b2 = np.where(kind == 0, rem, c) / d
    return a2, b2, n, kind, d, alive


def sample_sorted_simplex(rng, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Lebesgue-uniform samples of the sorted chart simplex.

    Two sorted uniforms give a uniform point of the full simplex; sorting
    the three coordinates folds it onto the chart.
    """
    u = rng.random((count, 2))
    u.sort(axis=1)
    x = np.stack([u[:, 0], u[:, 1] - u[:, 0], 1.0 - u[:, 1]], axis=1)
    x.sort(axis=1)
    return x[:, 2], x[:, 1]


# --- the gasket as an attractor ---------------------------------------------

def _ifs_apply(lam: np.ndarray, choice: np.ndarray) -> np.ndarray:
    """One inverse-branch move of the three elementary gasket maps on the
    full simplex: the chosen coordinate jumps to 1 before renormalizing."""
    idx = np.arange(lam.shape[0])
    lam = lam.copy()
    lam[idx, choice] = 1.0
    total = lam.sum(axis=1)
    return lam / total[:, None]


def chaos_game(
    count: int,
    burn_in: int = 64,
    seed: int = 0,
    weights: Optional[Sequence[float]] = None,
    workers: int = 1,
) -> np.ndarray:
    """Random backward iteration of the three elementary gasket maps.

    Returns an (count, 2) array of (lambda1, lambda2) coordinates in the
    full (unsorted) simplex.  The stream is organized as fixed-size
    independent chains, each burned in from the barycenter and seeded as
    (seed, chain): output is bit-identical for any worker count.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    per_chain = max(1, -(-count // _CHAIN_BLOCK))
    chains = -(-count // per_chain)
    lam = np.full((chains, 3), 1.0 / 3.0)
    p = None if weights is None else np.asarray(weights, dtype=float)
    if p is not None:
        p = p / p.sum()
    draws = np.empty((chains, burn_in + per_chain), dtype=np.int64)
    for chain in range(chains):
        rng = np.random.default_rng((seed, chain))
        if p is None:
            draws[chain] = rng.integers(0, 3, size=burn_in + per_chain)
        else:
            draws[chain] = rng.choice(3, size=burn_in + per_chain, p=p)
    out = np.empty((chains, per_chain, 2))
    for step in range(burn_in + per_chain):
        lam = _ifs_apply(lam, draws[:, step])
        if step >= burn_in:
            out[:, step - burn_in, 0] = lam[:, 0]
            out[:, step - burn_in, 1] = lam[:, 1]
    return out.reshape(chains * per_chain, 2)[:count]


def chaos_game_exact(
    count: int, burn_in: int = 64, seed: int = 0
) -> list[tuple[Fraction, Fraction, Fraction]]:
    """Exact-rational chaos game (single chain, same per-chain seeding as
    chain 0 of the float path)."""
    rng = np.random.default_rng((seed, 0))
    draws = rng.integers(0, 3, size=burn_in + count)
    lam = [Fraction(1, 3)] * 3
    points = []
    for step, w in enumerate(draws):
        lam = list(lam)
        lam[int(w)] = Fraction(1)
        total = sum(lam)
        lam = [x / total for x in lam]
        if step >= burn_in:
            points.append(tuple(lam))
    return points


# --- point cloud serialization ----------------------------------------------

def write_points_csv(points: np.ndarray, fh, provenance: Optional[dict] = None):
    """CSV emitter: one "a,b" row per point, 17 significant digits."""
    if provenance:
        items = " ".join(f"{k}={v}" for k, v in sorted(provenance.items()))
        fh.write(f"# {items}\n")
    fh.write("a,b\n")
    for a, b in points:
        fh.write(f"{a:.17g},{b:.17g}\n")


def write_points_binary(points: np.ndarray, fh):
    """Binary emitter: 8-byte magic then little-endian float64 (a, b)
    pairs."""
    fh.write(POINTS_MAGIC)
    arr = np.ascontiguousarray(np.asarray(points, dtype="<f8"))
    fh.write(arr.tobytes())


def read_points_binary(fh) -> np.ndarray:
    magic = fh.read(8)
    if magic != POINTS_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    raw = fh.read()
    flat = np.frombuffer(raw, dtype="<f8")
    return flat.reshape(-1, 2)


# --- rasterization ------------------------------------------------------------

def rasterize(points: np.ndarray, width: int, height: int) -> np.ndarray:
    """Log-scaled density raster of simplex points in barycentric coords.

    Simplex vertices map to an equilateral triangle inscribed in the
    image; brightness is log(1 + hits) rescaled to 0..255.
    """
    lam1 = np.asarray(points)[:, 0]
    lam2 = np.asarray(points)[:, 1]
    lam3 = 1.0 - lam1 - lam2
    x = lam2 + 0.5 * lam3
    y = (np.sqrt(3.0) / 2.0) * lam3
    xs = np.clip((x * (width - 1)).astype(np.int64), 0, width - 1)
    ys = np.clip((y / (np.sqrt(3.0) / 2.0) * (height - 1)).astype(np.int64), 0, height - 1)
    counts = np.zeros((height, width), dtype=np.int64)
    np.add.at(counts, (height - 1 - ys, xs), 1)
    dens = np.log1p(counts)
    peak = dens.max()
    if peak > 0:
        dens = dens / peak
    return (dens * 255.0 + 0.5).astype(np.uint8)


def write_pgm(image: np.ndarray, fh, provenance: Optional[dict] = None):
    """Binary portable graymap (magic P5), one provenance comment line."""
    height, width = image.shape
    fh.write(b"P5\n")
    if provenance:
        items = " ".join(f"{k}={v}" for k, v in sorted(provenance.items()))
        fh.write(f"# {items}\n".encode())
    fh.write(f"{width} {height}\n255\n".encode())
    fh.write(image.astype(np.uint8).tobytes())
