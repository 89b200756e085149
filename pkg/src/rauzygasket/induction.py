"""Exact Rauzy induction on special systems of isometries.

A special system is three pairs of isometric subintervals of [0, 1]: the
left bases all start at 0, the right bases all end at 1, and the three
left-base lengths (a, b, c) are pairwise distinct, positive, and sum to 1.
One induction step transmits the two shorter right bases through the
longest pair and then cuts the support at the rightmost interior critical
point; on lengths this is the fully subtractive move
(a, b, c) -> (a - b - c, b, c) followed by renormalization.

Everything here is exact: lengths are `fractions.Fraction` by default, but
any exact ordered-field scalar with +, -, *, / and comparisons works (the
tests exercise a cubic irrational for the period-one fixed point).  Floats
are deliberately not used; hole detection is a sign test that float drift
would corrupt.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

Letter = int  # 1, 2 or 3
LETTERS: tuple[Letter, ...] = (1, 2, 3)

# Rank-coordinate length matrices of the three elementary step kinds.
# They express the pre-step sorted lengths in terms of the post-step
# sorted lengths: old = M . new.
STAY_MATRIX = ((1, 1, 1), (0, 1, 0), (0, 0, 1))
SWAP_MATRIX = ((1, 1, 1), (1, 0, 0), (0, 0, 1))
CYC_MATRIX = ((1, 1, 1), (1, 0, 0), (0, 1, 0))

# Rank transition labels (image of each pre-step rank in the post-step
# ranking).
STAY = "stay"
SWAP = "swap"
CYC = "cyc"
KINDS = (STAY, SWAP, CYC)
TRANSITIONS = {STAY: (1, 2, 3), SWAP: (2, 1, 3), CYC: (3, 1, 2)}
STEP_MATRICES = {STAY: STAY_MATRIX, SWAP: SWAP_MATRIX, CYC: CYC_MATRIX}


class InductionError(Exception):
    """Base class for all soi-core errors."""


class NotNormalized(InductionError):
    """Lengths do not sum to exactly 1."""


class NonPositive(InductionError):
    """A length is zero or negative."""


class TieEncountered(InductionError):
    """An exact tie between lengths; the generic theory excludes these."""


class PreconditionViolated(InductionError):
    """A transmission/reduction was applied to an ineligible system."""


class PointOutsideSupport(InductionError):
    """Orbit exploration was started outside the support interval."""


def accelerated_matrix(n: int, kind: str) -> tuple[tuple[int, int, int], ...]:
    """Rank-coordinate matrix of a generalized step: n wins of the leading
    pair, ending with a `swap` or `cyc` reordering.

    Equals STAY_MATRIX**(n-1) times the final elementary matrix.
    """
    if n < 1:
        raise ValueError("counter must be >= 1")
    if kind == SWAP:
        return ((n, 1, n), (1, 0, 0), (0, 0, 1))
    if kind == CYC:
        return ((n, n, 1), (1, 0, 0), (0, 1, 0))
    raise ValueError(f"accelerated steps end with swap or cyc, not {kind!r}")


def _mat_mul(a, b):
    return tuple(
        tuple(sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3))
        for i in range(3)
    )


def _mat_vec(m, v):
    return tuple(sum(m[i][k] * v[k] for k in range(3)) for i in range(3))


@dataclass(frozen=True)
class SpecialSystem:
    """Three exact lengths labeled by letters 1..3 plus the sorting order.

    ``lengths[i]`` is the length of letter ``i + 1``; ``order`` lists the
    letters from longest to shortest.  Letters keep their identity through
    induction steps; only ``order`` changes.
    """

    lengths: tuple
    order: tuple[Letter, Letter, Letter]

    def length(self, letter: Letter):
        return self.lengths[letter - 1]

    def sorted_lengths(self) -> tuple:
        """Lengths from largest to smallest."""
        return tuple(self.lengths[w - 1] for w in self.order)

    @property
    def winner(self) -> Letter:
        """The letter currently holding the longest pair."""
        return self.order[0]

    def to_json(self) -> dict:
        return {
            "lengths": [format_scalar(x) for x in self.lengths],
            "order": list(self.order),
        }

    @staticmethod
    def from_json(obj: dict) -> "SpecialSystem":
        lengths = [parse_fraction(s) for s in obj["lengths"]]
        return make_system(*lengths)


def format_scalar(x) -> str:
    """Serialize an exact scalar as "p/q" (denominator always written)."""
    f = Fraction(x) if not isinstance(x, Fraction) else x
    return f"{f.numerator}/{f.denominator}"


def parse_fraction(text: str) -> Fraction:
    """Parse "p/q" or a bare integer.  Decimal notation is rejected: the
    induction is exact and silently rounding inputs would corrupt hole
    detection."""
    text = text.strip()
    if "." in text or "e" in text.lower():
        raise ValueError(f"exact rational required (p/q), got {text!r}")
    if "/" in text:
        num, _, den = text.partition("/")
        return Fraction(int(num), int(den))
    return Fraction(int(text), 1)


def make_system(a, b, c) -> SpecialSystem:
    """Validate lengths and build a SpecialSystem labeled in input order.

    Raises NonPositive, NotNormalized, or TieEncountered (two equal
    lengths break the genericity every statement here relies on).
    """
    lengths = (a, b, c)
    for x in lengths:
        if not x > 0:
            raise NonPositive(f"length {x!r} is not positive")
    total = a + b + c
    if total != 1:
        raise NotNormalized(f"lengths sum to {total!r}, expected 1")
    if a == b or b == c or a == c:
        raise TieEncountered("two lengths are exactly equal")
    order = tuple(sorted(LETTERS, key=lambda w: lengths[w - 1], reverse=True))
    return SpecialSystem(lengths=lengths, order=order)


# --- one elementary step -------------------------------------------------

@dataclass(frozen=True)
class Step:
    """A completed induction step."""

    system: SpecialSystem
    winner: Letter
    matrix: tuple  # rank-coordinate length matrix, old = matrix . new
    kind: str  # stay / swap / cyc
    transition: tuple[int, int, int]  # pre-step rank -> post-step rank
    new_order: tuple[Letter, Letter, Letter]


@dataclass(frozen=True)
class Hole:
    """The longest pair is shorter than the other two combined; the
    induction stops and the system has points with finite orbits."""


@dataclass(frozen=True)
class Tie:
    """An exact tie was hit mid-step."""


def rauzy_step(s: SpecialSystem):
    """One elementary induction step.

    Returns Step, Hole, or Tie.  On Step, the winner's length drops to
    a - b - c, everything is renormalized to sum 1 again, and the
    rank-coordinate matrix recovers the old sorted lengths from the new
    unnormalized sorted lengths.
    """
    a, b, c = s.sorted_lengths()
    rest = b + c
    if a == rest:
        return Tie()
    if a < rest:
        return Hole()
    rem = a - rest
    if rem == b or rem == c:
        return Tie()
    if rem > b:
        kind = STAY
    elif rem > c:
        kind = SWAP
    else:
        kind = CYC

    winner = s.winner
    total = a  # rem + b + c
    new_lengths = tuple(
        (rem if w == winner else s.lengths[w - 1]) / total for w in LETTERS
    )
    new_system = make_system(*new_lengths)

    o = s.order
    expected_order = {
        STAY: o,
        SWAP: (o[1], o[0], o[2]),
        CYC: (o[1], o[2], o[0]),
    }[kind]
    assert new_system.order == expected_order
    return Step(
        system=new_system,
        winner=winner,
        matrix=STEP_MATRICES[kind],
        kind=kind,
        transition=TRANSITIONS[kind],
        new_order=new_system.order,
    )


# --- generalized (accelerated) step --------------------------------------

@dataclass(frozen=True)
class AcceleratedStep:
    """n consecutive wins of one letter, ended by a reordering."""

    n: int
    system: SpecialSystem
    winner: Letter
    matrix: tuple  # composite rank-coordinate matrix
    kind: str  # swap or cyc: how the block ended
    new_order: tuple[Letter, Letter, Letter]


@dataclass(frozen=True)
class HoleAfter:
    substeps: int  # elementary wins completed before the hole


@dataclass(frozen=True)
class TieAfter:
    substeps: int


def accelerated_step(s: SpecialSystem):
    """Iterate rauzy_step while the same letter keeps winning.

    The composite matrix is computed as the product of the elementary
    rank matrices and checked against the closed-form shape with the
    counter n; the two must agree exactly.
    """
    winner = s.winner
    current = s
    product = ((1, 0, 0), (0, 1, 0), (0, 0, 1))
    wins = 0
    while True:
        out = rauzy_step(current)
        if isinstance(out, Hole):
            return HoleAfter(substeps=wins)
        if isinstance(out, Tie):
            return TieAfter(substeps=wins)
        wins += 1
        product = _mat_mul(product, out.matrix)
        current = out.system
        if out.kind == STAY:
            continue
        closed = accelerated_matrix(wins, out.kind)
        assert product == closed, "composite matrix disagrees with product"
        return AcceleratedStep(
            n=wins,
            system=current,
            winner=winner,
            matrix=product,
            kind=out.kind,
            new_order=current.order,
        )


# --- thin-type probing ----------------------------------------------------

@dataclass(frozen=True)
class Survived:
    depth: int


@dataclass(frozen=True)
class HoleAt:
    iteration: int  # 1-based generalized iteration that died


@dataclass(frozen=True)
class TieAt:
    iteration: int


def classify_thin(s: SpecialSystem, max_iters: int):
    """Run up to max_iters generalized iterations.

    Survived{max_iters} certifies gasket membership only up to that
    depth: every exact rational system eventually holes or ties (the
    integer numerators strictly decrease), so unbounded survival needs
    irrational algebraic lengths.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    current = s
    for i in range(1, max_iters + 1):
        out = accelerated_step(current)
        if isinstance(out, HoleAfter):
            return HoleAt(iteration=i)
        if isinstance(out, TieAfter):
            return TieAt(iteration=i)
        current = out.system
    return Survived(depth=max_iters)


def iterate_path(s: SpecialSystem, max_iters: int):
    """Yield (system, AcceleratedStep) pairs until hole/tie or max_iters."""
    current = s
    for _ in range(max_iters):
        out = accelerated_step(current)
        yield current, out
        if not isinstance(out, AcceleratedStep):
            return
        current = out.system


# --- interval-level view ---------------------------------------------------

@dataclass(frozen=True)
class IntervalPair:
    """A partial isometry between two equal-length closed subintervals,
    left base [lo, hi] mapped onto right base by translation."""

    left: tuple
    right: tuple

    def __post_init__(self):
        (a, b), (c, d) = self.left, self.right
        if not (a <= b and c <= d):
            raise PreconditionViolated("interval endpoints out of order")
        if b - a != d - c:
            raise PreconditionViolated("paired bases must have equal length")

    @property
    def shift(self):
        return self.right[0] - self.left[0]


@dataclass(frozen=True)
class IntervalPairSystem:
    support: tuple
    pairs: tuple[IntervalPair, ...]

    def __post_init__(self):
        lo, hi = self.support
        for p in self.pairs:
            for base in (p.left, p.right):
                if base[0] < lo or base[1] > hi:
                    raise PreconditionViolated("base escapes the support")

    def bases(self) -> list[tuple]:
        out = []
        for p in self.pairs:
            out.append(p.left)
            out.append(p.right)
        return out


def special_interval_system(s: SpecialSystem) -> IntervalPairSystem:
    """Realize a SpecialSystem as explicit interval pairs on [0, 1]."""
    one = s.lengths[0] / s.lengths[0]
    pairs = tuple(
        IntervalPair(left=(0 * one, s.length(w)), right=(one - s.length(w), one))
        for w in LETTERS
    )
    return IntervalPairSystem(support=(0 * one, one), pairs=pairs)


def transmission_right(sys: IntervalPairSystem) -> IntervalPairSystem:
    """Re-map right bases contained in the covering pair's right base.

    The covering pair is the one whose right base ends at the support's
    right endpoint and contains the other two right bases; those two are
    translated through the covering isometry.
    """
    _, hi = sys.support
    enders = [i for i, p in enumerate(sys.pairs) if p.right[1] == hi]
    containers = [
        i
        for i in enders
        if all(
            sys.pairs[i].right[0] <= p.right[0] and p.right[1] <= sys.pairs[i].right[1]
            for j, p in enumerate(sys.pairs)
            if j != i
        )
    ]
    if len(containers) != 1:
        raise PreconditionViolated(
            "need exactly one right base ending at the support endpoint and "
            f"containing the other two, found {len(containers)}"
        )
    cover = sys.pairs[containers[0]]
    new_pairs = []
    for i, p in enumerate(sys.pairs):
        if i == containers[0]:
            new_pairs.append(p)
            continue
        if not (cover.right[0] <= p.right[0] and p.right[1] <= cover.right[1]):
            raise PreconditionViolated("right base not contained in the cover")
        shifted = (p.right[0] - cover.shift, p.right[1] - cover.shift)
        new_pairs.append(IntervalPair(left=p.left, right=shifted))
    return IntervalPairSystem(support=sys.support, pairs=tuple(new_pairs))


def reduction_right(sys: IntervalPairSystem):
    """Cut the support at the rightmost critical point interior to the
    covering right base.  Returns the reduced system, or Hole when the
    support's right endpoint is uncovered or no interior critical point
    exists."""
    _, hi = sys.support
    covering = [
        i
        for i, p in enumerate(sys.pairs)
        for base in (p.left, p.right)
        if base[0] <= hi <= base[1]
    ]
    if not covering:
        return Hole()
    if len(covering) > 1:
        raise PreconditionViolated("support endpoint covered more than once")
    idx = covering[0]
    pair = sys.pairs[idx]
    if pair.right[1] != hi:
        raise PreconditionViolated("covering base must be a right base ending at B")
    c1, d1 = pair.right
    critical = [
        x for b in sys.bases() for x in b if c1 < x < d1
    ]
    if not critical:
        return Hole()
    u = max(critical)
    new_pair = IntervalPair(
        left=(pair.left[0], pair.left[1] - d1 + u), right=(c1, u)
    )
    pairs = tuple(new_pair if i == idx else p for i, p in enumerate(sys.pairs))
    return IntervalPairSystem(support=(sys.support[0], u), pairs=pairs)


def uncovered_gaps(sys: IntervalPairSystem) -> list[tuple]:
    """Open gaps of the support not covered by any base (hole witnesses)."""
    lo, hi = sys.support
    bases = sorted(sys.bases())
    gaps = []
    cursor = lo
    for b0, b1 in bases:
        if b0 > cursor:
            gaps.append((cursor, b0))
        if b1 > cursor:
            cursor = b1
    if cursor < hi:
        gaps.append((cursor, hi))
    return gaps


@dataclass(frozen=True)
class OrbitGraph:
    """Breadth-first closure of a point under the partial isometries.

    Vertices map each reached point to its word-length depth; edges are
    (source, target, pair index, direction) with direction +1 for the
    forward isometry and -1 for its inverse.
    """

    vertices: dict
    edges: frozenset


def explore_orbit(sys: IntervalPairSystem, x, max_word_len: int) -> OrbitGraph:
    lo, hi = sys.support
    if not (lo <= x <= hi):
        raise PointOutsideSupport(f"{x!r} outside [{lo!r}, {hi!r}]")
    vertices = {x: 0}
    edges = set()
    frontier = [x]
    for depth in range(1, max_word_len + 1):
        nxt = []
        for p in frontier:
            for i, pair in enumerate(sys.pairs):
                moves = []
                if pair.left[0] <= p <= pair.left[1]:
                    moves.append((p + pair.shift, +1))
                if pair.right[0] <= p <= pair.right[1]:
                    moves.append((p - pair.shift, -1))
                for q, direction in moves:
                    edges.add((p, q, i + 1, direction))
                    if q not in vertices:
                        vertices[q] = depth
                        nxt.append(q)
        frontier = nxt
        if not frontier:
            break
    return OrbitGraph(vertices=vertices, edges=frozenset(edges))
