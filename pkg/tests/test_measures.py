import math
import random
from fractions import Fraction as F

import numpy as np
import pytest

from rauzygasket.graph import (
    START,
    CocycleMatrix,
    RauzyPath,
    cocycle_of,
    path_from_blocks,
    path_from_kinds,
)
from rauzygasket.markov import (
    ChartPoint,
    MarkovCell,
    accelerated_step_batch,
    apply_T,
    inverse_branch,
    sample_sorted_simplex,
)
from rauzygasket.measures import (
    NAMED_LOOPS,
    NoReturn,
    OutsideCylinder,
    Q_ONES,
    ReturnRecord,
    block_child,
    cylinder_measure,
    dual_update,
    elementary_children,
    first_return,
    fit_tail,
    hole_mass_at,
    kerckhoff_exact_probability,
    loop_ccc,
    loop_cccss,
    mc_balance,
    mc_kerckhoff,
    path_probability,
    return_roofs,
    roof,
    roof_scale,
    roof_tail,
    running_mass,
    sample_section,
    section_triangle,
    validate_loop,
)


# --- exact polygon-area oracle (Sutherland-Hodgman over Fractions) -----------

CHART = [(F(1), F(0)), (F(1, 2), F(1, 2)), (F(1, 3), F(1, 3))]


def clip(poly, alpha, beta, gamma):
    """Keep the part of the polygon with alpha*x + beta*y <= gamma."""
    out = []
    k = len(poly)
    for i in range(k):
        p, q = poly[i], poly[(i + 1) % k]
        fp = alpha * p[0] + beta * p[1] - gamma
        fq = alpha * q[0] + beta * q[1] - gamma
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def area2(poly):
    if len(poly) < 3:
        return F(0)
    s = F(0)
    for i in range(len(poly)):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % len(poly)]
        s += x1 * y2 - x2 * y1
    return abs(s)


def chart_fraction(halfplanes):
    """Exact chart-normalized area of the region cut out by halfplanes."""
    poly = CHART
    for alpha, beta, gamma in halfplanes:
        poly = clip(poly, alpha, beta, gamma)
    return area2(poly) / area2(CHART)


def test_oracle_survivor_depth1_is_three_quarters():
    # {a >= 1/2} inside the sorted chart simplex
    assert chart_fraction([(-1, 0, F(-1, 2))]) == F(3, 4)


@pytest.mark.parametrize(
    "n,kind,expected",
    [
        # swap cell: (n+1)a - n <= b and c <= (n+1)a - n
        (1, "swap", F(1, 5)),
        (2, "swap", F(1, 14)),
        (3, "swap", F(1, 30)),
        # cyc cell: 0 <= (n+1)a - n <= c
        (1, "cyc", F(3, 20)),
        (2, "cyc", F(1, 21)),
        (3, "cyc", F(1, 48)),
    ],
)
def test_branch_masses_match_polygon_areas(n, kind, expected):
    if kind == "swap":
        halfplanes = [
            ((n + 1), -1, F(n)),          # (n+1)a - n <= b
            (-(n + 2), -1, F(-(n + 1))),  # c <= (n+1)a - n
        ]
    else:
        halfplanes = [
            (-(n + 1), 0, F(-n)),         # (n+1)a - n >= 0
            ((n + 2), 1, F(n + 1)),       # (n+1)a - n <= c
        ]
    assert chart_fraction(halfplanes) == expected
    mass, _, _ = block_child(Q_ONES, START, n, kind)
    assert mass == expected


@pytest.mark.parametrize("k,expected", [(1, F(1, 4)), (2, F(1, 15))])
def test_hole_masses_match_polygon_areas(k, expected):
    if k == 1:
        halfplanes = [(1, 0, F(1, 2))]  # a <= 1/2
    else:
        # reached win k-1 (b <= (k-1+1)a - (k-1)) hmm: b < ka-(k-1); died
        # before the k-th win: a <= k/(k+1)
        halfplanes = [(-k, 1, F(-(k - 1))), (1, 0, F(k, k + 1))]
    assert chart_fraction(halfplanes) == expected
    assert hole_mass_at(Q_ONES, START, k) == expected


def test_running_mass_closed_form():
    # still-running region after n wins: M1^n applied to the sorted cone
    for n in range(0, 8):
        assert running_mass(Q_ONES, START, n) == F(6, (n + 2) * (2 * n + 3))


def test_level_conservation_identity():
    q, order = Q_ONES, START
    total = F(0)
    for n in range(1, 30):
        total += block_child(q, order, n, "swap")[0]
        total += block_child(q, order, n, "cyc")[0]
        total += hole_mass_at(q, order, n)
    assert total + running_mass(q, order, 29) == 1


def test_elementary_children_sum_with_hole():
    children, hole = elementary_children(Q_ONES, START)
    assert children["stay"][0] == F(2, 5)
    assert children["swap"][0] == F(1, 5)
    assert children["cyc"][0] == F(3, 20)
    assert hole == F(1, 4)


# --- path probability ------------------------------------------------------------

def test_path_probability_empty():
    assert path_probability((1, 1, 1), RauzyPath(start=START)) == 1


def test_path_probability_single_step():
    p = path_from_kinds(START, ["swap"])
    assert path_probability((1, 1, 1), p) == F(1, 4)
    assert path_probability((1, 2, 3), p) == F(1, 2)


def test_path_probability_monte_carlo_oracle():
    # the single-step cone {l1 > l2 + l3} has simplex fraction 1/4
    rng = np.random.default_rng(42)
    u = rng.random((200000, 2))
    u.sort(axis=1)
    lam = np.stack([u[:, 0], u[:, 1] - u[:, 0], 1 - u[:, 1]], axis=1)
    freq = np.mean(lam[:, 0] > lam[:, 1] + lam[:, 2])
    assert abs(freq - 0.25) < 0.01


def test_path_probability_column_sum_identity():
    rng = random.Random(31)
    kinds = ("stay", "swap", "cyc")
    for _ in range(100):
        path = path_from_kinds(START, [rng.choice(kinds) for _ in range(6)])
        m = cocycle_of(path)
        expected = F(1)
        for c in m.column_sums():
            expected /= c
        assert path_probability((1, 1, 1), path) == expected


def test_path_probability_multiplicative():
    rng = random.Random(37)
    kinds = ("stay", "swap", "cyc")
    for _ in range(100):
        seq = [rng.choice(kinds) for _ in range(8)]
        cut = rng.randrange(9)
        q = tuple(F(rng.randrange(1, 9)) for _ in range(3))
        p = path_from_kinds(START, seq)
        p1 = path_from_kinds(START, seq[:cut])
        p2 = path_from_kinds(p1.end, seq[cut:])
        q_mid = q
        for st in p1.steps:
            q_mid = dual_update(q_mid, st.winner, st.n)
        assert path_probability(q, p) == path_probability(q, p1) * path_probability(q_mid, p2)


def _cylinder_triangle(path):
    """Exact chart triangle of a path cylinder: forward cocycle applied to
    the end-state cone rays (independent of the cone-measure formulas)."""
    m = cocycle_of(path)
    end = path.end
    verts = []
    for k in (1, 2, 3):
        ray = [F(0)] * 3
        for letter in end[:k]:
            ray[letter - 1] = F(1)
        v = m.apply(tuple(ray))
        t = v[0] + v[1] + v[2]
        verts.append((v[0] / t, v[1] / t))
    return verts


def test_cylinder_measure_equals_triangle_area_depth2():
    # every depth-2 elementary cylinder is an open triangle in the chart;
    # its shoelace area must reproduce the cone-measure value exactly
    from rauzygasket.graph import enumerate_paths

    total = F(0)
    for path in enumerate_paths(START, 2):
        area_fraction = area2(_cylinder_triangle(path)) / area2(CHART)
        assert area_fraction == cylinder_measure(path)
        total += area_fraction
    assert total == F(7, 12)  # the depth-2 elementary survivor mass


def test_survivor_mass_equals_total_triangle_area_depth3():
    from rauzygasket.dimension import survivor_mass
    from rauzygasket.graph import enumerate_paths

    total = sum(
        (area2(_cylinder_triangle(path)) for path in enumerate_paths(START, 3)),
        F(0),
    ) / area2(CHART)
    lo, hi = survivor_mass(3)
    assert lo == hi == total


def test_depth2_cylinder_measure_monte_carlo():
    # exact mass of the two-block cylinder (1, swap)(2, cyc) against a
    # direct frequency count of uniform chart samples
    path = path_from_blocks(START, [(1, "swap"), (2, "cyc")])
    exact = cylinder_measure(path)
    rng = np.random.default_rng(77)
    count = 400000
    a, b = sample_sorted_simplex(rng, count)
    a2, b2, n1, k1, _, alive1 = accelerated_step_batch(a, b)
    first = alive1 & (n1 == 1) & (k1 == 0)
    a3, b3, n2, k2, _, alive2 = accelerated_step_batch(a2[first], b2[first])
    hits = int(np.count_nonzero(alive2 & (n2 == 2) & (k2 == 1)))
    freq = hits / count
    sigma = math.sqrt(float(exact) * (1 - float(exact)) / count)
    assert abs(freq - float(exact)) < 5 * sigma


def test_cylinder_measure_examples():
    assert cylinder_measure(RauzyPath(start=START)) == 1
    assert cylinder_measure(path_from_blocks(START, [(1, "swap")])) == F(1, 5)
    assert cylinder_measure(path_from_blocks(START, [(1, "cyc")])) == F(3, 20)
    # strictly decreasing under extension
    p1 = path_from_blocks(START, [(1, "cyc")])
    p2 = path_from_blocks(START, [(1, "cyc"), (1, "cyc")])
    assert cylinder_measure(p2) < cylinder_measure(p1)


# --- Kerckhoff bound ----------------------------------------------------------------

def test_kerckhoff_exact_oracle_values():
    assert kerckhoff_exact_probability(2.0) == F(3, 9)
    assert kerckhoff_exact_probability(5.0) == F(3, 36)
    assert kerckhoff_exact_probability(10.0) == F(3, 121)
    assert kerckhoff_exact_probability(2.5) == F(3, 9)


@pytest.mark.parametrize("t", [2.0, 5.0, 10.0])
def test_kerckhoff_frequency_matches_exact(t):
    samples = 10**5
    freq = mc_kerckhoff(t, samples=samples, seed=3)
    exact = float(kerckhoff_exact_probability(t))
    sigma = math.sqrt(exact * (1 - exact) / samples)
    assert abs(freq - exact) < 5 * sigma
    assert freq <= 1.0 / t + 3 * math.sqrt((1 / t) * (1 - 1 / t) / samples)


def test_kerckhoff_vacuous_bound():
    freq = mc_kerckhoff(1.0 + 1e-9, samples=10**4, seed=5)
    assert freq <= 1.0


def test_kerckhoff_worker_independent():
    a = mc_kerckhoff(5.0, samples=3 * (1 << 16) + 5, seed=8, workers=1)
    b = mc_kerckhoff(5.0, samples=3 * (1 << 16) + 5, seed=8, workers=8)
    assert a == b


# --- balance ---------------------------------------------------------------------------

def test_balance_monotone_and_witness():
    grid = [1.5, 2.0, 5.0, 20.0, 100.0, 10000.0]
    rows = mc_balance(grid, samples=20000, seed=4)
    probs = [r["probability"] for r in rows]
    assert probs == sorted(probs)
    assert probs[0] < 0.05  # C barely above 1: nearly empty event
    assert any(r["probability"] > 1.0 / r["C"] for r in rows)


def test_balance_rejects_c_below_one():
    with pytest.raises(ValueError):
        mc_balance([0.5], samples=100, seed=0)


# --- roof function ------------------------------------------------------------------------

def test_roof_worked_example():
    p = ChartPoint.from_fractions(F(7, 10), F(9, 50))
    assert roof_scale(p, [(2, "cyc")]) == F(2, 5)
    assert roof(p, [(2, "cyc")]) == pytest.approx(-math.log(0.4), rel=1e-15)


def test_roof_empty_path_is_zero():
    p = ChartPoint.from_fractions(F(7, 10), F(9, 50))
    assert roof(p, []) == 0.0


def test_roof_outside_cylinder():
    p = ChartPoint.from_fractions(F(7, 10), F(9, 50))
    with pytest.raises(OutsideCylinder):
        roof(p, [(3, "cyc")])
    with pytest.raises(OutsideCylinder):
        roof(p, [(2, "swap")])


def test_roof_scale_matches_matrix_solve():
    # independent route: l1 norm of the de-renormalized lengths obtained
    # by exact unimodular solve of the block matrix
    rng = random.Random(41)
    for _ in range(200):
        denom = 10**6
        cuts = sorted(rng.randrange(1, denom) for _ in range(2))
        a, b, c = sorted(
            (F(cuts[0], denom), F(cuts[1] - cuts[0], denom), F(denom - cuts[1], denom)),
            reverse=True,
        )
        if a == b or b == c or a <= F(1, 2):
            continue
        p = ChartPoint.from_fractions(a, b)
        out = apply_T(p)
        if not isinstance(out, tuple):
            continue
        _, cell = out
        if cell.kind == "swap":
            m = CocycleMatrix(((cell.n, 1, cell.n), (1, 0, 0), (0, 0, 1)))
        else:
            m = CocycleMatrix(((cell.n, cell.n, 1), (1, 0, 0), (0, 1, 0)))
        de_renorm = m.solve((a, b, c))
        assert all(x > 0 for x in de_renorm)
        assert sum(de_renorm) == roof_scale(p, [(cell.n, cell.kind)])


def test_roof_additive_along_paths():
    z = ChartPoint.from_fractions(F(51, 100), F(8, 25))
    mid = inverse_branch(MarkovCell(n=1, kind="swap"), z)
    p = inverse_branch(MarkovCell(n=2, kind="cyc"), mid)
    blocks = [(2, "cyc"), (1, "swap")]
    img, _ = apply_T(p)
    assert roof(p, blocks) == pytest.approx(
        roof(p, blocks[:1]) + roof(img, blocks[1:]), rel=1e-12
    )
    # exact version: the scales multiply
    assert roof_scale(p, blocks) == roof_scale(p, blocks[:1]) * roof_scale(
        img, blocks[1:]
    )


# --- sections and first returns ---------------------------------------------------------------

def test_named_loops_are_valid():
    for name, factory in NAMED_LOOPS.items():
        loop = factory()
        validate_loop(loop)


def test_section_triangle_ccc():
    v = section_triangle(loop_ccc())
    assert v == (
        (F(4, 7), F(2, 7)),
        (F(7, 13), F(4, 13)),
        (F(9, 17), F(5, 17)),
    )


def test_section_samples_live_in_cylinder():
    loop = loop_ccc()
    rng = np.random.default_rng(12)
    a, b = sample_section(loop, rng, 500)
    for x, y in zip(a, b):
        p = ChartPoint(float(x), float(y))
        for n_exp, kind_exp in [(1, "cyc")] * 3:
            out = apply_T(p)
            assert isinstance(out, tuple)
            p, cell = out
            assert (cell.n, cell.kind) == (n_exp, kind_exp)


def test_first_return_from_double_loop_cylinder():
    loop = loop_cccss()  # no self-overlap: the shortest return is the loop
    blocks = [(st.n, st.kind) for st in loop.steps]
    z = ChartPoint.from_fractions(F(51, 100), F(8, 25))
    p = z
    for n, kind in reversed(blocks * 2):
        p = inverse_branch(MarkovCell(n=n, kind=kind), p)
    record = first_return(p, loop)
    assert isinstance(record, ReturnRecord)
    assert [(st.n, st.kind) for st in record.path.steps] == blocks
    assert record.roof_value > 5 * math.log(9 / 8)  # five expanding blocks
    # return point: forward iteration over the recorded path
    cur = ChartPoint(p.a, p.b)
    for _ in range(len(record.path.steps)):
        cur, _ = apply_T(cur)
    assert abs(cur.a - record.return_point.a) < 1e-10
    assert abs(cur.b - record.return_point.b) < 1e-10


def test_first_return_rejects_outsiders():
    loop = loop_cccss()
    with pytest.raises(OutsideCylinder):
        first_return(ChartPoint(0.7, 0.18), loop)


def test_first_return_no_return_cap():
    loop = loop_ccc()
    rng = np.random.default_rng(3)
    a, b = sample_section(loop, rng, 40)
    hit_noreturn = False
    for x, y in zip(a, b):
        try:
            out = first_return(ChartPoint(float(x), float(y)), loop, cap=2)
        except OutsideCylinder:
            continue
        if isinstance(out, NoReturn):
            assert out.depth == 2
            hit_noreturn = True
    assert hit_noreturn


def test_roof_value_bounded_below_by_block_count():
    # every block expands by at least (4/3)^3, i.e. contributes more than
    # log(4/3) to the roof
    loop = loop_ccc()
    rng = np.random.default_rng(14)
    a, b = sample_section(loop, rng, 60)
    returned = 0
    for x, y in zip(a, b):
        try:
            out = first_return(ChartPoint(float(x), float(y)), loop, cap=500)
        except OutsideCylinder:
            continue
        if isinstance(out, ReturnRecord):
            returned += 1
            assert out.roof_value >= len(out.path.steps) * math.log(4 / 3)
    assert returned > 0


# --- tails -------------------------------------------------------------------------------------

def test_return_roofs_deterministic_across_workers():
    loop = loop_ccc()
    r1, d1, l1 = return_roofs(loop, 3000, seed=21, workers=1)
    r2, d2, l2 = return_roofs(loop, 3000, seed=21, workers=8)
    assert np.array_equal(r1, r2) and d1 == d2 and l1 == l2


def test_tail_curve_fields_and_monotonicity():
    curve = roof_tail(loop_ccc(), samples=20000, seed=2, loop_name="ccc")
    assert curve.samples >= 20000
    assert curve.probabilities == sorted(curve.probabilities, reverse=True)
    assert all(0 <= p <= 1 for p in curve.probabilities)
    assert curve.fitted_exponent > 0
    assert curve.fit_residual < 0.1
    obj = curve.to_json()
    assert set(obj) >= {"thresholds", "probabilities", "fitted_exponent", "fit_residual"}
    csv = curve.to_csv().splitlines()
    assert csv[0] == "T,probability"
    assert len(csv) == len(curve.thresholds) + 1


def test_exp_weighted_partial_sums_stabilize():
    # integrability proxy at sigma = delta/2: the running estimate of
    # E[e^{sigma r}] moves < 1% over the last tenth of the sample stream
    roofs, drawn, _ = return_roofs(loop_ccc(), 30000, seed=6)
    _, _, delta, _, _ = fit_tail(roofs, drawn)
    sigma = delta / 2
    w = np.exp(sigma * roofs)
    n = w.size
    full = w.mean()
    partial = w[: int(0.9 * n)].mean()
    assert abs(full - partial) / full < 0.01
