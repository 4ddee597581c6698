"""End-to-end acceptance checks, one numbered test per shipped guarantee.

Each test prints a single verdict line (visible under ``pytest -s``) and
asserts its guarantee with the tolerance stated inline.  Stochastic checks
run fixed seeds, so the suite is deterministic.  Expected values are closed
forms, certified truncation/quadrature bounds, or independently derived
oracle constants; nothing here reads the modules' own reported numbers as
truth except where a check is explicitly about the reported certificate.

Two checks are red by construction and stay red deliberately:

* ``test_criterion_04b``: the replicated-energy limit measurably converges
  to ``H_n + n (g* - c_0) / 2``, a constant ``n c_0 / 2`` away from the
  pinned target ``H_n + n g*/2``.  The pinned target is asserted anyway;
  the companion test in ``test_energy.py`` pins the corrected constant.
* ``test_criterion_12``: at beta = 1 the interaction suppresses large
  window counts super-exponentially (measured frequencies in a volume-2
  window: count 5 ~1.6e-3, count 6 a few visits per 10^6 steps, count 7
  around 1e-7), so the full-support clause fails at the pinned run
  length: the seeded chain observes counts 0..6 and never 7.  The
  swap-ratio clause passes with a spread of ~1.02 against the factor 5.
"""

import functools
import math

import numpy as np
from scipy import stats as sstats

from rieszlab import (
    ChainState,
    Configuration,
    PeriodizedPotential,
    RieszParams,
    TorusBox,
    Window,
    cell_mean,
    conditional_number_histogram,
    compensator_probe,
    count_in,
    discretized_transition_matrix,
    dlr_residual,
    free_energy_bounds_check,
    gnz_residual,
    intensity_profile,
    integrate_g2,
    local_field_moment,
    make_schedule,
    move_cost_truncated,
    move_tail_bound,
    number_fluctuation,
    pair_tail_certificate,
    perturbed_lattice,
    reference_periodized,
    replicated_mean_energy,
    rng_from_seed,
    run_chain,
    sample_binomial,
    swap_ratio_probe,
    tail_bound,
    total_energy,
)
from rieszlab.estimators import perturbed_energy_scale
from rieszlab.oracle import SCHEME_PANEL, QuadratureSpec
from rieszlab.torus import perturbed_class_mask


def _verdict(num: str, desc: str, ok: bool) -> bool:
    print(f"[criterion {num}] {desc}: {'PASS' if ok else 'FAIL'}", flush=True)
    return ok


def _stack_points(samples) -> np.ndarray:
    return np.stack([c.points for c in samples])


# ---------------------------------------------------------------------------
# 1. evaluator vs independent reference, inside the summed certificates
# ---------------------------------------------------------------------------

def test_criterion_01_periodized_certificate():
    rng = rng_from_seed(4101)
    worst = 0.0
    for s in (0.3, 0.5, 0.7):
        p = RieszParams(d=1, s=s)
        for n in (2, 8, 32):
            pp = PeriodizedPotential.build(p, n)
            half = pp.side_length / 2.0
            x = rng.uniform(-half, half, 100)
            gap = float(np.max(np.abs(pp.eval(x) - reference_periodized(p, n, x, 10**6))))
            # each side is within its own certificate of the true series
            tol = pp.tail_bound + pair_tail_certificate(p, n, 10**6)
            worst = max(worst, gap / tol)
            assert gap <= tol, (s, n, gap, tol)
    assert _verdict(
        "01", f"evaluator vs 10^6-term reference, worst gap/certificate {worst:.3f}", worst <= 1.0
    )


# ---------------------------------------------------------------------------
# 2. n^(s/d) scaling of the image-sum correction
# ---------------------------------------------------------------------------

def test_criterion_02_smooth_part_scaling():
    s = 0.5
    scaled = {}
    for n in (2, 4, 8, 16, 32):
        pp = PeriodizedPotential.build(RieszParams(d=1, s=s), n)
        grid = np.linspace(0.0, pp.side_length / 2.0, 200)
        scaled[n] = float(np.max(np.abs(pp.smooth_part(grid)))) * n**s
    ratio = max(scaled.values()) / min(scaled.values())
    ok = ratio < 3.0
    assert _verdict("02", f"sup|g_n - g| * n^s spread {ratio:.6f} < 3", ok), scaled


# ---------------------------------------------------------------------------
# 3. zero cell mean and periodicity of the raw series
# ---------------------------------------------------------------------------

def test_criterion_03_zero_mean_and_periodicity():
    rng = rng_from_seed(4103)
    worst_mean, worst_defect = 0.0, 0.0
    for s, n in ((0.5, 2), (0.5, 8), (0.7, 4)):
        p = RieszParams(d=1, s=s)
        pp = PeriodizedPotential.build(p, n)
        half = pp.side_length / 2.0

        def cell_integral(m):
            # integral of the smooth correction over the cell (even integrand)
            t, w = np.polynomial.legendre.leggauss(m)
            return float(np.dot(w, pp.smooth_part((t + 1.0) * 0.5 * half))) * half

        coarse, fine = cell_integral(64), cell_integral(128)
        mean = fine + n * cell_mean(p, n, 0)
        mean_tol = abs(fine - coarse) + n * pp.tail_bound + 1e-12
        assert abs(mean) <= mean_tol, (s, n, mean, mean_tol)
        worst_mean = max(worst_mean, abs(mean) / mean_tol)

        x = rng.uniform(-half, half, 20)
        defect = float(np.max(np.abs(pp.eval(x) - pp.eval(x + pp.side_length))))
        defect_tol = 2.0 * tail_bound(p, n, pp.truncation_radius)
        assert defect <= defect_tol, (s, n, defect, defect_tol)
        worst_defect = max(worst_defect, defect / defect_tol)
    assert _verdict(
        "03",
        f"cell mean {worst_mean:.2e} and periodicity defect {worst_defect:.2e} of budget",
        max(worst_mean, worst_defect) <= 1.0,
    )


# ---------------------------------------------------------------------------
# 4. replication limit: gap shrinks (a) and lands on the pinned constant (b)
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=1)
def _replication_gaps():
    p = RieszParams(d=1, s=0.5)
    n = 4
    pp = PeriodizedPotential.build(p, n)
    rows = []
    for trial in range(20):
        rng = rng_from_seed(4104, stream=trial)
        gamma = perturbed_lattice(p, n, 0.25, rng)
        h = total_energy(gamma, pp).total
        target = h + n * pp.epsilon_n
        gap5 = abs(replicated_mean_energy(p, gamma, 5) - target)
        gap20 = abs(replicated_mean_energy(p, gamma, 20) - target)
        rows.append((h, gap5, gap20))
    return rows


def test_criterion_04a_replication_gap_shrinks():
    rows = _replication_gaps()
    better = sum(gap20 < gap5 for _, gap5, gap20 in rows)
    assert _verdict("04a", f"replication gap smaller at k=20 in {better}/20 lattices", better == 20)


def test_criterion_04b_replication_limit_constant():
    """Red by construction: the measured limit of the replicated mean energy
    is H_n + n (g* - c_0)/2, so the gap to the pinned target H_n + n g*/2
    converges to n c_0 / 2 = 2.828... instead of 0 and never reaches 1% of
    |H_n| + 1.  test_energy.py::test_replication_converges_to_limit pins the
    corrected constant with the same lattices.
    """
    rows = _replication_gaps()
    worst = max(gap20 / (0.01 * (abs(h) + 1.0)) for h, _, gap20 in rows)
    assert _verdict(
        "04b", f"k=20 replication gap at {worst:.1f}x the 1% threshold", worst <= 1.0
    ), worst


# ---------------------------------------------------------------------------
# 5. per-particle energy lower bound over bulk random configurations
# ---------------------------------------------------------------------------

def test_criterion_05_stability_bound():
    p = RieszParams(d=1, s=0.5)
    g2 = integrate_g2(p)
    margins = {}
    for n in (4, 16):
        pp = PeriodizedPotential.build(p, n)
        tab = pp.tabulate()
        bound = -(0.5 + g2) - pp.epsilon_n - 1e-6
        rng = rng_from_seed(4105, stream=n)
        i, j = np.triu_indices(n, k=1)

        def pair_energies(x):
            seps = x[:, i] - x[:, j]
            return tab.eval(seps.ravel()).reshape(seps.shape).sum(axis=1)

        # the vectorized pair sum must agree with the scalar energy path
        check = rng.uniform(-n / 2.0, n / 2.0, (5, n))
        for row, fast in zip(check, pair_energies(check)):
            cfg = Configuration(points=row[:, None], box=TorusBox(n=n, d=1))
            assert abs(fast - total_energy(cfg, tab).total) <= 1e-9

        worst = math.inf
        for _ in range(5):
            x = rng.uniform(-n / 2.0, n / 2.0, (20000, n))
            worst = min(worst, float(pair_energies(x).min()))
        assert worst / n >= bound, (n, worst / n, bound)
        margins[n] = worst / n - bound
    assert _verdict(
        "05", f"min H/n over 10^5 samples clears the bound by {min(margins.values()):.2f}", True
    )


# ---------------------------------------------------------------------------
# 6. one-point-per-cell class: energy scale and binomial mass
# ---------------------------------------------------------------------------

def test_criterion_06_perturbed_lattice_bounds():
    p = RieszParams(d=1, s=0.5)
    ns = (4, 8, 16, 32, 64)
    c = perturbed_energy_scale(p, ns, delta=0.25, trials=48, seed=4106)
    worst = 0.0
    for stream, n in enumerate(ns):
        tab = PeriodizedPotential.build(p, n).tabulate()
        rng = rng_from_seed(4107, stream=stream)
        for _ in range(48):
            gamma = perturbed_lattice(p, n, 0.25, rng)
            worst = max(worst, abs(total_energy(gamma, tab).total) / n)
    assert worst <= c, (worst, c)

    # class probability is exactly n! (delta/n)^n for n i.i.d. uniforms, so
    # the Monte Carlo estimate sits a few standard errors around the bound;
    # the one-sided check allows the usual 4-stderr slack below it
    n3, delta, trials = 3, 0.1, 10**7
    bound = math.factorial(n3) * (delta / n3) ** n3
    rng = rng_from_seed(4108)
    hits = 0
    for _ in range(10):
        x = rng.uniform(-1.5, 1.5, (trials // 10, n3))
        hits += int(perturbed_class_mask(x, n3, delta).sum())
    p_hat = hits / trials
    stderr = math.sqrt(max(p_hat, bound) * (1.0 - bound) / trials)
    assert p_hat >= bound - 4.0 * stderr, (p_hat, bound, stderr)
    assert _verdict(
        "06",
        f"|H|/n <= {c:.3f} on fresh lattices (worst {worst:.3f}); "
        f"class mass {p_hat:.3e} vs bound {bound:.3e}",
        True,
    )


# ---------------------------------------------------------------------------
# 7. partition brackets: quadrature for n <= 4, integration for n = 8
# ---------------------------------------------------------------------------

def test_criterion_07_partition_brackets():
    reports = free_energy_bounds_check(RieszParams(d=1, s=0.5), (1, 2, 3, 4, 8), 1.0, seed=4109)
    for rep in reports:
        assert rep.metadata["inside"], (rep.name, rep.value, rep.metadata)
        assert rep.metadata["lower"] < rep.metadata["upper"]
    methods = {rep.metadata["method"] for rep in reports}
    assert methods == {"quadrature", "thermodynamic-integration"}
    assert _verdict("07", "log Z_n / n inside [lower, upper] for n in {1,2,3,4,8}", True)


# ---------------------------------------------------------------------------
# 8. window-kernel consistency for three functional types
# ---------------------------------------------------------------------------

def test_criterion_08_window_kernel_identity():
    p = RieszParams(d=1, s=0.5)
    worst = 0.0
    for n in (2, 3):
        tab = PeriodizedPotential.build(p, n).tabulate()
        length = float(n)
        win = Window(lower=(-length / 6.0,), upper=(length / 6.0,))
        lo, hi = -length / 12.0, length / 12.0

        def f_count(block):
            return ((block >= win.lower[0]) & (block < win.upper[0])).sum(axis=1)

        def f_sub(block):
            inside = (block >= lo) & (block < hi)
            return (inside.sum(axis=1) == 1).astype(float)

        def f_smooth(block):
            return np.cos(2.0 * np.pi * block / length).sum(axis=1)

        # reruns with an unrelated inner rule show the residual is not an
        # artifact of both sides sharing quadrature nodes; two of the three
        # functionals keep the cost inside the budget
        inner = QuadratureSpec(points_per_axis=6, scheme=SCHEME_PANEL)
        for beta in (0.0, 1.0):
            for f, independent_inner in (
                (f_count, False),
                (f_sub, True),
                (f_smooth, True),
            ):
                res = dlr_residual(f, p, n, beta, win, tol=1e-4, breaks=(lo, hi), pot=tab)
                worst = max(worst, abs(float(res)))
                assert abs(float(res)) <= 1e-4, (n, beta, f.__name__, float(res))
                if independent_inner:
                    res = dlr_residual(
                        f, p, n, beta, win, tol=1e-4, breaks=(lo, hi), pot=tab,
                        inner_quad=inner,
                    )
                    worst = max(worst, abs(float(res)))
                    assert abs(float(res)) <= 1e-4, (n, beta, f.__name__, float(res))
    assert _verdict("08", f"window-kernel residuals, worst |residual| {worst:.2e} <= 1e-4", True)


# ---------------------------------------------------------------------------
# 9. insertion identity
# ---------------------------------------------------------------------------

def test_criterion_09_insertion_identity():
    p = RieszParams(d=1, s=0.5)
    worst = 0.0
    for n in (2, 3):
        tab = PeriodizedPotential.build(p, n).tabulate()
        length = float(n)
        lo, hi = -length / 6.0, length / 6.0

        def f(x, rest):
            inside = (x >= lo) & (x < hi)
            if rest.shape[1]:
                empty = ((rest >= lo) & (rest < hi)).sum(axis=1) == 0
            else:
                empty = np.ones(x.shape[0], dtype=bool)
            return inside.astype(float) * empty

        for beta in (0.0, 1.0):
            res = gnz_residual(f, p, n, beta, tol=1e-4, breaks=(lo, hi), pot=tab)
            worst = max(worst, abs(float(res)))
            assert abs(float(res)) <= 1e-4, (n, beta, float(res))
    # constant test function: both sides equal the particle count
    tab2 = PeriodizedPotential.build(p, 2).tabulate()
    res = gnz_residual(lambda x, rest: np.ones(x.shape[0]), p, 2, 1.0, tol=1e-6, pot=tab2)
    assert abs(float(res)) <= 1e-6, float(res)
    assert _verdict(
        "09", f"insertion-identity residuals, worst |residual| {worst:.2e} <= 1e-4", True
    )


# ---------------------------------------------------------------------------
# 10. sampler correctness: flux audit, pair-distance law, schedule agreement
# ---------------------------------------------------------------------------

def test_criterion_10_sampler_correctness():
    p = RieszParams(d=1, s=0.5)
    tab2 = PeriodizedPotential.build(p, 2).tabulate()
    for beta in (0.0, 1.0):
        pi, P = discretized_transition_matrix(tab2, TorusBox(n=2, d=1), beta)
        flux = pi[:, None] * P
        assert float(np.max(np.abs(flux - flux.T))) <= 1e-12

    # two-point chain vs the exact distance law: 20 equal-mass oracle bins
    state = ChainState(
        sample_binomial(TorusBox(n=2, d=1), 2, rng_from_seed(4110)),
        1.0, rng_from_seed(4110, stream=1), tab2,
    )
    samples, _ = run_chain(state, 320000, thin=15, burn_in=20000)
    arr = _stack_points(samples)
    delta = arr[:, 0, 0] - arr[:, 1, 0]
    r = np.abs(delta - 2.0 * np.round(delta / 2.0))
    grid = (np.arange(2**15) + 0.5) / 2**15
    cdf = np.cumsum(np.exp(-tab2.eval(grid)))
    cdf /= cdf[-1]
    edges = np.concatenate([[0.0], np.interp(np.arange(1, 20) / 20.0, cdf, grid), [1.0]])
    counts, _ = np.histogram(r, edges)
    pval = float(sstats.chisquare(counts).pvalue)
    assert pval > 0.01, (pval, counts)

    # window-resampling schedule leaves the energy law unchanged
    tab3 = PeriodizedPotential.build(p, 3).tabulate()
    box3 = TorusBox(n=3, d=1)
    plain = ChainState(
        sample_binomial(box3, 3, rng_from_seed(4111)), 1.0,
        rng_from_seed(4111, stream=1), tab3,
    )
    _, diag_plain = run_chain(plain, 88000, thin=20, burn_in=8000)
    resampled = ChainState(
        sample_binomial(box3, 3, rng_from_seed(4112)), 1.0,
        rng_from_seed(4112, stream=1), tab3,
    )
    move = make_schedule("dlr", window=Window.centered(1, 1.0), resample_every=32, sweeps=2)
    _, diag_dlr = run_chain(resampled, 88000, thin=20, burn_in=8000, move=move)
    gap = abs(diag_plain["energy_mean"] - diag_dlr["energy_mean"])
    tol = 3.0 * math.hypot(diag_plain["energy_stderr"], diag_dlr["energy_stderr"])
    assert gap <= tol, (gap, tol)
    assert _verdict(
        "10",
        f"flux symmetric to 1e-12; distance law p={pval:.2f}; schedule gap {gap:.1e} <= {tol:.1e}",
        True,
    )


# ---------------------------------------------------------------------------
# 11. move-cost truncation certificate on Poisson exteriors
# ---------------------------------------------------------------------------

def test_criterion_11_move_truncation():
    p = RieszParams(d=1, s=0.5)
    win = Window.centered(1, 2.0)
    eta = np.array([[0.3]])
    for pval in (8, 32):
        rng = rng_from_seed(4113, stream=pval)
        for _ in range(1000):
            m = rng.poisson(4.0 * pval)
            pts = rng.uniform(-2.0 * pval, 2.0 * pval, (m, 1))
            near = move_cost_truncated(p, eta, pts, win, pval, horizon=4 * pval)
            far = move_cost_truncated(p, eta, pts, win, 4 * pval, horizon=4 * pval)
            bound = move_tail_bound(p, pts, win, pval, eta_count=1, horizon=4 * pval)
            assert abs(far.value - near.value) <= bound, (pval, far.value, near.value, bound)
    assert _verdict("11", "|M^(4p) - M^(p)| within the tail bound in 2000/2000 trials", True)


# ---------------------------------------------------------------------------
# 12. conditional-count support and swap-ratio spread on the long chain
# ---------------------------------------------------------------------------

def test_criterion_12_rigidity_diagnostic():
    """Support clause red by construction at this chain length: at beta = 1
    the count-7 frequency in a volume-2 window is ~1e-7, so 10^6 steps never
    see it (count 6 is borderline and shows up a handful of times; see the
    module docstring).  The swap-ratio clause passes.
    """
    p = RieszParams(d=1, s=0.5)
    n, beta = 32, 1.0
    tab = PeriodizedPotential.build(p, n).tabulate()
    box = TorusBox(n=n, d=1)
    win = Window.centered(1, 2.0)
    u_list = (8.0, 12.0, 16.0)
    state = ChainState(
        sample_binomial(box, n, rng_from_seed(4114)), beta,
        rng_from_seed(4114, stream=1), tab,
    )
    move = make_schedule("swap", window=win, u_list=u_list)
    run_chain(state, 20000, burn_in=20000, move=move)  # tune, keep nothing
    n_steps = 10**6
    counts = np.empty(n_steps, dtype=np.int16)
    kept = []
    for step in range(n_steps):
        move(state)
        cfg = state.config()
        counts[step] = count_in(cfg, win)
        if (step + 1) % 5 == 0:
            kept.append(cfg)
        if (step + 1) % 200000 == 0:
            state.audit()

    reports = swap_ratio_probe(kept, win, 1, 2, u_list)
    spread = reports[-1]
    assert spread.name == "swap_ratio_spread"
    assert not spread.metadata.get("inconclusive", False)
    assert spread.metadata["within_factor"], spread.value

    observed = set(np.unique(counts).tolist())
    missing = sorted(set(range(8)) - observed)
    assert _verdict(
        "12",
        f"probe spread {spread.value:.3f} <= 5; counts observed {sorted(observed)}, "
        f"missing {missing} of 0..7",
        not missing,
    ), missing


# ---------------------------------------------------------------------------
# 13. flat-measure smoke suite: every estimator vs its closed form
# ---------------------------------------------------------------------------

def test_criterion_13_flat_measure_smoke():
    p = RieszParams(d=1, s=0.5)
    pp2 = PeriodizedPotential.build(p, 2)
    tab2 = pp2.tabulate()
    rng = rng_from_seed(4115)
    t, n = 40000, 16
    arr = rng.uniform(-n / 2.0, n / 2.0, (t, n, 1))

    for rep in intensity_profile(arr, 8):
        assert abs(rep.value - 1.0) <= 4.0 * rep.stderr, rep

    flux_reports = number_fluctuation(arr, (1, 2, 4))
    by_name = {rep.name: rep for rep in flux_reports}
    for k in (1, 2, 4):
        js = np.arange(0, n + 1)
        pmf = sstats.binom.pmf(js, n, k / n)
        rep = by_name[f"abs_dev[k={k}]"]
        assert abs(rep.value - float(np.dot(np.abs(js - k), pmf))) <= 4.0 * rep.stderr, rep
        rep = by_name[f"var[k={k}]"]
        assert abs(rep.value - k * (1.0 - k / n)) <= 4.0 * rep.stderr, rep

    hist = conditional_number_histogram(arr, Window.centered(1, 2.0))
    assert math.isclose(sum(rep.value for rep in hist), 1.0, abs_tol=1e-12)
    for rep in hist:
        k = rep.metadata["k"]
        if k <= 7:
            want = float(sstats.binom.pmf(k, n, 2.0 / n))
            assert abs(rep.value - want) <= 4.0 * max(rep.stderr, 1e-4), (rep, want)

    # one uniform point on the unit cell: E|h| = mean of |g_2| over the cell,
    # split at the sign change of g_2 so the singular piece is a closed form
    one = rng.uniform(-0.5, 0.5, (t, 1, 1))
    rep = local_field_moment(one, tab2)
    root = 0.23675027923117259  # sign change of g_2, independent root find
    assert abs(pp2.eval(root)) <= 1e-8

    def int_g2(a, b):
        nodes, w = np.polynomial.legendre.leggauss(64)
        x = (nodes + 1.0) * 0.5 * (b - a) + a
        smooth = float(np.dot(w, pp2.smooth_part(x))) * 0.5 * (b - a)
        return 2.0 * (math.sqrt(b) - math.sqrt(a)) + smooth

    oracle = 2.0 * (int_g2(0.0, root) - int_g2(root, 0.5))
    assert abs(rep.value - oracle) <= 4.0 * rep.stderr, (rep.value, oracle, rep.stderr)

    ratio_reports = swap_ratio_probe(arr, Window.centered(1, 1.0), 1, 2, (4.0, 6.0))
    for rrep in ratio_reports[:-1]:
        assert not rrep.metadata.get("inconclusive", False)
        assert abs(rrep.value - 1.0) <= 4.0 * rrep.stderr, rrep
    assert ratio_reports[-1].metadata["within_factor"]

    for crep in compensator_probe(p, arr, 0.0, (2, 4)):
        if crep.name.startswith("S_mean"):
            assert abs(crep.value) <= 4.0 * crep.stderr, crep

    fe = free_energy_bounds_check(p, (2,), 0.0, seed=4116)[0]
    assert abs(fe.value) <= 4.0 * fe.stderr + 1e-12, fe
    assert fe.metadata["inside"]
    assert _verdict("13", "all estimators match closed forms within 4 stderr at beta=0", True)
