"""Monte Carlo probes: intensity, number fluctuations, conditional count
histograms, local-field moments, swap-ratio and compensator diagnostics, and
free-energy bracket checks.

Every report carries a batch-means standard error (20 batches minimum) so
pass/fail thresholds can be stated in stderr multiples.  Probes that the
underlying theory leaves open (fluctuation exponent, compensator limit) only
report numbers; they never assert.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .oracle import QuadratureSpec, exact_partition
from .potential import (
    INF,
    AccuracyError,
    PeriodizedPotential,
    RieszParams,
    integrate_g2,
    self_constant,
)
from .sampler import ChainState, run_chain
from .stats import batch_means_stderr
from .torus import (
    Configuration,
    TorusBox,
    Window,
    perturbed_lattice,
    rng_from_seed,
    sample_binomial,
)
from .energy import total_energy

MIN_BATCHES = 20


@dataclass(frozen=True)
class EstimateReport:
    name: str
    value: float
    stderr: float
    n_samples: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")


def _stack(samples) -> np.ndarray:
    """Normalize a sample stream to an (T, n, d) array."""
    if isinstance(samples, np.ndarray):
        arr = samples
    else:
        rows = [c.points if isinstance(c, Configuration) else np.asarray(c) for c in samples]
        arr = np.stack([np.asarray(r, dtype=float) for r in rows])
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError("samples must stack to a (T, n, d) array")
    return arr


def _counts_in(arr: np.ndarray, window: Window) -> np.ndarray:
    t, n, d = arr.shape
    mask = window.contains(arr.reshape(t * n, d)).reshape(t, n)
    return mask.sum(axis=1)


def _mean_report(name: str, values: np.ndarray, metadata: dict) -> EstimateReport:
    return EstimateReport(
        name=name,
        value=float(np.mean(values)),
        stderr=batch_means_stderr(values, MIN_BATCHES),
        n_samples=values.size,
        metadata=metadata,
    )


def _variance_report(name: str, values: np.ndarray, metadata: dict) -> EstimateReport:
    batches = np.array_split(values, MIN_BATCHES)
    if min(len(b) for b in batches) < 2:
        raise ValueError("need at least 2 samples per batch for a variance stderr")
    bvars = np.array([np.var(b, ddof=1) for b in batches])
    return EstimateReport(
        name=name,
        value=float(np.var(values, ddof=1)),
        stderr=float(np.std(bvars, ddof=1) / math.sqrt(len(bvars))),
        n_samples=values.size,
        metadata=metadata,
    )


def intensity_profile(samples, cell_grid) -> list[EstimateReport]:
    """Per-cell empirical intensity (points per unit volume), d = 1.

    cell_grid is either a cell count (equal split of the fundamental
    domain) or an explicit array of cell edges.
    """
    arr = _stack(samples)
    t, n, d = arr.shape
    if d != 1:
        raise NotImplementedError("intensity_profile is d = 1 only")
    box = TorusBox(n=n, d=d)
    half = box.side_length / 2.0
    if np.isscalar(cell_grid):
        edges = np.linspace(-half, half, int(cell_grid) + 1)
    else:
        edges = np.asarray(cell_grid, dtype=float)
    n_cells = edges.size - 1
    x = arr[:, :, 0]
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_cells - 1)
    flat = idx + n_cells * np.arange(t)[:, None]
    counts = np.bincount(flat.ravel(), minlength=t * n_cells).reshape(t, n_cells)
    vols = np.diff(edges)
    reports = []
    for c in range(n_cells):
        per_sample = counts[:, c] / vols[c]
        reports.append(
            _mean_report(
                f"intensity[{c}]",
                per_sample.astype(float),
                {"cell": (float(edges[c]), float(edges[c + 1])), "n": n},
            )
        )
    return reports


def number_fluctuation(samples, ks) -> list[EstimateReport]:
    """E|N_k - k| and Var(N_k) for centered volume-k windows, plus the
    log-log variance slope.  Diagnostic only: the growth exponent is an
    open hypothesis, so the slope is reported with a CI, never asserted.
    """
    arr = _stack(samples)
    t, n, d = arr.shape
    ks = [int(k) for k in ks]
    if any(k <= 0 or k > n / 4 for k in ks):
        raise ValueError("window volumes must satisfy 0 < k <= n/4")
    if len(ks) < 3:
        raise ValueError("need at least 3 window sizes for a slope fit")
    reports = []
    variances = []
    for k in ks:
        counts = _counts_in(arr, Window.centered(d, float(k))).astype(float)
        meta = {"k": k, "n": n}
        reports.append(_mean_report(f"abs_dev[k={k}]", np.abs(counts - k), meta))
        var_rep = _variance_report(f"var[k={k}]", counts, meta)
        reports.append(var_rep)
        variances.append(var_rep.value)
    variances = np.asarray(variances)
    if np.any(variances <= 0):
        raise ValueError("degenerate variance, slope fit impossible")
    coeffs, cov = np.polyfit(np.log(ks), np.log(variances), 1, cov=True)
    reports.append(
        EstimateReport(
            name="var_slope",
            value=float(coeffs[0]),
            stderr=float(np.sqrt(cov[0, 0])),
            n_samples=t,
            metadata={"ks": ks, "intercept": float(coeffs[1])},
        )
    )
    return reports


def conditional_number_histogram(
    chain, window: Window, k_max: int | None = None, min_samples: int = 10**4
) -> list[EstimateReport]:
    """Frequency of each window count k in {0..k_max}.

    Frequencies sum to 1 exactly: k_max is extended to the largest observed
    count, so no mass is clipped.  Zero-frequency bins on a short chain are
    flagged inconclusive rather than failed.
    """
    arr = _stack(chain)
    t = arr.shape[0]
    counts = _counts_in(arr, window)
    if k_max is None:
        k_max = int(2 * window.volume + 3)
    k_max = max(k_max, int(counts.max()))
    freq = np.bincount(counts, minlength=k_max + 1) / t
    reports = []
    for k in range(k_max + 1):
        hits = np.asarray(counts == k, dtype=float)
        meta = {"k": k, "hits": int(hits.sum()), "window_volume": window.volume}
        if hits.sum() == 0 and t < min_samples:
            meta["inconclusive"] = True
        reports.append(
            EstimateReport(
                name=f"count_freq[k={k}]",
                value=float(freq[k]),
                stderr=batch_means_stderr(hits, MIN_BATCHES),
                n_samples=t,
                metadata=meta,
            )
        )
    return reports


def local_field_moment(samples, pp: PeriodizedPotential) -> EstimateReport:
    """E|h_n(0, gamma)|, the mean absolute energy of inserting a point at
    the origin.  Samples with a point within 1e-12 of the origin hit the
    infinite-energy guard; they are excluded from the mean and counted in
    the metadata.
    """
    arr = _stack(samples)
    t, n, d = arr.shape
    if n == 0:
        return EstimateReport("local_field_abs", 0.0, 0.0, t, {"singular_samples": 0})
    box = TorusBox(n=n, d=d)
    diffs = arr - box.side_length * np.round(arr / box.side_length)
    radii = np.sqrt((diffs**2).sum(axis=2))
    singular = np.any(radii < 1e-12, axis=1)
    vals = np.asarray(pp.eval(diffs.reshape(t * n, d) if d > 1 else diffs[:, :, 0].ravel()))
    fields = vals.reshape(t, n).sum(axis=1)
    good = np.abs(fields[~singular])
    if good.size == 0:
        raise ValueError("all samples hit the origin guard")
    return EstimateReport(
        name="local_field_abs",
        value=float(good.mean()),
        stderr=batch_means_stderr(good, MIN_BATCHES),
        n_samples=int(good.size),
        metadata={"singular_samples": int(singular.sum()), "n": n},
    )


def _translated_gap(window: Window, u: float, length: float) -> float:
    """Circular gap between a 1-d window and its translate by u."""
    width = window.upper[0] - window.lower[0]
    shift = abs(u) % length
    return min(shift, length - shift) - width


def swap_ratio_probe(
    chain,
    window: Window,
    k: int,
    l: int,
    u_list,
    factor: float = 5.0,
    min_hits: int = 100,
) -> list[EstimateReport]:
    """Ratio r(u) = P(N_D = k, N_{D+u} = l) / P(N_D = l, N_{D+u} = k).

    A finite-volume shadow of the u-uniform swap constant: the probe checks
    max r / min r <= factor over all u whose event pair cleared min_hits.
    Under-sampled ratios carry an inconclusive flag instead of a value
    judgment.
    """
    arr = _stack(chain)
    t, n, d = arr.shape
    if d != 1:
        raise NotImplementedError("swap_ratio_probe is d = 1 only")
    box = TorusBox(n=n, d=d)
    length = box.side_length
    counts_a = _counts_in(arr, window)
    reports = []
    ratios = []
    for u in u_list:
        if _translated_gap(window, float(u), length) <= 1.0:
            raise ValueError(f"u={u} leaves the windows closer than distance 1")
        # N_{window+u}(gamma) = N_window(gamma - u); translating the points
        # instead of the window keeps wrap-around translates representable
        shifted = arr - float(u)
        shifted -= length * np.floor(shifted / length + 0.5)
        counts_b = _counts_in(shifted, window)
        fwd = ((counts_a == k) & (counts_b == l)).astype(float)
        rev = ((counts_a == l) & (counts_b == k)).astype(float)
        hits_fwd, hits_rev = int(fwd.sum()), int(rev.sum())
        meta = {"u": float(u), "k": k, "l": l, "hits": (hits_fwd, hits_rev)}
        if min(hits_fwd, hits_rev) < min_hits:
            meta["inconclusive"] = True
            reports.append(EstimateReport(f"swap_ratio[u={u}]", math.nan, math.nan, t, meta))
            continue
        p_fwd, p_rev = hits_fwd / t, hits_rev / t
        ratio = p_fwd / p_rev
        se_fwd = batch_means_stderr(fwd, MIN_BATCHES)
        se_rev = batch_means_stderr(rev, MIN_BATCHES)
        stderr = ratio * math.sqrt((se_fwd / p_fwd) ** 2 + (se_rev / p_rev) ** 2)
        ratios.append(ratio)
        reports.append(EstimateReport(f"swap_ratio[u={u}]", ratio, stderr, t, meta))
    if ratios:
        spread = max(ratios) / min(ratios)
        reports.append(
            EstimateReport(
                name="swap_ratio_spread",
                value=float(spread),
                stderr=0.0,
                n_samples=t,
                metadata={"within_factor": spread <= factor, "factor": factor},
            )
        )
    else:
        reports.append(
            EstimateReport(
                name="swap_ratio_spread",
                value=math.nan,
                stderr=math.nan,
                n_samples=t,
                metadata={"inconclusive": True, "factor": factor},
            )
        )
    return reports


def compensator_field(params: RieszParams, points: np.ndarray, x: float, p: int) -> np.ndarray:
    """S_p(x, gamma) for each row of a (T, n) point array, d = 1."""
    s = params.s
    half = p / 2.0
    inside = np.abs(points) < half
    diffs = np.abs(points - x)
    with np.errstate(divide="ignore"):
        g = diffs ** (-s)
    g = np.where(inside, np.where(diffs == 0.0, INF, g), 0.0)
    integral = 2.0 * half ** (1.0 - s) / (1.0 - s)
    return g.sum(axis=1) - integral


def compensator_probe(
    params: RieszParams, samples, x: float, p_list
) -> list[EstimateReport]:
    """Distribution summaries of the partial compensated field

        S_p(x, gamma) = sum_{y in gamma, |y| < p/2} g(x - y) - int_{box(p)} g

    with the free-space kernel (closed-form integral in d = 1).  Reports
    mean and variance per p and the mean magnitude of successive increments
    S_{2p} - S_p where both sizes are present.  Evidence only: whether S_p
    converges is an open question, so nothing here asserts.
    """
    arr = _stack(samples)
    t, n, d = arr.shape
    if d != 1 or params.d != 1:
        raise NotImplementedError("compensator_probe is d = 1 only")
    p_list = [int(p) for p in p_list]
    if sorted(p_list) != p_list or len(set(p_list)) != len(p_list):
        raise ValueError("p_list must be strictly increasing")
    if p_list[-1] > n / 4:
        raise ValueError("max p must satisfy p <= n/4")
    pts = arr[:, :, 0]
    values = {p: compensator_field(params, pts, x, p) for p in p_list}
    finite = np.ones(t, dtype=bool)
    for v in values.values():
        finite &= np.isfinite(v)
    n_bad = int(t - finite.sum())
    if finite.sum() < MIN_BATCHES * 2:
        raise ValueError("too many singular samples for batch statistics")
    reports = []
    increments = []
    for p in p_list:
        v = values[p][finite]
        meta = {"p": p, "x": float(x), "singular_samples": n_bad}
        reports.append(_mean_report(f"S_mean[p={p}]", v, meta))
        reports.append(_variance_report(f"S_var[p={p}]", v, dict(meta)))
        if 2 * p in values:
            inc = np.abs(values[2 * p][finite] - v)
            rep = _mean_report(f"S_increment[p={p}->{2 * p}]", inc, dict(meta))
            increments.append(rep.value)
            reports.append(rep)
    if len(increments) >= 2:
        shrinking = all(b < a for a, b in zip(increments[:-1], increments[1:]))
        reports.append(
            EstimateReport(
                name="S_increments_shrinking",
                value=float(shrinking),
                stderr=0.0,
                n_samples=t,
                metadata={"increments": increments},
            )
        )
    return reports


def perturbed_energy_scale(
    params: RieszParams,
    n_list,
    delta: float = 0.25,
    trials: int = 64,
    seed: int = 0,
) -> float:
    """max over sampled perturbed lattices of |H_n|/n, with a 10% margin.

    Used as the constant c in the partition lower bound e^{-beta c n}: the
    perturbed-lattice class has uniformly bounded per-particle energy, and
    the sampled maximum plus margin is an honest stand-in for the sup.
    """
    worst = 0.0
    for i, n in enumerate(n_list):
        pp = PeriodizedPotential.build(params, int(n)).tabulate()
        rng = rng_from_seed(seed, stream=1000 + i)
        for _ in range(trials):
            gamma = perturbed_lattice(params, int(n), delta, rng)
            h = total_energy(gamma, pp).total
            worst = max(worst, abs(h) / n)
    return 1.1 * worst


def _ti_log_partition(
    params: RieszParams,
    n: int,
    beta: float,
    n_grid: int,
    seed: int,
    steps: int,
    burn_in: int,
) -> tuple[float, float]:
    """log Z_n(beta) by thermodynamic integration of -E_b[H_n] over [0, beta].

    Chains at successive grid betas are warm-started from the previous
    endpoint.  Returns (log Z, stderr) with the trapezoid-weighted error.
    """
    pp = PeriodizedPotential.build(params, n).tabulate()
    box = TorusBox(n=n, d=params.d)
    rng = rng_from_seed(seed, stream=7)
    gamma = sample_binomial(box, n, rng)
    betas = np.linspace(0.0, beta, n_grid)
    means = np.empty(n_grid)
    errs = np.empty(n_grid)
    for i, b in enumerate(betas):
        state = ChainState(gamma, b, rng, pp)
        samples, diag = run_chain(state, steps, thin=max(1, steps // 200), burn_in=burn_in)
        means[i] = diag["energy_mean"]
        errs[i] = diag["energy_stderr"]
        gamma = state.config()
    h = betas[1] - betas[0]
    weights = np.full(n_grid, h)
    weights[0] = weights[-1] = h / 2.0
    log_z = -float(np.dot(weights, means))
    stderr = float(np.sqrt(np.dot(weights**2, errs**2)))
    return log_z, stderr


def free_energy_bounds_check(
    params: RieszParams,
    n_list,
    beta: float,
    *,
    seed: int = 20240801,
    delta: float = 0.25,
    ti_steps: int = 40000,
    ti_burn_in: int = 4000,
    quad: QuadratureSpec | None = None,
) -> list[EstimateReport]:
    """Bracket log Z_n / n between the uniform upper bound -beta*A and the
    perturbed-lattice lower bound, n <= 4 exactly and larger n by
    thermodynamic integration (21-point trapezoid, refined once; the
    refinement disagreement is folded into the reported stderr and a hard
    disagreement raises AccuracyError).
    """
    if params.d != 1:
        raise NotImplementedError("free_energy_bounds_check is d = 1 only")
    g2_int = integrate_g2(params)
    c_hat = perturbed_energy_scale(params, n_list, delta=delta, seed=seed)
    reports = []
    for n in n_list:
        n = int(n)
        _, eps_n = self_constant(params, n)
        upper = beta * (0.5 + g2_int + eps_n)
        log_bin = math.lgamma(n + 1) + n * math.log(delta / n)
        lower = -beta * c_hat + log_bin / n
        if n <= 4:
            tol = 1e-6 if n <= 3 else 1e-4
            z = exact_partition(params, n, beta, quad=quad, tol=tol)
            value = math.log(float(z)) / n
            stderr = z.tolerance / float(z) / n
            method = "quadrature"
        else:
            coarse, _ = _ti_log_partition(
                params, n, beta, 21, seed, ti_steps, ti_burn_in
            )
            fine, err = _ti_log_partition(
                params, n, beta, 41, seed + 1, ti_steps, ti_burn_in
            )
            grid_gap = abs(fine - coarse) / n
            value = fine / n
            stderr = math.hypot(err / n, grid_gap)
            if grid_gap > max(5 * err / n, 0.05 * abs(value) + 1e-4):
                raise AccuracyError(
                    f"thermodynamic integration grid not converged at n={n}: "
                    f"21-point vs 41-point gap {grid_gap:g}"
                )
            method = "thermodynamic-integration"
        inside = lower - 3 * stderr <= value <= upper + 3 * stderr
        reports.append(
            EstimateReport(
                name=f"log_partition_per_particle[n={n}]",
                value=value,
                stderr=stderr,
                n_samples=1 if n <= 4 else ti_steps,
                metadata={
                    "lower": lower,
                    "upper": upper,
                    "inside": bool(inside),
                    "method": method,
                    "beta": beta,
                    "c_hat": c_hat,
                    "delta": delta,
                },
            )
        )
    return reports
