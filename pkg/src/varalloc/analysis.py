"""Empirical verification of the structural inequalities, plus trend sweeps.

Each ``verify_*`` routine fuzzes one inequality satisfied by expected maxima
of Gaussian vectors and reports the number of trials that violated it beyond
tolerance.  Asymptotic statements are tested as bounded-constant or
monotone-trend checks over finite grids, never as exact constants.  The two
sweep routines produce the data behind the concavity and concentration
trends (objective per set as the set size grows; allocation support as the
membership probability grows).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .instances import AllocationVector, erdos_renyi_instance
from .oracle import (
    CovarianceSpec,
    EstimatorConfig,
    Z95,
    derive_seed,
    expected_max_batch,
    expected_max_correlated,
    psd_factor,
)
from .solvers import log_approx_graph

__all__ = [
    "VerificationReport",
    "SweepRow",
    "SweepTable",
    "verify_eps_contribution",
    "verify_lipschitz",
    "verify_max_floor_bound",
    "verify_var2approx",
    "verify_correlation_gap",
    "verify_submodular_g",
    "verify_max_inequalities",
    "concavity_curve",
    "concentration_profile",
    "emit_sweep_csv",
    "ALL_CHECKS",
]

# Correlated expected max is at most this multiple of the independent one
# with the same marginals: 2e/(e-1).
CORRELATION_GAP_CONSTANT = 2.0 * math.e / (math.e - 1.0)

# Adopted from the explicit per-coordinate bounds in the smoothness proof
# (each term is below 1.1, two terms per coordinate).
LIPSCHITZ_CONSTANT = 2.0

_QUAD_SLACK = 1e-7  # tolerance granted to quadrature when asserting inequalities
_SUBSET_SAMPLE_CAP = 20_000


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of one empirical check."""

    claim: str
    trials: int
    violations: int
    worst_margin: float
    details: tuple
    seed: int

    @property
    def ok(self) -> bool:
        return self.violations == 0


@dataclass(frozen=True)
class SweepRow:
    parameter: float
    statistic: str
    value: float
    ci_half_width: float


@dataclass(frozen=True)
class SweepTable:
    """Rows of (parameter, statistic, value, ci_half_width).

    Within each statistic the parameter points are strictly increasing.
    """

    rows: tuple[SweepRow, ...]

    def __post_init__(self):
        last: dict[str, float] = {}
        for row in self.rows:
            prev = last.get(row.statistic)
            if prev is not None and row.parameter <= prev:
                raise ValueError(
                    f"parameter points for {row.statistic!r} must be strictly increasing"
                )
            last[row.statistic] = row.parameter

    def values(self, statistic: str) -> list[tuple[float, float, float]]:
        return [
            (r.parameter, r.value, r.ci_half_width)
            for r in self.rows
            if r.statistic == statistic
        ]

    def statistics(self) -> list[str]:
        seen: list[str] = []
        for r in self.rows:
            if r.statistic not in seen:
                seen.append(r.statistic)
        return seen


def _emax(means, stddevs) -> float:
    """Deterministic expected maximum (quadrature grade, ~1e-12)."""
    return float(expected_max_batch(np.asarray(means, float), np.asarray(stddevs, float)[None, :])[0])


def _emax_floor0(stddevs) -> float:
    """E max(0, X_1..X_n) for zero-mean coordinates: append a point mass at 0."""
    s = np.concatenate([np.asarray(stddevs, float), [0.0]])
    return _emax(np.zeros(s.shape[0]), s)


def verify_eps_contribution(
    eps_grid,
    n_per_trial: int = 32,
    trials: int = 20,
    seed: int = 0,
) -> VerificationReport:
    """Scaling of E max(0, max_i Y_i) when every variance is below eps^2.

    For zero-mean coordinates with per-coordinate variance at most eps^2 and
    total variance at most 1, the positive part of the maximum is bounded by
    a constant times eps*sqrt(ln(1/eps)).  The fitted constant
    C(eps) = measured / (eps*sqrt(ln(1/eps))) must stay bounded across the
    grid: max/min <= 2.  Each eps includes the adversarial profile of
    floor(1/eps^2) coordinates at exactly eps^2 plus random profiles.
    """
    eps_grid = [float(e) for e in eps_grid]
    for e in eps_grid:
        if not (0.0 < e <= 0.5):
            raise ValueError("eps values must lie in (0, 1/2]")
    rng = np.random.default_rng(seed)
    details = []
    fitted = []
    for eps in eps_grid:
        scale = eps * math.sqrt(math.log(1.0 / eps))
        m_adv = int(1.0 / (eps * eps))
        profiles = [np.full(m_adv, eps * eps)]
        for _ in range(trials):
            v = rng.uniform(0.0, eps * eps, n_per_trial)
            total = v.sum()
            if total > 1.0:
                v *= 1.0 / total
            profiles.append(v)
        best = 0.0
        for prof in profiles:
            measured = _emax_floor0(np.sqrt(prof))
            best = max(best, measured / scale)
            details.append({"eps": eps, "n": len(prof), "measured": measured,
                            "fitted_constant": measured / scale})
        fitted.append(best)
    ratio = max(fitted) / min(fitted)
    return VerificationReport(
        claim="eps_contribution",
        trials=len(details),
        violations=int(ratio > 2.0),
        worst_margin=ratio,
        details=tuple(details),
        seed=seed,
    )


def verify_lipschitz(trials: int = 2000, n: int = 4, seed: int = 0) -> VerificationReport:
    """|E max X - E max Y| <= 2 * sum_i |sigma_i - sigma'_i| for equal means.

    The constant comes from the explicit per-coordinate bounds in the
    smoothness proof; if a fuzzed pair exceeds it, the report carries the
    empirical ratio instead of hiding it.
    """
    rng = np.random.default_rng(seed)
    violations = 0
    worst = 0.0
    details = []
    for _ in range(trials):
        means = rng.normal(0.0, 1.0, n)
        s1 = rng.uniform(0.0, 1.0, n)
        s2 = rng.uniform(0.0, 1.0, n)
        diff = abs(_emax(means, s1) - _emax(means, s2))
        l1 = float(np.abs(s1 - s2).sum())
        if diff > LIPSCHITZ_CONSTANT * l1 + _QUAD_SLACK:
            violations += 1
        ratio = diff / l1 if l1 > 0 else 0.0
        if ratio > worst:
            worst = ratio
            details.append({"means": means.tolist(), "s1": s1.tolist(),
                            "s2": s2.tolist(), "ratio": ratio})
    return VerificationReport("lipschitz", trials, violations, worst,
                              tuple(details), seed)


def verify_max_floor_bound(
    trials: int = 1500,
    n_range: tuple[int, int] = (2, 6),
    seed: int = 0,
) -> VerificationReport:
    """E max(X_1..X_n) >= (1 - 2^(1-n)) * E max(0, X_1..X_n) for means >= 0."""
    lo, hi = n_range
    if lo < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng(seed)
    violations = 0
    worst = math.inf
    details = []
    for _ in range(trials):
        n = int(rng.integers(lo, hi + 1))
        means = rng.uniform(0.0, 1.0, n)
        sig = rng.uniform(0.0, 1.0, n)
        lhs = _emax(means, sig)
        with_floor = _emax(np.concatenate([means, [0.0]]), np.concatenate([sig, [0.0]]))
        factor = 1.0 - 2.0 ** (1 - n)
        margin = lhs - factor * with_floor
        if margin < -_QUAD_SLACK:
            violations += 1
        if margin < worst:
            worst = margin
            details.append({"n": n, "lhs": lhs, "rhs": factor * with_floor,
                            "margin": margin})
    return VerificationReport("max_floor_bound", trials, violations, worst,
                              tuple(details), seed)


def verify_var2approx(trials: int = 1500, n: int = 4, seed: int = 0) -> VerificationReport:
    """Zero-mean monotonicity: sigma <= sigma' <= 2 sigma (coordinate-wise)
    implies E max X <= E max X' <= 2 E max X, for n >= 2."""
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng(seed)
    zeros = np.zeros(n)
    violations = 0
    worst = math.inf
    details = []
    for _ in range(trials):
        sig = rng.uniform(0.0, 1.0, n)
        mult = rng.uniform(1.0, 2.0, n)
        base = _emax(zeros, sig)
        scaled = _emax(zeros, sig * mult)
        slack = min(scaled - base, 2.0 * base - scaled)
        if slack < -_QUAD_SLACK:
            violations += 1
        if slack < worst:
            worst = slack
            details.append({"sig": sig.tolist(), "mult": mult.tolist(),
                            "base": base, "scaled": scaled, "slack": slack})
    return VerificationReport("var2approx", trials, violations, worst,
                              tuple(details), seed)


def verify_correlation_gap(
    trials: int = 400,
    n: int = 4,
    mc_samples: int = 50_000,
    seed: int = 0,
) -> VerificationReport:
    """E max of a joint Gaussian vector is at most 2e/(e-1) times the
    expected max of independent coordinates with the same marginals."""
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng(seed)
    violations = 0
    worst = 0.0
    details = []
    for t in range(trials):
        a = rng.normal(0.0, 1.0, (n, n))
        cov = a @ a.T
        cov *= 1.0 / np.trace(cov)
        means = rng.uniform(0.0, 1.0, n)
        spec = CovarianceSpec(means, cov)
        lhs = expected_max_correlated(
            spec, EstimatorConfig(mc_samples=mc_samples, seed=derive_seed(seed, f"gap:{t}"))
        )
        rhs = _emax(means, np.sqrt(np.diag(cov)))
        bound = CORRELATION_GAP_CONSTANT * rhs + lhs.half_width + 1e-9
        ratio = lhs.value / (CORRELATION_GAP_CONSTANT * rhs)
        if lhs.value > bound:
            violations += 1
        if ratio > worst:
            worst = ratio
            details.append({"trial": t, "lhs": lhs.value, "rhs": rhs, "ratio": ratio})
    return VerificationReport("correlation_gap", trials, violations, worst,
                              tuple(details), seed)


def verify_submodular_g(k_max: int = 12) -> VerificationReport:
    """Diminishing returns of g(k) = E max(0, X_1..X_k) for iid standard
    normals: the increments g(k+1) - g(k) are positive and decreasing."""
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    g = [0.0]
    for k in range(1, k_max + 1):
        g.append(_emax_floor0(np.ones(k)))
    diffs = [g[k] - g[k - 1] for k in range(1, k_max + 1)]
    violations = 0
    worst = -math.inf
    details = []
    for k in range(1, k_max):
        margin = diffs[k] - diffs[k - 1]  # must be <= 0
        if margin > 1e-9 or diffs[k] <= 0:
            violations += 1
        worst = max(worst, margin)
        details.append({"k": k, "g": g[k], "increment": diffs[k - 1], "margin": margin})
    return VerificationReport("submodular_g", k_max - 1, violations, worst,
                              tuple(details), seed=0)


def _max_inequality_pool(rng: np.random.Generator) -> float:
    kind = rng.integers(0, 5)
    if kind == 0:
        return float(rng.normal())
    if kind == 1:
        return float(rng.uniform(-5.0, 5.0))
    if kind == 2:
        return float(rng.integers(-3, 4))  # frequent exact ties
    if kind == 3:
        return float(rng.normal() * 1e6)
    return float(rng.normal() * 1e-6)


def verify_max_inequalities(trials: int = 10_000, seed: int = 0) -> VerificationReport:
    """Deterministic orderings of maxima, checked exactly on fuzzed tuples.

    For all reals: max(a,b) + max(a,c) >= max(a,b,c) + a, and
    3 max(a,b,c,d) + max(a,d) + max(b,d) + max(c,d)
      <= 2 max(a,b,d) + 2 max(a,c,d) + 2 max(b,c,d).
    Both sides are combined with exact summation so ties cannot produce
    spurious rounding violations.
    """
    rng = np.random.default_rng(seed)
    violations = 0
    worst = math.inf
    details = []
    for t in range(trials):
        a, b, c, d = (_max_inequality_pool(rng) for _ in range(4))
        lhs3 = math.fsum([max(a, b), max(a, c)])
        rhs3 = math.fsum([max(a, b, c), a])
        slack3 = lhs3 - rhs3
        lhs4 = math.fsum([max(a, b, c, d)] * 3 + [max(a, d), max(b, d), max(c, d)])
        rhs4 = math.fsum([max(a, b, d)] * 2 + [max(a, c, d)] * 2 + [max(b, c, d)] * 2)
        slack4 = rhs4 - lhs4
        slack = min(slack3, slack4)
        if slack < 0.0:
            violations += 1
        if slack < worst:
            worst = slack
            details.append({"trial": t, "tuple": (a, b, c, d),
                            "slack3": slack3, "slack4": slack4})
    return VerificationReport("max_inequalities", trials, violations, worst,
                              tuple(details), seed)


def _per_set_values_independent(n, k, means, sigma, rng) -> float:
    """Average over k-subsets of E max of the member coordinates."""
    count = math.comb(n, k)
    if count <= _SUBSET_SAMPLE_CAP:
        subsets = list(itertools.combinations(range(n), k))
    else:
        subsets = [tuple(rng.choice(n, size=k, replace=False)) for _ in range(_SUBSET_SAMPLE_CAP)]
    sub_means = np.array([[means[i] for i in s] for s in subsets])
    sub_sigma = np.array([[sigma[i] for i in s] for s in subsets])
    return float(expected_max_batch(sub_means, sub_sigma).mean())


def _block_covariance(sigma: np.ndarray, sign: float) -> np.ndarray:
    """Block-diagonal 2x2 covariance with fully (anti)correlated pairs."""
    n = sigma.shape[0]
    cov = np.diag(sigma**2)
    for b in range(n // 2):
        i, j = 2 * b, 2 * b + 1
        cov[i, j] = cov[j, i] = sign * sigma[i] * sigma[j]
    return cov


def _per_set_values_correlated(n, means, cov, samples, seed):
    """Per-set average and CI for all subset sizes, on shared joint draws.

    Returns (value[k], hw[k]) for k = 1..n, exploiting one sample matrix.
    """
    L = psd_factor(cov)
    z = np.random.default_rng(seed).standard_normal((samples, L.shape[1]))
    x = z @ L.T + means
    values = {}
    for k in range(1, n + 1):
        subsets = list(itertools.combinations(range(n), k))
        stat = np.zeros(samples)
        for s in subsets:
            stat += x[:, list(s)].max(axis=1)
        stat /= len(subsets)
        mean = float(stat.mean())
        hw = Z95 * float(stat.std(ddof=1)) / math.sqrt(samples)
        values[k] = (mean, hw)
    return values


def _sigma_candidates(n: int, allocation: AllocationVector | None):
    cands = []
    if allocation is not None:
        cands.append(np.asarray(allocation.stddevs, dtype=float))
    for s in range(1, n + 1):
        v = np.zeros(n)
        v[:s] = 1.0 / math.sqrt(s)
        cands.append(v)
    seen = set()
    out = []
    for v in cands:
        key = tuple(v.tolist())
        if key not in seen:
            seen.add(key)
            out.append(v)
    return out


def concavity_curve(n: int, allocation: AllocationVector | None, cfg: EstimatorConfig) -> SweepTable:
    """Per-set objective of the complete k-subset instance, for k = 1..n.

    For each candidate deviation vector sigma the curve
    f_sigma(k) = average over k-subsets of E max of the members
    is discretely concave; the table reports the per-k maximum over the
    candidate set (statistic ``independent``), the analogous curves for the
    block-correlated variants (``positive_correlated`` and
    ``negative_correlated``), and the worst concavity margin
    f(k) + f(k-2) - 2 f(k-1) over the candidates (``concavity_margin``,
    non-positive up to quadrature tolerance).
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    for k in range(1, n + 1):
        if math.comb(n, k) > 1_000_000:
            raise ValueError(f"binom({n}, {k}) exceeds the enumeration guard")
    means = np.zeros(n)
    rng = np.random.default_rng(derive_seed(cfg.seed, "concavity-subsets"))
    cands = _sigma_candidates(n, allocation)

    curves = []
    for sigma in cands:
        curves.append([_per_set_values_independent(n, k, means, sigma, rng)
                       for k in range(1, n + 1)])
    curves = np.asarray(curves)  # (ncand, n)

    samples = min(cfg.mc_samples, 100_000)
    corr = {}
    for sign, name in ((1.0, "positive_correlated"), (-1.0, "negative_correlated")):
        per_k_best = [(-math.inf, 0.0)] * n
        for ci, sigma in enumerate(cands):
            vals = _per_set_values_correlated(
                n, means, _block_covariance(sigma, sign), samples,
                derive_seed(cfg.seed, f"concavity:{name}:{ci}"),
            )
            for k in range(1, n + 1):
                if vals[k][0] > per_k_best[k - 1][0]:
                    per_k_best[k - 1] = vals[k]
        corr[name] = per_k_best

    rows = []
    for k in range(1, n + 1):
        rows.append(SweepRow(k / n, "independent", float(curves[:, k - 1].max()), 0.0))
    for name in ("positive_correlated", "negative_correlated"):
        for k in range(1, n + 1):
            v, hw = corr[name][k - 1]
            rows.append(SweepRow(k / n, name, v, hw))
    for k in range(3, n + 1):
        margin = float((curves[:, k - 1] + curves[:, k - 3] - 2.0 * curves[:, k - 2]).max())
        rows.append(SweepRow(k / n, "concavity_margin", margin, 0.0))
    return SweepTable(tuple(rows))


def concentration_profile(
    n: int,
    m: int,
    p_grid,
    seeds,
    cfg: EstimatorConfig,
    *,
    large_variance_fraction: float = 0.25,
) -> SweepTable:
    """Allocation support of the greedy solver on random instances.

    For each membership probability p, runs the multi-set solver over
    Erdos-Renyi instances and reports the count of variables with variance
    at least ``large_variance_fraction * p`` plus the sorted variance
    profile, averaged over the instance seeds.  Denser instances should
    concentrate the budget on fewer variables.
    """
    p_grid = [float(p) for p in p_grid]
    if any(not (0.0 < p <= 1.0) for p in p_grid):
        raise ValueError("p values must lie in (0, 1]")
    if sorted(p_grid) != p_grid or len(set(p_grid)) != len(p_grid):
        raise ValueError("p_grid must be strictly increasing")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one instance seed")

    count_rows = []
    profile_rows: dict[int, list[SweepRow]] = {r: [] for r in range(n)}
    for p in p_grid:
        counts = []
        profiles = []
        for s in seeds:
            inst = erdos_renyi_instance(n, m, p, seed=s)
            sub_cfg = replace(cfg, seed=derive_seed(cfg.seed, f"conc:{p}:{s}"))
            rep = log_approx_graph(inst, sub_cfg)
            var = np.square(rep.allocation.stddevs_array())
            counts.append(float((var >= large_variance_fraction * p - 1e-12).sum()))
            profiles.append(np.sort(var))
        counts = np.asarray(counts)
        profiles = np.asarray(profiles)
        hw = Z95 * counts.std(ddof=1) / math.sqrt(len(seeds)) if len(seeds) > 1 else 0.0
        count_rows.append(SweepRow(p, "large_variance_count", float(counts.mean()), float(hw)))
        for r in range(n):
            col = profiles[:, r]
            chw = Z95 * col.std(ddof=1) / math.sqrt(len(seeds)) if len(seeds) > 1 else 0.0
            profile_rows[r].append(SweepRow(p, f"sigma_sq_rank_{r}", float(col.mean()), float(chw)))

    rows = count_rows + [row for r in range(n) for row in profile_rows[r]]
    return SweepTable(tuple(rows))


def emit_sweep_csv(table: SweepTable, path) -> None:
    """Write the table as UTF-8 CSV with LF endings and shortest floats."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("parameter,statistic,value,ci_half_width\n")
        for row in table.rows:
            fh.write(f"{row.parameter!r},{row.statistic},{row.value!r},{row.ci_half_width!r}\n")


# Registry used by the command-line verify runner.
ALL_CHECKS = {
    "eps_contribution": lambda seed, mc_samples: verify_eps_contribution(
        (0.5, 0.25, 0.125, 0.0625), seed=seed
    ),
    "lipschitz": lambda seed, mc_samples: verify_lipschitz(seed=seed),
    "max_floor_bound": lambda seed, mc_samples: verify_max_floor_bound(seed=seed),
    "var2approx": lambda seed, mc_samples: verify_var2approx(seed=seed),
    "correlation_gap": lambda seed, mc_samples: verify_correlation_gap(
        mc_samples=mc_samples, seed=seed
    ),
    "submodular_g": lambda seed, mc_samples: verify_submodular_g(),
    "max_inequalities": lambda seed, mc_samples: verify_max_inequalities(seed=seed),
}
