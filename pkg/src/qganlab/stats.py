"""Paired tests, effect sizes, bootstrap intervals, and equivalence verdicts.

The decision rule is conjunctive: two variants are "equivalent" on a metric
only when the paired effect size is small (|d| < cut), the per-variant
bootstrap CIs of the mean overlap, and the mean difference sits inside the
metric's practical-equivalence margin. When that fails and the bootstrap CI of
the paired difference clears the margin band entirely on one side, the variant
on the better side of the metric is declared superior; anything else is
inconclusive.

No statistics dependency: the t CDF is evaluated through the regularized
incomplete beta function (continued fraction), checked in the test suite
against an independent high-precision reference.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, asdict

import numpy as np


class ProtocolError(ValueError):
    """A fairness precondition (e.g. paired seed lists) was violated."""


class IncompleteCampaignError(ValueError):
    """The report needs all variants; lists the absentees."""


# metric name -> (higher is better, threshold attribute)
METRIC_INFO = {
    "accuracy": (True, "delta_acc"),
    "fid": (False, "delta_fid"),
    "inception_score": (True, "delta_is"),
    "diversity": (True, "delta_diversity"),
}

VARIANTS = ("vqe", "mlp", "bias", "noise", "none")
CLASSICAL_VARIANTS = ("mlp", "bias", "noise", "none")
PREREGISTERED_METRICS = ("accuracy", "fid", "inception_score")


@dataclass(frozen=True)
class EquivalenceThresholds:
    """Practical-equivalence margins; the defaults are the pre-registered ones."""

    delta_acc: float = 0.03
    delta_fid: float = 5.0
    delta_is: float = 0.3
    delta_diversity: float = 0.05
    cohens_d_cut: float = 0.5

    def delta_for(self, metric: str) -> float:
        return getattr(self, METRIC_INFO[metric][1])

    @property
    def preregistered(self) -> bool:
        return self == EquivalenceThresholds()


# -- special functions --------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    max_iterations = 300
    eps = 3e-16
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iterations + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t with df degrees of freedom."""
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


# -- paired statistics ----------------------------------------------------------


def _paired_diffs(x, y) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"need equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("need at least two pairs")
    return x - y


def paired_t_test(x, y) -> tuple[float, float]:
    """(t, two-sided p) on the paired differences x - y.

    Zero-variance differences follow the documented conventions: nonzero mean
    gives t = +-inf with p = 0; identical samples are degenerate with p = 1
    and t = nan.
    """
    d = _paired_diffs(x, y)
    n = d.size
    sd = float(np.std(d, ddof=1))
    m = float(np.mean(d))
    if sd == 0.0:
        if m != 0.0:
            return math.copysign(math.inf, m), 0.0
        return math.nan, 1.0
    t = m / (sd / math.sqrt(n))
    return t, t_two_sided_p(t, n - 1)


def cohens_d_paired(x, y) -> float:
    """mean(d)/sd(d) with the sample (n-1) standard deviation of differences."""
    d = _paired_diffs(x, y)
    sd = float(np.std(d, ddof=1))
    m = float(np.mean(d))
    if sd == 0.0:
        return 0.0 if m == 0.0 else math.copysign(math.inf, m)
    return m / sd


def bootstrap_ci(
    values, n_resamples: int = 10000, level: float = 0.95, seed: int = 0
) -> tuple[float, float]:
    """Percentile bootstrap CI of the mean; a pure function of (values, seed).

    Resampling contract (what an independent check must mirror): draw an
    [n_resamples, n] index matrix from default_rng(seed).integers(0, n, ...),
    average each row, and take the symmetric percentile interval.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("need a vector of at least two values")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(n_resamples, values.size))
    means = values[idx].mean(axis=1)
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [tail, 100.0 - tail])
    return float(lo), float(hi)


# -- equivalence decisions ------------------------------------------------------


@dataclass(frozen=True)
class VariantSample:
    """Per-seed metric values for one variant, paired by seed across variants."""

    variant: str
    seeds: tuple[int, ...]
    values: dict[str, tuple[float, ...]]

    def metric(self, name: str) -> np.ndarray:
        vec = np.asarray(self.values[name], dtype=np.float64)
        if vec.size != len(self.seeds):
            raise ProtocolError(
                f"{self.variant}/{name}: {vec.size} values for {len(self.seeds)} seeds"
            )
        return vec


@dataclass(frozen=True)
class ComparisonResult:
    metric: str
    variant_a: str
    variant_b: str
    mean_a: float
    mean_b: float
    mean_difference: float
    t_stat: float
    p_value: float
    cohens_d: float
    ci_a: tuple[float, float]
    ci_b: tuple[float, float]
    diff_ci: tuple[float, float]
    verdict: str
    preregistered: bool
    note: str = ""


def _ci_seed(base: int, *parts: str) -> int:
    return base ^ zlib.crc32(":".join(parts).encode("utf-8"))


def decide_equivalence(
    a: VariantSample,
    b: VariantSample,
    metric: str,
    thresholds: EquivalenceThresholds | None = None,
    bootstrap_seed: int = 0,
    n_resamples: int = 10000,
) -> ComparisonResult:
    """Apply the pre-registered decision rule to one metric of one variant pair."""
    thresholds = thresholds or EquivalenceThresholds()
    if metric not in METRIC_INFO:
        raise ValueError(f"unknown metric {metric!r}")
    if a.seeds != b.seeds:
        raise ProtocolError(
            f"unpaired seed lists: {a.variant} has {a.seeds}, {b.variant} has {b.seeds}"
        )
    x = a.metric(metric)
    y = b.metric(metric)
    t, p = paired_t_test(x, y)
    d = cohens_d_paired(x, y)
    diff = x - y
    mean_diff = float(np.mean(diff))
    delta = thresholds.delta_for(metric)
    higher_better = METRIC_INFO[metric][0]

    ci_a = bootstrap_ci(x, n_resamples, seed=_ci_seed(bootstrap_seed, "ci", metric, a.variant))
    ci_b = bootstrap_ci(y, n_resamples, seed=_ci_seed(bootstrap_seed, "ci", metric, b.variant))
    diff_ci = bootstrap_ci(diff, n_resamples, seed=_ci_seed(bootstrap_seed, "diff", metric))

    overlap = ci_a[0] <= ci_b[1] and ci_b[0] <= ci_a[1]
    note = "degenerate: identical samples" if math.isnan(t) else ""

    if abs(d) < thresholds.cohens_d_cut and overlap and abs(mean_diff) <= delta:
        verdict = "equivalent"
    elif diff_ci[0] > delta:
        verdict = "superior_a" if higher_better else "superior_b"
    elif diff_ci[1] < -delta:
        verdict = "superior_b" if higher_better else "superior_a"
    else:
        verdict = "inconclusive"

    return ComparisonResult(
        metric=metric,
        variant_a=a.variant,
        variant_b=b.variant,
        mean_a=float(np.mean(x)),
        mean_b=float(np.mean(y)),
        mean_difference=mean_diff,
        t_stat=t,
        p_value=p,
        cohens_d=d,
        ci_a=ci_a,
        ci_b=ci_b,
        diff_ci=diff_ci,
        verdict=verdict,
        preregistered=thresholds.preregistered,
        note=note,
    )


@dataclass(frozen=True)
class AblationReport:
    reference: str
    seeds: tuple[int, ...]
    summaries: dict  # variant -> metric -> {"mean": float, "std": float}
    preregistered_comparisons: tuple[ComparisonResult, ...]
    exploratory_comparisons: tuple[ComparisonResult, ...]
    thresholds: EquivalenceThresholds
    preregistered: bool


def build_report(
    samples: dict[str, VariantSample],
    thresholds: EquivalenceThresholds | None = None,
    reference: str = "vqe",
    bootstrap_seed: int = 0,
) -> AblationReport:
    """Summaries plus all pre-registered and exploratory pairwise comparisons.

    Pre-registered: each classical variant against the reference on accuracy,
    FID, and the IS analog (the diversity surrogate is excluded against the
    reference). Comparisons among classical variants cover all four metrics
    and are flagged exploratory.
    """
    thresholds = thresholds or EquivalenceThresholds()
    missing = [v for v in VARIANTS if v not in samples]
    if missing:
        raise IncompleteCampaignError(f"missing variants: {', '.join(missing)}")
    seeds = samples[reference].seeds
    for sample in samples.values():
        if sample.seeds != seeds:
            raise ProtocolError(
                f"unpaired seed lists: {sample.variant} has {sample.seeds}, expected {seeds}"
            )

    summaries = {}
    for variant in VARIANTS:
        sample = samples[variant]
        summaries[variant] = {
            m: {
                "mean": float(np.mean(sample.metric(m))),
                "std": float(np.std(sample.metric(m), ddof=1)),
            }
            for m in sample.values
        }

    prereg = tuple(
        decide_equivalence(samples[v], samples[reference], m, thresholds, bootstrap_seed)
        for v in CLASSICAL_VARIANTS
        for m in PREREGISTERED_METRICS
    )
    exploratory = []
    for i, v_a in enumerate(CLASSICAL_VARIANTS):
        for v_b in CLASSICAL_VARIANTS[i + 1 :]:
            for m in METRIC_INFO:
                if m in samples[v_a].values and m in samples[v_b].values:
                    exploratory.append(
                        decide_equivalence(samples[v_a], samples[v_b], m, thresholds, bootstrap_seed)
                    )
    return AblationReport(
        reference=reference,
        seeds=seeds,
        summaries=summaries,
        preregistered_comparisons=prereg,
        exploratory_comparisons=tuple(exploratory),
        thresholds=thresholds,
        preregistered=thresholds.preregistered,
    )


def report_to_json(report: AblationReport) -> dict:
    def comparison(c: ComparisonResult) -> dict:
        out = asdict(c)
        out["ci_a"] = list(c.ci_a)
        out["ci_b"] = list(c.ci_b)
        out["diff_ci"] = list(c.diff_ci)
        return out

    return {
        "reference": report.reference,
        "seeds": list(report.seeds),
        "preregistered": report.preregistered,
        "thresholds": asdict(report.thresholds),
        "summaries": report.summaries,
        "preregistered_comparisons": [comparison(c) for c in report.preregistered_comparisons],
        "exploratory_comparisons": [comparison(c) for c in report.exploratory_comparisons],
    }


def report_to_text(report: AblationReport) -> str:
    lines = []
    flag = "yes" if report.preregistered else "NO (thresholds overridden)"
    lines.append(f"reference variant: {report.reference}   preregistered: {flag}")
    lines.append(f"seeds: {', '.join(str(s) for s in report.seeds)}")
    lines.append("")
    lines.append("variant summaries (mean +- std)")
    metrics = sorted({m for s in report.summaries.values() for m in s})
    header = f"{'variant':<8}" + "".join(f"{m:>22}" for m in metrics)
    lines.append(header)
    for variant in VARIANTS:
        row = f"{variant:<8}"
        for m in metrics:
            cell = report.summaries[variant].get(m)
            row += f"{cell['mean']:>12.4f} +- {cell['std']:<6.4f}" if cell else f"{'-':>22}"
        lines.append(row)
    lines.append("")
    lines.append("preregistered comparisons (vs reference)")
    lines.append(
        f"{'variant':<8}{'metric':<18}{'mean diff':>12}{'d':>10}{'p':>10}  verdict"
    )
    for c in report.preregistered_comparisons:
        lines.append(
            f"{c.variant_a:<8}{c.metric:<18}{c.mean_difference:>12.4f}"
            f"{c.cohens_d:>10.3f}{c.p_value:>10.4f}  {c.verdict}"
        )
    lines.append("")
    lines.append("exploratory comparisons (among classical variants)")
    for c in report.exploratory_comparisons:
        lines.append(
            f"{c.variant_a:<6}vs {c.variant_b:<6}{c.metric:<18}"
            f"{c.mean_difference:>12.4f}{c.cohens_d:>10.3f}  {c.verdict}"
        )
    return "\n".join(lines) + "\n"
