"""Self-contained hypothesis tests for comparing calculation-time samples.

Distribution functions are computed from the regularized incomplete beta
function; no tables and no scipy.stats.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

__all__ = [
    "TestKind", "TestResult", "reg_inc_beta", "t_sf", "f_sf", "norm_sf", "norm_ppf",
    "welch_t", "anova_oneway", "levene", "shapiro_wilk", "bonferroni_adjust",
    "pairwise_welch",
]


class TestKind(str, enum.Enum):
    __test__ = False  # not a pytest class
    LEVENE = "Levene"
    SHAPIRO_WILK = "ShapiroWilk"
    ANOVA_F = "AnovaF"
    WELCH_T = "WelchT"


@dataclass(frozen=True)
class TestResult:
    __test__ = False
    kind: TestKind
    statistic: float
    df: tuple[float, ...]
    p_value: float

    def as_dict(self):
        return {"kind": self.kind.value, "statistic": self.statistic,
                "df": list(self.df), "p_value": self.p_value}


# --------------------------------------------------------------------------
# special functions

_EPS = 1e-16
_TINY = 1e-300


def _betacf(a, b, x):
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the fraction converges fast only on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) of Student's t."""
    if math.isinf(t):
        return 0.0
    return reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper tail P(F >= f)."""
    if math.isinf(f):
        return 0.0
    if f <= 0:
        return 1.0
    return reg_inc_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


def norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def norm_ppf(p: float) -> float:
    """Standard normal quantile (Acklam's rational approximation, one Newton polish)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    lo = 0.02425
    if p < lo:
        q = math.sqrt(-2 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1)
    elif p <= 1 - lo:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1)
    else:
        q = math.sqrt(-2 * math.log(1 - p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1)
    err = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    return x - err * math.sqrt(2 * math.pi) * math.exp(x * x / 2)


# --------------------------------------------------------------------------
# tests

def _clip_p(p):
    return float(min(1.0, max(0.0, p)))


def welch_t(a, b) -> TestResult:
    """Two-sided independent samples t-test without the equal-variance assumption."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two observations")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            return TestResult(TestKind.WELCH_T, 0.0, (float(len(a) + len(b) - 2),), 1.0)
        return TestResult(TestKind.WELCH_T, math.copysign(math.inf, diff),
                          (float(len(a) + len(b) - 2),), 0.0)
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    return TestResult(TestKind.WELCH_T, float(t), (float(df),), _clip_p(t_sf(t, df)))


def _check_groups(groups):
    groups = [np.asarray(g, float) for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    if any(len(g) < 2 for g in groups):
        raise ValueError("each group needs at least two observations")
    return groups


def _anova(groups, kind):
    n_total = sum(len(g) for g in groups)
    k = len(groups)
    grand = np.concatenate(groups).mean()
    ssb = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ssw = sum(((g - g.mean()) ** 2).sum() for g in groups)
    df1, df2 = float(k - 1), float(n_total - k)
    if ssw == 0:
        if ssb == 0:
            return TestResult(kind, 0.0, (df1, df2), 1.0)
        return TestResult(kind, math.inf, (df1, df2), 0.0)
    f = (ssb / df1) / (ssw / df2)
    return TestResult(kind, float(f), (df1, df2), _clip_p(f_sf(f, df1, df2)))


def anova_oneway(groups) -> TestResult:
    return _anova(_check_groups(groups), TestKind.ANOVA_F)


def levene(groups) -> TestResult:
    """Classic Levene test: one-way ANOVA on absolute deviations from group means."""
    groups = _check_groups(groups)
    return _anova([np.abs(g - g.mean()) for g in groups], TestKind.LEVENE)


def _poly(cc, x):
    out = 0.0
    for c in reversed(cc):
        out = out * x + c
    return out


_C1 = (0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.544, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _sw_coefficients(n):
    """Royston's approximation of the upper-half Shapiro-Wilk weights, largest first."""
    half = n // 2
    if n == 3:
        return np.array([math.sqrt(0.5)])
    m = np.array([-norm_ppf((i - 0.375) / (n + 0.25)) for i in range(1, half + 1)])
    summ2 = 2.0 * np.sum(m ** 2)
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a = np.empty(half)
    a1 = _poly(_C1, rsn) + m[0] / ssumm2
    if n > 5:
        a2 = m[1] / ssumm2 + _poly(_C2, rsn)
        fac = math.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2) / (1 - 2 * a1 ** 2 - 2 * a2 ** 2))
        a[1] = a2
        start = 2
    else:
        fac = math.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * a1 ** 2))
        start = 1
    a[0] = a1
    a[start:] = m[start:] / fac
    return a


def shapiro_wilk(sample) -> TestResult:
    """Shapiro-Wilk W with Royston's normalizing transform for the p-value (3 <= n <= 50)."""
    x = np.sort(np.asarray(sample, float))
    n = len(x)
    if not 3 <= n <= 50:
        raise ValueError(f"Shapiro-Wilk supports 3 <= n <= 50, got {n}")
    if x[-1] - x[0] <= 1e-19 * max(1.0, abs(x[0])):
        raise ValueError("Shapiro-Wilk undefined for a zero-variance sample")
    a = _sw_coefficients(n)
    half = len(a)
    weights = np.zeros(n)
    weights[-half:] = a[::-1]
    weights[:half] = -a
    # scale to keep the arithmetic in range; W is scale-free
    z = (x - x.mean()) / (x[-1] - x[0])
    w = float(np.dot(weights, z) ** 2 / np.dot(z, z))
    w = min(w, 1.0)
    if n == 3:
        p = 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.pi / 3.0)
        return TestResult(TestKind.SHAPIRO_WILK, w, (float(n),), _clip_p(p))
    w1 = 1.0 - w
    if w1 <= 0:
        return TestResult(TestKind.SHAPIRO_WILK, w, (float(n),), 1.0)
    y = math.log(w1)
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return TestResult(TestKind.SHAPIRO_WILK, w, (float(n),), 1e-99)
        y = -math.log(gamma - y)
        mean = _poly(_C3, n)
        sd = math.exp(_poly(_C4, n))
    else:
        xx = math.log(n)
        mean = _poly(_C5, xx)
        sd = math.exp(_poly(_C6, xx))
    return TestResult(TestKind.SHAPIRO_WILK, w, (float(n),), _clip_p(norm_sf((y - mean) / sd)))


def bonferroni_adjust(p_values, m: int):
    if m < 1:
        raise ValueError("comparison count must be at least 1")
    out = []
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p-value out of range: {p}")
        out.append(min(1.0, m * p))
    return out


def pairwise_welch(groups: dict):
    """Welch tests on every unordered pair, in insertion order, Bonferroni-adjusted."""
    names = list(groups)
    pairs = list(combinations(names, 2))
    raw = [welch_t(groups[a], groups[b]) for a, b in pairs]
    adjusted = bonferroni_adjust([r.p_value for r in raw], len(pairs))
    return [(a, b, r, p) for (a, b), r, p in zip(pairs, raw, adjusted)]
