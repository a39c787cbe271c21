"""Prediction metrics and the fold-level inferential tests used to compare methods.

p-values come from a self-contained regularized incomplete beta function so
the statistics do not depend on scipy.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import StatisticsError


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: float
    p_value: float
    df2: Optional[float] = None

    __test__ = False  # keep pytest from collecting this class


def accuracy(pred_labels, true_labels):
    p = np.asarray(pred_labels)
    t = np.asarray(true_labels)
    if p.shape != t.shape or p.size == 0:
        raise StatisticsError(f"label arrays must be non-empty and equal length ({p.shape} vs {t.shape})")
    return 100.0 * float(np.mean(p == t))


def mae(pred, truth):
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape or p.size == 0:
        raise StatisticsError(f"arrays must be non-empty and equal length ({p.shape} vs {t.shape})")
    return float(np.mean(np.abs(p - t)))


def pearson_r(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise StatisticsError(f"expected two equal-length vectors, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise StatisticsError("correlation needs at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise StatisticsError("correlation is undefined for a constant vector")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def _betacf(x, a, b, max_iter=500, eps=1e-16):
    # continued fraction for I_x(a, b), evaluated with the modified Lentz method
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise StatisticsError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def reg_inc_beta(x, a, b):
    """Regularized incomplete beta function I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise StatisticsError(f"shape parameters must be positive (a={a}, b={b})")
    if not 0.0 <= x <= 1.0:
        raise StatisticsError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return float(x)
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        value = front * _betacf(x, a, b) / a
    else:
        value = 1.0 - front * _betacf(1.0 - x, b, a) / b
    return min(1.0, max(0.0, value))


def t_two_tailed_p(t, df):
    if math.isinf(t):
        return 0.0
    return reg_inc_beta(df / (df + t * t), df / 2.0, 0.5)


def f_upper_p(f, df1, df2):
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return reg_inc_beta(df2 / (df2 + df1 * f), df2 / 2.0, df1 / 2.0)


def paired_t_test(a, b, tails=2):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise StatisticsError(f"paired samples must have equal length ({a.shape} vs {b.shape})")
    n = len(a)
    if n < 2:
        raise StatisticsError("paired t-test needs at least two pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TestResult(0.0, float(df), 1.0)
        t = math.copysign(math.inf, mean)
    else:
        t = mean / (sd / math.sqrt(n))
    p = t_two_tailed_p(t, df)
    if tails == 1:
        p = p / 2.0 if t > 0 else 1.0 - p / 2.0
    elif tails != 2:
        raise StatisticsError(f"tails must be 1 or 2, got {tails}")
    return TestResult(float(t), float(df), float(p))


def rm_anova(table):
    """One-way repeated-measures ANOVA on an ``(n_blocks, n_methods)`` table.

    Blocks (here: cross-validation folds) are the repeated subjects.
    """
    x = np.asarray(table, dtype=np.float64)
    if x.ndim != 2:
        raise StatisticsError(f"expected a 2-D table, got shape {x.shape}")
    n, k = x.shape
    if n < 2 or k < 2:
        raise StatisticsError(f"need at least 2 blocks and 2 methods, got {n}x{k}")
    if not np.all(np.isfinite(x)):
        raise StatisticsError("table is incomplete (non-finite entries)")
    grand = x.mean()
    col = x.mean(axis=0)
    row = x.mean(axis=1)
    ss_method = n * float(np.sum((col - grand) ** 2))
    resid = x - row[:, None] - col[None, :] + grand
    ss_error = float(np.sum(resid**2))
    df1, df2 = k - 1, (k - 1) * (n - 1)
    scale = float(np.sum((x - grand) ** 2))
    if ss_method <= 1e-28 * max(scale, 1e-300) or np.all(x == x[:, :1]):
        return TestResult(0.0, float(df1), 1.0, float(df2))
    if ss_error == 0.0:
        return TestResult(math.inf, float(df1), 0.0, float(df2))
    f = (ss_method / df1) / (ss_error / df2)
    return TestResult(float(f), float(df1), float(f_upper_p(f, df1, df2)), float(df2))


def significance_marker(p):
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "n.s."
