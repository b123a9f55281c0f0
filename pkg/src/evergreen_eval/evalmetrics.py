"""Ranking and correlation metrics for self-knowledge evaluation.

Tie handling is explicit everywhere and recorded in report metadata:
AUROC gives tied pairs half credit; rejection curves default to the
expected retained quality over all orderings of tied items ("expected"),
with plain stable input order available as "stable".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, expit

from .errors import (
    NumericalError,
    PreconditionError,
    UndefinedMetricError,
    ValidationError,
)

TIE_POLICY_EXPECTED = "expected"
TIE_POLICY_STABLE = "stable"


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(list(values), dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def _as_binary_array(values, name: str) -> np.ndarray:
    arr = np.asarray(list(values))
    if not np.isin(arr, (0, 1)).all():
        raise ValidationError(f"{name} must contain only 0 and 1")
    return arr.astype(int)


# ---------------------------------------------------------------------------
# Threshold-free classification metrics


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC: P(score_pos > score_neg) with ties worth 0.5.

    Positives are the examples with label 1.
    """
    s = _as_float_array(scores, "scores")
    y = _as_binary_array(labels, "labels")
    if len(s) != len(y):
        raise ValidationError(f"length mismatch: {len(s)} scores vs {len(y)} labels")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("auroc needs both classes present")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s), dtype=float)
    sorted_scores = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[y == 1].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def auprc(scores, labels) -> float:
    """Average precision over the descending-score ranking.

    Ties are broken by stable input order; the tie policy string travels in
    report metadata next to the value.
    """
    s = _as_float_array(scores, "scores")
    y = _as_binary_array(labels, "labels")
    if len(s) != len(y):
        raise ValidationError(f"length mismatch: {len(s)} scores vs {len(y)} labels")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("auprc needs at least one positive")
    order = np.argsort(-s, kind="stable")
    ranked = y[order]
    ap = 0.0
    seen_pos = 0
    for k, label in enumerate(ranked, start=1):
        if label == 1:
            seen_pos += 1
            ap += seen_pos / k
    return ap / n_pos


# ---------------------------------------------------------------------------
# Rejection curves and PRR


@dataclass(frozen=True)
class RejectionCurve:
    """Retained-set mean quality q(rho) on the grid rho_k = k / N, k = 0..N.

    q at rho = 1 (empty retained set) carries the last defined value
    forward. ordering names the score that drove the rejection order.
    """

    rhos: tuple[float, ...]
    quality: tuple[float, ...]
    ordering: str
    tie_policy: str


def _expected_retained_sums(uncertainty: np.ndarray, quality: np.ndarray) -> list[float]:
    """retained_sums[k] = expected total quality after rejecting the k most
    uncertain items, averaging over all orderings of tied items.

    When the cut falls inside a tie group, each tied item is equally likely
    to be rejected, so the group contributes its mean quality per rejected
    slot.
    """
    n = len(quality)
    order = np.argsort(-uncertainty, kind="stable")
    u_sorted = uncertainty[order]
    q_sorted = quality[order]
    total = float(quality.sum())
    sums = [total]
    i = 0
    rejected_before = 0.0
    while i < n:
        j = i
        while j + 1 < n and u_sorted[j + 1] == u_sorted[i]:
            j += 1
        g_sum = float(q_sorted[i : j + 1].sum())
        g_mean = g_sum / (j - i + 1)
        for m in range(1, j - i + 2):
            sums.append(total - rejected_before - m * g_mean)
        rejected_before += g_sum
        i = j + 1
    return sums


def _stable_retained_sums(uncertainty: np.ndarray, quality: np.ndarray) -> list[float]:
    order = np.argsort(-uncertainty, kind="stable")
    q_sorted = quality[order]
    total = float(quality.sum())
    sums = [total]
    running = total
    for k in range(len(quality)):
        running -= float(q_sorted[k])
        sums.append(running)
    return sums


def rejection_curve(
    uncertainty,
    quality,
    ordering: str = "uncertainty",
    tie_policy: str = TIE_POLICY_EXPECTED,
) -> RejectionCurve:
    u = _as_float_array(uncertainty, "uncertainty")
    q = _as_float_array(quality, "quality")
    if len(u) == 0:
        raise PreconditionError("rejection_curve requires at least one item")
    if len(u) != len(q):
        raise ValidationError(
            f"length mismatch: {len(u)} uncertainty vs {len(q)} quality"
        )
    if tie_policy == TIE_POLICY_EXPECTED:
        sums = _expected_retained_sums(u, q)
    elif tie_policy == TIE_POLICY_STABLE:
        sums = _stable_retained_sums(u, q)
    else:
        raise ValidationError(f"unknown tie policy {tie_policy!r}")
    n = len(u)
    values = [sums[k] / (n - k) for k in range(n)]
    values.append(values[-1])  # empty retained set carries forward
    rhos = tuple(k / n for k in range(n + 1))
    return RejectionCurve(
        rhos=rhos, quality=tuple(values), ordering=ordering, tie_policy=tie_policy
    )


def _signed_area(rhos, values) -> float:
    area = 0.0
    for k in range(len(rhos) - 1):
        area += 0.5 * (values[k] + values[k + 1]) * (rhos[k + 1] - rhos[k])
    return area


def prr(uncertainty, quality, tie_policy: str = TIE_POLICY_EXPECTED) -> float:
    """Prediction rejection ratio.

    Area between the uncertainty-ordered rejection curve and the random
    curve, normalized by the oracle curve (errors rejected first). 1 for
    oracle ordering, 0 for uninformative scores, negative when the score is
    anti-calibrated.
    """
    u = _as_float_array(uncertainty, "uncertainty")
    q = _as_float_array(quality, "quality")
    if len(u) != len(q):
        raise ValidationError(
            f"length mismatch: {len(u)} uncertainty vs {len(q)} quality"
        )
    if len(q) == 0:
        raise PreconditionError("prr requires at least one item")
    if float(q.max() - q.min()) == 0.0:
        raise UndefinedMetricError("prr is undefined for constant quality")
    mean_q = float(q.mean())
    curve = rejection_curve(u, q, tie_policy=tie_policy)
    # oracle rejects the worst-quality items first
    oracle = rejection_curve(-q, q, ordering="oracle", tie_policy=tie_policy)
    num = _signed_area(curve.rhos, [v - mean_q for v in curve.quality])
    den = _signed_area(oracle.rhos, [v - mean_q for v in oracle.quality])
    return num / den


# ---------------------------------------------------------------------------
# Correlations


def _t_pvalue(t: float, df: int) -> float:
    """Two-sided p-value of a t statistic via the regularized incomplete beta."""
    if df <= 0:
        return float("nan")
    x = df / (df + t * t)
    return float(betainc(df / 2.0, 0.5, x))


def point_biserial(binary, continuous) -> tuple[float, float]:
    """Pearson correlation between a binary indicator and a continuous
    variable, with a two-sided t-approximation p-value."""
    y = _as_binary_array(binary, "binary")
    x = _as_float_array(continuous, "continuous")
    if len(y) != len(x):
        raise ValidationError(f"length mismatch: {len(y)} binary vs {len(x)} continuous")
    n = len(y)
    if n < 2:
        raise PreconditionError("point_biserial requires at least two observations")
    if y.min() == y.max():
        raise UndefinedMetricError("point_biserial needs both groups non-empty")
    if x.min() == x.max():
        raise UndefinedMetricError("point_biserial is undefined for constant values")
    yc = y - y.mean()
    xc = x - x.mean()
    r = float((yc * xc).sum() / math.sqrt((yc * yc).sum() * (xc * xc).sum()))
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, _t_pvalue(t, n - 2)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(binary, continuous) -> tuple[float, float]:
    """Rank-based sensitivity check for the primary point-biserial numbers."""
    y = _as_binary_array(binary, "binary")
    x = _as_float_array(continuous, "continuous")
    if y.min() == y.max():
        raise UndefinedMetricError("spearman needs both groups non-empty")
    if x.min() == x.max():
        raise UndefinedMetricError("spearman is undefined for constant values")
    return point_biserial_ranks(_average_ranks(y.astype(float)), _average_ranks(x))


def point_biserial_ranks(ry: np.ndarray, rx: np.ndarray) -> tuple[float, float]:
    n = len(ry)
    yc = ry - ry.mean()
    xc = rx - rx.mean()
    denom = math.sqrt(float((yc * yc).sum()) * float((xc * xc).sum()))
    if denom == 0.0:
        raise UndefinedMetricError("correlation undefined: zero variance")
    r = float((yc * xc).sum()) / denom
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, _t_pvalue(t, n - 2)


# ---------------------------------------------------------------------------
# McFadden pseudo-R^2


SLOPE_CAP = 30.0


def mcfadden_pseudo_r2(x, y, return_flags: bool = False):
    """1 - lnL(model) / lnL(null) for a univariate logistic regression.

    Fitted by deterministic gradient descent from the null optimum, so the
    model likelihood can only improve and the result is always >= 0. On
    separable data the slope is capped at |beta| <= 30 (standardized scale)
    and a separability flag is set.
    """
    xv = _as_float_array(x, "x")
    yv = _as_binary_array(y, "y")
    if len(xv) != len(yv):
        raise ValidationError(f"length mismatch: {len(xv)} x vs {len(yv)} y")
    n = len(yv)
    n_pos = int(yv.sum())
    if n_pos == 0 or n_pos == n:
        raise PreconditionError("mcfadden_pseudo_r2 needs both classes present")
    if xv.min() == xv.max():
        raise PreconditionError("mcfadden_pseudo_r2 is undefined for constant x")

    # standardize x for conditioning; pseudo-R^2 is invariant to affine
    # rescaling of the covariate
    xs = (xv - xv.mean()) / xv.std()
    p0 = n_pos / n
    ll_null = n_pos * math.log(p0) + (n - n_pos) * math.log(1.0 - p0)
    yf = yv.astype(float)

    def mean_nll(a: float, b: float) -> float:
        z = a + b * xs
        return float(np.mean(np.logaddexp(0.0, z) - yf * z))

    # start at the null-model optimum so the likelihood can only improve
    alpha = math.log(p0 / (1.0 - p0))
    beta = 0.0
    step = 1.0
    max_iter = 10_000
    tol = 1e-8
    grad_norm = math.inf
    for _ in range(max_iter):
        resid = expit(alpha + beta * xs) - yf
        g_alpha = float(resid.mean())
        g_beta = float((resid * xs).mean())
        # at the cap only the feasible gradient component counts
        at_cap = (beta >= SLOPE_CAP and g_beta < 0) or (beta <= -SLOPE_CAP and g_beta > 0)
        g_beta_eff = 0.0 if at_cap else g_beta
        grad_norm = math.sqrt(g_alpha * g_alpha + g_beta_eff * g_beta_eff)
        if grad_norm < tol:
            break
        # Armijo backtracking from a doubling initial step keeps descent
        # monotone yet races along the flat likelihood of separable data
        current = mean_nll(alpha, beta)
        step = min(step * 2.0, 1e12)
        while True:
            new_alpha = alpha - step * g_alpha
            new_beta = max(-SLOPE_CAP, min(SLOPE_CAP, beta - step * g_beta_eff))
            if mean_nll(new_alpha, new_beta) <= current - 1e-4 * step * grad_norm**2:
                break
            step *= 0.5
            if step < 1e-18:
                break
        alpha, beta = new_alpha, new_beta
    else:
        raise NumericalError(
            f"logistic fit did not converge: gradient norm {grad_norm:.3e}"
        )
    z = alpha + beta * xs
    ll_model = float(np.sum(yf * z - np.logaddexp(0.0, z)))
    r2 = 1.0 - ll_model / ll_null
    r2 = max(0.0, r2)
    if return_flags:
        # univariate separation is exactly checkable; the MLE slope diverges
        # there and only the cap keeps the fit finite
        x0, x1 = xs[yv == 0], xs[yv == 1]
        separable = bool(x0.max() < x1.min() or x1.max() < x0.min())
        return r2, {"separable": separable, "slope": beta}
    return r2
