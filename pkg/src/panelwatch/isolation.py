"""Isolation of changed panels after the alarm.

Alarm-time CUSUM values are turned into p-values under the
corrected-exponential null, a BH step-up at FDR level alpha picks the
changed panels, and their changepoint estimates are pooled into a common
changepoint estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .detector import OVERSHOOT_RHO, AlarmReport


@dataclass(frozen=True)
class IsolationResult:
    """Selected panels with their p-values and pooled changepoint estimates.

    ``selected`` holds the 0-based indices of the ``k_hat`` panels with
    the smallest p-values, in panel order.  The pooled estimates are None
    when nothing is selected.
    """

    pvalues: tuple[float, ...]
    k_hat: int
    selected: tuple[int, ...]
    nu_median: float | None
    nu_mean: float | None

    def to_dict(self) -> dict:
        return {
            "pvalues": list(self.pvalues),
            "k_hat": self.k_hat,
            "selected": list(self.selected),
            "nu_median": self.nu_median,
            "nu_mean": self.nu_mean,
        }


def pvalues(report: AlarmReport, delta: float) -> list[float]:
    """Per-panel p-values p_i = exp(-delta * (T_i + rho)) at the alarm.

    T_i is the panel's alarm-time CUSUM value; rho = 0.5826 is the
    overshoot correction, so a zero CUSUM maps to the largest attainable
    p-value exp(-delta*rho).
    """
    if not (delta > 0.0 and math.isfinite(delta)):
        raise ValueError(f"delta must be a positive real, got {delta}")
    out = []
    for stat in report.panel_stats:
        if stat.cusum_value < 0.0:
            raise ValueError(
                f"panel {stat.panel} has negative CUSUM {stat.cusum_value}"
            )
        out.append(math.exp(-delta * (stat.cusum_value + OVERSHOOT_RHO)))
    return out


def bh_select(pvals, alpha: float) -> IsolationResult:
    """BH step-up with strict inequality: K = max{i >= 1 : p_(i) < alpha*i/N}.

    The selected set is the K smallest p-values; ties are broken by panel
    index.  Pooled changepoint fields are left unset; see
    :func:`aggregate_changepoint`.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    p = np.asarray(pvals, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("pvalues must be a nonempty 1-d sequence")
    if np.any(p <= 0.0) or np.any(p > 1.0):
        raise ValueError("pvalues must lie in (0, 1]")
    n = p.size
    order = np.argsort(p, kind="stable")
    thresholds = alpha * np.arange(1, n + 1) / n
    passing = np.nonzero(p[order] < thresholds)[0]
    k_hat = int(passing[-1]) + 1 if passing.size else 0
    selected = tuple(sorted(int(i) for i in order[:k_hat]))
    return IsolationResult(
        pvalues=tuple(float(v) for v in p),
        k_hat=k_hat,
        selected=selected,
        nu_median=None,
        nu_mean=None,
    )


def aggregate_changepoint(
    report: AlarmReport, selection: IsolationResult
) -> tuple[float | None, float | None]:
    """Pooled (median, mean) of the selected panels' changepoint estimates.

    The median is interpolated: with an even number of selected panels it
    is the average of the two middle values.  Both are None when the
    selection is empty.
    """
    if not selection.selected:
        return None, None
    values = sorted(report.panel_stats[i].changepoint for i in selection.selected)
    k = len(values)
    if k % 2 == 1:
        median = float(values[k // 2])
    else:
        median = 0.5 * (values[k // 2 - 1] + values[k // 2])
    return median, sum(values) / k


def isolate(report: AlarmReport, delta: float, alpha: float) -> IsolationResult:
    """Full post-alarm pipeline: p-values, BH selection, pooled changepoint."""
    result = bh_select(pvalues(report, delta), alpha)
    nu_median, nu_mean = aggregate_changepoint(report, result)
    return replace(result, nu_median=nu_median, nu_mean=nu_mean)
