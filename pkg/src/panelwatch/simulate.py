"""Seeded Monte Carlo harness for the detect -> isolate -> estimate pipeline.

A scenario fixes N panels of which the first K shift from N(0, 1) to
N(mu, 1) after a common changepoint nu.  Each replication owns an
independent RNG stream derived from (seed, rep_index), runs detection to
the alarm (or a horizon), and, when the change is detected (tau > nu),
applies BH isolation at every FDR level in the grid.  Replications are
aggregated in a fixed order so repeated runs are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Iterator

import numpy as np

from .detector import (
    AlarmReport,
    DetectorConfig,
    PanelState,
    calibrate_limit,
    snapshot_alarm,
)
from .isolation import IsolationResult, aggregate_changepoint, bh_select, pvalues

_CHUNK_STEPS = 128


class EmptyExperimentError(RuntimeError):
    """No replication produced a usable (non-censored, tau > nu) alarm."""


@dataclass(frozen=True)
class Scenario:
    """Monte Carlo scenario: panel layout, change, detector and run sizes.

    ``max_horizon`` defaults to nu + 20 * target_arl0; replications that
    reach it without an alarm are reported as censored, never dropped
    silently.
    """

    n_panels: int
    k_changed: int
    nu: int
    mu: float
    delta: float
    target_arl0: float
    alpha_grid: tuple[float, ...] = (0.2, 0.3, 0.4, 0.5)
    replications: int = 1000
    seed: int = 0
    max_horizon: int | None = None

    def __post_init__(self) -> None:
        if self.n_panels < 1:
            raise ValueError(f"n_panels must be >= 1, got {self.n_panels}")
        if not (0 <= self.k_changed <= self.n_panels):
            raise ValueError(
                f"k_changed must lie in [0, {self.n_panels}], got {self.k_changed}"
            )
        if self.nu < 0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")
        if not (self.delta > 0.0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be a positive real, got {self.delta}")
        if not (self.target_arl0 > 0.0 and math.isfinite(self.target_arl0)):
            raise ValueError(f"target_arl0 must be positive, got {self.target_arl0}")
        if not self.alpha_grid:
            raise ValueError("alpha_grid must be nonempty")
        for a in self.alpha_grid:
            if not (0.0 < a < 1.0):
                raise ValueError(f"alpha values must lie in (0, 1), got {a}")
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        if self.max_horizon is None:
            object.__setattr__(
                self, "max_horizon", int(self.nu + 20 * self.target_arl0)
            )
        if self.max_horizon <= self.nu:
            raise ValueError(
                f"max_horizon must exceed nu, got {self.max_horizon} <= {self.nu}"
            )

    def alarm_limit(self) -> float:
        return calibrate_limit(self.delta, self.n_panels, self.target_arl0)

    def detector_config(self) -> DetectorConfig:
        return DetectorConfig(
            delta=self.delta,
            n_panels=self.n_panels,
            target_arl0=self.target_arl0,
            fdr_level=self.alpha_grid[0],
        )


def scenario_from_dict(data: dict) -> Scenario:
    """Build a Scenario from a parsed config mapping, rejecting unknown keys."""
    known = set(Scenario.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
    required = {"n_panels", "k_changed", "nu", "mu", "delta", "target_arl0"}
    missing = required - set(data)
    if missing:
        raise ValueError(f"missing scenario fields: {sorted(missing)}")
    data = dict(data)
    if "alpha_grid" in data:
        data["alpha_grid"] = tuple(data["alpha_grid"])
    return Scenario(**data)


def _replication_rng(scenario: Scenario, rep_index: int) -> np.random.Generator:
    # One independent, reproducible stream per replication; safe to run
    # replications in any order or in parallel.
    return np.random.default_rng([scenario.seed, rep_index])


def _observation_chunks(
    scenario: Scenario, rep_index: int
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (start_time, block) pairs covering times 1..max_horizon.

    Row r of a block started at t0 is the observation vector at time
    t0 + r + 1.  The first k_changed panels gain mu after time nu.
    """
    rng = _replication_rng(scenario, rep_index)
    t0 = 0
    while t0 < scenario.max_horizon:
        steps = min(_CHUNK_STEPS, scenario.max_horizon - t0)
        block = rng.standard_normal((steps, scenario.n_panels))
        if scenario.k_changed > 0 and scenario.mu != 0.0:
            first_post = scenario.nu - t0
            if first_post < steps:
                block[max(0, first_post):, : scenario.k_changed] += scenario.mu
        yield t0, block
        t0 += steps


def gen_replication(scenario: Scenario, rep_index: int) -> Iterator[np.ndarray]:
    """Lazy observation stream for one replication, one time slice per step."""
    for _, block in _observation_chunks(scenario, rep_index):
        yield from block


def _detect(scenario: Scenario, rep_index: int):
    """Run the combined SR-CUSUM detector over one replication's stream.

    Array-based equivalent of repeated ``detector.step_all`` calls
    (cross-checked in the test suite).  Returns (tau, sr, cusum,
    last_zero); tau is None when the horizon was reached first.
    """
    delta = scenario.delta
    limit = scenario.alarm_limit()
    n = scenario.n_panels
    sr = np.zeros(n)
    cusum = np.zeros(n)
    last_zero = np.zeros(n, dtype=np.int64)
    t = 0
    for t0, block in _observation_chunks(scenario, rep_index):
        weights = np.exp(delta * block - 0.5 * delta * delta)
        increments = block - 0.5 * delta
        for r in range(block.shape[0]):
            t += 1
            sr = (1.0 + sr) * weights[r]
            cusum += increments[r]
            np.maximum(cusum, 0.0, out=cusum)
            last_zero[cusum == 0.0] = t
            if sr.sum() > limit:
                return t, sr, cusum, last_zero
    return None, sr, cusum, last_zero


@dataclass(frozen=True)
class AlphaOutcome:
    """Isolation outcome of one replication at one FDR level.

    fdr is |selected unchanged panels| / max(k_hat, 1); fnr is
    |missed changed panels| / K, or None when the scenario has K = 0.
    """

    alpha: float
    isolation: IsolationResult
    fdr: float
    fnr: float | None


@dataclass(frozen=True)
class ReplicationRecord:
    """One replication: alarm time, alarm snapshot, per-alpha isolation.

    ``outcomes`` is present only when the change was detected
    (tau > nu); ``report`` whenever an alarm fired at all.
    """

    rep_index: int
    tau: int | None
    censored: bool
    false_alarm: bool
    report: AlarmReport | None
    outcomes: tuple[AlphaOutcome, ...] | None


def run_replication(scenario: Scenario, rep_index: int) -> ReplicationRecord:
    """Generate, detect and (when tau > nu) isolate for one replication."""
    tau, sr, cusum, last_zero = _detect(scenario, rep_index)
    if tau is None:
        return ReplicationRecord(
            rep_index=rep_index,
            tau=None,
            censored=True,
            false_alarm=False,
            report=None,
            outcomes=None,
        )
    panels = [
        PanelState(
            sr_value=float(sr[i]),
            cusum_value=float(cusum[i]),
            last_zero=int(last_zero[i]),
            t=tau,
        )
        for i in range(scenario.n_panels)
    ]
    report = snapshot_alarm(panels, tau, scenario.delta)
    if tau <= scenario.nu:
        return ReplicationRecord(
            rep_index=rep_index,
            tau=tau,
            censored=False,
            false_alarm=True,
            report=report,
            outcomes=None,
        )
    changed = frozenset(range(scenario.k_changed))
    pv = pvalues(report, scenario.delta)
    outcomes = []
    for alpha in scenario.alpha_grid:
        selection = bh_select(pv, alpha)
        nu_median, nu_mean = aggregate_changepoint(report, selection)
        selection = replace(selection, nu_median=nu_median, nu_mean=nu_mean)
        picked = frozenset(selection.selected)
        fdr = len(picked - changed) / max(selection.k_hat, 1)
        fnr = (
            len(changed - picked) / scenario.k_changed
            if scenario.k_changed > 0
            else None
        )
        outcomes.append(
            AlphaOutcome(alpha=alpha, isolation=selection, fdr=fdr, fnr=fnr)
        )
    return ReplicationRecord(
        rep_index=rep_index,
        tau=tau,
        censored=False,
        false_alarm=False,
        report=report,
        outcomes=tuple(outcomes),
    )


@dataclass(frozen=True)
class _AlphaSummary:
    k_hat: int
    fdr: float
    fnr: float | None
    nu_median: float | None
    nu_mean: float | None


@dataclass(frozen=True)
class _ReplicationSummary:
    """What aggregation keeps per replication once the record is reduced."""

    rep_index: int
    tau: int | None
    censored: bool
    false_alarm: bool
    per_alpha: tuple[_AlphaSummary, ...] | None


def _summarize(record: ReplicationRecord) -> _ReplicationSummary:
    per_alpha = None
    if record.outcomes is not None:
        per_alpha = tuple(
            _AlphaSummary(
                k_hat=o.isolation.k_hat,
                fdr=o.fdr,
                fnr=o.fnr,
                nu_median=o.isolation.nu_median,
                nu_mean=o.isolation.nu_mean,
            )
            for o in record.outcomes
        )
    return _ReplicationSummary(
        rep_index=record.rep_index,
        tau=record.tau,
        censored=record.censored,
        false_alarm=record.false_alarm,
        per_alpha=per_alpha,
    )


@dataclass(frozen=True)
class AlphaMetrics:
    """Aggregated isolation metrics at one FDR level.

    Biases are means of the per-replication pooled estimates minus nu,
    over detected replications with a nonempty selection
    (``selection_count`` of them).  Standard errors are sample std over
    sqrt(count) and None when fewer than two values contribute.
    """

    alpha: float
    fdr: float
    fdr_se: float | None
    fnr: float | None
    fnr_se: float | None
    median_bias: float | None
    median_bias_se: float | None
    mean_bias: float | None
    mean_bias_se: float | None
    e_k_hat: float
    e_k_hat_se: float | None
    selection_count: int


@dataclass(frozen=True)
class ScenarioMetrics:
    """Scenario-level aggregates over all replications.

    far is P(tau <= nu) over every non-censored replication; cadt and the
    per-alpha metrics condition on detection (tau > nu,
    ``detected_count`` replications).
    """

    scenario: Scenario
    far: float
    far_se: float | None
    cadt: float
    cadt_se: float | None
    detected_count: int
    censored_count: int
    per_alpha: tuple[AlphaMetrics, ...]

    def to_dict(self) -> dict:
        data = asdict(self)
        data["alarm_limit"] = self.scenario.alarm_limit()
        return data


def _mean_se(values) -> tuple[float, float | None]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, None
    return mean, float(arr.std(ddof=1) / math.sqrt(arr.size))


def _aggregate(summaries, scenario: Scenario) -> ScenarioMetrics:
    # Canonical reduction order: sort by rep_index so the floating-point
    # result does not depend on execution order.
    summaries = sorted(summaries, key=lambda s: s.rep_index)
    censored_count = sum(s.censored for s in summaries)
    far_flags = [1.0 if s.false_alarm else 0.0 for s in summaries]
    far, far_se = _mean_se(far_flags)
    detected = [s for s in summaries if s.per_alpha is not None]
    if not detected:
        raise EmptyExperimentError(
            "no replication detected the change (tau > nu) before the horizon"
        )
    cadt, cadt_se = _mean_se([s.tau - scenario.nu for s in detected])
    per_alpha = []
    for j, alpha in enumerate(scenario.alpha_grid):
        cells = [s.per_alpha[j] for s in detected]
        e_k_hat, e_k_hat_se = _mean_se([c.k_hat for c in cells])
        fdr, fdr_se = _mean_se([c.fdr for c in cells])
        if scenario.k_changed > 0:
            fnr, fnr_se = _mean_se([c.fnr for c in cells])
        else:
            fnr, fnr_se = None, None
        with_selection = [c for c in cells if c.k_hat > 0]
        if with_selection:
            median_bias, median_bias_se = _mean_se(
                [c.nu_median - scenario.nu for c in with_selection]
            )
            mean_bias, mean_bias_se = _mean_se(
                [c.nu_mean - scenario.nu for c in with_selection]
            )
        else:
            median_bias = median_bias_se = mean_bias = mean_bias_se = None
        per_alpha.append(
            AlphaMetrics(
                alpha=alpha,
                fdr=fdr,
                fdr_se=fdr_se,
                fnr=fnr,
                fnr_se=fnr_se,
                median_bias=median_bias,
                median_bias_se=median_bias_se,
                mean_bias=mean_bias,
                mean_bias_se=mean_bias_se,
                e_k_hat=e_k_hat,
                e_k_hat_se=e_k_hat_se,
                selection_count=len(with_selection),
            )
        )
    return ScenarioMetrics(
        scenario=scenario,
        far=far,
        far_se=far_se,
        cadt=cadt,
        cadt_se=cadt_se,
        detected_count=len(detected),
        censored_count=censored_count,
        per_alpha=tuple(per_alpha),
    )


def run_experiment(scenario: Scenario) -> ScenarioMetrics:
    """Run every replication and aggregate the scenario metrics."""
    summaries = [
        _summarize(run_replication(scenario, i)) for i in range(scenario.replications)
    ]
    return _aggregate(summaries, scenario)


_ROW_FIELDS = (
    "n_panels,k_changed,nu,mu,delta,target_arl0,alarm_limit,replications,"
    "alpha,detected,censored,far,far_se,cadt,cadt_se,fdr,fdr_se,fnr,fnr_se,"
    "median_bias,median_bias_se,mean_bias,mean_bias_se,e_k_hat,e_k_hat_se"
).split(",")


def metrics_rows(metrics: ScenarioMetrics) -> list[dict]:
    """Flatten metrics into one row per alpha for CSV output."""
    s = metrics.scenario
    rows = []
    for cell in metrics.per_alpha:
        rows.append(
            {
                "n_panels": s.n_panels,
                "k_changed": s.k_changed,
                "nu": s.nu,
                "mu": s.mu,
                "delta": s.delta,
                "target_arl0": s.target_arl0,
                "alarm_limit": s.alarm_limit(),
                "replications": s.replications,
                "alpha": cell.alpha,
                "detected": metrics.detected_count,
                "censored": metrics.censored_count,
                "far": metrics.far,
                "far_se": metrics.far_se,
                "cadt": metrics.cadt,
                "cadt_se": metrics.cadt_se,
                "fdr": cell.fdr,
                "fdr_se": cell.fdr_se,
                "fnr": cell.fnr,
                "fnr_se": cell.fnr_se,
                "median_bias": cell.median_bias,
                "median_bias_se": cell.median_bias_se,
                "mean_bias": cell.mean_bias,
                "mean_bias_se": cell.mean_bias_se,
                "e_k_hat": cell.e_k_hat,
                "e_k_hat_se": cell.e_k_hat_se,
            }
        )
    return rows
