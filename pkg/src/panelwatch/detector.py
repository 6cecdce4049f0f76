"""Combined SR-CUSUM detection across N parallel panels.

Each panel keeps a Shiryayev-Roberts statistic and a CUSUM statistic for
the same reference drift delta.  The alarm is driven by the sum of the SR
statistics crossing a limit B; the per-panel CUSUM values and their last
zero times are the evidence handed to isolation afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

OVERSHOOT_RHO = 0.5826


class DetectorStateError(RuntimeError):
    """Raised when alarm-time operations are invoked on inconsistent state."""


def calibrate_limit(delta: float, n_panels: int, target_arl0: float) -> float:
    """Alarm limit B giving an in-control average run length of target_arl0.

    Inverts the small-drift approximation ARL0 ~ (B/N) * exp(rho*delta):
    B = N * ARL0 * exp(-rho*delta) with rho = 0.5826.
    """
    if not (delta >= 0.0 and math.isfinite(delta)):
        raise ValueError(f"delta must be nonnegative, got {delta}")
    if n_panels < 1:
        raise ValueError(f"n_panels must be >= 1, got {n_panels}")
    if not (target_arl0 > 0.0 and math.isfinite(target_arl0)):
        raise ValueError(f"target_arl0 must be positive, got {target_arl0}")
    return n_panels * target_arl0 * math.exp(-OVERSHOOT_RHO * delta)


@dataclass(frozen=True)
class DetectorConfig:
    """Reference drift, panel count, alarm limit and FDR level.

    ``alarm_limit`` may be omitted when ``target_arl0`` is given; it is
    then derived by :func:`calibrate_limit`.
    """

    delta: float
    n_panels: int
    alarm_limit: float | None = None
    target_arl0: float | None = None
    fdr_level: float = 0.2

    def __post_init__(self) -> None:
        if not (self.delta > 0.0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be a positive real, got {self.delta}")
        if self.n_panels < 1:
            raise ValueError(f"n_panels must be >= 1, got {self.n_panels}")
        if not (0.0 < self.fdr_level < 1.0):
            raise ValueError(f"fdr_level must lie in (0, 1), got {self.fdr_level}")
        if self.alarm_limit is None:
            if self.target_arl0 is None:
                raise ValueError("either alarm_limit or target_arl0 must be given")
            object.__setattr__(
                self,
                "alarm_limit",
                calibrate_limit(self.delta, self.n_panels, self.target_arl0),
            )
        if not (self.alarm_limit > 0.0 and math.isfinite(self.alarm_limit)):
            raise ValueError(f"alarm_limit must be positive, got {self.alarm_limit}")


@dataclass(frozen=True)
class PanelState:
    """One panel's SR value, CUSUM value and last CUSUM zero at time t."""

    sr_value: float = 0.0
    cusum_value: float = 0.0
    last_zero: int = 0
    t: int = 0


def fresh_panels(n_panels: int) -> list[PanelState]:
    """Initial states at t = 0 (SR and CUSUM both zero)."""
    return [PanelState() for _ in range(n_panels)]


def _check_observation(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"observation must be finite, got {x}")
    return x


def update_sr(state: PanelState, x: float, delta: float) -> PanelState:
    """One SR step: R_t = (1 + R_{t-1}) * exp(delta*x - delta^2/2).

    Advances the panel clock; CUSUM fields are untouched.
    """
    x = _check_observation(x)
    sr = (1.0 + state.sr_value) * math.exp(delta * x - 0.5 * delta * delta)
    return replace(state, sr_value=sr, t=state.t + 1)


def update_cusum(state: PanelState, x: float, delta: float) -> PanelState:
    """One CUSUM step: T_t = max(0, T_{t-1} + x - delta/2).

    Advances the panel clock; when the statistic is floored at zero the
    last-zero marker moves to the new time.
    """
    x = _check_observation(x)
    t = state.t + 1
    cusum = max(0.0, state.cusum_value + x - 0.5 * delta)
    last_zero = t if cusum == 0.0 else state.last_zero
    return replace(state, cusum_value=cusum, last_zero=last_zero, t=t)


def _step_panel(state: PanelState, x: float, delta: float) -> PanelState:
    # Single fused time step: both recursions, one clock increment.
    x = _check_observation(x)
    t = state.t + 1
    sr = (1.0 + state.sr_value) * math.exp(delta * x - 0.5 * delta * delta)
    cusum = max(0.0, state.cusum_value + x - 0.5 * delta)
    last_zero = t if cusum == 0.0 else state.last_zero
    return PanelState(sr_value=sr, cusum_value=cusum, last_zero=last_zero, t=t)


def step_all(
    panels: Sequence[PanelState],
    observations: Sequence[float],
    config: DetectorConfig,
) -> tuple[list[PanelState], float, bool]:
    """Advance every panel by one observation and test the combined alarm.

    Returns the new states, the combined SR statistic (sum over panels)
    and whether it strictly exceeds the alarm limit.
    """
    if len(observations) != len(panels):
        raise ValueError(
            f"expected {len(panels)} observations, got {len(observations)}"
        )
    new_panels = [
        _step_panel(state, x, config.delta) for state, x in zip(panels, observations)
    ]
    global_sr = math.fsum(p.sr_value for p in new_panels)
    return new_panels, global_sr, global_sr > config.alarm_limit


@dataclass(frozen=True)
class PanelEvidence:
    """Alarm-time evidence for one panel.

    ``post_mean`` is None exactly when the CUSUM is at zero at the alarm
    (changepoint == tau), where the estimate T/(tau - nu) + delta/2 is
    undefined.
    """

    panel: int
    cusum_value: float
    changepoint: int
    post_mean: float | None

    def to_dict(self) -> dict:
        return {
            "panel": self.panel,
            "cusum_value": self.cusum_value,
            "changepoint": self.changepoint,
            "post_mean": self.post_mean,
        }


@dataclass(frozen=True)
class AlarmReport:
    """Snapshot taken when the combined statistic crosses the limit."""

    tau: int
    global_sr: float
    panel_stats: tuple[PanelEvidence, ...]

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "global_sr": self.global_sr,
            "panel_stats": [s.to_dict() for s in self.panel_stats],
        }


def snapshot_alarm(
    panels: Sequence[PanelState], tau: int, delta: float
) -> AlarmReport:
    """Per-panel evidence at the alarm time tau.

    The changepoint estimate is the panel's last CUSUM zero; the
    post-change mean estimate is T/(tau - changepoint) + delta/2 and is
    omitted when the CUSUM is zero at tau.
    """
    if tau < 1:
        raise DetectorStateError(f"alarm time must be >= 1, got {tau}")
    for i, state in enumerate(panels):
        if state.t != tau:
            raise DetectorStateError(
                f"panel {i} is at t={state.t}, cannot snapshot at tau={tau}"
            )
    stats = []
    for i, state in enumerate(panels):
        nu_hat = state.last_zero
        if tau > nu_hat:
            mu_hat = state.cusum_value / (tau - nu_hat) + 0.5 * delta
        else:
            mu_hat = None
        stats.append(
            PanelEvidence(
                panel=i,
                cusum_value=state.cusum_value,
                changepoint=nu_hat,
                post_mean=mu_hat,
            )
        )
    global_sr = math.fsum(p.sr_value for p in panels)
    return AlarmReport(tau=tau, global_sr=global_sr, panel_stats=tuple(stats))


@dataclass(frozen=True)
class DetectionOutcome:
    """Result of driving a detector over a finite stream."""

    alarmed: bool
    t_final: int
    global_sr: float
    panels: tuple[PanelState, ...]
    report: AlarmReport | None


def run_detection(
    observations: Iterable[Sequence[float]], config: DetectorConfig
) -> DetectionOutcome:
    """Feed time slices to the detector until the alarm fires or the stream ends."""
    panels = fresh_panels(config.n_panels)
    global_sr = 0.0
    t = 0
    for row in observations:
        panels, global_sr, alarmed = step_all(panels, row, config)
        t += 1
        if alarmed:
            report = snapshot_alarm(panels, t, config.delta)
            return DetectionOutcome(
                alarmed=True,
                t_final=t,
                global_sr=global_sr,
                panels=tuple(panels),
                report=report,
            )
    return DetectionOutcome(
        alarmed=False,
        t_final=t,
        global_sr=global_sr,
        panels=tuple(panels),
        report=None,
    )
