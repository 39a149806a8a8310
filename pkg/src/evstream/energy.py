"""Power traces, energy integration and energy-per-message accounting.

Power comes either from a replayed meter trace (CSV ``t_s,power_w``) or from
a synthetic model in which system power rises linearly with utilisation
between an idle and a saturated draw.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

from .errors import DegenerateInput, InvalidModel, NonMonotonicTime, TooFewSamples


class PowerSample(NamedTuple):
    t_s: float
    power_w: float


def _check(samples: Sequence[PowerSample]) -> None:
    if len(samples) < 2:
        raise TooFewSamples(f"need at least 2 samples, got {len(samples)}")
    prev = None
    for t, p in samples:
        if not (math.isfinite(p) and p >= 0):
            raise ValueError(f"power must be finite and >= 0, got {p}")
        if prev is not None and not t > prev:
            raise NonMonotonicTime(f"sample times must strictly increase ({prev} then {t})")
        prev = t


def integrate(samples: Sequence[PowerSample]) -> float:
    """Trapezoidal energy in joules between the first and last sample."""
    _check(samples)
    total = 0.0
    t0, p0 = samples[0]
    for t1, p1 in samples[1:]:
        total += (t1 - t0) * (p0 + p1) / 2.0
        t0, p0 = t1, p1
    return total


@dataclass(frozen=True)
class SyntheticPowerModel:
    p_idle_w: float
    p_max_w: float
    capacity_msgs_per_s: float

    def __post_init__(self):
        if not self.p_idle_w > 0:
            raise InvalidModel("p_idle_w must be > 0")
        if not self.p_max_w >= self.p_idle_w:
            raise InvalidModel("p_max_w must be >= p_idle_w")
        if not self.capacity_msgs_per_s > 0:
            raise InvalidModel("capacity must be > 0")

    def power_at(self, rate: float) -> float:
        utilisation = min(max(rate, 0.0) / self.capacity_msgs_per_s, 1.0)
        return self.p_idle_w + (self.p_max_w - self.p_idle_w) * utilisation

    @classmethod
    def parse(cls, text: str) -> "SyntheticPowerModel":
        """Parse ``"p_idle,p_max,capacity"``."""
        try:
            p_idle, p_max, cap = (float(x) for x in text.split(","))
        except ValueError:
            raise InvalidModel(f"expected p_idle,p_max,capacity, got {text!r}") from None
        return cls(p_idle, p_max, cap)


def synthesize_trace(model: SyntheticPowerModel, achieved_rate: float, duration_s: float, sample_hz: float) -> list[PowerSample]:
    """Constant-power trace at ``sample_hz`` spanning exactly ``[0, duration_s]``."""
    if not isinstance(model, SyntheticPowerModel):
        raise InvalidModel("model must be a SyntheticPowerModel")
    if not sample_hz > 0:
        raise InvalidModel("sample_hz must be > 0")
    if not duration_s > 0:
        raise InvalidModel("duration_s must be > 0")
    p = model.power_at(achieved_rate)
    n = int(math.floor(duration_s * sample_hz + 1e-9))
    out = [PowerSample(k / sample_hz, p) for k in range(n + 1)]
    if out[-1].t_s < duration_s - 1e-12:
        out.append(PowerSample(duration_s, p))
    return out


@dataclass(frozen=True)
class EnergyReport:
    joules_total: float
    joules_baseline: float
    messages_delivered: int
    joules_per_message: Optional[float]
    rate: Optional[float] = None
    size_bytes: Optional[int] = None
    profile: Optional[str] = None

    @property
    def flagged(self) -> bool:
        """True when no message was delivered and the per-message cost is undefined."""
        return self.joules_per_message is None


def energy_per_message(
    samples: Sequence[PowerSample],
    messages_delivered: int,
    baseline_w: Optional[float] = None,
    *,
    rate: Optional[float] = None,
    size_bytes: Optional[int] = None,
    profile: Optional[str] = None,
) -> EnergyReport:
    if messages_delivered < 0:
        raise ValueError("messages_delivered must be >= 0")
    total = integrate(samples)
    baseline = 0.0 if baseline_w is None else baseline_w * (samples[-1].t_s - samples[0].t_s)
    jpm = (total - baseline) / messages_delivered if messages_delivered else None
    return EnergyReport(total, baseline, messages_delivered, jpm, rate, size_bytes, profile)


def fit_linear(points: Iterable[tuple[float, float]]) -> tuple[float, float, float]:
    """Least-squares line through ``(rate, watts)`` points: ``(slope, intercept, r2)``."""
    pts = list(points)
    xs = [float(x) for x, _ in pts]
    ys = [float(y) for _, y in pts]
    if len(set(xs)) < 2:
        raise DegenerateInput("need at least two distinct rates")
    slope, intercept = statistics.linear_regression(xs, ys)
    mean_y = statistics.fmean(ys)
    ss_tot = sum((y - mean_y) ** 2 for y in ys)
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


# -- trace files --------------------------------------------------------------

TRACE_HEADER = ["t_s", "power_w"]


def read_trace(path) -> list[PowerSample]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACE_HEADER:
            raise ValueError(f"{path}: expected header t_s,power_w, got {header}")
        samples = [PowerSample(float(t), float(p)) for t, p in reader]
    _check(samples)
    return samples


def write_trace(path, samples: Iterable[PowerSample]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for t, p in samples:
            w.writerow([repr(float(t)), repr(float(p))])


def _interp(samples: Sequence[PowerSample], t: float) -> float:
    for (t0, p0), (t1, p1) in zip(samples, samples[1:]):
        if t0 <= t <= t1:
            return p0 + (p1 - p0) * (t - t0) / (t1 - t0)
    raise ValueError(f"time {t} outside trace")


def slice_trace(samples: Sequence[PowerSample], t_start: float, t_end: float) -> list[PowerSample]:
    """Cut ``[t_start, t_end]`` out of a trace, interpolating at the edges.

    Times are shifted so the slice starts at 0.
    """
    _check(samples)
    if not (samples[0].t_s <= t_start < t_end <= samples[-1].t_s):
        raise ValueError(f"window [{t_start}, {t_end}] not covered by trace")
    out = [PowerSample(0.0, _interp(samples, t_start))]
    out += [PowerSample(t - t_start, p) for t, p in samples if t_start < t < t_end]
    out.append(PowerSample(t_end - t_start, _interp(samples, t_end)))
    return out


# -- report -------------------------------------------------------------------

REPORT_HEADER = ["rate", "size_bytes", "profile", "achieved_rate", "joules_total", "joules_per_message", "p50_ns", "p99_ns"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_row(report: EnergyReport, achieved_rate: float, p50_ns, p99_ns) -> list[str]:
    return [
        _fmt(report.rate), _fmt(report.size_bytes), _fmt(report.profile), _fmt(float(achieved_rate)),
        _fmt(report.joules_total), _fmt(report.joules_per_message), _fmt(p50_ns), _fmt(p99_ns),
    ]


def write_report(path, rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for row in rows:
            w.writerow(row)


def read_report(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
