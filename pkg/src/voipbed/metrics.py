"""Measurement post-processing: PDD statistics, the CPU-utilization model,
compliance verdicts and report files.

PDD (post dial delay) is the caller-side interval from sending the INVITE
to receiving 180 Ringing; calls that never reached ringing are counted as
failures, never as samples.  CPU utilization is a calibrated model, not an
OS measurement: each server role ships (rate, percent) calibration points
that are interpolated piecewise-linearly, so results are reproducible on
any host.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

from voipbed.profiles import ServerProfile
from voipbed.useragent import CallRecord

# Published reference figures the reports juxtapose against measurements.
# Mean PDD of the via-ENUM scenario (S2) by offered call rate, milliseconds.
S2_REFERENCE_PDD_MS = {0: 108.8, 5: 109.5, 10: 110.4, 15: 114.1, 20: 116.4,
                       25: 118.6, 30: 133.1}
# Max mean PDD of the gateway scenario (S3) at 30 call/s, milliseconds.
S3_REFERENCE_MAX_PDD_MS = 493.656
# Reference ENUM query ceiling, queries/second (hardware-specific).
ENUM_REFERENCE_QPS = 8156.87


class NotMeasurable(Exception):
    """The record has no complete INVITE->180 interval."""


class EmptySampleSet(ValueError):
    pass


@dataclass(frozen=True)
class PddSample:
    milliseconds: float
    scenario: str
    rate: float

    def __post_init__(self) -> None:
        if self.milliseconds < 0:
            raise ValueError("negative PDD")


def compute_pdd(record: CallRecord, scenario: str = "", rate: float = 0.0) -> PddSample:
    """INVITE-sent to 180-received interval; NotMeasurable without both."""
    if record.t_invite_sent is None or record.t_180_received is None:
        raise NotMeasurable(record.call_id)
    return PddSample(
        milliseconds=(record.t_180_received - record.t_invite_sent) * 1000.0,
        scenario=scenario,
        rate=rate,
    )


def pdd_samples(records: Iterable[CallRecord], scenario: str = "",
                rate: float = 0.0) -> list[PddSample]:
    samples = []
    for record in records:
        try:
            samples.append(compute_pdd(record, scenario, rate))
        except NotMeasurable:
            continue
    return samples


@dataclass(frozen=True)
class PddStats:
    mean: float
    min: float
    max: float
    p95: float
    count: int


def aggregate(samples: Sequence[PddSample]) -> PddStats:
    """Mean (3-decimal ms), min, max, nearest-rank p95 and count."""
    if not samples:
        raise EmptySampleSet("no measurable samples")
    values = sorted(s.milliseconds for s in samples)
    n = len(values)
    rank = max(1, -(-95 * n // 100))  # ceil(0.95 n), nearest-rank percentile
    return PddStats(
        mean=round(sum(values) / n, 3),
        min=round(values[0], 3),
        max=round(values[-1], 3),
        p95=round(values[rank - 1], 3),
        count=n,
    )


@dataclass(frozen=True)
class UtilizationEstimate:
    server: str
    rate: float
    percent: float
    overloaded: bool


def estimate_cpu(profile: ServerProfile, rate: float) -> UtilizationEstimate:
    """Piecewise-linear utilization through the profile's calibration points.

    The curve is anchored at (0, 0); beyond the last point it extrapolates
    linearly.  Results clamp to [0, 100].  ``overloaded`` is purely a rate
    comparison against capacity, independent of the percentage.
    """
    if rate < 0:
        raise ValueError("rate must be >= 0")
    curve = ((0.0, 0.0),) + tuple((float(r), float(p)) for r, p in profile.cpu_curve)
    percent = _interpolate(curve, rate)
    return UtilizationEstimate(
        server=profile.role,
        rate=rate,
        percent=min(100.0, max(0.0, percent)),
        overloaded=rate > profile.capacity,
    )


def _interpolate(curve: tuple[tuple[float, float], ...], rate: float) -> float:
    for r, p in curve:
        if rate == r:  # calibration points reproduce exactly, no float drift
            return p
    if rate > curve[-1][0]:
        if len(curve) < 2:
            return curve[-1][1]
        (x0, y0), (x1, y1) = curve[-2], curve[-1]
    else:
        for (x0, y0), (x1, y1) in zip(curve, curve[1:]):
            if x0 < rate < x1:
                break
        else:
            return curve[0][1]
    slope = (y1 - y0) / (x1 - x0)
    return y0 + slope * (rate - x0)


PC_TO_PC = "pc_to_pc"
PC_TO_PSTN = "pc_to_pstn"
PSTN_TO_PC = "pstn_to_pc"


@dataclass(frozen=True)
class ComplianceThresholds:
    """Maximum acceptable PDD per category, seconds, with/without ENUM."""

    category: str
    without_enum: float
    with_enum: float


DEFAULT_THRESHOLDS = {
    PC_TO_PC: ComplianceThresholds(PC_TO_PC, 2.23, 2.25),
    PC_TO_PSTN: ComplianceThresholds(PC_TO_PSTN, 3.79, 4.11),
    PSTN_TO_PC: ComplianceThresholds(PSTN_TO_PC, 3.41, 3.95),
}


def check_compliance(
    pdd: PddSample | float,
    category: str,
    enum_used: bool,
    thresholds: dict[str, ComplianceThresholds] | None = None,
) -> bool:
    """True iff the PDD (sample or milliseconds) meets the category bound."""
    table = thresholds or DEFAULT_THRESHOLDS
    limit = table[category]
    limit_ms = (limit.with_enum if enum_used else limit.without_enum) * 1000.0
    value_ms = pdd.milliseconds if isinstance(pdd, PddSample) else float(pdd)
    return value_ms <= limit_ms


# -- report files ------------------------------------------------------------


def emit_report(results: list, out_dir: str,
                profiles: dict[str, ServerProfile] | None = None) -> list[str]:
    """Write pdd/cpu/failures CSVs plus the text summary and reference
    comparison; returns the paths written.  ``results`` are RunResults."""
    if not results:
        raise ValueError("no results to report")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    pdd_rows = []
    for run in results:
        samples = pdd_samples(run.probe_records(), run.scenario_id, run.rate)
        if samples:
            stats = aggregate(samples)
            pdd_rows.append((run.scenario_id, run.rate, stats.mean, stats.min,
                             stats.max, stats.p95, stats.count))
        else:
            pdd_rows.append((run.scenario_id, run.rate, "", "", "", "", 0))
    path = os.path.join(out_dir, "pdd.csv")
    _write_csv(path, ("scenario", "rate", "mean_ms", "min_ms", "max_ms",
                      "p95_ms", "count"), pdd_rows)
    written.append(path)

    if profiles:
        cpu_rows = []
        for run in results:
            for role in run.server_roles():
                profile = profiles.get(role)
                if profile is None:
                    continue
                est = estimate_cpu(profile, run.rate)
                cpu_rows.append((role, run.rate, est.percent, est.overloaded))
        path = os.path.join(out_dir, "cpu.csv")
        _write_csv(path, ("server", "rate", "percent", "overloaded"), cpu_rows)
        written.append(path)

    failure_rows = [
        (run.scenario_id, run.rate, run.counters.retrans, run.counters.timeout,
         run.counters.unexpected_msg)
        for run in results
    ]
    path = os.path.join(out_dir, "failures.csv")
    _write_csv(path, ("scenario", "rate", "retrans", "timeout", "unexpected"),
               failure_rows)
    written.append(path)

    path = os.path.join(out_dir, "summary.txt")
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(_summary_text(results))
    written.append(path)

    compare = _reference_comparison(results)
    if compare:
        path = os.path.join(out_dir, "paper_compare.txt")
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(compare)
        written.append(path)
    return written


def _write_csv(path: str, header: tuple, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _summary_text(results: list) -> str:
    lines = []
    by_scenario: dict[str, list] = {}
    for run in results:
        by_scenario.setdefault(run.scenario_id, []).append(run)
    for scenario_id in sorted(by_scenario):
        lines.append(f"scenario {scenario_id}")
        lines.append(f"{'rate':>8} {'mean_ms':>10} {'min_ms':>10} {'max_ms':>10} "
                     f"{'p95_ms':>10} {'count':>6} {'retrans':>8} {'timeout':>8} "
                     f"{'shed':>6}")
        for run in sorted(by_scenario[scenario_id], key=lambda r: r.rate):
            samples = pdd_samples(run.probe_records(), run.scenario_id, run.rate)
            if samples:
                stats = aggregate(samples)
                mean, mn, mx, p95, count = (stats.mean, stats.min, stats.max,
                                            stats.p95, stats.count)
            else:
                mean = mn = mx = p95 = float("nan")
                count = 0
            lines.append(
                f"{run.rate:>8g} {mean:>10.3f} {mn:>10.3f} {mx:>10.3f} "
                f"{p95:>10.3f} {count:>6d} {run.counters.retrans:>8d} "
                f"{run.counters.timeout:>8d} {run.counters.shed_observed:>6d}"
            )
        lines.append("")
    return "\n".join(lines) + "\n"


def _reference_comparison(results: list) -> str:
    """Measured means against the published reference values, where defined."""
    lines = []
    s2_runs = sorted((r for r in results if r.scenario_id == "s2"),
                     key=lambda r: r.rate)
    if s2_runs:
        lines.append("scenario s2 (via ENUM): measured mean PDD vs reference")
        lines.append(f"{'rate':>6} {'measured_ms':>12} {'reference_ms':>13}")
        for run in s2_runs:
            samples = pdd_samples(run.probe_records(), run.scenario_id, run.rate)
            measured = f"{aggregate(samples).mean:.3f}" if samples else "n/a"
            ref = S2_REFERENCE_PDD_MS.get(int(run.rate))
            ref_text = f"{ref:.1f}" if ref is not None else "n/a"
            lines.append(f"{run.rate:>6g} {measured:>12} {ref_text:>13}")
        lines.append("")
    s3_runs = [r for r in results if r.scenario_id == "s3" and int(r.rate) == 30]
    for run in s3_runs:
        samples = pdd_samples(run.probe_records(), run.scenario_id, run.rate)
        if samples:
            stats = aggregate(samples)
            lines.append(
                "scenario s3 at 30 call/s: measured mean "
                f"{stats.mean:.3f} ms / max {stats.max:.3f} ms "
                f"(reference max {S3_REFERENCE_MAX_PDD_MS} ms)"
            )
            lines.append("")
    return "\n".join(lines) + "\n" if lines else ""
