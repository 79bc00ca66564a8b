"""Power-trace analysis and the batched-inference latency model.

Traces are uniformly sampled (voltage, current) pairs; instantaneous
power is their product. Per-frame energy integrates power over a time
window with the trapezoid rule and divides by the frames processed in it.
The latency model captures the real-time batching trade-off: a batch of B
frames takes B * frame_period to fill, then one inference pass; the batch
is serviceable in real time iff inference finishes before the next batch
is full.

Power CSV: header ``t_s,voltage_v,current_a``, one sample per row.
Latency table CSV: header ``batch_size,latency_ms``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Sequence, Union

import numpy as np

from .errors import (
    EmptyTrace,
    MissingInput,
    NegativeVoltage,
    NonUniformSampling,
    TraceTooShort,
    WindowOutOfRange,
    ZeroFrames,
)

DEFAULT_FRAME_PERIOD_US = 33_333
DEFAULT_SMOOTH_WINDOW = 10


@dataclass(frozen=True)
class PowerTrace:
    sample_period: float  # seconds
    voltage: np.ndarray   # volts
    current: np.ndarray   # amperes

    def __post_init__(self):
        if self.sample_period <= 0:
            raise ValueError(f"sample_period must be positive, got {self.sample_period}")
        v = np.asarray(self.voltage, dtype=np.float64)
        c = np.asarray(self.current, dtype=np.float64)
        if v.shape != c.shape or v.ndim != 1 or v.size == 0:
            raise ValueError("voltage and current must be equal-length non-empty 1D arrays")
        if np.any(v < 0):
            raise NegativeVoltage(f"sample {int(np.argmax(v < 0))} has voltage < 0")
        v.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "voltage", v)
        object.__setattr__(self, "current", c)

    def __len__(self) -> int:
        return int(self.voltage.size)

    @property
    def power(self) -> np.ndarray:
        """Instantaneous power in watts."""
        return self.voltage * self.current

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.sample_period

    @property
    def duration(self) -> float:
        return (len(self) - 1) * self.sample_period


def load_power_trace(f: Union[str, io.IOBase]) -> PowerTrace:
    """Read a power CSV and infer the sample period.

    The grid must be uniform: every timestamp within 1% of the inferred
    period from its nominal position.
    """
    own = isinstance(f, str)
    fh = open(f, "r", newline="") if own else f
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t_s", "voltage_v", "current_a"]:
            raise EmptyTrace(f"expected header 't_s,voltage_v,current_a', got {header}")
        rows = [(float(r[0]), float(r[1]), float(r[2])) for r in reader if r]
    finally:
        if own:
            fh.close()
    if not rows:
        raise EmptyTrace("no samples")
    t = np.array([r[0] for r in rows])
    v = np.array([r[1] for r in rows])
    c = np.array([r[2] for r in rows])
    if np.any(v < 0):
        raise NegativeVoltage(f"sample {int(np.argmax(v < 0))} has voltage < 0")
    if len(rows) < 2:
        raise NonUniformSampling("need at least two samples to infer the period")
    period = (t[-1] - t[0]) / (len(t) - 1)
    if period <= 0:
        raise NonUniformSampling("timestamps do not increase")
    nominal = t[0] + np.arange(len(t)) * period
    worst = float(np.max(np.abs(t - nominal)))
    if worst > 0.01 * period:
        raise NonUniformSampling(
            f"timestamp deviates {worst:.3e}s from a uniform {period:.3e}s grid"
        )
    return PowerTrace(float(period), v, c)


def smooth(tr: PowerTrace, window: int = DEFAULT_SMOOTH_WINDOW) -> np.ndarray:
    """Moving average of instantaneous power; output length N - window + 1."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if len(tr) < window:
        raise TraceTooShort(f"{len(tr)} samples < window of {window}")
    p = tr.power
    return np.convolve(p, np.ones(window), mode="valid") / window


def energy_per_frame(
    tr: PowerTrace, t_start: float, t_end: float, frames_processed: int
) -> float:
    """Trapezoidal energy over [t_start, t_end] divided by frames, in millijoules."""
    if frames_processed < 1:
        raise ZeroFrames(f"frames_processed must be >= 1, got {frames_processed}")
    if not (0.0 <= t_start < t_end <= tr.duration + 1e-12):
        raise WindowOutOfRange(
            f"[{t_start}, {t_end}] outside trace extent [0, {tr.duration}]"
        )
    times = tr.times
    power = tr.power
    inside = (times > t_start) & (times < t_end)
    ts = np.concatenate([[t_start], times[inside], [t_end]])
    ps = np.concatenate(
        [
            [np.interp(t_start, times, power)],
            power[inside],
            [np.interp(t_end, times, power)],
        ]
    )
    joules = float(np.trapezoid(ps, ts))
    return joules * 1e3 / frames_processed


LatencySource = Union[Callable[[int], float], Mapping[int, float]]


@dataclass(frozen=True)
class BatchConfig:
    batch_size: int
    inference_latency: LatencySource        # batch size -> seconds
    frame_period: int = DEFAULT_FRAME_PERIOD_US  # microseconds

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.frame_period <= 0:
            raise ValueError(f"frame_period must be positive, got {self.frame_period}")

    def latency_for(self, b: int) -> float:
        if callable(self.inference_latency):
            lat = float(self.inference_latency(b))
        else:
            if b not in self.inference_latency:
                raise MissingInput(f"no inference latency for batch size {b}")
            lat = float(self.inference_latency[b])
        if lat <= 0:
            raise ValueError(f"inference latency must be positive, got {lat}")
        return lat


@dataclass(frozen=True)
class LatencyResult:
    worst_case_ms: float
    throughput_fps: float
    realtime_feasible: bool


def batching_latency(cfg: BatchConfig) -> LatencyResult:
    """Worst-case detection latency and feasibility for one batch size.

    A frame may wait for the whole batch to fill (B * frame_period) and
    then for one inference pass. Real-time feasible iff the pass finishes
    before the next batch is full.
    """
    b = cfg.batch_size
    fill_s = b * cfg.frame_period * 1e-6
    lat_s = cfg.latency_for(b)
    worst_ms = (fill_s + lat_s) * 1e3
    throughput = b / max(fill_s, lat_s)
    return LatencyResult(worst_ms, throughput, lat_s <= fill_s)


@dataclass(frozen=True)
class EnergyInput:
    """One measured run: a trace window and the frames processed inside it."""

    trace: PowerTrace
    t_start: float
    t_end: float
    frames_processed: int


@dataclass(frozen=True)
class BenchRow:
    batch_size: int
    worst_case_ms: float
    throughput_fps: float
    realtime_feasible: bool
    energy_mj_per_frame: float | None = None
    mean_power_w: float | None = None

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "worst_case_ms": self.worst_case_ms,
            "throughput_fps": self.throughput_fps,
            "realtime_feasible": self.realtime_feasible,
            "energy_mj_per_frame": self.energy_mj_per_frame,
            "mean_power_w": self.mean_power_w,
        }


@dataclass(frozen=True)
class BenchReport:
    rows: tuple

    def to_json(self) -> str:
        return json.dumps({"rows": [r.to_dict() for r in self.rows]}, indent=2)

    def format_table(self) -> str:
        headers = ["B", "worst_ms", "fps", "feasible", "mJ/frame", "mean_W"]
        body = []
        for r in self.rows:
            body.append(
                [
                    str(r.batch_size),
                    f"{r.worst_case_ms:.1f}",
                    f"{r.throughput_fps:.1f}",
                    "yes" if r.realtime_feasible else "no",
                    "-" if r.energy_mj_per_frame is None else f"{r.energy_mj_per_frame:.1f}",
                    "-" if r.mean_power_w is None else f"{r.mean_power_w:.2f}",
                ]
            )
        widths = [max(len(h), *(len(row[i]) for row in body)) for i, h in enumerate(headers)]
        lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
        for row in body:
            lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
        return "\n".join(lines)


def sweep_batches(
    batch_sizes: Sequence[int],
    latency: LatencySource,
    energy_inputs: Mapping[int, EnergyInput] | None = None,
    frame_period: int = DEFAULT_FRAME_PERIOD_US,
) -> BenchReport:
    """One report row per batch size, ordered by batch size.

    When energy inputs are given they must cover every requested batch
    size; when omitted, the energy columns stay empty.
    """
    rows: List[BenchRow] = []
    for b in sorted(set(batch_sizes)):
        cfg = BatchConfig(b, latency, frame_period)
        lat = batching_latency(cfg)
        energy = mean_power = None
        if energy_inputs is not None:
            if b not in energy_inputs:
                raise MissingInput(f"no trace for batch size {b}")
            ei = energy_inputs[b]
            energy = energy_per_frame(ei.trace, ei.t_start, ei.t_end, ei.frames_processed)
            span = ei.t_end - ei.t_start
            energy_j = energy * ei.frames_processed / 1e3
            mean_power = energy_j / span
        rows.append(
            BenchRow(b, lat.worst_case_ms, lat.throughput_fps, lat.realtime_feasible,
                     energy, mean_power)
        )
    return BenchReport(tuple(rows))


def load_latency_table(f: Union[str, io.IOBase]) -> Dict[int, float]:
    """Read a latency table CSV into {batch_size: seconds}."""
    own = isinstance(f, str)
    fh = open(f, "r", newline="") if own else f
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["batch_size", "latency_ms"]:
            raise MissingInput(f"expected header 'batch_size,latency_ms', got {header}")
        out = {int(r[0]): float(r[1]) * 1e-3 for r in reader if r}
    finally:
        if own:
            fh.close()
    if not out:
        raise MissingInput("latency table has no rows")
    return out
