"""Accumulate -> detect pipeline with a bounded hand-off queue.

One producer turns the event stream into polarity frames window by
window; one consumer gathers batches and runs the detector. The queue
between them is bounded: when the producer gets ahead by more than
queue_capacity frames, the oldest queued frame is dropped and counted
(newest evidence wins under real-time pressure). Setting EVFLOW_THREADS=1
(or threads=1) runs both stages sequentially in one thread; detection
output is identical either way, only the timing metrics differ.

The stub detector stands in for a learned model: it thresholds the
activity grid, labels 4-connected components, and emits one detection per
sufficiently large component. An external-detections backend replays a
CSV of precomputed detections instead, so real model outputs can flow
through the same evaluation path.
"""

from __future__ import annotations

import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import ConfigInvalid
from .events import EventStream
from .frames import PolarityFrame, accumulate, activity, downscale, frame_sequence
from .geometry import CameraPair, transfer_bbox
from .labels import BBox, Detection, EvalReport, Track, densify_tracks, evaluate_detections, load_detections_csv

STUB_DETECTOR = "stub"
ENV_THREADS = "EVFLOW_THREADS"

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])

DetectorFn = Callable[[Sequence[PolarityFrame]], List[List[Detection]]]


@dataclass
class PipelineConfig:
    integration_window: int = 33_333          # microseconds
    batch_size: int = 1
    detector: str = STUB_DETECTOR             # "stub" or path to a detections CSV
    downscale_to: Optional[Tuple[int, int]] = None
    queue_capacity: Optional[int] = None      # default 2 * batch_size
    drop_policy: str = "drop_oldest"
    stub_min_area: int = 8                    # pixels^2
    stub_activity_thresh: int = 1             # counts

    def validated_capacity(self) -> int:
        cap = self.queue_capacity if self.queue_capacity is not None else 2 * self.batch_size
        if self.integration_window <= 0:
            raise ConfigInvalid(f"integration_window must be positive, got {self.integration_window}")
        if self.batch_size < 1:
            raise ConfigInvalid(f"batch_size must be >= 1, got {self.batch_size}")
        if cap < self.batch_size:
            raise ConfigInvalid(f"queue_capacity {cap} < batch_size {self.batch_size}")
        if self.drop_policy != "drop_oldest":
            raise ConfigInvalid(f"unsupported drop policy {self.drop_policy!r}")
        return cap


@dataclass
class PipelineMetrics:
    frames_produced: int = 0
    frames_inferred: int = 0
    frames_dropped: int = 0
    stage_latency_ms: Dict[str, Dict[str, float]] = field(default_factory=dict)
    throughput_fps: float = 0.0


@dataclass
class PipelineResult:
    detections: List[Detection]
    metrics: PipelineMetrics
    eval_report: Optional[EvalReport] = None


def stub_detector(
    batch: Sequence[PolarityFrame], min_area: int = 8, activity_thresh: int = 1
) -> List[List[Detection]]:
    """Connected-component blob detector over per-frame activity.

    Components of thresholded activity with at least min_area pixels
    become detections; confidence saturates with the component's total
    event mass.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    out: List[List[Detection]] = []
    for f in batch:
        act = activity(f)
        mask = act >= activity_thresh
        labels, n = ndimage.label(mask, structure=_FOUR_CONNECTED)
        dets: List[Detection] = []
        if n:
            slices = ndimage.find_objects(labels)
            for comp, sl in enumerate(slices, start=1):
                region = labels[sl] == comp
                area = int(region.sum())
                if area < min_area:
                    continue
                mass = float(act[sl][region].sum())
                ys, xs = sl
                box = BBox(
                    float(xs.start),
                    float(ys.start),
                    float(xs.stop - xs.start),
                    float(ys.stop - ys.start),
                )
                dets.append(Detection(f.frame_index, box, min(1.0, mass / 255.0)))
        out.append(dets)
    return out


def _replay_detector(path: str) -> DetectorFn:
    by_frame: Dict[int, List[Detection]] = {}
    for d in load_detections_csv(path):
        by_frame.setdefault(d.frame_idx, []).append(d)

    def detect(batch: Sequence[PolarityFrame]) -> List[List[Detection]]:
        return [list(by_frame.get(f.frame_index, [])) for f in batch]

    return detect


class _DropOldestQueue:
    """Bounded FIFO that drops the oldest entry instead of blocking the producer."""

    def __init__(self, capacity: int):
        self._items: deque = deque()
        self._capacity = capacity
        self._lock = threading.Lock()
        self._ready = threading.Condition(self._lock)
        self._closed = False
        self.dropped = 0

    def put(self, item) -> None:
        with self._ready:
            if len(self._items) >= self._capacity:
                self._items.popleft()
                self.dropped += 1
            self._items.append(item)
            self._ready.notify()

    def close(self) -> None:
        with self._ready:
            self._closed = True
            self._ready.notify_all()

    def get(self):
        """Next frame, or None once closed and drained."""
        with self._ready:
            while not self._items and not self._closed:
                self._ready.wait()
            if self._items:
                return self._items.popleft()
            return None


def _percentiles(samples: List[float]) -> Dict[str, float]:
    if not samples:
        return {"p50": 0.0, "p95": 0.0, "p99": 0.0}
    arr = np.asarray(samples)
    return {
        "p50": float(np.percentile(arr, 50)),
        "p95": float(np.percentile(arr, 95)),
        "p99": float(np.percentile(arr, 99)),
    }


def _resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        raw = os.environ.get(ENV_THREADS, "2")
        try:
            threads = int(raw)
        except ValueError:
            raise ConfigInvalid(f"{ENV_THREADS} must be 1 or 2, got {raw!r}")
    if threads not in (1, 2):
        raise ConfigInvalid(f"{ENV_THREADS} must be 1 or 2, got {threads}")
    return threads


def run_pipeline(
    events: EventStream,
    cfg: PipelineConfig,
    calib: Optional[CameraPair] = None,
    gts: Optional[Sequence[Track]] = None,
    detector_fn: Optional[DetectorFn] = None,
    threads: Optional[int] = None,
) -> PipelineResult:
    """Run accumulate -> batch -> detect over a whole stream.

    calib, when given, maps ground-truth tracks from the RGB view into the
    event view before scoring. gts, when given, adds an average-precision
    report at IoU 0.5. detector_fn overrides the configured detector
    (test hook).
    """
    capacity = cfg.validated_capacity()
    threads = _resolve_threads(threads)
    if detector_fn is not None:
        detect = detector_fn
    elif cfg.detector == STUB_DETECTOR:
        detect = lambda batch: stub_detector(batch, cfg.stub_min_area, cfg.stub_activity_thresh)
    else:
        detect = _replay_detector(cfg.detector)

    windows = _window_indices(events, cfg.integration_window)
    metrics = PipelineMetrics()
    acc_ms: List[float] = []
    det_ms: List[float] = []
    detections: List[Detection] = []
    t_begin = time.perf_counter()

    def produce_one(k: int) -> PolarityFrame:
        t0 = time.perf_counter()
        frame = accumulate(events, k * cfg.integration_window, cfg.integration_window)
        if cfg.downscale_to is not None:
            frame = downscale(frame, *cfg.downscale_to)
        acc_ms.append((time.perf_counter() - t0) * 1e3)
        return frame

    def consume_batch(batch: List[PolarityFrame]) -> None:
        t0 = time.perf_counter()
        per_frame = detect(batch)
        det_ms.append((time.perf_counter() - t0) * 1e3)
        metrics.frames_inferred += len(batch)
        for dets in per_frame:
            detections.extend(dets)

    if threads == 1:
        batch: List[PolarityFrame] = []
        for k in windows:
            batch.append(produce_one(k))
            metrics.frames_produced += 1
            if len(batch) == cfg.batch_size:
                consume_batch(batch)
                batch = []
        if batch:
            consume_batch(batch)
    else:
        queue = _DropOldestQueue(capacity)
        producer_error: List[BaseException] = []

        def producer() -> None:
            try:
                for k in windows:
                    queue.put(produce_one(k))
                    metrics.frames_produced += 1
            except BaseException as exc:  # surface in the caller, don't hang it
                producer_error.append(exc)
            finally:
                queue.close()

        worker = threading.Thread(target=producer, name="evflow-accumulate")
        worker.start()
        batch = []
        while True:
            frame = queue.get()
            if frame is None:
                break
            batch.append(frame)
            if len(batch) == cfg.batch_size:
                consume_batch(batch)
                batch = []
        if batch:
            consume_batch(batch)
        worker.join()
        if producer_error:
            raise producer_error[0]
        metrics.frames_dropped = queue.dropped

    wall = time.perf_counter() - t_begin
    metrics.stage_latency_ms = {
        "accumulate": _percentiles(acc_ms),
        "detect": _percentiles(det_ms),
    }
    metrics.throughput_fps = metrics.frames_inferred / wall if wall > 0 else 0.0

    report = None
    if gts:
        tracks = list(gts)
        if calib is not None:
            tracks = [_transfer_track(t, calib) for t in tracks]
        gt_boxes = densify_tracks(tracks)
        report = evaluate_detections(detections, gt_boxes, iou_thresh=0.5)
    return PipelineResult(detections, metrics, report)


def _window_indices(events: EventStream, window: int) -> List[int]:
    if len(events) == 0:
        return []
    return list(range(int(events.t[0] // window), int(events.t[-1] // window) + 1))


def _transfer_track(track: Track, calib: CameraPair) -> Track:
    from .labels import Keyframe

    kfs = [
        Keyframe(kf.frame_idx, transfer_bbox(kf.box, calib).box) for kf in track.keyframes
    ]
    return Track(track.track_id, tuple(kfs))


def offline_detections(
    events: EventStream, cfg: PipelineConfig, detector_fn: Optional[DetectorFn] = None
) -> List[Detection]:
    """Reference path: frame_sequence -> detector, batch by batch, no queue."""
    cfg.validated_capacity()
    if detector_fn is None:
        detector_fn = lambda b: stub_detector(b, cfg.stub_min_area, cfg.stub_activity_thresh)
    frames = frame_sequence(events, cfg.integration_window)
    if cfg.downscale_to is not None:
        frames = [downscale(f, *cfg.downscale_to) for f in frames]
    detections: List[Detection] = []
    for i in range(0, len(frames), cfg.batch_size):
        for dets in detector_fn(frames[i : i + cfg.batch_size]):
            detections.extend(dets)
    return detections
