"""Stage-parallel execution of a layer-wise network.

One worker thread owns each module; only immutable activation/label packets
cross stage boundaries, never gradients or parameters. Because every stage
still consumes every batch in order, each module performs exactly the same
update sequence as the in-process trainer:

* sync mode adds a barrier after every wavefront round, so runs are fully
  deterministic and parameters finish bit-identical to sequential training;
* async mode lets stages free-run through bounded FIFO queues. Per-module
  arithmetic is unchanged, but queue depths, timing, and the measured
  staleness (how far upstream's parameters have moved past the activation
  being consumed) depend on scheduling, so staleness stats and wall times are
  not reproducible run to run.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

_POLL_S = 0.05


@dataclass
class ActivationPacket:
    """What flows between stages: one batch's activation plus its labels."""

    batch_id: int
    stage: int
    activation: np.ndarray
    label: np.ndarray


@dataclass
class PipelineConfig:
    mode: str = "sync"           # "sync" | "async"
    queue_capacity: int = 4      # ignored in sync mode

    def __post_init__(self):
        if self.mode not in ("sync", "async"):
            raise ValueError(f"mode must be 'sync' or 'async', got {self.mode!r}")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")


@dataclass
class StageStats:
    stage: int
    batches: int = 0
    busy_s: float = 0.0
    idle_s: float = 0.0
    max_staleness: int = 0
    staleness_sum: int = 0


@dataclass
class PipelineResult:
    mode: str
    losses: np.ndarray      # [steps, stages]
    accuracies: np.ndarray  # [steps, stages]
    stage_stats: list
    wall_s: float
    aborted_stage: int | None = None

    @property
    def steps(self) -> int:
        return self.losses.shape[0]

    @property
    def batches_per_s(self) -> float:
        return self.steps / self.wall_s if self.wall_s > 0 else float("inf")

    @property
    def max_staleness(self) -> int:
        return max(s.max_staleness for s in self.stage_stats)

    @property
    def mean_staleness(self) -> float:
        total = sum(s.staleness_sum for s in self.stage_stats)
        count = sum(s.batches for s in self.stage_stats)
        return total / count if count else 0.0


class PipelineError(RuntimeError):
    def __init__(self, stage: int, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause!r}")
        self.stage = stage
        self.cause = cause


def run_pipeline(net, batches, lr, config: PipelineConfig) -> PipelineResult:
    if config.mode == "sync":
        return run_sync(net, batches, lr)
    return run_async(net, batches, lr, config.queue_capacity)


def run_sync(net, batches, lr) -> PipelineResult:
    """Lockstep wavefront: a barrier closes every round, so stage s handles
    batch t in round t + s and nothing is scheduling-dependent."""
    return _run(net, batches, lr, capacity=1, lockstep=True)


def run_async(net, batches, lr, queue_capacity: int = 4) -> PipelineResult:
    """Free-running stages behind bounded FIFO queues; backpressure keeps a
    consumer at most queue_capacity upstream updates behind."""
    return _run(net, batches, lr, capacity=queue_capacity, lockstep=False)


def _run(net, batches, lr, capacity: int, lockstep: bool) -> PipelineResult:
    batches = list(batches)
    steps = len(batches)
    stages = len(net.modules)
    losses = np.full((steps, stages), np.nan)
    accs = np.full((steps, stages), np.nan)
    stats = [StageStats(s) for s in range(stages)]
    queues = [queue.Queue(maxsize=capacity) for _ in range(stages - 1)]
    # index s = number of batches stage s has finished updating on
    progress = [0] * stages
    abort = threading.Event()
    failure = {}
    barrier = threading.Barrier(stages) if lockstep else None

    def fail(stage_idx, exc):
        failure.setdefault("info", (stage_idx, exc))
        abort.set()
        if barrier is not None:
            barrier.abort()

    def get_packet(stage_idx, timer):
        if stage_idx == 0:
            t = progress[0]
            x, label = batches[t]
            return ActivationPacket(t, 0, x, label), 0
        q = queues[stage_idx - 1]
        t0 = time.perf_counter()
        while True:
            try:
                pkt = q.get(timeout=_POLL_S)
                break
            except queue.Empty:
                if abort.is_set():
                    return None, 0
        timer.idle_s += time.perf_counter() - t0
        staleness = max(0, progress[stage_idx - 1] - pkt.batch_id - 1)
        return pkt, staleness

    def put_packet(stage_idx, pkt, timer):
        if stage_idx == stages - 1:
            return True
        q = queues[stage_idx]
        t0 = time.perf_counter()
        while not abort.is_set():
            try:
                q.put(pkt, timeout=_POLL_S)
                timer.idle_s += time.perf_counter() - t0
                return True
            except queue.Full:
                pass
        return False

    def process_one(stage_idx, module, timer):
        got = get_packet(stage_idx, timer)
        if got[0] is None:
            return False
        pkt, staleness = got
        t0 = time.perf_counter()
        out, loss, acc = module.train_step_module(pkt.activation, pkt.label, lr)
        busy = time.perf_counter() - t0
        ok = put_packet(stage_idx, ActivationPacket(pkt.batch_id, stage_idx + 1,
                                                    out, pkt.label), timer)
        # parameters advanced regardless of whether the send went through
        progress[stage_idx] = pkt.batch_id + 1
        losses[pkt.batch_id, stage_idx] = loss
        accs[pkt.batch_id, stage_idx] = acc
        timer.busy_s += busy
        timer.batches += 1
        timer.max_staleness = max(timer.max_staleness, staleness)
        timer.staleness_sum += staleness
        return ok

    def sync_worker(stage_idx, module):
        timer = stats[stage_idx]
        try:
            for rnd in range(steps + stages - 1):
                t = rnd - stage_idx
                if 0 <= t < steps and not abort.is_set():
                    if not process_one(stage_idx, module, timer):
                        return
                t0 = time.perf_counter()
                try:
                    barrier.wait()
                except threading.BrokenBarrierError:
                    return
                timer.idle_s += time.perf_counter() - t0
        except BaseException as exc:  # noqa: BLE001 - reported to the caller
            fail(stage_idx, exc)

    def async_worker(stage_idx, module):
        timer = stats[stage_idx]
        try:
            for _ in range(steps):
                if abort.is_set():
                    return
                if not process_one(stage_idx, module, timer):
                    return
        except BaseException as exc:  # noqa: BLE001 - reported to the caller
            fail(stage_idx, exc)

    target = sync_worker if lockstep else async_worker
    workers = [threading.Thread(target=target, args=(s, m), daemon=True)
               for s, m in enumerate(net.modules)]
    t_start = time.perf_counter()
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    wall = time.perf_counter() - t_start

    if "info" in failure:
        stage_idx, exc = failure["info"]
        raise PipelineError(stage_idx, exc)
    return PipelineResult("sync" if lockstep else "async", losses, accs, stats, wall)


def throughput_report(result: PipelineResult):
    """Rows for the stage,batches,busy_s,idle_s,max_staleness CSV."""
    header = ["stage", "batches", "busy_s", "idle_s", "max_staleness"]
    rows = [[s.stage, s.batches, f"{s.busy_s:.6f}", f"{s.idle_s:.6f}", s.max_staleness]
            for s in result.stage_stats]
    return header, rows
