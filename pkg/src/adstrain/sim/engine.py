"""Discrete-event simulation of an epoch-based training pipeline.

One Controller drives epochs of fixed wall time. Within an epoch it issues
contiguous work units to readers, readers fill the trainer host's buffer and
the trainer consumes units one at a time. At the epoch boundary everything in
flight drains, then a checkpoint is written. Training done in an epoch only
counts once that epoch's checkpoint lands; any failure throws the epoch away
and the next epoch replays from the last watermark.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

from ..errors import InvalidArgument
from ..rng import make_rng
from .scenario import PERMANENT, PREEMPTION, SIG_STALL, TRANSIENT, SimScenario

COMPONENT_FAILURE = "component_failure"
PREEMPTION_TIMEOUT = "preemption_timeout"
HOLD = "hold"
EMPTY = "empty"

COMMITTED_EARLY = "committed_early"
RESTART_FROM_CHECKPOINT = "restart_from_checkpoint"

RUNNING, DRAINING, CHECKPOINTING, DOWN, HELD, DONE = (
    "running", "draining", "checkpointing", "down", "held", "done")
_ACTIVE = (RUNNING, DRAINING, CHECKPOINTING)

# event kinds, ordered only by (time, insertion sequence)
_EPOCH_END, _READ_DONE, _TRAIN_DONE, _CKPT_DONE, _RESUME, _WAKE, _DEADLINE, _FAULT, _TICK = range(9)


@dataclass(frozen=True)
class EpochRecord:
    index: int
    start: int
    end: int
    lo: int
    hi: int  # attempted range is [lo, hi)
    committed: bool
    checkpoint_id: Optional[int] = None
    reason: Optional[str] = None
    failures: tuple = ()


@dataclass(frozen=True)
class CheckpointRecord:
    id: int
    epoch: int
    watermark: int
    digest: str
    time: int


@dataclass
class TrainingHold:
    kind: str  # permanent_error | transient_stall
    placed_at: int
    released_at: Optional[int] = None
    resources_released: bool = True


@dataclass
class PreemptionNotice:
    job: str
    notice_time: int
    shutdown_deadline: int
    acknowledged: bool = False
    outcome: Optional[str] = None
    epoch: Optional[int] = None
    exit_at: Optional[int] = None
    rejoin_at: Optional[int] = None


def autoscale_readers(fullness, in_flight: int, bands: Sequence[float], step: int = 1, max_in_flight=None) -> int:
    """Band controller on host-buffer fullness; ``fullness`` may be a series (last value is used)."""
    low, high = bands
    if not 0 <= low < high <= 1:
        raise InvalidArgument("bands must satisfy 0 <= low < high <= 1")
    if not isinstance(fullness, (int, float)):
        fullness = list(fullness)[-1]
    if fullness < low:
        in_flight += step
    elif fullness > high:
        in_flight -= step
    if max_in_flight is not None:
        in_flight = min(in_flight, max_in_flight)
    return max(1, in_flight)


@dataclass
class SimReport:
    seed: int
    scenario: SimScenario
    timeline: list
    epochs: list
    checkpoints: list
    committed_ranges: list
    holds: list
    preemptions: list
    reader_series: list
    advancing_series: list
    final_state: str
    final_watermark: int
    end_time: int

    def trained_counts(self, n=None):
        """Times each event id was trained into a committed state."""
        import numpy as np

        top = max([hi for _, hi in self.committed_ranges] + [self.final_watermark + 1, 0])
        n = top if n is None else max(n, top)
        diff = np.zeros(n + 1, dtype=np.int64)
        for lo, hi in self.committed_ranges:
            diff[lo] += 1
            diff[hi] -= 1
        return np.cumsum(diff)[:n]

    @property
    def committed_events(self):
        return self.final_watermark + 1

    def commit_fraction(self):
        """Share of preemptions hitting a live epoch that ended in an early commit; None if there were none."""
        out = [p.outcome for p in self.preemptions if p.outcome in (COMMITTED_EARLY, RESTART_FROM_CHECKPOINT)]
        if not out:
            return None
        return out.count(COMMITTED_EARLY) / len(out)

    def advancing_rate(self):
        """Data time trained into committed state per unit of wall time since start."""
        if not self.checkpoints:
            return 0.0
        wall = self.checkpoints[-1].time
        if wall <= 0:
            return 0.0
        return self.committed_events * self.scenario.data_time_per_event / wall

    def to_dict(self):
        return {
            "seed": self.seed,
            "scenario": self.scenario.to_dict(),
            "final_state": self.final_state,
            "final_watermark": self.final_watermark,
            "end_time": self.end_time,
            "advancing_rate": self.advancing_rate(),
            "commit_fraction": self.commit_fraction(),
            "epochs": [e.__dict__ for e in self.epochs],
            "checkpoints": [c.__dict__ for c in self.checkpoints],
            "committed_ranges": [list(r) for r in self.committed_ranges],
            "holds": [h.__dict__ for h in self.holds],
            "preemptions": [p.__dict__ for p in self.preemptions],
            "timeline": [list(e) for e in self.timeline],
        }


class Simulator:
    """Single-threaded event loop; build one per run."""

    def __init__(self, scenario: SimScenario, seed: int = 0):
        self.sc = scenario
        self.seed = int(seed)
        self.rng = make_rng(self.seed, "sim", "reads")
        self.now = 0
        self._heap = []
        self._seq = 0
        self.gen = 0
        self.phase = DOWN
        self.watermark = -1
        self.committed = []
        self.epochs = []
        self.checkpoints = []
        self.holds = []
        self.notices = []
        self.timeline = []
        self.reader_series = []
        self.advancing_series = []
        # reads beyond the buffer reservation can never be issued, so the target is capped there
        self.max_target = max(1, min(scenario.max_in_flight, scenario.host_buffer_capacity // scenario.work_unit_size))
        self.target = min(scenario.initial_in_flight, self.max_target)
        self.resume_at = 0
        self._digest = ""
        self._pending = []  # notices attached to the live epoch
        self._rejoin_at = 0
        self._epoch_idx = -1

    # -- plumbing
    def _push(self, t, kind, gen=0, payload=None):
        heapq.heappush(self._heap, (int(t), self._seq, kind, gen, payload))
        self._seq += 1

    def _log(self, kind, epoch=-1, a=-1, b=-1):
        self.timeline.append((self.now, kind, epoch, a, b))

    # -- epoch lifecycle
    def _start_epoch(self):
        if self.watermark + 1 >= self.sc.total_events:
            self._finish(DONE)
            return
        self.gen += 1
        self._epoch_idx = len(self.epochs)
        self.phase = RUNNING
        self.ep_start = self.now
        self.ep_lo = self.next = self.watermark + 1
        self.in_flight = {}
        self.in_flight_events = 0
        self.buffer = deque()
        self.buffered = 0
        self.trainer = None
        self._wake_at = None
        self._uid = 0
        self._log("epoch_start", self._epoch_idx, self.ep_lo)
        self._push(self.now + self.sc.epoch_wall_time, _EPOCH_END, self.gen)
        self._issue()

    def _idle(self):
        return not self.in_flight and not self.buffer and self.trainer is None

    def _issue(self):
        sc = self.sc
        while self.phase == RUNNING and len(self.in_flight) < self.target:
            lo = self.next
            if lo >= sc.total_events:
                break
            hi = min(lo + sc.work_unit_size, sc.total_events)
            if sc.available(self.now) < hi:
                at = max(self.now + 1, sc.arrival_time(hi - 1))
                if self._wake_at != at:
                    self._wake_at = at
                    self._push(at, _WAKE, self.gen)
                break
            if self.buffered + self.in_flight_events + (hi - lo) > sc.host_buffer_capacity:
                break
            rt = int(self.rng.integers(sc.read_time[0], sc.read_time[1] + 1))
            uid = self._uid
            self._uid += 1
            self.in_flight[uid] = (lo, hi)
            self.in_flight_events += hi - lo
            self.next = hi
            self._log("issue", self._epoch_idx, lo, hi)
            self._push(self.now + rt, _READ_DONE, self.gen, uid)

    def _train(self):
        if self.trainer is None and self.buffer:
            lo, hi = self.trainer = self.buffer.popleft()
            self.buffered -= hi - lo
            self._push(self.now + math.ceil((hi - lo) * self.sc.train_time_per_event), _TRAIN_DONE, self.gen)

    def _drain(self, why):
        self.phase = DRAINING
        self._log("drain:" + why, self._epoch_idx)
        self._maybe_quiesced()

    def _maybe_quiesced(self):
        if self.phase == DRAINING and self._idle():
            self.phase = CHECKPOINTING
            self._push(self.now + self.sc.checkpoint_time, _CKPT_DONE, self.gen)

    def _record_epoch(self, committed, reason=None, failures=(), ckpt=None):
        self.epochs.append(EpochRecord(self._epoch_idx, self.ep_start, self.now, self.ep_lo, self.next,
                                       committed, ckpt, reason, tuple(failures)))

    def _commit(self):
        if self.next == self.ep_lo:
            self._record_epoch(False, EMPTY)
            self._log("empty", self._epoch_idx)
        else:
            cid = len(self.checkpoints)
            self.watermark = self.next - 1
            self._digest = hashlib.sha256(f"{self._digest}|{cid}|{self._epoch_idx}|{self.watermark}".encode()).hexdigest()[:16]
            self.checkpoints.append(CheckpointRecord(cid, self._epoch_idx, self.watermark, self._digest, self.now))
            self.committed.append((self.ep_lo, self.next))
            self._record_epoch(True, ckpt=cid)
            self._log("checkpoint", self._epoch_idx, self.ep_lo, self.next)
            rate = (self.watermark + 1) * self.sc.data_time_per_event / self.now if self.now > 0 else math.inf
            self.advancing_series.append((self.now, self.watermark, rate))
        self.gen += 1
        if self._pending:
            outcome = COMMITTED_EARLY if self.next > self.ep_lo else EMPTY
            self._settle_notices(outcome, exit_at=self.now)
            self._go_down(self._rejoin_at)
        else:
            self._start_epoch()

    def _abort(self, reason, failure):
        self._record_epoch(False, reason, (failure,))
        self._log("abort:" + reason, self._epoch_idx, self.ep_lo, self.next)
        self.gen += 1
        if self._pending:
            self._settle_notices(RESTART_FROM_CHECKPOINT, exit_at=max(self.now, min(p.shutdown_deadline for p in self._pending)))

    def _settle_notices(self, outcome, exit_at):
        rejoin = exit_at + self.sc.rejoin_time
        for p in self._pending:
            p.outcome = outcome
            p.acknowledged = True
            p.exit_at = exit_at
            p.rejoin_at = rejoin
        self._pending = []
        self._rejoin_at = max(self._rejoin_at, rejoin)
        self.resume_at = max(self.resume_at, rejoin)

    def _go_down(self, ready_at):
        if self.phase != DOWN:
            self.resume_at = 0
        self.phase = DOWN
        self.resume_at = max(self.resume_at, ready_at, self._rejoin_at)
        self.gen += 1
        self._push(self.resume_at, _RESUME, self.gen)

    def _finish(self, state):
        self.phase = state
        self._log(state)

    # -- faults
    def _fault(self, f):
        self._log("fault:" + f.kind)
        if self.phase in (HELD, DONE):
            if f.kind == PREEMPTION:
                self.notices.append(PreemptionNotice(f.job, self.now, self.now + f.warning, True, "idle"))
            return
        active = self.phase in _ACTIVE
        if f.kind == TRANSIENT:
            if active:
                self._abort(COMPONENT_FAILURE, TRANSIENT)
            self._go_down(self.now + self.sc.restart_time)
        elif f.kind == PERMANENT:
            if active:
                self._abort(COMPONENT_FAILURE, PERMANENT)
            self._close_hold()
            self.holds.append(TrainingHold("permanent_error", self.now))
            self._log("hold_placed")
            self._finish(HELD)
        elif f.kind == SIG_STALL:
            if active:
                self._abort(HOLD, SIG_STALL)
            h = self._open_hold()
            end = self.now + f.duration
            if h is None:
                h = TrainingHold("transient_stall", self.now, end)
                self.holds.append(h)
                self._log("hold_placed", -1, self.now, end)
            else:
                h.released_at = max(h.released_at, end)
            self._go_down(h.released_at)
        elif f.kind == PREEMPTION:
            n = PreemptionNotice(f.job, self.now, self.now + f.warning)
            self.notices.append(n)
            if not active:
                # job not running an epoch: it is shut down and must rejoin before training resumes
                n.outcome, n.acknowledged = "idle", True
                n.exit_at = n.shutdown_deadline
                n.rejoin_at = n.exit_at + self.sc.rejoin_time
                self._rejoin_at = max(self._rejoin_at, n.rejoin_at)
                self._go_down(n.rejoin_at)
                return
            n.epoch = self._epoch_idx
            self._pending.append(n)
            if f.warning == 0:
                self._abort(PREEMPTION_TIMEOUT, PREEMPTION)
                self._go_down(self._rejoin_at)
                return
            self._push(n.shutdown_deadline, _DEADLINE, self.gen)
            if self.phase == RUNNING:
                self._drain("preemption")

    def _open_hold(self):
        for h in self.holds:
            if h.kind == "transient_stall" and h.released_at is not None and h.released_at > self.now:
                return h
        return None

    def _close_hold(self):
        h = self._open_hold()
        if h is not None:
            # a permanent hold supersedes a pending stall
            h.released_at = self.now

    # -- main loop
    def run(self) -> SimReport:
        sc = self.sc
        for f in sc.faults:
            self._push(f.time, _FAULT, 0, f)
        self._push(0, _TICK)
        self._start_epoch()
        while self._heap and self.phase not in (DONE, HELD):
            t, _, kind, gen, payload = heapq.heappop(self._heap)
            if sc.horizon and t > sc.horizon:
                break
            self.now = t
            if kind == _FAULT:
                self._fault(payload)
            elif kind == _TICK:
                if self.phase == RUNNING:
                    fullness = self.buffered / sc.host_buffer_capacity
                    self.target = autoscale_readers(fullness, self.target, sc.bands, 1, self.max_target)
                    self.reader_series.append((t, fullness, self.target, len(self.in_flight)))
                    self._issue()
                self._push(t + sc.scale_interval, _TICK)
            elif gen != self.gen:
                continue
            elif kind == _READ_DONE:
                unit = self.in_flight.pop(payload)
                self.in_flight_events -= unit[1] - unit[0]
                self.buffer.append(unit)
                self.buffered += unit[1] - unit[0]
                self._train()
                self._issue()
            elif kind == _TRAIN_DONE:
                lo, hi = self.trainer
                self.trainer = None
                self._log("train", self._epoch_idx, lo, hi)
                self._train()
                self._issue()
                if self.phase == RUNNING and self.next >= sc.total_events and self._idle():
                    self._drain("stream_end")
                else:
                    self._maybe_quiesced()
            elif kind == _EPOCH_END:
                if self.phase == RUNNING:
                    self._drain("epoch_end")
            elif kind == _CKPT_DONE:
                self._commit()
            elif kind == _WAKE:
                self._wake_at = None
                self._issue()
            elif kind == _DEADLINE:
                if self.phase in _ACTIVE and self._pending:
                    self._abort(PREEMPTION_TIMEOUT, PREEMPTION)
                    self._go_down(self._rejoin_at)
            elif kind == _RESUME:
                self._log("resume")
                self._start_epoch()
        for h in self.holds:
            if h.kind == "transient_stall" and h.released_at is not None and h.released_at <= self.now:
                self.timeline.append((h.released_at, "hold_released", -1, h.placed_at, h.released_at))
        self.timeline.sort(key=lambda e: e[0])
        return SimReport(
            seed=self.seed, scenario=sc, timeline=self.timeline, epochs=self.epochs,
            checkpoints=self.checkpoints, committed_ranges=self.committed, holds=self.holds,
            preemptions=self.notices, reader_series=self.reader_series,
            advancing_series=self.advancing_series, final_state=self.phase,
            final_watermark=self.watermark, end_time=self.now,
        )


def run(scenario: SimScenario, seed: int = 0) -> SimReport:
    return Simulator(scenario, seed).run()
