"""Simulation scenario description."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from ..errors import ScenarioError

TRANSIENT = "transient"
PERMANENT = "permanent"
PREEMPTION = "preemption"
SIG_STALL = "sig_stall"
FAULT_KINDS = (TRANSIENT, PERMANENT, PREEMPTION, SIG_STALL)


@dataclass(frozen=True)
class Fault:
    time: int
    kind: str
    warning: int = 0
    job: str = "trainer"
    duration: int = 0

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["time"]), d["kind"], int(d.get("warning", 0)), str(d.get("job", "trainer")),
                   int(d.get("duration", 0)))


@dataclass(frozen=True)
class SimScenario:
    """All times are integer simulated microseconds.

    ``arrival_rate`` is events per microsecond; 0 means the whole stream is
    available at t=0 (historical backfill). ``event_time_us`` is the span of
    real data time one event represents, used for advancing rates; it defaults
    to 1/arrival_rate for streaming scenarios and 1.0 otherwise.
    """

    epoch_wall_time: int = 100_000
    total_events: int = 10_000
    arrival_rate: float = 0.0
    work_unit_size: int = 100
    host_buffer_capacity: int = 400
    read_time: tuple = (2_000, 4_000)
    train_time_per_event: float = 10.0
    checkpoint_time: int = 1_000
    restart_time: int = 5_000
    rejoin_time: int = 5_000
    faults: tuple = ()
    bands: tuple = (0.3, 0.8)
    initial_in_flight: int = 2
    max_in_flight: int = 16
    scale_interval: int = 1_000
    chips: int = 4
    event_time_us: float = 0.0
    horizon: int = 0

    def __post_init__(self):
        object.__setattr__(self, "faults", tuple(sorted(
            (f if isinstance(f, Fault) else Fault.from_dict(f) for f in self.faults),
            key=lambda f: f.time)))
        object.__setattr__(self, "read_time", tuple(self.read_time))
        object.__setattr__(self, "bands", tuple(self.bands))
        problems = self.problems()
        if problems:
            raise ScenarioError(problems)

    def problems(self):
        p = []
        if self.epoch_wall_time <= 0:
            p.append("epoch_wall_time must be > 0")
        if self.total_events < 0:
            p.append("total_events must be >= 0")
        if self.arrival_rate < 0:
            p.append("arrival_rate must be >= 0")
        if self.work_unit_size < 1:
            p.append("work_unit_size must be >= 1")
        if self.host_buffer_capacity < self.work_unit_size:
            p.append("host_buffer_capacity must hold at least one work unit")
        if len(self.read_time) != 2 or not 0 <= self.read_time[0] <= self.read_time[1]:
            p.append("read_time must be (lo, hi) with 0 <= lo <= hi")
        if self.train_time_per_event < 0:
            p.append("train_time_per_event must be >= 0")
        for name in ("checkpoint_time", "restart_time", "rejoin_time", "horizon"):
            if getattr(self, name) < 0:
                p.append(f"{name} must be >= 0")
        if len(self.bands) != 2 or not 0 <= self.bands[0] < self.bands[1] <= 1:
            p.append("bands must satisfy 0 <= low < high <= 1")
        if not 1 <= self.initial_in_flight <= self.max_in_flight:
            p.append("need 1 <= initial_in_flight <= max_in_flight")
        if self.scale_interval <= 0:
            p.append("scale_interval must be > 0")
        if self.chips < 0:
            p.append("chips must be >= 0")
        for i, f in enumerate(self.faults):
            if f.kind not in FAULT_KINDS:
                p.append(f"faults[{i}].kind {f.kind!r} unknown")
            if f.time < 0 or f.warning < 0 or f.duration < 0:
                p.append(f"faults[{i}] times must be >= 0")
        return p

    @property
    def data_time_per_event(self):
        if self.event_time_us > 0:
            return self.event_time_us
        return 1.0 / self.arrival_rate if self.arrival_rate > 0 else 1.0

    def arrival_time(self, event_id):
        """Time at which ``event_id`` becomes available."""
        if self.arrival_rate <= 0:
            return 0
        return math.ceil(event_id / self.arrival_rate)

    def available(self, t):
        """Number of events available (ids < result) at time t."""
        if self.arrival_rate <= 0:
            return self.total_events
        return min(self.total_events, int(math.floor(t * self.arrival_rate)) + 1)

    def worst_case_drain(self):
        """Upper bound on drain plus checkpoint write after a notice.

        In-flight reads finish within the slowest read time; untrained events
        are bounded by the buffer reservation plus the unit being trained.
        """
        per_unit = math.ceil(self.work_unit_size * self.train_time_per_event)
        units = self.host_buffer_capacity // self.work_unit_size + 2
        return self.read_time[1] + units * per_unit + self.checkpoint_time

    def to_dict(self):
        d = asdict(self)
        d["faults"] = [asdict(f) for f in self.faults]
        d["read_time"] = list(self.read_time)
        d["bands"] = list(self.bands)
        return d

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ScenarioError([f"unknown sim field {k!r}" for k in unknown])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ScenarioError([str(exc)]) from None
