"""Scenario generators: randomized fault mixes and the preemption calibration workload."""

from __future__ import annotations

import numpy as np

from ..rng import make_rng
from .engine import run
from .scenario import Fault, SimScenario

CHAOS_BASE = dict(
    epoch_wall_time=12_000,
    total_events=3_000,
    work_unit_size=50,
    host_buffer_capacity=200,
    read_time=(400, 1_500),
    train_time_per_event=20.0,
    checkpoint_time=500,
    restart_time=2_000,
    rejoin_time=2_000,
    scale_interval=1_000,
)


def chaos_scenario(seed: int, transient=(0, 5), preemptions=(0, 3), stalls=(0, 2), permanent_p=0.0) -> SimScenario:
    """A small pipeline with a random mix of faults spread over its expected runtime."""
    rng = make_rng(seed, "chaos")
    base = SimScenario(**CHAOS_BASE)
    span = int(base.total_events * base.train_time_per_event * 2)
    drain = base.worst_case_drain()
    faults = []
    for _ in range(int(rng.integers(transient[0], transient[1] + 1))):
        faults.append(Fault(int(rng.integers(0, span)), "transient"))
    for _ in range(int(rng.integers(preemptions[0], preemptions[1] + 1))):
        # a fifth of notices come with no warning at all; the rest range up to twice the drain bound
        warning = 0 if rng.random() < 0.2 else int(rng.integers(0, 2 * drain + 1))
        faults.append(Fault(int(rng.integers(0, span)), "preemption", warning=warning, job=f"job{int(rng.integers(0, 3))}"))
    for _ in range(int(rng.integers(stalls[0], stalls[1] + 1))):
        faults.append(Fault(int(rng.integers(0, span)), "sig_stall", duration=int(rng.integers(1, 10_000))))
    if permanent_p and rng.random() < permanent_p:
        faults.append(Fault(int(rng.integers(0, span)), "permanent"))
    return SimScenario(**CHAOS_BASE, faults=tuple(faults))


PREEMPT_BASE = dict(
    epoch_wall_time=10_000,
    work_unit_size=500,
    host_buffer_capacity=2_000,
    read_time=(500, 3_000),
    train_time_per_event=2.0,
    checkpoint_time=1_000,
    restart_time=2_000,
    rejoin_time=2_000,
    initial_in_flight=4,
)


def preemption_scenario(w_max: int, n: int = 2000, seed: int = 0, spacing: int = 16_000) -> SimScenario:
    """Notices roughly every ``spacing`` us with warnings uniform on [0, w_max].

    The spacing exceeds an epoch plus the rejoin delay, so nearly every
    notice lands in a live epoch.
    """
    rng = make_rng(seed, "preempt-cal")
    times = spacing * (1 + np.arange(n)) + rng.integers(0, spacing // 4, n)
    times = sorted(int(t) for t in times)
    warns = rng.integers(0, w_max + 1, n)
    faults = tuple(Fault(t, "preemption", warning=int(w)) for t, w in zip(times, warns))
    events = int(times[-1] / PREEMPT_BASE["train_time_per_event"]) + 10_000
    return SimScenario(**PREEMPT_BASE, total_events=events, faults=faults)


def calibrate_preemption_warning(target: float = 0.61, n: int = 2000, seed: int = 0, lo: int = 0, hi: int = 40_000,
                                 iters: int = 16):
    """Bisection on w_max so the simulated commit fraction approaches ``target``.

    Returns (w_max, fraction). Used offline; the result is frozen into the
    calibration scenario file.
    """
    best = None
    for _ in range(iters):
        mid = (lo + hi) // 2
        frac = run(preemption_scenario(mid, n, seed), seed).commit_fraction()
        if best is None or abs(frac - target) < abs(best[1] - target):
            best = (mid, frac)
        if frac < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1:
            break
    return best
