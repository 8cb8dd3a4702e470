"""Fleet-level chip demand by pipeline state."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..errors import InvalidArgument

TRAINING, QUEUED, ON_HOLD = "training", "queued", "on_hold"
STATES = (TRAINING, QUEUED, ON_HOLD)


@dataclass(frozen=True)
class PipelineDemand:
    name: str
    chips: int
    state: str

    def __post_init__(self):
        if self.state not in STATES:
            raise InvalidArgument(f"unknown pipeline state {self.state!r}")
        if self.chips < 0:
            raise InvalidArgument("chips must be >= 0")


@dataclass(frozen=True)
class ChipDemand:
    training: int
    queued: int
    on_hold: int

    @property
    def ratios(self) -> Optional[tuple]:
        """(1, queued/training, on_hold/training); None when nothing is training."""
        if self.training == 0:
            return None
        return (1.0, self.queued / self.training, self.on_hold / self.training)

    def to_dict(self):
        return {"training": self.training, "queued": self.queued, "on_hold": self.on_hold, "ratios": self.ratios}


def chip_demand_snapshot(fleet) -> ChipDemand:
    tot = {s: 0 for s in STATES}
    for p in fleet:
        tot[p.state] += p.chips
    return ChipDemand(tot[TRAINING], tot[QUEUED], tot[ON_HOLD])


def on_hold_at(report, t) -> bool:
    for h in report.holds:
        if h.placed_at <= t and (h.released_at is None or t < h.released_at):
            return True
    return False


def fleet_at(pipelines, t, ceiling=None):
    """States of (name, chips, SimReport) pipelines at time t.

    Held pipelines release their chips. The rest want to train and are
    admitted in list order while they fit under ``ceiling``; the others queue.
    Pipelines that already finished are left out.
    """
    out = []
    used = 0
    for name, chips, rep in pipelines:
        if on_hold_at(rep, t):
            out.append(PipelineDemand(name, chips, ON_HOLD))
        elif rep.final_state == "done" and rep.end_time <= t:
            continue
        elif ceiling is None or used + chips <= ceiling:
            used += chips
            out.append(PipelineDemand(name, chips, TRAINING))
        else:
            out.append(PipelineDemand(name, chips, QUEUED))
    return out
