"""Exactly-once and protocol audits over a finished SimReport."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import SimReport


@dataclass(frozen=True)
class AuditResult:
    violations: tuple = ()  # offending event ids (truncated)
    problems: tuple = ()
    n_violations: int = 0

    @property
    def passed(self):
        return self.n_violations == 0 and not self.problems

    def __bool__(self):
        return self.passed

    def summary(self):
        if self.passed:
            return "exactly-once: PASS"
        return f"exactly-once: FAIL ({self.n_violations} event ids, {len(self.problems)} protocol problems)"


def audit_exactly_once(report: SimReport, max_listed: int = 1000) -> AuditResult:
    counts = report.trained_counts()
    W = report.final_watermark
    ids = np.arange(counts.size)
    bad = np.flatnonzero(np.where(ids <= W, counts != 1, counts != 0))
    problems = []

    for e in report.epochs:
        if e.committed and e.checkpoint_id is None:
            problems.append(f"epoch {e.index} committed without checkpoint")
        if not e.committed and e.checkpoint_id is not None:
            problems.append(f"epoch {e.index} uncommitted but has checkpoint {e.checkpoint_id}")
        if e.failures and e.committed:
            problems.append(f"epoch {e.index} had failures {list(e.failures)} yet committed")
    marks = [c.watermark for c in report.checkpoints]
    if any(b <= a for a, b in zip(marks, marks[1:])):
        problems.append("checkpoint watermarks not strictly increasing")
    if marks and marks[-1] != W:
        problems.append("final watermark disagrees with last checkpoint")

    issues = [e[0] for e in report.timeline if e[1] == "issue"]
    for p in report.preemptions:
        if p.exit_at is None or p.rejoin_at is None:
            continue
        if any(p.exit_at <= t < p.rejoin_at for t in issues):
            problems.append(f"work issued while job {p.job} was away ({p.exit_at}..{p.rejoin_at})")
    for h in report.holds:
        if h.kind == "permanent_error" and h.released_at is not None:
            problems.append("permanent hold was released")
        if h.kind == "transient_stall" and any(h.placed_at <= t < h.released_at for t in issues):
            problems.append(f"work issued during hold {h.placed_at}..{h.released_at}")

    return AuditResult(tuple(int(i) for i in bad[:max_listed]), tuple(problems), int(bad.size))
