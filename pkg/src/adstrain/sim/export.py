"""JSON and CSV export of simulation reports."""

from __future__ import annotations

import csv
import json
import os

from .audit import audit_exactly_once


def _csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in r])


def chips_series(report):
    """(time, chips_allocated) steps; holds release the pipeline's chips."""
    chips = report.scenario.chips
    pts = [(0, chips)]
    for h in sorted(report.holds, key=lambda h: h.placed_at):
        pts.append((h.placed_at, 0))
        if h.released_at is not None:
            pts.append((h.released_at, chips))
    return pts


def write_report(report, out_dir, audit=None, include_timeline=True):
    """Writes ``report.json`` and ``series/*.csv`` under ``out_dir``; returns the report dict."""
    audit = audit if audit is not None else audit_exactly_once(report)
    os.makedirs(os.path.join(out_dir, "series"), exist_ok=True)
    d = report.to_dict()
    if not include_timeline:
        d.pop("timeline")
    d["audit"] = {"passed": audit.passed, "violations": list(audit.violations), "problems": list(audit.problems)}
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(d, f, indent=1, sort_keys=True)
        f.write("\n")
    s = os.path.join(out_dir, "series")
    cap = report.scenario.host_buffer_capacity
    _csv(os.path.join(s, "buffer_fullness.csv"), ["time_us", "fullness", "buffered_events"],
         [(t, fl, round(fl * cap)) for t, fl, _, _ in report.reader_series])
    _csv(os.path.join(s, "reader_count.csv"), ["time_us", "target_in_flight", "active_readers"],
         [(t, tgt, act) for t, _, tgt, act in report.reader_series])
    _csv(os.path.join(s, "advancing_rate.csv"), ["time_us", "watermark", "advancing_rate"], report.advancing_series)
    _csv(os.path.join(s, "chip_demand.csv"), ["time_us", "chips_allocated"], chips_series(report))
    return d
