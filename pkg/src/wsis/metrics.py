"""Episode metrics: total profit, fluctuation severity, violation occurrence."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .mdp import GridRecord


@dataclass
class EpisodeSummary:
    total_profit: float
    fs: float
    vo: int
    revenue: float
    degradation_total: float
    records: Optional[list] = field(default=None, repr=False)
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {"total_profit": self.total_profit, "fs": self.fs, "vo": self.vo,
             "revenue": self.revenue, "degradation_total": self.degradation_total}
        d.update(self.extras)
        return d


def _ordered(records):
    return sorted(records, key=lambda r: r.minute)


def total_profit(records: Sequence[GridRecord]) -> float:
    return math.fsum(r.revenue - r.degradation_cost for r in records)


def fluctuation_severity(records: Sequence[GridRecord]) -> float:
    """Sum of minute-to-minute grid power changes.

    The first record carries the fluctuation against the episode's
    initial grid power, which is zero when the battery starts idle.
    """
    return math.fsum(r.p_fg for r in _ordered(records))


def violation_occurrence(records: Sequence[GridRecord], threshold: float) -> int:
    # a fluctuation exactly at the threshold is not a violation
    return sum(1 for r in records if r.p_fg > threshold)


def fluctuation_from_grid_power(p_g: Sequence[float]) -> float:
    """FS of a bare grid-power sequence; the first sample has no predecessor."""
    return math.fsum(abs(b - a) for a, b in zip(p_g[:-1], p_g[1:]))


def violations_from_grid_power(p_g: Sequence[float], threshold: float) -> int:
    return sum(1 for a, b in zip(p_g[:-1], p_g[1:]) if abs(b - a) > threshold)


def summarize(records: Sequence[GridRecord], threshold: float, keep_records: bool = True,
              **extras) -> EpisodeSummary:
    return EpisodeSummary(
        total_profit=total_profit(records),
        fs=fluctuation_severity(records),
        vo=violation_occurrence(records, threshold),
        revenue=math.fsum(r.revenue for r in records),
        degradation_total=math.fsum(r.degradation_cost for r in records),
        records=list(records) if keep_records else None,
        extras=dict(extras),
    )


def average(summaries: Sequence[EpisodeSummary]) -> dict:
    keys = ("total_profit", "fs", "vo", "revenue", "degradation_total")
    return {k: float(np.mean([getattr(s, k) for s in summaries])) for k in keys}


@dataclass
class ReportRow:
    method: str
    scenario: str
    total_profit: float
    fs: float
    vo: float
    rel_profit: Optional[float]
    rel_fs: Optional[float]
    rel_vo: Optional[float]
    flag: str = ""


def _ratio(value, base):
    if base == 0:
        return None
    return value / base


def relative_report(candidates: dict, baseline) -> list[ReportRow]:
    """Ratios of each method's metrics to the baseline's.

    ``candidates`` maps method name to either one summary or a mapping
    ``scenario -> summary``; ``baseline`` has the same shape. With several
    scenarios an ``average`` row is appended per method.
    """
    def as_map(v):
        if isinstance(v, EpisodeSummary):
            return {"all": v}
        return dict(v)

    base = as_map(baseline)
    rows = []
    for method, value in candidates.items():
        per = as_map(value)
        for scen, s in per.items():
            rows.append(_row(method, scen, s.total_profit, s.fs, s.vo, base[scen].total_profit,
                             base[scen].fs, base[scen].vo))
        if len(per) > 1:
            m = average(list(per.values()))
            b = average([base[k] for k in per])
            rows.append(_row(method, "average", m["total_profit"], m["fs"], m["vo"],
                             b["total_profit"], b["fs"], b["vo"]))
    return rows


def _row(method, scen, profit, fs, vo, b_profit, b_fs, b_vo):
    rel = (_ratio(profit, b_profit), _ratio(fs, b_fs), _ratio(vo, b_vo))
    flag = "zero-baseline" if any(r is None for r in rel) else ""
    return ReportRow(method, scen, profit, fs, vo, *rel, flag=flag)


REPORT_FIELDS = ("method", "scenario", "total_profit", "fs", "vo", "rel_profit", "rel_fs", "rel_vo")


def write_report_csv(rows: Sequence[ReportRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in rows:
            w.writerow([_fmt(getattr(r, f)) for f in REPORT_FIELDS])


def write_report_json(rows: Sequence[ReportRow], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([{f: getattr(r, f) for f in REPORT_FIELDS + ("flag",)} for r in rows], fh,
                  indent=2)
        fh.write("\n")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)
