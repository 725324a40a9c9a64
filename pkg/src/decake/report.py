"""Run bookkeeping: the per-action timeline and the end-of-run report with
the same columns the cell is evaluated on (mass before/after, removal
percentage, cycle and brushing time), plus the human-operator reference rows
for side-by-side rendering.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class ActionRecord:
    action: str
    start: float
    end: float
    part_id: int | None
    outcome: str

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("action end precedes start")

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class ActionLog:
    """Monotone, non-overlapping ledger of charged actions."""

    records: list[ActionRecord] = field(default_factory=list)
    clock: float = 0.0

    def charge(self, action: str, duration: float, part_id: int | None = None,
               outcome: str = "ok") -> ActionRecord:
        rec = ActionRecord(action, self.clock, self.clock + duration, part_id, outcome)
        self.records.append(rec)
        self.clock = rec.end
        return rec

    def total_for(self, action: str) -> float:
        return sum(r.duration for r in self.records if r.action == action)

    def part_time(self, part_id: int) -> float:
        return sum(r.duration for r in self.records if r.part_id == part_id)

    def timeline(self) -> list[dict]:
        names: list[str] = []
        for r in self.records:
            if r.action not in names:
                names.append(r.action)
        out = []
        for name in names:
            durs = [r.duration for r in self.records if r.action == name]
            out.append({
                "action": name,
                "count": len(durs),
                "total_s": sum(durs),
                "mean_s": sum(durs) / len(durs),
            })
        return out


@dataclass(frozen=True)
class PartRow:
    part_id: int
    mass_before_g: float
    mass_after_g: float
    removal_pct: float
    cycle_time_s: float
    outcome: str


@dataclass(frozen=True)
class BaselineRow:
    """Reference operator numbers (reported, not simulated)."""

    label: str
    mass_before_g: tuple[float, float]   # mean, sd
    mass_after_g: tuple[float, float]
    cycle_time_s: tuple[float, float]
    brushing_time_s: float
    removal_pct: tuple[float, float]


def human_baseline(config=None) -> list[BaselineRow]:
    """The two skilled-operator reference rows used for comparison."""
    return [
        BaselineRow(
            label="Human (no time-limit)",
            mass_before_g=(48.8, 7.8),
            mass_after_g=(29.8, 3.2),
            cycle_time_s=(41.2, 1.9),
            brushing_time_s=40.0,
            removal_pct=(72.0, 12.1),
        ),
        BaselineRow(
            label="Human (20s brushing)",
            mass_before_g=(48.9, 8.0),
            mass_after_g=(34.2, 4.5),
            cycle_time_s=(21.2, 1.1),
            brushing_time_s=20.0,
            removal_pct=(55.5, 17.9),
        ),
    ]


def _mean_sd(values: list[float]) -> tuple[float, float]:
    if not values:
        return (0.0, 0.0)
    mean = sum(values) / len(values)
    if len(values) < 2:
        return (mean, 0.0)
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return (mean, math.sqrt(var))


def removal_percent(before: float, after: float, clean_mass: float) -> float:
    """(removed) / (excess before), clipped to [0, 1], as percent."""
    excess = before - clean_mass
    if excess <= 1e-12:
        return 0.0
    frac = (before - after) / excess
    return 100.0 * min(1.0, max(0.0, frac))


@dataclass
class RunReport:
    seed: int
    rows: list[PartRow]
    log: ActionLog
    dust_collected: float
    flip_area_spill: float

    @property
    def done_count(self) -> int:
        return sum(1 for r in self.rows if r.outcome == "Done")

    @property
    def skipped_count(self) -> int:
        return sum(1 for r in self.rows if r.outcome != "Done")

    def brushing_fraction(self) -> float:
        total = self.log.clock
        return self.log.total_for("clean") / total if total > 0 else 0.0

    def aggregate(self) -> dict:
        before = _mean_sd([r.mass_before_g for r in self.rows])
        after = _mean_sd([r.mass_after_g for r in self.rows])
        removal = _mean_sd([r.removal_pct for r in self.rows])
        cycle = _mean_sd([r.cycle_time_s for r in self.rows])
        return {
            "n_parts": len(self.rows),
            "done": self.done_count,
            "skipped": self.skipped_count,
            "mass_before_g": {"mean": before[0], "sd": before[1]},
            "mass_after_g": {"mean": after[0], "sd": after[1]},
            "removal_pct": {"mean": removal[0], "sd": removal[1]},
            "cycle_time_s": {"mean": cycle[0], "sd": cycle[1]},
            "brushing_time_s": self.log.total_for("clean") / max(1, len(self.rows)),
            "brushing_fraction": self.brushing_fraction(),
            "total_time_s": self.log.clock,
            "dust_collected_g": self.dust_collected,
            "flip_area_spill_g": self.flip_area_spill,
        }

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "parts": [
                {
                    "id": r.part_id,
                    "mass_before_g": r.mass_before_g,
                    "mass_after_g": r.mass_after_g,
                    "removal_pct": r.removal_pct,
                    "cycle_time_s": r.cycle_time_s,
                    "outcome": r.outcome,
                }
                for r in self.rows
            ],
            "aggregate": self.aggregate(),
            "timeline": self.log.timeline(),
            "actions": [
                {
                    "action": rec.action,
                    "start_s": rec.start,
                    "end_s": rec.end,
                    "part_id": rec.part_id,
                    "outcome": rec.outcome,
                }
                for rec in self.log.records
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_text(self, with_baselines: bool = True) -> str:
        agg = self.aggregate()
        rows = [
            ("Mass Before (g)", f"{agg['mass_before_g']['mean']:.1f} ± {agg['mass_before_g']['sd']:.1f}"),
            ("Mass After (g)", f"{agg['mass_after_g']['mean']:.1f} ± {agg['mass_after_g']['sd']:.1f}"),
            ("Removal (%)", f"{agg['removal_pct']['mean']:.1f} ± {agg['removal_pct']['sd']:.1f}"),
            ("Cycle Time (s)", f"{agg['cycle_time_s']['mean']:.1f} ± {agg['cycle_time_s']['sd']:.1f}"),
            ("Brushing Time (s)", f"{agg['brushing_time_s']:.0f}"),
        ]
        lines = [f"Run report — seed {self.seed}: "
                 f"{agg['done']}/{agg['n_parts']} parts done, "
                 f"{agg['skipped']} skipped, "
                 f"{agg['dust_collected_g']:.1f} g dust collected",
                 ""]
        if with_baselines:
            baselines = human_baseline()
            header = f"{'Avg per part':<22}{'This run':>16}" + "".join(
                f"{b.label:>24}" for b in baselines)
            lines.append(header)
            lines.append("-" * len(header))
            base_cells = {
                "Mass Before (g)": [f"{b.mass_before_g[0]:.1f} ± {b.mass_before_g[1]:.1f}" for b in baselines],
                "Mass After (g)": [f"{b.mass_after_g[0]:.1f} ± {b.mass_after_g[1]:.1f}" for b in baselines],
                "Removal (%)": [f"{b.removal_pct[0]:.1f} ± {b.removal_pct[1]:.1f}" for b in baselines],
                "Cycle Time (s)": [f"{b.cycle_time_s[0]:.1f} ± {b.cycle_time_s[1]:.1f}" for b in baselines],
                "Brushing Time (s)": [f"{b.brushing_time_s:.0f}" for b in baselines],
            }
            for name, value in rows:
                cells = "".join(f"{c:>24}" for c in base_cells[name])
                lines.append(f"{name:<22}{value:>16}{cells}")
        else:
            for name, value in rows:
                lines.append(f"{name:<22}{value:>16}")
        lines.append("")
        lines.append(f"{'Action timeline':<22}{'count':>8}{'total s':>12}{'mean s':>10}")
        lines.append("-" * 52)
        for t in self.log.timeline():
            lines.append(f"{t['action']:<22}{t['count']:>8}{t['total_s']:>12.1f}{t['mean_s']:>10.2f}")
        lines.append(f"{'brushing fraction':<22}{agg['brushing_fraction']:>8.3f}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        out = ["id,mass_before_g,mass_after_g,removal_pct,cycle_time_s,outcome"]
        for r in self.rows:
            out.append(f"{r.part_id},{r.mass_before_g:.6f},{r.mass_after_g:.6f},"
                       f"{r.removal_pct:.4f},{r.cycle_time_s:.3f},{r.outcome}")
        return "\n".join(out) + "\n"
