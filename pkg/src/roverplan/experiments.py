"""Sweep harness: run one scenario across a parameter range, emit stable CSV.

A sweep is described by a small flat text file (same key = value shape as
scenario files) naming a base scenario, one swept key, the value list, and
the modes to run. Each (value, mode) pair becomes one CSV row; rows are
solved independently (optionally in a process pool) and always written in
sorted order, so output bytes never depend on worker count or scheduling.

Scenarios that cannot survive the full horizon are re-solved at their
maximum feasible prefix and flagged in the status column instead of
aborting the sweep.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass
from pathlib import Path

from .dynamics import replay
from .scenario import (
    MODES,
    ScenarioConfig,
    SchemaError,
    load_scenario,
    scenario_digest,
    serialize_scenario,
)
from .solver import DEFAULT_NODE_BUDGET, InfeasibleHorizonError, solve_exact

CSV_HEADER = (
    "digest,mode,swept_key,swept_value,explored_fraction,completion_epoch,"
    "objective,battery_r1_j,battery_r2_j,battery_r3_j,status"
)

SWEEP_KEYS = ("fleet.count", "energy.p_sen_w", "fleet.b_max_j", "grid.blocked_edges")

# Best-effort reconstructions of the obstacle layouts: horizontal wall
# segments between vertically adjacent cells, stacked from the far half of
# the map toward the start corner.
def _wall_edges(
    segments: tuple[tuple[int, int], ...]
) -> tuple[tuple[tuple[int, int], tuple[int, int]], ...]:
    """Expand wall segments (x, y) sitting between (x,y) and (x,y+1) to moves.

    Each segment blocks its orthogonal crossing; two consecutive segments
    additionally seal the corner they share against diagonal cuts.  A lone
    wall tip can still be skirted diagonally.
    """
    segs = set(segments)
    edges = []
    for x, y in sorted(segs):
        edges.append(((x, y), (x, y + 1)))
        if (x + 1, y) in segs:
            edges.append(((x, y), (x + 1, y + 1)))
            edges.append(((x + 1, y), (x, y + 1)))
    return tuple(edges)


# horizontal wall lines, always leaving the x = 0 column open so every
# cell stays reachable; preset id = number of wall segments
_WALL_SEGMENTS: dict[int, tuple[tuple[int, int], ...]] = {
    0: (),
    3: ((1, 2), (2, 2), (3, 2)),
    7: ((1, 2), (2, 2), (3, 2), (1, 1), (2, 1), (3, 1), (3, 0)),
    9: ((1, 2), (2, 2), (3, 2), (1, 1), (2, 1), (3, 1), (3, 0), (1, 0), (2, 0)),
}

OBSTACLE_PRESETS: dict[int, tuple[tuple[tuple[int, int], tuple[int, int]], ...]] = {
    k: _wall_edges(v) for k, v in _WALL_SEGMENTS.items()
}


@dataclass(frozen=True)
class SweepSpec:
    base: ScenarioConfig
    key: str
    values: tuple[float, ...]
    modes: tuple[str, ...]
    node_budget: int = DEFAULT_NODE_BUDGET

    def __post_init__(self) -> None:
        if self.key not in SWEEP_KEYS:
            raise SchemaError(f"swept key must be one of {SWEEP_KEYS}: {self.key}")
        if not self.values:
            raise SchemaError("sweep needs at least one value")
        bad = [m for m in self.modes if m not in MODES]
        if bad or not self.modes:
            raise SchemaError(f"modes must be a non-empty subset of {MODES}")
        if self.key == "grid.blocked_edges":
            unknown = [v for v in self.values if int(v) not in OBSTACLE_PRESETS]
            if unknown:
                raise SchemaError(f"unknown obstacle presets: {unknown}")


@dataclass(frozen=True)
class ExperimentRecord:
    digest: str
    mode: str
    swept_key: str
    swept_value: float
    explored_fraction: float
    completion_epoch: int
    objective: int
    batteries_j: tuple[float, ...]
    status: str

    def csv_row(self) -> str:
        slots = list(self.batteries_j[:3]) + [None] * (3 - len(self.batteries_j[:3]))
        bats = ",".join("" if b is None else f"{b:.2f}" for b in slots)
        return (
            f"{self.digest},{self.mode},{self.swept_key},{_fmt_value(self.swept_value)},"
            f"{self.explored_fraction:.4f},{self.completion_epoch},{self.objective},"
            f"{bats},{self.status}"
        )


def _fmt_value(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def parse_sweep(text: str, base_dir: Path | str = ".") -> SweepSpec:
    """Read a flat sweep file; `base` is resolved relative to base_dir."""
    seen: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in seen:
            raise SchemaError(f"line {lineno}: duplicate key {key}")
        seen[key] = value
    for req in ("base", "key", "values"):
        if req not in seen:
            raise SchemaError(f"sweep file missing required key: {req}")
    base_path = Path(base_dir) / seen["base"]
    try:
        base = load_scenario(base_path.read_text())
    except OSError as err:
        raise SchemaError(f"cannot read base scenario {base_path}: {err}") from err
    try:
        values = tuple(float(v) for v in seen["values"].replace(";", ",").split(","))
    except ValueError as err:
        raise SchemaError(f"bad values list: {seen['values']!r}") from err
    modes = tuple(
        m.strip().upper() for m in seen.get("modes", ",".join(MODES)).split(",")
    )
    budget = int(seen.get("node_budget", DEFAULT_NODE_BUDGET))
    return SweepSpec(
        base=base, key=seen["key"], values=values, modes=modes, node_budget=budget
    )


def apply_value(base: ScenarioConfig, key: str, value: float, mode: str) -> ScenarioConfig:
    """Derive one sweep point by editing the canonical serialized form."""
    lines = serialize_scenario(base).splitlines()
    if key == "grid.blocked_edges":
        # Swept values are obstacle preset ids, not edge lists.
        edges = OBSTACLE_PRESETS[int(value)]
        text = ";".join(f"{a},{b}-{c},{d}" for (a, b), (c, d) in edges)
        edit = {"grid.blocked_edges": text, "mode": mode}
    else:
        edit = {key: _fmt_value(value), "mode": mode}
    out = []
    for line in lines:
        k = line.split("=")[0].strip()
        out.append(f"{k} = {edit.pop(k)}" if k in edit else line)
    assert not edit, f"keys not present in scenario serialization: {edit}"
    return load_scenario("\n".join(out) + "\n")


def _solve_row(
    args: tuple[SweepSpec, float, str, str, bool]
) -> ExperimentRecord:
    spec, value, mode, tx_index, clamp_charge = args
    config = apply_value(spec.base, spec.key, value, mode)
    status = "ok"
    try:
        res = solve_exact(
            config,
            tx_index=tx_index,
            clamp_charge=clamp_charge,
            node_budget=spec.node_budget,
        )
    except InfeasibleHorizonError as err:
        # The fleet cannot survive the full horizon: report the longest
        # prefix it can survive, flagged so readers know the row is shorter.
        prefix = err.max_feasible_epoch
        short = apply_value(spec.base, spec.key, value, mode)
        short_lines = [
            f"horizon_epochs = {prefix}" if ln.startswith("horizon_epochs") else ln
            for ln in serialize_scenario(short).splitlines()
        ]
        config = load_scenario("\n".join(short_lines) + "\n")
        res = solve_exact(
            config,
            tx_index=tx_index,
            clamp_charge=clamp_charge,
            node_budget=spec.node_budget,
        )
        status = f"drained:{prefix}"
    if not res.certified:
        status = "budget" if status == "ok" else f"budget+{status}"
    return ExperimentRecord(
        digest=scenario_digest(config),
        mode=mode,
        swept_key=spec.key,
        swept_value=value,
        explored_fraction=res.explored_fraction,
        completion_epoch=res.completion_epoch,
        objective=res.objective,
        batteries_j=res.final_batteries_j,
        status=status,
    )


def run_sweep(
    spec: SweepSpec,
    *,
    tx_index: str = "new_cell",
    clamp_charge: bool = False,
    workers: int = 1,
) -> tuple[ExperimentRecord, ...]:
    """Solve every (value, mode) pair; result order is the CSV sort order.

    The experiment harness defaults to charging the uplink on first visit
    (tx_index="new_cell") so radio cost shows up in mode comparisons; pass
    tx_index="as_printed" for the library default instead.
    """
    jobs = [
        (spec, value, mode, tx_index, clamp_charge)
        for value in spec.values
        for mode in spec.modes
    ]
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_solve_row, jobs))
    else:
        records = [_solve_row(job) for job in jobs]
    return tuple(sorted(records, key=lambda r: (r.swept_value, r.mode)))


def format_csv(records: tuple[ExperimentRecord, ...]) -> str:
    return "\n".join([CSV_HEADER, *(r.csv_row() for r in records)]) + "\n"


def exploration_curve(config: ScenarioConfig, plan) -> tuple[tuple[int, int], ...]:
    """(epoch, explored count) pairs for a plan, for step-line plotting."""
    report = replay(plan, config, tx_index="as_printed")
    if report.trace is None:
        raise ValueError("plan fails replay; no curve available")
    counts: dict[int, int] = {}
    for row in report.trace.rows:
        counts[row.epoch] = row.explored_total
    return tuple(sorted(counts.items()))
