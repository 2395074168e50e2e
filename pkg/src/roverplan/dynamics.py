"""Fleet dynamics: joint actions, battery recursions, replay validation.

All battery arithmetic runs on integer millijoules. Energy constants are
scaled once per scenario into a CostModel; the equality recursions then stay
exact, which the solver's dominance pruning and the replay validator rely on.

Two recursion modes:

* OROS: receive power always (unless charging), sensing only when entering an
  unexplored cell, uplink gated by the explored mask. The default
  ``tx_index="as_printed"`` charges uplink at the old cell against the current
  mask (a term that is always zero because an occupied cell is explored by
  construction); ``tx_index="new_cell"`` charges it at the entered cell when
  that cell is new.
* SLAM: receive and sensing power every non-charging epoch, uplink at the new
  cell every non-charging epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from .scenario import (
    Cell,
    InvariantError,
    ScenarioConfig,
    scenario_digest,
    terrain_velocity,
    tx_energy,
)

TX_INDEX_VALUES = ("as_printed", "new_cell")


class InfeasibleActionError(ValueError):
    """Joint action not admissible from the given state."""


class PlanMismatchError(ValueError):
    """Plan does not belong to the scenario being replayed."""


def _mj(joules: float) -> int:
    return round(joules * 1000.0)


@dataclass(frozen=True)
class CostModel:
    """Integer-millijoule tables compiled from a scenario."""

    n_cells: int
    cols: int
    n_robots: int
    horizon: int
    mode: str
    tx_index: str
    clamp_charge: bool
    start_id: int
    cs_id: int
    bmax_mj: int
    rx_mj: int
    sen_mj: int
    charge_mj: int
    # per cell id: ((target_id, move_mj), ...) sorted by target id, self included
    moves: tuple[tuple[tuple[int, int], ...], ...]
    tx_mj: tuple[int, ...]

    def move_cost(self, frm: int, to: int) -> int | None:
        for target, cost in self.moves[frm]:
            if target == to:
                return cost
        return None


@lru_cache(maxsize=256)
def compile_costs(
    config: ScenarioConfig, tx_index: str = "as_printed", clamp_charge: bool = False
) -> CostModel:
    if tx_index not in TX_INDEX_VALUES:
        raise InvariantError(f"tx_index must be one of {TX_INDEX_VALUES}: {tx_index}")
    grid = config.grid
    e = config.energy
    moves = []
    for idx in range(grid.n_cells):
        cell = grid.id_to_cell(idx)
        row = [(idx, _mj(e.move_alpha_w * e.delta_t_s))]
        for nxt in grid.open_neighbors(cell):
            m = terrain_velocity(cell, nxt, grid)
            row.append((grid.cell_id(nxt), _mj((e.move_alpha_w + e.move_beta * m) * e.delta_t_s)))
        row.sort()
        moves.append(tuple(row))
    tx = tuple(_mj(tx_energy(grid.id_to_cell(i), config)) for i in range(grid.n_cells))
    return CostModel(
        n_cells=grid.n_cells,
        cols=grid.cols,
        n_robots=config.fleet.count,
        horizon=config.horizon_epochs,
        mode=config.mode,
        tx_index=tx_index,
        clamp_charge=clamp_charge,
        start_id=grid.cell_id(config.fleet.start_cell),
        cs_id=grid.cell_id(config.stations.cs_cell),
        bmax_mj=_mj(config.fleet.b_max_j),
        rx_mj=_mj(e.p_rx_w * e.delta_t_s),
        sen_mj=_mj(e.p_sen_w * e.delta_t_s),
        charge_mj=_mj(config.stations.charge_rate_j_per_s * e.delta_t_s),
        moves=tuple(moves),
        tx_mj=tx,
    )


@dataclass(frozen=True)
class FleetState:
    """Joint state at one epoch; explored always contains every position."""

    epoch: int
    positions: tuple[Cell, ...]
    batteries_mj: tuple[int, ...]
    explored: frozenset[Cell]
    charging: tuple[bool, ...]

    @property
    def batteries_j(self) -> tuple[float, ...]:
        return tuple(b / 1000.0 for b in self.batteries_mj)


@dataclass(frozen=True)
class JointAction:
    targets: tuple[Cell, ...]
    charge: tuple[bool, ...]


@dataclass(frozen=True)
class EnergyItems:
    """Per-robot millijoule line items for one epoch."""

    move_mj: int
    rx_mj: int
    tx_mj: int
    sen_mj: int
    charge_mj: int


@dataclass(frozen=True)
class Plan:
    digest: str
    mode: str
    # positions[r][t-1] is robot r's cell at epoch t; charge[r][t-1] its flag
    positions: tuple[tuple[Cell, ...], ...]
    charge: tuple[tuple[bool, ...], ...]

    @property
    def n_robots(self) -> int:
        return len(self.positions)

    @property
    def horizon(self) -> int:
        return len(self.positions[0]) if self.positions else 0


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    robot: int
    cell: Cell
    battery_mj: int
    charging: bool
    items: EnergyItems
    explored_total: int


@dataclass(frozen=True)
class ReplayTrace:
    rows: tuple[TraceRow, ...]
    objective: int
    explored_total: int
    final_state: FleetState


@dataclass(frozen=True)
class Violation:
    epoch: int
    robot: int | None
    constraint: str
    detail: str


@dataclass(frozen=True)
class ReplayReport:
    ok: bool
    trace: ReplayTrace | None
    violation: Violation | None


def initial_state(config: ScenarioConfig) -> FleetState:
    """Epoch-1 state: everyone at the start cell, full batteries, no charging."""
    n = config.fleet.count
    start = config.fleet.start_cell
    return FleetState(
        epoch=1,
        positions=(start,) * n,
        batteries_mj=(_mj(config.fleet.b_max_j),) * n,
        explored=frozenset({start}),
        charging=(False,) * n,
    )


def _robot_options(state_pos: Cell, config: ScenarioConfig) -> list[tuple[Cell, bool]]:
    grid = config.grid
    cs = config.stations.cs_cell
    allow_charge = config.stations.charge_rate_j_per_s > 0
    targets = [state_pos] + config.grid.open_neighbors(state_pos)
    targets.sort(key=lambda c: grid.cell_id(c))
    options: list[tuple[Cell, bool]] = []
    for t in targets:
        options.append((t, False))
        if allow_charge and t == cs:
            options.append((t, True))
    return options


def enumerate_actions(state: FleetState, config: ScenarioConfig) -> list[JointAction]:
    """Every kinematically admissible joint action, canonical order.

    Canonical order is robot-major with per-robot options sorted by
    (row-major target id, charge false before true). Battery feasibility is
    step's concern, not enumeration's. At most one robot may charge; a
    zero-rate charging station offers no charging service.
    """
    if state.epoch >= config.horizon_epochs:
        raise InvariantError("no actions beyond the horizon")
    per_robot = [_robot_options(p, config) for p in state.positions]
    out: list[JointAction] = []

    def rec(r: int, targets: list[Cell], charge: list[bool], chargers: int) -> None:
        if r == len(per_robot):
            out.append(JointAction(targets=tuple(targets), charge=tuple(charge)))
            return
        for t, u in per_robot[r]:
            if u and chargers:
                continue
            targets.append(t)
            charge.append(u)
            rec(r + 1, targets, charge, chargers + (1 if u else 0))
            targets.pop()
            charge.pop()

    rec(0, [], [], 0)
    return out


def robot_energy_mj(
    cm: CostModel,
    u_new: bool,
    old_id: int,
    new_id: int,
    old_explored: bool,
    new_explored: bool,
    battery_mj: int,
) -> EnergyItems | None:
    """Millijoule line items for one robot's transition; None if the move is blocked."""
    move = cm.move_cost(old_id, new_id)
    if move is None:
        return None
    u = 1 if u_new else 0
    if u and cm.clamp_charge:
        gain = min(cm.bmax_mj - battery_mj, cm.charge_mj)
    elif u:
        gain = cm.charge_mj
    else:
        gain = 0
    if cm.mode == "OROS":
        rx = cm.rx_mj * (1 - u)
        sen = cm.sen_mj if not new_explored else 0
        if cm.tx_index == "new_cell":
            tx = cm.tx_mj[new_id] if not new_explored else 0
        else:
            tx = cm.tx_mj[old_id] if not old_explored else 0
    else:
        rx = cm.rx_mj * (1 - u)
        sen = cm.sen_mj * (1 - u)
        tx = cm.tx_mj[new_id] * (1 - u)
    return EnergyItems(move_mj=move, rx_mj=rx, tx_mj=tx, sen_mj=sen, charge_mj=gain)


def transition(
    state: FleetState,
    action: JointAction,
    config: ScenarioConfig,
    *,
    tx_index: str = "as_printed",
    clamp_charge: bool = False,
) -> tuple[FleetState, tuple[EnergyItems, ...]]:
    """Apply one joint action; returns the next state and per-robot energy items.

    Raises InfeasibleActionError on any admissibility failure: kinematics,
    charging rules or battery bounds.
    """
    cm = compile_costs(config, tx_index, clamp_charge)
    n = config.fleet.count
    if len(action.targets) != n or len(action.charge) != n:
        raise InfeasibleActionError(f"action arity {len(action.targets)} != fleet {n}")
    if state.epoch >= config.horizon_epochs:
        raise InfeasibleActionError("horizon exceeded")
    if sum(action.charge) > 1:
        raise InfeasibleActionError("more than one robot charging")
    if any(action.charge) and config.stations.charge_rate_j_per_s <= 0:
        raise InfeasibleActionError("charging requested at a zero-rate station")
    grid = config.grid
    cs = config.stations.cs_cell
    new_batteries = []
    items_out = []
    for r in range(n):
        tgt = action.targets[r]
        if not grid.in_bounds(tgt):
            raise InfeasibleActionError(f"robot {r + 1}: target off grid: {tgt}")
        if action.charge[r] and tgt != cs:
            raise InfeasibleActionError(f"robot {r + 1}: charging away from the station")
        old = state.positions[r]
        da, db = abs(old[0] - tgt[0]), abs(old[1] - tgt[1])
        if da > 1 or db > 1:
            raise InfeasibleActionError(f"robot {r + 1}: non-adjacent move {old} -> {tgt}")
        items = robot_energy_mj(
            cm,
            action.charge[r],
            grid.cell_id(old),
            grid.cell_id(tgt),
            old in state.explored,
            tgt in state.explored,
            state.batteries_mj[r],
        )
        if items is None:
            raise InfeasibleActionError(f"robot {r + 1}: blocked edge {old} -> {tgt}")
        b = state.batteries_mj[r] + items.charge_mj - (
            items.move_mj + items.rx_mj + items.tx_mj + items.sen_mj
        )
        if b < 0:
            raise InfeasibleActionError(
                f"robot {r + 1}: battery below zero at epoch {state.epoch + 1}"
            )
        if b > cm.bmax_mj:
            raise InfeasibleActionError(
                f"robot {r + 1}: battery above capacity at epoch {state.epoch + 1}"
            )
        new_batteries.append(b)
        items_out.append(items)
    new_state = FleetState(
        epoch=state.epoch + 1,
        positions=tuple(action.targets),
        batteries_mj=tuple(new_batteries),
        explored=state.explored | set(action.targets),
        charging=tuple(action.charge),
    )
    return new_state, tuple(items_out)


def step(
    state: FleetState,
    action: JointAction,
    config: ScenarioConfig,
    *,
    tx_index: str = "as_printed",
    clamp_charge: bool = False,
) -> FleetState:
    return transition(state, action, config, tx_index=tx_index, clamp_charge=clamp_charge)[0]


# --- replay --------------------------------------------------------------


def replay(
    plan: Plan,
    config: ScenarioConfig,
    *,
    tx_index: str = "as_printed",
    clamp_charge: bool = False,
) -> ReplayReport:
    """Re-simulate a plan and validate every constraint epoch by epoch.

    Digest or mode mismatches raise PlanMismatchError (wrong inputs, not a
    verdict); everything else is reported as the first Violation found.
    """
    digest = scenario_digest(config)
    if plan.digest != digest:
        raise PlanMismatchError(f"plan digest {plan.digest[:12]}.. != scenario {digest[:12]}..")
    if plan.mode != config.mode:
        raise PlanMismatchError(f"plan mode {plan.mode} != scenario mode {config.mode}")
    n = config.fleet.count
    horizon = config.horizon_epochs
    if plan.n_robots != n:
        raise PlanMismatchError(f"plan robots {plan.n_robots} != fleet {n}")
    if any(len(seq) != horizon for seq in plan.positions) or any(
        len(seq) != horizon for seq in plan.charge
    ):
        raise PlanMismatchError("plan sequences must span the horizon")

    cm = compile_costs(config, tx_index, clamp_charge)
    grid = config.grid
    cs = config.stations.cs_cell
    start = config.fleet.start_cell

    def fail(epoch: int, robot: int | None, constraint: str, detail: str) -> ReplayReport:
        return ReplayReport(
            ok=False, trace=None, violation=Violation(epoch, robot, constraint, detail)
        )

    for r in range(n):
        if plan.positions[r][0] != start:
            return fail(1, r + 1, "start-cell", f"epoch 1 at {plan.positions[r][0]}, not {start}")
        if plan.charge[r][0]:
            return fail(1, r + 1, "initial-charge", "charging flag set at epoch 1")

    state = initial_state(config)
    zero = EnergyItems(0, 0, 0, 0, 0)
    rows = [
        TraceRow(1, r + 1, start, state.batteries_mj[r], False, zero, 1) for r in range(n)
    ]
    objective = len(state.explored)

    for t in range(2, horizon + 1):
        targets = tuple(plan.positions[r][t - 1] for r in range(n))
        charge = tuple(plan.charge[r][t - 1] for r in range(n))
        if sum(charge) > 1:
            return fail(t, None, "charger-exclusivity", "more than one robot charging")
        new_batteries = []
        all_items = []
        for r in range(n):
            tgt = targets[r]
            if not grid.in_bounds(tgt):
                return fail(t, r + 1, "off-grid", f"target {tgt}")
            old = state.positions[r]
            da, db = abs(old[0] - tgt[0]), abs(old[1] - tgt[1])
            if da > 1 or db > 1:
                return fail(t, r + 1, "adjacency", f"{old} -> {tgt}")
            if grid.is_blocked(old, tgt):
                return fail(t, r + 1, "blocked-edge", f"{old} -> {tgt}")
            if charge[r] and tgt != cs:
                return fail(t, r + 1, "charge-location", f"charging at {tgt}, station is {cs}")
            if charge[r] and config.stations.charge_rate_j_per_s <= 0:
                return fail(t, r + 1, "charge-disabled", "station has zero charge rate")
            items = robot_energy_mj(
                cm,
                charge[r],
                grid.cell_id(old),
                grid.cell_id(tgt),
                old in state.explored,
                tgt in state.explored,
                state.batteries_mj[r],
            )
            assert items is not None
            b = state.batteries_mj[r] + items.charge_mj - (
                items.move_mj + items.rx_mj + items.tx_mj + items.sen_mj
            )
            if b < 0:
                return fail(t, r + 1, "battery-lower-bound", f"battery {b / 1000.0:.2f} J")
            if b > cm.bmax_mj:
                return fail(t, r + 1, "battery-upper-bound", f"battery {b / 1000.0:.2f} J")
            new_batteries.append(b)
            all_items.append(items)
        state = FleetState(
            epoch=t,
            positions=targets,
            batteries_mj=tuple(new_batteries),
            explored=state.explored | set(targets),
            charging=charge,
        )
        total = len(state.explored)
        objective += total
        rows.extend(
            TraceRow(t, r + 1, targets[r], new_batteries[r], charge[r], all_items[r], total)
            for r in range(n)
        )

    trace = ReplayTrace(
        rows=tuple(rows),
        objective=objective,
        explored_total=len(state.explored),
        final_state=state,
    )
    return ReplayReport(ok=True, trace=trace, violation=None)


# --- plan and trace serialization ---------------------------------------


@dataclass(frozen=True)
class PlanDocument:
    plan: Plan
    tx_index: str
    clamp_charge: bool


def format_plan(
    plan: Plan, *, tx_index: str = "as_printed", clamp_charge: bool = False
) -> str:
    lines = [f"# digest={plan.digest}", f"# mode={plan.mode}"]
    if tx_index != "as_printed":
        lines.append(f"# tx_index={tx_index}")
    if clamp_charge:
        lines.append("# clamp_charge=1")
    for t in range(1, plan.horizon + 1):
        for r in range(plan.n_robots):
            a, b = plan.positions[r][t - 1]
            u = 1 if plan.charge[r][t - 1] else 0
            lines.append(f"{t},{r + 1},{a},{b},{u}")
    return "\n".join(lines) + "\n"


def parse_plan(text: str) -> PlanDocument:
    digest = None
    mode = None
    tx_index = "as_printed"
    clamp_charge = False
    entries: dict[tuple[int, int], tuple[Cell, bool]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if body.startswith("digest="):
                digest = body.removeprefix("digest=").strip()
            elif body.startswith("mode="):
                mode = body.removeprefix("mode=").strip().upper()
            elif body.startswith("tx_index="):
                tx_index = body.removeprefix("tx_index=").strip()
            elif body.startswith("clamp_charge="):
                clamp_charge = body.removeprefix("clamp_charge=").strip() == "1"
            continue
        parts = stripped.split(",")
        if len(parts) != 5:
            raise ValueError(f"plan line {lineno}: want epoch,robot,a,b,charge")
        t, r, a, b, u = (int(p) for p in parts)
        if (t, r) in entries:
            raise ValueError(f"plan line {lineno}: duplicate epoch {t} robot {r}")
        entries[(t, r)] = ((a, b), bool(u))
    if digest is None or mode is None:
        raise ValueError("plan file must carry # digest= and # mode= headers")
    if not entries:
        raise ValueError("plan file has no rows")
    horizon = max(t for t, _ in entries)
    robots = max(r for _, r in entries)
    positions = []
    charge = []
    for r in range(1, robots + 1):
        pos_seq = []
        chg_seq = []
        for t in range(1, horizon + 1):
            if (t, r) not in entries:
                raise ValueError(f"plan missing epoch {t} robot {r}")
            cell, u = entries[(t, r)]
            pos_seq.append(cell)
            chg_seq.append(u)
        positions.append(tuple(pos_seq))
        charge.append(tuple(chg_seq))
    plan = Plan(digest=digest, mode=mode, positions=tuple(positions), charge=tuple(charge))
    return PlanDocument(plan=plan, tx_index=tx_index, clamp_charge=clamp_charge)


TRACE_HEADER = "epoch,robot,a,b,battery_j,charging,move_j,rx_j,tx_j,sen_j,charge_j,explored_total"


def format_trace_csv(trace: ReplayTrace) -> str:
    lines = [TRACE_HEADER]
    for row in trace.rows:
        it = row.items
        lines.append(
            f"{row.epoch},{row.robot},{row.cell[0]},{row.cell[1]},"
            f"{row.battery_mj / 1000.0:.2f},{1 if row.charging else 0},"
            f"{it.move_mj / 1000.0:.2f},{it.rx_mj / 1000.0:.2f},{it.tx_mj / 1000.0:.2f},"
            f"{it.sen_mj / 1000.0:.2f},{it.charge_mj / 1000.0:.2f},{row.explored_total}"
        )
    return "\n".join(lines) + "\n"
