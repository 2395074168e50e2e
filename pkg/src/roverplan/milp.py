"""Time-expanded mixed-integer encoding and fixed-form MPS interchange.

The planner's search model is re-stated here as a static program: one binary
occupancy variable per robot/epoch/cell, charge flags, an explored mask per
epoch/cell, and continuous battery levels. The two binary products in the
battery recursion (movement pairs, and sensing gated by the previous mask)
are linearized with standard AND inequalities, so the battery update becomes
a plain linear equality row in integer millijoules.

`write_model` emits deterministic fixed-form MPS text (sorted names, one
coefficient per line, integer markers) so exports can be pinned byte-exact
and fed to off-the-shelf solvers; `parse_model` is the strict re-reader and
`check_solution` validates external assignments against both the rows and an
independent replay of the decoded plan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dynamics import Plan, compile_costs, replay
from .scenario import ScenarioConfig, scenario_digest

TOL = 1e-6

_INT_MARKER_ON = "'INTORG'"
_INT_MARKER_OFF = "'INTEND'"


@dataclass(frozen=True)
class MilpVar:
    name: str
    integer: bool
    lo: float
    hi: float


@dataclass(frozen=True)
class MilpRow:
    name: str
    sense: str  # "L" <=, "G" >=, "E" =
    coeffs: tuple[tuple[str, int], ...]
    rhs: int


@dataclass(frozen=True)
class MilpInstance:
    name: str
    variables: tuple[MilpVar, ...]
    rows: tuple[MilpRow, ...]
    objective: tuple[tuple[str, int], ...]  # maximized
    config: ScenarioConfig | None = field(default=None, compare=False)
    tx_index: str = "as_printed"

    def var_map(self) -> dict[str, MilpVar]:
        return {v.name: v for v in self.variables}


@dataclass(frozen=True)
class CheckViolation:
    name: str
    detail: str
    slack: float


@dataclass(frozen=True)
class CheckReport:
    ok: bool
    objective: float
    violations: tuple[CheckViolation, ...]
    replay_objective: int | None


def _lname(r: int, t: int, a: int, b: int) -> str:
    return f"l_r{r}_t{t}_a{a}_b{b}"


def _ename(t: int, a: int, b: int) -> str:
    return f"e_t{t}_a{a}_b{b}"


def encode(config: ScenarioConfig, tx_index: str = "as_printed") -> MilpInstance:
    """Build the full time-expanded instance for one scenario.

    Every coefficient is an integer millijoule (or a bare count), matching
    the simulator's cost model exactly; battery rows are equalities, so a
    feasible assignment is feasible for the simulator and vice versa.
    """
    cm = compile_costs(config, tx_index)
    grid = config.grid
    R, T = cm.n_robots, cm.horizon
    cells = [grid.id_to_cell(i) for i in range(grid.n_cells)]
    cs = grid.id_to_cell(cm.cs_id)
    start = grid.id_to_cell(cm.start_id)
    assert grid.cols <= 99 and len(cells) // grid.cols <= 99 and T <= 999

    variables: list[MilpVar] = []
    rows: list[MilpRow] = []

    for r in range(1, R + 1):
        for t in range(1, T + 1):
            for a, b in cells:
                if t == 1:
                    v = 1.0 if (a, b) == start else 0.0
                    variables.append(MilpVar(_lname(r, t, a, b), True, v, v))
                else:
                    variables.append(MilpVar(_lname(r, t, a, b), True, 0.0, 1.0))
            # No transition precedes epoch 1, so its charge flag is pinned off;
            # a zero-rate station never charges anyone.
            if t == 1 or cm.charge_mj == 0:
                variables.append(MilpVar(f"u_r{r}_t{t}", True, 0.0, 0.0))
            else:
                variables.append(MilpVar(f"u_r{r}_t{t}", True, 0.0, 1.0))
            bmax = float(cm.bmax_mj)
            if t == 1:
                variables.append(MilpVar(f"b_r{r}_t{t}", False, bmax, bmax))
            else:
                variables.append(MilpVar(f"b_r{r}_t{t}", False, 0.0, bmax))
    for t in range(1, T + 1):
        for a, b in cells:
            variables.append(MilpVar(_ename(t, a, b), True, 0.0, 1.0))

    # Station capacity and charge-position coupling.
    for t in range(1, T + 1):
        rows.append(
            MilpRow(
                f"cs_t{t}", "L", tuple((f"u_r{r}_t{t}", 1) for r in range(1, R + 1)), 1
            )
        )
        for r in range(1, R + 1):
            rows.append(
                MilpRow(
                    f"ucs_r{r}_t{t}",
                    "L",
                    ((f"u_r{r}_t{t}", 1), (_lname(r, t, *cs), -1)),
                    0,
                )
            )

    # Exactly one cell per robot per epoch.
    for r in range(1, R + 1):
        for t in range(1, T + 1):
            rows.append(
                MilpRow(
                    f"one_r{r}_t{t}",
                    "E",
                    tuple((_lname(r, t, a, b), 1) for a, b in cells),
                    1,
                )
            )

    # Mask dynamics: grows only where a robot stands, never shrinks, and must
    # cover every occupied cell.
    for t in range(1, T + 1):
        for a, b in cells:
            up = [(_ename(t, a, b), 1)]
            if t > 1:
                up.append((_ename(t - 1, a, b), -1))
            up.extend((_lname(r, t, a, b), -1) for r in range(1, R + 1))
            rows.append(MilpRow(f"eup_t{t}_a{a}_b{b}", "L", tuple(up), 0))
            if t > 1:
                rows.append(
                    MilpRow(
                        f"emo_t{t}_a{a}_b{b}",
                        "L",
                        ((_ename(t - 1, a, b), 1), (_ename(t, a, b), -1)),
                        0,
                    )
                )
            occ = [(_lname(r, t, a, b), 1) for r in range(1, R + 1)]
            occ.append((_ename(t, a, b), -R))
            rows.append(MilpRow(f"eoc_t{t}_a{a}_b{b}", "L", tuple(occ), 0))

    # Mobility: next-epoch occupancy needs an open predecessor in range.
    for r in range(1, R + 1):
        for t in range(1, T):
            for a, b in cells:
                srcs = [(_lname(r, t + 1, a, b), 1), (_lname(r, t, a, b), -1)]
                srcs.extend(
                    (_lname(r, t, *src), -1) for src in grid.open_neighbors((a, b))
                )
                rows.append(MilpRow(f"mob_r{r}_t{t}_a{a}_b{b}", "L", tuple(srcs), 0))
                # Blocked edges get no mv variable, so ban the pair outright.
                for nxt in grid.adjacent8((a, b)):
                    if grid.is_blocked((a, b), nxt):
                        a2, b2 = nxt
                        rows.append(
                            MilpRow(
                                f"blk_r{r}_t{t}_{a}_{b}_{a2}_{b2}",
                                "L",
                                ((_lname(r, t, a, b), 1), (_lname(r, t + 1, a2, b2), 1)),
                                1,
                            )
                        )

    # Movement products mv = l_t(c) AND l_{t+1}(c').
    mv_terms: dict[tuple[int, int], list[tuple[str, int]]] = {}
    for r in range(1, R + 1):
        for t in range(1, T):
            for a, b in cells:
                here = grid.cell_id((a, b))
                for nid, cost in cm.moves[here]:
                    a2, b2 = grid.id_to_cell(nid)
                    mv = f"mv_r{r}_t{t}_{a}_{b}_{a2}_{b2}"
                    variables.append(MilpVar(mv, True, 0.0, 1.0))
                    l1, l2 = _lname(r, t, a, b), _lname(r, t + 1, a2, b2)
                    rows.append(MilpRow(f"mva_{mv[3:]}", "L", ((mv, 1), (l1, -1)), 0))
                    rows.append(MilpRow(f"mvb_{mv[3:]}", "L", ((mv, 1), (l2, -1)), 0))
                    rows.append(
                        MilpRow(f"mvc_{mv[3:]}", "L", ((l1, 1), (l2, 1), (mv, -1)), 1)
                    )
                    mv_terms.setdefault((r, t), []).append((mv, cost))

    # Sensing/uplink products, OROS only: ws = l_{t+1}(c) AND NOT e_t(c) feeds
    # the sensing term (and the uplink when it is indexed by the entered
    # cell); wx = l_t(c) AND NOT e_t(c) is the uplink gate as printed, a term
    # the occupancy/mask coupling forces to zero.
    ws_terms: dict[tuple[int, int], list[tuple[str, int]]] = {}
    wx_terms: dict[tuple[int, int], list[tuple[str, int]]] = {}
    if cm.mode == "OROS":
        for r in range(1, R + 1):
            for t in range(1, T):
                for a, b in cells:
                    cid = grid.cell_id((a, b))
                    ws = f"ws_r{r}_t{t}_a{a}_b{b}"
                    variables.append(MilpVar(ws, True, 0.0, 1.0))
                    ln, en = _lname(r, t + 1, a, b), _ename(t, a, b)
                    rows.append(MilpRow(f"wsa_{ws[3:]}", "L", ((ws, 1), (ln, -1)), 0))
                    rows.append(MilpRow(f"wsb_{ws[3:]}", "L", ((ws, 1), (en, 1)), 1))
                    rows.append(
                        MilpRow(f"wsc_{ws[3:]}", "L", ((ln, 1), (en, -1), (ws, -1)), 0)
                    )
                    items = ws_terms.setdefault((r, t), [])
                    items.append((ws, cm.sen_mj))
                    if tx_index == "new_cell":
                        items.append((ws, cm.tx_mj[cid]))
                    else:
                        wx = f"wx_r{r}_t{t}_a{a}_b{b}"
                        variables.append(MilpVar(wx, True, 0.0, 1.0))
                        lo = _lname(r, t, a, b)
                        rows.append(
                            MilpRow(f"wxa_{wx[3:]}", "L", ((wx, 1), (lo, -1)), 0)
                        )
                        rows.append(MilpRow(f"wxb_{wx[3:]}", "L", ((wx, 1), (en, 1)), 1))
                        rows.append(
                            MilpRow(
                                f"wxc_{wx[3:]}", "L", ((lo, 1), (en, -1), (wx, -1)), 0
                            )
                        )
                        wx_terms.setdefault((r, t), []).append((wx, cm.tx_mj[cid]))

    # Battery recursion, one equality per robot and transition.
    for r in range(1, R + 1):
        for t in range(2, T + 1):
            coeffs: list[tuple[str, int]] = [
                (f"b_r{r}_t{t}", 1),
                (f"b_r{r}_t{t - 1}", -1),
            ]
            if cm.mode == "OROS":
                coeffs.append((f"u_r{r}_t{t}", -(cm.charge_mj + cm.rx_mj)))
                rhs = -cm.rx_mj
                for term in ws_terms.get((r, t - 1), ()):
                    coeffs.append(term)
                for term in wx_terms.get((r, t - 1), ()):
                    coeffs.append(term)
            else:
                idle = cm.rx_mj + cm.sen_mj
                coeffs.append(
                    (f"u_r{r}_t{t}", -(cm.charge_mj + idle + cm.tx_mj[cm.cs_id]))
                )
                rhs = -idle
                for a, b in cells:
                    coeffs.append((_lname(r, t, a, b), cm.tx_mj[grid.cell_id((a, b))]))
            for term in mv_terms.get((r, t - 1), ()):
                coeffs.append(term)
            # Merge duplicate columns (ws carries sen+tx as two entries).
            merged: dict[str, int] = {}
            for name, c in coeffs:
                merged[name] = merged.get(name, 0) + c
            rows.append(
                MilpRow(
                    f"bat_r{r}_t{t}",
                    "E",
                    tuple(sorted(merged.items())),
                    rhs,
                )
            )

    objective = tuple(
        (_ename(t, a, b), 1) for t in range(1, T + 1) for a, b in cells
    )
    variables.sort(key=lambda v: (not v.integer, v.name))
    rows.sort(key=lambda rw: rw.name)
    return MilpInstance(
        name=f"rp_{config.mode.lower()}_{scenario_digest(config)[:8]}",
        variables=tuple(variables),
        rows=tuple(rows),
        objective=objective,
        config=config,
        tx_index=tx_index,
    )


def _num(x: float) -> str:
    if isinstance(x, int) or (isinstance(x, float) and x.is_integer()):
        return str(int(x))
    return repr(x)


def write_model(instance: MilpInstance) -> str:
    """Serialize to fixed-form MPS text, byte-deterministic for equal input.

    Layout: 24-character name fields, one (row, value) pair per data line,
    binaries wrapped in integer markers ahead of the continuous block, and
    explicit BV/UP/FX bound lines so no solver-side defaults are assumed.
    """
    out: list[str] = [f"NAME          {instance.name}", "OBJSENSE", "    MAXIMIZE", "ROWS"]
    out.append(" N  obj")
    for row in instance.rows:
        out.append(f" {row.sense}  {row.name}")

    obj = dict(instance.objective)
    by_var: dict[str, list[tuple[str, int]]] = {v.name: [] for v in instance.variables}
    for row in instance.rows:
        for name, coef in row.coeffs:
            by_var[name].append((row.name, coef))

    out.append("COLUMNS")
    marker = 0
    integer_open = False
    for var in instance.variables:
        if var.integer != integer_open:
            marker += 1
            flag = _INT_MARKER_ON if var.integer else _INT_MARKER_OFF
            out.append(f"    MK{marker:06d}{'':18}  {'MARKER':<24}  {flag}")
            integer_open = var.integer
        entries = []
        if var.name in obj:
            entries.append(("obj", obj[var.name]))
        entries.extend(sorted(by_var[var.name]))
        for row_name, coef in entries:
            out.append(f"    {var.name:<24}  {row_name:<24}  {_num(coef)}")
    if integer_open:
        marker += 1
        out.append(f"    MK{marker:06d}{'':18}  {'MARKER':<24}  {_INT_MARKER_OFF}")

    out.append("RHS")
    for row in instance.rows:
        if row.rhs != 0:
            out.append(f"    RHS{'':21}  {row.name:<24}  {_num(row.rhs)}")

    out.append("BOUNDS")
    for var in instance.variables:
        if var.lo == var.hi:
            out.append(f" FX BND{'':17}  {var.name:<24}  {_num(var.lo)}")
        elif var.integer:
            out.append(f" BV BND{'':17}  {var.name:<24}")
        else:
            out.append(f" UP BND{'':17}  {var.name:<24}  {_num(var.hi)}")
            if var.lo != 0:
                out.append(f" LO BND{'':17}  {var.name:<24}  {_num(var.lo)}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


class MpsFormatError(ValueError):
    """Text does not conform to the fixed-form subset written here."""


def parse_model(text: str) -> MilpInstance:
    """Strict re-reader for `write_model` output (metadata-free instance)."""
    name = None
    senses: dict[str, str] = {}
    order: list[str] = []
    coeffs: dict[str, list[tuple[str, int]]] = {}
    objective: list[tuple[str, int]] = []
    rhs: dict[str, int] = {}
    bounds: dict[str, tuple[str, float]] = {}
    integer: dict[str, bool] = {}
    var_order: list[str] = []
    section = None
    int_on = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        if not raw.startswith((" ", "\t")):
            head = raw.split()
            section = head[0]
            if section == "NAME":
                name = head[1] if len(head) > 1 else ""
            elif section not in ("OBJSENSE", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"):
                raise MpsFormatError(f"line {lineno}: unknown section {section}")
            continue
        fields = raw.split()
        if section == "OBJSENSE":
            if fields != ["MAXIMIZE"]:
                raise MpsFormatError(f"line {lineno}: only MAXIMIZE is written")
        elif section == "ROWS":
            sense, row_name = fields
            if sense == "N":
                continue
            if sense not in ("L", "G", "E"):
                raise MpsFormatError(f"line {lineno}: bad row sense {sense}")
            senses[row_name] = sense
            order.append(row_name)
            coeffs[row_name] = []
        elif section == "COLUMNS":
            if len(fields) == 3 and fields[1] == "MARKER":
                int_on = fields[2] == _INT_MARKER_ON
                continue
            var, row_name, value = fields
            if var not in integer:
                integer[var] = int_on
                var_order.append(var)
            coef = int(value)
            if row_name == "obj":
                objective.append((var, coef))
            elif row_name in coeffs:
                coeffs[row_name].append((var, coef))
            else:
                raise MpsFormatError(f"line {lineno}: row {row_name} undeclared")
        elif section == "RHS":
            _, row_name, value = fields
            rhs[row_name] = int(value)
        elif section == "BOUNDS":
            kind = fields[0]
            if kind == "BV":
                _, _, var = fields
                bounds[var] = ("BV", 0.0)
            else:
                _, _, var, value = fields
                bounds[var] = (kind, float(value))
        elif section == "ENDATA":
            raise MpsFormatError(f"line {lineno}: data after ENDATA")
    if name is None:
        raise MpsFormatError("missing NAME section")
    variables = []
    for var in var_order:
        kind, value = bounds.get(var, ("BV", 0.0) if integer[var] else ("UP", math.inf))
        if kind == "FX":
            lo, hi = value, value
        elif kind == "BV":
            lo, hi = 0.0, 1.0
        else:
            lo, hi = 0.0, value
        variables.append(MilpVar(var, integer[var], lo, hi))
    rows = tuple(
        MilpRow(rn, senses[rn], tuple(coeffs[rn]), rhs.get(rn, 0)) for rn in order
    )
    return MilpInstance(
        name=name, variables=tuple(variables), rows=rows, objective=tuple(objective)
    )


def _decode_plan(
    instance: MilpInstance, assignment: dict[str, float], config: ScenarioConfig
) -> Plan:
    R, T = config.fleet.count, config.horizon_epochs
    positions, charge = [], []
    for r in range(1, R + 1):
        pos_row, chg_row = [], []
        for t in range(1, T + 1):
            hits = [
                (a, b)
                for (a, b) in (
                    config.grid.id_to_cell(i) for i in range(config.grid.n_cells)
                )
                if assignment[_lname(r, t, a, b)] > 0.5
            ]
            if len(hits) != 1:
                raise ValueError(f"robot {r} epoch {t}: {len(hits)} occupied cells")
            pos_row.append(hits[0])
            chg_row.append(assignment[f"u_r{r}_t{t}"] > 0.5)
        positions.append(tuple(pos_row))
        charge.append(tuple(chg_row))
    return Plan(
        digest=scenario_digest(config),
        mode=config.mode,
        positions=tuple(positions),
        charge=tuple(charge),
    )


def check_solution(instance: MilpInstance, assignment: dict[str, float]) -> CheckReport:
    """Validate an external assignment row by row, then against the replayer.

    Raises KeyError when the assignment misses a declared variable. All
    numeric checks use an absolute tolerance on the millijoule scale.
    """
    violations: list[CheckViolation] = []
    for var in instance.variables:
        val = assignment[var.name]
        if val < var.lo - TOL or val > var.hi + TOL:
            violations.append(
                CheckViolation(var.name, f"bound [{var.lo}, {var.hi}]", val)
            )
        if var.integer and abs(val - round(val)) > TOL:
            violations.append(CheckViolation(var.name, "not integral", val))
    for row in instance.rows:
        total = sum(assignment[name] * coef for name, coef in row.coeffs)
        slack = total - row.rhs
        bad = (
            (row.sense == "L" and slack > TOL)
            or (row.sense == "G" and slack < -TOL)
            or (row.sense == "E" and abs(slack) > TOL)
        )
        if bad:
            violations.append(CheckViolation(row.name, f"sense {row.sense}", slack))
    objective = float(sum(assignment[name] * coef for name, coef in instance.objective))

    replay_objective = None
    if instance.config is not None and not violations:
        config = instance.config
        plan = _decode_plan(instance, assignment, config)
        report = replay(plan, config, tx_index=instance.tx_index)
        if not report.ok:
            v = report.violation
            violations.append(
                CheckViolation("replay", f"{v.constraint}: {v.detail}", 0.0)
            )
        else:
            replay_objective = report.trace.objective
            if abs(objective - replay_objective) > TOL:
                violations.append(
                    CheckViolation(
                        "replay",
                        f"objective {objective} != replayed {replay_objective}",
                        objective - replay_objective,
                    )
                )
    return CheckReport(
        ok=not violations,
        objective=objective,
        violations=tuple(violations),
        replay_objective=replay_objective,
    )


def assignment_from_plan(
    instance: MilpInstance, plan: Plan, config: ScenarioConfig
) -> dict[str, float]:
    """Ground-truth assignment for a plan: occupancy, running mask, implied
    products, and battery levels from the replay trace."""
    cm = compile_costs(config, instance.tx_index)
    grid = config.grid
    R, T = cm.n_robots, cm.horizon
    out = {v.name: 0.0 for v in instance.variables}
    explored: list[set] = []
    seen: set = set()
    for t in range(1, T + 1):
        for r in range(R):
            seen.add(plan.positions[r][t - 1])
        explored.append(set(seen))
    for t in range(1, T + 1):
        for a, b in explored[t - 1]:
            out[_ename(t, a, b)] = 1.0
    for r in range(1, R + 1):
        for t in range(1, T + 1):
            a, b = plan.positions[r - 1][t - 1]
            out[_lname(r, t, a, b)] = 1.0
            out[f"u_r{r}_t{t}"] = 1.0 if plan.charge[r - 1][t - 1] else 0.0
        for t in range(1, T):
            a, b = plan.positions[r - 1][t - 1]
            a2, b2 = plan.positions[r - 1][t]
            mv = f"mv_r{r}_t{t}_{a}_{b}_{a2}_{b2}"
            if mv not in out:
                raise ValueError(f"plan crosses a blocked edge: {mv}")
            out[mv] = 1.0
            if cm.mode == "OROS":
                if (a2, b2) not in explored[t - 1]:
                    out[f"ws_r{r}_t{t}_a{a2}_b{b2}"] = 1.0
                if instance.tx_index != "new_cell" and (a, b) not in explored[t - 1]:
                    out[f"wx_r{r}_t{t}_a{a}_b{b}"] = 1.0
    report = replay(plan, config, tx_index=instance.tx_index)
    if not report.ok:
        v = report.violation
        raise ValueError(f"plan fails replay: {v.constraint}: {v.detail}")
    for row in report.trace.rows:
        out[f"b_r{row.robot}_t{row.epoch}"] = float(row.battery_mj)
    for r in range(1, R + 1):
        out[f"b_r{r}_t1"] = float(cm.bmax_mj)
    return out
