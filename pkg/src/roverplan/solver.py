"""Exact and heuristic planners over the fleet transition system.

solve_exact is a two-phase depth-first branch and bound. Phase 1 certifies
the optimal objective value, expanding promising children first (most cells
explored, then most battery retained); ordering is free here because only the
value matters. Phase 2 re-runs the search in canonical action order
(robot-major, row-major targets, charge false before true) with the pruning
threshold set to optimum - 1 and stops at the first leaf attaining the
optimum: canonical depth-first order visits leaves in lexicographic order of
their action sequences, so that leaf is the lex-min optimal plan. Pruning
uses an admissible per-epoch growth bound plus dominance over states with
equal (epoch, explored mask, position multiset): a node whose batteries and
cumulative objective are componentwise no better than an earlier node's is
discarded. The greedy warm start seeds the phase-1 threshold (objective - 1)
and is returned only as a non-certified incumbent when the node budget runs
out first.

brute_force_oracle enumerates every feasible plan through the public
enumerate_actions/step pair with no bounds and no dominance; it exists as an
independent check for the exact solver and refuses instances beyond its
enumeration cap.
"""

from __future__ import annotations

import dataclasses
import heapq
import time
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .dynamics import (
    CostModel,
    FleetState,
    JointAction,
    Plan,
    ReplayTrace,
    compile_costs,
    enumerate_actions,
    initial_state,
    replay,
    step,
)
from .dynamics import InfeasibleActionError
from .scenario import ScenarioConfig, scenario_digest

DEFAULT_NODE_BUDGET = 10**8
ORACLE_ENUMERATION_CAP = 10**7
_TABLE_LIMIT = 4_000_000


class InfeasibleHorizonError(RuntimeError):
    """No plan survives to the horizon; carries the longest feasible prefix."""

    def __init__(self, max_feasible_epoch: int):
        self.max_feasible_epoch = max_feasible_epoch
        super().__init__(
            f"no feasible full-horizon plan; longest feasible prefix ends at "
            f"epoch {max_feasible_epoch}"
        )


class OracleSizeError(RuntimeError):
    """Instance too large for exhaustive enumeration."""


@dataclass(frozen=True)
class SearchNode:
    state: FleetState
    cumulative: int


@dataclass(frozen=True)
class SolveResult:
    plan: Plan
    objective: int
    explored_fraction: float
    completion_epoch: int
    final_batteries_j: tuple[float, ...]
    trace: ReplayTrace
    nodes_expanded: int
    pruned_bound: int
    pruned_dominated: int
    certified: bool
    wall_time_s: float
    method: str


def upper_bound(node: SearchNode, config: ScenarioConfig) -> int:
    """Admissible objective bound: growth capped at fleet size per epoch."""
    cells = config.grid.n_cells
    fleet = config.fleet.count
    explored = len(node.state.explored)
    remaining = config.horizon_epochs - node.state.epoch
    total = node.cumulative
    for k in range(1, remaining + 1):
        total += min(cells, explored + fleet * k)
    return total


def _plan_from_rows(
    config: ScenarioConfig, rows: list[tuple[tuple[int, ...], tuple[int, ...]]]
) -> Plan:
    grid = config.grid
    n = config.fleet.count
    positions = tuple(
        tuple(grid.id_to_cell(rows[t][0][r]) for t in range(len(rows))) for r in range(n)
    )
    charge = tuple(tuple(bool(rows[t][1][r]) for t in range(len(rows))) for r in range(n))
    return Plan(
        digest=scenario_digest(config), mode=config.mode, positions=positions, charge=charge
    )


def _result_from_plan(
    config: ScenarioConfig,
    plan: Plan,
    *,
    tx_index: str,
    clamp_charge: bool,
    nodes: int,
    pruned_bound: int,
    pruned_dominated: int,
    certified: bool,
    wall_time_s: float,
    method: str,
) -> SolveResult:
    report = replay(plan, config, tx_index=tx_index, clamp_charge=clamp_charge)
    if not report.ok:
        v = report.violation
        raise AssertionError(f"solver produced an invalid plan: {v.constraint} at {v.epoch}")
    trace = report.trace
    counts: dict[int, int] = {}
    for row in trace.rows:
        counts[row.epoch] = row.explored_total
    completion = min(t for t, c in counts.items() if c == trace.explored_total)
    return SolveResult(
        plan=plan,
        objective=trace.objective,
        explored_fraction=trace.explored_total / config.grid.n_cells,
        completion_epoch=completion,
        final_batteries_j=trace.final_state.batteries_j,
        trace=trace,
        nodes_expanded=nodes,
        pruned_bound=pruned_bound,
        pruned_dominated=pruned_dominated,
        certified=certified,
        wall_time_s=wall_time_s,
        method=method,
    )


# --- exact search ---------------------------------------------------------


class _Search:
    """One sequential DFS over a subtree; self-contained and deterministic."""

    def __init__(self, cm: CostModel, threshold: int, node_budget: int,
                 *, order: str = "canonical", halt_at: int | None = None):
        self.cm = cm
        self.threshold = threshold
        self.node_budget = node_budget
        # "promise" visits children best-first to certify the optimum fast;
        # "canonical" + halt_at recovers the lex-min plan among optima
        self.promise = order == "promise"
        self.halt_at = halt_at
        self.halt = False
        is_oros = cm.mode == "OROS"
        tx_at_new = cm.tx_index == "new_cell"
        # per-edge base cost and per-target first-visit surcharge, both mJ
        if is_oros:
            self.base = [
                tuple((tgt, cm.rx_mj + mv, mv) for tgt, mv in row) for row in cm.moves
            ]
            self.extra = [
                cm.sen_mj + (cm.tx_mj[t] if tx_at_new else 0) for t in range(cm.n_cells)
            ]
        else:
            self.base = [
                tuple((tgt, cm.rx_mj + cm.sen_mj + mv + cm.tx_mj[tgt], mv) for tgt, mv in row)
                for row in cm.moves
            ]
            self.extra = [0] * cm.n_cells
        stay = min(cost for row in cm.moves for _, cost in row)
        nonself = min(
            (cost for c, row in enumerate(cm.moves) for tgt, cost in row if tgt != c),
            default=stay,
        )
        min_tx = min(cm.tx_mj)
        # cheapest-epoch floor and per-cell first-visit surcharge over that floor
        if is_oros:
            self.min_epoch = cm.rx_mj + stay
            surcharge = [
                (nonself - stay) + cm.sen_mj + (cm.tx_mj[c] if tx_at_new else 0)
                for c in range(cm.n_cells)
            ]
        else:
            self.min_epoch = cm.rx_mj + cm.sen_mj + stay + min_tx
            surcharge = [
                (nonself - stay) + (cm.tx_mj[c] - min_tx) for c in range(cm.n_cells)
            ]
        self.sur_sorted = sorted((max(1, s), c) for c, s in enumerate(surcharge))
        # a charging epoch floors at stay instead of min_epoch, so each one
        # stretches the surcharge budget by charge + (min_epoch - stay)
        self.cgain = cm.charge_mj + self.min_epoch - stay
        self.idle_collapse = cm.charge_mj == 0
        # fmin[k][c]: battery needed to survive k more transitions after
        # arriving at c, ignoring first-visit surcharges (exact for SLAM
        # without charging; a cap- and contention-relaxed lower bound with
        # charging, which keeps pruning on battery < fmin sound).
        self.dist_cost: list[list[int]] | None = None
        fmin = [[0] * cm.n_cells]
        for _ in range(cm.horizon):
            prev = fmin[-1]
            row = []
            for c in range(cm.n_cells):
                best = min(cost + prev[tgt] for tgt, cost, _ in self.base[c])
                if cm.charge_mj > 0:
                    for tgt, _, mv in self.base[c]:
                        if tgt == cm.cs_id:
                            alt = mv - cm.charge_mj + prev[tgt]
                            if alt < best:
                                best = alt
                row.append(best if best > 0 else 0)
            fmin.append(row)
        self.fmin = fmin
        if cm.charge_mj == 0:
            # dist_cost[a][b]: cheapest total arrival cost a -> b; a fresh
            # cell beyond every robot's battery can never be explored
            big = 1 << 62
            dist = [[big] * cm.n_cells for _ in range(cm.n_cells)]
            for c in range(cm.n_cells):
                dist[c][c] = 0
                for tgt, cost, _ in self.base[c]:
                    if cost < dist[c][tgt] and tgt != c:
                        dist[c][tgt] = cost
            for k in range(cm.n_cells):
                dk = dist[k]
                for i in range(cm.n_cells):
                    dik = dist[i][k]
                    if dik >= big:
                        continue
                    di = dist[i]
                    for j in range(cm.n_cells):
                        alt = dik + dk[j]
                        if alt < di[j]:
                            di[j] = alt
            self.dist_cost = dist
        self.adj = [tuple(t for t, _ in row if t != c) for c, row in enumerate(cm.moves)]
        self.dist_cache: dict[tuple[int, int], int] = {}
        self.table: dict = {}
        self.table_entries = 0
        self.nodes = 0
        self.pruned_bound = 0
        self.pruned_dominated = 0
        self.budget_hit = False
        self.max_epoch = 1
        self.best_value: int | None = None
        self.best_rows: list[tuple[tuple[int, ...], tuple[int, ...]]] | None = None
        self.path: list[tuple[tuple[int, ...], tuple[int, ...]]] = []

    def _options(self, pos: int, battery: int, mask: int, k_next: int):
        cm = self.cm
        out = []
        extra = self.extra
        allow_charge = cm.charge_mj > 0
        floors = self.fmin[k_next]
        for tgt, cost, mv in self.base[pos]:
            floor_next = floors[tgt]
            if not (mask >> tgt) & 1:
                cost += extra[tgt]
            b2 = battery - cost
            if b2 >= floor_next:
                out.append((tgt, 0, b2))
            if allow_charge and tgt == cm.cs_id:
                gain = (
                    min(cm.bmax_mj - battery, cm.charge_mj)
                    if cm.clamp_charge
                    else cm.charge_mj
                )
                spend = mv
                if cm.mode == "OROS" and not (mask >> tgt) & 1:
                    spend += extra[tgt]
                b2c = battery + gain - spend
                if floor_next <= b2c <= cm.bmax_mj:
                    out.append((tgt, 1, b2c))
        return out

    def _fresh_prefix(self, allowed: int) -> list[int]:
        """Cumulative sums of ascending first-visit surcharges, allowed cells only."""
        fp = [0]
        for s, c in self.sur_sorted:
            if (allowed >> c) & 1:
                fp.append(fp[-1] + s)
        return fp

    def _reach_counts(self, positions: tuple[int, ...], allowed: int,
                      remaining: int) -> list[int]:
        """reach[k] = allowed fresh cells within k hops of any robot (k >= 1)."""
        adj = self.adj
        seen = 0
        for p in positions:
            seen |= 1 << p
        front = list(set(positions))
        reach = [0] * (remaining + 1)
        total = 0
        d = 0
        while front and d < remaining:
            d += 1
            nxt = []
            for c in front:
                for t in adj[c]:
                    bit = 1 << t
                    if seen & bit:
                        continue
                    seen |= bit
                    nxt.append(t)
                    if allowed & bit:
                        total += 1
            reach[d] = total
            front = nxt
        for k in range(d + 1, remaining + 1):
            reach[k] = total
        return reach

    def _frontier_dist(self, mask: int, pos: int) -> int:
        """BFS hops from pos to the nearest cell outside mask; big when none."""
        key = (mask, pos)
        cached = self.dist_cache.get(key)
        if cached is not None:
            return cached
        if not (mask >> pos) & 1:
            self.dist_cache[key] = 0
            return 0
        adj = self.adj
        seen = 1 << pos
        front = [pos]
        d = 0
        while front:
            d += 1
            nxt = []
            for c in front:
                for t in adj[c]:
                    bit = 1 << t
                    if seen & bit:
                        continue
                    if not (mask & bit):
                        self.dist_cache[key] = d
                        return d
                    seen |= bit
                    nxt.append(t)
            front = nxt
        self.dist_cache[key] = 1 << 20
        return 1 << 20

    def _upper(self, positions: tuple[int, ...], mask: int,
               batteries: tuple[int, ...], cum: int, remaining: int, m: int
               ) -> tuple[int, list[int]]:
        """Admissible bound from per-robot frontier distances and energy caps.

        Returns (bound, per-robot max further first visits).
        """
        cm = self.cm
        charging = cm.charge_mj > 0
        cs_fresh = 1 if charging and not (mask >> cm.cs_id) & 1 else 0
        slack = remaining * self.cgain if charging else 0
        fleet_budget = sum(batteries) - remaining * cm.n_robots * self.min_epoch + slack
        allowed = ~mask & ((1 << cm.n_cells) - 1)
        if self.dist_cost is not None:
            rest = allowed
            while rest:
                low = rest & -rest
                rest ^= low
                c = low.bit_length() - 1
                for p, b in zip(positions, batteries):
                    if self.dist_cost[p][c] <= b:
                        break
                else:
                    allowed ^= low
        fp = self._fresh_prefix(allowed)
        eglob = bisect_right(fp, fleet_budget) - 1 + cs_fresh
        reach = self._reach_counts(positions, allowed, remaining)
        full = cm.n_cells
        xcaps = []
        caps = []
        if charging:
            # visit-count cost folds in forfeited charge epochs: g = rem - x
            fpc = [v + i * self.cgain for i, v in enumerate(fp)]
            cnet = self.cgain - self.min_epoch
        for r in range(cm.n_robots):
            if charging:
                lim = batteries[r] - remaining * self.min_epoch + slack
                xcap = bisect_right(fpc, lim) - 1 + cs_fresh
            else:
                xcap = bisect_right(fp, batteries[r] - remaining * self.min_epoch) - 1
            if xcap < 0:
                xcap = 0
            xcaps.append(xcap)
            if xcap <= 0:
                continue
            tl = None
            if charging and cnet > 0:
                # x-th paid visit waits for banked charge: fpc[x] - b <= t * cnet
                b = batteries[r]
                tl = [1] * cs_fresh
                for x in range(1, xcap - cs_fresh + 1):
                    num = fpc[x] - b
                    tl.append(x if num <= 0 else max(x, -(-num // cnet)))
            caps.append((self._frontier_dist(mask, positions[r]), xcap, tl))
        ub = cum
        ptrs = [0] * len(caps)
        for k in range(1, remaining + 1):
            s = 0
            for i, (d, xcap, tl) in enumerate(caps):
                v = k - d + 1
                if v <= 0:
                    continue
                if tl is not None:
                    p = ptrs[i]
                    while p < xcap and tl[p] <= k:
                        p += 1
                    ptrs[i] = p
                    if v > p:
                        v = p
                if v > xcap:
                    v = xcap
                s += v
            if s > eglob:
                s = eglob
            rk = reach[k]
            if s > rk:
                s = rk
            val = m + s
            if val >= full:
                ub += full * (remaining - k + 1)
                break
            ub += val
        return ub, xcaps

    def _lex_idle_rows(self, positions: tuple[int, ...], mask: int,
                       batteries: tuple[int, ...], remaining: int):
        """Lex-min safe wander when no further exploration is fundable.

        Only sound without charging: battery >= fmin[k][cell] guarantees k
        more feasible epochs over explored cells (exact for both modes).
        """
        pos = list(positions)
        bats = list(batteries)
        n = self.cm.n_robots
        rows = []
        for k in range(remaining - 1, -1, -1):
            floors = self.fmin[k]
            for r in range(n):
                for tgt, cost, _ in self.base[pos[r]]:
                    if not (mask >> tgt) & 1:
                        continue
                    b2 = bats[r] - cost
                    if b2 >= floors[tgt]:
                        pos[r] = tgt
                        bats[r] = b2
                        break
            rows.append((tuple(pos), (0,) * n))
        return rows

    def _lex_idle_option(self, pos: int, battery: int, mask: int, k_next: int):
        floors = self.fmin[k_next]
        for tgt, cost, _ in self.base[pos]:
            if not (mask >> tgt) & 1:
                continue
            b2 = battery - cost
            if b2 >= floors[tgt]:
                return (tgt, 0, b2)
        return None

    def run(self, epoch: int, positions: tuple[int, ...], mask: int, batteries: tuple[int, ...],
            cum: int) -> None:
        self._dfs(epoch, positions, mask, batteries, cum)

    def _record(self, value: int, tail_rows) -> None:
        if self.best_value is None or value > self.best_value:
            self.best_value = value
            self.best_rows = list(self.path) + tail_rows
            if value > self.threshold:
                self.threshold = value
        if self.halt_at is not None and value >= self.halt_at:
            self.halt = True

    def _dfs(self, epoch: int, positions: tuple[int, ...], mask: int,
             batteries: tuple[int, ...], cum: int) -> None:
        if self.budget_hit or self.halt:
            return
        self.nodes += 1
        if self.nodes > self.node_budget:
            self.budget_hit = True
            return
        if epoch > self.max_epoch:
            self.max_epoch = epoch
        cm = self.cm
        if epoch == cm.horizon:
            if self.best_value is None or cum > self.best_value:
                self._record(cum, [])
            return
        remaining = cm.horizon - epoch
        m = mask.bit_count()
        ub, xcaps = self._upper(positions, mask, batteries, cum, remaining, m)
        if ub <= self.threshold:
            self.pruned_bound += 1
            return
        if (
            self.idle_collapse
            and ub == cum + remaining * m
            and all(b >= self.fmin[remaining][p] for p, b in zip(positions, batteries))
        ):
            # no further exploration fundable: subtree value is exactly ub
            self._record(ub, self._lex_idle_rows(positions, mask, batteries, remaining))
            return
        canon = sorted(zip(positions, batteries))
        key = (epoch, mask, tuple(p for p, _ in canon))
        bats = tuple(b for _, b in canon)
        entries = self.table.get(key)
        if entries is not None:
            for ebats, ecum in entries:
                if ecum >= cum and all(x >= y for x, y in zip(ebats, bats)):
                    self.pruned_dominated += 1
                    return
            if self.table_entries < _TABLE_LIMIT:
                entries[:] = [
                    (eb, ec)
                    for eb, ec in entries
                    if not (cum >= ec and all(x >= y for x, y in zip(bats, eb)))
                ]
                entries.append((bats, cum))
                self.table_entries += 1
        elif self.table_entries < _TABLE_LIMIT:
            self.table[key] = [(bats, cum)]
            self.table_entries += 1

        n = cm.n_robots
        k_next = cm.horizon - epoch - 1
        options = []
        for r in range(n):
            if self.idle_collapse and xcaps[r] == 0:
                # robot can never afford another fresh cell: pin its wander
                forced = self._lex_idle_option(positions[r], batteries[r], mask, k_next)
                if forced is not None:
                    options.append([forced])
                    continue
            options.append(self._options(positions[r], batteries[r], mask, k_next))
        if any(not opts for opts in options):
            return
        tgt_buf = [0] * n
        chg_buf = [0] * n
        bat_buf = [0] * n

        if self.promise:
            children = []

            def expand(r: int, chargers: int) -> None:
                if r == n:
                    new_pos = tuple(tgt_buf)
                    new_mask = mask
                    for t in new_pos:
                        new_mask |= 1 << t
                    children.append(
                        (new_pos, tuple(chg_buf), tuple(bat_buf), new_mask)
                    )
                    return
                for tgt, u, b2 in options[r]:
                    if u and chargers:
                        continue
                    tgt_buf[r] = tgt
                    chg_buf[r] = u
                    bat_buf[r] = b2
                    expand(r + 1, chargers + u)

            expand(0, 0)
            children.sort(
                key=lambda c: (-c[3].bit_count(), -sum(c[2]))
            )
            for new_pos, chgs, new_bats, new_mask in children:
                if self.budget_hit or self.halt:
                    return
                self.path.append((new_pos, chgs))
                self._dfs(epoch + 1, new_pos, new_mask, new_bats,
                          cum + new_mask.bit_count())
                self.path.pop()
        else:

            def expand(r: int, chargers: int) -> None:
                if self.budget_hit or self.halt:
                    return
                if r == n:
                    new_pos = tuple(tgt_buf)
                    new_bats = tuple(bat_buf)
                    new_mask = mask
                    for t in new_pos:
                        new_mask |= 1 << t
                    self.path.append((new_pos, tuple(chg_buf)))
                    self._dfs(epoch + 1, new_pos, new_mask, new_bats,
                              cum + new_mask.bit_count())
                    self.path.pop()
                    return
                for tgt, u, b2 in options[r]:
                    if u and chargers:
                        continue
                    tgt_buf[r] = tgt
                    chg_buf[r] = u
                    bat_buf[r] = b2
                    expand(r + 1, chargers + u)

            expand(0, 0)


def _horizon_feasible(
    config: ScenarioConfig, tx_index: str, clamp_charge: bool, probe_budget: int
) -> bool:
    """Whether any plan survives config's full horizon (first-leaf probe)."""
    if config.horizon_epochs == 1:
        return True
    cm = compile_costs(config, tx_index, clamp_charge)
    start = initial_state(config)
    grid = config.grid
    pos0 = tuple(grid.cell_id(p) for p in start.positions)
    mask0 = 0
    for c in start.explored:
        mask0 |= 1 << grid.cell_id(c)
    probe = _Search(cm, -1, probe_budget, halt_at=0)
    probe.run(1, pos0, mask0, start.batteries_mj, mask0.bit_count())
    return probe.best_rows is not None


def _max_feasible_prefix(
    config: ScenarioConfig, tx_index: str, clamp_charge: bool
) -> int:
    """Longest horizon prefix admitting a feasible plan (>= 1 by convention)."""
    for t in range(config.horizon_epochs - 1, 1, -1):
        shorter = dataclasses.replace(config, horizon_epochs=t)
        if _horizon_feasible(shorter, tx_index, clamp_charge, 2_000_000):
            return t
    return 1


def _warm_start(
    config: ScenarioConfig, tx_index: str, clamp_charge: bool
) -> tuple[int, SolveResult | None]:
    # a fleet-sized reserve dodges station queueing; keep the best survivor
    warm = None
    for reserve in dict.fromkeys((1, config.fleet.count)):
        try:
            cand = solve_greedy(
                config,
                tx_index=tx_index,
                clamp_charge=clamp_charge,
                reserve_epochs=reserve,
            )
        except InfeasibleHorizonError:
            continue
        if warm is None or cand.objective > warm.objective:
            warm = cand
    if warm is None:
        return -1, None
    return warm.objective - 1, warm


def _run_job(args) -> tuple[int | None, list | None, int, int, int, bool, int]:
    (config, tx_index, clamp_charge, threshold, budget, root_row) = args
    cm = compile_costs(config, tx_index, clamp_charge)
    search = _Search(cm, threshold, budget, order="promise")
    start = initial_state(config)
    grid = config.grid
    mask0 = 0
    for c in start.explored:
        mask0 |= 1 << grid.cell_id(c)
    root_pos, root_chg, root_bats = root_row
    new_mask = mask0
    for t in root_pos:
        new_mask |= 1 << t
    search.path.append((root_pos, root_chg))
    search._dfs(2, root_pos, new_mask, root_bats, mask0.bit_count() + new_mask.bit_count())
    return (
        search.best_value,
        search.best_rows,
        search.nodes,
        search.pruned_bound,
        search.pruned_dominated,
        search.budget_hit,
        search.max_epoch,
    )


def solve_exact(
    config: ScenarioConfig,
    *,
    tx_index: str = "as_printed",
    clamp_charge: bool = False,
    node_budget: int = DEFAULT_NODE_BUDGET,
    workers: int = 1,
) -> SolveResult:
    """Optimal plan under the scenario's mode; deterministic for any worker count.

    Raises InfeasibleHorizonError when no plan survives to the horizon.
    Exceeding the node budget returns the best incumbent with certified=False.
    """
    t0 = time.perf_counter()
    cm = compile_costs(config, tx_index, clamp_charge)
    grid = config.grid
    start = initial_state(config)
    pos0 = tuple(grid.cell_id(p) for p in start.positions)
    mask0 = 0
    for c in start.explored:
        mask0 |= 1 << grid.cell_id(c)
    horizon = config.horizon_epochs

    if horizon == 1:
        plan = _plan_from_rows(config, [(pos0, (0,) * cm.n_robots)])
        return _result_from_plan(
            config, plan, tx_index=tx_index, clamp_charge=clamp_charge, nodes=1,
            pruned_bound=0, pruned_dominated=0, certified=True,
            wall_time_s=time.perf_counter() - t0, method="exact",
        )

    threshold, warm = _warm_start(config, tx_index, clamp_charge)

    def incumbent(rows, nodes, pruned_bound, pruned_dom):
        """Budget ran out: best incumbent so far, flagged non-certified."""
        if rows is not None:
            plan = _plan_from_rows(config, [(pos0, (0,) * cm.n_robots)] + rows)
        elif warm is not None:
            plan = warm.plan
        else:
            raise InfeasibleHorizonError(
                _max_feasible_prefix(config, tx_index, clamp_charge)
            )
        return _result_from_plan(
            config, plan, tx_index=tx_index, clamp_charge=clamp_charge,
            nodes=nodes, pruned_bound=pruned_bound, pruned_dominated=pruned_dom,
            certified=False, wall_time_s=time.perf_counter() - t0, method="exact",
        )

    # Phase 1 certifies the optimal value, visiting promising children first.
    if workers <= 1:
        s1 = _Search(cm, threshold, node_budget, order="promise")
        s1.run(1, pos0, mask0, start.batteries_mj, mask0.bit_count())
        v1, rows1 = s1.best_value, s1.best_rows
        nodes1 = s1.nodes
        pb1, pd1 = s1.pruned_bound, s1.pruned_dominated
        budget_hit = s1.budget_hit
        max_epoch = s1.max_epoch
    else:
        # Root-split: children of the root are independent jobs with budgets
        # fixed by the job count, so results do not depend on the worker
        # count or scheduling.
        probe = _Search(cm, threshold, node_budget)
        options = [
            probe._options(pos0[r], start.batteries_mj[r], mask0, horizon - 2)
            for r in range(cm.n_robots)
        ]
        jobs = []
        if all(options):
            tgt_buf = [0] * cm.n_robots
            chg_buf = [0] * cm.n_robots
            bat_buf = [0] * cm.n_robots

            def collect(r: int, chargers: int) -> None:
                if r == cm.n_robots:
                    jobs.append((tuple(tgt_buf), tuple(chg_buf), tuple(bat_buf)))
                    return
                for tgt, u, b2 in options[r]:
                    if u and chargers:
                        continue
                    tgt_buf[r] = tgt
                    chg_buf[r] = u
                    bat_buf[r] = b2
                    collect(r + 1, chargers + u)

            collect(0, 0)
        if not jobs:
            raise InfeasibleHorizonError(1)
        per_budget = max(1, node_budget // len(jobs))
        args = [
            (config, tx_index, clamp_charge, threshold, per_budget, row)
            for row in jobs
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(_run_job, args, chunksize=max(1, len(args) // (workers * 4)))
            )
        nodes1 = 1 + sum(r[2] for r in results)
        pb1 = sum(r[3] for r in results)
        pd1 = sum(r[4] for r in results)
        budget_hit = any(r[5] for r in results)
        max_epoch = max((r[6] for r in results), default=1)
        v1 = None
        rows1 = None
        for value, rows_found, *_ in results:
            if value is not None and (v1 is None or value > v1):
                v1 = value
                rows1 = rows_found

    if budget_hit:
        return incumbent(rows1, nodes1, pb1, pd1)
    if rows1 is None and warm is None:
        # search completed: no plan reaches the horizon
        raise InfeasibleHorizonError(
            _max_feasible_prefix(config, tx_index, clamp_charge)
        )
    opt = v1 if rows1 is not None else warm.objective

    # Phase 2 recovers the lex-min optimal plan: canonical order, stop at
    # the first leaf attaining the certified value.
    budget2 = node_budget - nodes1
    if budget2 <= 0:
        return incumbent(rows1, nodes1, pb1, pd1)
    s2 = _Search(cm, opt - 1, budget2, halt_at=opt)
    s2.run(1, pos0, mask0, start.batteries_mj, mask0.bit_count())
    nodes = nodes1 + s2.nodes
    pruned_bound = pb1 + s2.pruned_bound
    pruned_dom = pd1 + s2.pruned_dominated
    if s2.best_rows is None or s2.best_value != opt:
        return incumbent(rows1, nodes, pruned_bound, pruned_dom)
    rows = [(pos0, (0,) * cm.n_robots)] + s2.best_rows
    plan = _plan_from_rows(config, rows)
    return _result_from_plan(
        config, plan, tx_index=tx_index, clamp_charge=clamp_charge, nodes=nodes,
        pruned_bound=pruned_bound, pruned_dominated=pruned_dom,
        certified=True, wall_time_s=time.perf_counter() - t0, method="exact",
    )


# --- greedy ---------------------------------------------------------------


def _transit_cost_to_cs(cm: CostModel) -> list[int]:
    """Cheapest non-exploring multi-epoch cost from each cell to the station."""
    dist = [None] * cm.n_cells
    dist[cm.cs_id] = 0
    heap = [(0, cm.cs_id)]
    # reverse relaxation: moving c -> n costs rx + move (+ sen + tx[n] in SLAM)
    incoming: list[list[tuple[int, int]]] = [[] for _ in range(cm.n_cells)]
    for c in range(cm.n_cells):
        for n, mv in cm.moves[c]:
            if n == c:
                continue
            if cm.mode == "OROS":
                w = cm.rx_mj + mv
            else:
                w = cm.rx_mj + cm.sen_mj + mv + cm.tx_mj[n]
            incoming[n].append((c, w))
    while heap:
        d, cell = heapq.heappop(heap)
        if dist[cell] is not None and d > dist[cell]:
            continue
        for src, w in incoming[cell]:
            nd = d + w
            if dist[src] is None or nd < dist[src]:
                dist[src] = nd
                heapq.heappush(heap, (nd, src))
    return [d if d is not None else 1 << 62 for d in dist]


def solve_greedy(
    config: ScenarioConfig,
    *,
    tx_index: str = "as_printed",
    clamp_charge: bool = False,
    reserve_epochs: int = 1,
) -> SolveResult:
    """Frontier heuristic: grab new cells, fall back to the station on reserve.

    Robots are served in index order; each takes the feasible move maximizing
    (explores a new unclaimed cell, battery retained), and heads back to
    charge when battery minus the cheapest path to the station drops below
    reserve_epochs times one epoch's worst-case consumption (default one
    epoch; larger reserves cushion station queueing). Always replay-valid;
    never better than solve_exact.
    """
    t0 = time.perf_counter()
    cm = compile_costs(config, tx_index, clamp_charge)
    n = cm.n_robots
    horizon = cm.horizon
    grid = config.grid
    start = initial_state(config)
    positions = [grid.cell_id(p) for p in start.positions]
    batteries = list(start.batteries_mj)
    mask = 0
    for c in start.explored:
        mask |= 1 << grid.cell_id(c)
    search = _Search(cm, -1, 1)
    to_cs = _transit_cost_to_cs(cm)
    max_move = max(cost for row in cm.moves for _, cost in row)
    worst_epoch = (cm.rx_mj + cm.sen_mj + max_move + max(cm.tx_mj)) * reserve_epochs
    rows: list[tuple[tuple[int, ...], tuple[int, ...]]] = [
        (tuple(positions), (0,) * n)
    ]

    ok = True
    for epoch in range(1, horizon):
        k_next = horizon - epoch - 1
        claimed = 0
        charge_taken = False
        new_pos = []
        new_chg = []
        new_bat = []
        for r in range(n):
            opts = search._options(positions[r], batteries[r], mask, k_next)
            charge_opt = None
            if not charge_taken:
                charge_opt = next((o for o in opts if o[1] == 1), None)
            moves = [o for o in opts if o[1] == 0]
            if not moves and charge_opt is None:
                # station contention: hover survivably and retry next epoch
                relaxed = search._options(positions[r], batteries[r], mask, 0)
                moves = [o for o in relaxed if o[1] == 0]
                if not moves:
                    ok = False
                    break
            returning = (
                cm.charge_mj > 0
                and batteries[r] - to_cs[positions[r]] < worst_epoch
            )
            if returning and charge_opt is not None:
                choice = charge_opt
            elif returning and moves:
                # step along the cheapest route to the station
                choice = min(moves, key=lambda o: (to_cs[o[0]], -o[2], o[0]))
            elif moves:
                mask_claimed = mask | claimed

                def score(o):
                    tgt, _, b2 = o
                    new = not (mask_claimed >> tgt) & 1
                    return (-int(new), -b2, tgt)

                choice = min(moves, key=score)
            else:
                choice = charge_opt
            tgt, u, b2 = choice
            if u:
                charge_taken = True
            claimed |= 1 << tgt
            new_pos.append(tgt)
            new_chg.append(u)
            new_bat.append(b2)
        if not ok:
            break
        positions = new_pos
        batteries = new_bat
        for t in positions:
            mask |= 1 << t
        rows.append((tuple(positions), tuple(new_chg)))

    if not ok or len(rows) != horizon:
        rows = _fallback_rows(cm, config)
        if rows is None:
            raise InfeasibleHorizonError(
                _max_feasible_prefix(config, tx_index, clamp_charge)
            )
    plan = _plan_from_rows(config, rows)
    return _result_from_plan(
        config, plan, tx_index=tx_index, clamp_charge=clamp_charge, nodes=0,
        pruned_bound=0, pruned_dominated=0, certified=False,
        wall_time_s=time.perf_counter() - t0, method="greedy",
    )


def _fallback_rows(cm: CostModel, config: ScenarioConfig):
    """Stay-at-start plan, rotating one charger when the start is the station."""
    grid = config.grid
    start_id = cm.start_id
    n = cm.n_robots
    positions = [start_id] * n
    batteries = [cm.bmax_mj] * n
    rows = [(tuple(positions), (0,) * n)]
    stay = dict(cm.moves[start_id])[start_id]
    can_charge = cm.charge_mj > 0 and start_id == cm.cs_id
    for epoch in range(1, cm.horizon):
        charger = (epoch - 1) % n if can_charge else -1
        chg = []
        for r in range(n):
            u = 0
            if r == charger:
                gain = (
                    min(cm.bmax_mj - batteries[r], cm.charge_mj)
                    if cm.clamp_charge
                    else cm.charge_mj
                )
                b2 = batteries[r] + gain - stay
                if 0 <= b2 <= cm.bmax_mj:
                    u = 1
            if not u:
                if cm.mode == "OROS":
                    b2 = batteries[r] - cm.rx_mj - stay
                else:
                    b2 = batteries[r] - cm.rx_mj - cm.sen_mj - stay - cm.tx_mj[start_id]
            if b2 < 0 or b2 > cm.bmax_mj:
                return None
            batteries[r] = b2
            chg.append(u)
        rows.append((tuple(positions), tuple(chg)))
    return rows


# --- oracle ---------------------------------------------------------------


def brute_force_oracle(
    config: ScenarioConfig,
    *,
    tx_index: str = "as_printed",
    clamp_charge: bool = False,
) -> SolveResult:
    """Exhaustive enumeration through enumerate_actions/step; no pruning.

    Refuses instances whose enumeration estimate exceeds the cap.
    """
    t0 = time.perf_counter()
    cm = compile_costs(config, tx_index, clamp_charge)
    per_robot_max = max(
        len(row) + (1 if cm.charge_mj > 0 else 0) for row in cm.moves
    )
    estimate = (per_robot_max ** cm.n_robots) ** max(0, config.horizon_epochs - 1)
    if estimate > ORACLE_ENUMERATION_CAP:
        raise OracleSizeError(
            f"enumeration estimate {estimate} exceeds cap {ORACLE_ENUMERATION_CAP}"
        )

    best_value: int | None = None
    best_actions: list[JointAction] | None = None
    path: list[JointAction] = []
    horizon = config.horizon_epochs

    def rec(state: FleetState, cum: int) -> None:
        nonlocal best_value, best_actions
        if state.epoch == horizon:
            if best_value is None or cum > best_value:
                best_value = cum
                best_actions = list(path)
            return
        for action in enumerate_actions(state, config):
            try:
                nxt = step(state, action, config, tx_index=tx_index, clamp_charge=clamp_charge)
            except InfeasibleActionError:
                continue
            path.append(action)
            rec(nxt, cum + len(nxt.explored))
            path.pop()

    state0 = initial_state(config)
    rec(state0, len(state0.explored))
    if best_actions is None:
        raise InfeasibleHorizonError(1)
    grid = config.grid
    rows = [(tuple(grid.cell_id(p) for p in state0.positions), (0,) * cm.n_robots)]
    for action in best_actions:
        rows.append(
            (
                tuple(grid.cell_id(t) for t in action.targets),
                tuple(1 if u else 0 for u in action.charge),
            )
        )
    plan = _plan_from_rows(config, rows)
    return _result_from_plan(
        config, plan, tx_index=tx_index, clamp_charge=clamp_charge, nodes=0,
        pruned_bound=0, pruned_dominated=0, certified=True,
        wall_time_s=time.perf_counter() - t0, method="oracle",
    )
