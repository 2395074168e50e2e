"""Battery recursions, joint-action admissibility, replay validation.

Energy oracles are hand-computed millijoules for the default scenario:
stay 2900, orthogonal 76900, diagonal 107552, rx 40000, sen 120000,
charge 92400, uplink {1000, 300000, 660000, 662000, 667000} by ring.
"""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roverplan.dynamics import (
    InfeasibleActionError,
    JointAction,
    Plan,
    PlanMismatchError,
    compile_costs,
    enumerate_actions,
    format_plan,
    format_trace_csv,
    initial_state,
    parse_plan,
    replay,
    robot_energy_mj,
    step,
    transition,
)
from roverplan.scenario import build_scenario, scenario_digest, with_mode

CFG = build_scenario()  # 4x4, 3 robots, OROS, charging on


def test_compiled_millijoule_constants():
    cm = compile_costs(CFG)
    assert cm.rx_mj == 40_000
    assert cm.sen_mj == 120_000
    assert cm.charge_mj == 92_400
    assert cm.bmax_mj == 5_000_000
    assert cm.move_cost(0, 0) == 2_900
    assert cm.move_cost(0, 1) == 76_900
    assert cm.move_cost(0, 5) == 107_552
    assert cm.move_cost(0, 2) is None  # not adjacent
    assert cm.tx_mj[0] == 1_000
    assert cm.tx_mj[1] == 300_000
    assert cm.tx_mj[5] == 660_000
    assert cm.tx_mj[10] == 662_000
    assert cm.tx_mj[15] == 667_000


def test_oros_recursion_items():
    cfg = build_scenario(count=1)
    state = initial_state(cfg)
    move = JointAction(targets=((1, 0),), charge=(False,))
    nxt, items = transition(state, move, cfg)
    it = items[0]
    # as_printed: uplink indexed at the old cell, which is always explored
    assert (it.move_mj, it.rx_mj, it.sen_mj, it.tx_mj, it.charge_mj) == (
        76_900, 40_000, 120_000, 0, 0,
    )
    assert nxt.batteries_mj[0] == 5_000_000 - 236_900
    assert nxt.explored == {(0, 0), (1, 0)}

    nxt2, items2 = transition(state, move, cfg, tx_index="new_cell")
    assert items2[0].tx_mj == 300_000
    assert nxt2.batteries_mj[0] == 5_000_000 - 536_900

    # revisiting an explored cell: no sensing, no uplink either way
    back = JointAction(targets=((0, 0),), charge=(False,))
    nxt3, items3 = transition(nxt2, back, cfg, tx_index="new_cell")
    assert items3[0].sen_mj == 0 and items3[0].tx_mj == 0
    assert nxt3.batteries_mj[0] == nxt2.batteries_mj[0] - 116_900


def test_slam_recursion_items():
    cfg = build_scenario(count=1, mode="SLAM")
    state = initial_state(cfg)
    move = JointAction(targets=((1, 0),), charge=(False,))
    nxt, items = transition(state, move, cfg)
    it = items[0]
    # rx + sen every awake epoch, uplink always at the entered cell
    assert (it.move_mj, it.rx_mj, it.sen_mj, it.tx_mj) == (
        76_900, 40_000, 120_000, 300_000,
    )
    # revisit pays sensing and uplink again
    back = JointAction(targets=((0, 0),), charge=(False,))
    _, items2 = transition(nxt, back, cfg)
    assert (items2[0].sen_mj, items2[0].tx_mj) == (120_000, 1_000)


def test_slam_ignores_tx_index():
    cfg = build_scenario(count=1, mode="SLAM")
    state = initial_state(cfg)
    move = JointAction(targets=((1, 0),), charge=(False,))
    a = transition(state, move, cfg, tx_index="as_printed")[1]
    b = transition(state, move, cfg, tx_index="new_cell")[1]
    assert a == b


def test_charging_waives_rx_and_caps():
    cfg = build_scenario(count=1)
    state = initial_state(cfg)
    charge = JointAction(targets=((0, 0),), charge=(True,))
    # full battery: uncapped gain overshoots B_max -> infeasible
    with pytest.raises(InfeasibleActionError, match="above capacity"):
        transition(state, charge, cfg)
    # clamp mode: gain shrinks to the headroom left before spending
    nxt, items = transition(state, charge, cfg, clamp_charge=True)
    assert items[0].rx_mj == 0
    assert items[0].charge_mj == 0  # already full
    assert nxt.batteries_mj[0] == 5_000_000 - 2_900

    # after draining, an uncapped charge fits
    out = step(state, JointAction(targets=((1, 1),), charge=(False,)), cfg)
    back = step(out, JointAction(targets=((0, 0),), charge=(False,)), cfg)
    nxt2, items2 = transition(back, charge, cfg)
    assert items2[0].charge_mj == 92_400
    assert nxt2.batteries_mj[0] == back.batteries_mj[0] + 92_400 - 2_900


def test_slam_charging_waives_sensing_and_uplink():
    cfg = build_scenario(count=1, mode="SLAM", b_max_j=1000.0)
    state = initial_state(cfg)
    out = step(state, JointAction(targets=((1, 0),), charge=(False,)), cfg)
    back = step(out, JointAction(targets=((0, 0),), charge=(False,)), cfg)
    _, items = transition(back, JointAction(targets=((0, 0),), charge=(True,)), cfg)
    it = items[0]
    assert (it.rx_mj, it.sen_mj, it.tx_mj) == (0, 0, 0)
    assert it.charge_mj == 92_400


def test_strict_survival():
    cfg = build_scenario(count=1, b_max_j=200.0)
    state = initial_state(cfg)
    with pytest.raises(InfeasibleActionError, match="below zero"):
        step(state, JointAction(targets=((1, 0),), charge=(False,)), cfg)


def test_charging_rules():
    cfg = build_scenario(count=2)
    state = initial_state(cfg)
    with pytest.raises(InfeasibleActionError, match="more than one robot"):
        step(state, JointAction(targets=((0, 0), (0, 0)), charge=(True, True)), cfg)
    with pytest.raises(InfeasibleActionError, match="away from the station"):
        step(state, JointAction(targets=((0, 0), (1, 0)), charge=(False, True)), cfg)
    dead = build_scenario(count=1, charge_rate_j_per_s=0.0)
    with pytest.raises(InfeasibleActionError, match="zero-rate"):
        step(initial_state(dead), JointAction(targets=((0, 0),), charge=(True,)), dead)


def test_kinematics_rejections():
    cfg = build_scenario(count=1)
    state = initial_state(cfg)
    with pytest.raises(InfeasibleActionError, match="non-adjacent"):
        step(state, JointAction(targets=((2, 0),), charge=(False,)), cfg)
    with pytest.raises(InfeasibleActionError, match="arity"):
        step(state, JointAction(targets=((0, 0), (0, 0)), charge=(False, False)), cfg)
    blocked = build_scenario(blocked_edges={((0, 0), (1, 0))}, count=1)
    with pytest.raises(InfeasibleActionError, match="blocked edge"):
        step(
            initial_state(blocked),
            JointAction(targets=((1, 0),), charge=(False,)),
            blocked,
        )


def test_enumerate_actions_canonical():
    cfg = build_scenario(count=1)
    state = initial_state(cfg)
    acts = enumerate_actions(state, cfg)
    # self + 3 neighbours, plus one charging variant at the station cell
    assert [(a.targets[0], a.charge[0]) for a in acts] == [
        ((0, 0), False),
        ((0, 0), True),
        ((1, 0), False),
        ((0, 1), False),
        ((1, 1), False),
    ]
    two = build_scenario(count=2)
    acts2 = enumerate_actions(initial_state(two), two)
    assert len(acts2) == 24  # 5 x 5 minus the double-charge combination
    assert all(sum(a.charge) <= 1 for a in acts2)


def test_enumerate_respects_horizon():
    cfg = build_scenario(count=1, horizon_epochs=1)
    with pytest.raises(Exception, match="horizon"):
        enumerate_actions(initial_state(cfg), cfg)


def test_oros_as_printed_uplink_is_mask_coupled_zero():
    # the occupied cell is explored by construction, so the as_printed
    # uplink term can never fire in OROS
    cfg = build_scenario(count=2, horizon_epochs=4)
    state = initial_state(cfg)
    frontier = [state]
    seen = 0
    while frontier and seen < 400:
        cur = frontier.pop()
        if cur.epoch >= cfg.horizon_epochs:
            continue
        for action in enumerate_actions(cur, cfg):
            try:
                nxt, items = transition(cur, action, cfg)
            except InfeasibleActionError:
                continue
            assert all(it.tx_mj == 0 for it in items)
            seen += 1
            frontier.append(nxt)
    assert seen >= 400


def _walk_plan(cfg, moves):
    """Build a Plan from explicit epoch-2.. targets for a 1-robot scenario."""
    cells = [cfg.fleet.start_cell, *moves]
    return Plan(
        digest=scenario_digest(cfg),
        mode=cfg.mode,
        positions=(tuple(cells),),
        charge=((False,) * len(cells),),
    )


def test_replay_trace_and_objective():
    cfg = build_scenario(count=1, horizon_epochs=3)
    plan = _walk_plan(cfg, [(1, 0), (1, 1)])
    report = replay(plan, cfg)
    assert report.ok and report.violation is None
    trace = report.trace
    # |E_1| + |E_2| + |E_3| = 1 + 2 + 3
    assert trace.objective == 6
    assert trace.explored_total == 3
    assert [row.explored_total for row in trace.rows] == [1, 2, 3]
    assert trace.final_state.batteries_mj[0] == 5_000_000 - 236_900 - 236_900


def test_replay_mismatches_raise():
    cfg = build_scenario(count=1, horizon_epochs=3)
    plan = _walk_plan(cfg, [(1, 0), (1, 1)])
    with pytest.raises(PlanMismatchError, match="digest"):
        replay(plan, build_scenario(count=1, horizon_epochs=4))
    with pytest.raises(PlanMismatchError, match="mode"):
        bad = Plan(
            digest=plan.digest, mode="SLAM", positions=plan.positions, charge=plan.charge
        )
        replay(bad, cfg)
    short = Plan(
        digest=plan.digest,
        mode=plan.mode,
        positions=((cfg.fleet.start_cell,),),
        charge=((False,),),
    )
    with pytest.raises(PlanMismatchError, match="span the horizon"):
        replay(short, cfg)


@pytest.mark.parametrize(
    "mutate,constraint",
    [
        (lambda p: [(2, 0), (1, 1)], "adjacency"),
        (lambda p: [(9, 9), (1, 1)], "off-grid"),
    ],
)
def test_replay_violations(mutate, constraint):
    cfg = build_scenario(count=1, horizon_epochs=3)
    plan = _walk_plan(cfg, mutate(None))
    report = replay(plan, cfg)
    assert not report.ok
    assert report.violation.constraint == constraint


def test_replay_battery_violation():
    cfg = build_scenario(count=1, horizon_epochs=3, b_max_j=250.0)
    plan = _walk_plan(cfg, [(1, 0), (1, 1)])
    report = replay(plan, cfg)
    assert not report.ok
    assert report.violation.constraint == "battery-lower-bound"
    assert report.violation.epoch == 3  # 236.9 J fits in 250, the next leg does not


def test_replay_start_checks():
    cfg = build_scenario(count=1, horizon_epochs=2)
    bad_start = Plan(
        digest=scenario_digest(cfg),
        mode=cfg.mode,
        positions=(((1, 0), (1, 1)),),
        charge=((False, False),),
    )
    assert replay(bad_start, cfg).violation.constraint == "start-cell"
    charged = Plan(
        digest=scenario_digest(cfg),
        mode=cfg.mode,
        positions=(((0, 0), (0, 0)),),
        charge=((True, False),),
    )
    assert replay(charged, cfg).violation.constraint == "initial-charge"


def test_plan_document_roundtrip():
    cfg = build_scenario(count=2, horizon_epochs=3)
    plan = Plan(
        digest=scenario_digest(cfg),
        mode=cfg.mode,
        positions=(
            ((0, 0), (1, 0), (1, 1)),
            ((0, 0), (0, 1), (0, 0)),
        ),
        charge=(
            (False, False, False),
            (False, False, True),
        ),
    )
    text = format_plan(plan, tx_index="new_cell", clamp_charge=True)
    doc = parse_plan(text)
    assert doc.plan == plan
    assert doc.tx_index == "new_cell"
    assert doc.clamp_charge is True
    # default headers stay implicit
    bare = format_plan(plan)
    assert "tx_index" not in bare and "clamp_charge" not in bare
    assert parse_plan(bare).tx_index == "as_printed"


@pytest.mark.parametrize(
    "damage,match",
    [
        (lambda t: t.replace("# digest=", "# igest="), "digest"),
        (lambda t: t + t.splitlines()[2] + "\n", "duplicate"),
        # dropping a middle row (the last would just shorten the horizon)
        (
            lambda t: "\n".join(ln for ln in t.splitlines() if not ln.startswith("2,1,"))
            + "\n",
            "missing epoch",
        ),
        (lambda t: t.replace("1,1,0,0,0", "1,1,0,0"), "want epoch"),
    ],
)
def test_parse_plan_rejections(damage, match):
    cfg = build_scenario(count=1, horizon_epochs=3)
    text = format_plan(_walk_plan(cfg, [(1, 0), (1, 1)]))
    with pytest.raises(ValueError, match=match):
        parse_plan(damage(text))


def test_trace_csv_shape():
    cfg = build_scenario(count=1, horizon_epochs=2)
    report = replay(_walk_plan(cfg, [(1, 0)]), cfg)
    csv = format_trace_csv(report.trace)
    lines = csv.splitlines()
    assert lines[0].startswith("epoch,robot,a,b,battery_j")
    assert lines[1] == "1,1,0,0,5000.00,0,0.00,0.00,0.00,0.00,0.00,1"
    assert lines[2] == "2,1,1,0,4763.10,0,76.90,40.00,0.00,120.00,0.00,2"


@settings(deadline=None, max_examples=40, derandomize=True)
@given(
    data=st.data(),
    mode=st.sampled_from(("OROS", "SLAM")),
    count=st.integers(1, 2),
    charge=st.sampled_from((0.0, 9.24)),
    tx_index=st.sampled_from(("as_printed", "new_cell")),
)
def test_random_walk_invariants(data, mode, count, charge, tx_index):
    cfg = build_scenario(
        width_m=20.0,
        height_m=20.0,
        count=count,
        horizon_epochs=4,
        charge_rate_j_per_s=charge,
        mode=mode,
    )
    cm = compile_costs(cfg, tx_index, False)
    state = initial_state(cfg)
    objective = len(state.explored)
    for _ in range(cfg.horizon_epochs - 1):
        acts = enumerate_actions(state, cfg)
        feasible = []
        for action in acts:
            try:
                feasible.append(
                    (action, step(state, action, cfg, tx_index=tx_index))
                )
            except InfeasibleActionError:
                continue
        if not feasible:
            return
        _, state = data.draw(st.sampled_from(feasible))
        # battery window, mask growth, position containment
        assert all(0 <= b <= cm.bmax_mj for b in state.batteries_mj)
        assert set(state.positions) <= state.explored
        objective += len(state.explored)
    assert state.epoch == cfg.horizon_epochs
    assert objective >= cfg.horizon_epochs  # at least the start cell each epoch
