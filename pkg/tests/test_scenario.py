"""Scenario model: geometry, energy/radio math, file format, validation."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roverplan.scenario import (
    DEFAULT_TX_TABLE,
    GridMap,
    InvariantError,
    LinkOutageError,
    SchemaError,
    build_scenario,
    canonical_edge,
    load_scenario,
    move_energy,
    scenario_digest,
    serialize_scenario,
    snr_db,
    terrain_velocity,
    tx_energy,
    tx_power_w,
    with_mode,
)

GRID = GridMap(width_m=40.0, height_m=40.0, cell_m=10.0)


def test_grid_indexing_row_major():
    assert GRID.cols == 4 and GRID.rows == 4 and GRID.n_cells == 16
    cells = list(GRID.cells())
    assert cells[0] == (0, 0) and cells[1] == (1, 0) and cells[4] == (0, 1)
    for i, cell in enumerate(cells):
        assert GRID.cell_id(cell) == i
        assert GRID.id_to_cell(i) == cell


def test_adjacent8_counts():
    assert len(GRID.adjacent8((0, 0))) == 3
    assert len(GRID.adjacent8((1, 0))) == 5
    assert len(GRID.adjacent8((1, 1))) == 8
    # row-major neighbour order
    assert GRID.adjacent8((1, 1)) == [
        (0, 0), (1, 0), (2, 0), (0, 1), (2, 1), (0, 2), (1, 2), (2, 2),
    ]


def test_terrain_velocity():
    assert terrain_velocity((1, 1), (1, 1), GRID) == 0.0
    assert terrain_velocity((1, 1), (2, 1), GRID) == 1.0
    assert terrain_velocity((1, 1), (2, 2), GRID) == pytest.approx(math.sqrt(2))
    blocked = GridMap(40.0, 40.0, 10.0, frozenset({canonical_edge((1, 1), (2, 1))}))
    assert math.isinf(terrain_velocity((2, 1), (1, 1), blocked))
    with pytest.raises(InvariantError):
        terrain_velocity((0, 0), (2, 0), GRID)
    with pytest.raises(InvariantError):
        terrain_velocity((0, 0), (-1, 0), GRID)


def test_move_energy_literals():
    # (0.29 + 7.4 m) W x 10 s at m in {0, 1, sqrt(2)}
    cfg = build_scenario()
    assert move_energy((1, 1), (1, 1), cfg) == pytest.approx(2.9)
    assert move_energy((1, 1), (1, 2), cfg) == pytest.approx(76.9)
    assert move_energy((1, 1), (2, 2), cfg) == pytest.approx(107.5518, abs=1e-4)


def test_snr_closed_form():
    # defaults collapse to SNR = 60.6686 - 20 log10(d); self-cell clamps d to 5 m
    cfg = build_scenario()
    expect = {
        (0, 0): 46.6892,   # d = 5 (clamped)
        (1, 0): 40.6686,   # d = 10
        (1, 1): 37.6583,   # d = 10*sqrt(2)
        (2, 0): 34.6480,   # d = 20
        (2, 1): 33.6789,   # d = 10*sqrt(5)
        (2, 2): 31.6377,   # d = 20*sqrt(2)
        (3, 0): 31.1262,   # d = 30
        (3, 1): 30.6686,   # d = 10*sqrt(10)
        (3, 2): 29.5292,   # d = 10*sqrt(13)
        (3, 3): 28.1159,   # d = 30*sqrt(2)
    }
    for cell, want in expect.items():
        assert snr_db(cell, cfg) == pytest.approx(want, abs=2e-4), cell
    # symmetry across the diagonal
    assert snr_db((0, 3), cfg) == pytest.approx(snr_db((3, 0), cfg))


def test_default_table_tier_map():
    cfg = build_scenario()
    assert tuple(t for t, _ in DEFAULT_TX_TABLE) == (45.0, 40.0, 33.0, 30.5, 0.0)
    tiers = {w: set() for _, w in DEFAULT_TX_TABLE}
    for cell in cfg.grid.cells():
        tiers[tx_power_w(cell, cfg)].add(cell)
    by_power = [tiers[w] for _, w in DEFAULT_TX_TABLE]
    assert by_power[0] == {(0, 0)}
    assert by_power[1] == {(1, 0), (0, 1)}
    assert by_power[2] == {(1, 1), (2, 0), (0, 2), (2, 1), (1, 2)}
    assert by_power[3] == {(2, 2), (3, 0), (0, 3), (3, 1), (1, 3)}
    assert by_power[4] == {(3, 2), (2, 3), (3, 3)}
    # energy = power x epoch length
    assert tx_energy((1, 0), cfg) == pytest.approx(300.0)
    assert tx_energy((3, 3), cfg) == pytest.approx(667.0)


def test_link_outage():
    cfg = build_scenario(tx_energy_table=((45.0, 1.0), (40.0, 2.0)))
    with pytest.raises(LinkOutageError):
        tx_power_w((3, 3), cfg)


def test_serialize_load_roundtrip():
    cfg = build_scenario(
        blocked_edges={((1, 2), (1, 3)), ((2, 2), (2, 3)), ((3, 2), (3, 3))},
        count=2,
        mode="SLAM",
        tx_energy_table=((45.0, 2.0), (0.0, 8.0)),
    )
    assert load_scenario(serialize_scenario(cfg)) == cfg
    # canonical text: same config serializes to identical bytes
    assert serialize_scenario(cfg) == serialize_scenario(
        load_scenario(serialize_scenario(cfg))
    )


def test_digest_covers_mode():
    cfg = build_scenario()
    assert scenario_digest(cfg) != scenario_digest(with_mode(cfg, "SLAM"))
    assert len(scenario_digest(cfg)) == 64


def test_bs_defaults_to_cs():
    text = serialize_scenario(build_scenario())
    lines = [ln for ln in text.splitlines() if not ln.startswith("stations.bs_cell")]
    cfg = load_scenario("\n".join(lines) + "\n")
    assert cfg.stations.bs_cell == cfg.stations.cs_cell


@pytest.mark.parametrize(
    "mutate,match",
    [
        (("fleet.count = 3", "fleet.count = 0"), "fleet.count"),
        (("fleet.b_max_j = 5000", "fleet.b_max_j = 0"), "b_max_j"),
        (("horizon_epochs = 15", "horizon_epochs = 0"), "horizon_epochs"),
        (("mode = OROS", "mode = BOTH"), "mode"),
        (("grid.width_m = 40", "grid.width_m = 45"), "multiple"),
        (
            ("stations.charge_rate_j_per_s = 9.24", "stations.charge_rate_j_per_s = -1"),
            "charge_rate",
        ),
        (("energy.p_rx_w = 4", "energy.p_rx_w = -4"), "p_rx_w"),
        (
            ("stations.cs_cell = 0,0", "stations.cs_cell = 9,9"),
            "off grid",
        ),
    ],
)
def test_invariant_rejections(mutate, match):
    old, new = mutate
    text = serialize_scenario(build_scenario()).replace(old, new)
    with pytest.raises(InvariantError, match=match):
        load_scenario(text)


@pytest.mark.parametrize(
    "line,match",
    [
        ("bogus.key = 1", "unknown key"),
        ("fleet.count = two", "not an integer"),
        ("grid.width_m = wide", "not a number"),
        ("fleet.start_cell = 1;2", "not an a,b cell"),
        ("grid.blocked_edges = 0,0:1,1", "bad edge"),
        ("radio.tx_energy_table = 45;2", "bad row"),
    ],
)
def test_schema_rejections(line, match):
    base = serialize_scenario(build_scenario())
    key = line.split("=")[0].strip()
    text = "\n".join(
        line if ln.startswith(key) else ln for ln in base.splitlines()
    )
    if key not in base:
        text = base + line + "\n"
    with pytest.raises(SchemaError, match=match):
        load_scenario(text)


def test_duplicate_and_missing_keys():
    base = serialize_scenario(build_scenario())
    with pytest.raises(SchemaError, match="duplicate"):
        load_scenario(base + "mode = OROS\n")
    dropped = "\n".join(
        ln for ln in base.splitlines() if not ln.startswith("fleet.count")
    )
    with pytest.raises(SchemaError, match="missing key"):
        load_scenario(dropped + "\n")


def test_comments_and_blank_lines_ignored():
    base = serialize_scenario(build_scenario())
    noisy = "# a comment\n\n" + base.replace(
        "mode = OROS", "mode = OROS   # trailing content is part of the value"
    )
    with pytest.raises(InvariantError):
        # trailing text folds into the value; modes are strict
        load_scenario(noisy)
    assert load_scenario("# c\n\n" + base) == build_scenario()


def test_table_invariants():
    with pytest.raises(InvariantError, match="strictly decreasing"):
        build_scenario(tx_energy_table=((30.0, 2.0), (30.0, 3.0)))
    with pytest.raises(InvariantError, match="must not increase"):
        build_scenario(tx_energy_table=((30.0, 5.0), (0.0, 3.0)))
    with pytest.raises(InvariantError, match="positive"):
        build_scenario(tx_energy_table=((30.0, 0.0), (0.0, 0.0)))


def test_unreachable_cell_rejected():
    # 1x2 grid with its only edge blocked
    with pytest.raises(InvariantError, match="unreachable"):
        build_scenario(
            width_m=20.0, height_m=10.0, blocked_edges={((0, 0), (1, 0))}
        )


@settings(deadline=None, max_examples=60, derandomize=True)
@given(
    cols=st.integers(1, 4),
    rows=st.integers(1, 4),
    count=st.integers(1, 3),
    horizon=st.integers(1, 6),
    b_max=st.floats(100.0, 20000.0, allow_nan=False),
    p_sen=st.floats(0.0, 64.0, allow_nan=False),
    charge=st.floats(0.0, 20.0, allow_nan=False),
    mode=st.sampled_from(("OROS", "SLAM")),
)
def test_roundtrip_property(cols, rows, count, horizon, b_max, p_sen, charge, mode):
    cfg = build_scenario(
        width_m=cols * 10.0,
        height_m=rows * 10.0,
        count=count,
        horizon_epochs=horizon,
        b_max_j=b_max,
        p_sen_w=p_sen,
        charge_rate_j_per_s=charge,
        mode=mode,
    )
    again = load_scenario(serialize_scenario(cfg))
    assert again == cfg
    assert scenario_digest(again) == scenario_digest(cfg)
