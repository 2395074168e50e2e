"""Scenario model: grid geometry, stations, fleet, energy and radio parameters.

A scenario is a flat ``key = value`` text file (UTF-8, ``#`` comment lines).
Cells are ``a,b`` pairs, 0-based, with ``a`` the column and ``b`` the row;
cell (0,0) sits at the grid origin corner. All energies are joules at the
public API surface; callers that need exact arithmetic scale to integer
millijoules (see dynamics.CostModel).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

Cell = tuple[int, int]

SQRT2 = math.sqrt(2.0)

MODES = ("OROS", "SLAM")

# Calibrated default uplink table: (min SNR dB, TX power W) rows, thresholds
# strictly decreasing, powers non-increasing as SNR improves.  On the default
# 4x4 layout the five rows split the grid into distance rings around the base
# station of 1, 2, 5, 5 and 3 cells.
DEFAULT_TX_TABLE: tuple[tuple[float, float], ...] = (
    (45.0, 0.1),
    (40.0, 30.0),
    (33.0, 66.0),
    (30.5, 66.2),
    (0.0, 66.7),
)


class ScenarioError(ValueError):
    """Base class for scenario load/validation failures."""


class SchemaError(ScenarioError):
    """Malformed file or missing/unknown/duplicated key."""


class InvariantError(ScenarioError):
    """Structurally valid file describing an inconsistent scenario."""


class LinkOutageError(ScenarioError):
    """SNR below the last uplink table threshold: cell unservable."""


@dataclass(frozen=True)
class GridMap:
    width_m: float
    height_m: float
    cell_m: float
    blocked_edges: frozenset[tuple[Cell, Cell]] = frozenset()

    @property
    def cols(self) -> int:
        return int(round(self.width_m / self.cell_m))

    @property
    def rows(self) -> int:
        return int(round(self.height_m / self.cell_m))

    @property
    def n_cells(self) -> int:
        return self.cols * self.rows

    def in_bounds(self, cell: Cell) -> bool:
        a, b = cell
        return 0 <= a < self.cols and 0 <= b < self.rows

    def cells(self):
        """All cells in row-major order (row b outer, column a inner)."""
        for b in range(self.rows):
            for a in range(self.cols):
                yield (a, b)

    def cell_id(self, cell: Cell) -> int:
        a, b = cell
        return b * self.cols + a

    def id_to_cell(self, idx: int) -> Cell:
        return (idx % self.cols, idx // self.cols)

    def center_m(self, cell: Cell) -> tuple[float, float]:
        a, b = cell
        return ((a + 0.5) * self.cell_m, (b + 0.5) * self.cell_m)

    def is_blocked(self, frm: Cell, to: Cell) -> bool:
        return canonical_edge(frm, to) in self.blocked_edges

    def adjacent8(self, cell: Cell) -> list[Cell]:
        """In-bounds 8-neighbours, blocked or not, row-major order."""
        a, b = cell
        out = []
        for db in (-1, 0, 1):
            for da in (-1, 0, 1):
                if da == 0 and db == 0:
                    continue
                nxt = (a + da, b + db)
                if self.in_bounds(nxt):
                    out.append(nxt)
        out.sort(key=lambda c: (c[1], c[0]))
        return out

    def open_neighbors(self, cell: Cell) -> list[Cell]:
        return [c for c in self.adjacent8(cell) if not self.is_blocked(cell, c)]


@dataclass(frozen=True)
class StationLayout:
    cs_cell: Cell
    charge_rate_j_per_s: float
    bs_cell: Cell


@dataclass(frozen=True)
class FleetSpec:
    count: int
    b_max_j: float
    start_cell: Cell


@dataclass(frozen=True)
class EnergyModel:
    delta_t_s: float
    p_rx_w: float
    p_sen_w: float
    move_alpha_w: float
    move_beta: float


@dataclass(frozen=True)
class RadioModel:
    tx_power_dbm: float
    rx_gain_db: float
    noise_dbm: float
    carrier_hz: float
    tx_energy_table: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class ScenarioConfig:
    grid: GridMap
    stations: StationLayout
    fleet: FleetSpec
    energy: EnergyModel
    radio: RadioModel
    horizon_epochs: int
    mode: str


def canonical_edge(c1: Cell, c2: Cell) -> tuple[Cell, Cell]:
    return (c1, c2) if c1 <= c2 else (c2, c1)


def terrain_velocity(frm: Cell, to: Cell, grid: GridMap) -> float:
    """Velocity multiplier m for a single-epoch transition.

    0 for staying put, 1 for an orthogonal step, sqrt(2) for a diagonal
    step, inf when the edge is blocked. Raises on off-grid or
    non-adjacent cells: those are not transitions at all.
    """
    if not grid.in_bounds(frm):
        raise InvariantError(f"cell off grid: {frm}")
    if not grid.in_bounds(to):
        raise InvariantError(f"cell off grid: {to}")
    da, db = abs(frm[0] - to[0]), abs(frm[1] - to[1])
    if da > 1 or db > 1:
        raise InvariantError(f"cells not adjacent: {frm} -> {to}")
    if frm == to:
        return 0.0
    if grid.is_blocked(frm, to):
        return math.inf
    return 1.0 if da + db == 1 else SQRT2


def move_energy(frm: Cell, to: Cell, config: ScenarioConfig) -> float:
    """Locomotion energy in joules for one epoch: (alpha + beta*m) * delta_t."""
    m = terrain_velocity(frm, to, config.grid)
    if math.isinf(m):
        return math.inf
    e = config.energy
    return (e.move_alpha_w + e.move_beta * m) * e.delta_t_s


def path_loss_db(distance_m: float, carrier_hz: float) -> float:
    """Free-space path loss in dB."""
    return 20.0 * math.log10(distance_m) + 20.0 * math.log10(carrier_hz) - 147.55


def snr_db(cell: Cell, config: ScenarioConfig) -> float:
    """Uplink SNR from a cell's center to the base station center.

    Self-cell distance is clamped to cell_m/2 so the co-located case keeps
    a finite path loss.
    """
    grid, radio = config.grid, config.radio
    xa, ya = grid.center_m(cell)
    xb, yb = grid.center_m(config.stations.bs_cell)
    d = math.hypot(xa - xb, ya - yb)
    if cell == config.stations.bs_cell:
        d = max(d, grid.cell_m / 2.0)
    pl = path_loss_db(d, radio.carrier_hz)
    return radio.tx_power_dbm + radio.rx_gain_db - pl - radio.noise_dbm


def tx_power_w(cell: Cell, config: ScenarioConfig) -> float:
    """TX power drawn while uplinking from a cell: first table row met by the SNR."""
    snr = snr_db(cell, config)
    for threshold, watts in config.radio.tx_energy_table:
        if snr >= threshold:
            return watts
    raise LinkOutageError(
        f"link outage at cell {cell[0]},{cell[1]}: SNR {snr:.2f} dB below last threshold"
    )


def tx_energy(cell: Cell, config: ScenarioConfig) -> float:
    """Uplink energy in joules for one epoch of transmission from a cell."""
    return tx_power_w(cell, config) * config.energy.delta_t_s


# --- file format ---------------------------------------------------------

_REQUIRED_KEYS = (
    "grid.width_m",
    "grid.height_m",
    "grid.cell_m",
    "stations.cs_cell",
    "stations.charge_rate_j_per_s",
    "fleet.count",
    "fleet.b_max_j",
    "fleet.start_cell",
    "energy.delta_t_s",
    "energy.p_rx_w",
    "energy.p_sen_w",
    "energy.move_alpha_w",
    "energy.move_beta",
    "horizon_epochs",
)

_OPTIONAL_KEYS = (
    "grid.blocked_edges",
    "stations.bs_cell",
    "radio.tx_power_dbm",
    "radio.rx_gain_db",
    "radio.noise_dbm",
    "radio.carrier_hz",
    "radio.tx_energy_table",
    "mode",
)

_RADIO_DEFAULTS = {
    "radio.tx_power_dbm": 20.0,
    "radio.rx_gain_db": -20.0,
    "radio.noise_dbm": -104.0,
    "radio.carrier_hz": 3.5e9,
}


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise SchemaError(f"key {key}: not a number: {raw!r}") from None


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise SchemaError(f"key {key}: not an integer: {raw!r}") from None


def _parse_cell(key: str, raw: str) -> Cell:
    parts = raw.split(",")
    if len(parts) != 2:
        raise SchemaError(f"key {key}: not an a,b cell: {raw!r}")
    try:
        return (int(parts[0]), int(parts[1]))
    except ValueError:
        raise SchemaError(f"key {key}: not an a,b cell: {raw!r}") from None


def _parse_edges(key: str, raw: str) -> frozenset[tuple[Cell, Cell]]:
    edges = set()
    if not raw.strip():
        return frozenset()
    for item in raw.split(";"):
        item = item.strip()
        if not item:
            continue
        ends = item.split("-")
        if len(ends) != 2:
            raise SchemaError(f"key {key}: bad edge {item!r} (want a,b-a,b)")
        c1 = _parse_cell(key, ends[0].strip())
        c2 = _parse_cell(key, ends[1].strip())
        edges.add(canonical_edge(c1, c2))
    return frozenset(edges)


def _parse_table(key: str, raw: str) -> tuple[tuple[float, float], ...]:
    rows = []
    for item in raw.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 2:
            raise SchemaError(f"key {key}: bad row {item!r} (want snr_db:watts)")
        rows.append((_parse_float(key, parts[0]), _parse_float(key, parts[1])))
    if not rows:
        raise SchemaError(f"key {key}: empty table")
    return tuple(rows)


def load_scenario(text: str) -> ScenarioConfig:
    """Parse and validate a scenario file. Raises ScenarioError subtypes."""
    seen: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise SchemaError(f"line {lineno}: expected key = value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key in seen:
            raise SchemaError(f"duplicate key: {key}")
        if key not in _REQUIRED_KEYS and key not in _OPTIONAL_KEYS:
            raise SchemaError(f"unknown key: {key}")
        seen[key] = value
    for key in _REQUIRED_KEYS:
        if key not in seen:
            raise SchemaError(f"missing key: {key}")

    grid = GridMap(
        width_m=_parse_float("grid.width_m", seen["grid.width_m"]),
        height_m=_parse_float("grid.height_m", seen["grid.height_m"]),
        cell_m=_parse_float("grid.cell_m", seen["grid.cell_m"]),
        blocked_edges=_parse_edges("grid.blocked_edges", seen.get("grid.blocked_edges", "")),
    )
    cs_cell = _parse_cell("stations.cs_cell", seen["stations.cs_cell"])
    stations = StationLayout(
        cs_cell=cs_cell,
        charge_rate_j_per_s=_parse_float(
            "stations.charge_rate_j_per_s", seen["stations.charge_rate_j_per_s"]
        ),
        bs_cell=_parse_cell("stations.bs_cell", seen["stations.bs_cell"])
        if "stations.bs_cell" in seen
        else cs_cell,
    )
    fleet = FleetSpec(
        count=_parse_int("fleet.count", seen["fleet.count"]),
        b_max_j=_parse_float("fleet.b_max_j", seen["fleet.b_max_j"]),
        start_cell=_parse_cell("fleet.start_cell", seen["fleet.start_cell"]),
    )
    energy = EnergyModel(
        delta_t_s=_parse_float("energy.delta_t_s", seen["energy.delta_t_s"]),
        p_rx_w=_parse_float("energy.p_rx_w", seen["energy.p_rx_w"]),
        p_sen_w=_parse_float("energy.p_sen_w", seen["energy.p_sen_w"]),
        move_alpha_w=_parse_float("energy.move_alpha_w", seen["energy.move_alpha_w"]),
        move_beta=_parse_float("energy.move_beta", seen["energy.move_beta"]),
    )
    radio = RadioModel(
        tx_power_dbm=_parse_float("radio.tx_power_dbm", seen["radio.tx_power_dbm"])
        if "radio.tx_power_dbm" in seen
        else _RADIO_DEFAULTS["radio.tx_power_dbm"],
        rx_gain_db=_parse_float("radio.rx_gain_db", seen["radio.rx_gain_db"])
        if "radio.rx_gain_db" in seen
        else _RADIO_DEFAULTS["radio.rx_gain_db"],
        noise_dbm=_parse_float("radio.noise_dbm", seen["radio.noise_dbm"])
        if "radio.noise_dbm" in seen
        else _RADIO_DEFAULTS["radio.noise_dbm"],
        carrier_hz=_parse_float("radio.carrier_hz", seen["radio.carrier_hz"])
        if "radio.carrier_hz" in seen
        else _RADIO_DEFAULTS["radio.carrier_hz"],
        tx_energy_table=_parse_table("radio.tx_energy_table", seen["radio.tx_energy_table"])
        if "radio.tx_energy_table" in seen
        else DEFAULT_TX_TABLE,
    )
    mode = seen.get("mode", "OROS").upper()
    config = ScenarioConfig(
        grid=grid,
        stations=stations,
        fleet=fleet,
        energy=energy,
        radio=radio,
        horizon_epochs=_parse_int("horizon_epochs", seen["horizon_epochs"]),
        mode=mode,
    )
    validate_scenario(config)
    return config


def validate_scenario(config: ScenarioConfig) -> None:
    grid = config.grid
    if grid.cell_m <= 0:
        raise InvariantError("grid.cell_m must be positive")
    for key, span in (("grid.width_m", grid.width_m), ("grid.height_m", grid.height_m)):
        n = span / grid.cell_m
        if span <= 0 or abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise InvariantError(f"{key} = {span} is not a positive multiple of cell_m")
    for edge in sorted(grid.blocked_edges):
        c1, c2 = edge
        for c in (c1, c2):
            if not grid.in_bounds(c):
                raise InvariantError(f"blocked edge cell off grid: {c[0]},{c[1]}")
        da, db = abs(c1[0] - c2[0]), abs(c1[1] - c2[1])
        if c1 == c2 or da > 1 or db > 1:
            raise InvariantError(
                f"blocked edge not between adjacent cells: {c1[0]},{c1[1]}-{c2[0]},{c2[1]}"
            )
    for key, cell in (
        ("stations.cs_cell", config.stations.cs_cell),
        ("stations.bs_cell", config.stations.bs_cell),
        ("fleet.start_cell", config.fleet.start_cell),
    ):
        if not grid.in_bounds(cell):
            raise InvariantError(f"{key} off grid: {cell[0]},{cell[1]}")
    if config.fleet.count < 1:
        raise InvariantError("fleet.count must be at least 1")
    if config.fleet.b_max_j <= 0:
        raise InvariantError("fleet.b_max_j must be positive")
    if config.stations.charge_rate_j_per_s < 0:
        raise InvariantError("stations.charge_rate_j_per_s must be non-negative")
    e = config.energy
    if e.delta_t_s <= 0:
        raise InvariantError("energy.delta_t_s must be positive")
    for key, val in (
        ("energy.p_rx_w", e.p_rx_w),
        ("energy.p_sen_w", e.p_sen_w),
        ("energy.move_alpha_w", e.move_alpha_w),
        ("energy.move_beta", e.move_beta),
    ):
        if val < 0:
            raise InvariantError(f"{key} must be non-negative")
    if config.horizon_epochs < 1:
        raise InvariantError("horizon_epochs must be at least 1")
    if config.mode not in MODES:
        raise InvariantError(f"mode must be one of {'/'.join(MODES)}: {config.mode}")
    table = config.radio.tx_energy_table
    for i in range(1, len(table)):
        if not table[i - 1][0] > table[i][0]:
            raise InvariantError("radio.tx_energy_table thresholds must be strictly decreasing")
        if table[i - 1][1] > table[i][1]:
            raise InvariantError("radio.tx_energy_table power must not increase with SNR")
    for _, watts in table:
        if watts <= 0:
            raise InvariantError("radio.tx_energy_table power must be positive")

    # Reachability: every cell reachable from the start under unblocked 8-moves.
    start = config.fleet.start_cell
    seen = {start}
    frontier = [start]
    while frontier:
        cur = frontier.pop()
        for nxt in grid.open_neighbors(cur):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    for cell in grid.cells():
        if cell not in seen:
            raise InvariantError(f"cell unreachable from start: {cell[0]},{cell[1]}")


def _num(x: float) -> str:
    """Canonical number rendering: integers without trailing .0."""
    if isinstance(x, float) and math.isfinite(x) and x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _cell_str(cell: Cell) -> str:
    return f"{cell[0]},{cell[1]}"


def serialize_scenario(config: ScenarioConfig) -> str:
    """Canonical text for a config; load_scenario(serialize_scenario(c)) == c."""
    edges = ";".join(
        f"{_cell_str(c1)}-{_cell_str(c2)}" for c1, c2 in sorted(config.grid.blocked_edges)
    )
    table = ";".join(f"{_num(t)}:{_num(w)}" for t, w in config.radio.tx_energy_table)
    lines = [
        f"grid.width_m = {_num(config.grid.width_m)}",
        f"grid.height_m = {_num(config.grid.height_m)}",
        f"grid.cell_m = {_num(config.grid.cell_m)}",
        f"grid.blocked_edges = {edges}",
        f"stations.cs_cell = {_cell_str(config.stations.cs_cell)}",
        f"stations.charge_rate_j_per_s = {_num(config.stations.charge_rate_j_per_s)}",
        f"stations.bs_cell = {_cell_str(config.stations.bs_cell)}",
        f"fleet.count = {config.fleet.count}",
        f"fleet.b_max_j = {_num(config.fleet.b_max_j)}",
        f"fleet.start_cell = {_cell_str(config.fleet.start_cell)}",
        f"energy.delta_t_s = {_num(config.energy.delta_t_s)}",
        f"energy.p_rx_w = {_num(config.energy.p_rx_w)}",
        f"energy.p_sen_w = {_num(config.energy.p_sen_w)}",
        f"energy.move_alpha_w = {_num(config.energy.move_alpha_w)}",
        f"energy.move_beta = {_num(config.energy.move_beta)}",
        f"radio.tx_power_dbm = {_num(config.radio.tx_power_dbm)}",
        f"radio.rx_gain_db = {_num(config.radio.rx_gain_db)}",
        f"radio.noise_dbm = {_num(config.radio.noise_dbm)}",
        f"radio.carrier_hz = {_num(config.radio.carrier_hz)}",
        f"radio.tx_energy_table = {table}",
        f"horizon_epochs = {config.horizon_epochs}",
        f"mode = {config.mode}",
    ]
    return "\n".join(lines) + "\n"


def scenario_digest(config: ScenarioConfig) -> str:
    """Content hash identifying a scenario (covers the mode)."""
    return hashlib.sha256(serialize_scenario(config).encode("utf-8")).hexdigest()


def build_scenario(
    *,
    width_m: float = 40.0,
    height_m: float = 40.0,
    cell_m: float = 10.0,
    blocked_edges: frozenset[tuple[Cell, Cell]] | set | tuple = frozenset(),
    cs_cell: Cell = (0, 0),
    charge_rate_j_per_s: float = 9.24,
    bs_cell: Cell | None = None,
    count: int = 3,
    b_max_j: float = 5000.0,
    start_cell: Cell = (0, 0),
    delta_t_s: float = 10.0,
    p_rx_w: float = 4.0,
    p_sen_w: float = 12.0,
    move_alpha_w: float = 0.29,
    move_beta: float = 7.4,
    tx_power_dbm: float = 20.0,
    rx_gain_db: float = -20.0,
    noise_dbm: float = -104.0,
    carrier_hz: float = 3.5e9,
    tx_energy_table: tuple[tuple[float, float], ...] = DEFAULT_TX_TABLE,
    horizon_epochs: int = 15,
    mode: str = "OROS",
) -> ScenarioConfig:
    """Programmatic scenario builder with the stock desk-scale defaults."""
    config = ScenarioConfig(
        grid=GridMap(
            width_m=float(width_m),
            height_m=float(height_m),
            cell_m=float(cell_m),
            blocked_edges=frozenset(canonical_edge(c1, c2) for c1, c2 in blocked_edges),
        ),
        stations=StationLayout(
            cs_cell=cs_cell,
            charge_rate_j_per_s=float(charge_rate_j_per_s),
            bs_cell=cs_cell if bs_cell is None else bs_cell,
        ),
        fleet=FleetSpec(count=count, b_max_j=float(b_max_j), start_cell=start_cell),
        energy=EnergyModel(
            delta_t_s=float(delta_t_s),
            p_rx_w=float(p_rx_w),
            p_sen_w=float(p_sen_w),
            move_alpha_w=float(move_alpha_w),
            move_beta=float(move_beta),
        ),
        radio=RadioModel(
            tx_power_dbm=float(tx_power_dbm),
            rx_gain_db=float(rx_gain_db),
            noise_dbm=float(noise_dbm),
            carrier_hz=float(carrier_hz),
            tx_energy_table=tuple((float(t), float(w)) for t, w in tx_energy_table),
        ),
        horizon_epochs=horizon_epochs,
        mode=mode,
    )
    validate_scenario(config)
    return config


def with_mode(config: ScenarioConfig, mode: str) -> ScenarioConfig:
    if mode not in MODES:
        raise InvariantError(f"mode must be one of {'/'.join(MODES)}: {mode}")
    if config.mode == mode:
        return config
    return replace(config, mode=mode)
