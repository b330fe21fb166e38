"""Grid case files and admittance-matrix construction.

A grid is an undirected graph of buses joined by transmission lines. Each
line carries a series impedance r + jx; its admittance 1/(r + jx) is the
edge weight of a complex weighted Laplacian, which doubles as the bus
admittance matrix because shunt elements, transformer taps and phase
shifts are not modelled. The complex Laplacian splits into two real
Laplacians (real part, negated imaginary part) that downstream spectral
analysis operates on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

BUS_KINDS = ("slack", "pv", "pq")


class CaseError(ValueError):
    """Raised when a case file violates the schema or a grid invariant."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    p_set: float = 0.0
    q_set: float = 0.0
    v_set: float | None = None


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float


@dataclass(frozen=True)
class GridCase:
    """A validated grid description. Immutable; safe to share across tasks."""

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    base_mva: float = 1.0

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def slack_index(self) -> int:
        """0-based index of the slack bus."""
        for i, bus in enumerate(self.buses):
            if bus.kind == "slack":
                return i
        raise CaseError("case has no slack bus")

    def bus(self, bus_id: int) -> Bus:
        return self.buses[bus_id - 1]

    def replace_injections(self, p: dict[int, float], q: dict[int, float]) -> "GridCase":
        """Return a copy with p_set/q_set overridden for the given bus ids."""
        buses = tuple(
            Bus(b.id, b.kind, p.get(b.id, b.p_set), q.get(b.id, b.q_set), b.v_set)
            for b in self.buses
        )
        return GridCase(buses, self.lines, self.base_mva)


@dataclass(frozen=True)
class LaplacianPair:
    """The two real Laplacians derived from the complex admittance matrix.

    ``yr`` is the real part, ``yj`` the negated imaginary part; both are
    symmetric positive-semidefinite with zero row sums. For ``mode="dc"``
    only ``yr`` is meaningful (reactance-only weights) and ``yj`` is zero.
    """

    yr: np.ndarray
    yj: np.ndarray
    mode: str = "ac"

    def __post_init__(self):
        self.yr.setflags(write=False)
        self.yj.setflags(write=False)


def _require(cond: bool, msg: str):
    if not cond:
        raise CaseError(msg)


def _as_number(value, what: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise CaseError(f"{what} must be a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise CaseError(f"{what} must be finite, got {value!r}")
    return v


def parse_case(text: str) -> GridCase:
    """Parse and validate a JSON case file.

    Expected shape::

        {"base_mva": number,
         "buses": [{"id": int, "kind": "slack"|"pv"|"pq",
                    "p": number, "q": number, "v": number}, ...],
         "lines": [{"from": int, "to": int, "r": number, "x": number}, ...]}

    ``p``/``q`` default to 0 and ``v`` is required for slack and pv buses.
    Parallel lines between the same bus pair are merged by adding their
    admittances. Raises :class:`CaseError` with the offending location for
    schema violations, duplicate ids, non-positive reactance, missing or
    duplicated slack, or a disconnected graph.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"not valid JSON: {exc}") from exc
    _require(isinstance(raw, dict), "top-level value must be an object")
    _require("buses" in raw and isinstance(raw["buses"], list), 'missing "buses" array')
    _require("lines" in raw and isinstance(raw["lines"], list), 'missing "lines" array')
    base_mva = _as_number(raw.get("base_mva", 1.0), "base_mva")

    buses: list[Bus] = []
    seen_ids: set[int] = set()
    slack_count = 0
    for i, entry in enumerate(raw["buses"]):
        where = f"buses[{i}]"
        _require(isinstance(entry, dict), f"{where} must be an object")
        bus_id = entry.get("id")
        _require(isinstance(bus_id, int) and not isinstance(bus_id, bool),
                 f"{where}: id must be an integer")
        _require(bus_id not in seen_ids, f"{where}: duplicate bus id {bus_id}")
        seen_ids.add(bus_id)
        kind = entry.get("kind")
        _require(kind in BUS_KINDS, f"{where}: kind must be one of {BUS_KINDS}, got {kind!r}")
        p = _as_number(entry.get("p", 0.0), f"{where}.p")
        q = _as_number(entry.get("q", 0.0), f"{where}.q")
        v = entry.get("v")
        if kind in ("slack", "pv"):
            _require(v is not None, f"{where}: {kind} bus requires a voltage setpoint v")
        if v is not None:
            v = _as_number(v, f"{where}.v")
            _require(v > 0, f"{where}: voltage setpoint must be positive, got {v}")
        if kind == "slack":
            slack_count += 1
        buses.append(Bus(bus_id, kind, p, q, v))

    m = len(buses)
    _require(m >= 2, f"a grid needs at least 2 buses, got {m}")
    _require(slack_count == 1, f"exactly one slack bus required, found {slack_count}")
    _require(seen_ids == set(range(1, m + 1)),
             f"bus ids must be a contiguous 1..{m} range, got {sorted(seen_ids)}")
    buses.sort(key=lambda b: b.id)

    # Collect line impedances per unordered pair; parallel lines merge by
    # admittance addition, single lines keep their input values exactly.
    pair_impedances: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for i, entry in enumerate(raw["lines"]):
        where = f"lines[{i}]"
        _require(isinstance(entry, dict), f"{where} must be an object")
        f_bus, t_bus = entry.get("from"), entry.get("to")
        for label, b in (("from", f_bus), ("to", t_bus)):
            _require(isinstance(b, int) and not isinstance(b, bool),
                     f"{where}: {label} must be an integer bus id")
            _require(b in seen_ids, f"{where}: {label} references unknown bus {b}")
        _require(f_bus != t_bus, f"{where}: self-loop on bus {f_bus}")
        r = _as_number(entry.get("r", 0.0), f"{where}.r")
        x = entry.get("x")
        _require(x is not None, f"{where}: missing reactance x")
        x = _as_number(x, f"{where}.x")
        _require(x > 0, f"zero reactance on line ({f_bus},{t_bus})" if x == 0
                 else f"negative reactance on line ({f_bus},{t_bus})")
        _require(r >= 0, f"{where}: negative resistance on line ({f_bus},{t_bus})")
        key = (min(f_bus, t_bus), max(f_bus, t_bus))
        pair_impedances.setdefault(key, []).append((r, x))

    _require(pair_impedances, "case has no lines")
    lines = []
    for (f_bus, t_bus), impedances in sorted(pair_impedances.items()):
        if len(impedances) == 1:
            r, x = impedances[0]
        else:
            z = 1.0 / sum(1.0 / complex(r, x) for r, x in impedances)
            r, x = z.real, z.imag
        lines.append(Line(f_bus, t_bus, r, x))

    _check_connected(m, lines)
    return GridCase(tuple(buses), tuple(lines), base_mva)


def load_case(path: str) -> GridCase:
    with open(path, encoding="utf-8") as fh:
        return parse_case(fh.read())


def bundled_case(name: str = "ieee14") -> GridCase:
    """Load one of the case files shipped with the package."""
    ref = resources.files("gridspect.data").joinpath(f"{name}.json")
    return parse_case(ref.read_text(encoding="utf-8"))


def _check_connected(m: int, lines: list[Line]):
    adjacency: list[list[int]] = [[] for _ in range(m)]
    for line in lines:
        adjacency[line.from_bus - 1].append(line.to_bus - 1)
        adjacency[line.to_bus - 1].append(line.from_bus - 1)
    seen = {0}
    stack = [0]
    while stack:
        node = stack.pop()
        for nxt in adjacency[node]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    if len(seen) != m:
        missing = sorted(i + 1 for i in range(m) if i not in seen)
        raise CaseError(f"graph is disconnected; buses unreachable from bus 1: {missing}")


def _laplacian_from_weights(m: int, edges: list[tuple[int, int, complex]]) -> np.ndarray:
    y = np.zeros((m, m), dtype=complex)
    for i, j, w in edges:
        y[i, j] -= w
        y[j, i] -= w
        y[i, i] += w
        y[j, j] += w
    return y


def build_admittance_ac(case: GridCase) -> np.ndarray:
    """Complex admittance matrix with line weights 1/(r + jx).

    Symmetric with exactly zero row sums (no shunt terms are modelled).
    """
    edges = [
        (ln.from_bus - 1, ln.to_bus - 1, 1.0 / complex(ln.r, ln.x))
        for ln in case.lines
    ]
    return _laplacian_from_weights(case.n_buses, edges)


def decompose(y: np.ndarray) -> LaplacianPair:
    """Split a complex admittance matrix into its two real Laplacians.

    Returns yr = Re(y) and yj = -Im(y). Fails if either result has a
    positive off-diagonal beyond 1e-12, which signals invalid line
    parameters upstream.
    """
    yr = np.ascontiguousarray(y.real)
    yj = np.ascontiguousarray(-y.imag)
    for name, mat in (("yr", yr), ("yj", yj)):
        off = mat - np.diag(np.diag(mat))
        worst = off.max(initial=0.0)
        if worst > 1e-12:
            i, j = np.unravel_index(np.argmax(off), off.shape)
            raise CaseError(
                f"{name} has positive off-diagonal {worst:.3e} at ({i + 1},{j + 1}); "
                "line parameters do not form a Laplacian"
            )
    return LaplacianPair(yr=yr, yj=yj, mode="ac")


def build_admittance_dc(case: GridCase) -> LaplacianPair:
    """Reactance-only Laplacian for the linearized model; resistance ignored."""
    m = case.n_buses
    edges = [(ln.from_bus - 1, ln.to_bus - 1, complex(1.0 / ln.x)) for ln in case.lines]
    yr = _laplacian_from_weights(m, edges).real
    return LaplacianPair(yr=yr, yj=np.zeros((m, m)), mode="dc")
