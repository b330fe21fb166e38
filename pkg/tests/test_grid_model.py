"""Case parsing and Laplacian construction."""

import json

import numpy as np
import pytest

from gridspect import (
    CaseError,
    bundled_case,
    build_admittance_ac,
    build_admittance_dc,
    decompose,
    parse_case,
)
from gridspect.grid_model import Bus, GridCase, Line

from conftest import two_bus_case_text

# Edge list transcribed independently from the 14-bus one-line diagram,
# used as the sparsity oracle for the bundled case file.
IEEE14_EDGES = {
    (1, 2), (1, 5), (2, 3), (2, 4), (2, 5), (3, 4), (4, 5), (4, 7), (4, 9),
    (5, 6), (6, 11), (6, 12), (6, 13), (7, 8), (7, 9), (9, 10), (9, 14),
    (10, 11), (12, 13), (13, 14),
}


def test_parse_minimal_two_bus():
    case = parse_case(two_bus_case_text())
    assert case.n_buses == 2
    assert len(case.lines) == 1
    assert case.buses[0].kind == "slack"
    assert case.buses[1].p_set == -0.5
    assert case.slack_index == 0


def test_parse_ieee14_bundled():
    case = bundled_case("ieee14")
    assert case.n_buses == 14
    assert len(case.lines) == 20
    assert case.buses[0].kind == "slack"
    assert case.slack_index == 0
    kinds = {b.id: b.kind for b in case.buses}
    assert {bid for bid, k in kinds.items() if k == "pv"} == {2, 3, 6, 8}


def test_ieee14_topology_matches_diagram():
    case = bundled_case("ieee14")
    edges = {(ln.from_bus, ln.to_bus) for ln in case.lines}
    assert edges == IEEE14_EDGES


@pytest.mark.parametrize("mutate,message", [
    (lambda raw: raw["lines"].__setitem__(0, {"from": 1, "to": 2, "r": 0.0, "x": 0.0}),
     "zero reactance"),
    (lambda raw: raw["lines"].__setitem__(0, {"from": 1, "to": 2, "r": 0.0, "x": -0.5}),
     "negative reactance"),
    (lambda raw: raw["buses"].__setitem__(0, {"id": 2, "kind": "slack", "v": 1.0}),
     "duplicate bus id"),
    (lambda raw: raw["buses"][0].update(kind="pq"), "exactly one slack"),
    (lambda raw: raw["buses"][1].update(kind="slack", v=1.0), "exactly one slack"),
    (lambda raw: raw["lines"].__setitem__(0, {"from": 1, "to": 1, "r": 0.0, "x": 0.5}),
     "self-loop"),
    (lambda raw: raw["lines"].__setitem__(0, {"from": 1, "to": 9, "r": 0.0, "x": 0.5}),
     "unknown bus"),
    (lambda raw: raw["buses"][0].pop("v"), "requires a voltage setpoint"),
])
def test_parse_errors(mutate, message):
    raw = json.loads(two_bus_case_text())
    mutate(raw)
    with pytest.raises(CaseError, match=message):
        parse_case(json.dumps(raw))


def test_parse_rejects_disconnected_graph():
    raw = json.loads(two_bus_case_text())
    raw["buses"] += [
        {"id": 3, "kind": "pq", "p": 0.0, "q": 0.0},
        {"id": 4, "kind": "pq", "p": 0.0, "q": 0.0},
    ]
    raw["lines"].append({"from": 3, "to": 4, "r": 0.0, "x": 0.5})
    with pytest.raises(CaseError, match="disconnected"):
        parse_case(json.dumps(raw))


def test_parse_merges_parallel_lines():
    raw = json.loads(two_bus_case_text(r=0.0, x=0.5))
    raw["lines"].append({"from": 2, "to": 1, "r": 0.0, "x": 0.5})
    case = parse_case(json.dumps(raw))
    assert len(case.lines) == 1
    # two x=0.5 reactances in parallel combine to x=0.25
    assert case.lines[0].x == pytest.approx(0.25, abs=1e-15)
    assert case.lines[0].r == pytest.approx(0.0, abs=1e-15)


def test_admittance_single_line_pure_reactance():
    case = parse_case(two_bus_case_text(r=0.0, x=1.0))
    y = build_admittance_ac(case)
    expected = np.array([[-1j, 1j], [1j, -1j]])
    assert np.allclose(y, expected, atol=1e-15)


def test_admittance_single_line_r1_x1():
    case = parse_case(two_bus_case_text(r=1.0, x=1.0))
    y = build_admittance_ac(case)
    assert y[0, 0] == pytest.approx(0.5 - 0.5j, abs=1e-15)
    assert y[0, 1] == pytest.approx(-0.5 + 0.5j, abs=1e-15)


def test_admittance_symmetric_zero_row_sums(ieee14):
    y = build_admittance_ac(ieee14)
    assert np.array_equal(y, y.T)
    assert np.abs(y.sum(axis=1)).max() < 1e-12


def test_ieee14_admittance_pattern(ieee14):
    y = build_admittance_ac(ieee14)
    nz = {(i + 1, j + 1) for i in range(14) for j in range(i + 1, 14)
          if y[i, j] != 0}
    assert nz == IEEE14_EDGES


def test_decompose_pure_reactance():
    y = np.array([[-1j, 1j], [1j, -1j]])
    pair = decompose(y)
    assert np.allclose(pair.yr, 0.0)
    assert np.allclose(pair.yj, [[1, -1], [-1, 1]])


def test_decompose_r1_x1():
    case = parse_case(two_bus_case_text(r=1.0, x=1.0))
    pair = decompose(build_admittance_ac(case))
    expected = np.array([[0.5, -0.5], [-0.5, 0.5]])
    assert np.allclose(pair.yr, expected)
    assert np.allclose(pair.yj, expected)


def test_decompose_rejects_positive_off_diagonal():
    bad = np.array([[1.0 + 1j, 0.5 - 1j], [0.5 - 1j, 1.0 + 1j]])
    with pytest.raises(CaseError, match="positive off-diagonal"):
        decompose(bad)


def _component_count(weights: np.ndarray) -> int:
    """Union-find oracle: connected components of the weighted graph."""
    n = len(weights)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            if weights[i, j] != 0:
                parent[find(i)] = find(j)
    return len({find(i) for i in range(n)})


def test_ieee14_laplacians_psd(ieee14_pair):
    """Eigendecomposition oracle: both matrices PSD; zero-eigenvalue count
    equals the number of connected components of each weighted graph.

    The reactance part is connected, so it has a single zero eigenvalue.
    The resistance part is not: the five lossless (r = 0) branches are the
    only links between the high-voltage region {1..5} and the low-voltage
    region {6, 9..14}, and they also strand buses 7 and 8 entirely, so the
    conductance graph has four components and a 4-dimensional null space.
    """
    w_j = np.linalg.eigvalsh(ieee14_pair.yj)
    scale_j = w_j[-1]
    assert w_j[0] >= -1e-10 * scale_j
    assert _component_count(ieee14_pair.yj) == 1
    assert np.sum(np.abs(w_j) < 1e-9 * scale_j) == 1

    w_r = np.linalg.eigvalsh(ieee14_pair.yr)
    scale_r = w_r[-1]
    assert w_r[0] >= -1e-10 * scale_r
    n_comp = _component_count(ieee14_pair.yr)
    assert n_comp == 4
    assert np.sum(np.abs(w_r) < 1e-9 * scale_r) == n_comp


def test_laplacian_permutation_equivariance(ieee14):
    rng = np.random.default_rng(3)
    perm = rng.permutation(14)
    # permuted case: bus with old id i+1 becomes new id perm[i]+1
    new_id = {i + 1: int(perm[i]) + 1 for i in range(14)}
    buses = sorted(
        (Bus(new_id[b.id], b.kind, b.p_set, b.q_set, b.v_set) for b in ieee14.buses),
        key=lambda b: b.id,
    )
    lines = tuple(Line(new_id[ln.from_bus], new_id[ln.to_bus], ln.r, ln.x)
                  for ln in ieee14.lines)
    permuted = GridCase(tuple(buses), lines, ieee14.base_mva)

    y = build_admittance_ac(ieee14)
    yp = build_admittance_ac(permuted)
    p_mat = np.zeros((14, 14))
    for old in range(14):
        p_mat[perm[old], old] = 1.0
    assert np.allclose(yp, p_mat @ y @ p_mat.T, atol=1e-12)


def test_dc_single_line():
    case = parse_case(two_bus_case_text(r=0.0, x=0.5))
    pair = build_admittance_dc(case)
    assert pair.mode == "dc"
    assert np.allclose(pair.yr, [[2, -2], [-2, 2]])
    assert np.allclose(pair.yj, 0.0)


def test_dc_ignores_resistance():
    a = build_admittance_dc(parse_case(two_bus_case_text(r=0.0, x=1.0)))
    b = build_admittance_dc(parse_case(two_bus_case_text(r=5.0, x=1.0)))
    assert np.array_equal(a.yr, b.yr)


def test_dc_pattern_matches_graph(ieee14):
    """The reactance-only Laplacian covers every line of the diagram.

    (The AC real part is sparser: it has no entry for the five r = 0
    branches, so the right pattern oracle is the full edge list.)
    """
    pair = build_admittance_dc(ieee14)
    nz = {(i + 1, j + 1) for i in range(14) for j in range(i + 1, 14)
          if pair.yr[i, j] != 0}
    assert nz == IEEE14_EDGES


def test_zero_resistance_ac_imag_equals_dc(ieee14):
    """With r = 0 everywhere, -Im(1/(jx)) = 1/x, so AC yj == DC yr."""
    lines = tuple(Line(ln.from_bus, ln.to_bus, 0.0, ln.x) for ln in ieee14.lines)
    lossless = GridCase(ieee14.buses, lines, ieee14.base_mva)
    pair_ac = decompose(build_admittance_ac(lossless))
    pair_dc = build_admittance_dc(lossless)
    assert np.allclose(pair_ac.yj, pair_dc.yr, rtol=1e-12, atol=1e-12)
    assert np.allclose(pair_ac.yr, 0.0)
