"""AC and DC power flow solvers.

The AC solver is a conventional Newton-Raphson in polar coordinates with
an analytic Jacobian assembled from the complex power-injection
derivatives. It produces the "true" grid states that calibration, attack
simulation and the experiment harness consume. The DC solver handles the
linearized reactance-only model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_model import GridCase, LaplacianPair, build_admittance_ac, build_admittance_dc


class PowerFlowError(RuntimeError):
    """Solver failure: non-convergence or a degenerate operating point."""


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 20
    flat_start: bool = True

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class ComplexState:
    """Bus voltage vector with provenance clean | noisy | attacked.

    ``slack`` is the 0-based index of the reference bus, carried along so
    attack injection can refuse to touch it. Instances are immutable;
    treat the array as read-only.
    """

    v: np.ndarray
    provenance: str = "clean"
    slack: int | None = None
    iterations: int = 0

    @property
    def n_buses(self) -> int:
        return len(self.v)

    def magnitudes(self) -> np.ndarray:
        return np.abs(self.v)

    def angles(self) -> np.ndarray:
        """Bus voltage angles in radians."""
        return np.angle(self.v)

    def replace(self, v: np.ndarray, provenance: str) -> "ComplexState":
        return ComplexState(v, provenance, self.slack, self.iterations)


def injections_from_state(case: GridCase, state: ComplexState,
                          y: np.ndarray | None = None) -> np.ndarray:
    """Complex bus injections s = diag(v) (Y v)* for the given state."""
    if y is None:
        y = build_admittance_ac(case)
    v = state.v
    if len(v) != case.n_buses:
        raise ValueError(f"state has {len(v)} entries for a {case.n_buses}-bus case")
    return v * np.conj(y @ v)


def _setpoints(case: GridCase) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = np.array([b.p_set for b in case.buses])
    q = np.array([b.q_set for b in case.buses])
    vm = np.array([b.v_set if b.v_set is not None else 1.0 for b in case.buses])
    return p, q, vm


def solve_ac(case: GridCase, opts: SolverOptions = SolverOptions(),
             y: np.ndarray | None = None) -> ComplexState:
    """Newton-Raphson AC power flow.

    Unknowns are the angles at all non-slack buses and the magnitudes at
    pq buses; pv and slack magnitudes stay pinned to their setpoints and
    the slack angle is 0. Convergence means the power mismatch infinity
    norm drops below ``opts.tol`` (active part at pv and pq buses,
    reactive part at pq buses).

    ``y`` may carry a precomputed admittance matrix to skip rebuilding it
    across many solves of the same topology.
    """
    if y is None:
        y = build_admittance_ac(case)
    m = case.n_buses
    kinds = [b.kind for b in case.buses]
    slack = case.slack_index
    pv = np.array([i for i, k in enumerate(kinds) if k == "pv"], dtype=int)
    pq = np.array([i for i, k in enumerate(kinds) if k == "pq"], dtype=int)
    pvpq = np.sort(np.concatenate([pv, pq]))

    p_set, q_set, vm_set = _setpoints(case)
    s_set = p_set + 1j * q_set

    vm = np.ones(m)
    vm[slack] = vm_set[slack]
    vm[pv] = vm_set[pv]
    if not opts.flat_start:
        vm[pq] = vm_set[pq]
    va = np.zeros(m)

    n_pvpq, n_pq = len(pvpq), len(pq)

    def mismatch(v: np.ndarray) -> np.ndarray:
        s_calc = v * np.conj(y @ v)
        ds = s_calc - s_set
        return np.concatenate([ds.real[pvpq], ds.imag[pq]])

    v = vm * np.exp(1j * va)
    f = mismatch(v)
    iterations = 0
    while np.max(np.abs(f)) >= opts.tol:
        if iterations >= opts.max_iter:
            raise PowerFlowError(
                f"no convergence after {opts.max_iter} iterations; "
                f"residual {np.max(np.abs(f)):.3e} (tol {opts.tol:.1e})"
            )
        ibus = y @ v
        diag_v = np.diag(v)
        diag_i = np.diag(ibus)
        diag_e = np.diag(v / np.abs(v))
        # Complex power derivatives w.r.t. angle and magnitude.
        ds_dva = 1j * diag_v @ np.conj(diag_i - y @ diag_v)
        ds_dvm = diag_v @ np.conj(y @ diag_e) + np.conj(diag_i) @ diag_e
        jac = np.empty((n_pvpq + n_pq, n_pvpq + n_pq))
        jac[:n_pvpq, :n_pvpq] = ds_dva.real[np.ix_(pvpq, pvpq)]
        jac[:n_pvpq, n_pvpq:] = ds_dvm.real[np.ix_(pvpq, pq)]
        jac[n_pvpq:, :n_pvpq] = ds_dva.imag[np.ix_(pq, pvpq)]
        jac[n_pvpq:, n_pvpq:] = ds_dvm.imag[np.ix_(pq, pq)]
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError(f"singular Jacobian at iteration {iterations}") from exc
        va[pvpq] += dx[:n_pvpq]
        vm[pq] += dx[n_pvpq:]
        if np.any(vm[pq] <= 0):
            raise PowerFlowError("voltage magnitude collapsed below zero")
        v = vm * np.exp(1j * va)
        f = mismatch(v)
        iterations += 1

    return ComplexState(v=v, provenance="clean", slack=slack, iterations=iterations)


def state_to_dict(state: ComplexState) -> dict:
    """JSON-friendly view of a state: per-bus magnitude (p.u.) and angle (degrees)."""
    return {
        "provenance": state.provenance,
        "slack": None if state.slack is None else state.slack + 1,
        "buses": [
            {"id": i + 1, "v_mag": float(np.abs(v)), "angle_deg": float(np.degrees(np.angle(v)))}
            for i, v in enumerate(state.v)
        ],
    }


def state_from_dict(payload: dict) -> ComplexState:
    buses = sorted(payload["buses"], key=lambda b: b["id"])
    ids = [b["id"] for b in buses]
    if ids != list(range(1, len(ids) + 1)):
        raise ValueError(f"state bus ids must be contiguous 1..M, got {ids}")
    v = np.array([b["v_mag"] * np.exp(1j * np.radians(b["angle_deg"])) for b in buses])
    slack = payload.get("slack")
    return ComplexState(
        v=v,
        provenance=payload.get("provenance", "clean"),
        slack=None if slack is None else slack - 1,
    )


def solve_dc(case: GridCase, pair: LaplacianPair | None = None) -> np.ndarray:
    """Linearized power flow: solve p = L phi with the slack angle pinned to 0.

    Returns the bus angle vector in radians. The reduced (M-1) system is
    solved with the slack row and column removed.
    """
    if pair is None:
        pair = build_admittance_dc(case)
    elif pair.mode != "dc":
        raise ValueError("solve_dc needs a dc-mode Laplacian")
    m = case.n_buses
    slack = case.slack_index
    keep = np.array([i for i in range(m) if i != slack], dtype=int)
    p = np.array([b.p_set for b in case.buses])
    reduced = pair.yr[np.ix_(keep, keep)]
    try:
        phi_reduced = np.linalg.solve(reduced, p[keep])
    except np.linalg.LinAlgError as exc:
        raise PowerFlowError("reduced susceptance matrix is singular") from exc
    phi = np.zeros(m)
    phi[keep] = phi_reduced
    return phi
