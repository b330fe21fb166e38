"""Randomized load scenarios, estimation noise, and state attacks.

Models the estimator output as true state + Gaussian error + attack
offset. Load randomization scales each pq bus's setpoints by independent
|Normal(1, sigma^2)| factors; attacks modify voltage magnitude and/or
angle of targeted buses directly on the state vector.

Reproducibility contract: every randomized operation derives its stream
from ``numpy.random.Generator(PCG64(SeedSequence(key)))`` where the key
is the documented tuple below, so results are identical across platforms
and across serial/parallel execution:

* scenario i of a batch: key ``(seed, i)``, drawing an ``(n_pq, 2)``
  normal block (column 0 = active-power factors, column 1 = reactive,
  buses in ascending id order);
* noise: key ``(seed,)``, drawing the real-part vector then the
  imaginary-part vector.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence

from .grid_model import GridCase, build_admittance_ac
from .power_flow import ComplexState, PowerFlowError, SolverOptions, solve_ac

logger = logging.getLogger(__name__)

REDRAW_FACTOR = 10


@dataclass(frozen=True)
class NoiseSpec:
    sigma_e: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma_e < 0:
            raise ValueError("sigma_e must be non-negative")


@dataclass(frozen=True)
class AttackTarget:
    bus: int
    delta_angle_deg: float = 0.0
    delta_magnitude: float = 0.0


ATTACK_CONSTRUCTIONS = ("polar", "linearized")


@dataclass(frozen=True)
class AttackSpec:
    """Set of (bus, angle offset, magnitude offset) modifications.

    Two offset constructions are supported. ``polar`` (default) modifies
    the polar coordinates exactly: V += delta_magnitude, phi +=
    delta_angle. ``linearized`` builds the additive offset in the
    linearized state model (real coordinate carries the magnitude, the
    imaginary coordinate carries V times the angle): c = delta_magnitude
    + j V sin(delta_angle). The two agree to first order at small
    operating angles; at realistic angles the polar rotation leaks part
    of an angle attack into the real component, which the linearized
    construction does not.

    An empty target list is a no-op. Targets must exist in the state and
    must not include the slack bus.
    """

    targets: tuple[AttackTarget, ...] = ()
    construction: str = "polar"

    def __post_init__(self):
        if self.construction not in ATTACK_CONSTRUCTIONS:
            raise ValueError(f"construction must be one of {ATTACK_CONSTRUCTIONS}")

    @staticmethod
    def single(bus: int, delta_angle_deg: float = 0.0, delta_magnitude: float = 0.0,
               construction: str = "polar") -> "AttackSpec":
        return AttackSpec((AttackTarget(bus, delta_angle_deg, delta_magnitude),),
                          construction)


@dataclass(frozen=True)
class LoadScenarioSpec:
    sigma: float
    count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.count < 1:
            raise ValueError("count must be at least 1")


def _scenario_rng(seed: int, index: int) -> Generator:
    return Generator(PCG64(SeedSequence((seed, index))))


def _scale_one(case: GridCase, spec: LoadScenarioSpec, index: int) -> GridCase:
    pq_buses = [b for b in case.buses if b.kind == "pq"]
    rng = _scenario_rng(spec.seed, index)
    factors = np.abs(rng.normal(1.0, spec.sigma, size=(len(pq_buses), 2)))
    p = {b.id: b.p_set * factors[k, 0] for k, b in enumerate(pq_buses)}
    q = {b.id: b.q_set * factors[k, 1] for k, b in enumerate(pq_buses)}
    return case.replace_injections(p, q)


def random_scenarios(case: GridCase, spec: LoadScenarioSpec) -> list[GridCase]:
    """Draw ``spec.count`` load-randomized copies of the case.

    Only pq-bus setpoints are scaled; slack and pv buses are untouched.
    """
    return [_scale_one(case, spec, i) for i in range(spec.count)]


def make_historic(case: GridCase, spec: LoadScenarioSpec,
                  opts: SolverOptions = SolverOptions(),
                  y: np.ndarray | None = None) -> list[ComplexState]:
    """Solve a batch of random scenarios into clean states.

    Non-convergent scenarios are dropped and further ones drawn, up to
    ``REDRAW_FACTOR * count`` attempts in total. ``y`` may carry the
    precomputed admittance matrix of the case topology.
    """
    if y is None:
        y = build_admittance_ac(case)
    states: list[ComplexState] = []
    attempts = 0
    index = 0
    cap = REDRAW_FACTOR * spec.count
    while len(states) < spec.count:
        if attempts >= cap:
            raise PowerFlowError(
                f"only {len(states)} of {spec.count} scenarios converged "
                f"within {cap} attempts"
            )
        scenario = _scale_one(case, spec, index)
        index += 1
        attempts += 1
        try:
            states.append(solve_ac(scenario, opts, y=y))
        except PowerFlowError:
            logger.debug("scenario %d dropped (no convergence)", index - 1)
    return states


def apply_noise(state: ComplexState, spec: NoiseSpec) -> ComplexState:
    """Add zero-mean Gaussian estimation error to both Cartesian parts."""
    if spec.sigma_e == 0:
        return state.replace(state.v.copy(), "noisy")
    rng = Generator(PCG64(SeedSequence((spec.seed,))))
    m = state.n_buses
    noise = rng.normal(0.0, spec.sigma_e, m) + 1j * rng.normal(0.0, spec.sigma_e, m)
    return state.replace(state.v + noise, "noisy")


def apply_attack(state: ComplexState, spec: AttackSpec) -> ComplexState:
    """Shift magnitude and angle of the targeted buses.

    Non-targeted entries are returned bit-identical. Raises ValueError if
    a target does not exist or is the reference bus. The implied additive
    offset (attacked minus original) is logged at DEBUG level.
    """
    v = state.v.copy()
    for target in spec.targets:
        idx = target.bus - 1
        if not 0 <= idx < state.n_buses:
            raise ValueError(f"attack target bus {target.bus} does not exist")
        if state.slack is not None and idx == state.slack:
            raise ValueError(f"attack target bus {target.bus} is the slack bus")
        if spec.construction == "polar":
            mag = np.abs(v[idx]) + target.delta_magnitude
            ang = np.angle(v[idx]) + np.radians(target.delta_angle_deg)
            v[idx] = mag * np.exp(1j * ang)
        else:
            mag = np.abs(v[idx])
            v[idx] = v[idx] + target.delta_magnitude \
                + 1j * mag * np.sin(np.radians(target.delta_angle_deg))
    if logger.isEnabledFor(logging.DEBUG):
        offset = v - state.v
        logger.debug("attack offset c: max |c| = %.3e over %d buses",
                     np.max(np.abs(offset)) if len(offset) else 0.0,
                     len(spec.targets))
    return state.replace(v, "attacked")
