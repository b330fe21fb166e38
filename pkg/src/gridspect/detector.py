"""Threshold calibration and the four-term spectral detection rule.

Calibration fits, per (Laplacian, signal-part) pairing, a high-pass
filter cutoff from historic clean states and a detection threshold on the
filtered peak statistic. Detection evaluates the four pairings --
(yr, real), (yj, real), (yj, imag), (yr, imag) -- and flags the state
when any statistic exceeds its threshold. A smoothness variant thresholds
the total variation instead, and a single-term variant covers the
linearized (angle-only) model. Two simple reference detectors (state
norm, consecutive-state residual) are included for comparison runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .grid_model import LaplacianPair
from .power_flow import ComplexState
from .spectral import (
    GhpfDesign,
    SpectralBasis,
    design_poly_filter,
    filter_and_stat,
    gft,
    select_cutoff,
    spectral_basis,
    total_variation,
)

MODEL_FORMAT = "gridspect-model/1"

# (matrix, signal part) pairings evaluated by the four-term rule.
TERMS = (("yr", "real"), ("yj", "real"), ("yj", "imag"), ("yr", "imag"))
REAL_PART_TERMS = ("yr_real", "yj_real")
IMAG_PART_TERMS = ("yj_imag", "yr_imag")


def term_key(matrix: str, part: str) -> str:
    return f"{matrix}_{part}"


def _signal_part(state: ComplexState, part: str) -> np.ndarray:
    return state.v.real if part == "real" else state.v.imag


@dataclass(frozen=True)
class TermCalibration:
    matrix: str
    part: str
    basis: SpectralBasis
    design: GhpfDesign
    mu: float
    sigma: float
    tau: float

    @property
    def key(self) -> str:
        return term_key(self.matrix, self.part)


@dataclass(frozen=True)
class SmoothnessCalibration:
    part: str
    mu: float
    sigma: float
    tau: float


@dataclass(frozen=True)
class DetectorModel:
    """Calibrated cutoffs, responses and thresholds for all terms."""

    terms: dict[str, TermCalibration]
    smoothness: dict[str, SmoothnessCalibration]
    laplacians: LaplacianPair
    alpha_sigma: float
    alpha_sigma_s: float
    n_historic: int
    threshold_rule: str = "averaged"
    min_terms: int = 1

    @property
    def n_buses(self) -> int:
        return next(iter(self.terms.values())).basis.n

    def to_json(self) -> str:
        def dump_term(tc: TermCalibration) -> dict:
            return {
                "matrix": tc.matrix,
                "part": tc.part,
                "eigenvalues": tc.basis.eigenvalues.tolist(),
                "eigenvectors": tc.basis.eigenvectors.tolist(),
                "source": tc.basis.source,
                "cutoff_index": tc.design.cutoff_index,
                "cutoff_lambda": tc.design.cutoff_lambda,
                "response": tc.design.response.tolist(),
                "poly_coeffs": None if tc.design.poly_coeffs is None
                               else tc.design.poly_coeffs.tolist(),
                "poly_scale": tc.design.poly_scale,
                "mu": tc.mu, "sigma": tc.sigma, "tau": tc.tau,
            }

        payload = {
            "format": MODEL_FORMAT,
            "alpha_sigma": self.alpha_sigma,
            "alpha_sigma_s": self.alpha_sigma_s,
            "n_historic": self.n_historic,
            "threshold_rule": self.threshold_rule,
            "min_terms": self.min_terms,
            "mode": self.laplacians.mode,
            "yr": self.laplacians.yr.tolist(),
            "yj": self.laplacians.yj.tolist(),
            "terms": {key: dump_term(tc) for key, tc in self.terms.items()},
            "smoothness": {
                part: {"mu": sc.mu, "sigma": sc.sigma, "tau": sc.tau}
                for part, sc in self.smoothness.items()
            },
        }
        return json.dumps(payload, indent=1)

    @staticmethod
    def from_json(text: str) -> "DetectorModel":
        payload = json.loads(text)
        if payload.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {payload.get('format')!r}")
        terms = {}
        for key, raw in payload["terms"].items():
            basis = SpectralBasis(
                eigenvalues=np.array(raw["eigenvalues"]),
                eigenvectors=np.array(raw["eigenvectors"]),
                source=raw["source"],
            )
            design = GhpfDesign(
                cutoff_index=raw["cutoff_index"],
                cutoff_lambda=raw["cutoff_lambda"],
                response=np.array(raw["response"]),
                poly_coeffs=None if raw["poly_coeffs"] is None else np.array(raw["poly_coeffs"]),
                poly_scale=raw["poly_scale"],
            )
            terms[key] = TermCalibration(
                matrix=raw["matrix"], part=raw["part"], basis=basis, design=design,
                mu=raw["mu"], sigma=raw["sigma"], tau=raw["tau"],
            )
        smoothness = {
            part: SmoothnessCalibration(part=part, **vals)
            for part, vals in payload["smoothness"].items()
        }
        pair = LaplacianPair(
            yr=np.array(payload["yr"]), yj=np.array(payload["yj"]), mode=payload["mode"]
        )
        return DetectorModel(
            terms=terms, smoothness=smoothness, laplacians=pair,
            alpha_sigma=payload["alpha_sigma"], alpha_sigma_s=payload["alpha_sigma_s"],
            n_historic=payload["n_historic"], threshold_rule=payload["threshold_rule"],
            min_terms=payload["min_terms"],
        )


@dataclass(frozen=True)
class DetectionReport:
    """Per-term statistics and thresholds plus the overall verdict."""

    psi: dict[str, float]
    tau: dict[str, float]
    exceed: dict[str, bool]
    smoothness: dict[str, float]
    smoothness_tau: dict[str, float]
    smoothness_exceed: dict[str, bool]
    verdict: str  # "H0" | "H1"
    triggers: tuple[str, ...]

    @property
    def attacked(self) -> bool:
        return self.verdict == "H1"

    def fired_real_part(self) -> bool:
        return any(self.exceed.get(k, False) for k in REAL_PART_TERMS)

    def fired_imag_part(self) -> bool:
        return any(self.exceed.get(k, False) for k in IMAG_PART_TERMS)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "triggers": list(self.triggers),
            "psi": self.psi,
            "tau": self.tau,
            "exceed": self.exceed,
            "smoothness": self.smoothness,
            "smoothness_tau": self.smoothness_tau,
            "smoothness_exceed": self.smoothness_exceed,
        }


# Eigendecompositions are pure functions of the matrix; sharing them across
# repeated calibrations of the same grid matters for sweeps that rebuild
# models per confidence level.
_BASIS_CACHE: dict[tuple[str, bytes], SpectralBasis] = {}


def spectral_basis_cached(laplacian: np.ndarray, source: str) -> SpectralBasis:
    key = (source, np.ascontiguousarray(laplacian).tobytes())
    basis = _BASIS_CACHE.get(key)
    if basis is None:
        basis = spectral_basis(laplacian, source)
        if len(_BASIS_CACHE) > 64:
            _BASIS_CACHE.clear()
        _BASIS_CACHE[key] = basis
    return basis


def _threshold(values: np.ndarray, alpha: float, rule: str) -> tuple[float, float, float]:
    mu = float(np.mean(values))
    sigma = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    if rule == "averaged":
        tau = mu + alpha * sigma
    elif rule == "maximum":
        tau = float(np.max(values))
    else:
        raise ValueError(f"unknown threshold rule {rule!r}")
    return mu, sigma, tau


def calibrate(pair: LaplacianPair, historic: list[ComplexState],
              epsilons: tuple[float, float], alpha_sigma: float,
              alpha_sigma_s: float | None = None, threshold_rule: str = "averaged",
              min_terms: int = 1,
              cutoff_states: list[ComplexState] | None = None) -> DetectorModel:
    """Build a detector from historic states.

    ``epsilons`` is the (real-part, imaginary-part) pair of passband
    energy budgets used for cutoff selection; each term uses the budget
    of its signal part. Thresholds follow the configured rule: mean plus
    ``alpha_sigma`` standard deviations (default) or the historic
    maximum. Requires at least two historic states so the deviation is
    defined.

    ``cutoff_states`` optionally supplies the undisturbed states used for
    cutoff selection when ``historic`` itself is noisy: the passband
    budget describes clean grid states, while thresholds should absorb
    whatever estimation noise the production states carry.
    """
    if len(historic) < 2:
        raise ValueError(f"calibration needs at least 2 historic states, got {len(historic)}")
    if alpha_sigma_s is None:
        alpha_sigma_s = alpha_sigma
    eps_real, eps_imag = epsilons
    bases = {
        "yr": spectral_basis_cached(pair.yr, f"yr-{pair.mode}"),
        "yj": spectral_basis_cached(pair.yj, f"yj-{pair.mode}"),
    }
    parts = {
        "real": np.array([st.v.real for st in historic]),
        "imag": np.array([st.v.imag for st in historic]),
    }
    cutoff_parts = parts if cutoff_states is None else {
        "real": np.array([st.v.real for st in cutoff_states]),
        "imag": np.array([st.v.imag for st in cutoff_states]),
    }

    terms: dict[str, TermCalibration] = {}
    for matrix, part in TERMS:
        basis = bases[matrix]
        eps = eps_real if part == "real" else eps_imag
        cutoff_spectra = [gft(basis, sig) for sig in cutoff_parts[part]]
        design = select_cutoff(basis, cutoff_spectra, eps)
        design = design_poly_filter(basis, design)
        spectra = [gft(basis, sig) for sig in parts[part]]
        psis = np.array([np.max(np.abs(design.response * sp)) for sp in spectra])
        mu, sigma, tau = _threshold(psis, alpha_sigma, threshold_rule)
        terms[term_key(matrix, part)] = TermCalibration(
            matrix=matrix, part=part, basis=basis, design=design,
            mu=mu, sigma=sigma, tau=tau,
        )

    smoothness: dict[str, SmoothnessCalibration] = {}
    for part, lap in (("real", pair.yr), ("imag", pair.yj)):
        s_values = np.array([total_variation(lap, sig)[0] for sig in parts[part]])
        mu, sigma, tau = _threshold(s_values, alpha_sigma_s, threshold_rule)
        smoothness[part] = SmoothnessCalibration(part=part, mu=mu, sigma=sigma, tau=tau)

    return DetectorModel(
        terms=terms, smoothness=smoothness, laplacians=pair,
        alpha_sigma=alpha_sigma, alpha_sigma_s=alpha_sigma_s,
        n_historic=len(historic), threshold_rule=threshold_rule, min_terms=min_terms,
    )


def term_statistics(model: DetectorModel, state: ComplexState) -> dict[str, float]:
    """The four filtered-peak statistics of a state, keyed by term."""
    stats = {}
    for key, tc in model.terms.items():
        signal = _signal_part(state, tc.part)
        _, psi = filter_and_stat(tc.basis, tc.design, signal)
        stats[key] = psi
    return stats


def smoothness_statistics(model: DetectorModel, state: ComplexState) -> dict[str, float]:
    laps = {"real": model.laplacians.yr, "imag": model.laplacians.yj}
    return {
        part: total_variation(laps[part], _signal_part(state, part))[0]
        for part in model.smoothness
    }


def _report(model: DetectorModel, psi: dict[str, float], s_vals: dict[str, float],
            verdict_from: str) -> DetectionReport:
    tau = {key: tc.tau for key, tc in model.terms.items()}
    exceed = {key: psi[key] > tau[key] for key in psi}
    s_tau = {part: sc.tau for part, sc in model.smoothness.items()}
    s_exceed = {part: s_vals[part] > s_tau[part] for part in s_vals}
    if verdict_from == "terms":
        fired = [key for key, hit in exceed.items() if hit]
        attacked = len(fired) >= model.min_terms
        triggers = tuple(fired)
    else:
        fired = [f"smoothness_{part}" for part, hit in s_exceed.items() if hit]
        attacked = len(fired) >= 1
        triggers = tuple(fired)
    return DetectionReport(
        psi=psi, tau=tau, exceed=exceed,
        smoothness=s_vals, smoothness_tau=s_tau, smoothness_exceed=s_exceed,
        verdict="H1" if attacked else "H0", triggers=triggers,
    )


def detect(model: DetectorModel, state: ComplexState) -> DetectionReport:
    """Four-term rule: flag the state when enough statistics exceed thresholds."""
    if state.n_buses != model.n_buses:
        raise ValueError("state and model sizes differ")
    psi = term_statistics(model, state)
    s_vals = smoothness_statistics(model, state)
    return _report(model, psi, s_vals, verdict_from="terms")


def detect_smoothness(model: DetectorModel, state: ComplexState) -> DetectionReport:
    """Total-variation rule: flag when either part's smoothness exceeds its threshold."""
    if state.n_buses != model.n_buses:
        raise ValueError("state and model sizes differ")
    psi = term_statistics(model, state)
    s_vals = smoothness_statistics(model, state)
    return _report(model, psi, s_vals, verdict_from="smoothness")


def calibrate_dc(pair: LaplacianPair, historic_angles: list[np.ndarray],
                 epsilon: float, alpha_sigma: float,
                 threshold_rule: str = "averaged") -> DetectorModel:
    """Single-term calibration on the reactance-only Laplacian and angle signals."""
    if pair.mode != "dc":
        raise ValueError("calibrate_dc needs a dc-mode Laplacian")
    if len(historic_angles) < 2:
        raise ValueError("calibration needs at least 2 historic states")
    basis = spectral_basis_cached(pair.yr, "yr-dc")
    spectra = [gft(basis, np.asarray(a, dtype=float)) for a in historic_angles]
    design = select_cutoff(basis, spectra, epsilon)
    design = design_poly_filter(basis, design)
    psis = np.array([np.max(np.abs(design.response * sp)) for sp in spectra])
    mu, sigma, tau = _threshold(psis, alpha_sigma, threshold_rule)
    term = TermCalibration(matrix="yr", part="angle", basis=basis, design=design,
                           mu=mu, sigma=sigma, tau=tau)
    s_values = np.array([total_variation(pair.yr, a)[0] for a in historic_angles])
    s_mu, s_sigma, s_tau = _threshold(s_values, alpha_sigma, threshold_rule)
    return DetectorModel(
        terms={"dc_angle": term},
        smoothness={"angle": SmoothnessCalibration("angle", s_mu, s_sigma, s_tau)},
        laplacians=pair, alpha_sigma=alpha_sigma, alpha_sigma_s=alpha_sigma,
        n_historic=len(historic_angles), threshold_rule=threshold_rule,
    )


def detect_dc(model: DetectorModel, angles: np.ndarray) -> DetectionReport:
    """Single-term detection on a bus-angle vector (radians)."""
    tc = model.terms["dc_angle"]
    angles = np.asarray(angles, dtype=float)
    _, psi = filter_and_stat(tc.basis, tc.design, angles)
    s_val = total_variation(model.laplacians.yr, angles)[0]
    exceed = psi > tc.tau
    sc = model.smoothness["angle"]
    return DetectionReport(
        psi={"dc_angle": psi}, tau={"dc_angle": tc.tau}, exceed={"dc_angle": exceed},
        smoothness={"angle": s_val}, smoothness_tau={"angle": sc.tau},
        smoothness_exceed={"angle": s_val > sc.tau},
        verdict="H1" if exceed else "H0",
        triggers=("dc_angle",) if exceed else (),
    )


def threshold_for_false_alarm(clean_values: np.ndarray, rate: float) -> float:
    """Smallest threshold whose empirical exceedance on clean data <= rate.

    Used to put the reference detectors on the same false-alarm footing as
    the calibrated detector before comparing detection curves.
    """
    values = np.sort(np.asarray(clean_values, dtype=float))[::-1]
    n = len(values)
    if n == 0:
        raise ValueError("no clean values to calibrate on")
    k = int(np.floor(rate * n))  # allow at most k exceedances
    if k <= 0:
        return float(values[0])
    k = min(k, n - 1)
    return float(values[k])


def baseline_norm(state: ComplexState, threshold: float) -> str:
    """Reference rule: flag when the state's 2-norm exceeds the threshold."""
    return "H1" if float(np.linalg.norm(state.v)) > threshold else "H0"


def baseline_residual(state_t: ComplexState, state_prev: ComplexState,
                      threshold: float) -> str:
    """Reference rule: flag when consecutive states differ by more than the threshold."""
    return "H1" if float(np.linalg.norm(state_t.v - state_prev.v)) > threshold else "H0"
