"""Monte Carlo experiment harness.

Reproduces the study's test cases on a grid case file: smoothness of
undisturbed states (tc1), detection-probability sweeps over angle and
magnitude attacks (tc2), the same sweeps under estimation noise (tc3), a
multi-bus combined attack with spectra dumps (tc4), and a comparison
against two simple reference detectors at matched false-alarm rate
(compare).

Reproducibility: every random draw derives its stream from the config
seed and a fixed role tag via ``derive_seed``, so identical configs
produce byte-identical output files regardless of execution order or
parallelism.

Detection-probability curves are "exceedance" curves: the value plotted
at offset delta pools every trial whose attack offset magnitude is at
least delta; the point at delta = 0 pools exactly the attack-free trials
and is therefore the empirical false-alarm rate.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from numpy.random import SeedSequence

from .detector import (
    DetectorModel,
    calibrate,
    detect,
    smoothness_statistics,
    term_statistics,
    threshold_for_false_alarm,
)
from .grid_model import GridCase, build_admittance_ac, bundled_case, decompose, load_case
from .power_flow import ComplexState, SolverOptions, solve_ac
from .spectral import total_variation
from .state_attack import (
    AttackSpec,
    AttackTarget,
    LoadScenarioSpec,
    NoiseSpec,
    apply_attack,
    apply_noise,
    make_historic,
)

# Stream role tags (first element after the seed in every stream key).
_TAG_HISTORIC = 0
_TAG_SWEEP = 1
_TAG_NOISE = 2
_TAG_ANCHOR = 3
_TAG_ANCHOR_PREV = 4
_TAG_SWEEP_PREV = 5
_TAG_TC4 = 6
_KIND_IDS = {"angle": 0, "magnitude": 1}

DEFAULT_TC4_TARGETS = (
    (6, 3.0, 0.03), (9, -3.0, 0.03), (10, 3.0, 0.03), (11, -3.0, 0.03),
    (12, 3.0, 0.03), (13, -3.0, 0.03), (14, 3.0, 0.03),
)


def derive_seed(*parts: int) -> int:
    """Deterministic 64-bit child seed from an integer key tuple."""
    return int(SeedSequence(tuple(int(p) for p in parts)).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    case: str = "ieee14"
    tc1_cases: tuple[str, ...] = ()
    load_sigma: float = 0.03
    n_historic: int = 100
    trials: int = 100
    angle_grid_deg: tuple[float, ...] = tuple(float(d) for d in range(-12, 13))
    magnitude_grid: tuple[float, ...] = tuple(round(-0.2 + 0.02 * i, 2) for i in range(21))
    noise_sigmas: tuple[float, ...] = (0.001, 0.005, 0.01)
    alpha_sigmas: tuple[float, ...] = (0.5, 1.0, 2.0)
    eps_real: float = 1e-4
    eps_imag: float = 1e-3
    detect_alpha: float = 2.0
    attack_construction: str = "linearized"
    tc4_targets: tuple[tuple[int, float, float], ...] = DEFAULT_TC4_TARGETS
    anchor_trials: int = 500
    seed: int = 1
    solver_tol: float = 1e-8
    solver_max_iter: int = 20

    def solver_options(self) -> SolverOptions:
        return SolverOptions(tol=self.solver_tol, max_iter=self.solver_max_iter)

    def load_grid(self) -> GridCase:
        return _resolve_case(self.case)

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        raw = json.loads(text)
        known = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("tc1_cases", "angle_grid_deg", "magnitude_grid",
                    "noise_sigmas", "alpha_sigmas"):
            if key in raw:
                raw[key] = tuple(raw[key])
        if "tc4_targets" in raw:
            raw["tc4_targets"] = tuple((int(b), float(a), float(m))
                                       for b, a, m in raw["tc4_targets"])
        return ExperimentConfig(**raw)

    @staticmethod
    def from_file(path: str) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return ExperimentConfig.from_json(fh.read())


def _resolve_case(name_or_path: str) -> GridCase:
    if os.path.exists(name_or_path):
        return load_case(name_or_path)
    return bundled_case(name_or_path)


@dataclass(frozen=True)
class CurvePoint:
    delta: float
    probability: float
    trials: int


def _exceed_curve(deltas: np.ndarray, hits: np.ndarray, totals: np.ndarray) -> list[CurvePoint]:
    """Pool (bus, delta) cells into the exceedance curve over |delta|."""
    abs_deltas = np.abs(deltas)
    points = []
    for level in sorted(set(np.round(abs_deltas, 12))):
        if level == 0:
            mask = abs_deltas == 0
        else:
            mask = abs_deltas >= level - 1e-12
        n = int(totals[:, mask].sum())
        h = int(hits[:, mask].sum())
        points.append(CurvePoint(float(level), h / n if n else 0.0, n))
    return points


@dataclass
class SweepResult:
    kind: str
    deltas: np.ndarray
    buses: np.ndarray
    noise_sigmas: tuple[float, ...]
    alpha_sigmas: tuple[float, ...]
    trials: int
    # hits[noise_idx][alpha_idx] is a (n_bus, n_delta) detection-count array
    hits_gft: dict[int, dict[int, np.ndarray]]
    hits_smooth: dict[int, dict[int, np.ndarray]]
    attribution: dict[int, dict[int, dict[str, int]]]
    models: dict[int, dict[int, DetectorModel]]

    def curve(self, noise_idx: int = 0, alpha: float | None = None,
              detector: str = "gft") -> list[CurvePoint]:
        alphas = list(self.alpha_sigmas)
        a_i = alphas.index(alpha if alpha is not None else alphas[-1])
        hits = (self.hits_gft if detector == "gft" else self.hits_smooth)[noise_idx][a_i]
        totals = np.full(hits.shape, self.trials)
        return _exceed_curve(self.deltas, hits, totals)

    def per_bus_detection(self, noise_idx: int = 0, alpha: float | None = None) -> np.ndarray:
        alphas = list(self.alpha_sigmas)
        a_i = alphas.index(alpha if alpha is not None else alphas[-1])
        return self.hits_gft[noise_idx][a_i] / self.trials

    def attribution_fractions(self, noise_idx: int = 0,
                              alpha: float | None = None) -> dict[str, float]:
        alphas = list(self.alpha_sigmas)
        a_i = alphas.index(alpha if alpha is not None else alphas[-1])
        counts = self.attribution[noise_idx][a_i]
        detected = sum(counts.values())
        return {
            "detected": detected,
            **{key: (counts[key] / detected if detected else 0.0)
               for key in ("both", "real_only", "imag_only")},
        }


def _calibration_states(case, cfg, opts, y) -> list[ComplexState]:
    spec = LoadScenarioSpec(cfg.load_sigma, cfg.n_historic,
                            derive_seed(cfg.seed, _TAG_HISTORIC))
    return make_historic(case, spec, opts, y=y)


def _noisy(states: list[ComplexState], sigma_e: float, *key: int) -> list[ComplexState]:
    if sigma_e == 0:
        return states
    return [apply_noise(st, NoiseSpec(sigma_e, derive_seed(*key, i)))
            for i, st in enumerate(states)]


def _single_state(case, cfg, opts, y, *key: int) -> ComplexState:
    spec = LoadScenarioSpec(cfg.load_sigma, 1, derive_seed(cfg.seed, *key))
    return make_historic(case, spec, opts, y=y)[0]


def run_attack_sweep(cfg: ExperimentConfig, kind: str,
                     noise_sigmas: tuple[float, ...] = (0.0,)) -> SweepResult:
    """Detection sweep over one attack kind, optionally under noise.

    For every non-slack bus, grid offset and trial a fresh random-load
    state is solved; per noise level the state receives estimation noise,
    the attack is injected (offsets of zero mean no attack), and every
    calibrated model votes. Scenario streams do not depend on the noise
    level, so the zero-noise slice reproduces the noiseless sweep
    exactly.

    Calibration per noise level: cutoffs always come from the clean
    historic states (the passband budget describes undisturbed grid
    states); thresholds are fitted on historic states carrying the same
    noise level as the test states, so the estimation error is absorbed
    into tau rather than counted as attack evidence.
    """
    if kind not in _KIND_IDS:
        raise ValueError(f"unknown sweep kind {kind!r}")
    kind_id = _KIND_IDS[kind]
    case = cfg.load_grid()
    opts = cfg.solver_options()
    y = build_admittance_ac(case)
    pair = decompose(y)
    deltas = np.array(cfg.angle_grid_deg if kind == "angle" else cfg.magnitude_grid)
    buses = np.array([b.id for b in case.buses if b.kind != "slack"], dtype=int)

    clean_historic = _calibration_states(case, cfg, opts, y)
    models: dict[int, dict[int, DetectorModel]] = {}
    for s_i, sigma_e in enumerate(noise_sigmas):
        historic = _noisy(clean_historic, sigma_e, cfg.seed, _TAG_NOISE, _TAG_HISTORIC, s_i)
        models[s_i] = {
            a_i: calibrate(pair, historic, (cfg.eps_real, cfg.eps_imag),
                           alpha_sigma=alpha, cutoff_states=clean_historic)
            for a_i, alpha in enumerate(cfg.alpha_sigmas)
        }

    n_bus, n_delta = len(buses), len(deltas)
    hits_gft = {s: {a: np.zeros((n_bus, n_delta), dtype=int)
                    for a in range(len(cfg.alpha_sigmas))} for s in range(len(noise_sigmas))}
    hits_smooth = {s: {a: np.zeros((n_bus, n_delta), dtype=int)
                       for a in range(len(cfg.alpha_sigmas))} for s in range(len(noise_sigmas))}
    attribution = {s: {a: {"both": 0, "real_only": 0, "imag_only": 0}
                       for a in range(len(cfg.alpha_sigmas))} for s in range(len(noise_sigmas))}

    for b_i, bus in enumerate(buses):
        for d_i, delta in enumerate(deltas):
            if kind == "angle":
                attack = AttackSpec.single(int(bus), delta_angle_deg=float(delta),
                                           construction=cfg.attack_construction)
            else:
                attack = AttackSpec.single(int(bus), delta_magnitude=float(delta),
                                           construction=cfg.attack_construction)
            for trial in range(cfg.trials):
                state = _single_state(case, cfg, opts, y,
                                      _TAG_SWEEP, kind_id, int(bus), d_i, trial)
                for s_i, sigma_e in enumerate(noise_sigmas):
                    observed = state if sigma_e == 0 else apply_noise(
                        state, NoiseSpec(sigma_e, derive_seed(
                            cfg.seed, _TAG_NOISE, s_i, kind_id, int(bus), d_i, trial)))
                    if delta != 0:
                        observed = apply_attack(observed, attack)
                    ref_model = models[s_i][0]
                    psi = term_statistics(ref_model, observed)
                    s_vals = smoothness_statistics(ref_model, observed)
                    for a_i in range(len(cfg.alpha_sigmas)):
                        model = models[s_i][a_i]
                        exceed = {k: psi[k] > tc.tau for k, tc in model.terms.items()}
                        if any(exceed.values()):
                            hits_gft[s_i][a_i][b_i, d_i] += 1
                            if delta != 0:
                                real = exceed["yr_real"] or exceed["yj_real"]
                                imag = exceed["yj_imag"] or exceed["yr_imag"]
                                key = ("both" if real and imag
                                       else "real_only" if real else "imag_only")
                                attribution[s_i][a_i][key] += 1
                        if any(s_vals[p] > sc.tau for p, sc in model.smoothness.items()):
                            hits_smooth[s_i][a_i][b_i, d_i] += 1

    return SweepResult(
        kind=kind, deltas=deltas, buses=buses, noise_sigmas=tuple(noise_sigmas),
        alpha_sigmas=cfg.alpha_sigmas, trials=cfg.trials,
        hits_gft=hits_gft, hits_smooth=hits_smooth,
        attribution=attribution, models=models,
    )


def _write(path: str, text: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _curves_csv(result: SweepResult, include_sigma: bool = False) -> str:
    header = "detector,alpha_sigma,"
    header += "sigma_e," if include_sigma else ""
    header += "delta,detection_probability,trials"
    rows = [header]
    for s_i, sigma_e in enumerate(result.noise_sigmas):
        for detector in ("gft", "smoothness"):
            for alpha in result.alpha_sigmas:
                for pt in result.curve(s_i, alpha, detector):
                    row = [detector, _fmt(alpha)]
                    if include_sigma:
                        row.append(_fmt(sigma_e))
                    row += [_fmt(pt.delta), _fmt(pt.probability), str(pt.trials)]
                    rows.append(",".join(row))
    return "\n".join(rows) + "\n"


# -- Test case 1: smoothness of undisturbed states ---------------------------

def run_tc1(cfg: ExperimentConfig, out_dir: str | None = None) -> list[dict]:
    """Normalized total variation of the nominal solved state per case."""
    names = [cfg.case, *cfg.tc1_cases]
    rows = []
    for name in names:
        case = _resolve_case(name)
        pair = decompose(build_admittance_ac(case))
        state = solve_ac(case, cfg.solver_options())
        m = case.n_buses
        s_real, _ = total_variation(pair.yr, state.v.real)
        s_imag, _ = total_variation(pair.yj, state.v.imag)
        rows.append({
            "case": os.path.splitext(os.path.basename(name))[0],
            "s_real_per_bus": s_real / m,
            "s_imag_per_bus": s_imag / m,
        })
    if out_dir is not None:
        lines = ["case,s_real_per_bus,s_imag_per_bus"]
        lines += [f"{r['case']},{_fmt(r['s_real_per_bus'])},{_fmt(r['s_imag_per_bus'])}"
                  for r in rows]
        _write(os.path.join(out_dir, "tc1_smoothness.csv"), "\n".join(lines) + "\n")
    return rows


# -- Test case 2: angle and magnitude attack sweeps --------------------------

def run_tc2(cfg: ExperimentConfig, out_dir: str | None = None) -> dict[str, SweepResult]:
    results = {kind: run_attack_sweep(cfg, kind) for kind in ("angle", "magnitude")}
    if out_dir is not None:
        for kind, result in results.items():
            _write(os.path.join(out_dir, f"tc2_{kind}_curves.csv"), _curves_csv(result))
        attribution = {
            kind: results[kind].attribution_fractions(alpha=cfg.detect_alpha)
            for kind in results
        }
        attribution["alpha_sigma"] = cfg.detect_alpha
        _write(os.path.join(out_dir, "tc2_attribution.json"),
               json.dumps(attribution, indent=1, sort_keys=True) + "\n")
    return results


# -- Test case 3: sweeps under estimation noise -------------------------------

def run_tc3(cfg: ExperimentConfig, out_dir: str | None = None) -> dict[str, SweepResult]:
    """Attack sweeps with estimation noise; sigma_e = 0 is included as reference."""
    sigmas = (0.0, *cfg.noise_sigmas)
    results = {kind: run_attack_sweep(cfg, kind, noise_sigmas=sigmas)
               for kind in ("angle", "magnitude")}
    if out_dir is not None:
        for kind, result in results.items():
            _write(os.path.join(out_dir, f"tc3_{kind}_curves.csv"),
                   _curves_csv(result, include_sigma=True))
    return results


# -- Test case 4: combined multi-bus attack -----------------------------------

def run_tc4(cfg: ExperimentConfig, out_dir: str | None = None) -> dict:
    """Joint angle+magnitude attack on several buses, with spectra dump."""
    case = cfg.load_grid()
    opts = cfg.solver_options()
    y = build_admittance_ac(case)
    pair = decompose(y)
    historic = _calibration_states(case, cfg, opts, y)
    model = calibrate(pair, historic, (cfg.eps_real, cfg.eps_imag),
                      alpha_sigma=cfg.detect_alpha)

    state = _single_state(case, cfg, opts, y, _TAG_TC4)
    targets = tuple(AttackTarget(b, a, m) for b, a, m in cfg.tc4_targets)
    attacked = apply_attack(state, AttackSpec(targets))

    report = detect(model, attacked)
    control = detect(model, state)

    tc = model.terms["yj_imag"]
    freqs = tc.basis.normalized_frequencies()
    clean_spec = tc.design.response * (tc.basis.eigenvectors.T @ state.v.imag)
    att_spec = tc.design.response * (tc.basis.eigenvectors.T @ attacked.v.imag)
    spectra = {
        "term": "yj_imag",
        "tau": tc.tau,
        "points": [
            {"frequency": float(freqs[i]),
             "clean": float(abs(clean_spec[i])),
             "attacked": float(abs(att_spec[i]))}
            for i in range(len(freqs))
        ],
    }
    out = {
        "verdict": report.verdict,
        "triggers": list(report.triggers),
        "report": report.to_dict(),
        "control_verdict": control.verdict,
        "targets": [list(t) for t in cfg.tc4_targets],
        "alpha_sigma": cfg.detect_alpha,
    }
    if out_dir is not None:
        _write(os.path.join(out_dir, "tc4_report.json"),
               json.dumps(out, indent=1, sort_keys=True) + "\n")
        _write(os.path.join(out_dir, "tc4_spectra.json"),
               json.dumps(spectra, indent=1, sort_keys=True) + "\n")
    out["spectra"] = spectra
    return out


# -- Comparison against reference detectors -----------------------------------

def run_compare(cfg: ExperimentConfig, out_dir: str | None = None) -> dict:
    """Spectral detector vs norm and residual rules on the angle sweep.

    All three run at matched empirical false-alarm rate: the spectral
    detector's rate is measured on a pool of fresh clean states and the
    reference thresholds are set to exceed on exactly that fraction of
    the same pool.
    """
    case = cfg.load_grid()
    opts = cfg.solver_options()
    y = build_admittance_ac(case)
    pair = decompose(y)
    historic = _calibration_states(case, cfg, opts, y)
    model = calibrate(pair, historic, (cfg.eps_real, cfg.eps_imag),
                      alpha_sigma=cfg.detect_alpha)

    anchors = [_single_state(case, cfg, opts, y, _TAG_ANCHOR, i)
               for i in range(cfg.anchor_trials)]
    prev_anchors = [_single_state(case, cfg, opts, y, _TAG_ANCHOR_PREV, i)
                    for i in range(cfg.anchor_trials)]
    gsp_fa = float(np.mean([detect(model, st).attacked for st in anchors]))
    norms = np.array([np.linalg.norm(st.v) for st in anchors])
    residuals = np.array([np.linalg.norm(st.v - pv.v)
                          for st, pv in zip(anchors, prev_anchors)])
    norm_thr = threshold_for_false_alarm(norms, gsp_fa)
    resid_thr = threshold_for_false_alarm(residuals, gsp_fa)

    deltas = np.array(cfg.angle_grid_deg)
    buses = np.array([b.id for b in case.buses if b.kind != "slack"], dtype=int)
    kind_id = _KIND_IDS["angle"]
    hits = {m: np.zeros((len(buses), len(deltas)), dtype=int)
            for m in ("gsp", "norm", "residual")}
    for b_i, bus in enumerate(buses):
        for d_i, delta in enumerate(deltas):
            attack = AttackSpec.single(int(bus), delta_angle_deg=float(delta),
                                       construction=cfg.attack_construction)
            for trial in range(cfg.trials):
                state = _single_state(case, cfg, opts, y,
                                      _TAG_SWEEP, kind_id, int(bus), d_i, trial)
                prev = _single_state(case, cfg, opts, y,
                                     _TAG_SWEEP_PREV, kind_id, int(bus), d_i, trial)
                observed = apply_attack(state, attack) if delta != 0 else state
                if detect(model, observed).attacked:
                    hits["gsp"][b_i, d_i] += 1
                if float(np.linalg.norm(observed.v)) > norm_thr:
                    hits["norm"][b_i, d_i] += 1
                if float(np.linalg.norm(observed.v - prev.v)) > resid_thr:
                    hits["residual"][b_i, d_i] += 1

    totals = np.full(hits["gsp"].shape, cfg.trials)
    curves = {m: _exceed_curve(deltas, h, totals) for m, h in hits.items()}
    summary = {
        "alpha_sigma": cfg.detect_alpha,
        "gsp_false_alarm": gsp_fa,
        "norm_threshold": norm_thr,
        "residual_threshold": resid_thr,
        "anchor_trials": cfg.anchor_trials,
    }
    if out_dir is not None:
        rows = ["method,delta,detection_probability,trials"]
        for method in ("gsp", "norm", "residual"):
            rows += [f"{method},{_fmt(pt.delta)},{_fmt(pt.probability)},{pt.trials}"
                     for pt in curves[method]]
        _write(os.path.join(out_dir, "compare_curves.csv"), "\n".join(rows) + "\n")
        _write(os.path.join(out_dir, "compare_summary.json"),
               json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return {"curves": curves, **summary}
