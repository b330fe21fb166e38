"""Command-line front end.

Exit codes: 0 = success (and H0 for ``detect``), 2 = attack detected
(``detect`` only), 1 = any error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .detector import DetectorModel, calibrate, detect
from .experiments import (
    ExperimentConfig,
    run_compare,
    run_tc1,
    run_tc2,
    run_tc3,
    run_tc4,
    derive_seed,
)
from .grid_model import CaseError, build_admittance_ac, decompose, load_case
from .power_flow import (
    PowerFlowError,
    solve_ac,
    solve_dc,
    state_from_dict,
    state_to_dict,
)
from .state_attack import LoadScenarioSpec, make_historic

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ATTACK = 2


def _load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return ExperimentConfig.from_file(path)


def _cmd_case_validate(args) -> int:
    case = load_case(args.file)
    print(json.dumps({
        "ok": True,
        "buses": case.n_buses,
        "lines": len(case.lines),
        "slack_bus": case.slack_index + 1,
    }))
    return EXIT_OK


def _cmd_powerflow(args) -> int:
    case = load_case(args.file)
    if args.dc:
        angles = solve_dc(case)
        payload = {
            "model": "dc",
            "buses": [{"id": i + 1, "angle_deg": float(np.degrees(a))}
                      for i, a in enumerate(angles)],
        }
    else:
        from .power_flow import SolverOptions
        state = solve_ac(case, SolverOptions(tol=args.tol, max_iter=args.max_iter))
        payload = {"model": "ac", "iterations": state.iterations, **state_to_dict(state)}
    print(json.dumps(payload, indent=1))
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    cfg = _load_config(args.config)
    case = load_case(args.file) if args.file else cfg.load_grid()
    y = build_admittance_ac(case)
    pair = decompose(y)
    historic = make_historic(
        case,
        LoadScenarioSpec(cfg.load_sigma, cfg.n_historic, derive_seed(cfg.seed, 0)),
        cfg.solver_options(), y=y,
    )
    model = calibrate(pair, historic, (cfg.eps_real, cfg.eps_imag),
                      alpha_sigma=cfg.detect_alpha)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(model.to_json())
    print(f"model written to {args.output} "
          f"(N={cfg.n_historic}, alpha_sigma={cfg.detect_alpha})")
    return EXIT_OK


def _cmd_detect(args) -> int:
    with open(args.model, encoding="utf-8") as fh:
        model = DetectorModel.from_json(fh.read())
    with open(args.state, encoding="utf-8") as fh:
        state = state_from_dict(json.load(fh))
    report = detect(model, state)
    print(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    return EXIT_ATTACK if report.attacked else EXIT_OK


def _cmd_inspect(args) -> int:
    with open(args.model, encoding="utf-8") as fh:
        model = DetectorModel.from_json(fh.read())
    terms = {}
    for key, tc in model.terms.items():
        terms[key] = {
            "matrix": tc.matrix,
            "part": tc.part,
            "cutoff_index": tc.design.cutoff_index,
            "cutoff_lambda": tc.design.cutoff_lambda,
            "normalized_frequencies": tc.basis.normalized_frequencies().tolist(),
            "response": tc.design.response.tolist(),
            "poly_coeffs": None if tc.design.poly_coeffs is None
                           else tc.design.poly_coeffs.tolist(),
            "mu": tc.mu, "sigma": tc.sigma, "tau": tc.tau,
        }
    print(json.dumps({
        "alpha_sigma": model.alpha_sigma,
        "n_historic": model.n_historic,
        "threshold_rule": model.threshold_rule,
        "terms": terms,
        "smoothness": {p: {"mu": s.mu, "sigma": s.sigma, "tau": s.tau}
                       for p, s in model.smoothness.items()},
    }, indent=1, sort_keys=True))
    return EXIT_OK


def _cmd_experiment(args) -> int:
    cfg = _load_config(args.config)
    runner = {
        "tc1": run_tc1, "tc2": run_tc2, "tc3": run_tc3,
        "tc4": run_tc4, "compare": run_compare,
    }[args.which]
    runner(cfg, out_dir=args.output)
    print(f"{args.which} results written to {args.output}/")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridspect",
        description="Spectral detection of injected offsets in grid state estimates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_case = sub.add_parser("case", help="case file utilities")
    case_sub = p_case.add_subparsers(dest="case_command", required=True)
    p_validate = case_sub.add_parser("validate", help="validate a case file")
    p_validate.add_argument("file")
    p_validate.set_defaults(func=_cmd_case_validate)

    p_pf = sub.add_parser("powerflow", help="solve the power flow of a case")
    p_pf.add_argument("file")
    p_pf.add_argument("--dc", action="store_true", help="linearized angle-only model")
    p_pf.add_argument("--tol", type=float, default=1e-8)
    p_pf.add_argument("--max-iter", type=int, default=20)
    p_pf.set_defaults(func=_cmd_powerflow)

    p_cal = sub.add_parser("calibrate", help="calibrate a detector model")
    p_cal.add_argument("file", nargs="?", default=None,
                       help="case file (default: case from config)")
    p_cal.add_argument("--config", default=None, help="experiment config JSON")
    p_cal.add_argument("-o", "--output", required=True, help="model output path")
    p_cal.set_defaults(func=_cmd_calibrate)

    p_det = sub.add_parser("detect", help="test a state against a calibrated model")
    p_det.add_argument("model")
    p_det.add_argument("state", help="state JSON (as produced by powerflow)")
    p_det.set_defaults(func=_cmd_detect)

    p_ins = sub.add_parser("inspect", help="dump spectra and thresholds of a model")
    p_ins.add_argument("model")
    p_ins.set_defaults(func=_cmd_inspect)

    p_exp = sub.add_parser("experiment", help="run a study test case")
    p_exp.add_argument("which", choices=["tc1", "tc2", "tc3", "tc4", "compare"])
    p_exp.add_argument("--config", default=None, help="experiment config JSON")
    p_exp.add_argument("-o", "--output", required=True, help="output directory")
    p_exp.set_defaults(func=_cmd_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CaseError, PowerFlowError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
