"""Command-line front end.

Exit codes: 0 success, 1 bad input (arguments or run file), 2 infeasible
design, 3 solver or numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigError, ContractError, DfrcError, InfeasibleDesign
from .evaluation import (DESIGNERS, SWEEP_AXES, ScenarioTemplate, SweepSpec, empirical_validate,
                         evaluate, gamma_sweep_values, run_sweep)
from .radar import radar_only_design
from .robust import CsiUncertainty, angular_uncertainty_sets, solve_robust
from .scenario import RADAR_MODES
from .sdr import solve_sdr
from .zf import solve_zf

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 1, 2, 3
OUT_ENV = "SECURE_DFRC_OUT"
COMMANDS = ("design-sdr", "design-zf", "design-robust", "radar-only", "sweep", "validate")
RUN_KEYS = ("scenario", "beampattern", "thresholds", "robust", "validate", "template", "sweep")


@dataclasses.dataclass
class RunConfig:
    command: str
    run_file: Path
    output_dir: Path
    seed: int | None = None
    trials: int | None = None
    overrides: dict = dataclasses.field(default_factory=dict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="secure-dfrc",
                description="Secure dual-function radar-communication precoder design.",
                epilog=f"Outputs go to --out, else ${OUT_ENV}, else ./dfrc-out.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(sp):
        sp.add_argument("run_file", type=Path, help="JSON run file")
        sp.add_argument("-o", "--out", type=Path, default=None, help="output directory")

    def thresholds(sp):
        sp.add_argument("--gamma-c-db", type=float, help="user SINR threshold override (dB)")
        sp.add_argument("--gamma-e-db", type=float, help="eavesdropper SINR threshold override (dB)")
        sp.add_argument("--beam-width", type=float, help="mainlobe width override (degrees)")
        sp.add_argument("--weight", type=float, help="cross-correlation weight override")

    for name, help_ in [("design-sdr", "globally optimal design via the tight relaxation"),
                        ("design-zf", "low-complexity zero-forcing design"),
                        ("design-robust", "design robust to CSI and direction errors")]:
        sp = sub.add_parser(name, help=help_)
        common(sp)
        thresholds(sp)
        if name == "design-robust":
            sp.add_argument("--csi-fraction", type=float, help="CSI error radius as a fraction of ||h_k||")

    sp = sub.add_parser("radar-only", help="radar-only reference covariance")
    common(sp)
    sp.add_argument("--beam-width", type=float)
    sp.add_argument("--weight", type=float)

    sp = sub.add_parser("sweep", help="Monte-Carlo threshold sweep")
    common(sp)
    sp.add_argument("--trials", type=int, help="number of Monte-Carlo trials")
    sp.add_argument("--seed", type=int, help="master seed")
    sp.add_argument("--workers", type=int, help="worker processes (default 1)")

    sp = sub.add_parser("validate", help="frame-level check of a design")
    common(sp)
    thresholds(sp)
    sp.add_argument("--designer", choices=DESIGNERS, help="designer to validate (default sdr)")
    sp.add_argument("--symbols", type=int, help="frame length N")
    sp.add_argument("--seed", type=int, help="symbol seed")
    sp.add_argument("--radar-mode", choices=RADAR_MODES)
    return p


def _output_dir(arg) -> Path:
    return Path(arg) if arg is not None else Path(os.environ.get(OUT_ENV, "dfrc-out"))


def _run_config(ns) -> RunConfig:
    over = {k: v for k, v in vars(ns).items()
            if k not in ("command", "run_file", "out", "seed", "trials") and v is not None}
    return RunConfig(ns.command, ns.run_file, _output_dir(ns.out),
                     getattr(ns, "seed", None), getattr(ns, "trials", None), over)


def _design_inputs(run: dict, rc: RunConfig):
    if "scenario" not in run:
        raise ConfigError(f"{rc.run_file}: 'scenario' is required")
    sc = io.scenario_from_dict(run["scenario"])
    bp = dict(run.get("beampattern", {}))
    if "beam_width" in rc.overrides:
        bp["beam_width_deg"] = rc.overrides["beam_width"]
    if "weight" in rc.overrides:
        bp["weight"] = rc.overrides["weight"]
    spec = io.spec_from_dict(bp, [t.angle_deg for t in sc.targets])
    th = dict(run.get("thresholds", {}))
    for key in ("gamma_c", "gamma_e"):
        if f"{key}_db" in rc.overrides:
            th.pop(key, None)
            th[f"{key}_db"] = rc.overrides[f"{key}_db"]
    return sc, spec, io.thresholds_from_dict(th)


def _csi(run: dict, sc, rc: RunConfig) -> CsiUncertainty:
    rob = io._take(run.get("robust", {}), ("csi_fraction", "csi_radii"), "robust")
    if "csi_fraction" in rc.overrides:
        rob = {"csi_fraction": rc.overrides["csi_fraction"]}
    try:
        if "csi_radii" in rob:
            if "csi_fraction" in rob:
                raise ConfigError("robust: give csi_fraction or csi_radii, not both")
            return CsiUncertainty.from_scenario(sc, rob["csi_radii"])
        return CsiUncertainty.relative(sc, float(rob.get("csi_fraction", 0.0)))
    except (ContractError, ValueError) as exc:
        raise ConfigError(f"robust: {exc}") from exc


def _design(command: str, run: dict, rc: RunConfig):
    sc, spec, th = _design_inputs(run, rc)
    angles = None
    if command == "design-sdr":
        res = solve_sdr(sc, spec, th)
    elif command == "design-zf":
        res = solve_zf(sc, spec, th)
    else:
        csi = _csi(run, sc, rc)
        ang = angular_uncertainty_sets(sc)
        angles = ang.angles_deg
        res = solve_robust(sc, spec, th, csi, ang)
    return sc, spec, th, res, angles


def cmd_design(rc: RunConfig, run: dict) -> int:
    sc, spec, th, res, angles = _design(rc.command, run, rc)
    R_star = radar_only_design(spec, sc.config).covariance
    m = evaluate(res, sc, R_star, angles)
    out = rc.output_dir
    io.write_beampattern_csv(out / "beampattern.csv", res.covariance, sc.config)
    record = io.result_to_dict(res, sc)
    record["beampattern"] = io.spec_to_dict(spec)
    record["thresholds"] = io.thresholds_to_dict(th)
    io.dump_json(record, out / "result.json")
    io.dump_json(io.metrics_to_dict(m), out / "metrics.json")
    print(f"{res.designer}: objective {res.objective:.6e}, sum rate {m.sum_rate:.4f}, "
          f"secrecy rate {m.secrecy_rate:.4f} -> {out}")
    return EXIT_OK


def cmd_radar_only(rc: RunConfig, run: dict) -> int:
    sc, spec, _ = _design_inputs(run, rc)
    ref = radar_only_design(spec, sc.config)
    out = rc.output_dir
    io.write_beampattern_csv(out / "beampattern.csv", ref.covariance, sc.config)
    io.dump_json({"designer": "radar-only", "alpha": ref.alpha, "objective": ref.objective,
                  "covariance": io.encode_complex(ref.covariance),
                  "beampattern": io.spec_to_dict(spec)}, out / "result.json")
    print(f"radar-only: objective {ref.objective:.6e} -> {out}")
    return EXIT_OK


_TEMPLATE_KEYS = ("config", "num_users", "num_targets", "angle_range_deg", "path_loss",
                  "angle_uncertainty_deg", "beam_width_deg", "weight")
_SWEEP_KEYS = ("axis", "values", "start", "stop", "step", "designers", "gamma_c_db", "gamma_e_db",
               "csi_fraction", "paired", "trials", "seed", "workers")


def _sweep_inputs(run: dict, rc: RunConfig):
    t = io._take(run.get("template", {}), _TEMPLATE_KEYS, "template")
    s = io._take(run.get("sweep", {}), _SWEEP_KEYS, "sweep")
    try:
        kw = {k: t[k] for k in _TEMPLATE_KEYS[1:] if k in t}
        if "path_loss" in kw:
            kw["path_loss"] = io.decode_complex(kw["path_loss"], "template.path_loss")
        if "angle_range_deg" in kw:
            kw["angle_range_deg"] = tuple(kw["angle_range_deg"])
        tpl = ScenarioTemplate(io.config_from_dict(t.get("config", {}), "template.config"), **kw)
        if "axis" not in s:
            raise ConfigError(f"sweep: axis is required (one of {', '.join(SWEEP_AXES)})")
        if "values" in s:
            values = tuple(s["values"])
        elif all(k in s for k in ("start", "stop", "step")):
            values = gamma_sweep_values(s["start"], s["stop"], s["step"])
        else:
            raise ConfigError("sweep: give values or start/stop/step")
        spec = SweepSpec(s["axis"], values, tuple(s.get("designers", ("sdr",))),
                         float(s.get("gamma_c_db", 10.0)), float(s.get("gamma_e_db", 0.0)),
                         float(s.get("csi_fraction", 0.0)), bool(s.get("paired", True)))
    except (ContractError, TypeError, ValueError) as exc:
        raise ConfigError(f"sweep: {exc}") from exc
    trials = rc.trials if rc.trials is not None else int(s.get("trials", 50))
    seed = rc.seed if rc.seed is not None else int(s.get("seed", 0))
    workers = rc.overrides.get("workers", s.get("workers", 1))
    return tpl, spec, trials, seed, workers


def cmd_sweep(rc: RunConfig, run: dict) -> int:
    tpl, spec, trials, seed, workers = _sweep_inputs(run, rc)
    res = run_sweep(tpl, spec, trials, seed, workers)
    out = rc.output_dir
    io.write_sweep_csv(out / "sweep.csv", res)
    summary = {
        "axis": res.axis, "values": res.values.tolist(), "designers": list(res.designers),
        "trials": res.trials, "seed": res.seed,
        "infeasible_rate": {d: v.tolist() for d, v in res.infeasible_rate.items()},
        "trials_used": {d: v.tolist() for d, v in res.used_trials.items()},
        "means": {d: {k: v.tolist() for k, v in m.items()} for d, m in res.means.items()},
        "stderr": {d: {k: v.tolist() for k, v in m.items()} for d, m in res.stderr.items()},
    }
    io.dump_json(summary, out / "sweep.json")
    print(f"sweep over {res.axis}: {len(res.values)} point(s), {trials} trial(s) -> {out}")
    return EXIT_OK


def cmd_validate(rc: RunConfig, run: dict) -> int:
    v = io._take(run.get("validate", {}), ("designer", "num_symbols", "seed", "radar_mode"), "validate")
    designer = rc.overrides.get("designer", v.get("designer", "sdr"))
    N = int(rc.overrides.get("symbols", v.get("num_symbols", 1 << 16)))
    seed = rc.seed if rc.seed is not None else int(v.get("seed", 0))
    mode = rc.overrides.get("radar_mode", v.get("radar_mode", "exact-orthogonal"))
    if designer not in DESIGNERS:
        raise ConfigError(f"validate: unknown designer {designer!r}")
    sc, spec, th, res, _ = _design(f"design-{designer}", run, rc)
    rep = empirical_validate(res, sc, N, seed, mode)
    io.dump_json({
        "designer": designer, "num_symbols": N, "seed": seed, "radar_mode": mode,
        "covariance_error_fro": rep.covariance_error,
        "empirical_user_sinr_db": (10 * np.log10(rep.empirical_user_sinr)).tolist(),
        "analytic_user_sinr_db": (10 * np.log10(rep.analytic_user_sinr)).tolist(),
        "sinr_error_db": rep.sinr_error_db.tolist(),
    }, rc.output_dir / "validation.json")
    print(f"validate {designer}: max SINR error {rep.sinr_error_db.max():.4f} dB, "
          f"covariance error {rep.covariance_error:.3e} -> {rc.output_dir}")
    return EXIT_OK


HANDLERS = {"design-sdr": cmd_design, "design-zf": cmd_design, "design-robust": cmd_design,
            "radar-only": cmd_radar_only, "sweep": cmd_sweep, "validate": cmd_validate}


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    rc = _run_config(ns)
    try:
        run = io._take(io.load_json(rc.run_file), RUN_KEYS, str(rc.run_file))
        rc.output_dir.mkdir(parents=True, exist_ok=True)
        return HANDLERS[rc.command](rc, run)
    except (ConfigError, ContractError) as exc:
        print(f"secure-dfrc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleDesign as exc:
        io.dump_json({"status": "infeasible", "command": rc.command, "designer": exc.designer,
                      "solver_status": exc.solver_status, "message": str(exc)},
                     rc.output_dir / "infeasible.json")
        print(f"secure-dfrc: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DfrcError as exc:
        print(f"secure-dfrc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
