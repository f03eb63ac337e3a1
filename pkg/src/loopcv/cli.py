"""Command-line interface: ``loopcv compile|run|reproduce|verify-cubic``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import warnings
from fractions import Fraction
from typing import List, Optional

import numpy as np

from . import plotting
from .compiler import (
    CompileError,
    DriverConstraintError,
    DriverConstraintWarning,
    GateProgram,
    compile_program,
    emit_timing_chart,
    write_timing_csv,
)
from .gaussian import GaussianError, ellipse_contour, ellipse_summary, fidelity
from .io import (
    FORMAT_VERSION,
    ProgramParseError,
    dump_json,
    format_program,
    load_config,
    parse_gate_tokens,
    parse_program,
)
from .machine import ConfigError, LoopConfig, coherent_inputs, ideal_output, matrix_from_means, run_schedule
from .pipeline import FIGURES, INPUTS, TomoSettings, angle_grid, characterize, table1_rows
from .symbolic.cubic import (
    derive_squeezer_law,
    ideal_limit_check,
    nullifier_solve,
    random_rational_cases,
    verify_cubic_identity,
)
from .tomography import TomographyError, paren_format

log = logging.getLogger("loopcv")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _on_off(text: str) -> bool:
    t = text.lower()
    if t not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return t == "on"


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _add_program_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("gates", nargs="*", help="inline program, e.g. 'squeeze 0.44 qpg 0.75'")
    p.add_argument("--file", "-f", help="program file, one gate per line")
    p.add_argument("--repeat", type=_positive_int, default=1, help="repeat the program n times")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'key = value' loop configuration")
    p.add_argument("--model", choices=("ideal", "realistic"), default="realistic")
    p.add_argument("--ff-path-lossy", type=_on_off, default=None, metavar="on|off")


def _add_tomo_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shots", type=_positive_int, default=1000, help="samples per homodyne angle")
    p.add_argument("--angles", type=_positive_int, default=12, help="number of homodyne angles (15 deg steps)")
    p.add_argument("--subsets", type=_positive_int, default=10)
    p.add_argument("--method", choices=("direct", "trajectory"), default="direct")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loopcv", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile a gate program into a schedule")
    _add_program_args(c)
    c.add_argument(
        "--driver-check", nargs="?", const="error", default="off",
        choices=("off", "warn", "error"),
        help="check the two-level VBS driver constraint (bare flag: error)",
    )
    c.add_argument("--config")
    c.add_argument("--out", help="directory for schedule.json and timing.csv")

    r = sub.add_parser("run", help="run a program on the loop model")
    _add_program_args(r)
    _add_model_args(r)
    _add_tomo_args(r)
    r.add_argument("--tomography", action="store_true", help="also sample and fit the outputs")
    r.add_argument("--out", help="results directory")

    rp = sub.add_parser("reproduce", help="regenerate a figure or table dataset")
    rp.add_argument("target", choices=("fig3", "fig4", "fig5", "table1"))
    _add_model_args(rp)
    _add_tomo_args(rp)
    rp.add_argument("--no-plots", action="store_true")
    rp.add_argument("--out", default="out")

    v = sub.add_parser("verify-cubic", help="symbolic proof of the cubic-gate identity")
    v.add_argument("--gamma", default="1/10", help="rational cubicity, or 'symbolic'")
    v.add_argument("--R", dest="R", default="R", help="rational reflectivity, or 'R' for symbolic")
    v.add_argument("--random", type=int, default=10, help="extra random rational cases")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", help="directory for the JSON proof record")
    return ap


# helpers


def _program(args) -> GateProgram:
    if args.file and args.gates:
        raise CliError("give either inline gates or --file, not both")
    if args.file:
        try:
            with open(args.file) as fh:
                gates = parse_program(fh.read())
        except OSError as exc:
            raise CliError(f"cannot read program: {exc}") from None
    else:
        gates = parse_gate_tokens(args.gates)
    return GateProgram(gates, repeat=args.repeat)


def _config(args) -> LoopConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else LoopConfig()
    if getattr(args, "model", "realistic") == "ideal":
        cfg = cfg.replace(ideal=True, gain_scale=1.0)
    if getattr(args, "ff_path_lossy", None) is not None:
        cfg = cfg.replace(ff_path_lossy=args.ff_path_lossy)
    return cfg


def _outdir(path: Optional[str]) -> Optional[str]:
    if path is None:
        return None
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise CliError(f"output directory {path} is not writable")
    return path


def _tomo(args) -> TomoSettings:
    if args.shots % args.subsets:
        raise CliError(f"--shots {args.shots} must split into {args.subsets} equal subsets")
    return TomoSettings(tuple(angle_grid(args.angles)), args.shots, args.subsets, args.method)


def _manifest(args, program: Optional[GateProgram], cfg: LoopConfig, out: str) -> dict:
    m = {
        "format_version": FORMAT_VERSION,
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "model": getattr(args, "model", None),
        "config": cfg.to_dict(),
        "out": out,
    }
    if program is not None:
        m["program"] = format_program(program.gates)
        m["repeat"] = program.repeat
    if hasattr(args, "shots"):
        m["tomography"] = {
            "angles": angle_grid(args.angles),
            "shots": args.shots,
            "subsets": args.subsets,
            "method": args.method,
        }
    return m


def _fmt_row(row: dict) -> str:
    return (
        f"{row.get('gate', ''):<14} R = {row['R_percent']:5.1f} %  "
        f"theta1 = {row['theta1_deg']:6.1f} deg  theta2 = {row['theta2_deg']:6.1f} deg  "
        f"g = {row['gain_db']:4.1f} dB"
    )


# subcommands


def cmd_compile(args) -> int:
    program = _program(args)
    cfg = _config(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DriverConstraintWarning)
        sched = compile_program(program, cfg, driver_check=args.driver_check)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    for b, st in zip(sched.bins, sched.steps):
        if st is not None:
            row = dict(st.table_row(), gate=b.label)
            print(_fmt_row(row))
        elif b.kind in ("phase", "displace"):
            print(f"{b.label:<14} R = {100 * b.vbs_R:5.1f} %  (no ancilla)")
    print(f"{len(sched.bins)} bins, {len(sched.bins) * sched.bin_ns} ns")
    out = _outdir(args.out)
    if out:
        sched.to_json(os.path.join(out, "schedule.json"))
        write_timing_csv(emit_timing_chart(sched), os.path.join(out, "timing.csv"))
    return EXIT_OK


def cmd_run(args) -> int:
    program = _program(args)
    cfg = _config(args)
    sched = compile_program(program, cfg)
    inputs = coherent_inputs(cfg)
    results = {"format_version": FORMAT_VERSION, "analytic": {}}
    outputs = {}
    for name in INPUTS:
        rec = run_schedule(sched, inputs[name], cfg)
        target = ideal_output(program, inputs[name])
        outputs[name] = rec.output
        results["analytic"][name] = {
            "output": rec.output.to_dict(),
            "target": target.to_dict(),
            "fidelity": fidelity(rec.output, target),
            "ellipse": ellipse_summary(rec.output).to_dict(),
        }
        if name == "vacuum":
            results["log"] = rec.log
    a = cfg.input_amplitude
    results["matrix"] = {
        "model": matrix_from_means(
            outputs["x_coherent"].mean - outputs["vacuum"].mean,
            outputs["p_coherent"].mean - outputs["vacuum"].mean,
            a,
        ).tolist(),
        "target": program.target_matrix().tolist(),
    }
    F = results["analytic"]["vacuum"]["fidelity"]
    print(f"fidelity (vacuum input, {args.model} model): {F:.4f}")
    M = np.array(results["matrix"]["model"])
    print("gate matrix estimate:", np.array2string(M, precision=4, suppress_small=True).replace("\n", ""))
    if args.tomography:
        ch = characterize(program, cfg, args.seed, _tomo(args))
        ch.pop("_fits")
        ch.pop("_analytic")
        results["tomography"] = ch
        v = ch["inputs"]["vacuum"]
        print(f"tomography fidelity (vacuum input): {v['fidelity_text']}")
    out = _outdir(args.out)
    if out:
        dump_json(results, os.path.join(out, "results.json"))
        dump_json(_manifest(args, program, cfg, out), os.path.join(out, "manifest.json"))
    return EXIT_OK


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# format_version: {FORMAT_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _reproduce_table1(out: str) -> int:
    rows = table1_rows()
    for r in rows:
        print(_fmt_row(r))
    keys = ["gate", "R_percent", "theta1_deg", "theta2_deg", "gain_db"]
    _write_csv(os.path.join(out, "table1.csv"), keys, [[r[k] for k in keys] for r in rows])
    law = derive_squeezer_law()
    dump_json(
        {"format_version": FORMAT_VERSION, "rows": rows, "squeezer_law": law.record.to_dict()},
        os.path.join(out, "table1.json"),
    )
    return EXIT_OK if law.record.passed else EXIT_FAIL


def _reproduce_figure(fig: str, args, cfg: LoopConfig, out: str) -> int:
    kind, programs, params = FIGURES[fig]
    tomo = _tomo(args)
    xlabel = {"squeeze": "r", "qpg": "kappa", "steps": "n"}[kind]
    model_M, tomo_M, tomo_err, target_M = [], [], [], []
    ell = {"model": {k: [] for k in ("var_major", "var_minor", "tilt_deg")},
           "tomo": {k: [] for k in ("var_major", "var_minor", "tilt_deg")},
           "err": {k: [] for k in ("var_major", "var_minor", "tilt_deg")}}
    fid_rows, contour_rows, ell_rows, panels = [], [], [], {}
    summary = {"format_version": FORMAT_VERSION, "figure": fig, "model": args.model, "points": []}
    for k, (prog, val) in enumerate(zip(programs, params)):
        ch = characterize(prog, cfg, args.seed, tomo, tag=k)
        fits, analytic = ch.pop("_fits"), ch.pop("_analytic")
        model_M.append(ch["matrix"]["model"])
        tomo_M.append(ch["matrix"]["tomography"])
        tomo_err.append(ch["matrix"]["tomography_err"])
        target_M.append(ch["matrix"]["target"])
        curves = []
        for name in INPUTS:
            for src, st in (("model", analytic[name]), ("tomography", fits[name].state)):
                pts = ellipse_contour(st)
                curves.append((f"{src} {name}", pts))
                contour_rows += [[val, name, src, x, p] for x, p in pts]
            rep = ch["inputs"][name]
            e_m, e_t = rep["model"]["ellipse"], rep["ellipse"]
            ell_rows.append([val, name, "model", e_m["var_major"], e_m["var_minor"], e_m["tilt_deg"], 0.0, 0.0, 0.0])
            ell_rows.append([val, name, "tomography", e_t["var_major"], e_t["var_minor"], e_t["tilt_deg"],
                             e_t["err"]["var_major"], e_t["err"]["var_minor"], e_t["err"]["tilt_deg"]])
        panels[f"{xlabel} = {val:g}"] = curves
        vac = ch["inputs"]["vacuum"]
        for key in ("var_major", "var_minor", "tilt_deg"):
            ell["model"][key].append(vac["model"]["ellipse"][key])
            ell["tomo"][key].append(vac["ellipse"][key])
            ell["err"][key].append(vac["ellipse"]["err"][key])
        vac_in = coherent_inputs(cfg)["vacuum"]
        target = ideal_output(prog, vac_in)
        f_model = {}
        for label, c in (
            ("ideal", LoopConfig.ideal_model()),
            ("realistic_ff_lossy_on", cfg.replace(ideal=False, ff_path_lossy=True)),
            ("realistic_ff_lossy_off", cfg.replace(ideal=False, ff_path_lossy=False)),
        ):
            o = run_schedule(compile_program(prog, c), vac_in, c).output
            f_model[label] = fidelity(o, target)
        fid_rows.append([
            val, f_model["ideal"], f_model["realistic_ff_lossy_on"], f_model["realistic_ff_lossy_off"],
            vac["fidelity"], vac["fidelity_err"], vac["fidelity_text"],
        ])
        summary["points"].append({"param": val, "model_fidelity": f_model, **ch})
        print(
            f"{xlabel} = {val:g}: F model ff-on {f_model['realistic_ff_lossy_on']:.3f}, "
            f"ff-off {f_model['realistic_ff_lossy_off']:.3f}, tomography ({args.model}) {vac['fidelity_text']}"
        )

    _write_csv(os.path.join(out, "contours.csv"), ["param", "input", "source", "x", "p"], contour_rows)
    _write_csv(
        os.path.join(out, "ellipse.csv"),
        ["param", "input", "source", "var_major", "var_minor", "tilt_deg", "err_var_major", "err_var_minor", "err_tilt_deg"],
        ell_rows,
    )
    m_rows = []
    for val, mm, tm, te, tg in zip(params, model_M, tomo_M, tomo_err, target_M):
        for i in range(2):
            for j in range(2):
                m_rows.append([val, f"M{i + 1}{j + 1}", tg[i][j], mm[i][j], tm[i][j], te[i][j]])
    _write_csv(os.path.join(out, "matrix.csv"), ["param", "element", "target", "model", "tomography", "tomography_err"], m_rows)
    _write_csv(
        os.path.join(out, "fidelity.csv"),
        ["param", "F_ideal_model", "F_realistic_ff_lossy_on", "F_realistic_ff_lossy_off",
         "F_tomography", "F_tomography_err", "F_tomography_text"],
        fid_rows,
    )
    dump_json(summary, os.path.join(out, "results.json"))
    if not args.no_plots:
        plotting.contours(panels, os.path.join(out, "contours.png"))
        plotting.matrix_elements(
            params, np.array(model_M), np.array(tomo_M), np.array(tomo_err), np.array(target_M),
            os.path.join(out, "matrix.png"), xlabel,
        )
        plotting.ellipse_parameters(
            params, {k: np.array(v) for k, v in ell["model"].items()},
            {k: np.array(v) for k, v in ell["tomo"].items()},
            {k: np.array(v) for k, v in ell["err"].items()},
            os.path.join(out, "ellipse.png"), xlabel,
        )
        plotting.fidelities(
            [f"{xlabel}={v:g}" for v in params],
            {
                "model ff-lossy on": [r[2] for r in fid_rows],
                "model ff-lossy off": [r[3] for r in fid_rows],
                f"tomography ({args.model})": [r[4] for r in fid_rows],
            },
            os.path.join(out, "fidelity.png"),
            {f"tomography ({args.model})": [r[5] for r in fid_rows]},
        )
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cfg = _config(args)
    out = _outdir(os.path.join(args.out, args.target))
    dump_json(_manifest(args, None, cfg, out), os.path.join(out, "manifest.json"))
    if args.target == "table1":
        return _reproduce_table1(out)
    return _reproduce_figure(args.target, args, cfg, out)


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise CliError(f"not a rational number: {text!r}") from None


def cmd_verify_cubic(args) -> int:
    gamma = None if args.gamma == "symbolic" else _rational(args.gamma)
    R = args.R if args.R == "R" else _rational(args.R)
    if not isinstance(R, str) and not 0 < R < 1:
        raise CliError("R must lie in (0, 1)")
    main = verify_cubic_identity(gamma, R)
    records = [main]
    rng = np.random.default_rng(args.seed)
    for g, r in random_rational_cases(rng, args.random):
        records.append(verify_cubic_identity(g, r))
    limit = ideal_limit_check()
    null = nullifier_solve(1, 1)
    law = derive_squeezer_law()
    records += [limit, law.record]
    if null.check is not None:
        records.append(null.check)
    ok = all(r.passed for r in records) and null.R == Fraction(1, 2)
    print(main.residual_text())
    for r in records[1:]:
        print(f"{r.name:<16} {'pass' if r.passed else 'FAIL'}  {r.params}", file=sys.stderr)
    out = _outdir(args.out)
    if out:
        dump_json(
            {"format_version": FORMAT_VERSION, "passed": ok, "records": [r.to_dict() for r in records]},
            os.path.join(out, "cubic_proof.json"),
        )
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "compile": cmd_compile,
    "run": cmd_run,
    "reproduce": cmd_reproduce,
    "verify-cubic": cmd_verify_cubic,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DriverConstraintError as exc:
        print(f"error: driver constraint: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (CliError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ProgramParseError, ConfigError, CompileError, GaussianError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TomographyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
