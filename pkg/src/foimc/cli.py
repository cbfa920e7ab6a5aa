"""Command-line front end: tune an FO-IMC filter from a config file.

Config grammar (one ``key = value`` per line, ``#`` starts a comment)::

    k             = 0.43          # process gain
    tau           = 148           # time constant, seconds
    theta         = 40            # dead time, seconds
    gain_margin   = 9.54 dB       # unit tag required: dB | abs
    phase_margin  = 65 deg        # unit tag required: deg | rad
    grid_points   = 2000          # optional solver settings
    refine_tol    = 1e-12
    max_bisections = 200
    output_dir    = out           # optional, default "."
    emit          = report, curves_csv, bode_csv, step_csv
    horizon       = 800           # optional step-response horizon, seconds
    step_samples  = 500

Exit status: 0 success, 2 invalid config, 3 infeasible spec,
4 no intersection, 5 verification mismatch.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    FoImcError,
    NoIntersectionError,
    SpecError,
    VerificationError,
    VerificationMismatchError,
)
from .model import (
    ProcessModel,
    RobustnessSpec,
    TuningResult,
    describe_imc_controller,
    eval_open_loop,
)
from .solver import SolverOptions, tune
from .verification import check_disturbance_rejection, default_sweep, step_response

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NO_INTERSECTION = 4
EXIT_MISMATCH = 5

EMIT_CHOICES = ("report", "curves_csv", "bode_csv", "step_csv")
KNOWN_KEYS = {
    "k",
    "tau",
    "theta",
    "gain_margin",
    "phase_margin",
    "grid_points",
    "refine_tol",
    "max_bisections",
    "output_dir",
    "emit",
    "horizon",
    "step_samples",
}
GM_TOL_FRACTION = 0.02
PM_TOL = 0.01


class ConfigError(ValueError):
    """The configuration file is malformed or incomplete."""


@dataclass(frozen=True)
class RunConfig:
    model: ProcessModel
    spec: RobustnessSpec
    solver: SolverOptions
    outputs: Path
    emit: frozenset
    horizon: float | None = None
    step_samples: int = 500


def parse_gain_margin(text: str) -> float:
    """``"9.54 dB"`` or ``"3 abs"`` -> absolute ratio."""
    value, unit = _split_unit(text, "gain_margin")
    if unit == "db":
        return 10 ** (value / 20)
    if unit == "abs":
        return value
    raise ConfigError(f"gain_margin unit must be dB or abs, got {unit!r}")


def parse_phase_margin(text: str) -> float:
    """``"65 deg"`` or ``"1.1345 rad"`` -> radians."""
    value, unit = _split_unit(text, "phase_margin")
    if unit == "deg":
        return value * math.pi / 180
    if unit == "rad":
        return value
    raise ConfigError(f"phase_margin unit must be deg or rad, got {unit!r}")


def _split_unit(text, key):
    parts = text.split()
    if len(parts) != 2:
        raise ConfigError(f"{key} needs a number and a unit tag, got {text!r}")
    return _number(parts[0], key), parts[1].lower()


def _number(text, key):
    try:
        x = float(text)
    except ValueError:
        raise ConfigError(f"{key}: {text!r} is not a number") from None
    if not math.isfinite(x):
        raise ConfigError(f"{key} must be finite")
    return x


def _integer(text, key):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: {text!r} is not an integer") from None


def load_config(path, output_dir=None, emit=None) -> RunConfig:
    """Parse a config file; command-line overrides win over file values."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        text = Path(path).read_text(encoding="utf-8")
        parser.read_string("[run]\n" + text)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    raw = dict(parser["run"])
    unknown = set(raw) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in ("k", "tau", "theta", "gain_margin", "phase_margin"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")

    try:
        model = ProcessModel(
            _number(raw["k"], "k"), _number(raw["tau"], "tau"), _number(raw["theta"], "theta")
        )
        defaults = SolverOptions()
        solver = SolverOptions(
            grid_points=_integer(raw.get("grid_points", str(defaults.grid_points)), "grid_points"),
            refine_tol=_number(raw.get("refine_tol", repr(defaults.refine_tol)), "refine_tol"),
            max_bisections=_integer(
                raw.get("max_bisections", str(defaults.max_bisections)), "max_bisections"
            ),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    # spec errors are deliberately not converted: they map to their own exit code
    spec = RobustnessSpec(
        parse_gain_margin(raw["gain_margin"]), parse_phase_margin(raw["phase_margin"])
    )

    if emit is None:
        names = [e.strip() for e in raw.get("emit", ",".join(EMIT_CHOICES)).split(",")]
        emit = [e for e in names if e]
    bad = set(emit) - set(EMIT_CHOICES)
    if bad:
        raise ConfigError(f"unknown emit targets: {', '.join(sorted(bad))}")

    horizon = _number(raw["horizon"], "horizon") if "horizon" in raw else None
    samples = _integer(raw.get("step_samples", "500"), "step_samples")
    out = Path(output_dir if output_dir is not None else raw.get("output_dir", "."))
    return RunConfig(model, spec, solver, out, frozenset(emit), horizon, samples)


def _fmt(x) -> str:
    return f"{x:.12g}"


def _write_csv(path, header, columns):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([_fmt(v) for v in row])


def margins_ok(result: TuningResult) -> bool:
    m = result.margins
    if m is None:
        return False
    return (
        abs(m.gain_margin_measured - result.spec.gain_margin)
        <= GM_TOL_FRACTION * result.spec.gain_margin
        and abs(m.phase_margin_measured - result.spec.phase_margin) <= PM_TOL
        and m.omega_g_measured < m.omega_p_measured
    )


def format_report(cfg: RunConfig, result: TuningResult, disturbance) -> str:
    spec, model = cfg.spec, cfg.model
    fs = result.feasible_set
    m = result.margins
    lines = [
        "FO-IMC tuning report",
        "",
        f"process       : k = {model.k:g}, tau = {model.tau:g} s, theta = {model.theta:g} s",
        f"gain margin   : {spec.gain_margin:.6g} ({spec.gain_margin_db:.4f} dB)",
        f"phase margin  : {spec.phase_margin:.6g} rad ({math.degrees(spec.phase_margin):.4f} deg)",
        "",
        f"feasible beta : case {fs.case_label}, "
        + " U ".join(f"({lo:.6g}, {hi:.6g})" for lo, hi in fs.intervals),
    ]
    lines += [f"  note: {n}" for n in fs.notes]
    lines += [
        "",
        f"beta*         = {result.beta:.6f}",
        f"lambda*       = {result.lam:.6g}",
        f"omega_g*      = {result.omega_g:.6g} rad/s",
        f"omega_p*      = {result.omega_p:.6g} rad/s",
        "",
        f"measured gain margin  = {m.gain_margin_measured:.6g}",
        f"measured phase margin = {m.phase_margin_measured:.6g} rad",
        f"measured omega_g      = {m.omega_g_measured:.6g} rad/s",
        f"measured omega_p      = {m.omega_p_measured:.6g} rad/s",
        "margins within tolerance: " + ("yes" if margins_ok(result) else "NO"),
        "",
        "disturbance rejection : "
        + ("pass" if disturbance.passed else "FAIL")
        + " (|1/(1+L)| = "
        + ", ".join(f"{v:.3g}" for v in disturbance.magnitudes)
        + ")",
        "",
        "controller    : " + describe_imc_controller(model, result.params),
    ]
    lines += [f"diagnostic    : {d}" for d in result.diagnostics]
    return "\n".join(lines) + "\n"


def run(cfg: RunConfig, stream=None) -> int:
    """Tune, verify, and write the requested outputs.  Returns the exit status."""
    stream = stream if stream is not None else sys.stdout
    try:
        result = tune(cfg.model, cfg.spec, cfg.solver)
    except NoIntersectionError as exc:
        print(f"no intersection: {exc}", file=sys.stderr)
        return EXIT_NO_INTERSECTION
    except SpecError as exc:
        print(f"infeasible spec: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_MISMATCH

    cfg.outputs.mkdir(parents=True, exist_ok=True)
    theta = cfg.model.theta
    disturbance = check_disturbance_rejection(result.params, theta)

    if "report" in cfg.emit:
        report = format_report(cfg, result, disturbance)
        (cfg.outputs / "report.txt").write_text(report, encoding="utf-8")
        stream.write(report)

    if "curves_csv" in cfg.emit:
        c = result.curve
        ok = c.valid
        _write_csv(
            cfg.outputs / "curves.csv",
            ["beta", "omega_g", "omega_p", "lambda_a", "lambda_b"],
            [c.beta[ok], c.omega_g[ok], c.omega_p[ok], c.lambda_a[ok], c.lambda_b[ok]],
        )

    if "bode_csv" in cfg.emit:
        w = default_sweep(theta)
        L = eval_open_loop(result.params, theta, w)
        _write_csv(
            cfg.outputs / "bode.csv",
            ["omega", "mag_db", "phase_deg"],
            [w, 20 * np.log10(np.abs(L)), np.degrees(np.unwrap(np.angle(L)))],
        )

    if "step_csv" in cfg.emit:
        scale = max(theta, result.lam ** (1 / result.beta))
        horizon = cfg.horizon if cfg.horizon is not None else 20 * scale
        resp = step_response(result.params, theta, horizon, cfg.step_samples)
        _write_csv(cfg.outputs / "step.csv", ["t", "y"], [resp.times, resp.values])

    if not margins_ok(result):
        m = result.margins
        print(
            "verification mismatch: "
            + str(
                VerificationMismatchError(
                    f"measured A_m = {m.gain_margin_measured:.6g}, "
                    f"phi_m = {m.phase_margin_measured:.6g} rad"
                )
            ),
            file=sys.stderr,
        )
        return EXIT_MISMATCH
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="foimc", description="Tune a fractional IMC filter to gain/phase margin specs."
    )
    p.add_argument("config", help="key = value configuration file")
    p.add_argument("-o", "--output-dir", help="directory for report and CSV files")
    p.add_argument(
        "--emit",
        help="comma-separated subset of " + ",".join(EMIT_CHOICES),
    )
    p.add_argument("-v", "--verbose", action="store_true", help="echo the parsed config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    emit = None
    if args.emit is not None:
        emit = [e.strip() for e in args.emit.split(",") if e.strip()]
    try:
        cfg = load_config(args.config, args.output_dir, emit)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SpecError as exc:
        print(f"infeasible spec: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except FoImcError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.verbose:
        print(cfg, file=sys.stderr)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
