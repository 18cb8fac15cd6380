"""Command-line front end.

Four commands over a line-oriented key = value configuration:

    simulate  uncontrolled reduced flow  -> simulate.csv
    analytic  closed-form flow           -> analytic.csv
    track     solve the tracking problem -> track.csv, report.txt, plot.gp
    check     run the invariant suite    -> pass/fail table on stdout

Exit codes: 0 success, 1 config error, 2 track non-convergence,
3 internal/domain error (including a failed check).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import checks as checks_mod
from . import kernels
from .errors import ConfigError, NhtrackError
from .geometry import AdaptedState
from .integrators import Trajectory
from .particle import PARTICLE_NAME, analytic_constants, analytic_flow
from .shooting import NewtonConfig, solve_tracking
from .tracking import (
    KIND_FREE_FLOW,
    KIND_LINE,
    KIND_TABULATED,
    ReferenceTrajectory,
    TrackingProblem,
    constant_z_line,
    free_flow,
    tabulated,
    uncontrolled_cost,
)

CSV_HEADER = "t,x,y,z,v1,v2,u1,u2,l1,l2,l3,m1,m2,x_r,y_r,z_r,v1_r,v2_r"

REFERENCE_KINDS = (KIND_LINE, KIND_FREE_FLOW, KIND_TABULATED)

# keys that only the track command reads
_TRACK_ONLY_KEYS = ("epsilon", "omega")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description with documented defaults.

    Omitted keys fall back to the bundled benchmark experiment: the
    particle started at (0.5, 0.2, 0.7; 0.5, 0.4) tracking the reference
    (1, 0, t+1; 0, 1) over T=4 with epsilon=7 and omega=1.
    """

    system: str = PARTICLE_NAME
    initial_state: tuple = (0.5, 0.2, 0.7, 0.5, 0.4)
    reference: str = KIND_LINE
    ref_x_r: float = 1.0
    ref_z_offset: float = 1.0
    ref_speed: float = 1.0
    ref_initial_state: Optional[tuple] = None
    ref_file: Optional[str] = None
    T: float = 4.0
    steps: int = 4000
    epsilon: float = 7.0
    omega: float = 1.0
    adjoint_mode: str = "derived"
    full_transversality: bool = True
    newton_tol: float = 1e-10
    newton_max_iters: int = 100
    output_dir: str = "."
    provided: frozenset = field(default_factory=frozenset, compare=False)


def _parse_floats(value: str, count: int, key: str, line: int) -> tuple:
    parts = value.replace(",", " ").split()
    if len(parts) != count:
        raise ConfigError(f"line {line}: key '{key}' needs {count} numbers", line=line)
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"line {line}: malformed number in key '{key}'", line=line)


def _parse_float(value: str, key: str, line: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"line {line}: malformed number for key '{key}'", line=line)


def _parse_int(value: str, key: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"line {line}: malformed integer for key '{key}'", line=line)


def _parse_bool(value: str, key: str, line: int) -> bool:
    low = value.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"line {line}: key '{key}' expects true/false", line=line)


def parse_config(text: str) -> ExperimentConfig:
    """Parse key = value lines into a validated ExperimentConfig.

    '#' starts a comment; blank lines are skipped; unknown keys and
    invariant violations are rejected with the offending line number.
    """
    values = {}
    provided = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in provided:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'", line=lineno)
        provided.add(key)
        if key == "system":
            values["system"] = value
        elif key == "initial_state":
            values["initial_state"] = _parse_floats(value, 5, key, lineno)
        elif key == "reference":
            if value not in REFERENCE_KINDS:
                raise ConfigError(
                    f"line {lineno}: unknown reference kind '{value}' "
                    f"(expected one of {', '.join(REFERENCE_KINDS)})",
                    line=lineno,
                )
            values["reference"] = value
        elif key == "reference.x_r":
            values["ref_x_r"] = _parse_float(value, key, lineno)
        elif key == "reference.z_offset":
            values["ref_z_offset"] = _parse_float(value, key, lineno)
        elif key == "reference.speed":
            values["ref_speed"] = _parse_float(value, key, lineno)
        elif key == "reference.initial_state":
            values["ref_initial_state"] = _parse_floats(value, 5, key, lineno)
        elif key == "reference.file":
            values["ref_file"] = value
        elif key == "T":
            values["T"] = _parse_float(value, key, lineno)
        elif key == "steps":
            values["steps"] = _parse_int(value, key, lineno)
        elif key == "epsilon":
            values["epsilon"] = _parse_float(value, key, lineno)
            if values["epsilon"] <= 0.0:
                raise ConfigError(
                    f"line {lineno}: epsilon must be > 0 (epsilon = 0 makes the "
                    "tracking problem singular: the control is no longer "
                    "determined by the stationary condition)",
                    line=lineno,
                )
        elif key == "omega":
            values["omega"] = _parse_float(value, key, lineno)
            if values["omega"] <= 0.0:
                raise ConfigError(f"line {lineno}: omega must be > 0", line=lineno)
        elif key == "adjoint_mode":
            if value not in ("derived", "paper-literal"):
                raise ConfigError(
                    f"line {lineno}: adjoint_mode must be 'derived' or 'paper-literal'",
                    line=lineno,
                )
            values["adjoint_mode"] = value
        elif key == "full_transversality":
            values["full_transversality"] = _parse_bool(value, key, lineno)
        elif key == "newton.tol":
            values["newton_tol"] = _parse_float(value, key, lineno)
            if values["newton_tol"] <= 0.0:
                raise ConfigError(f"line {lineno}: newton.tol must be > 0", line=lineno)
        elif key == "newton.max_iters":
            values["newton_max_iters"] = _parse_int(value, key, lineno)
            if values["newton_max_iters"] < 1:
                raise ConfigError(f"line {lineno}: newton.max_iters must be >= 1", line=lineno)
        elif key == "output_dir":
            values["output_dir"] = value
        else:
            raise ConfigError(f"line {lineno}: unknown key '{key}'", line=lineno)

    cfg = ExperimentConfig(**values, provided=frozenset(provided))
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.system != PARTICLE_NAME:
        raise ConfigError(f"unknown system '{cfg.system}' (only {PARTICLE_NAME} is bundled)")
    for name in ("T", "epsilon", "omega", "newton_tol"):
        if not np.isfinite(getattr(cfg, name)):
            raise ConfigError(f"key '{name}' must be finite")
    if not all(np.isfinite(v) for v in cfg.initial_state):
        raise ConfigError("initial_state entries must be finite")
    if cfg.T <= 0.0:
        raise ConfigError("T must be > 0")
    if cfg.steps < 1:
        raise ConfigError("steps must be >= 1")
    if cfg.epsilon <= 0.0:
        raise ConfigError("epsilon must be > 0 (singular tracking problem)")
    if cfg.reference == KIND_TABULATED and cfg.ref_file is None:
        raise ConfigError("reference = tabulated requires reference.file")


def apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Fold command-line flags over parsed config keys."""
    updates = {}
    provided = set(cfg.provided)
    for flag, key in (("T", "T"), ("epsilon", "epsilon"), ("omega", "omega"), ("steps", "steps")):
        value = getattr(args, flag, None)
        if value is not None:
            updates[key] = value
            provided.add(key)
    if getattr(args, "out", None) is not None:
        updates["output_dir"] = args.out
        provided.add("output_dir")
    if not updates:
        return cfg
    cfg = replace(cfg, **updates, provided=frozenset(provided))
    if cfg.epsilon <= 0.0:
        raise ConfigError("epsilon must be > 0 (singular tracking problem)")
    if cfg.omega <= 0.0:
        raise ConfigError("omega must be > 0")
    if cfg.T <= 0.0:
        raise ConfigError("T must be > 0")
    if cfg.steps < 1:
        raise ConfigError("steps must be >= 1")
    return cfg


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------


def write_csv(
    traj: Trajectory,
    controls: Optional[np.ndarray],
    reference: Optional[np.ndarray],
    path,
) -> None:
    """Write the fixed 18-column CSV (states, controls, costates, reference).

    Floats are formatted with shortest round-trip precision so a re-parse
    reproduces the arrays bit-exactly. Reduced 5-column trajectories get
    zero costates; missing controls/reference columns are zero-filled.
    """
    npts = traj.times.shape[0]
    states = traj.states
    if states.shape[1] == 10:
        body, costates = states[:, :5], states[:, 5:]
    elif states.shape[1] == 5:
        body, costates = states, np.zeros((npts, 5))
    else:
        raise NhtrackError(f"cannot serialize trajectory with {states.shape[1]} columns")
    if controls is None:
        controls = np.zeros((npts, 2))
    if reference is None:
        reference = np.zeros((npts, 5))
    if controls.shape[0] != npts or reference.shape[0] != npts:
        raise NhtrackError("controls/reference rows do not align with the trajectory grid")
    try:
        with open(path, "w", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            for i in range(npts):
                row = [traj.times[i], *body[i], *controls[i], *costates[i], *reference[i]]
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    except OSError as err:
        raise NhtrackError(f"cannot write CSV to {path}: {err}") from err


def read_csv(path) -> dict:
    """Re-parse a CSV written by write_csv into named float arrays."""
    with open(path, "r", newline="") as fh:
        header = fh.readline().strip()
        names = header.split(",")
        rows = [[float(tok) for tok in line.strip().split(",")] for line in fh if line.strip()]
    data = np.array(rows)
    return {name: data[:, j] for j, name in enumerate(names)}


def sample_reference(ref: ReferenceTrajectory, times: np.ndarray) -> np.ndarray:
    out = np.empty((times.shape[0], 5))
    for i, t in enumerate(times):
        q_r, v_r = ref.sample(float(t))
        out[i, :3] = q_r
        out[i, 3:] = v_r
    return out


def write_plot_script(path, csv_name: str) -> None:
    """Emit a gnuplot command file rendering states vs reference and controls."""
    panels = [
        ("x", 2, 14),
        ("y", 3, 15),
        ("z", 4, 16),
        ("v1", 5, 17),
        ("v2", 6, 18),
    ]
    lines = [
        "set datafile separator ','",
        "set terminal pngcairo size 1400,900",
        "set output 'track.png'",
        "set multiplot layout 2,3",
        "set key top left",
    ]
    for name, col, rcol in panels:
        lines.append(f"set title '{name}'")
        lines.append(
            f"plot '{csv_name}' using 1:{col} with lines lw 2 title '{name}', "
            f"'' using 1:{rcol} with lines dt 2 title '{name}_r'"
        )
    lines.append("set title 'controls'")
    lines.append(
        f"plot '{csv_name}' using 1:7 with lines lw 2 title 'u1', "
        f"'' using 1:8 with lines lw 2 title 'u2'"
    )
    lines.append("unset multiplot")
    Path(path).write_text("\n".join(lines) + "\n")


def _config_echo(cfg: ExperimentConfig) -> str:
    rows = [
        ("system", cfg.system),
        ("initial_state", " ".join(repr(v) for v in cfg.initial_state)),
        ("reference", cfg.reference),
        ("T", repr(cfg.T)),
        ("steps", cfg.steps),
        ("epsilon", repr(cfg.epsilon)),
        ("omega", repr(cfg.omega)),
        ("adjoint_mode", cfg.adjoint_mode),
        ("full_transversality", str(cfg.full_transversality).lower()),
        ("newton.tol", repr(cfg.newton_tol)),
        ("newton.max_iters", cfg.newton_max_iters),
        ("output_dir", cfg.output_dir),
        ("kernel backend", kernels.backend()),
    ]
    return "\n".join(f"  {k} = {v}" for k, v in rows)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _build_reference(cfg: ExperimentConfig) -> ReferenceTrajectory:
    if cfg.reference == KIND_LINE:
        return constant_z_line(cfg.ref_x_r, cfg.ref_z_offset, cfg.ref_speed)
    if cfg.reference == KIND_FREE_FLOW:
        s = cfg.ref_initial_state if cfg.ref_initial_state is not None else cfg.initial_state
        return free_flow(AdaptedState(q=np.array(s[:3]), v=np.array(s[3:])))
    try:
        table = (
            read_csv(cfg.ref_file) if _is_full_csv(cfg.ref_file) else _read_plain_table(cfg.ref_file)
        )
    except OSError as err:
        raise ConfigError(f"cannot read reference file {cfg.ref_file}: {err}") from err
    cols = np.column_stack([table["x"], table["y"], table["z"], table["v1"], table["v2"]])
    return tabulated(table["t"], cols)


def _is_full_csv(path) -> bool:
    with open(path) as fh:
        return fh.readline().strip() == CSV_HEADER


def _read_plain_table(path) -> dict:
    """Read a 6-column reference table: header t,x,y,z,v1,v2."""
    with open(path) as fh:
        names = fh.readline().strip().split(",")
        if names[:6] != ["t", "x", "y", "z", "v1", "v2"]:
            raise ConfigError(f"reference file {path} must start with header t,x,y,z,v1,v2")
        rows = [[float(tok) for tok in line.strip().split(",")] for line in fh if line.strip()]
    data = np.array(rows)
    return {name: data[:, j] for j, name in enumerate(names[:6])}


def _build_problem(cfg: ExperimentConfig) -> TrackingProblem:
    from .particle import particle_system

    s0 = AdaptedState(q=np.array(cfg.initial_state[:3]), v=np.array(cfg.initial_state[3:]))
    return TrackingProblem(
        sys=particle_system(),
        ref=_build_reference(cfg),
        epsilon=cfg.epsilon,
        omega=cfg.omega,
        T=cfg.T,
        s0=s0,
        N=cfg.steps,
        adjoint_mode=cfg.adjoint_mode,
        full_transversality=cfg.full_transversality,
    )


def _warn_ignored(cfg: ExperimentConfig, command: str) -> None:
    for key in _TRACK_ONLY_KEYS:
        if key in cfg.provided:
            print(
                f"warning: key '{key}' is ignored by command '{command}'",
                file=sys.stderr,
            )


def cmd_simulate(cfg: ExperimentConfig) -> int:
    h = cfg.T / cfg.steps
    x0 = np.array(cfg.initial_state)
    states = kernels.rollout_reduced(x0, h, cfg.steps)
    times = h * np.arange(cfg.steps + 1)
    traj = Trajectory(times=times, states=states)
    ref = sample_reference(_build_reference(cfg), times)
    out = Path(cfg.output_dir) / "simulate.csv"
    write_csv(traj, None, ref, out)
    print(f"wrote {out}")
    return 0


def cmd_analytic(cfg: ExperimentConfig) -> int:
    h = cfg.T / cfg.steps
    times = h * np.arange(cfg.steps + 1)
    s0 = AdaptedState(q=np.array(cfg.initial_state[:3]), v=np.array(cfg.initial_state[3:]))
    params = analytic_constants(s0)
    states = np.empty((cfg.steps + 1, 5))
    for i, t in enumerate(times):
        s = analytic_flow(params, float(t))
        states[i, :3] = s.q
        states[i, 3:] = s.v
    traj = Trajectory(times=times, states=states)
    ref = sample_reference(_build_reference(cfg), times)
    out = Path(cfg.output_dir) / "analytic.csv"
    write_csv(traj, None, ref, out)
    print(f"wrote {out}")
    return 0


def cmd_track(cfg: ExperimentConfig) -> int:
    prob = _build_problem(cfg)
    newton = NewtonConfig(tol_residual=cfg.newton_tol, max_iters=cfg.newton_max_iters)
    report = solve_tracking(prob, cfg=newton)
    out_dir = Path(cfg.output_dir)
    ref = sample_reference(prob.ref, report.trajectory.times)
    csv_path = out_dir / "track.csv"
    write_csv(report.trajectory, report.controls, ref, csv_path)
    write_plot_script(out_dir / "plot.gp", "track.csv")

    zT = report.trajectory.final_state()
    q_rT, v_rT = prob.ref.sample(prob.T)
    terminal = np.concatenate([zT[:3] - q_rT, zT[3:5] - v_rT])
    baseline = uncontrolled_cost(prob)
    lines = [
        "tracking report",
        "===============",
        "configuration:",
        _config_echo(cfg),
        "",
        f"converged: {report.converged}",
        f"iterations: {report.iterations}",
        f"residual norms: {', '.join('%.6e' % v for v in report.residual_norms)}",
        f"alpha*: {' '.join(repr(float(v)) for v in report.alpha_star)}",
        f"cost J: {report.cost!r}",
        f"cost of u=0 rollout: {baseline!r}",
        "terminal errors (x, y, z, v1, v2): "
        + " ".join("%.6e" % abs(v) for v in terminal),
    ]
    if report.message:
        lines.append(f"note: {report.message}")
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n")
    print(f"wrote {csv_path}")
    print(f"wrote {out_dir / 'report.txt'}")
    print(f"wrote {out_dir / 'plot.gp'}")
    if not report.converged:
        print(f"track did not converge: {report.message}", file=sys.stderr)
        return 2
    return 0


def cmd_check(cfg: ExperimentConfig) -> int:
    results = checks_mod.run_checks()
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name.ljust(width)}  {status}  {r.detail}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 3


COMMANDS = {
    "simulate": cmd_simulate,
    "analytic": cmd_analytic,
    "track": cmd_track,
    "check": cmd_check,
}


def run(command: str, cfg: ExperimentConfig) -> int:
    """Execute one command against a validated config; returns exit status."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command '{command}'")
    if command != "track":
        _warn_ignored(cfg, command)
    os.makedirs(cfg.output_dir, exist_ok=True)
    return COMMANDS[command](cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nhtrack",
        description=(
            "Trajectory tracking for the constrained particle via indirect "
            "shooting. With no config file, every command runs the bundled "
            "benchmark experiment (initial state 0.5 0.2 0.7 0.5 0.4, "
            "reference (1, 0, t+1; 0, 1), T=4, epsilon=7)."
        ),
        epilog=(
            "The terminal-cost weight omega defaults to 1 and is configurable "
            "via 'omega = ...' or --omega. Exit codes: 0 success, 1 config "
            "error, 2 non-convergence, 3 internal error."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("simulate", "integrate the uncontrolled reduced flow and write CSV"),
        ("analytic", "sample the closed-form flow and write CSV"),
        ("track", "solve the optimal tracking problem and write CSV + report"),
        ("check", "run the library invariant suite"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="path to key = value config file")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--T", type=float, help="horizon override")
        p.add_argument("--epsilon", type=float, help="control-effort weight override")
        p.add_argument("--omega", type=float, help="terminal-cost weight override (default 1)")
        p.add_argument("--steps", type=int, help="integration step count override")
    return parser


def main(argv=None) -> int:
    # reserved: the solver has no randomness, so the seedless flag is a no-op
    os.environ.get("NHTRACK_SEEDLESS")
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            try:
                text = Path(args.config).read_text()
            except OSError as err:
                print(f"config error: cannot read {args.config}: {err}", file=sys.stderr)
                return 1
            cfg = parse_config(text)
        else:
            cfg = ExperimentConfig()
        cfg = apply_overrides(cfg, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    try:
        return run(args.command, cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except NhtrackError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except Exception as err:  # pragma: no cover - defensive
        print(f"internal error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
