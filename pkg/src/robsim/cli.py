"""Command-line front end: ``robsim <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O or
file-format error. The error class name is printed on standard error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import assimilation, diagnostics, fieldio
from .config import build_model, parse_config, parse_config_text, step_control
from .errors import FormatError, InsufficientData, NumericalError, RobsimError
from .interpolant import InterpolantSpec
from .solver import State, integrate

log = logging.getLogger("robsim")

RESOLVED = "config.resolved"
SNAPDIR = "snapshots"


# -- trajectory directories --------------------------------------------------------------

def snapshot_bytes(state: State) -> bytes:
    buf = fieldio._Buffer()
    fieldio.write_record(buf, state.v.u1, "u1", state.t)
    fieldio.write_record(buf, state.v.u2, "u2", state.t)
    fieldio.write_record(buf, state.Z, "Z", state.t)
    return buf.getvalue()


def write_snapshot(path, state: State) -> None:
    fieldio.atomic_write_bytes(path, snapshot_bytes(state))


def read_snapshot(path) -> State:
    from .grid import VelocityField

    with open(path, "rb") as fh:
        recs = [fieldio.read_record(fh) for _ in range(3)]
        if fh.read(1):
            raise FormatError(f"{path}: trailing data after snapshot")
    names = tuple(r.name for r in recs)
    if names != ("u1", "u2", "Z"):
        raise FormatError(f"{path}: expected records u1,u2,Z, got {','.join(names)}")
    return State(recs[0].time, VelocityField(recs[0].values, recs[1].values), recs[2].values)


def write_trajectory(out: Path, cfg, traj) -> None:
    out.mkdir(parents=True, exist_ok=True)
    fieldio.atomic_write_text(out / RESOLVED, cfg.resolved_text())
    fieldio.atomic_write_text(out / "series.csv", diagnostics.samples_to_csv(traj.samples))
    if cfg["output.snapshots"]:
        for k, s in enumerate(traj.snapshots):
            write_snapshot(out / SNAPDIR / f"snap_{k:06d}.rob", s)
    write_snapshot(out / "final.rob", traj.final)


def load_trajectory(path):
    """``(cfg, states)`` from a directory written by ``simulate``."""
    path = Path(path)
    if not (path / RESOLVED).is_file():
        raise FormatError(f"{path}: no {RESOLVED}; not a trajectory directory")
    cfg = parse_config_text((path / RESOLVED).read_text(), str(path / RESOLVED))
    files = sorted((path / SNAPDIR).glob("snap_*.rob"))
    if not files:
        raise InsufficientData(f"{path}: trajectory holds no snapshots")
    return cfg, [read_snapshot(f) for f in files]


# -- commands ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    model = build_model(cfg)
    from .config import initial_state

    out = Path(args.out)
    last = [initial_state(cfg, model)]

    def keep(n, state):
        last[0] = state

    try:
        traj = integrate(model, last[0], step_control(cfg), callback=keep)
    except NumericalError:
        # dump the last good state before reporting the failure
        out.mkdir(parents=True, exist_ok=True)
        fieldio.atomic_write_text(out / RESOLVED, cfg.resolved_text())
        write_snapshot(out / "abort.rob", last[0])
        raise
    write_trajectory(out, cfg, traj)
    print(f"simulate: {traj.steps} steps to t={traj.final.t!r}, {len(traj.snapshots)} snapshots")
    return 0


def cmd_twin(args) -> int:
    cfg = parse_config(args.config)
    if args.lambda_ is not None:
        cfg = cfg.replace(nudging__lambda=args.lambda_)
    if args.interp is not None:
        cfg = cfg.replace(nudging__interp=args.interp)
    res = assimilation.twin_experiment(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fieldio.atomic_write_text(out / RESOLVED, cfg.resolved_text())
    fieldio.atomic_write_text(out / "errors.csv", res.series.to_csv())
    write_snapshot(out / "reference_final.rob", res.reference)
    write_snapshot(out / "nudged_final.rob", res.nudged)
    for k, (r, n) in enumerate(res.snapshots):
        write_snapshot(out / SNAPDIR / f"reference_{k:06d}.rob", r)
        write_snapshot(out / SNAPDIR / f"nudged_{k:06d}.rob", n)
    lines = [f"steps = {res.steps}", f"E_initial = {res.series.E[0]!r}", f"E_final = {res.series.E[-1]!r}"]
    try:
        fit = assimilation.estimate_decay_rate(res.series.t, res.series.E)
        lines += [f"beta_hat = {fit.beta_hat!r}", f"r_squared = {fit.r_squared!r}", f"prefactor = {fit.prefactor!r}"]
    except InsufficientData as exc:
        lines.append(f"# decay fit skipped: {exc}")
    fieldio.atomic_write_text(out / "summary.txt", "\n".join(lines) + "\n")
    print("twin: " + ", ".join(lines[:3]))
    return 0


def cmd_observe(args) -> int:
    cfg, states = load_trajectory(args.traj)
    from .config import domain

    spec = InterpolantSpec.parse(args.interp)
    stream = assimilation.export_observations(states, spec, args.every, domain(cfg))
    assimilation.write_stream(stream, args.out)
    print(f"observe: {len(stream)} records")
    return 0


def cmd_assimilate(args) -> int:
    cfg = parse_config(args.config)
    if args.lambda_ is not None:
        cfg = cfg.replace(nudging__lambda=args.lambda_)
    stream = assimilation.ingest_observations(args.obs)
    res = assimilation.assimilate_from_stream(cfg, stream)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fieldio.atomic_write_text(out / RESOLVED, cfg.resolved_text())
    fieldio.atomic_write_text(out / "misfit.csv", res.to_csv())
    write_snapshot(out / "final.rob", res.final)
    print(f"assimilate: {res.steps} steps, {len(stream)} observations")
    return 0


def cmd_diagnose(args) -> int:
    cfg, states = load_trajectory(args.traj)
    model = build_model(cfg)
    samples = [diagnostics.sample_state(model, s) for s in states]
    report = diagnostics.DiagnosticsReport.from_samples(samples)
    fieldio.atomic_write_text(args.out, report.to_csv())
    p = model.params
    if 0 < p.alpha < 1:
        mp = diagnostics.max_principle_check(samples, p.alpha, model.boundary.linf())
        print(f"diagnose: max principle {'pass' if mp.passed else 'FAIL'} bound={mp.bound!r} margin={mp.margin!r}")
    print(f"diagnose: {len(samples)} samples")
    return 0


def cmd_tune(args) -> int:
    cfg = parse_config(args.config)
    res = assimilation.tune(cfg)
    fieldio.atomic_write_text(args.out, res.to_text())
    print(f"tune: lambda={res.Lambda!r} interp={res.spec}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robsim", description="Rotating Oberbeck-Boussinesq simulator with nudging.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a configuration")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("twin", help="twin experiment with a nudged copy")
    s.add_argument("--config", required=True)
    s.add_argument("--lambda", dest="lambda_", type=float)
    s.add_argument("--interp")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_twin)

    s = sub.add_parser("observe", help="export coarse observations of a trajectory")
    s.add_argument("--traj", required=True)
    s.add_argument("--interp", required=True)
    s.add_argument("--every", required=True, type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_observe)

    s = sub.add_parser("assimilate", help="nudge towards an observation file")
    s.add_argument("--config", required=True)
    s.add_argument("--obs", required=True)
    s.add_argument("--lambda", dest="lambda_", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_assimilate)

    s = sub.add_parser("diagnose", help="energy, maximum-principle and norm report")
    s.add_argument("--traj", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("tune", help="search for a nudging strength and resolution")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_tune)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RobsimError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
