"""Command-line front end.

    crosskit run <scenario.json> [--out DIR] [--threads N]
    crosskit validate <scenario.json>
    crosskit selftest [--skip-slow]

``run`` writes one CSV per command.  Exit status: 0 on success, 1 when a
``validate`` command or the self-test reports a failed check, 2 on schema
errors, 3 on solver errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from crosskit import __version__
from crosskit.continuum import (
    ContinuumSystem,
    CouplingKernel,
    analytic_special_value,
    dressed_continuum_green,
    effective_potential,
)
from crosskit.errors import CrosskitError
from crosskit.greens_core import green_evaluator
from crosskit.multichannel import (
    ChannelSpec,
    MultiChannelSystem,
    dress_direct,
    dress_sequential,
    dressing_determinant,
    scatter_multi,
    time_reconstruct,
)
from crosskit.oracle import matching_solve
from crosskit.scenario import SchemaError, build_potential, check_output_dir, grid_values, load
from crosskit.two_state import DeltaCoupling, TwoChannelSystem, denominator, scatter_two
from crosskit.wavepacket import GaussianPacket

EXIT_OK, EXIT_FAILED, EXIT_SCHEMA, EXIT_SOLVER = 0, 1, 2, 3


def fmt(v):
    # +0.0 folds negative zero so equal values print identically
    return format(float(v) + 0.0, ".15g")


class Table:
    def __init__(self, header):
        self.header = list(header)
        self.rows = []

    def add(self, *values):
        self.rows.append([v if isinstance(v, str) else fmt(v) for v in values])

    def write(self, path, meta):
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(f"# {meta}\n")
            fh.write(",".join(self.header) + "\n")
            for row in self.rows:
                fh.write(",".join(row) + "\n")


class Runner:
    def __init__(self, scenario, threads=None):
        self.sc = scenario
        self.threads = threads
        raw = scenario.raw
        m = scenario.mass
        self.driver = build_potential(raw["driver"], m)
        self.channels = tuple(
            ChannelSpec(build_potential(c["potential"], m), float(c["strength"]), float(c["point"]))
            for c in raw.get("channels", [])
        )
        self.system = MultiChannelSystem(self.driver, self.channels, scenario.convention)
        self.continuum = None
        cont = raw.get("continuum")
        if cont is not None:
            amp = float(cont.get("amplitude", 1.0))
            if cont["kernel"] == "paper_exponential":
                kern = CouplingKernel.paper_exponential(amp)
            else:
                kern = CouplingKernel.from_file(os.path.join(scenario.directory, cont["table"]),
                                                amp, float(cont.get("tail_bound", 0.0)))
            self.continuum = ContinuumSystem(self.driver, float(cont.get("attach_point", 0.0)),
                                             kern, convention=scenario.convention)

    def two_state(self):
        ch = self.channels[0]
        return TwoChannelSystem(self.driver, ch.potential, DeltaCoupling(ch.strength, ch.point),
                                self.sc.convention)

    def green(self, cmd):
        xs = grid_values(cmd["x"])
        eta = float(cmd.get("eta", 0.0))
        bare = green_evaluator(self.driver, self.sc.convention)
        t = Table(["energy", "x", "x0", "G0_re", "G0_im", "G_re", "G_im"])
        for e in grid_values(cmd["energies"]):
            w = complex(e, eta)
            dressed = dress_direct(self.system, w) if self.channels else None
            for x in xs:
                x0 = float(cmd.get("x0", x))
                g0 = bare(x, x0, w)
                if dressed is not None:
                    g = dressed(x, x0)
                elif self.continuum is not None:
                    g = dressed_continuum_green(x, x0, w, self.continuum)
                else:
                    g = g0
                t.add(e, x, x0, g0.real, g0.imag, g.real, g.imag)
        return t

    def solve2(self, cmd):
        sys2 = self.two_state()
        inc = cmd.get("incidence", "left")
        t = Table(["energy", "R", "T", "transfer", "flux_sum", "abs_denominator"])
        for e in grid_values(cmd["energies"]):
            r = scatter_two(e, sys2, inc)
            t.add(e, r.R, r.T, r.transfer[0], r.flux_sum, abs(denominator(e, sys2)))
        return t

    def solven(self, cmd):
        inc = cmd.get("incidence", "left")
        n = len(self.channels)
        t = Table(["energy", "R", "T"] + [f"transfer_{j + 2}" for j in range(n)] + ["flux_sum"])
        for e in grid_values(cmd["energies"]):
            r = scatter_multi(e, self.system, inc)
            t.add(e, r.R, r.T, *r.transfer, r.flux_sum)
        return t

    def continuum_cmd(self, cmd):
        eta = float(cmd.get("eta", 0.0))
        special = self.continuum.kernel.form == "paper_exponential"
        cols = ["omega_re", "omega_im", "V_re", "V_im"]
        if special:
            cols += ["closed_form_re", "closed_form_im"]
        t = Table(cols)
        for f in grid_values(cmd["frequencies"]):
            w = complex(f, eta)
            v = effective_potential(w, self.continuum)
            row = [w.real, w.imag, v.real, v.imag]
            if special:
                c = analytic_special_value(w, self.continuum.kernel.amplitude)
                row += [c.real, c.imag]
            t.add(*row)
        return t

    def timedomain(self, cmd):
        pk = cmd["packet"]
        packet = GaussianPacket(float(pk["center"]), float(pk["momentum"]), float(pk["width"]))
        times = grid_values(cmd["times"])
        rng = cmd.get("omega_range")
        res = time_reconstruct(self.system, packet, times, eta=cmd.get("eta"),
                               omega_step=cmd.get("omega_step"),
                               omega_range=None if rng is None else tuple(rng),
                               threads=self.threads)
        t = Table(["t", "survival", "amplitude_re", "amplitude_im"])
        for ti, s, a in zip(res.times, res.survival, res.amplitude):
            t.add(ti, s, a.real, a.imag)
        return t

    def sweep(self, cmd):
        t = Table(["energy", "abs_determinant", "T"])
        for e in grid_values(cmd["energies"]):
            t.add(e, abs(dressing_determinant(e, self.system)), scatter_multi(e, self.system).T)
        return t

    def validate(self, cmd):
        """Cross-check the scenario against the independent routes; returns (table, all_passed)."""
        t = Table(["check", "energy", "value", "tolerance", "passed"])
        ok = True

        def record(name, e, value, tol):
            nonlocal ok
            passed = bool(value <= tol)
            ok &= passed
            t.add(name, e, value, tol, "yes" if passed else "no")

        lo, _ = self.driver.asymptotes()
        for e in grid_values(cmd["energies"]):
            if self.channels:
                x = self.channels[0].point
                seq = dress_sequential(self.system, e)(x + 0.37, x - 0.61)
                dire = dress_direct(self.system, e)(x + 0.37, x - 0.61)
                record("sequential_vs_direct", e, abs(seq - dire) / max(abs(dire), 1e-300), 1e-10)
                if lo is not None and e > lo:
                    a = scatter_multi(e, self.system)
                    b = matching_solve(self.system, e)
                    record("green_vs_matching", e,
                           float(np.max(np.abs(a.probabilities() - b.probabilities()))), 1e-10)
                    record("flux_sum", e, abs(a.flux_sum - 1.0), 1e-12)
                    if len(self.channels) == 1:
                        c = scatter_two(e, self.two_state())
                        record("two_state_vs_matching", e,
                               float(np.max(np.abs(c.probabilities() - b.probabilities()))), 1e-10)
            elif self.continuum is not None:
                if self.continuum.kernel.form == "paper_exponential" and e > 0:
                    v = effective_potential(e, self.continuum)
                    c = analytic_special_value(e, self.continuum.kernel.amplitude)
                    record("continuum_closed_form", e, abs(v - c) / max(abs(c), 1e-300), 1e-8)
            else:
                g = green_evaluator(self.driver, self.sc.convention)
                record("green_symmetry", e, abs(g(0.3, -0.4, e) - g(-0.4, 0.3, e)), 1e-10)
        print(f"{'check':<24} {'energy':>12} {'value':>12} {'tol':>8}  result")
        for row in t.rows:
            print(f"{row[0]:<24} {row[1]:>12} {float(row[2]):>12.3e} {row[3]:>8}  "
                  f"{'PASS' if row[4] == 'yes' else 'FAIL'}")
        return t, ok


def run(path, out_dir=".", threads=None):
    try:
        scenario = load(path)
    except SchemaError as exc:
        for p in exc.problems:
            print(f"schema: {p}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"schema: <file>: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    problems = check_output_dir(out_dir, scenario)
    if problems:
        for p in problems:
            print(f"schema: {p}", file=sys.stderr)
        return EXIT_SCHEMA
    status = EXIT_OK
    try:
        runner = Runner(scenario, threads)
        for i, cmd in enumerate(scenario.raw["commands"]):
            kind = cmd["type"]
            if kind == "validate":
                table, ok = runner.validate(cmd)
                if not ok:
                    status = EXIT_FAILED
            elif kind == "continuum":
                table = runner.continuum_cmd(cmd)
            else:
                table = getattr(runner, kind)(cmd)
            name = cmd.get("output") or f"{i:02d}_{kind}.csv"
            table.write(os.path.join(out_dir, name),
                        f"crosskit {__version__} scenario_sha256={scenario.sha256} "
                        f"command={kind} index={i}")
    except CrosskitError as exc:
        print(f"error: {exc.module}:{exc.kind}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: cli:{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return status


def validate_file(path):
    try:
        load(path)
    except SchemaError as exc:
        for p in exc.problems:
            print(f"schema: {p}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"schema: <file>: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    print("OK")
    return EXIT_OK


def selftest(skip_slow=False):
    from crosskit.acceptance import run_all

    results = run_all(skip_slow=skip_slow)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def _threads(value):
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("thread count must be >= 1")
    return n


def main(argv=None):
    parser = argparse.ArgumentParser(prog="crosskit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"crosskit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute every command of a scenario")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default=".", help="output directory (default: current)")
    p_run.add_argument("--threads", type=_threads, default=None,
                       help="worker threads (default: $CROSSKIT_THREADS or 1)")
    p_val = sub.add_parser("validate", help="check a scenario against the schema")
    p_val.add_argument("scenario")
    p_self = sub.add_parser("selftest", help="run the acceptance checks")
    p_self.add_argument("--skip-slow", action="store_true",
                        help="skip the time-domain cross-check")
    args = parser.parse_args(argv)
    if args.command == "run":
        threads = args.threads
        if threads is None and os.environ.get("CROSSKIT_THREADS"):
            try:
                threads = _threads(os.environ["CROSSKIT_THREADS"])
            except (ValueError, argparse.ArgumentTypeError):
                parser.error("CROSSKIT_THREADS must be a positive integer")
        return run(args.scenario, args.out, threads)
    if args.command == "validate":
        return validate_file(args.scenario)
    return selftest(args.skip_slow)


if __name__ == "__main__":
    sys.exit(main())
