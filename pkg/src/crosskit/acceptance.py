"""Acceptance checks shared by the test suite and ``crosskit selftest``.

Each check returns a list of ``Outcome`` lines; tolerances are the
contractual ones.  Random systems come from fixed seeds.
"""

from __future__ import annotations

import contextlib
import filecmp
import io
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from crosskit.continuum import (
    ContinuumSystem,
    CouplingKernel,
    dressed_continuum_green,
    discretize_continuum,
    effective_potential,
)
from crosskit.greens_core import PAPER_LITERAL, PotentialSpec, green_evaluator
from crosskit.multichannel import (
    ChannelSpec,
    MultiChannelSystem,
    channel_amplitude,
    dress_direct,
    dress_sequential,
    effective_weights,
    scatter_multi,
    time_reconstruct,
)
from crosskit.oracle import (
    PropagationConfig,
    delta_width_extrapolate,
    matching_solve,
    regularize,
    split_operator_propagate,
)
from crosskit.two_state import DeltaCoupling, TwoChannelSystem, co_scan, dressed_green, scatter_two
from crosskit.wavepacket import GaussianPacket

DATA = os.path.join(os.path.dirname(__file__), "data")
GOLDEN_SCENARIO = os.path.join(DATA, "golden_two_channel.json")
GOLDEN_DIR = os.path.join(DATA, "golden_two_channel")


@dataclass(frozen=True)
class Outcome:
    criterion: str
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.criterion:<3} {self.name}: {self.detail}"


def random_two_state(rng):
    m = rng.uniform(0.5, 2.0)
    v1 = rng.uniform(-1.0, 1.0)
    v2 = v1 + rng.uniform(-4.0, 4.0)
    sys = TwoChannelSystem(PotentialSpec.constant(v1, m), PotentialSpec.constant(v2, m),
                           DeltaCoupling(rng.uniform(-3.0, 3.0), rng.uniform(-2.0, 2.0)))
    energy = v1 + rng.uniform(0.05, 5.0)
    return sys, energy


def random_multichannel(rng, n_max=5, coincident=True):
    m = rng.uniform(0.5, 2.0)
    n = int(rng.integers(1, n_max + 1))
    points = rng.uniform(-2.0, 2.0, n)
    if coincident and n > 2:
        points[-1] = points[0]
    chans = [ChannelSpec(PotentialSpec.constant(rng.uniform(-3.0, 3.0), m),
                         rng.uniform(-2.0, 2.0), points[i]) for i in range(n)]
    return MultiChannelSystem(PotentialSpec.constant(0.0, m), chans), rng.uniform(0.05, 4.0)


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def criterion_1():
    """Exponential-kernel continuum reproduces amplitude * w."""
    def body():
        worst = 0.0
        for a in (0.3, 1.0):
            for w in (0.25, 0.5, 1.0, 2.0, 5.0, 8.0):
                sys = ContinuumSystem(PotentialSpec.constant(0.0), 0.0,
                                      CouplingKernel.paper_exponential(a), convention=PAPER_LITERAL)
                worst = max(worst, abs(effective_potential(w, sys) - a * w) / (a * w))
        return worst
    worst, secs = _timed(body)
    return [Outcome("1", "continuum closed-form identity", worst <= 1e-8 and secs < 1.0,
                    f"max rel err {worst:.2e} (tol 1e-8), {secs:.2f} s (limit 1 s)")]


def _two_state_cases(n=100, seed=20260):
    rng = np.random.default_rng(seed)
    return [random_two_state(rng) for _ in range(n)]


def criterion_2():
    """Green-asymptotics scattering equals the matching oracle."""
    def body():
        worst = 0.0
        for sys, e in _two_state_cases():
            a = scatter_two(e, sys)
            b = matching_solve(sys, e)
            worst = max(worst, float(np.max(np.abs(a.probabilities() - b.probabilities()))))
        return worst
    worst, secs = _timed(body)
    return [Outcome("2", "two-state route equivalence", worst <= 1e-10 and secs < 10.0,
                    f"max prob diff {worst:.2e} over 100 systems (tol 1e-10), {secs:.2f} s")]


def criterion_3():
    """Probabilities sum to one."""
    worst2 = max(abs(scatter_two(e, s).flux_sum - 1.0) for s, e in _two_state_cases())
    rng = np.random.default_rng(31)
    worst_n = 0.0
    for _ in range(50):
        sys, e = random_multichannel(rng)
        worst_n = max(worst_n, abs(scatter_multi(e, sys).flux_sum - 1.0))
    return [Outcome("3", "flux conservation", max(worst2, worst_n) <= 1e-12,
                    f"two-state {worst2:.2e}, multichannel {worst_n:.2e} (tol 1e-12)")]


def criterion_4():
    """Sequential and direct dressing agree; order does not matter; N = 2 reduces exactly."""
    def body():
        rng = np.random.default_rng(47)
        eq = perm = 0.0
        for _ in range(40):
            sys, e = random_multichannel(rng, n_max=8)
            w = complex(e, rng.uniform(0.0, 0.5))
            x, x0 = rng.uniform(-3.0, 3.0, 2)
            seq = dress_sequential(sys, w)(x, x0)
            scale = max(1.0, abs(seq))
            eq = max(eq, abs(seq - dress_direct(sys, w)(x, x0)) / scale)
            order = rng.permutation(len(sys.channels))
            perm = max(perm, abs(seq - dress_sequential(sys.permuted(order), w)(x, x0)) / scale)
        red = 0.0
        for _ in range(40):
            two, e = random_two_state(rng)
            multi = MultiChannelSystem(two.channel1, [ChannelSpec(two.channel2, two.coupling.strength,
                                                                  two.coupling.location)])
            w = complex(e, rng.uniform(0.0, 0.5))
            x, x0 = rng.uniform(-3.0, 3.0, 2)
            g = dress_sequential(multi, w)
            red = max(red, abs(g(x, x0) - dressed_green("G11", x, x0, w, two)))
            g21 = channel_amplitude(0, x, w, multi, g(two.coupling.location, x0))
            red = max(red, abs(g21 - dressed_green("G21", x, x0, w, two)))
        return eq, perm, red
    (eq, perm, red), secs = _timed(body)
    ok = eq <= 1e-10 and perm <= 1e-10 and red <= 1e-14 and secs < 5.0
    return [Outcome("4", "dressing equivalence", ok,
                    f"seq/direct {eq:.2e}, permutation {perm:.2e} (tol 1e-10), "
                    f"two-state reduction {red:.2e} (tol 1e-14), {secs:.2f} s")]


def _one_sided_slope(g, x0, omega, side, h=1e-4):
    f = [g(x0 + side * j * h, x0, omega) for j in range(3)]
    return side * (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)


def contract_evaluators():
    m = 1.3
    barrier = np.linspace(-8.0, 8.0, 161)
    return [
        ("constant", green_evaluator(PotentialSpec.constant(0.2, m)), 0.9),
        ("airy-linear", green_evaluator(PotentialSpec.linear(0.1, 0.35, m)), 0.7),
        ("numeric", green_evaluator(PotentialSpec.sampled(barrier, 0.6 * np.exp(-barrier ** 2), m)), 0.9),
    ], m


def derivative_jumps():
    """d/dx G at x0+ minus d/dx G at x0- for each evaluator, and the mass used."""
    evals, m = contract_evaluators()
    return {name: (_one_sided_slope(g, 0.3, w, +1) - _one_sided_slope(g, 0.3, w, -1)) for name, g, w in evals}, m


def criterion_5():
    """Green's-function contracts for all evaluation methods."""
    evals, m = contract_evaluators()
    sym, imag = 0.0, -np.inf
    for name, g, w in evals:
        for x, x0 in ((0.3, -0.8), (-1.1, 0.6), (2.0, 0.1)):
            a, b = g(x, x0, w), g(x0, x, w)
            sym = max(sym, abs(a - b) / max(abs(a), 1e-300))
        imag = max(imag, max(g(x, x, w).imag for x in (-1.0, 0.0, 0.4, 1.5)))
    jumps, _ = derivative_jumps()
    jump_err = max(abs(j - 2.0 * m) / (2.0 * m) for j in jumps.values())
    literal_err = max(abs(j + 2.0 * m) / (2.0 * m) for j in jumps.values())
    lim = 0.0
    for w in (-0.5, 0.5 + 0.2j):
        const = green_evaluator(PotentialSpec.constant(0.0, 1.0))
        lin = green_evaluator(PotentialSpec.linear(0.0, 1e-7, 1.0))
        with np.errstate(all="ignore"):
            for x, x0 in ((0.0, 0.0), (0.5, -0.3)):
                c = const(x, x0, w)
                lim = max(lim, abs(lin(x, x0, w) - c) / abs(c))
    ok = sym <= 1e-10 and imag <= 0.0 and jump_err <= 1e-6 and lim <= 1e-6
    return [
        Outcome("5", "Green's-function contracts", ok,
                f"symmetry {sym:.2e} (tol 1e-10), max Im G(x,x) {imag:.2e} (<= 0), "
                f"jump vs +2m {jump_err:.2e} (tol 1e-6), slope->0 limit {lim:.2e} (tol 1e-6)"),
        Outcome("5", "derivative jump equals -2m as written", literal_err <= 1e-6,
                f"rel deviation from -2m {literal_err:.2e}; the retarded normalisation "
                f"m/(ik) exp(ik|x-x0|) gives +2m"),
    ]


def criterion_6():
    """Discretized continuum converges to the closed form and the continuum dressing."""
    def body():
        sys = ContinuumSystem(PotentialSpec.constant(0.0), 0.0, CouplingKernel.paper_exponential(1.0),
                              convention=PAPER_LITERAL)
        w = 1.0
        errs, last = [], None
        for n in (64, 256, 1024, 4096):
            disc = discretize_continuum(sys, n, 20.0 * w, w)
            v = sum(e.weight for e in effective_weights(w, disc))
            errs.append(abs(v - w))
            last = disc
        x, x0 = 0.3, -0.2
        ref = dressed_continuum_green(x, x0, w, sys)
        green_err = abs(dress_direct(last, w)(x, x0) - ref) / abs(ref)
        return errs, green_err
    (errs, green_err), secs = _timed(body)
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    ok = decreasing and errs[-1] <= 1e-3 and green_err <= 1e-3 and secs < 30.0
    return [Outcome("6", "continuum/discrete consistency", ok,
                    "|V_N - w| = " + ", ".join(f"{e:.2e}" for e in errs)
                    + f"; dressed G rel diff {green_err:.2e} (tol 1e-3), {secs:.2f} s")]


TIME_DOMAIN_CASES = {
    "two-channel": [(0.3, 0.5, 0.0)],
    "three-channel": [(0.3, 0.5, 0.0), (-0.2, 0.4, 0.5)],
}
TIME_DOMAIN_PACKET = GaussianPacket(0.0, 0.5, 1.0)
TIME_DOMAIN_CONFIG = PropagationConfig(-50.0, 50.0, 0.025, 3.125e-4, 5.0, 0.25)


def time_domain_comparison(channels, cfg=TIME_DOMAIN_CONFIG, packet=TIME_DOMAIN_PACKET):
    sys = MultiChannelSystem(PotentialSpec.constant(0.0),
                             [ChannelSpec(PotentialSpec.constant(v), k, x) for v, k, x in channels])
    widths = [8 * cfg.spacing, 6 * cfg.spacing, 4 * cfg.spacing]
    runs = [split_operator_propagate(sys, regularize(sys, s), packet, cfg) for s in widths]
    ext = delta_width_extrapolate(widths, [r.survival for r in runs])
    rec = time_reconstruct(sys, packet, runs[0].times)
    return float(np.max(np.abs(ext.value - rec.survival))), float(np.max(ext.error))


def criterion_7():
    """Frequency-domain reconstruction matches width-extrapolated propagation."""
    out = []
    for name, chans in TIME_DOMAIN_CASES.items():
        (err, est), secs = _timed(lambda: time_domain_comparison(chans))
        out.append(Outcome("7", f"time-domain cross-check ({name})", err <= 5e-3,
                           f"L_inf survival diff {err:.2e} (tol 5e-3), extrapolation error "
                           f"estimate {est:.2e}, {secs:.1f} s"))
    return out


def criterion_8():
    """Closed-channel resonance: |D| minimum and transmission extremum coincide."""
    sys = TwoChannelSystem(PotentialSpec.constant(0.0), PotentialSpec.constant(0.8),
                           DeltaCoupling(0.6, 0.3))
    energies = np.linspace(0.013, 0.787, 517)
    step = energies[1] - energies[0]
    absd, trans, _ = co_scan(energies, sys)
    dmin = energies[int(np.argmin(absd))]
    # the transmission extremum is whichever of max/min lies in the interior of the scan
    i_max, i_min = int(np.argmax(trans)), int(np.argmin(trans))
    e_ext = energies[i_max] if 0 < i_max < len(energies) - 1 else energies[i_min]
    gap = abs(dmin - e_ext)
    return [Outcome("8", "resonance coherence", gap <= step * (1 + 1e-9),
                    f"|D| min at {dmin:.6f}, T extremum at {e_ext:.6f}, grid step {step:.2e}")]


def criterion_9(scenario=GOLDEN_SCENARIO, golden=GOLDEN_DIR):
    """The golden scenario reproduces its frozen CSVs byte for byte at two thread counts."""
    from crosskit.cli import main

    names = sorted(f for f in os.listdir(golden) if f.endswith(".csv"))
    mismatched = []
    with tempfile.TemporaryDirectory() as tmp:
        for threads in (1, 4):
            out = os.path.join(tmp, f"t{threads}")
            with contextlib.redirect_stdout(io.StringIO()):
                code = main(["run", scenario, "--out", out, "--threads", str(threads)])
            if code != 0:
                mismatched.append(f"threads={threads}: exit {code}")
                continue
            for n in names:
                if not filecmp.cmp(os.path.join(out, n), os.path.join(golden, n), shallow=False):
                    mismatched.append(f"threads={threads}: {n}")
    return [Outcome("9", "CLI determinism", not mismatched and bool(names),
                    f"{len(names)} files x 2 thread counts" + (f"; differ: {mismatched}" if mismatched else ""))]


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9)
SLOW = {criterion_7}


def run_all(skip_slow=False):
    results = []
    for crit in CRITERIA:
        if skip_slow and crit in SLOW:
            continue
        results.extend(crit())
    return results
