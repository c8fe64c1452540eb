import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import IntegrationWarning, quad
from scipy.special import gamma, gammaln

from crosskit.errors import (
    BranchPointError,
    ConventionError,
    DegenerateSlope,
    DomainError,
    InvalidPotential,
    PoleError,
)
from crosskit.greens_core import (
    PAPER_LITERAL,
    RETARDED,
    ConstantGreen,
    EnergyPoint,
    GreenConvention,
    LinearGreen,
    NumericGreen,
    PotentialSpec,
    analytic_continuation,
    green_constant,
    green_evaluator,
    green_linear,
    green_numeric,
    green_spectral,
    wavenumber,
)

FREE = PotentialSpec.constant(0.0, 1.0)


def slope_jump(g, x0, omega, h=1e-4):
    fr = [g(x0 + j * h, x0, omega) for j in range(3)]
    fl = [g(x0 - j * h, x0, omega) for j in range(3)]
    right = (-3 * fr[0] + 4 * fr[1] - fr[2]) / (2 * h)
    left = (3 * fl[0] - 4 * fl[1] + fl[2]) / (2 * h)
    return right - left


def test_free_coincident_value():
    assert green_constant(0.0, 0.0, 0.5, FREE) == pytest.approx(-1j, abs=1e-15)


def test_free_propagation_phase():
    g = green_constant(2.0, -1.0, 0.5, FREE)
    assert g == pytest.approx(-1j * np.exp(3j), abs=1e-14)


def test_closed_channel_decays_and_is_real():
    g = green_constant(1.0, 0.0, -0.5, FREE)
    assert g.imag == 0.0
    assert g == pytest.approx(-np.exp(-1.0), abs=1e-15)


def test_energy_point_is_accepted():
    assert green_constant(0.0, 0.0, EnergyPoint(0.5, 0.0), FREE) == pytest.approx(-1j)


def test_paper_literal_coincident_value():
    g = green_constant(0.0, 0.0, 2.0, PotentialSpec.constant(0.5, 1.5), PAPER_LITERAL)
    assert g == pytest.approx(np.sqrt(1.5 / (2 * 1.5)), rel=1e-15)


def test_paper_literal_free_example():
    assert green_constant(0.0, 0.0, 0.5, FREE, PAPER_LITERAL) == pytest.approx(1.0, rel=1e-15)


def test_paper_literal_below_threshold_principal_root():
    g = green_constant(0.0, 0.0, -1.0, FREE, PAPER_LITERAL)
    assert g == pytest.approx(np.sqrt(complex(-0.5)), rel=1e-15)


def test_convention_parse_aliases():
    assert GreenConvention.parse("PaperLiteral") is PAPER_LITERAL
    assert GreenConvention.parse("retarded") is RETARDED
    with pytest.raises(ValueError):
        GreenConvention.parse("advanced")


def test_branch_point_rejected():
    with pytest.raises(BranchPointError):
        green_constant(0.0, 0.0, 0.3, PotentialSpec.constant(0.3))


def test_lower_half_plane_needs_continuation():
    with pytest.raises(ValueError):
        green_constant(0.0, 0.0, 0.5 - 0.1j, FREE)
    with analytic_continuation():
        g = green_constant(0.0, 0.0, 0.5 - 0.1j, FREE)
    k = np.sqrt(2 * (0.5 - 0.1j))
    assert g == pytest.approx(1 / (1j * k))


def test_wavenumber_branch():
    assert wavenumber(-0.5, 0.0, 1.0) == pytest.approx(1j)
    assert wavenumber(0.5, 0.0, 1.0) == pytest.approx(1.0)


def test_invalid_potentials():
    with pytest.raises(InvalidPotential):
        PotentialSpec("cubic")
    with pytest.raises(InvalidPotential):
        PotentialSpec.constant(0.0, mass=-1.0)
    with pytest.raises(InvalidPotential):
        PotentialSpec.sampled([0, 2, 1], [0, 0, 0])


def test_linear_rejects_zero_slope_and_paper_literal():
    with pytest.raises(DegenerateSlope):
        green_linear(0, 0, 0.5, PotentialSpec.linear(0.0, 0.0))
    with pytest.raises(ConventionError):
        LinearGreen(PotentialSpec.linear(0.0, 1.0), PAPER_LITERAL)
    with pytest.raises(ConventionError):
        NumericGreen(PotentialSpec.sampled([0, 1, 2], [0, 0, 0]), PAPER_LITERAL)


def test_evaluator_dispatch():
    assert isinstance(green_evaluator(FREE), ConstantGreen)
    assert isinstance(green_evaluator(PotentialSpec.linear(0, 0.0)), ConstantGreen)
    assert isinstance(green_evaluator(PotentialSpec.linear(0, 1.0)), LinearGreen)
    assert isinstance(green_evaluator(PotentialSpec.sampled([0, 1, 2], [0, 1, 0])), NumericGreen)


@settings(max_examples=60, deadline=None)
@given(
    m=st.floats(0.3, 3.0),
    v0=st.floats(-2.0, 2.0),
    e=st.floats(-3.0, 3.0),
    eta=st.floats(0.0, 0.5),
    x=st.floats(-4.0, 4.0),
    x0=st.floats(-4.0, 4.0),
)
def test_constant_green_contracts(m, v0, e, eta, x, x0):
    pot = PotentialSpec.constant(v0, m)
    w = complex(e, eta)
    if abs(w - v0) < 1e-3:
        return
    g = ConstantGreen(pot)
    assert abs(g(x, x0, w) - g(x0, x, w)) <= 1e-12 * abs(g(x, x0, w))
    assert g.coincident(x, w).imag <= 0.0
    assert slope_jump(g, x0, w) == pytest.approx(2 * m, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(
    m=st.floats(0.5, 2.0),
    slope=st.floats(0.05, 2.0).flatmap(lambda s: st.sampled_from([s, -s])),
    e=st.floats(-2.0, 2.0),
    x=st.floats(-2.0, 2.0),
    x0=st.floats(-2.0, 2.0),
)
def test_linear_green_contracts(m, slope, e, x, x0):
    pot = PotentialSpec.linear(0.1, slope, m)
    g = LinearGreen(pot)
    a = g(x, x0, e)
    assert abs(a - g(x0, x, e)) <= 1e-10 * abs(a)
    # under the ramp the exact Im G is exponentially small; allow rounding
    c = g.coincident(x, e)
    assert c.imag <= 1e-12 * abs(c)
    assert slope_jump(g, x0, e) == pytest.approx(2 * m, rel=1e-6)


def test_linear_matches_numeric_integration():
    # Oracle: two-sided integration of the same ramp sampled on a fine grid.
    pot = PotentialSpec.linear(0.0, 0.5, 1.0)
    xs = np.linspace(-40.0, 12.0, 2601)
    sampled = PotentialSpec.sampled(xs, 0.5 * xs, 1.0)
    num = NumericGreen(sampled)
    for x, x0 in ((0.0, 0.0), (1.3, -0.7), (-3.0, 2.0)):
        assert green_linear(x, x0, 0.8, pot) == pytest.approx(num(x, x0, 0.8), rel=1e-7)


def test_unit_ramp_against_numeric_integration():
    xs = np.linspace(-40.0, 12.0, 5201)
    num = NumericGreen(PotentialSpec.sampled(xs, xs, 1.0))
    got = green_linear(0.0, 0.0, 1.0, PotentialSpec.linear(0.0, 1.0, 1.0))
    assert abs(got - num(0.0, 0.0, 1.0)) <= 1e-8 * abs(got)


def test_negative_slope_is_mirror_image():
    up = PotentialSpec.linear(0.2, 0.7)
    down = PotentialSpec.linear(0.2, -0.7)
    assert green_linear(0.4, -1.0, 0.9, down) == pytest.approx(green_linear(-0.4, 1.0, 0.9, up), rel=1e-13)


def test_linear_small_slope_limit_closed_and_complex_energy():
    lin = PotentialSpec.linear(0.0, 1e-7)
    for w in (-0.5, 0.5 + 0.2j):
        for x, x0 in ((0.0, 0.0), (0.5, -0.3)):
            c = green_constant(x, x0, w, FREE)
            assert abs(green_linear(x, x0, w, lin) - c) <= 1e-6 * abs(c)


def test_linear_small_slope_real_open_energy_keeps_turning_point_reflection():
    # A ramp of any slope reflects everything at its distant turning point, so
    # the coincident value does not approach the free one at real open energies.
    g = green_linear(0.0, 0.0, 0.5, PotentialSpec.linear(0.0, 1e-4))
    assert abs(g - (-1j)) > 0.1


def test_linear_large_distances_stay_finite():
    pot = PotentialSpec.linear(0.0, 1e-5)
    g = green_linear(30.0, -30.0, 0.5 + 0.01j, pot)
    assert np.isfinite(g)


def test_numeric_sampled_constant_matches_closed_form():
    xs = np.linspace(-5.0, 5.0, 41)
    pot = PotentialSpec.sampled(xs, np.full_like(xs, 0.3), 1.2)
    ref = PotentialSpec.constant(0.3, 1.2)
    for w in (1.1, 0.1, 0.7 + 0.05j):
        assert green_numeric(0.4, -1.3, w, pot) == pytest.approx(green_constant(0.4, -1.3, w, ref), rel=1e-9)


def test_numeric_contracts_on_barrier():
    xs = np.linspace(-8.0, 8.0, 161)
    g = NumericGreen(PotentialSpec.sampled(xs, 0.6 * np.exp(-xs ** 2), 1.3))
    assert g(0.3, -0.8, 0.9) == pytest.approx(g(-0.8, 0.3, 0.9), rel=1e-10)
    assert g.coincident(0.0, 0.9).imag < 0.0
    assert slope_jump(g, 0.3, 0.9) == pytest.approx(2.6, rel=1e-6)
    sol = g.solution(0.9)
    assert sol.wronskian_spread < 1e-8


def test_numeric_outside_domain():
    g = NumericGreen(PotentialSpec.sampled([-1, 0, 1], [0, 0, 0]))
    with pytest.raises(DomainError):
        g(2.0, 0.0, 0.5)


def harmonic_pairs(limit=200000):
    # Even oscillator states at the origin (m = 1, unit frequency).
    for j in range(limit):
        c = np.exp(gammaln(j + 0.5) - gammaln(j + 1.0)) / np.pi
        yield 2 * j + 0.5, np.sqrt(c), np.sqrt(c)


def harmonic_tail(n, w):
    # Euler-Maclaurin remainder of sum_{j >= n} c_j / (w - 2j - 1/2).
    def f(j):
        return np.exp(gammaln(j + 0.5) - gammaln(j + 1.0)) / np.pi / (w.real - 2 * j - 0.5)

    h = 1e-3
    df = (f(n + h) - f(n - h)) / (2 * h)
    with warnings.catch_warnings():
        # roundoff warnings at the ~1e-12 level; the result is checked downstream
        warnings.simplefilter("ignore", IntegrationWarning)
        integral = quad(f, n, np.inf, epsabs=1e-12, epsrel=1e-10, limit=200)[0]
    return integral + f(n) / 2 - df / 12, abs(df) / 12


def test_spectral_sum_matches_oscillator_closed_form():
    w = 1.0
    ref = -0.5 * gamma(0.25 - w / 2) / gamma(0.75 - w / 2)
    got = green_spectral(harmonic_pairs(), w, tail=harmonic_tail)
    assert got == pytest.approx(ref, rel=1e-8)


def test_spectral_sum_matches_numeric_oscillator():
    xs = np.linspace(-10.0, 10.0, 801)
    num = green_numeric(0.0, 0.0, 1.0, PotentialSpec.sampled(xs, 0.5 * xs ** 2))
    got = green_spectral(harmonic_pairs(), 1.0, tail=harmonic_tail)
    assert got == pytest.approx(num, rel=1e-8)


def test_spectral_sum_pole():
    with pytest.raises(PoleError):
        green_spectral([(0.5, 1.0, 1.0)], 0.5)
