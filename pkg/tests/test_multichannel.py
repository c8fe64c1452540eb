import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosskit.errors import GridTooCoarse, IllConditioned, InvalidPotential, PoleError, SingularSystem
from crosskit.greens_core import PotentialSpec, green_constant
from crosskit.multichannel import (
    ChannelSpec,
    MultiChannelSystem,
    channel_amplitude,
    dress_direct,
    dress_sequential,
    dressing_determinant,
    effective_weights,
    scatter_multi,
    time_reconstruct,
)
from crosskit.oracle import matching_solve
from crosskit.two_state import DeltaCoupling, TwoChannelSystem, denominator, dressed_green, scatter_two
from crosskit.wavepacket import GaussianPacket

FREE = PotentialSpec.constant(0.0)


def channel_strategy(m):
    return st.builds(lambda v, k, x: ChannelSpec(PotentialSpec.constant(v, m), k, x),
                     st.floats(-3, 3), st.floats(-2, 2), st.sampled_from([-1.5, -0.4, 0.0, 0.7, 1.9]))


systems = st.floats(0.5, 2.0).flatmap(
    lambda m: st.builds(lambda chans: MultiChannelSystem(PotentialSpec.constant(0.0, m), chans),
                        st.lists(channel_strategy(m), min_size=1, max_size=8)))


def test_weights_trivial_cases():
    sys = MultiChannelSystem(FREE, [ChannelSpec(FREE, 0.0, 0.0), ChannelSpec(FREE, 0.0, 1.0)])
    assert [w.weight for w in effective_weights(0.5, sys)] == [0, 0]
    one = MultiChannelSystem(FREE, [ChannelSpec(FREE, 1.0, 0.0)])
    assert effective_weights(0.5, one)[0].weight == pytest.approx(-1j, abs=1e-15)


def test_three_channel_weights_match_hand_evaluation():
    c2 = ChannelSpec(PotentialSpec.constant(0.3), 0.7, -0.5)
    c3 = ChannelSpec(PotentialSpec.constant(1.2), -1.1, 0.8)
    sys = MultiChannelSystem(FREE, [c2, c3])
    w = effective_weights(0.9, sys)
    assert [e.index for e in w] == [0, 1]
    assert w[0].weight == pytest.approx(0.49 * green_constant(-0.5, -0.5, 0.9, c2.potential), rel=1e-15)
    assert w[1].weight == pytest.approx(1.21 * green_constant(0.8, 0.8, 0.9, c3.potential), rel=1e-15)


def test_single_channel_reduces_to_two_state():
    two = TwoChannelSystem(FREE, PotentialSpec.constant(0.4), DeltaCoupling(1.3, 0.2))
    multi = MultiChannelSystem(FREE, [ChannelSpec(two.channel2, 1.3, 0.2)])
    for w in (0.9, 0.3 + 0.1j):
        for x, x0 in ((0.0, 0.0), (1.0, -2.0)):
            ref = dressed_green("G11", x, x0, w, two)
            assert abs(dress_sequential(multi, w)(x, x0) - ref) <= 1e-14
            assert abs(dress_direct(multi, w)(x, x0) - ref) <= 1e-14
        assert abs(dressing_determinant(w, multi) - denominator(w, two)) <= 1e-14


def test_no_channels_gives_bare_green():
    sys = MultiChannelSystem(FREE, [])
    assert dress_direct(sys, 0.5)(0.3, -0.2) == green_constant(0.3, -0.2, 0.5, FREE)
    assert dress_sequential(sys, 0.5)(0.3, -0.2) == green_constant(0.3, -0.2, 0.5, FREE)


def literal_three_state(sys, w, x, x0):
    # Two stages of G(n) = G(n-1) + k^2 G(n-1)(x, x_n) G_n(x_n, x_n) G(n-1)(x_n, x0) / d_n, written out.
    g1 = lambda a, b: green_constant(a, b, w, sys.driver)
    (c2, c3) = sys.channels
    g22 = green_constant(c2.point, c2.point, w, c2.potential)
    g33 = green_constant(c3.point, c3.point, w, c3.potential)

    def stage1(a, b):
        d = 1 - c2.strength ** 2 * g1(c2.point, c2.point) * g22
        return g1(a, b) + c2.strength ** 2 * g1(a, c2.point) * g22 * g1(c2.point, b) / d

    d3 = 1 - c3.strength ** 2 * stage1(c3.point, c3.point) * g33
    return stage1(x, x0) + c3.strength ** 2 * stage1(x, c3.point) * g33 * stage1(c3.point, x0) / d3


def test_three_state_sequential_matches_literal_recursion():
    sys = MultiChannelSystem(FREE, [ChannelSpec(PotentialSpec.constant(0.3), 0.7, -0.5),
                                    ChannelSpec(PotentialSpec.constant(-0.6), 1.1, 0.8)])
    for w in (0.9, 0.2 + 0.05j):
        for x, x0 in ((0.1, 0.4), (-2.0, 1.5)):
            assert abs(dress_sequential(sys, w)(x, x0) - literal_three_state(sys, w, x, x0)) <= 1e-14


@settings(max_examples=60, deadline=None)
@given(sys=systems, e=st.floats(0.05, 3.0), eta=st.floats(0.0, 0.5), x=st.floats(-3, 3), x0=st.floats(-3, 3),
       seed=st.integers(0, 2 ** 32 - 1))
def test_sequential_direct_and_order(sys, e, eta, x, x0, seed):
    w = complex(e, eta)
    if any(abs(w - c.potential.v0) < 1e-3 for c in sys.channels):
        return
    try:
        seq = dress_sequential(sys, w)(x, x0)
    except PoleError:
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditioned)
        direct = dress_direct(sys, w)(x, x0)
    scale = max(1.0, abs(seq))
    assert abs(seq - direct) <= 1e-10 * scale
    order = np.random.default_rng(seed).permutation(len(sys.channels))
    try:
        perm = dress_sequential(sys.permuted(order), w)(x, x0)
    except PoleError:
        return
    assert abs(seq - perm) <= 1e-10 * scale


def test_coincident_points_merge_into_one_weight():
    a = ChannelSpec(PotentialSpec.constant(0.2), 0.8, 0.5)
    b = ChannelSpec(PotentialSpec.constant(-0.3), 0.6, 0.5)
    sys = MultiChannelSystem(FREE, [a, b])
    w = 0.7 + 0.02j
    merged = dress_direct(sys, w)
    assert merged.points.tolist() == [0.5]
    total = sum(e.weight for e in effective_weights(w, sys))
    g = lambda p, q: green_constant(p, q, w, FREE)
    ref = g(1.0, -1.0) + g(1.0, 0.5) * total * g(0.5, -1.0) / (1 - total * g(0.5, 0.5))
    assert abs(merged(1.0, -1.0) - ref) <= 1e-12
    assert abs(dress_sequential(sys, w)(1.0, -1.0) - ref) <= 1e-12


def test_pole_error_reports_stage():
    # channel 3 alone binds the driver at E_b; putting it second makes stage 2 vanish there
    sys = MultiChannelSystem(FREE, [ChannelSpec(PotentialSpec.constant(2.0), 0.0, 0.0),
                                    ChannelSpec(PotentialSpec.constant(3.0), 1.0, 0.0)])
    two = TwoChannelSystem(FREE, PotentialSpec.constant(3.0), DeltaCoupling(1.0, 0.0))
    from crosskit.two_state import resonance_scan

    e_b = [p for p in resonance_scan((-1.0, 0.0, -0.2, 0.2), two, steps=(24, 24)) if p.converged][0].omega.real
    with pytest.raises(PoleError) as info:
        dress_sequential(sys, e_b)
    assert info.value.stage == 2
    with pytest.raises(SingularSystem):
        dress_direct(sys, e_b)


def test_ill_conditioned_warning():
    two = TwoChannelSystem(FREE, PotentialSpec.constant(3.0), DeltaCoupling(1.0, 0.0))
    from crosskit.two_state import resonance_scan

    e_b = [p for p in resonance_scan((-1.0, 0.0, -0.2, 0.2), two, steps=(24, 24)) if p.converged][0].omega.real
    sys = MultiChannelSystem(FREE, [ChannelSpec(PotentialSpec.constant(3.0), 1.0, 0.0)])
    with pytest.warns(IllConditioned):
        dress_direct(sys, e_b + 1e-13)


def test_channel_amplitude_examples():
    sys = MultiChannelSystem(FREE, [ChannelSpec(FREE, 1.0, 0.0), ChannelSpec(FREE, 0.0, 0.0)])
    for x in (-1.0, 0.0, 2.5):
        assert channel_amplitude(0, x, 0.5, sys, 1.0) == pytest.approx(-1j * np.exp(1j * abs(x)), abs=1e-15)
    assert channel_amplitude(1, 0.3, 0.5, sys, 1.0) == 0


def test_channel_amplitude_reproduces_two_state_g21():
    two = TwoChannelSystem(FREE, PotentialSpec.constant(0.4), DeltaCoupling(1.3, 0.2))
    multi = MultiChannelSystem(FREE, [ChannelSpec(two.channel2, 1.3, 0.2)])
    g = dress_sequential(multi, 0.9)
    for x, x0 in ((0.0, 0.7), (-1.0, 2.0)):
        amp = channel_amplitude(0, x, 0.9, multi, g(0.2, x0))
        assert abs(amp - dressed_green("G21", x, x0, 0.9, two)) <= 1e-14


def test_scatter_multi_reduces_to_scatter_two():
    two = TwoChannelSystem(FREE, PotentialSpec.constant(0.5), DeltaCoupling(1.0, 0.3))
    multi = MultiChannelSystem(FREE, [ChannelSpec(two.channel2, 1.0, 0.3)])
    for e in (0.2, 0.9, 2.0):
        for inc in ("left", "right"):
            a, b = scatter_two(e, two, inc), scatter_multi(e, multi, inc)
            assert abs(a.r - b.r) <= 1e-12 and abs(a.t - b.t) <= 1e-12
            np.testing.assert_allclose(a.probabilities(), b.probabilities(), rtol=0, atol=1e-12)


def test_scatter_multi_zero_strengths():
    sys = MultiChannelSystem(FREE, [ChannelSpec(PotentialSpec.constant(0.1), 0.0, 0.0)])
    r = scatter_multi(1.0, sys)
    assert (r.R, r.T, r.transfer) == (0.0, 1.0, (0.0,))


def test_four_channel_case_against_oracle():
    rng = np.random.default_rng(4)
    chans = [ChannelSpec(PotentialSpec.constant(v, 1.3), k, x)
             for v, k, x in zip(rng.uniform(-1, 2, 4), rng.uniform(-2, 2, 4), rng.uniform(-2, 2, 4))]
    sys = MultiChannelSystem(PotentialSpec.constant(0.0, 1.3), chans)
    a, b = scatter_multi(1.1, sys), matching_solve(sys, 1.1)
    assert a.flux_sum == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(a.probabilities(), b.probabilities(), rtol=0, atol=1e-10)


def test_channel_wave_carries_the_transfer_flux():
    sys = MultiChannelSystem(FREE, [ChannelSpec(PotentialSpec.constant(0.4), 0.9, 0.2)])
    e = 1.3
    res = scatter_multi(e, sys)
    # psi_1 at the coupling point from the Lippmann-Schwinger solution of the oracle route
    ref = matching_solve(sys, e)
    q = np.sqrt(2 * (e - 0.4))
    k1 = np.sqrt(2 * e)
    psi1 = ref.t * np.exp(1j * k1 * 0.2)
    far = channel_amplitude(0, 7.0, e, sys, psi1)
    assert (q / k1) * 2 * abs(far) ** 2 == pytest.approx(res.transfer[0], rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(sys=systems, e=st.floats(0.05, 4.0))
def test_multichannel_flux(sys, e):
    if any(abs(e - c.potential.v0) < 1e-6 for c in sys.channels):
        return
    try:
        res = scatter_multi(e, sys)
    except SingularSystem:
        return
    assert res.flux_sum == pytest.approx(1.0, abs=1e-12)


PACKET = GaussianPacket(0.0, 0.5, 1.0)


def test_time_reconstruct_free_packet():
    times = np.linspace(0.0, 5.0, 6)
    res = time_reconstruct(MultiChannelSystem(FREE, []), PACKET, times)
    exact = np.abs(PACKET.free_survival_amplitude(times, 0.0, 1.0)) ** 2
    assert abs(res.survival[0] - 1.0) <= 1e-6
    assert np.max(np.abs(res.survival - exact)) <= 1e-6


def test_time_reconstruct_initial_value_and_threads():
    sys = MultiChannelSystem(FREE, [ChannelSpec(PotentialSpec.constant(0.3), 0.5, 0.0)])
    times = [0.0, 1.0, 2.0]
    kw = dict(eta=0.01, omega_step=0.0025, omega_range=(-400.0, 400.0), chunk=1 << 14)
    one = time_reconstruct(sys, PACKET, times, threads=1, **kw)
    four = time_reconstruct(sys, PACKET, times, threads=4, **kw)
    assert np.max(np.abs(one.amplitude - four.amplitude)) <= 1e-13
    default = time_reconstruct(sys, PACKET, [0.0])
    assert abs(default.survival[0] - 1.0) <= 1e-6


def test_time_reconstruct_fields_start_from_packet():
    sys = MultiChannelSystem(FREE, [ChannelSpec(PotentialSpec.constant(0.3), 0.5, 0.0)])
    x = np.linspace(-3, 3, 7)
    res = time_reconstruct(sys, PACKET, [0.0], eta=0.01, omega_step=0.0025,
                           omega_range=(-2000.0, 2000.0), field_x=x)
    assert res.fields[0].component == 1
    np.testing.assert_allclose(res.fields[0].values, PACKET.values(x), atol=2e-3)


def test_time_reconstruct_grid_checks():
    sys = MultiChannelSystem(FREE, [])
    with pytest.raises(GridTooCoarse):
        time_reconstruct(sys, PACKET, [0.0, 10.0], eta=0.01, omega_step=0.01)
    with pytest.raises(GridTooCoarse):
        time_reconstruct(sys, PACKET, [0.0, 5000.0], eta=0.01, omega_step=0.0025)
    with pytest.raises(InvalidPotential):
        time_reconstruct(MultiChannelSystem(PotentialSpec.linear(0, 1.0), []), PACKET, [0.0])
