"""Continuous-block numerics against closed-form oracles.

Expected values are frozen from the analytic step responses of the
underlying ODEs (first-order lag and a chain of two lags), evaluated
independently of the implementation.
"""

import math

from hypothesis import given, settings, strategies as st

from broom import PiState, Pt1State, limiter, pi_step, pt1_step


def _simulate_pt1(K, T, u, dt, t_end):
    s = Pt1State(y=0.0, K=K, T=T)
    ys = [s.y]
    for _ in range(int(round(t_end / dt))):
        s = pt1_step(s, u, dt)
        ys.append(s.y)
    return ys


class TestPt1:
    def test_step_response_at_T_and_3T(self):
        # analytic: y(t) = K*u*(1 - exp(-t/T))
        K, T, u = 2.5, 0.8, 1.0
        dt = T / 1000.0
        ys = _simulate_pt1(K, T, u, dt, 3 * T)
        for t in (T, 3 * T):
            got = ys[int(round(t / dt))]
            want = K * u * (1.0 - math.exp(-t / T))
            assert abs(got - want) <= 0.001 * abs(want)

    def test_converges_to_gain_times_input(self):
        s = Pt1State(K=3.0, T=0.5)
        for _ in range(20000):
            s = pt1_step(s, -2.0, 0.001)
        assert abs(s.y - (-6.0)) < 1e-6

    def test_zero_input_decays(self):
        s = Pt1State(y=10.0, K=1.0, T=1.0)
        for _ in range(10000):
            s = pt1_step(s, 0.0, 0.001)
        assert abs(s.y) < 1e-3

    def test_chain_matches_second_order_closed_form(self):
        # two lags in series; for T1 != T2 the unit step response is
        #   y(t) = K1*K2*(1 - (T1*exp(-t/T1) - T2*exp(-t/T2))/(T1-T2))
        K1, T1, K2, T2 = 1.5, 1.0, 2.0, 0.3
        dt = 0.0005
        t_end = 5 * max(T1, T2)
        s1 = Pt1State(K=K1, T=T1)
        s2 = Pt1State(K=K2, T=T2)
        final = K1 * K2
        worst = 0.0
        for k in range(1, int(round(t_end / dt)) + 1):
            s1 = pt1_step(s1, 1.0, dt)
            s2 = pt1_step(s2, s1.y, dt)
            t = k * dt
            want = final * (1.0 - (T1 * math.exp(-t / T1)
                                   - T2 * math.exp(-t / T2)) / (T1 - T2))
            worst = max(worst, abs(s2.y - want))
        assert worst <= 0.005 * final

    def test_pure_update(self):
        s = Pt1State(y=1.0, K=2.0, T=3.0)
        pt1_step(s, 5.0, 0.01)
        assert s == Pt1State(y=1.0, K=2.0, T=3.0)

    @given(st.floats(-100, 100), st.floats(-100, 100))
    def test_monotone_approach(self, y0, u):
        # one Euler step with dt < T moves y toward K*u, never past it
        s = Pt1State(y=y0, K=1.0, T=1.0)
        s2 = pt1_step(s, u, 0.5)
        target = u
        assert abs(s2.y - target) <= abs(y0 - target) + 1e-12


class TestPi:
    def test_tracks_out_steady_state_error(self):
        # PI around a first-order plant: steady-state error must vanish
        ctrl = PiState(Kp=0.5, Ki=0.3, lo=-10.0, hi=10.0)
        plant = Pt1State(K=2.0, T=1.0)
        dt = 0.001
        setpoint = 4.0
        for _ in range(200000):
            ctrl, u = pi_step(ctrl, setpoint - plant.y, dt)
            plant = pt1_step(plant, u, dt)
        assert abs(plant.y - setpoint) < 1e-3

    def test_antiwindup_freezes_integral_in_saturation(self):
        s = PiState(Kp=1.0, Ki=1.0, lo=-1.0, hi=1.0)
        # large persistent error saturates the output immediately
        for _ in range(100):
            s, u = pi_step(s, 100.0, 0.01)
            assert u == 1.0
        # the conditional-integration rule admits at most the single step
        # taken before saturation was detected
        assert s.i <= 100.0 * 0.01 + 1e-12

    def test_integral_resumes_after_saturation(self):
        s = PiState(Kp=1.0, Ki=1.0, lo=-1.0, hi=1.0)
        for _ in range(100):
            s, _ = pi_step(s, 100.0, 0.01)
        frozen = s.i
        s, _ = pi_step(s, 0.1, 0.01)   # small error: back in range
        assert s.i != frozen

    def test_proportional_only(self):
        s = PiState(Kp=2.0, Ki=0.0, lo=-100.0, hi=100.0)
        s2, u = pi_step(s, 3.0, 0.01)
        assert u == 6.0
        # Ki = 0 never saturates the drive term, integral still accumulates
        assert s2.i == 3.0 * 0.01

    @given(st.floats(-1e6, 1e6), st.floats(-1e3, 1e3))
    @settings(max_examples=200)
    def test_output_always_limited(self, i0, e):
        s = PiState(i=i0, Kp=1.0, Ki=0.5, lo=-2.0, hi=2.0)
        _, u = pi_step(s, e, 0.01)
        assert -2.0 <= u <= 2.0


class TestLimiter:
    def test_clamps(self):
        assert limiter(-5.0, -1.0, 1.0) == -1.0
        assert limiter(5.0, -1.0, 1.0) == 1.0
        assert limiter(0.25, -1.0, 1.0) == 0.25
        assert limiter(-1.0, -1.0, 1.0) == -1.0
        assert limiter(1.0, -1.0, 1.0) == 1.0

    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_in_range_and_idempotent(self, u):
        v = limiter(u, -3.0, 7.0)
        assert -3.0 <= v <= 7.0
        assert limiter(v, -3.0, 7.0) == v
