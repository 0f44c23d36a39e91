import math
from types import SimpleNamespace

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinkstats import (
    ChainParams,
    IntegrationError,
    ModeProbabilities,
    QuenchProtocol,
    SolverConfig,
    erf_corrected_cumulants,
    evolve_mode,
    excitation_probability_lz,
    excitation_probability_numeric,
    instantaneous_eigensystem,
    mode_probabilities,
    momentum_grid,
)
from kinkstats.dynamics import _clamp, evolve_modes

P400 = ChainParams(400)


def lz_reference(k, tau, J=1, hbar=1):
    with mpmath.workdps(40):
        return mpmath.exp(-2 * mpmath.pi * J * tau * mpmath.mpf(k) ** 2 / hbar)


class TestLandauZener:
    def test_small_k(self):
        k = math.pi / 400
        p = excitation_probability_lz(k, P400, 100.0)
        assert p == pytest.approx(float(lz_reference(k, 100)), rel=1e-14)
        # reference value is rounded
        assert p == pytest.approx(0.96204, abs=1e-4)

    def test_tiny_but_normal(self):
        p = excitation_probability_lz(math.pi, P400, 10.0)
        ref = lz_reference(math.pi, 10)
        assert float(mpmath.log10(ref)) == pytest.approx(-269.3, abs=0.1)
        assert p == pytest.approx(float(ref), rel=1e-12)

    def test_flush_to_zero(self):
        assert excitation_probability_lz(math.pi, P400, 100.0) == 0.0

    def test_fast_limit(self):
        k = momentum_grid(P400).momenta
        assert np.all(excitation_probability_lz(k, P400, 1e-14) > 1 - 1e-12)

    def test_even_in_k(self):
        k = momentum_grid(P400).momenta
        np.testing.assert_array_equal(excitation_probability_lz(-k, P400, 3.0),
                                      excitation_probability_lz(k, P400, 3.0))

    def test_units(self):
        # only the combination J tau / hbar enters
        a = excitation_probability_lz(0.1, ChainParams(4, J=2.0, hbar=0.5), 3.0)
        b = excitation_probability_lz(0.1, ChainParams(4), 12.0)
        assert a == pytest.approx(b, rel=1e-15)

    def test_rejects_nonpositive_tau(self):
        with pytest.raises(ValueError):
            excitation_probability_lz(0.1, P400, 0.0)

    @given(st.floats(min_value=1e-3, max_value=1e4))
    def test_monotone_and_bounded(self, tau):
        p = mode_probabilities(ChainParams(64), QuenchProtocol(tau), "lz").p
        assert np.all((p >= 0) & (p <= 1))
        assert np.all(np.diff(p) <= 0)


class TestEvolution:
    def test_empty_interval_returns_initial_state(self):
        params = ChainParams(8)
        k = momentum_grid(params).momenta
        stub = SimpleNamespace(tau_Q=1.0, start_time=1.0, end_time=1.0)
        states, drift = evolve_modes(k, params, stub)
        _, ground, _ = instantaneous_eigensystem(k, 0.0)
        np.testing.assert_array_equal(states, ground.astype(complex))
        np.testing.assert_array_equal(drift, 0.0)

    def test_unit_norm(self):
        psi = evolve_mode(0.3, P400, QuenchProtocol(20.0))
        assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-15)

    def test_adiabatic_limit(self):
        k = momentum_grid(P400).momenta[-1]
        psi = evolve_mode(k, P400, QuenchProtocol(100.0))
        _, ground, _ = instantaneous_eigensystem(k, 0.0)
        assert abs(np.vdot(ground, psi)) ** 2 >= 1 - 1e-6

    def test_sudden_limit(self):
        # an instantaneous quench keeps the g=2 ground state; project it by hand
        def eigvecs(k, g):
            hz, hx = 2 * (g - math.cos(k)), 2 * math.sin(k)
            _, vecs = np.linalg.eigh(np.array([[hz, hx], [hx, -hz]]))
            return vecs[:, 0], vecs[:, 1]

        for k in momentum_grid(ChainParams(8)).momenta:
            ground2, _ = eigvecs(k, 2.0)
            _, excited0 = eigvecs(k, 0.0)
            ref = abs(excited0 @ ground2) ** 2
            p = excitation_probability_numeric(k, P400, QuenchProtocol(1e-9))
            assert p == pytest.approx(ref, abs=1e-7)

    def test_slow_quench_matches_lz(self):
        k = math.pi / 400
        p = excitation_probability_numeric(k, P400, QuenchProtocol(100.0))
        lz = excitation_probability_lz(k, P400, 100.0)
        assert lz == pytest.approx(0.962, abs=1e-3)
        assert p == pytest.approx(lz, rel=0.01)

    def test_high_k_endpoint_leakage(self):
        # Landau-Zener gives ~1e-270 here, but the ramp starts and stops abruptly;
        # the exact dynamics keeps a leakage of about sin(k)^2 / (64 tau^2)
        k = 399 * math.pi / 400
        p = excitation_probability_numeric(k, P400, QuenchProtocol(10.0))
        tight = SolverConfig(1e-13, 1e-13, integrator="DOP853")
        ref = excitation_probability_numeric(k, P400, QuenchProtocol(10.0), tight)
        assert p == pytest.approx(ref, rel=1e-6)
        assert p == pytest.approx(math.sin(k) ** 2 / 6400, rel=0.1)

    @pytest.mark.parametrize("integrator", ["RK45", "DOP853"])
    def test_scipy_cross_route(self, integrator):
        params = ChainParams(40)
        protocol = QuenchProtocol(5.0)
        tight = SolverConfig(1e-12, 1e-12, integrator=integrator)
        magnus = mode_probabilities(params, protocol, "ode", SolverConfig(1e-12, 1e-12)).p
        other = mode_probabilities(params, protocol, "ode", tight).p
        np.testing.assert_allclose(magnus, other, atol=1e-9 if integrator == "DOP853" else 1e-7)

    def test_start_factor_robustness(self):
        params = ChainParams(100)
        a1 = mode_probabilities(params, QuenchProtocol(20.0, 1.0), "ode").p.sum()
        a3 = mode_probabilities(params, QuenchProtocol(20.0, 3.0), "ode").p.sum()
        assert a3 == pytest.approx(a1, rel=1e-3)


class TestModeProbabilities:
    def test_lz_matches_formula(self):
        probs = mode_probabilities(P400, QuenchProtocol(100.0), "lz")
        k = momentum_grid(P400).momenta
        np.testing.assert_array_equal(probs.p, excitation_probability_lz(k, P400, 100.0))
        assert probs.norm_drift == 0.0

    def test_ode_sum_matches_erf_mean(self):
        probs = mode_probabilities(P400, QuenchProtocol(100.0), "ode")
        kappa1, _ = erf_corrected_cumulants(P400, 100.0)
        assert 2 * math.fsum(probs.p) == pytest.approx(kappa1, rel=0.02)

    def test_two_sites(self):
        probs = mode_probabilities(ChainParams(2), QuenchProtocol(1.0), "ode")
        assert probs.p.shape == (1,)

    @pytest.mark.parametrize("tau", [0.5, 10.0, 100.0])
    def test_monotone_in_k(self, tau):
        # monotone wherever the Landau-Zener part dominates the endpoint leakage
        probs = mode_probabilities(P400, QuenchProtocol(tau), "ode")
        lz = excitation_probability_lz(probs.momenta, P400, tau)
        p = probs.p[lz >= 1e-3]
        assert len(p) >= 3
        assert np.max(np.diff(p)) <= 1e-10

    def test_tail_is_not_monotone(self):
        # the leakage oscillates in k; confirmed with an independent integrator
        tight = SolverConfig(1e-13, 1e-13, integrator="DOP853")
        p = mode_probabilities(P400, QuenchProtocol(10.0), "ode", tight).p
        assert np.max(np.diff(p)) > 1e-7

    def test_deterministic(self):
        a = mode_probabilities(P400, QuenchProtocol(37.0), "ode")
        b = mode_probabilities(P400, QuenchProtocol(37.0), "ode")
        np.testing.assert_array_equal(a.p, b.p)
        assert a.norm_drift == b.norm_drift

    def test_norm_drift_small(self):
        probs = mode_probabilities(P400, QuenchProtocol(50.0), "ode")
        assert probs.norm_drift <= 1e-8

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            mode_probabilities(P400, QuenchProtocol(1.0), "exact")

    def test_validation(self):
        with pytest.raises(ValueError):
            ModeProbabilities(ChainParams(4), 1.0, "given", [0.5])
        with pytest.raises(ValueError):
            ModeProbabilities(ChainParams(4), 1.0, "given", [0.5, 1.5])
        probs = ModeProbabilities.from_values([0.2, 0.1])
        assert probs.params.N == 4
        with pytest.raises(ValueError):
            probs.p[0] = 0.0

    @settings(max_examples=20, deadline=None)
    @given(st.floats(min_value=0.05, max_value=50.0))
    def test_ode_probabilities_bounded(self, tau):
        probs = mode_probabilities(ChainParams(16), QuenchProtocol(tau), "ode")
        assert np.all((probs.p >= 0) & (probs.p <= 1))
        assert probs.norm_drift <= 1e-8


class TestSolverConfig:
    @pytest.mark.parametrize("kw", [{"abs_tol": 0.0}, {"rel_tol": 1e-3}, {"max_step": 0.0},
                                    {"initial_step": -1.0}, {"integrator": "euler"}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_max_step_respected(self):
        loose = mode_probabilities(ChainParams(8), QuenchProtocol(2.0), "ode").p
        capped = mode_probabilities(ChainParams(8), QuenchProtocol(2.0), "ode",
                                    SolverConfig(max_step=0.01)).p
        np.testing.assert_allclose(capped, loose, atol=1e-9)


class TestFaults:
    def test_clamp_window(self):
        assert _clamp(np.array([-1e-13, 1 + 1e-13])).tolist() == [0.0, 1.0]
        with pytest.raises(IntegrationError, match="outside"):
            _clamp(np.array([1 + 1e-9]), np.array([0.5]), 3.0)

    def test_error_context(self):
        err = IntegrationError("boom", k=np.array([0.25]), tau_Q=7.5)
        assert "k=0.25" in str(err) and "tau_Q=7.5" in str(err)
        assert err.tau_Q == 7.5
