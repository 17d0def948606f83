import warnings

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import null_space

from hbn_odmr.errors import BasisMismatch, Degenerate, NonlinearRegime, StiffnessWarning, ValidationError
from hbn_odmr.photodynamics import (
    MwDrive,
    PopulationState,
    PulsedProtocol,
    PulseSequence,
    RateModel,
    Segment,
    contrast_ratio,
    cw_odmr,
    effective_rate_matrix,
    evolve,
    pulsed_odmr,
    rabi_trace,
    steady_state,
)
from hbn_odmr.spin_model import FieldPoint, NucleusSpec, SpinSystem, solve

GS = SpinSystem(3.48, 0.0, 2.0, label="gs")
ES = SpinSystem(2.06, 0.0, 2.04, label="es")


def sols(B=0.0, theta=0.0, gs=GS, es=ES):
    fld = FieldPoint(B, theta)
    return solve(gs, fld), solve(es, fld)


def gs_zero_population(state, gs_sol):
    return float(state.gs @ gs_sol.overlaps[:, 0])


class TestRateModel:
    def test_defaults_match_lifetime_and_yield(self):
        r = RateModel()
        assert 1e3 / (r.k_rad + r.k_isc[0]) == pytest.approx(1.2)
        assert r.k_rad / (r.k_rad + r.k_isc[0]) == pytest.approx(3e-4)
        assert r.k_isc[1] / r.k_isc[0] == pytest.approx(2.0)
        assert 1.0 / sum(r.k_meta) == pytest.approx(1.0)

    def test_from_lifetimes(self):
        r = RateModel.from_lifetimes(1.2, 0.8, 0.4)
        np.testing.assert_allclose(r.es_lifetimes, (1.2, 0.8, 0.4))

    def test_validation(self):
        with pytest.raises(ValidationError):
            RateModel(pump=-1.0)
        with pytest.raises(ValidationError):
            RateModel(target="both-ways")
        with pytest.raises(ValidationError):
            RateModel.from_lifetimes(1.2, 0.0, 0.5)


class TestGenerator:
    def test_axial_optical_rates_spin_conserving(self):
        g_sol, e_sol = sols(300.0)
        G = effective_rate_matrix(g_sol, e_sol, RateModel())
        pump = G[3:6, :3]
        ov = np.abs(e_sol.states.conj().T @ g_sol.states) ** 2
        assert np.count_nonzero(pump > 1e-12) == 3
        np.testing.assert_allclose(pump, RateModel().pump * ov, atol=1e-12)

    def test_column_sums(self):
        g_sol, e_sol = sols(500.0, 7.0)
        G = effective_rate_matrix(g_sol, e_sol, RateModel(), MwDrive(1.2))
        assert np.max(np.abs(G.sum(axis=0))) < 1e-12
        off = G - np.diag(np.diag(G))
        assert np.all(off >= 0)

    def test_tilted_lac_mixes_optical_rates(self):
        es = SpinSystem(2.06, 0.0931, 2.04, label="es")
        g_sol, e_sol = sols(721.0, 3.0, es=es)
        pump = effective_rate_matrix(g_sol, e_sol, RateModel())[3:6, :3]
        k0 = int(np.argmax(g_sol.overlaps[:, 0]))
        off = np.delete(pump[:, k0], int(np.argmax(pump[:, k0])))
        assert off.max() > 0.01 * RateModel().pump

    def test_basis_mismatch(self):
        es = SpinSystem(2.06, 0.0, 2.04, (NucleusSpec(1, 90.0),), label="es")
        with pytest.raises(BasisMismatch):
            effective_rate_matrix(solve(GS, FieldPoint(0.0)), solve(es, FieldPoint(0.0), nuclei=True), RateModel())


class TestSteadyState:
    def test_against_null_space(self):
        g_sol, e_sol = sols(250.0, 4.0)
        G = effective_rate_matrix(g_sol, e_sol, RateModel(), MwDrive(2.8))
        state, pl = steady_state(G, RateModel())
        ns = null_space(G)[:, 0]
        np.testing.assert_allclose(state.p, ns / ns.sum(), atol=1e-12)
        assert state.p.sum() == pytest.approx(1.0, abs=1e-12)
        assert pl == pytest.approx(RateModel().k_rad * state.es.sum())

    def test_polarizes_into_zero(self):
        g_sol, e_sol = sols(0.0)
        state, _ = steady_state(effective_rate_matrix(g_sol, e_sol, RateModel()))
        p0 = gs_zero_population(state, g_sol)
        others = [state.gs[k] for k in range(3) if g_sol.overlaps[k, 0] < 0.5]
        assert all(p0 > x for x in others)

    def test_resonant_mw_lowers_pl(self):
        g_sol, e_sol = sols(200.0)
        r = RateModel(target="gs")
        _, off = steady_state(effective_rate_matrix(g_sol, e_sol, r), r)
        f = 3.48 - 2.0 * 1.3996245e-3 * 200.0
        _, on = steady_state(effective_rate_matrix(g_sol, e_sol, r, MwDrive(f)), r)
        assert on < off

    def test_no_selectivity_no_contrast(self):
        r = RateModel(k_isc=(1000.0, 1000.0, 1000.0), k_meta=(1 / 3, 1 / 3, 1 / 3))
        g_sol, e_sol = sols(200.0)
        state, off = steady_state(effective_rate_matrix(g_sol, e_sol, r), r)
        np.testing.assert_allclose(state.gs, state.gs.mean(), rtol=1e-10)
        _, on = steady_state(effective_rate_matrix(g_sol, e_sol, r, MwDrive(2.92)), r)
        assert on == pytest.approx(off, rel=1e-10)

    def test_disconnected_graph(self):
        r = RateModel(pump=0.0, k_meta=(0.0, 0.0, 0.0))
        g_sol, e_sol = sols(100.0)
        with pytest.raises(Degenerate):
            steady_state(effective_rate_matrix(g_sol, e_sol, r), r)


class TestEvolve:
    def test_long_illumination_reaches_steady_state(self):
        g_sol, e_sol = sols(100.0, 2.0)
        r = RateModel()
        seq = PulseSequence((Segment(20000.0, laser=True),))
        _, _, final = evolve(seq, PopulationState.thermal(), g_sol, e_sol, r, sample=False)
        state, pl = steady_state(effective_rate_matrix(g_sol, e_sol, r), r)
        assert r.k_rad * final.es.sum() == pytest.approx(pl, rel=1e-6)

    def test_against_ode_integration(self):
        g_sol, e_sol = sols(150.0, 5.0)
        r = RateModel(pump=50.0)
        G = effective_rate_matrix(g_sol, e_sol, r)
        p0 = PopulationState.thermal().p
        t, pl, final = evolve(PulseSequence((Segment(20.0, laser=True),)), PopulationState.thermal(), g_sol, e_sol, r, dt=0.05)
        ode = solve_ivp(lambda _t, p: G @ p, (0, 0.020), p0, method="Radau", rtol=1e-10, atol=1e-13, dense_output=True)
        np.testing.assert_allclose(final.p, ode.y[:, -1], atol=1e-8)
        ref = r.k_rad * ode.sol(t * 1e-3)[3:6].sum(axis=0)
        np.testing.assert_allclose(pl, ref, rtol=1e-6, atol=1e-12)

    def test_conservation_and_sign(self):
        g_sol, e_sol = sols(300.0, 3.0)
        seq = PulsedProtocol(init=200.0, wait=100.0, readout=50.0).sequence(2.64)
        t, pl, final = evolve(seq, PopulationState.thermal(), g_sol, e_sol, RateModel())
        assert final.p.sum() == pytest.approx(1.0, abs=1e-9)
        assert final.p.min() > -1e-12
        assert np.all(np.diff(t) > 0) and np.all(pl >= 0)

    def test_dark_stability(self):
        g_sol, e_sol = sols(300.0, 3.0)
        start = PopulationState(np.array([0.5, 0.3, 0.2, 0, 0, 0, 0.0]))
        _, _, final = evolve(PulseSequence((Segment(5000.0),)), start, g_sol, e_sol, RateModel(mw_rate=0.0))
        np.testing.assert_allclose(final.p, start.p, atol=1e-14)

    def test_stiffness_warning(self):
        g_sol, e_sol = sols(0.0)
        with pytest.warns(StiffnessWarning):
            evolve(PulseSequence((Segment(10.0, laser=True),)), PopulationState.thermal(), g_sol, e_sol, RateModel(), dt=1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            evolve(PulseSequence((Segment(10.0, laser=True),)), PopulationState.thermal(), g_sol, e_sol, RateModel(), dt=0.05)

    def test_segment_validation(self):
        with pytest.raises(ValidationError):
            Segment(0.0)


class TestPulsedAndCw:
    gs = SpinSystem(3.48, 0.05, 2.0, label="gs")
    es = SpinSystem(2.06, 0.0931, 2.04, label="es")

    def test_gs_pi_pulse_darkens_readout(self):
        spec = pulsed_odmr(self.gs, self.es, FieldPoint(0.0), [2.1, 3.43])
        assert spec.contrast[1] > 0.05
        # a pulse applied in the dark finds no ES population to act on
        assert abs(spec.contrast[0]) < 1e-3

    def test_cw_sees_es_line(self):
        spec = cw_odmr(self.gs, self.es, FieldPoint(0.0), [1.5, 2.1])
        assert spec.contrast[1] > 1e-2
        assert spec.contrast[1] > 10 * spec.contrast[0]


class TestRabi:
    def test_pi_time(self):
        t = np.arange(0.0, 30.0, 0.01)
        assert t[np.argmax(rabi_trace(38.46, t))] == pytest.approx(13.0, abs=0.01)
        assert t[np.argmax(rabi_trace(40.0, t))] == pytest.approx(12.5, abs=0.01)

    def test_closed_form(self):
        t = np.linspace(0, 100, 37)
        np.testing.assert_allclose(rabi_trace(25.0, t), np.sin(np.pi * 25e-3 * t) ** 2, atol=1e-15)
        assert rabi_trace(38.46, [0.0])[0] == 0.0

    def test_decay_envelope(self):
        tr = rabi_trace(40.0, [12.5, 1e6], decay=50.0)
        assert tr[0] == pytest.approx(0.5 * (1 + np.exp(-0.25)))
        assert tr[1] == pytest.approx(0.5)

    def test_rate_positive(self):
        with pytest.raises(ValidationError):
            rabi_trace(0.0, [1.0])


class TestContrastRatio:
    def test_half_lifetime(self):
        assert contrast_ratio(1.0, 0.5) == pytest.approx(0.5, abs=0.02)

    def test_symmetric(self):
        assert contrast_ratio(0.8, 0.8) == pytest.approx(1.0, abs=1e-9)

    def test_monotone_in_plus_lifetime(self):
        ratios = [contrast_ratio(0.8, tp) for tp in np.linspace(0.2, 1.2, 11)]
        assert np.all(np.diff(ratios) > 0)

    def test_nonlinear_guard(self):
        with pytest.raises(NonlinearRegime):
            contrast_ratio(1.0, 0.5, mw_rate=200.0)
