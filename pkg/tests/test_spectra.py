import itertools
import warnings

import numpy as np
import pytest
from scipy.signal import argrelmax

from conftest import closed_form, nitrogen
from hbn_odmr.errors import GridTooCoarse, StepTooLarge, ValidationError
from hbn_odmr.spectra import (
    LineshapeConfig,
    Spectrum,
    cw_spectrum,
    eq2_frequencies,
    frequency_vs_field_scan,
    hyperfine_manifold,
    lorentzian,
    spectrum_from_lines,
    spectrum_lines,
    track_branches,
)
from hbn_odmr.spin_model import FieldPoint, NucleusSpec, SpinSystem

FINE = np.arange(1.0, 5.0, 0.002)


def brute_manifold(nuclei):
    # enumerate every nuclear configuration explicitly
    per_spin = []
    for n in nuclei:
        ms = [n.I - k for k in range(n.multiplicity)]
        per_spin += [[n.A * m for m in ms]] * n.count
    counts = {}
    for combo in itertools.product(*per_spin):
        key = round(sum(combo), 9)
        counts[key] = counts.get(key, 0) + 1
    return sorted(counts.items())


def peak_positions(spec, floor=1e-4):
    idx = argrelmax(spec.contrast)[0]
    return spec.freqs[idx[spec.contrast[idx] > floor]]


class TestManifold:
    def test_three_nitrogens(self):
        lines = hyperfine_manifold([nitrogen()])
        assert [l.offset for l in lines] == [-270.0, -180.0, -90.0, 0.0, 90.0, 180.0, 270.0]
        assert [l.multiplicity for l in lines] == [1, 3, 6, 7, 6, 3, 1]

    def test_spin_half(self):
        lines = hyperfine_manifold([NucleusSpec(0.5, 18.8)])
        assert [(l.offset, l.multiplicity) for l in lines] == [(-9.4, 1), (9.4, 1)]

    def test_empty(self):
        lines = hyperfine_manifold([])
        assert [(l.offset, l.multiplicity) for l in lines] == [(0.0, 1)]

    def test_against_enumeration(self):
        nuclei = [nitrogen(90.0, 2), NucleusSpec(1.5, 18.8)]
        got = [(round(l.offset, 9), l.multiplicity) for l in hyperfine_manifold(nuclei)]
        assert got == brute_manifold(nuclei)
        assert sum(m for _, m in got) == 9 * 4


class TestResonanceFormula:
    def test_zero_field(self):
        np.testing.assert_allclose(eq2_frequencies(2.06, 0.0931, 2.04, 0.0), (1.9669, 2.1531), atol=1e-12)

    def test_137_gauss(self):
        np.testing.assert_allclose(eq2_frequencies(2.06, 0.0931, 2.04, 137.0), (1.658, 2.462), atol=1e-3)

    def test_degenerate(self):
        assert eq2_frequencies(3.48, 0.0, 2.0, 0.0) == (3.48, 3.48)

    def test_vectorized(self):
        B = np.linspace(0, 1500, 7)
        m, p = eq2_frequencies(2.06, 0.0931, 2.04, B)
        np.testing.assert_allclose(np.c_[m, p], np.c_[closed_form(2.06, 0.0931, 2.04, B)], atol=1e-15)


class TestCwSpectrum:
    def test_zero_field_peaks(self, replication_cfg):
        spec = cw_spectrum(replication_cfg.gs, replication_cfg.es.electron_only(), FieldPoint(0.0), FINE)
        peaks = peak_positions(spec)
        for target in (1.967, 2.153):
            assert np.min(np.abs(peaks - target)) < 0.02
        # the two GS lines sit 2E_gs apart around D_gs
        gs_peaks = peaks[peaks > 3.3]
        assert np.mean(gs_peaks) == pytest.approx(3.48, abs=0.01)

    def test_353_gauss_es_peaks(self, es, gs):
        ls = LineshapeConfig(amplitudes={"es_minus": 0.01, "es_plus": 0.01})
        spec = cw_spectrum(gs, es, FieldPoint(353.0), FINE, ls)
        np.testing.assert_allclose(sorted(peak_positions(spec)), [1.048, 3.072], atol=0.003)

    def test_zero_amplitudes(self, es, gs):
        ls = LineshapeConfig(amplitudes={b: 0.0 for b in ("gs_minus", "gs_plus", "es_minus", "es_plus")})
        spec = cw_spectrum(gs, es, FieldPoint(100.0), FINE, ls)
        assert np.all(spec.contrast == 0)

    def test_hyperfine_replicas_on_es_line(self):
        es = SpinSystem(2.06, 0.0, 2.04, (nitrogen(),), label="es")
        gs = SpinSystem(3.48, 0.0, 2.0, label="gs")
        ls = LineshapeConfig(es_fwhm=40.0, amplitudes={"es_minus": 0.01})
        lines = spectrum_lines(es, FieldPoint(300.0), ls)
        assert len(lines) == 7
        w = np.array([l.weight for l in lines])
        np.testing.assert_allclose(w / w.min(), [1, 3, 6, 7, 6, 3, 1])
        spec = cw_spectrum(gs, es, FieldPoint(300.0), np.arange(0.8, 1.6, 0.001), ls)
        assert len(peak_positions(spec)) == 7

    def test_grid_warning(self, es, gs):
        with pytest.warns(GridTooCoarse):
            cw_spectrum(gs, es, FieldPoint(0.0), np.linspace(1, 5, 50))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            cw_spectrum(gs, es, FieldPoint(0.0), FINE)

    def test_linearity(self, es, gs):
        a = spectrum_lines(es, FieldPoint(200.0, 4.0))
        b = spectrum_lines(gs, FieldPoint(200.0, 4.0))
        whole = spectrum_from_lines(a + b, FINE).contrast
        parts = spectrum_from_lines(a, FINE).contrast + spectrum_from_lines(b, FINE).contrast
        np.testing.assert_allclose(whole, parts, rtol=1e-12, atol=1e-16)

    def test_nonnegative(self, es, gs):
        assert np.all(cw_spectrum(gs, es, FieldPoint(800.0, 7.0), FINE).contrast >= 0)

    def test_lorentzian_shape(self):
        assert lorentzian(2.0, 2.0, 60.0) == 1.0
        assert lorentzian(2.03, 2.0, 60.0) == pytest.approx(0.5)

    def test_spectrum_validation(self):
        with pytest.raises(ValidationError):
            Spectrum([1.0, 0.5], [0.0, 0.0])
        with pytest.raises(ValidationError):
            Spectrum([1.0, 2.0], [0.0])
        with pytest.raises(ValidationError):
            LineshapeConfig(gs_fwhm=0.0)


class TestScan:
    def test_gs_starts_at_d(self):
        rows = frequency_vs_field_scan(SpinSystem(3.48, 0.0, 2.0, label="gs"), [0.0, 1.0, 2.0])
        assert rows[0][2] == pytest.approx(3.48, abs=1e-12) and rows[1][2] == pytest.approx(3.48, abs=1e-12)
        assert {r[1] for r in rows} == {"gs_minus", "gs_plus"}

    def test_asymptotic_slopes(self, es):
        rows = frequency_vs_field_scan(es, [1400.0, 1500.0])
        f = {(b, name): v for b, name, v in rows}
        slope_p = (f[1500.0, "es_plus"] - f[1400.0, "es_plus"]) / 100
        slope_m = (f[1500.0, "es_minus"] - f[1400.0, "es_minus"]) / 100
        # past the crossing the minus line is |D - gB|, climbing with +g
        # g * mu_B / h = 2.04 * 1.3996 = 2.855 MHz/G
        assert slope_p * 1e3 == pytest.approx(2.855, rel=1e-3)
        assert slope_m * 1e3 == pytest.approx(2.855, rel=1e-3)

    def test_es_and_gs_parallel(self, es):
        gs = SpinSystem(3.48, 0.0, 2.0, label="gs")
        B = [200.0, 300.0]
        for sys_ in (es, gs):
            f = [r[2] for r in frequency_vs_field_scan(sys_, B) if r[1].endswith("plus")]
            assert (f[1] - f[0]) / 100 * 1e3 == pytest.approx(sys_.g * 1.3996245, rel=1e-2)

    def test_matches_closed_form(self, es):
        B = np.arange(0.0, 1501.0, 5.0)
        rows = frequency_vs_field_scan(es, B)
        m, p = closed_form(es.D, es.E, es.g, B)
        np.testing.assert_allclose([r[2] for r in rows[0::2]], np.abs(m), atol=1e-9)
        np.testing.assert_allclose([r[2] for r in rows[1::2]], p, atol=1e-9)

    def test_labels_survive_the_crossing(self, es):
        sols, orders = track_branches(es, np.arange(650.0, 800.0, 2.0))
        alpha0 = np.array([s.overlaps[o[0], 0] for s, o in zip(sols, orders)])
        assert np.all(alpha0 > 0.99)

    def test_step_too_large(self):
        es = SpinSystem(2.06, 0.0, 2.04, label="es")
        with pytest.raises(StepTooLarge):
            # one step from zero field to a strong field tilted by 60 degrees:
            # the quantization axis turns, no level keeps half its character
            track_branches(es, [0.0, 5000.0], theta=60.0)

    def test_descending_rejected(self, es):
        with pytest.raises(ValidationError):
            frequency_vs_field_scan(es, [10.0, 0.0])
