import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import lossy_transfer
from dgbs.errors import ConfigurationError, SchemaError
from dgbs.experiment import simulate_records
from dgbs.metrics import tvd
from dgbs.probability import StateKernel, distribution_from_kernel
from dgbs.reconstruction import (MeasurementRecord, fit_fringe,
                                 fit_fringe_windows, gauge_fix, reconstruct,
                                 records_from_csv, records_to_csv)
from dgbs.states import SourceConfig, build_input_state, propagate

PHI_GRID = np.linspace(0, 10 * math.pi, 120, endpoint=False)


def ground_truth(cfg, d, eta, seed):
    t = lossy_transfer(d, eta, seed)
    kern = StateKernel.from_state(propagate(build_input_state(cfg, d), t))
    return t, kern


class TestFringeFit:
    def test_exact_recovery(self):
        phi = np.linspace(0, 2 * math.pi, 24, endpoint=False)
        y = 1.3 + 0.4 * np.cos(2 * phi + 0.9)
        fit = fit_fringe(phi, y)
        assert fit.offset == pytest.approx(1.3, abs=1e-12)
        assert fit.amplitude == pytest.approx(0.4, abs=1e-12)
        assert fit.phase == pytest.approx(0.9, abs=1e-12)
        assert fit.residual < 1e-12

    def test_noisy_recovery_with_weights(self):
        rng = np.random.default_rng(5)
        phi = np.linspace(0, 2 * math.pi, 48, endpoint=False)
        sig = np.full_like(phi, 0.01)
        y = 1.0 + 0.3 * np.cos(2 * phi - 1.2) + rng.normal(0, 0.01, phi.size)
        fit = fit_fringe(phi, y, sig)
        assert fit.offset == pytest.approx(1.0, abs=0.01)
        assert fit.phase == pytest.approx(-1.2, abs=0.05)
        assert fit.sigma_phase < 0.05

    def test_short_scan_rejected(self):
        phi = np.linspace(0, math.pi, 10)
        with pytest.raises(ConfigurationError):
            fit_fringe(phi, np.ones_like(phi))

    def test_windows_average_best(self):
        rng = np.random.default_rng(2)
        phi = np.linspace(0, 10 * math.pi, 300, endpoint=False)
        y = 0.8 + 0.2 * np.cos(2 * phi + 0.4) + rng.normal(0, 0.005, phi.size)
        fit = fit_fringe_windows(phi, y, np.full_like(phi, 0.005), n_best=3)
        assert fit.amplitude == pytest.approx(0.2, abs=0.01)
        assert fit.phase == pytest.approx(0.4, abs=0.05)


class TestRecordsIO:
    def test_csv_round_trip(self):
        cfg = SourceConfig(r=0.3, alpha_mag=0.6)
        t = lossy_transfer(4, 0.5, seed=1)
        recs = simulate_records(cfg, t, second_input_port=3,
                                phi_grid=PHI_GRID[:60],
                                pulses_per_setting=math.inf,
                                include_collisions=True)
        back = records_from_csv(records_to_csv(recs))
        for name, rec in recs.items():
            assert_allclose(back[name].singles, rec.singles, atol=1e-14)
            for key, v in rec.twofolds.items():
                assert_allclose(back[name].twofolds[key], v, atol=1e-14)
            assert_allclose(back[name].p_vac, rec.p_vac, atol=1e-14)

    def test_bad_header_rejected(self):
        with pytest.raises(SchemaError):
            records_from_csv("nope\n1,2,3\n")

    def test_rates_validated(self):
        with pytest.raises(ConfigurationError):
            MeasurementRecord("blocked", 2, math.inf, 0.9,
                              np.array([0.1, 1.5]), {})


class TestRoundTrip:
    def test_noiseless_with_second_input(self):
        cfg = SourceConfig(r=0.4, alpha_mag=0.8)
        t = lossy_transfer(5, 0.4, seed=7)
        truth = StateKernel.from_state(propagate(build_input_state(cfg, 5), t))
        recs = simulate_records(cfg, t, second_input_port=3,
                                phi_grid=PHI_GRID,
                                pulses_per_setting=math.inf,
                                include_collisions=True)
        res = reconstruct(recs)
        assert res.flags == []
        b2, c2, gmag, _ = gauge_fix(truth.a.b, truth.a.c,
                                    truth.gamma.gamma[:5])
        assert_allclose(res.gamma, gmag, atol=1e-10)
        assert_allclose(res.b, b2, atol=1e-10)
        assert_allclose(res.c, c2, atol=1e-10)

    def test_threefold_distribution_matches(self):
        cfg = SourceConfig(r=0.35, alpha_mag=0.7)
        t = lossy_transfer(5, 0.5, seed=9)
        truth = StateKernel.from_state(propagate(build_input_state(cfg, 5), t))
        recs = simulate_records(cfg, t, second_input_port=3,
                                phi_grid=PHI_GRID,
                                pulses_per_setting=math.inf,
                                include_collisions=True)
        res = reconstruct(recs)
        da = distribution_from_kernel(res.to_kernel(), 3)
        db = distribution_from_kernel(truth, 3)
        assert tvd(da, db) < 1e-10

    def test_missing_settings_rejected(self):
        with pytest.raises(ConfigurationError):
            reconstruct({})

    def test_fallback_optimizer_without_second_input(self):
        cfg = SourceConfig(r=0.35, alpha_mag=0.7)
        t = lossy_transfer(4, 0.5, seed=3)
        truth = StateKernel.from_state(propagate(build_input_state(cfg, 4), t))
        recs = simulate_records(cfg, t, second_input_port=None,
                                phi_grid=PHI_GRID[:60],
                                pulses_per_setting=math.inf,
                                include_collisions=True)
        three = distribution_from_kernel(truth, 3)
        res = reconstruct(recs, threefolds=three, seed=0)
        assert res.fallback_entries  # Im C signs were undetermined
        assert res.optimizer_report["best_tvd"] < 1e-6

    def test_without_pnr_diagonal_distribution_still_exact(self):
        # B_jj never enters collision-free pattern probabilities
        cfg = SourceConfig(r=0.4, alpha_mag=0.8)
        t = lossy_transfer(5, 0.4, seed=11)
        truth = StateKernel.from_state(propagate(build_input_state(cfg, 5), t))
        recs = simulate_records(cfg, t, second_input_port=3,
                                phi_grid=PHI_GRID,
                                pulses_per_setting=math.inf,
                                include_collisions=False)
        res = reconstruct(recs)
        assert not res.diag_known.any()
        da = distribution_from_kernel(res.to_kernel(), 3)
        db = distribution_from_kernel(truth, 3)
        assert tvd(da, db) < 1e-10

    def test_result_json_round_trips(self):
        import json
        cfg = SourceConfig(r=0.3, alpha_mag=0.6)
        t = lossy_transfer(4, 0.5, seed=2)
        recs = simulate_records(cfg, t, second_input_port=3,
                                phi_grid=PHI_GRID[:60],
                                pulses_per_setting=math.inf,
                                include_collisions=True)
        res = reconstruct(recs)
        obj = json.loads(res.to_json())
        assert obj["d"] == 4
        assert len(obj["b"]) == 4


class TestGauge:
    def test_gauge_fix_preserves_statistics(self):
        from dgbs.states import AMatrix, GammaVector
        cfg = SourceConfig(r=0.4, alpha_mag=0.8, phi=1.3)
        t = lossy_transfer(4, 0.5, seed=6)
        kern = StateKernel.from_state(propagate(build_input_state(cfg, 4), t))
        b2, c2, gmag, _ = gauge_fix(kern.a.b, kern.a.c, kern.gamma.gamma[:4])
        fixed = StateKernel(AMatrix(4, b2, c2),
                            GammaVector.from_halves(gmag.astype(complex)), 0.0)
        da = distribution_from_kernel(kern, 2)
        db = distribution_from_kernel(fixed, 2)
        assert tvd(da, db) < 1e-12

    def test_gamma_becomes_real(self):
        g = np.array([1 + 1j, -2.0, 0.5j])
        _, _, mag, theta = gauge_fix(np.zeros((3, 3)), np.zeros((3, 3)), g)
        assert_allclose(mag, np.abs(g))
        assert_allclose(np.abs(g * np.exp(-1j * theta) - mag), 0, atol=1e-15)
