import math

import pytest

import pcwqd


def test_transmission_on_resonance():
    m = pcwqd.EmitterModel(gamma_tot=1e9, beta=0.5)
    assert pcwqd.transmission(m, 0.0) == pytest.approx(0.25)
    assert pcwqd.transmission(m, 0.5e9) == pytest.approx(0.625)


def test_fit_scan_recovers_linewidth():
    m = pcwqd.EmitterModel(gamma_tot=400e6, beta=0.7)
    axis = [10e6 * k for k in range(-300, 301)]
    fits = pcwqd.fit_scan(axis, pcwqd.transmission_spectrum(m, axis))
    assert len(fits) == 1
    assert fits[0].gamma_rt == pytest.approx(400e6, rel=1e-6)
    assert fits[0].beta_eff == pytest.approx(0.7, rel=1e-6)


def test_population_scan():
    axis, values = pcwqd.synthesize_scan(seed=1)
    summary = pcwqd.linewidth_statistics(pcwqd.fit_scan(axis, values))
    assert summary.total == 79
    assert 46 <= summary.fitted <= 56


def test_decay_and_ratio():
    edges, counts, irf = pcwqd.synthesize_decay(2 * math.pi * 460e6, seed=1)
    fit = pcwqd.fit_decay(edges, counts, irf)
    assert fit.transform_limit == pytest.approx(460e6, rel=0.02)
    value, sigma = pcwqd.transform_ratio(538e6, 5e6, fit.transform_limit, fit.transform_limit_sigma)
    assert value == pytest.approx(1.17, abs=0.05)
    assert sigma > 0


def test_diode_fit():
    p = pcwqd.DiodeParams()
    v = [-1.5 + 0.025 * k for k in range(141)]
    i = [pcwqd.diode_current(p, x) for x in v]
    assert pcwqd.diode_current(p, -1.0) == pytest.approx(-0.1e-9, rel=0.01)
    fit = pcwqd.fit_iv(v, i)
    assert fit.r_s == pytest.approx(7e3, rel=0.02)
    assert fit.r_p == pytest.approx(10e9, rel=0.02)


def test_switching():
    d = pcwqd.RcDrive()
    d.i0 = 1.0
    assert pcwqd.switching_intensity(d, 0.0) == pytest.approx(0.0156, abs=1e-4)
    assert pcwqd.cutoff_frequency(0.4e-6) == pytest.approx(397.9e3, rel=1e-4)
    assert pcwqd.capacitance(0.4e-6, 7e3) == pytest.approx(57.1e-12, rel=1e-3)
    f = [100 * (6e5) ** (k / 59) for k in range(60)]
    d.i0 = 1e4
    data = [pcwqd.switching_intensity(d, x) for x in f]
    start = pcwqd.RcDrive()
    start.tau_rc = 1e-6
    start.i0 = 5e3
    assert pcwqd.fit_tau_rc(f, data, start)["tau_rc"] == pytest.approx(0.4e-6, rel=0.03)


def test_geometry():
    presets = pcwqd.region_presets()
    assert set(presets) == {"core", "two-row", "three-row"}
    d = pcwqd.solve_distance(presets["core"], 51 / 79)
    assert d * 1e9 == pytest.approx(53.2138, abs=1e-3)
    f_hat, sigma = pcwqd.monte_carlo_fraction(presets["core"], d, 200000, 3)
    assert abs(f_hat - 51 / 79) < 3 * sigma


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        pcwqd.EmitterModel(beta=1.5)
    with pytest.raises(pcwqd.FitError):
        pcwqd.solve_distance(pcwqd.PcwGeometry(), 0.01, 30e-9)


def test_run_experiment_report():
    report = pcwqd.run_experiment("iv", seed=3)
    assert report["kind"] == "iv"
    assert "results" in report
