"""Monte-Carlo studies against closed forms, plus their reporting contracts."""

import numpy as np
import pytest

from spde.spaces import SpectralField, space_weights, wavenumber_grids
from spde.engine import galerkin_state
from spde.studies import (
    EnsembleConfig,
    InitSpec,
    ModelSpec,
    cauchy_convergence_study,
    energy_residual_study,
    equicontinuity_study,
    functional_tightness_study,
    hitting_probability_study,
    hv_bound_study,
    increment_tightness_study,
    moment_bound_study,
    strat_ito_check,
)

SALT = ModelSpec(kind="salt-ns", nu=0.5, noise_modes=2, xi_amplitude=0.3)


def heat_cfg(**kw):
    base = dict(
        model=ModelSpec(kind="heat", nu=0.5, noise_modes=0),
        init=InitSpec(kind="single-mode", amplitude=1.0, mode=(1, 0)),
        levels=(3,),
        paths=2,
        dt=1e-4,
        T=0.2,
        M=50.0,
        deltas=(0.02, 0.01),
        chunk=8,
    )
    base.update(kw)
    return EnsembleConfig(**base)


def mode_decay_data(cfg, level):
    """Per-mode amplitudes and decay rates of the level-projected initial field."""
    x0 = galerkin_state(cfg.init.build(max(cfg.levels)), level)
    kx, ky = wavenumber_grids(level)
    lam = cfg.model.nu * (kx**2 + ky**2)
    a2 = np.sum(np.abs(x0.coeffs) ** 2, axis=0)
    return a2, lam


def test_moment_zero_pair_zero_init():
    cfg = heat_cfg(model=ModelSpec(kind="zero"), init=InitSpec(kind="zero"))
    rep = moment_bound_study(cfg)
    assert rep.cells[0].estimate == 0.0
    assert rep.cells[0].stderr == 0.0
    assert rep.cells[0].blowups == 0


def test_moment_heat_single_mode_analytic():
    cfg = heat_cfg()
    rep = moment_bound_study(cfg)
    lam = 0.5  # nu |k|^2
    wh = 2.0
    u0sq = galerkin_state(cfg.init.build(3), 3).norm_sq("U")
    exact = u0sq * (1.0 + wh * (1.0 - np.exp(-2 * lam * cfg.T)) / (2.0 * lam))
    assert rep.cells[0].estimate == pytest.approx(exact, rel=1e-3)
    assert rep.cells[0].stderr == 0.0


def test_hv_zero_and_heat_analytic():
    cfg = heat_cfg(model=ModelSpec(kind="zero"), init=InitSpec(kind="zero"))
    assert hv_bound_study(cfg).cells[0].estimate == 0.0
    cfg = heat_cfg()
    rep = hv_bound_study(cfg)
    lam = 0.5
    wh, wv = 2.0, 4.0
    u0sq = galerkin_state(cfg.init.build(3), 3).norm_sq("U")
    exact = u0sq * (wh + wv * (1.0 - np.exp(-2 * lam * cfg.T)) / (2.0 * lam))
    assert rep.cells[0].estimate == pytest.approx(exact, rel=1e-3)


def test_hitting_deterministic_crossing():
    # constant-norm path: uh(t) = u0^2 + h0^2 t crosses M + u0^2 at t = M / h0^2
    cfg = heat_cfg(
        model=ModelSpec(kind="zero"),
        init=InitSpec(kind="single-mode", amplitude=2.0, mode=(2, 0)),
        dt=1e-3,
        T=0.5,
        M_list=(1.5, 4.0, 1e9),
        M=1e9,
        deltas=(0.02, 0.01),
    )
    # |x|_U^2 = 2, h0^2 = (1+4)*2 = 10; crossing times 0.15 and 0.4 < T; 1e9 never
    rep = hitting_probability_study(cfg, M_list=(1.5, 4.0, 1e9), ceiling=0.05)
    by_param = {c.param: c.estimate for c in rep.cells}
    assert by_param[1.5] == 1.0
    assert by_param[4.0] == 1.0
    assert by_param[1e9] == 0.0
    assert rep.passed


def test_hitting_monotone_by_construction(rng):
    cfg = EnsembleConfig(
        model=SALT,
        init=InitSpec(kind="random", amplitude=1.0),
        levels=(2, 4),
        paths=24,
        dt=1e-3,
        T=0.1,
        M=16.0,
        M_list=(2.0, 4.0, 16.0),
        deltas=(0.02, 0.01),
        chunk=24,
    )
    rep = hitting_probability_study(cfg)
    for n in (2, 4):
        freqs = [c.estimate for c in rep.cells if c.level == n]
        assert all(b <= a for a, b in zip(freqs, freqs[1:]))


def test_increment_tightness_constant_and_heat():
    cfg = heat_cfg(model=ModelSpec(kind="zero"))
    rep = increment_tightness_study(cfg)
    assert all(c.estimate == 0.0 for c in rep.cells)
    cfg = heat_cfg(T=0.1, deltas=(0.02, 0.01))
    rep = increment_tightness_study(cfg)
    a2, lam = mode_decay_data(cfg, 3)
    for cell in rep.cells:
        d = cell.param
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(
                lam > 0,
                a2 * (1 - np.exp(-lam * d)) ** 2 * (1 - np.exp(-2 * lam * (cfg.T - d))) / (2 * lam),
                0.0,
            )
        assert cell.estimate == pytest.approx(float(np.sum(term)), rel=2e-3)
    assert rep.passed


def test_functional_tightness_orthogonal_probe_and_heat():
    cfg = heat_cfg(T=0.1, deltas=(0.02, 0.01))
    # probe supported on a mode the dynamics never populates
    probe = SpectralField.real_mode(3, (0, 3), (1.0, 0.0))
    rep = functional_tightness_study(cfg, probe=probe)
    assert all(c.estimate == 0.0 for c in rep.cells)
    # probe equal to the active mode: |<psi_{g+d} - psi_g, f>| has a closed form
    probe2 = cfg.init.build(3)
    rep2 = functional_tightness_study(cfg, probe=probe2)
    lam, g = 0.5, cfg.T / 2.0
    u0sq = probe2.norm_sq("U")
    for cell in rep2.cells:
        d = cell.param
        exact = (np.exp(-lam * g) - np.exp(-lam * (g + d))) * u0sq
        assert cell.estimate == pytest.approx(exact, rel=2e-3)
    assert rep2.passed


def test_equicontinuity_theta_past_horizon_and_constant_norm():
    cfg = heat_cfg(model=ModelSpec(kind="zero"), T=0.1, deltas=(0.02, 0.01))
    rep = equicontinuity_study(cfg, theta=0.1)
    assert all(c.estimate == 0.0 for c in rep.cells)
    rep2 = equicontinuity_study(cfg, theta=0.05)
    h2 = cfg.init.build(3).norm_sq("H")
    for cell in rep2.cells:
        assert cell.estimate == pytest.approx(h2 * cell.param, rel=1e-12)
    assert rep2.passed


def test_cauchy_heat_tail_analytic():
    cfg = EnsembleConfig(
        model=ModelSpec(kind="heat", nu=0.5, noise_modes=0),
        init=InitSpec(kind="random", amplitude=1.0, spectrum_slope=1.0, seed=7),
        levels=(4,),
        paths=2,
        dt=2e-4,
        T=0.1,
        M=None,
        m_levels=(2,),
        deltas=(0.02, 0.01),
        chunk=2,
    )
    rep = cauchy_convergence_study(cfg, m_levels=(2,), partner_factor=2)
    cell = rep.cells[0]
    x0 = galerkin_state(cfg.init.build(4), 4)
    kx, ky = wavenumber_grids(4)
    tail = x0.coeffs * (np.maximum(np.abs(kx), np.abs(ky)) > 2)
    lam = 0.5 * (kx**2 + ky**2)
    a2 = np.sum(np.abs(tail) ** 2, axis=0)
    wh = space_weights(4, "H")
    exact = float(np.sum(a2)) + float(
        np.sum(a2 * wh * (1 - np.exp(-2 * lam * cfg.T)) / np.where(lam > 0, 2 * lam, 1.0))
    )
    assert cell.estimate == pytest.approx(exact, rel=1e-3)
    assert cell.extra["envelope"] == pytest.approx(1.0 / np.sqrt(np.sqrt(10.0)))


def test_cauchy_salt_decreasing_small():
    cfg = EnsembleConfig(
        model=SALT,
        init=InitSpec(kind="random", amplitude=1.0),
        levels=(2,),
        paths=16,
        dt=1e-3,
        T=0.05,
        M=8.0,
        deltas=(0.02, 0.01),
        chunk=16,
    )
    rep = cauchy_convergence_study(cfg, m_levels=(2, 4), partner_factor=2)
    assert rep.cells[0].estimate > rep.cells[1].estimate
    assert rep.passed


def test_study_determinism():
    cfg = EnsembleConfig(
        model=SALT,
        init=InitSpec(kind="random"),
        levels=(2,),
        paths=12,
        dt=1e-3,
        T=0.05,
        M=8.0,
        deltas=(0.02, 0.01),
        chunk=5,  # chunking must not affect values
    )
    a = moment_bound_study(cfg)
    b = moment_bound_study(EnsembleConfig(**{**cfg.__dict__, "chunk": 12}))
    assert a.cells[0].estimate == b.cells[0].estimate
    assert a.cells[0].stderr == b.cells[0].stderr


def test_stderr_scaling_with_paths():
    base = dict(
        model=SALT,
        init=InitSpec(kind="random"),
        levels=(2,),
        dt=1e-3,
        T=0.05,
        M=50.0,
        deltas=(0.02, 0.01),
        chunk=64,
    )
    se_small = moment_bound_study(EnsembleConfig(paths=32, **base)).cells[0].stderr
    se_big = moment_bound_study(EnsembleConfig(paths=128, **base)).cells[0].stderr
    assert se_small / se_big == pytest.approx(2.0, rel=0.25)


def test_blowups_counted_and_fail_study():
    # explicit Euler instability: nu k^2 dt > 2 on the top mode
    cfg = heat_cfg(
        model=ModelSpec(kind="heat", nu=5000.0, noise_modes=0),
        init=InitSpec(kind="random", amplitude=1.0, spectrum_slope=0.5),
        dt=1e-3,
        T=0.3,
        paths=4,
        deltas=(0.02, 0.01),
    )
    rep = moment_bound_study(cfg)
    assert rep.cells[0].blowups == 4
    assert not rep.passed


def test_energy_study_reports_ratio():
    cfg = EnsembleConfig(
        model=ModelSpec(kind="salt-ns", nu=0.5, noise_modes=2, xi_amplitude=0.15),
        init=InitSpec(kind="random"),
        levels=(4,),
        paths=48,
        dt=1e-3,
        T=0.2,
        M=100.0,
        deltas=(0.02, 0.01),
        chunk=48,
    )
    rep = energy_residual_study(cfg, level=4)
    assert len(rep.details["rms"]) == 2
    assert rep.details["ratios"][0] > 1.0


def test_strat_check_noise_free_documents_order_gap():
    cfg = heat_cfg(T=0.1, dt=1e-3, deltas=(0.02, 0.01), paths=4)
    rep = strat_ito_check(cfg, level=3)
    assert rep.details["noise_free_note"]
    # deterministic schemes: paired SE is zero, gap is the pure order mismatch
    assert rep.details["mean_gap"][0] > 0


def test_report_serialization_shapes():
    cfg = heat_cfg()
    rep = moment_bound_study(cfg)
    rows = list(rep.csv_rows())
    assert rows[0][0] == "study"
    assert len(rows) == 1 + len(rep.cells)
    s = rep.summary()
    assert set(s) == {"study", "passed", "margin", "cells", "details"}


def test_config_invariants():
    with pytest.raises(ValueError, match="divide"):
        EnsembleConfig(dt=0.3, T=1.0)
    with pytest.raises(ValueError, match="multiple"):
        EnsembleConfig(deltas=(0.0305,))
    with pytest.raises(ValueError, match="M must exceed"):
        EnsembleConfig(M=0.5)
    with pytest.raises(ValueError, match="paths"):
        EnsembleConfig(paths=1)


def test_init_spec_kinds():
    tg = InitSpec(kind="taylor-green", amplitude=2.0).build(4)
    tg.validate()
    assert InitSpec(kind="zero").build(3).norm_sq("U") == 0.0
    a = InitSpec(kind="random", seed=5).build(4)
    b = InitSpec(kind="random", seed=5).build(4)
    assert np.array_equal(a.coeffs, b.coeffs)
    with pytest.raises(ValueError, match="init kind"):
        InitSpec(kind="warp").build(3)
