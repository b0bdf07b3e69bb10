"""Desk-scale acceptance checks, one test per criterion.

Torus, bands up to 16 (32 for the finest coupling partner), dt = 1e-3,
T = 0.5.  Every check prints one pass/fail line; tolerances are fixed here
and match the stated contracts.
"""

import time

import numpy as np
import pytest
from conftest import direct_eval, fd_derivative, rel_err

from spde.assumptions import OpCache, REGISTRY, audit_samples, fit_inequality, tuples_for
from spde.engine import BrownianDriver, galerkin_state, path_seed, run_batch
from spde.operators import advection, leray_project, make_pair, salt_apply
from spde.spaces import SpectralField, project_n, random_solenoidal, space_weights, wavenumber_grids
from spde.studies import (
    EnsembleConfig,
    InitSpec,
    ModelSpec,
    assumption_audit,
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

pytestmark = pytest.mark.acceptance

MODEL = ModelSpec(kind="salt-ns", nu=0.5, noise_modes=4, xi_amplitude=0.3)
INIT = InitSpec(kind="random", amplitude=1.0, spectrum_slope=2.5, seed=2024)
DT, T = 1e-3, 0.5


def report(name: str, ok: bool, detail: str, t0: float) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {name}: {detail} ({time.time() - t0:.0f}s)"
    print(line, flush=True)
    assert ok, line


def desk(**kw) -> EnsembleConfig:
    base = dict(model=MODEL, init=INIT, levels=(4, 8, 16), paths=96, dt=DT, T=T, M=8.0, chunk=48)
    base.update(kw)
    return EnsembleConfig(**base)


def test_criterion_1_oracle_equivalence(rng):
    t0 = time.time()
    msgs = []

    # finite-difference oracle for the advection product (1e-8 relative)
    u0 = random_solenoidal(3, rng, spectrum_slope=1.0)
    raw = advection(u0, project=False, truncate=False)
    n = 256
    uv = direct_eval(u0, n).real
    ux = np.stack([fd_derivative(uv[c], 0) for c in range(2)])
    uy = np.stack([fd_derivative(uv[c], 1) for c in range(2)])
    err_adv = rel_err(direct_eval(raw, n).real, uv[0] * ux + uv[1] * uy)
    msgs.append(f"advection FD err {err_adv:.1e}")
    ok = err_adv < 1e-8

    # Fourier-symbol drift, exact for band-limited inputs
    heat = make_pair("heat", 6, nu=0.7)
    mode = SpectralField.real_mode(6, (3, 2), (2 / np.sqrt(13), -3 / np.sqrt(13)))
    sym_err = float(np.max(np.abs(heat.drift(0.0, mode).coeffs + 0.7 * 13.0 * mode.coeffs)))
    msgs.append(f"heat symbol err {sym_err:.1e}")
    ok &= sym_err == 0.0

    # analytic heat path statistic to 1e-3 (single mode, deterministic)
    cfg = EnsembleConfig(
        model=ModelSpec(kind="heat", nu=0.5, noise_modes=0),
        init=InitSpec(kind="single-mode", amplitude=1.0, mode=(1, 0)),
        levels=(3,), paths=2, dt=1e-4, T=0.2, M=50.0, deltas=(0.02, 0.01), chunk=2,
    )
    est = moment_bound_study(cfg).cells[0].estimate
    u0sq = galerkin_state(cfg.init.build(3), 3).norm_sq("U")
    exact = u0sq * (1.0 + 2.0 * (1.0 - np.exp(-2 * 0.5 * 0.2)) / (2 * 0.5))
    heat_rel = abs(est - exact) / exact
    msgs.append(f"heat UH stat rel {heat_rel:.1e}")
    ok &= heat_rel < 1e-3

    # additive-OU terminal mean within 3 MC standard errors of the closed form
    kmag = np.sqrt(2.0)
    col = SpectralField.real_mode(2, (1, 1), (0.2 * -1 / kmag, 0.2 * 1 / kmag))
    ou = make_pair("additive-ou", 2, additive_noise=[col])
    x0 = galerkin_state(SpectralField.real_mode(2, (1, 1), (-1 / kmag, 1 / kmag)), 2)
    paths, steps = 400, int(round(0.2 / DT))
    dWs = np.stack([BrownianDriver(path_seed(3, p), 1, DT).increments(steps) for p in range(paths)])
    X0 = np.broadcast_to(x0.coeffs, (paths,) + x0.coeffs.shape).copy()
    res = run_batch(ou, X0, dWs, DT, steps)
    c_sim = res.final[:, 0, 2 + 1, 2 + 1].real
    mean_exact = x0.coeffs[0, 3, 3].real * np.exp(-0.2)
    se = float(np.std(c_sim, ddof=1) / np.sqrt(paths))
    gap = abs(float(np.mean(c_sim)) - mean_exact)
    msgs.append(f"OU mean gap {gap:.2e} vs 3SE {3*se:.2e}")
    ok &= gap <= 3.0 * se

    report("1 (oracle equivalence)", ok, "; ".join(msgs), t0)


def test_criterion_2_energy_identity_first_order():
    t0 = time.time()
    # weak noise keeps the O(dt) terms of the discrete identity dominant over
    # the O(sqrt(dt)) quadratic-variation fluctuation at desk step sizes
    cfg = EnsembleConfig(
        model=ModelSpec(kind="salt-ns", nu=0.5, noise_modes=4, xi_amplitude=0.1),
        init=INIT, levels=(4,), paths=1000, dt=DT, T=T, M=100.0, chunk=200,
    )
    rep = energy_residual_study(cfg, level=4, dts=(DT, DT / 2.0), ratio_band=(1.7, 2.3))
    ratio = rep.details["ratios"][0]
    report(
        "2 (energy identity O(dt))",
        rep.passed,
        f"RMS {rep.details['rms'][0]:.2e} -> {rep.details['rms'][1]:.2e}, ratio {ratio:.2f} in [1.7, 2.3]",
        t0,
    )


def test_criterion_3_uniform_moment_bounds():
    t0 = time.time()
    rep_uh = moment_bound_study(desk(), uniform_tol=0.10)
    hv_cfg = desk(
        model=ModelSpec(kind="salt-ns", nu=1.0, noise_modes=4, xi_amplitude=0.3),
        init=InitSpec(kind="random", amplitude=1.0, spectrum_slope=4.0, seed=2024),
    )
    rep_hv = hv_bound_study(hv_cfg, uniform_tol=0.10)
    ok = rep_uh.passed and rep_hv.passed
    report(
        "3 (uniform moment bounds)",
        ok,
        f"UH dev {rep_uh.details['max_rel_dev']:.3f}, HV dev {rep_hv.details['max_rel_dev']:.3f} vs 0.10",
        t0,
    )


def test_criterion_4_hitting_probability_decay():
    t0 = time.time()
    cfg = desk(
        model=ModelSpec(kind="salt-ns", nu=0.5, noise_modes=4, xi_amplitude=0.5),
        init=InitSpec(kind="random", amplitude=2.0, spectrum_slope=2.5, seed=2024),
        paths=192,
        M=16.0,
        M_list=(2.0, 4.0, 8.0, 16.0),
    )
    rep = hitting_probability_study(cfg, M_list=(2.0, 4.0, 8.0, 16.0), ceiling=0.05)
    freqs = {(c.level, c.param): c.estimate for c in rep.cells}
    report(
        "4 (hitting decay in M)",
        rep.passed,
        f"freqs {sorted(freqs.items())}; sup at M=16: {rep.details['sup_at_largest_M']:.3f} < 0.05",
        t0,
    )


def test_criterion_5_galerkin_cauchy():
    t0 = time.time()
    rep = cauchy_convergence_study(desk(paths=48, chunk=24), m_levels=(4, 8, 16), partner_factor=2)
    ests = [c.estimate for c in rep.cells]
    strictly = all(b < a for a, b in zip(ests, ests[1:]))

    # noise-free heat kind against the analytic tail energy
    cfg = EnsembleConfig(
        model=ModelSpec(kind="heat", nu=0.5, noise_modes=0),
        init=InitSpec(kind="random", amplitude=1.0, spectrum_slope=1.0, seed=7),
        levels=(4,), paths=2, dt=2e-4, T=0.1, M=None, deltas=(0.02, 0.01), chunk=2,
    )
    cell = cauchy_convergence_study(cfg, m_levels=(2,), partner_factor=2).cells[0]
    x0 = galerkin_state(cfg.init.build(4), 4)
    kx, ky = wavenumber_grids(4)
    tail = x0.coeffs * (np.maximum(np.abs(kx), np.abs(ky)) > 2)
    lam = 0.5 * (kx**2 + ky**2)
    a2 = np.sum(np.abs(tail) ** 2, axis=0)
    wh = space_weights(4, "H")
    exact = float(np.sum(a2)) + float(
        np.sum(a2 * wh * (1 - np.exp(-2 * lam * 0.1)) / np.where(lam > 0, 2 * lam, 1.0))
    )
    heat_rel = abs(cell.estimate - exact) / exact
    ok = rep.passed and strictly and heat_rel < 1e-3
    report(
        "5 (Galerkin Cauchy property)",
        ok,
        f"salt-ns diffs {['%.3e' % e for e in ests]} strictly decreasing; heat tail rel {heat_rel:.1e}",
        t0,
    )


def test_criterion_6_tightness_and_equicontinuity():
    t0 = time.time()
    cfg = desk(paths=64, deltas=(0.08, 0.04, 0.02, 0.01), chunk=16)
    rep_inc = increment_tightness_study(cfg)
    rep_fun = functional_tightness_study(cfg)
    rep_equ = equicontinuity_study(cfg)
    ok = rep_inc.passed and rep_fun.passed and rep_equ.passed
    sup_small = rep_inc.details["sup_smallest"]
    sup_large = rep_inc.details["sup_largest"]
    report(
        "6 (tightness and equicontinuity premises)",
        ok,
        f"increment sup {sup_large:.2e} -> {sup_small:.2e} as delta shrinks; "
        f"pairing pass {rep_fun.passed}; equicontinuity pass {rep_equ.passed}",
        t0,
    )


def test_criterion_7_ito_stratonovich_consistency():
    t0 = time.time()
    rep = strat_ito_check(desk(levels=(4,), paths=128, chunk=64), level=4, dts=(DT, DT / 2.0))
    gaps = rep.details["mean_gap"]
    report(
        "7 (Ito-Stratonovich corrector consistency)",
        rep.passed,
        f"mean gap {gaps[0]:.2e} vs resolution {3*rep.details['mean_resolution_se'][0]:.2e}; "
        f"halving ratio {rep.details['gap_ratios'][0]:.2f}",
        t0,
    )


def _transport_apply(phi: SpectralField, xi_field: SpectralField) -> SpectralField:
    """(xi . grad) phi by direct mode convolution (oracle-side helper)."""
    out = SpectralField.zero(phi.band + xi_field.band)
    bp, bx, bo = phi.band, xi_field.band, out.band
    for kx in range(-bp, bp + 1):
        for ky in range(-bp, bp + 1):
            v = phi.coeffs[:, bp + kx, bp + ky]
            if v[0] == 0 and v[1] == 0:
                continue
            for px in range(-bx, bx + 1):
                for py in range(-bx, bx + 1):
                    xv = xi_field.coeffs[:, bx + px, bx + py]
                    if xv[0] == 0 and xv[1] == 0:
                        continue
                    out.coeffs[:, bo + kx + px, bo + ky + py] += 1j * (xv[0] * kx + xv[1] * ky) * v
    return out


def test_criterion_8_assumption_audit(rng):
    t0 = time.time()
    pair = MODEL.pair(4)
    rep = assumption_audit(pair, sets=(1, 2, 3), n_samples=500, seed=7)

    heat = make_pair("heat", 4, nu=0.5)
    samples = audit_samples(4, 120, np.random.default_rng(11))
    fit = fit_inequality(heat, REGISTRY["A1.2"][0], tuples_for(samples, 1), cache=OpCache(heat))
    gamma_target = 2.0 * 0.5 * 0.5
    gamma_ok = abs(fit.gamma - gamma_target) <= 0.05 * gamma_target

    # structural identities at 1e-10
    xi = pair.xi_truncated()
    worst = 0.0
    for _ in range(60):
        u = random_solenoidal(5, rng)
        worst = max(worst, abs(advection(u).inner_u(u)) / max(u.norm_sq("U"), 1e-12))
        for i in range(len(xi)):
            tr = _transport_apply(u, xi.scaled(i))
            worst = max(worst, abs(tr.inner_u(u.pad_to(tr.band))) / max(u.norm_sq("U"), 1e-12))
        raw = SpectralField(5, rng.standard_normal(u.coeffs.shape) + 1j * rng.standard_normal(u.coeffs.shape))
        p1 = leray_project(raw)
        worst = max(worst, float(np.max(np.abs(leray_project(p1).coeffs - p1.coeffs))))
        g = random_solenoidal(5, rng)
        worst = max(worst, abs(project_n(u, 2).inner_u(g) - u.inner_u(project_n(g, 2))))
    ok = rep.passed and gamma_ok and worst < 1e-10
    report(
        "8 (assumption audit)",
        ok,
        f"all fits finite: {rep.passed}; heat gamma {fit.gamma:.4f} vs {gamma_target:.4f}; "
        f"worst structural defect {worst:.1e}",
        t0,
    )


def test_criterion_9_bit_exact_reproducibility(tmp_path):
    t0 = time.time()
    from dataclasses import replace

    from spde.cli import run
    from spde.config import RunConfig

    cfg = replace(
        RunConfig(),
        model=ModelSpec(kind="salt-ns", nu=0.5, noise_modes=3, xi_amplitude=0.3),
        init=INIT,
        levels=(3, 4),
        paths=12,
        T=0.1,
        deltas=(0.02, 0.01),
        m_levels=(2,),
        audit_level=2,
        energy_level=3,
    )
    digests = []
    for cmd in ("simulate", "moments", "tightness"):
        d = []
        for run_id in ("a", "b"):
            man = run(cmd, cfg, out_dir=str(tmp_path / f"{cmd}-{run_id}"))
            d.append({f["name"]: f["sha256"] for f in man["files"]})
        digests.append(d[0] == d[1])
    ok = all(digests)
    report("9 (bit-exact reproducibility)", ok, f"identical digests per command: {digests}", t0)
