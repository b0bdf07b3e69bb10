"""Monte-Carlo estimators for the qualitative estimates behind the Galerkin scheme.

Each study runs a seeded path ensemble and reduces it to point estimates with
standard errors (sample std / sqrt(paths)), one cell per (level, parameter)
pair.  Monotonicity contracts carry a two-standard-error slack; uniformity
contracts compare level means against their median.  Paths that blow up are
counted and excluded from estimates; more than 1% of them fails a study.

Everything is deterministic given (config, master_seed): per-path driver seeds
derive from (master_seed, path_index) only, so ensembles are independent of
chunking and scheduling, and the same seeds couple all Galerkin levels through
common increments (the common-random-number coupling the Cauchy study needs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assumptions import ASSUMPTION_SETS, OpCache, REGISTRY, audit_samples, fit_inequality, tuples_for
from .engine import (
    BrownianDriver,
    galerkin_state,
    path_seed,
    run_batch,
    run_coupled_batch,
)
from .operators import (
    NSParams,
    OperatorPair,
    SaltCoefficients,
    default_xi_library,
    load_xi_spectrum,
    make_pair,
)
from .spaces import SpectralField, mu_level, random_solenoidal, taylor_green

BLOWUP_BUDGET = 0.01


@dataclass(frozen=True)
class ModelSpec:
    """Operator configuration, instantiable at any Galerkin level."""

    kind: str = "salt-ns"
    nu: float = 0.5
    noise_modes: int = 4
    xi_amplitude: float = 0.3
    xi_decay: float = 0.5
    xi_phase_seed: int | None = None
    xi_file: str | None = None
    additive_mode: tuple[int, int] = (1, 0)
    additive_amplitude: float = 0.1

    def xi(self) -> SaltCoefficients | None:
        if self.kind != "salt-ns":
            return None
        if self.xi_file:
            return load_xi_spectrum(self.xi_file)
        return default_xi_library(
            self.noise_modes, 1, self.xi_amplitude, self.xi_decay, self.xi_phase_seed
        )

    def pair(self, level: int) -> OperatorPair:
        if self.kind == "salt-ns":
            return OperatorPair("salt-ns", level, params=NSParams(self.nu, self.noise_modes), xi=self.xi())
        additive = None
        if self.kind in ("heat", "additive-ou") and self.noise_modes > 0:
            additive = [self._additive_field(level, i) for i in range(self.noise_modes)]
        if self.kind == "heat":
            return make_pair("heat", level, nu=self.nu, additive_noise=additive)
        if self.kind == "zero":
            return make_pair("zero", level)
        if self.kind == "additive-ou":
            return make_pair("additive-ou", level, additive_noise=additive)
        raise ValueError(f"unknown model kind {self.kind!r}")

    def _additive_field(self, level: int, i: int) -> SpectralField:
        kx, ky = self.additive_mode
        kx, ky = kx + (i % 2), ky + (i // 2) % 2
        if kx == 0 and ky == 0:
            kx = 1
        kmag = math.hypot(kx, ky)
        perp = (-ky / kmag, kx / kmag)
        a = 0.5 * self.additive_amplitude * self.xi_decay**i
        return SpectralField.real_mode(level, (kx, ky), (a * perp[0], a * perp[1]))


@dataclass(frozen=True)
class InitSpec:
    """Deterministic or seeded initial condition, projected per level."""

    kind: str = "random"  # random | taylor-green | single-mode | zero
    amplitude: float = 1.0
    spectrum_slope: float = 1.5
    seed: int = 2024
    clip: float | None = None
    mode: tuple[int, int] = (1, 0)

    def build(self, band: int) -> SpectralField:
        if self.kind == "zero":
            return SpectralField.zero(band)
        if self.kind == "taylor-green":
            return taylor_green(band, self.amplitude)
        if self.kind == "single-mode":
            kx, ky = self.mode
            kmag = math.hypot(kx, ky)
            perp = (-ky / kmag, kx / kmag)
            a = 0.5 * self.amplitude
            return SpectralField.real_mode(band, (kx, ky), (a * perp[0], a * perp[1]))
        if self.kind == "random":
            rng = np.random.default_rng(np.random.SeedSequence((self.seed, 0x1C0)))
            return random_solenoidal(
                band, rng, self.spectrum_slope, target_norm_u=self.amplitude, clip_norm_u=self.clip
            )
        raise ValueError(f"unknown init kind {self.kind!r}")


@dataclass(frozen=True)
class EnsembleConfig:
    """What an ensemble study runs: model, grid, thresholds, sizes, seeds."""

    model: ModelSpec = ModelSpec()
    init: InitSpec = InitSpec()
    levels: tuple[int, ...] = (4, 8, 16)
    paths: int = 128
    master_seed: int = 12345
    dt: float = 1e-3
    T: float = 0.5
    M: float | None = 8.0
    M_list: tuple[float, ...] = (2.0, 4.0, 8.0, 16.0)
    deltas: tuple[float, ...] = (0.08, 0.04, 0.02, 0.01)
    m_levels: tuple[int, ...] = (4, 8, 16)
    partner_factor: int = 2
    probe_mode: tuple[int, int] = (1, 0)
    probe_time: float | None = None  # default T/2
    theta: float | None = None  # default T/2
    scheme: str = "euler"
    chunk: int = 64

    def __post_init__(self):
        if self.paths < 2:
            raise ValueError("an ensemble needs at least 2 paths")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError("dt must divide T")
        for d in self.deltas:
            r = d / self.dt
            if abs(r - round(r)) > 1e-9 * max(1.0, r):
                raise ValueError(f"delta {d} is not a multiple of dt")
            if not (0 < d < self.T):
                raise ValueError(f"delta {d} outside (0, T)")
        if self.M is not None and self.M <= 1:
            raise ValueError("threshold M must exceed 1")
        for m in self.M_list:
            if m <= 1:
                raise ValueError("every threshold in M_list must exceed 1")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class CellEstimate:
    level: int
    param: object
    estimate: float
    stderr: float
    paths: int
    blowups: int
    passed: bool = True
    extra: dict = field(default_factory=dict)


@dataclass
class EstimateReport:
    study: str
    cells: list[CellEstimate]
    passed: bool
    margin: float
    details: dict = field(default_factory=dict)

    def csv_rows(self):
        yield ("study", "level", "param", "estimate", "stderr", "paths", "blowups", "pass")
        for c in self.cells:
            yield (self.study, c.level, c.param, repr(c.estimate), repr(c.stderr), c.paths, c.blowups, int(c.passed))

    def summary(self) -> dict:
        return {
            "study": self.study,
            "passed": bool(self.passed),
            "margin": self.margin,
            "cells": [
                {
                    "level": c.level,
                    "param": c.param,
                    "estimate": c.estimate,
                    "stderr": c.stderr,
                    "paths": c.paths,
                    "blowups": c.blowups,
                    "pass": bool(c.passed),
                    **({"extra": c.extra} if c.extra else {}),
                }
                for c in self.cells
            ],
            "details": self.details,
        }


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        return float("nan"), float("nan")
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return mean, se


def _chunks(total: int, size: int):
    for lo in range(0, total, size):
        yield lo, min(lo + size, total)


def _driver_block(cfg: EnsembleConfig, indices, m: int, steps: int, dt: float | None = None) -> np.ndarray | None:
    if m == 0:
        return None
    dt = cfg.dt if dt is None else dt
    return np.stack(
        [BrownianDriver(path_seed(cfg.master_seed, i), m, dt).increments(steps) for i in indices]
    )


def _ensemble(cfg: EnsembleConfig, pair: OperatorPair, x0: SpectralField, M, state_hook_factory=None,
              track_energy: bool = False, dt: float | None = None, T: float | None = None,
              scheme: str | None = None):
    """Chunked batch runs; yields (index_range, BatchResult, hook) per chunk."""
    dt = cfg.dt if dt is None else dt
    T = cfg.T if T is None else T
    steps = int(round(T / dt))
    x = galerkin_state(x0, pair.band)
    for lo, hi in _chunks(cfg.paths, cfg.chunk):
        idx = range(lo, hi)
        dWs = _driver_block(cfg, idx, pair.m, steps, dt)
        X0 = np.broadcast_to(x.coeffs, (hi - lo,) + x.coeffs.shape).copy()
        hook = state_hook_factory(hi - lo, pair.band, steps) if state_hook_factory else None
        res = run_batch(
            pair,
            X0,
            dWs,
            dt,
            steps,
            M=M,
            scheme=scheme or cfg.scheme,
            state_hook=hook,
            track_energy=track_energy,
        )
        yield (lo, hi), res, hook


def _uniformity_cells(study: str, cfg: EnsembleConfig, per_level_values: dict, tol: float) -> EstimateReport:
    cells = []
    means = {}
    total_blow = 0
    for n, (vals, blow) in per_level_values.items():
        mean, se = _mean_se(vals)
        means[n] = mean
        total_blow += blow
        cells.append(CellEstimate(n, None, mean, se, len(vals) + blow, blow))
    med = float(np.median(list(means.values())))
    dev = max(abs(m - med) / med for m in means.values()) if med > 0 else float("inf")
    blow_frac = total_blow / max(1, len(cfg.levels) * cfg.paths)
    passed = dev <= tol and blow_frac <= BLOWUP_BUDGET
    for c in cells:
        c.passed = passed
    return EstimateReport(
        study,
        cells,
        passed,
        margin=tol - dev,
        details={"median": med, "max_rel_dev": dev, "tolerance": tol, "levels": list(cfg.levels)},
    )


def moment_bound_study(cfg: EnsembleConfig, uniform_tol: float = 0.10) -> EstimateReport:
    """E ||psi^n||^2_{UH,T} across levels; uniform-in-n within the tolerance.

    Runs the plain Galerkin system (no stopping, gate open) so the estimate is
    the unstopped path energy up to T.
    """
    x0 = cfg.init.build(max(cfg.levels))
    per_level = {}
    for n in cfg.levels:
        pair = cfg.model.pair(n)
        vals, blow = [], 0
        for _, res, _ in _ensemble(cfg, pair, x0, M=None):
            ok = res.blow_index < 0
            blow += int(np.sum(~ok))
            vals.extend(res.uh[ok, -1].tolist())
        per_level[n] = (np.array(vals), blow)
    return _uniformity_cells("moments", cfg, per_level, uniform_tol)


def hv_bound_study(cfg: EnsembleConfig, uniform_tol: float = 0.10) -> EstimateReport:
    """E ||psi^n||^2_{HV, tau} across levels (stopped at the UH hitting time)."""
    x0 = cfg.init.build(max(cfg.levels))
    per_level = {}
    for n in cfg.levels:
        pair = cfg.model.pair(n)
        vals, blow = [], 0
        for _, res, _ in _ensemble(cfg, pair, x0, M=cfg.M):
            ok = res.blow_index < 0
            blow += int(np.sum(~ok))
            vals.extend(res.hv[ok, -1].tolist())
        per_level[n] = (np.array(vals), blow)
    return _uniformity_cells("hv-bounds", cfg, per_level, uniform_tol)


def hitting_probability_study(
    cfg: EnsembleConfig, M_list: tuple[float, ...] | None = None, ceiling: float = 0.05
) -> EstimateReport:
    """Empirical P(tau^{M,T} <= T) per (level, M); nonincreasing in M.

    One simulation per path at the largest threshold serves every M: the
    hitting times are nested on the same path, so the smaller thresholds cross
    within the recorded prefix.
    """
    M_list = tuple(M_list if M_list is not None else cfg.M_list)
    M_max = max(M_list)
    x0 = cfg.init.build(max(cfg.levels))
    cells = []
    sup_at_max = 0.0
    monotone_ok = True
    total_blow = 0
    for n in cfg.levels:
        pair = cfg.model.pair(n)
        hits = {m: 0 for m in M_list}
        count = 0
        for _, res, _ in _ensemble(cfg, pair, x0, M=M_max):
            ok = res.blow_index < 0
            total_blow += int(np.sum(~ok))
            uh = res.uh[ok]
            base = res.norm_u_sq[ok, 0]
            count += uh.shape[0]
            for m in M_list:
                hits[m] += int(np.sum(np.any(uh >= (m + base)[:, None], axis=1)))
        prev = None
        for m in M_list:
            f = hits[m] / count
            se = math.sqrt(max(f * (1 - f), 0.0) / count)
            if prev is not None:
                f_prev, se_prev = prev
                if f > f_prev + 2.0 * math.hypot(se, se_prev):
                    monotone_ok = False
            prev = (f, se)
            cells.append(CellEstimate(n, m, f, se, count, 0))
        sup_at_max = max(sup_at_max, hits[M_max] / count)
    blow_frac = total_blow / max(1, len(cfg.levels) * cfg.paths)
    passed = monotone_ok and sup_at_max < ceiling and blow_frac <= BLOWUP_BUDGET
    for c in cells:
        c.passed = passed
    return EstimateReport(
        "hitting",
        cells,
        passed,
        margin=ceiling - sup_at_max,
        details={"M_list": list(M_list), "ceiling": ceiling, "sup_at_largest_M": sup_at_max},
    )


class _IncrementHook:
    """Ring buffer accumulating dt * sum_s ||X_{s+delta} - X_s||_U^2 per delta."""

    def __init__(self, B: int, band: int, steps: int, d_steps: list[int], dt: float):
        self.d_steps = d_steps
        self.dt = dt
        self.steps = steps
        self.depth = max(d_steps) + 1
        k = 2 * band + 1
        self.buf = np.zeros((self.depth, B, 2, k, k), dtype=np.complex128)
        self.acc = {d: np.zeros(B) for d in d_steps}

    def __call__(self, j: int, X: np.ndarray) -> None:
        self.buf[j % self.depth] = X
        if j >= self.steps:  # integral runs over s in [0, T - delta)
            return
        for d in self.d_steps:
            if j >= d:
                diff = X - self.buf[(j - d) % self.depth]
                self.acc[d] += np.sum(diff.real**2 + diff.imag**2, axis=(-3, -2, -1)) * self.dt


def increment_tightness_study(cfg: EnsembleConfig, deltas: tuple[float, ...] | None = None) -> EstimateReport:
    """E int_0^{T-delta} ||psi^{n,M}_{s+delta} - psi^{n,M}_s||_U^2 ds per (n, delta).

    Decreases as delta shrinks, uniformly over the level list.
    """
    deltas = tuple(deltas if deltas is not None else cfg.deltas)
    d_steps = [int(round(d / cfg.dt)) for d in deltas]
    x0 = cfg.init.build(max(cfg.levels))
    cells = []
    total_blow = 0
    sup_small, sup_large = 0.0, 0.0
    order = sorted(range(len(deltas)), key=lambda i: -deltas[i])
    monotone_ok = True
    for n in cfg.levels:
        pair = cfg.model.pair(n)
        per_delta = {d: [] for d in d_steps}
        blow = 0

        def factory(B, band, steps):
            return _IncrementHook(B, band, steps, d_steps, cfg.dt)

        for _, res, hook in _ensemble(cfg, pair, x0, M=cfg.M, state_hook_factory=factory):
            ok = res.blow_index < 0
            blow += int(np.sum(~ok))
            for d in d_steps:
                per_delta[d].extend(hook.acc[d][ok].tolist())
        total_blow += blow
        stats = {}
        for d, delta in zip(d_steps, deltas):
            mean, se = _mean_se(np.array(per_delta[d]))
            stats[delta] = (mean, se)
            cells.append(CellEstimate(n, delta, mean, se, len(per_delta[d]), blow))
        for a, b in zip(order, order[1:]):  # larger delta -> smaller delta
            ma, sa = stats[deltas[a]]
            mb, sb = stats[deltas[b]]
            if mb > ma + 2.0 * math.hypot(sa, sb):
                monotone_ok = False
        sup_small = max(sup_small, stats[min(deltas)][0])
        sup_large = max(sup_large, stats[max(deltas)][0])
    blow_frac = total_blow / max(1, len(cfg.levels) * cfg.paths)
    passed = monotone_ok and sup_small <= sup_large and blow_frac <= BLOWUP_BUDGET
    for c in cells:
        c.passed = passed
    return EstimateReport(
        "tightness",
        cells,
        passed,
        margin=sup_large - sup_small,
        details={"deltas": list(deltas), "sup_smallest": sup_small, "sup_largest": sup_large},
    )


class _PairingHook:
    """Series of U-pairings <X_j, probe> along the batch."""

    def __init__(self, B: int, steps: int, probe: np.ndarray):
        self.probe = probe
        self.series = np.zeros((B, steps + 1))

    def __call__(self, j: int, X: np.ndarray) -> None:
        self.series[:, j] = np.real(np.sum(X * np.conj(self.probe), axis=(-3, -2, -1)))


def functional_tightness_study(
    cfg: EnsembleConfig,
    probe: SpectralField | None = None,
    deltas: tuple[float, ...] | None = None,
    gamma_time: float | str | None = None,
) -> EstimateReport:
    """E |<psi^{n,M}_{(gamma+delta)^T} - psi^{n,M}_gamma, f>_U| per (n, delta).

    gamma is the stopping family min(hit time, gamma_time); "hit" uses the
    hitting time alone (zero increments on stopped paths, by construction).
    """
    deltas = tuple(deltas if deltas is not None else cfg.deltas)
    d_steps = [int(round(d / cfg.dt)) for d in deltas]
    gt = cfg.probe_time if gamma_time is None else gamma_time
    if gt is None:
        gt = cfg.T / 2.0
    x0 = cfg.init.build(max(cfg.levels))
    cells = []
    total_blow = 0
    monotone_ok = True
    order = sorted(range(len(deltas)), key=lambda i: -deltas[i])
    for n in cfg.levels:
        pair = cfg.model.pair(n)
        f = probe if probe is not None else _default_probe(cfg, n)
        fc = galerkin_state(f, n).coeffs if f.band != n else f.coeffs
        per_delta = {d: [] for d in d_steps}
        blow = 0

        def factory(B, band, steps, fc=fc):
            return _PairingHook(B, steps, fc)

        for _, res, hook in _ensemble(cfg, pair, x0, M=cfg.M, state_hook_factory=factory):
            ok = res.blow_index < 0
            blow += int(np.sum(~ok))
            S = hook.series.shape[1] - 1
            hit = np.where(res.hit_index >= 0, res.hit_index, S)
            if gt == "hit":
                g_idx = np.minimum(hit, S)
            else:
                g_idx = np.minimum(hit, int(round(float(gt) / cfg.dt)))
            rows = np.arange(hook.series.shape[0])
            for d in d_steps:
                upper = np.minimum(g_idx + d, S)
                vals = np.abs(hook.series[rows, upper] - hook.series[rows, g_idx])
                per_delta[d].extend(vals[ok].tolist())
        total_blow += blow
        stats = {}
        for d, delta in zip(d_steps, deltas):
            mean, se = _mean_se(np.array(per_delta[d]))
            stats[delta] = (mean, se)
            cells.append(CellEstimate(n, delta, mean, se, len(per_delta[d]), blow))
        for a, b in zip(order, order[1:]):
            ma, sa = stats[deltas[a]]
            mb, sb = stats[deltas[b]]
            if mb > ma + 2.0 * math.hypot(sa, sb):
                monotone_ok = False
    blow_frac = total_blow / max(1, len(cfg.levels) * cfg.paths)
    passed = monotone_ok and blow_frac <= BLOWUP_BUDGET
    for c in cells:
        c.passed = passed
    return EstimateReport(
        "tightness-functional",
        cells,
        passed,
        margin=0.0 if passed else -1.0,
        details={"deltas": list(deltas), "gamma_time": gt},
    )


def _default_probe(cfg: EnsembleConfig, level: int) -> SpectralField:
    kx, ky = cfg.probe_mode
    kmag = math.hypot(kx, ky)
    perp = (-ky / kmag, kx / kmag)
    return SpectralField.real_mode(level, (kx, ky), (0.5 * perp[0], 0.5 * perp[1]))


def equicontinuity_study(
    cfg: EnsembleConfig, deltas: tuple[float, ...] | None = None, theta: float | str | None = None
) -> EstimateReport:
    """E[||psi^n||^2_{UH,(theta+delta)^tau} - ||psi^n||^2_{UH,theta^tau}] per (n, delta)."""
    deltas = tuple(deltas if deltas is not None else cfg.deltas)
    d_steps = [int(round(d / cfg.dt)) for d in deltas]
    th = cfg.theta if theta is None else theta
    if th is None:
        th = cfg.T / 2.0
    x0 = cfg.init.build(max(cfg.levels))
    cells = []
    total_blow = 0
    monotone_ok = True
    order = sorted(range(len(deltas)), key=lambda i: -deltas[i])
    for n in cfg.levels:
        pair = cfg.model.pair(n)
        per_delta = {d: [] for d in d_steps}
        blow = 0
        for _, res, _ in _ensemble(cfg, pair, x0, M=cfg.M):
            ok = res.blow_index < 0
            blow += int(np.sum(~ok))
            S = res.uh.shape[1] - 1
            if th == "hit":
                t_idx = np.where(res.hit_index >= 0, np.minimum(res.hit_index, S), S)
            else:
                t_idx = np.full(res.uh.shape[0], min(int(round(float(th) / cfg.dt)), S))
            rows = np.arange(res.uh.shape[0])
            base = res.uh[rows, t_idx]
            for d in d_steps:
                upper = np.minimum(t_idx + d, S)
                vals = res.uh[rows, upper] - base
                per_delta[d].extend(vals[ok].tolist())
        total_blow += blow
        stats = {}
        for d, delta in zip(d_steps, deltas):
            mean, se = _mean_se(np.array(per_delta[d]))
            stats[delta] = (mean, se)
            cells.append(CellEstimate(n, delta, mean, se, len(per_delta[d]), blow))
        for a, b in zip(order, order[1:]):
            ma, sa = stats[deltas[a]]
            mb, sb = stats[deltas[b]]
            if mb > ma + 2.0 * math.hypot(sa, sb):
                monotone_ok = False
    blow_frac = total_blow / max(1, len(cfg.levels) * cfg.paths)
    passed = monotone_ok and blow_frac <= BLOWUP_BUDGET
    for c in cells:
        c.passed = passed
    return EstimateReport(
        "equicontinuity",
        cells,
        passed,
        margin=0.0 if passed else -1.0,
        details={"deltas": list(deltas), "theta": th},
    )


def cauchy_convergence_study(
    cfg: EnsembleConfig, m_levels: tuple[int, ...] | None = None, partner_factor: int | None = None
) -> EstimateReport:
    """Common-noise E ||psi^n - psi^m||^2_{UH, tau_m ^ tau_n} over increasing m.

    Reports the additive envelope 1/sqrt(lambda_m), lambda_m = min(mu_m, mu_m^2).
    """
    m_levels = tuple(m_levels if m_levels is not None else cfg.m_levels)
    factor = partner_factor or cfg.partner_factor
    top = max(m * factor for m in m_levels)
    x0 = cfg.init.build(top)
    cells = []
    means = []
    total_blow = 0
    steps = cfg.steps
    for m in m_levels:
        n = m * factor
        pair_m = cfg.model.pair(m)
        pair_n = cfg.model.pair(n)
        xm = galerkin_state(x0, m).coeffs
        xn = galerkin_state(x0, n).coeffs
        vals, blow = [], 0
        for lo, hi in _chunks(cfg.paths, cfg.chunk):
            idx = range(lo, hi)
            dWs = _driver_block(cfg, idx, pair_m.m, steps)
            X0m = np.broadcast_to(xm, (hi - lo,) + xm.shape).copy()
            X0n = np.broadcast_to(xn, (hi - lo,) + xn.shape).copy()
            res = run_coupled_batch(pair_m, pair_n, X0m, X0n, dWs, cfg.dt, steps, M=cfg.M)
            ok = ~res.blown
            blow += int(np.sum(res.blown))
            vals.extend(res.diff_uh[ok].tolist())
        total_blow += blow
        mean, se = _mean_se(np.array(vals))
        lam = min(mu_level(m), mu_level(m) ** 2)
        cells.append(
            CellEstimate(m, n, mean, se, len(vals), blow, extra={"envelope": 1.0 / math.sqrt(lam)})
        )
        means.append((mean, se))
    decreasing = all(
        mb < ma + 2.0 * math.hypot(sa, sb) for (ma, sa), (mb, sb) in zip(means, means[1:])
    )
    blow_frac = total_blow / max(1, len(m_levels) * cfg.paths)
    passed = decreasing and blow_frac <= BLOWUP_BUDGET
    for c in cells:
        c.passed = passed
    return EstimateReport(
        "cauchy",
        cells,
        passed,
        margin=(means[0][0] - means[-1][0]) if means else 0.0,
        details={
            "m_levels": list(m_levels),
            "partner_factor": factor,
            "envelope": [1.0 / math.sqrt(min(mu_level(m), mu_level(m) ** 2)) for m in m_levels],
        },
    )


def energy_residual_study(cfg: EnsembleConfig, level: int | None = None, dts: tuple[float, ...] | None = None,
                          ratio_band: tuple[float, float] = (1.7, 2.3)) -> EstimateReport:
    """RMS of the discrete Ito energy-identity residual at T, per dt.

    Halving dt must reduce the RMS by a factor inside ratio_band (first-order
    bias of the explicit scheme).
    """
    n = level if level is not None else min(cfg.levels)
    dts = tuple(dts if dts is not None else (cfg.dt, cfg.dt / 2.0))
    pair = cfg.model.pair(n)
    x0 = cfg.init.build(n)
    cells = []
    rms_list = []
    total_blow = 0
    for dt in dts:
        sq, count, blow = 0.0, 0, 0
        for _, res, _ in _ensemble(cfg, pair, x0, M=cfg.M, track_energy=True, dt=dt):
            ok = res.blow_index < 0
            blow += int(np.sum(~ok))
            r = res.residual[ok, -1]
            sq += float(np.sum(r * r))
            count += len(r)
        total_blow += blow
        rms = math.sqrt(sq / max(count, 1))
        rms_list.append(rms)
        cells.append(CellEstimate(n, dt, rms, 0.0, count, blow))
    ratios = [rms_list[i] / rms_list[i + 1] for i in range(len(rms_list) - 1)]
    ratio_ok = all(ratio_band[0] <= r <= ratio_band[1] for r in ratios)
    blow_frac = total_blow / max(1, len(dts) * cfg.paths)
    passed = ratio_ok and blow_frac <= BLOWUP_BUDGET
    for c in cells:
        c.passed = passed
    return EstimateReport(
        "energy-check",
        cells,
        passed,
        margin=min((min(r - ratio_band[0], ratio_band[1] - r) for r in ratios), default=0.0),
        details={"dts": list(dts), "rms": rms_list, "ratios": ratios, "ratio_band": list(ratio_band)},
    )


def strat_ito_check(cfg: EnsembleConfig, level: int | None = None, dts: tuple[float, ...] | None = None,
                    shrink_band: tuple[float, float] = (1.5, 2.7)) -> EstimateReport:
    """Paired-seed Heun-Stratonovich vs Euler-Ito-with-corrector agreement.

    Per dt: the U-distance of the terminal ensemble means, with the paired
    standard error, plus the pathwise RMS gap whose dt-halving ratio must sit
    in shrink_band (the O(dt) scheme bias).
    """
    n = level if level is not None else min(cfg.levels)
    dts = tuple(dts if dts is not None else (cfg.dt, cfg.dt / 2.0))
    pair = cfg.model.pair(n)
    x0c = galerkin_state(cfg.init.build(n), n).coeffs
    cells = []
    gaps, gap_ses, mean_ses = [], [], []
    total_blow = 0
    for dt in dts:
        steps = int(round(cfg.T / dt))
        sum_d = np.zeros_like(x0c)
        sumsq_d = np.zeros(x0c.shape, dtype=float)
        sum_em = np.zeros_like(x0c)
        sumsq_em = np.zeros(x0c.shape, dtype=float)
        sum_he = np.zeros_like(x0c)
        sumsq_he = np.zeros(x0c.shape, dtype=float)
        count, blow = 0, 0
        for lo, hi in _chunks(cfg.paths, cfg.chunk):
            idx = range(lo, hi)
            dWs = _driver_block(cfg, idx, pair.m, steps, dt)
            X0 = np.broadcast_to(x0c, (hi - lo,) + x0c.shape).copy()
            res_em = run_batch(pair, X0.copy(), dWs, dt, steps, M=None, scheme="euler")
            res_he = run_batch(pair, X0.copy(), dWs, dt, steps, M=None, scheme="heun")
            ok = (res_em.blow_index < 0) & (res_he.blow_index < 0)
            blow += int(np.sum(~ok))
            em, he = res_em.final[ok], res_he.final[ok]
            d = em - he
            sum_d += np.sum(d, axis=0)
            sumsq_d += np.sum(d.real**2 + d.imag**2, axis=0)
            sum_em += np.sum(em, axis=0)
            sumsq_em += np.sum(em.real**2 + em.imag**2, axis=0)
            sum_he += np.sum(he, axis=0)
            sumsq_he += np.sum(he.real**2 + he.imag**2, axis=0)
            count += d.shape[0]
        total_blow += blow

        def _var(s, sq):
            mean = s / count
            return np.maximum(sq / count - (mean.real**2 + mean.imag**2), 0.0)

        mean_d = sum_d / count
        gap = float(np.sqrt(np.sum(mean_d.real**2 + mean_d.imag**2)))
        gap_se = float(np.sqrt(np.sum(_var(sum_d, sumsq_d)) / count))
        # resolution of the two terminal-mean estimators themselves
        mean_se = float(np.sqrt(np.sum(_var(sum_em, sumsq_em) + _var(sum_he, sumsq_he)) / count))
        gaps.append(gap)
        gap_ses.append(gap_se)
        mean_ses.append(mean_se)
        cells.append(
            CellEstimate(n, dt, gap, gap_se, count, blow, extra={"mean_resolution_se": mean_se})
        )
    agree = gaps[0] <= 3.0 * mean_ses[0]
    ratios = [gaps[i] / gaps[i + 1] for i in range(len(gaps) - 1)]
    # the measured gap must shrink like O(dt), or sit below its own noise floor
    shrink_ok = all(
        (shrink_band[0] <= r <= shrink_band[1]) or (gaps[i + 1] <= 3.0 * gap_ses[i + 1])
        for i, r in enumerate(ratios)
    )
    blow_frac = total_blow / max(1, len(dts) * cfg.paths)
    passed = agree and shrink_ok and blow_frac <= BLOWUP_BUDGET
    for c in cells:
        c.passed = passed
    return EstimateReport(
        "strat-ito-check",
        cells,
        passed,
        margin=3.0 * mean_ses[0] - gaps[0],
        details={
            "dts": list(dts),
            "mean_gap": gaps,
            "paired_gap_se": gap_ses,
            "mean_resolution_se": mean_ses,
            "gap_ratios": ratios,
            "shrink_band": list(shrink_band),
            "noise_free_note": "with m = 0 the schemes differ only by the deterministic "
            "integrator orders (O(dt^2) Heun vs O(dt) Euler)" if pair.m == 0 else "",
        },
    )


def assumption_audit(
    pair: OperatorPair,
    sets: tuple[int, ...] = (1, 2, 3),
    n_samples: int = 500,
    seed: int = 7,
    eps: float = 0.5,
) -> EstimateReport:
    """Fit (c, gamma) for every inequality in the requested assumption sets.

    Sweeps low-mode probes plus scaled broadband fields; the study fails when
    a fit is non-finite or the scale sweep shows superlinear growth against
    the claimed majorant.
    """
    if n_samples < 100:
        raise ValueError("the audit needs at least 100 samples")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA0D17)))
    fields = audit_samples(pair.band, n_samples, rng)
    cells = []
    all_ok = True
    worst = float("inf")
    cache = OpCache(pair)
    for s in sets:
        for aid in ASSUMPTION_SETS[s]:
            for ineq in REGISTRY[aid]:
                fit = fit_inequality(pair, ineq, tuples_for(fields, ineq.nargs), eps=eps, cache=cache)
                ok = fit.finite and fit.worst_margin >= -1e-8
                all_ok &= ok
                worst = min(worst, fit.worst_margin)
                cells.append(
                    CellEstimate(
                        pair.band,
                        fit.ineq_id,
                        fit.c,
                        0.0,
                        fit.samples,
                        0,
                        passed=ok,
                        extra={
                            "gamma": fit.gamma,
                            "eps": fit.eps,
                            "worst_margin": fit.worst_margin,
                            "slope": fit.slope,
                            "superlinear": fit.superlinear,
                        },
                    )
                )
    return EstimateReport(
        "assumptions",
        cells,
        all_ok,
        margin=worst,
        details={"sets": list(sets), "samples": n_samples, "eps": eps},
    )
