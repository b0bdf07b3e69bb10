"""Time stepping for the spectral Galerkin system with first-hitting trackers.

The integrator advances the cutoff-gated system

    dX = f_R(||X||_H^2) [ P_n A(t,X) dt + sum_i P_n G_i(t,X) dW^i ]

with an explicit Euler-Maruyama step (Ito form) or a Heun predictor-corrector
step (Stratonovich form, drift without the Ito corrector).  A path records the
running energy functional sup ||X||_U^2 + int ||X||_H^2 and freezes at the
first grid time the functional reaches M + ||X_0||_U^2.

Everything is deterministic given (seed, config): one path = one worker, and
drivers are constructed per path so ensembles are order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import OperatorPair
from .spaces import CutoffSpec, SpectralField, cutoff_eval, project_n, space_weights


class NumericalBlowup(RuntimeError):
    """A path produced non-finite coefficients; carries the offending time."""

    def __init__(self, time: float):
        super().__init__(f"non-finite coefficients at t={time}")
        self.time = time


class BrownianDriver:
    """Deterministic Gaussian increments, one independent stream per noise index.

    ``seed`` may be an integer or a tuple of integers (entropy material).  The
    same seed always reproduces the same increment sequence bit for bit, and
    drawing step by step matches drawing a whole block up front.
    """

    def __init__(self, seed, m: int, dt: float):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.seed = seed
        self.m = m
        self.dt = dt
        ss = np.random.SeedSequence(seed)
        self._gens = [np.random.Generator(np.random.Philox(c)) for c in ss.spawn(m)] if m else []
        self.steps_drawn = 0

    def next_increment(self) -> np.ndarray:
        """One row of increments dW^i ~ Normal(0, dt), independent across i."""
        self.steps_drawn += 1
        if not self._gens:
            return np.zeros(0)
        s = np.sqrt(self.dt)
        return np.array([g.normal(0.0, s) for g in self._gens])

    def increments(self, steps: int) -> np.ndarray:
        """Block of shape (steps, m); continues the per-stream sequences."""
        self.steps_drawn += steps
        if not self._gens:
            return np.zeros((steps, 0))
        s = np.sqrt(self.dt)
        return np.stack([g.normal(0.0, s, steps) for g in self._gens], axis=1)


def path_seed(master_seed: int, path_index: int, tag: int = 0):
    """Entropy tuple for one path's driver; stable under any scheduling order."""
    return (int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(tag), int(path_index))


@dataclass
class StoppingTracker:
    """First hitting of the running energy functional at M + baseline.

    The hit decision at a grid time uses only the functional value there, and
    once set the hit time never changes.
    """

    M: float
    horizon: float
    baseline: float
    hit_time: float | None = None

    @property
    def threshold(self) -> float:
        return self.M + self.baseline

    def observe(self, t: float, uh_value: float) -> bool:
        """Feed the functional at time t; returns True while unhit."""
        if self.hit_time is not None:
            return False
        if uh_value >= self.threshold:
            self.hit_time = t
            return False
        return True


def choose_truncation(M: float, baseline: float) -> float:
    """Default cutoff threshold R = 2 (M + baseline): inactive before hitting."""
    return 2.0 * (M + baseline)


@dataclass
class PathRecord:
    """One simulated path: grid, stopped states, norm series, tracker state."""

    level: int
    grid: np.ndarray
    seed: object
    dt: float
    scheme: str
    M: float | None
    R: float
    norm_u_sq: np.ndarray
    norm_h_sq: np.ndarray
    norm_v_sq: np.ndarray
    uh_series: np.ndarray
    hv_series: np.ndarray
    hit_index: int  # -1 if the threshold was never reached
    baseline: float
    states: np.ndarray | None = None  # (steps+1, 2, K, K) stopped states
    blown_up: bool = False
    blowup_time: float | None = None
    residual_series: np.ndarray | None = None
    pair_kind: str = ""

    @property
    def hit_time(self) -> float | None:
        return None if self.hit_index < 0 else float(self.grid[self.hit_index])

    @property
    def tracker(self) -> StoppingTracker:
        return StoppingTracker(
            M=self.M if self.M is not None else np.inf,
            horizon=float(self.grid[-1]),
            baseline=self.baseline,
            hit_time=self.hit_time,
        )

    def state_at(self, index: int) -> SpectralField:
        if self.states is None:
            raise ValueError("path was recorded without state snapshots")
        return SpectralField(self.level, self.states[index].copy())

    def norms_csv_rows(self):
        """Rows t,normU,normH,normV,uh,hv,hit of the lossy norm-series export."""
        for j, t in enumerate(self.grid):
            hit = 1 if 0 <= self.hit_index <= j else 0
            yield (
                float(t),
                float(np.sqrt(self.norm_u_sq[j])),
                float(np.sqrt(self.norm_h_sq[j])),
                float(np.sqrt(self.norm_v_sq[j])),
                float(self.uh_series[j]),
                float(self.hv_series[j]),
                hit,
            )


def _norm_sq(coeffs: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.sum(w * (coeffs.real**2 + coeffs.imag**2), axis=(-3, -2, -1))


def _inner_u(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.real(np.sum(a * np.conj(b), axis=(-3, -2, -1)))


def _gate(pair: OperatorPair, coeffs: np.ndarray, R: float, w_h: np.ndarray) -> np.ndarray:
    if not np.isfinite(R):
        return np.ones(coeffs.shape[:-3])
    spec = CutoffSpec(R)
    return np.asarray(cutoff_eval(_norm_sq(coeffs, w_h), spec))


def step_euler(pair: OperatorPair, X: np.ndarray, dW: np.ndarray, dt: float, R: float, w_h: np.ndarray):
    """One explicit Euler-Maruyama step on a batch; returns (X_new, drift, gate)."""
    g = _gate(pair, X, R, w_h)
    drift, noise = pair.rhs_step_terms(X, dW if pair.m else None)
    incr = drift * dt
    if noise is not None:
        incr = incr + noise
    return X + g[..., None, None, None] * incr, drift, g


def step_heun(pair: OperatorPair, X: np.ndarray, dW: np.ndarray, dt: float, R: float, w_h: np.ndarray):
    """One Stratonovich Heun step (midpoint of drift-without-corrector and noise)."""
    g0 = _gate(pair, X, R, w_h)
    a0, n0 = pair.rhs_step_terms(X, dW if pair.m else None, strat=True)
    incr0 = a0 * dt + (n0 if n0 is not None else 0.0)
    pred = X + g0[..., None, None, None] * incr0
    g1 = _gate(pair, pred, R, w_h)
    a1, n1 = pair.rhs_step_terms(pred, dW if pair.m else None, strat=True)
    incr1 = a1 * dt + (n1 if n1 is not None else 0.0)
    new = X + 0.5 * g0[..., None, None, None] * incr0 + 0.5 * g1[..., None, None, None] * incr1
    return new, a0, g0


@dataclass
class BatchResult:
    grid: np.ndarray
    norm_u_sq: np.ndarray  # (B, S+1)
    norm_h_sq: np.ndarray
    norm_v_sq: np.ndarray
    uh: np.ndarray
    hv: np.ndarray
    hit_index: np.ndarray  # (B,) int, -1 if never
    blow_index: np.ndarray  # (B,) int, -1 if clean
    states: np.ndarray | None
    residual: np.ndarray | None  # (B, S+1) discrete energy-identity residual
    final: np.ndarray | None = None  # (B, 2, K, K) stopped terminal states


def run_batch(
    pair: OperatorPair,
    X0: np.ndarray,
    dWs: np.ndarray | None,
    dt: float,
    steps: int,
    M: float | None = None,
    R: float | None = None,
    scheme: str = "euler",
    record_states: bool = False,
    state_hook=None,
    track_energy: bool = False,
) -> BatchResult:
    """Advance a batch of paths on a common uniform grid.

    X0 has shape (B, 2, K, K); dWs has shape (B, steps, m) (None for m = 0).
    Paths freeze at their hitting time; non-finite paths are flagged and
    zeroed.  state_hook(j, X) sees the stopped states at every grid index.
    """
    if scheme not in ("euler", "heun"):
        raise ValueError(f"unknown scheme {scheme!r}")
    band = pair.band
    w_u = space_weights(band, "U")
    w_h = space_weights(band, "H")
    w_v = space_weights(band, "V")
    B = X0.shape[0]
    X = X0.astype(np.complex128).copy()
    grid = np.arange(steps + 1) * dt

    nu_sq = np.zeros((B, steps + 1))
    nh_sq = np.zeros((B, steps + 1))
    nv_sq = np.zeros((B, steps + 1))
    uh = np.zeros((B, steps + 1))
    hv = np.zeros((B, steps + 1))
    hit = np.full(B, -1, dtype=int)
    blow = np.full(B, -1, dtype=int)
    states = np.zeros((B, steps + 1, 2, X0.shape[-2], X0.shape[-1]), dtype=np.complex128) if record_states else None
    resid = np.zeros((B, steps + 1)) if track_energy else None
    resid_acc = np.zeros(B) if track_energy else None

    nu_sq[:, 0] = _norm_sq(X, w_u)
    nh_sq[:, 0] = _norm_sq(X, w_h)
    nv_sq[:, 0] = _norm_sq(X, w_v)
    baseline = nu_sq[:, 0].copy()
    sup_u = nu_sq[:, 0].copy()
    sup_h = nh_sq[:, 0].copy()
    int_h = np.zeros(B)
    int_v = np.zeros(B)
    uh[:, 0] = sup_u
    hv[:, 0] = sup_h
    threshold = np.inf if M is None else M + baseline
    if M is not None and R is None:
        R = float(choose_truncation(M, float(np.max(baseline))))
    if R is None:
        R = np.inf
    if M is not None:
        newly = uh[:, 0] >= threshold
        hit[newly] = 0
    if record_states:
        states[:, 0] = X
    if state_hook is not None:
        state_hook(0, X)

    if track_energy and scheme != "euler":
        raise ValueError("the discrete energy identity is tracked for the euler scheme")
    step_fn = step_euler if scheme == "euler" else step_heun
    for j in range(steps):
        active = (hit < 0) & (blow < 0)
        dW = dWs[:, j, :] if dWs is not None else np.zeros((B, 0))
        with np.errstate(over="ignore", invalid="ignore"):
            if track_energy:
                gate = _gate(pair, X, R, w_h)
                drift, cols = pair.rhs_energy_terms(X)
                incr = drift * dt
                if pair.m:
                    incr = incr + np.einsum("bi,bicxy->bcxy", dW, cols)
                X_new = X + gate[..., None, None, None] * incr
                a_eff = gate[:, None, None, None] * drift
                term = 2.0 * _inner_u(a_eff, X) * dt
                if pair.m:
                    g_eff = gate[:, None, None, None, None] * cols
                    term = term + np.sum(_norm_sq(g_eff, w_u), axis=-1) * dt
                    term = term + 2.0 * np.sum(_inner_u(g_eff, X[:, None]) * dW, axis=-1)
                resid_acc = resid_acc + np.where(active, term, 0.0)
            else:
                X_new, drift, gate = step_fn(pair, X, dW, dt, R, w_h)

        finite = np.isfinite(X_new).all(axis=(-3, -2, -1))
        with np.errstate(over="ignore", invalid="ignore"):
            u2 = _norm_sq(X_new, w_u)
            h2 = _norm_sq(X_new, w_h)
            v2 = _norm_sq(X_new, w_v)
        finite &= np.isfinite(u2) & np.isfinite(h2) & np.isfinite(v2)
        exploding = active & ~finite
        blow[exploding] = j + 1
        X_new[exploding] = 0.0
        u2[exploding] = h2[exploding] = v2[exploding] = 0.0
        advance = active & finite
        X = np.where(advance[:, None, None, None], X_new, X)

        keep = ~advance
        u2 = np.where(keep, nu_sq[:, j], u2)
        h2 = np.where(keep, nh_sq[:, j], h2)
        v2 = np.where(keep, nv_sq[:, j], v2)
        u2[exploding] = h2[exploding] = v2[exploding] = 0.0
        nu_sq[:, j + 1] = u2
        nh_sq[:, j + 1] = h2
        nv_sq[:, j + 1] = v2
        # left-Riemann accumulation and frozen (stopped) semantics
        int_h = int_h + np.where(advance, nh_sq[:, j] * dt, 0.0)
        int_v = int_v + np.where(advance, nv_sq[:, j] * dt, 0.0)
        sup_u = np.where(advance, np.maximum(sup_u, u2), sup_u)
        sup_h = np.where(advance, np.maximum(sup_h, h2), sup_h)
        uh[:, j + 1] = np.where(advance, sup_u + int_h, uh[:, j])
        hv[:, j + 1] = np.where(advance, sup_h + int_v, hv[:, j])
        if M is not None:
            newly = advance & (uh[:, j + 1] >= threshold)
            hit[newly] = j + 1
        if track_energy:
            resid[:, j + 1] = np.where(advance, u2 - nu_sq[:, 0] - resid_acc, resid[:, j])
        if record_states:
            states[:, j + 1] = X
        if state_hook is not None:
            state_hook(j + 1, X)

    return BatchResult(grid, nu_sq, nh_sq, nv_sq, uh, hv, hit, blow, states, resid, final=X)


@dataclass
class CoupledBatchResult:
    diff_uh: np.ndarray  # (B,) ||psi^n - psi^m||^2_{UH, tau_m ^ tau_n}
    hit_m: np.ndarray
    hit_n: np.ndarray
    blown: np.ndarray  # bool mask, either level


def run_coupled_batch(
    pair_m: OperatorPair,
    pair_n: OperatorPair,
    X0m: np.ndarray,
    X0n: np.ndarray,
    dWs: np.ndarray | None,
    dt: float,
    steps: int,
    M: float | None = None,
) -> CoupledBatchResult:
    """Two Galerkin levels in lockstep under the same increments.

    Accumulates the UH functional of the difference up to the joint stopping
    index min(tau_m, tau_n); each level freezes at its own hitting time.
    """
    if pair_m.band > pair_n.band:
        raise ValueError("expected pair_m.band <= pair_n.band")
    B = X0m.shape[0]
    lo, hi = pair_m.band, pair_n.band
    pad = hi - lo
    k = 2 * lo + 1
    w_h_m = space_weights(lo, "H")
    w_u_n = space_weights(hi, "U")
    w_h_n = space_weights(hi, "H")

    def grow(Xm):
        out = np.zeros(Xm.shape[:-2] + (2 * hi + 1, 2 * hi + 1), dtype=np.complex128)
        out[..., pad : pad + k, pad : pad + k] = Xm
        return out

    Xm = X0m.astype(np.complex128).copy()
    Xn = X0n.astype(np.complex128).copy()
    states = []
    for pair, X, wh in ((pair_m, Xm, w_h_m), (pair_n, Xn, w_h_n)):
        base = _norm_sq(X, space_weights(pair.band, "U"))
        R = choose_truncation(M, float(np.max(base))) if M is not None else np.inf
        states.append(
            dict(
                X=X,
                wh=wh,
                w_u=space_weights(pair.band, "U"),
                sup_u=base.copy(),
                int_h=np.zeros(B),
                h2_last=_norm_sq(X, wh),
                uh=base.copy(),
                thr=np.inf if M is None else M + base,
                hit=np.full(B, -1, dtype=int),
                blow=np.full(B, -1, dtype=int),
                R=R,
            )
        )
    diff = grow(Xm) - Xn
    sup_d = _norm_sq(diff, w_u_n)
    int_d = np.zeros(B)

    for j in range(steps):
        dW = dWs[:, j, :] if dWs is not None else np.zeros((B, 0))
        joint_active = np.ones(B, dtype=bool)
        diff_h_prev = _norm_sq(diff, w_h_n)
        for pair, st in ((pair_m, states[0]), (pair_n, states[1])):
            active = (st["hit"] < 0) & (st["blow"] < 0)
            X_new, _, _ = step_euler(pair, st["X"], dW, dt, st["R"], st["wh"])
            finite = np.isfinite(X_new).all(axis=(-3, -2, -1))
            st["blow"][active & ~finite] = j + 1
            X_new[active & ~finite] = 0.0
            advance = active & finite
            st["X"] = np.where(advance[:, None, None, None], X_new, st["X"])
            u2 = _norm_sq(st["X"], st["w_u"])
            st["int_h"] = st["int_h"] + np.where(advance, st["h2_last"] * dt, 0.0)
            st["h2_last"] = _norm_sq(st["X"], st["wh"])
            st["sup_u"] = np.where(advance, np.maximum(st["sup_u"], u2), st["sup_u"])
            st["uh"] = np.where(advance, st["sup_u"] + st["int_h"], st["uh"])
            newly = advance & (st["uh"] >= st["thr"])
            st["hit"][newly] = j + 1
            joint_active &= advance
        # difference functional accumulates while neither level is stopped
        diff = grow(states[0]["X"]) - states[1]["X"]
        int_d = int_d + np.where(joint_active, diff_h_prev * dt, 0.0)
        sup_d = np.where(joint_active, np.maximum(sup_d, _norm_sq(diff, w_u_n)), sup_d)

    blown = (states[0]["blow"] >= 0) | (states[1]["blow"] >= 0)
    return CoupledBatchResult(sup_d + int_d, states[0]["hit"], states[1]["hit"], blown)


def galerkin_state(x0: SpectralField, level: int) -> SpectralField:
    """Initial condition for the level-n system: P_n x0 on the level band."""
    if x0.band >= level:
        return project_n(x0, level).restrict_to(level)
    return project_n(x0.pad_to(level), level)


def _one_step(state, t, pair, driver, n, cutoff, dt, kernel) -> SpectralField:
    if pair.band != n:
        raise ValueError(f"pair band {pair.band} does not match level {n}")
    if isinstance(driver, BrownianDriver):
        dW = driver.next_increment()
        dt = driver.dt
    else:
        dW = np.asarray(driver, dtype=float)
        if dt is None:
            raise ValueError("explicit increments need an explicit dt")
    x = project_n(state, n) if state.band == n else galerkin_state(state, n)
    R = cutoff.R if cutoff is not None else np.inf
    w_h = space_weights(pair.band, "H")
    X_new, _, _ = kernel(pair, x.coeffs[None], dW[None], dt, R, w_h)
    if not np.isfinite(X_new).all():
        raise NumericalBlowup(t)
    return SpectralField(pair.band, X_new[0])


def em_step(state, t, pair, driver, n, cutoff=None, dt=None) -> SpectralField:
    """Single Euler-Maruyama step of the cutoff-gated level-n system.

    ``driver`` is a BrownianDriver (one increment row is consumed, dt taken
    from it) or an explicit increment vector of length pair.m (then pass dt).
    """
    return _one_step(state, t, pair, driver, n, cutoff, dt, step_euler)


def heun_step(state, t, pair, driver, n, cutoff=None, dt=None) -> SpectralField:
    """Stratonovich-consistent Heun step: drift without the Ito corrector."""
    return _one_step(state, t, pair, driver, n, cutoff, dt, step_heun)


def _steps_of(T: float, dt: float) -> int:
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"dt={dt} does not divide T={T}")
    return steps


def simulate_path(
    pair: OperatorPair,
    x0: SpectralField,
    dt: float,
    T: float,
    M: float | None = None,
    seed=0,
    scheme: str = "euler",
    R: float | None = None,
    record_states: bool = True,
    track_energy: bool = False,
) -> PathRecord:
    """Run one path of the level-n system (n = pair.band) and record it.

    The cutoff threshold defaults to R = 2 (M + ||x0||_U^2) so the gate stays
    open before the hitting time; after the hit the record keeps the stopped
    state and the energy functionals stay frozen.
    """
    steps = _steps_of(T, dt)
    level = pair.band
    x = galerkin_state(x0, level)
    driver = BrownianDriver(seed, pair.m, dt)
    dWs = driver.increments(steps)[None] if pair.m else None
    res = run_batch(
        pair,
        x.coeffs[None],
        dWs,
        dt,
        steps,
        M=M,
        R=R,
        scheme=scheme,
        record_states=record_states,
        track_energy=track_energy,
    )
    eff_R = R
    if eff_R is None:
        eff_R = choose_truncation(M, x.norm_sq("U")) if M is not None else np.inf
    blown = res.blow_index[0] >= 0
    return PathRecord(
        level=level,
        grid=res.grid,
        seed=seed,
        dt=dt,
        scheme=scheme,
        M=M,
        R=float(eff_R),
        norm_u_sq=res.norm_u_sq[0],
        norm_h_sq=res.norm_h_sq[0],
        norm_v_sq=res.norm_v_sq[0],
        uh_series=res.uh[0],
        hv_series=res.hv[0],
        hit_index=int(res.hit_index[0]),
        baseline=float(res.norm_u_sq[0, 0]),
        states=res.states[0] if res.states is not None else None,
        blown_up=bool(blown),
        blowup_time=float(res.grid[res.blow_index[0]]) if blown else None,
        residual_series=res.residual[0] if res.residual is not None else None,
        pair_kind=pair.kind,
    )


def coupled_pair(
    pair_m: OperatorPair,
    pair_n: OperatorPair,
    x0: SpectralField,
    dt: float,
    T: float,
    M: float | None = None,
    seed=0,
    scheme: str = "euler",
) -> tuple[PathRecord, PathRecord]:
    """Two Galerkin levels driven by the same Brownian increments.

    Both records share one driver seed; the joint stopping time of the
    difference process is the minimum of the two hitting times.
    """
    if pair_m.band > pair_n.band:
        raise ValueError("expected pair_m.band <= pair_n.band")
    if pair_m.m != pair_n.m:
        raise ValueError("coupled levels must share the noise dimension")
    rec_m = simulate_path(pair_m, x0, dt, T, M=M, seed=seed, scheme=scheme)
    rec_n = simulate_path(pair_n, x0, dt, T, M=M, seed=seed, scheme=scheme)
    return rec_m, rec_n


def joint_hit_index(rec_m: PathRecord, rec_n: PathRecord) -> int:
    """Grid index of tau_m ^ tau_n (-1 when neither level ever hits)."""
    candidates = [i for i in (rec_m.hit_index, rec_n.hit_index) if i >= 0]
    return min(candidates) if candidates else -1


def difference_uh(rec_m: PathRecord, rec_n: PathRecord) -> float:
    """||psi^n - psi^m||_{UH, tau_m ^ tau_n}^2 from recorded state snapshots."""
    if rec_m.states is None or rec_n.states is None:
        raise ValueError("coupled records need state snapshots")
    stop = joint_hit_index(rec_m, rec_n)
    last = len(rec_m.grid) - 1 if stop < 0 else stop
    w_u = space_weights(rec_n.level, "U")
    w_h = space_weights(rec_n.level, "H")
    pad = rec_n.level - rec_m.level
    k = 2 * rec_m.level + 1
    diff = rec_n.states[: last + 1].copy()
    diff[:, :, pad : pad + k, pad : pad + k] -= rec_m.states[: last + 1]
    u2 = _norm_sq(diff, w_u)
    h2 = _norm_sq(diff, w_h)
    return float(np.max(u2) + rec_m.dt * np.sum(h2[:-1]))


def energy_identity_residual(path: PathRecord, pair: OperatorPair) -> np.ndarray:
    """Discrete Ito energy-identity residual series along a recorded path.

    residual(t) = ||X_t||_U^2 - ||X_0||_U^2
                  - sum over steps of [2<a, X> dt + sum_i ||g_i||_U^2 dt
                                       + 2 sum_i <g_i, X> dW^i]
    with a, g_i the gated, projected coefficients the integrator used.
    """
    if path.residual_series is not None:
        return path.residual_series
    if path.states is None:
        raise ValueError("record the path with state snapshots or track_energy")
    if path.scheme != "euler":
        raise ValueError("the discrete energy identity is tracked for the euler scheme")
    steps = len(path.grid) - 1
    driver = BrownianDriver(path.seed, pair.m, path.dt)
    dWs = driver.increments(steps) if pair.m else np.zeros((steps, 0))
    w_u = space_weights(pair.band, "U")
    w_h = space_weights(pair.band, "H")
    stop = path.hit_index if path.hit_index >= 0 else (steps + 1)
    if path.blowup_time is not None:
        stop = min(stop, int(round(path.blowup_time / path.dt)) - 1)
    resid = np.zeros(steps + 1)
    acc = 0.0
    for j in range(steps):
        if j >= stop:
            resid[j + 1] = resid[j]
            continue
        X = path.states[j][None]
        gate = _gate(pair, X, path.R, w_h)
        a = gate[:, None, None, None] * pair.rhs_drift(X)
        term = 2.0 * _inner_u(a, X)[0] * path.dt
        if pair.m:
            cols = gate[:, None, None, None, None] * pair.rhs_noise_all(X)
            term += float(np.sum(_norm_sq(cols, w_u))) * path.dt
            term += 2.0 * float(np.sum(_inner_u(cols[0], X[0][None]) * dWs[j]))
        acc += term
        resid[j + 1] = path.norm_u_sq[j + 1] - path.norm_u_sq[0] - acc
    return resid
