"""Drift and noise operators in spectral coordinates.

The concrete model is the 2D incompressible Navier-Stokes equation with
transport (SALT) noise on the torus, written in Ito form:

    drift(u)  = -P (u . grad) u + nu P Lap u + corrector(u)
    noise_i(u) = P B_i u,          B_i phi = xi_i . grad phi + (grad xi_i)^T phi

with P the Leray projection.  Alongside it live analytic reference pairs
(pure heat, zero, additive Ornstein-Uhlenbeck) used as oracles.

Two corrector notions coexist.  The abstract operator (salt_corrector) is
1/2 sum_i P B_i^2 with the unprojected composition, the form the continuous
equation carries once the pressure semimartingale has been eliminated.  The
level-n pair integrated by the engine instead uses the corrector of its own
noise maps, 1/2 sum_i (P_n P B_i)^2, which is what makes the Ito-form and
Stratonovich-form integrations of the finite system two discretizations of
the same SDE.  For spatially constant correlation fields the two coincide.
The pair corrector is assembled once as a sparse mode-coupling matrix (the
symbol of B_i couples k only to k + p over the few active xi modes p).

Quadratic products are evaluated pseudo-spectrally on a grid large enough for
the 2/3-style dealiasing rule; everything that lands outside the retained band
is alias-free by construction.

Evaluators are pure given (t, state); one pair may be shared read-only across
any number of workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .spaces import SpectralField, wavenumber_grids


def _fast_len(n: int) -> int:
    """Smallest 5-smooth integer >= n (good FFT length)."""
    while True:
        m = n
        for p in (2, 3, 5):
            while m % p == 0:
                m //= p
        if m == 1:
            return n
        n += 1


def leray_project(f: SpectralField) -> SpectralField:
    """Per-mode orthogonal projection v -> v - k (k.v)/|k|^2; identity at k=0."""
    out = f.copy()
    _apply_leray(out.coeffs, f.band)
    return out


def _apply_leray(coeffs: np.ndarray, band: int) -> None:
    kx, ky = wavenumber_grids(band)
    ksq = (kx * kx + ky * ky).astype(float)
    ksq[band, band] = 1.0  # mean mode untouched (k.v = 0 there anyway)
    kdotv = (kx * coeffs[..., 0, :, :] + ky * coeffs[..., 1, :, :]) / ksq
    kdotv[..., band, band] = 0.0
    coeffs[..., 0, :, :] -= kx * kdotv
    coeffs[..., 1, :, :] -= ky * kdotv


class GridKit:
    """Embedding of a centered coefficient band into an alias-safe FFT grid."""

    def __init__(self, band: int, xi_band: int = 0):
        self.band = band
        self.k = 2 * band + 1
        need = max(3 * band + 1, 2 * (band + 2 * xi_band) + 1, 4)
        self.n = _fast_len(need)
        self.pos = np.arange(-band, band + 1) % self.n
        kg = np.fft.fftfreq(self.n, d=1.0 / self.n)
        gx, gy = np.meshgrid(kg, kg, indexing="ij")
        self.ikx = 1j * gx
        self.iky = 1j * gy
        kx, ky = wavenumber_grids(band)
        self.ksq = (kx * kx + ky * ky).astype(float)

    def to_hat(self, coeffs: np.ndarray, band: int | None = None) -> np.ndarray:
        """Centered (...,2,K,K) coefficients into FFT layout (...,2,N,N).

        ``band`` overrides the kit band for embedding fields of a different
        bandwidth (e.g. noise-correlation fields) into the same grid.
        """
        pos = self.pos if band is None or band == self.band else np.arange(-band, band + 1) % self.n
        if 2 * (band if band is not None else self.band) + 1 > self.n:
            raise ValueError("field band does not fit on the dealiasing grid")
        shape = coeffs.shape[:-2] + (self.n, self.n)
        hat = np.zeros(shape, dtype=np.complex128)
        hat[..., pos[:, None], pos[None, :]] = coeffs
        return hat

    def from_hat(self, hat: np.ndarray) -> np.ndarray:
        return hat[..., self.pos[:, None], self.pos[None, :]]

    def phys(self, hat: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(hat, axes=(-2, -1)) * (self.n * self.n)

    def hat_of(self, vals: np.ndarray) -> np.ndarray:
        return np.fft.fft2(vals, axes=(-2, -1)) / (self.n * self.n)

    def state_blocks(self, coeffs: np.ndarray):
        """Physical values and first derivatives of a batch of fields.

        Returns (u, ux, uy), each of shape (...,2,N,N); one batched transform
        evaluates everything.
        """
        hat = self.to_hat(coeffs)
        stacked = np.concatenate([hat, self.ikx * hat, self.iky * hat], axis=-3)
        phys = self.phys(stacked)
        return tuple(phys[..., 2 * j : 2 * j + 2, :, :] for j in range(3))

    def truncate_gather(self, phys_fields: np.ndarray, zero_mean: bool = True) -> np.ndarray:
        """FFT of physical values, band-truncated back to centered layout."""
        hat = self.hat_of(phys_fields)
        out = self.from_hat(hat)
        if zero_mean:
            out[..., self.band, self.band] = 0.0
        return out


@dataclass(frozen=True)
class NSParams:
    """Viscosity and the truncation level of the driving noise expansion."""

    nu: float
    noise_modes: int = 0

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("viscosity nu must be positive")
        if self.noise_modes < 0:
            raise ValueError("noise_modes must be nonnegative")


class SaltCoefficients:
    """The correlation fields xi_i of the transport noise, with amplitudes."""

    def __init__(self, xi: list[SpectralField], decay_weights: list[float] | None = None):
        if decay_weights is None:
            decay_weights = [1.0] * len(xi)
        if len(decay_weights) != len(xi):
            raise ValueError("decay_weights must match the number of xi entries")
        for f in xi:
            f.validate(require_real=True, require_mean_zero=False)
        self.xi = xi
        self.decay_weights = list(map(float, decay_weights))

    def __len__(self) -> int:
        return len(self.xi)

    def scaled(self, i: int) -> SpectralField:
        return self.xi[i] * self.decay_weights[i]

    def band(self) -> int:
        """Largest |k|_inf carried by any xi entry (0 for constants)."""
        b = 0
        for f in self.xi:
            kx, ky = wavenumber_grids(f.band)
            mask = np.abs(f.coeffs).sum(axis=0) > 0
            if np.any(mask):
                b = max(b, int(np.max(np.maximum(np.abs(kx), np.abs(ky))[mask])))
        return b

    def w2inf_proxy(self, i: int) -> float:
        """Sum over modes of (1+|k|)^2 |xi_i(k)|, a W^{2,inf} stand-in."""
        f = self.scaled(i)
        kx, ky = wavenumber_grids(f.band)
        kmag = np.sqrt(kx * kx + ky * ky)
        mags = np.sqrt(np.abs(f.coeffs[0]) ** 2 + np.abs(f.coeffs[1]) ** 2)
        return float(np.sum((1.0 + kmag) ** 2 * mags))

    def summability(self) -> float:
        """Sum of squared W^{2,inf} proxies over the ensemble."""
        return sum(self.w2inf_proxy(i) ** 2 for i in range(len(self.xi)))


def default_xi_library(
    m: int,
    band: int,
    amplitude: float = 0.3,
    decay_ratio: float = 0.5,
    phase_seed: int | None = None,
) -> SaltCoefficients:
    """Low-wavenumber solenoidal trigonometric correlation fields.

    Cycles through the band-1 modes with both cos and sin phases (unit phases
    by default; a seed randomizes them) and applies geometrically decaying
    amplitudes so the squared-summability proxy stays visibly finite.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    rng = np.random.default_rng(phase_seed) if phase_seed is not None else None
    directions = [(1, 0), (0, 1), (1, 1), (1, -1)]
    fields = []
    for i in range(m):
        kx, ky = directions[(i // 2) % len(directions)]
        kmag = np.hypot(kx, ky)
        perp = (-ky / kmag, kx / kmag)
        phase = 0.0 if rng is None else float(rng.uniform(0.0, 2.0 * np.pi))
        if i % 2 == 1:
            phase += np.pi / 2.0  # sin companion of the cos mode
        c = 0.5 * np.exp(-1j * phase)
        vec = (c * perp[0], c * perp[1])
        fields.append(SpectralField.real_mode(band, (kx, ky), vec))
    weights = [amplitude * decay_ratio**i for i in range(m)]
    return SaltCoefficients(fields, weights)


def load_xi_spectrum(path, band: int | None = None) -> SaltCoefficients:
    """Read a plain-text spectrum file: lines `i kx ky re_x im_x re_y im_y amplitude`.

    The band defaults to the largest |k|_inf present.  Every mode line must be
    divergence-free; conjugate pairs must be listed explicitly (reality is
    validated on the assembled fields).
    """
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 8:
                raise ValueError(f"{path}:{lineno}: expected 8 columns, got {len(parts)}")
            i, kx, ky = int(parts[0]), int(parts[1]), int(parts[2])
            rex, imx, rey, imy, amp = map(float, parts[3:])
            vec = np.array([rex + 1j * imx, rey + 1j * imy]) * amp
            if abs(kx * vec[0] + ky * vec[1]) > 1e-10 * max(np.abs(vec).max(), 1e-300):
                raise ValueError(f"{path}:{lineno}: mode ({kx},{ky}) is not divergence-free")
            rows.append((lineno, i, kx, ky, vec))
    if not rows:
        raise ValueError(f"{path}: no spectrum lines found")
    need = max(max(abs(kx), abs(ky)) for _, _, kx, ky, _ in rows)
    if band is None:
        band = max(need, 1)
    elif need > band:
        raise ValueError(f"{path}: modes up to |k|={need} exceed band {band}")
    entries: dict[int, SpectralField] = {}
    for _, i, kx, ky, vec in rows:
        f = entries.setdefault(i, SpectralField.zero(band))
        f.coeffs[:, band + kx, band + ky] += vec
    ordered = [entries[i] for i in sorted(entries)]
    return SaltCoefficients(ordered)


def save_xi_spectrum(path, xi: SaltCoefficients) -> None:
    with open(path, "w") as fh:
        fh.write("# i kx ky re_x im_x re_y im_y amplitude\n")
        for i in range(len(xi)):
            f = xi.scaled(i)
            b = f.band
            for kx in range(-b, b + 1):
                for ky in range(-b, b + 1):
                    v = f.coeffs[:, b + kx, b + ky]
                    if np.all(v == 0):
                        continue
                    parts = (float(v[0].real), float(v[0].imag), float(v[1].real), float(v[1].imag))
                    fh.write(f"{i} {kx} {ky} " + " ".join(repr(p) for p in parts) + " 1.0\n")


class OperatorPair:
    """Drift A(t,.) and noise columns G_i(t,.) in spectral coordinates.

    kind is one of "salt-ns", "heat", "zero", "additive-ou".  The Ito drift of
    the salt-ns kind carries the Stratonovich-to-Ito corrector; strat_drift is
    the same assembly without it.  Heat and OU kinds accept optional additive
    noise columns (fixed fields).
    """

    def __init__(
        self,
        kind: str,
        band: int,
        params: NSParams | None = None,
        xi: SaltCoefficients | None = None,
        additive_noise: list[SpectralField] | None = None,
    ):
        if kind not in ("salt-ns", "heat", "zero", "additive-ou"):
            raise ValueError(f"unknown operator kind {kind!r}")
        self.kind = kind
        self.band = band
        self.params = params
        self.xi = xi
        kxb = xi.band() if (kind == "salt-ns" and xi is not None) else 0
        self.kit = GridKit(band, xi_band=kxb)
        self._additive: np.ndarray | None = None
        if additive_noise:
            for f in additive_noise:
                f.validate(require_real=True)
                if f.band != band:
                    raise ValueError("additive noise columns must live on the state band")
            self._additive = np.stack([f.coeffs for f in additive_noise])
        if kind == "salt-ns":
            if params is None or xi is None:
                raise ValueError("salt-ns pair needs NSParams and SaltCoefficients")
            if params.noise_modes > len(xi):
                raise ValueError("noise_modes exceeds the xi ensemble size")
            self.m = params.noise_modes
            self._prepare_salt()
        elif kind == "heat":
            if params is None:
                raise ValueError("heat pair needs NSParams")
            self.m = len(additive_noise) if additive_noise else 0
        elif kind == "additive-ou":
            self.m = len(additive_noise) if additive_noise else 0
        else:
            self.m = 0

    # -- construction of the salt machinery ------------------------------------

    def _prepare_salt(self) -> None:
        kit = self.kit
        m = self.m
        n = kit.n
        xi_phys = np.zeros((m, 2, n, n))
        dxi = np.zeros((m, 2, 2, n, n))  # dxi[i, a, c] = d_a xi_i^c
        for i in range(m):
            f = self.xi.scaled(i)
            hat = kit.to_hat(f.coeffs, band=f.band)
            xi_phys[i] = kit.phys(hat).real
            for a, mult in enumerate((kit.ikx, kit.iky)):
                dxi[i, a] = kit.phys(mult * hat).real
        self._xi_phys = xi_phys
        self._dxi = dxi
        cols = [self._noise_matrix(i) for i in range(m)]
        acc = None
        for s in cols:
            term = s @ s
            acc = term if acc is None else acc + term
        dim = 2 * self.kit.k * self.kit.k
        self._corrector = (0.5 * acc).tocsr() if acc is not None else sparse.csr_matrix((dim, dim))

    def _noise_matrix(self, i: int) -> sparse.csr_matrix:
        """Sparse matrix of P_n P B_i on the centered coefficient vector.

        B_i maps the mode k with vector v to modes k + p, p running over the
        active xi_i modes, with block i[(xi(p).k) I + p (x) xi(p)]; the Leray
        block and the band truncation are folded in.
        """
        band = self.band
        k = self.kit.k
        f = self.xi.scaled(i)
        kx, ky = wavenumber_grids(band)
        kxf, kyf = kx.ravel(), ky.ravel()
        state = (kxf != 0) | (kyf != 0)
        rows, cols, data = [], [], []
        b = f.band
        for px in range(-b, b + 1):
            for py in range(-b, b + 1):
                vec = f.coeffs[:, b + px, b + py]
                if vec[0] == 0 and vec[1] == 0:
                    continue
                tx, ty = kxf + px, kyf + py
                ok = state & (np.abs(tx) <= band) & (np.abs(ty) <= band) & ((tx != 0) | (ty != 0))
                src_x, src_y = kxf[ok], kyf[ok]
                tgt_x, tgt_y = tx[ok], ty[ok]
                dot = 1j * (vec[0] * src_x + vec[1] * src_y)
                blocks = np.zeros((ok.sum(), 2, 2), dtype=np.complex128)
                blocks[:, 0, 0] = dot + 1j * px * vec[0]
                blocks[:, 0, 1] = 1j * px * vec[1]
                blocks[:, 1, 0] = 1j * py * vec[0]
                blocks[:, 1, 1] = dot + 1j * py * vec[1]
                # Leray block at the target mode
                qsq = (tgt_x**2 + tgt_y**2).astype(float)
                proj = np.zeros_like(blocks)
                proj[:, 0, 0] = 1.0 - tgt_x * tgt_x / qsq
                proj[:, 0, 1] = -tgt_x * tgt_y / qsq
                proj[:, 1, 0] = -tgt_y * tgt_x / qsq
                proj[:, 1, 1] = 1.0 - tgt_y * tgt_y / qsq
                blocks = np.einsum("slj,sjm->slm", proj, blocks)
                src_flat = (band + src_x) * k + (band + src_y)
                tgt_flat = (band + tgt_x) * k + (band + tgt_y)
                kk = k * k
                for l in range(2):
                    for j in range(2):
                        rows.append(l * kk + tgt_flat)
                        cols.append(j * kk + src_flat)
                        data.append(blocks[:, l, j])
        dim = 2 * k * k
        if not rows:
            return sparse.csr_matrix((dim, dim), dtype=np.complex128)
        return sparse.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
        )

    def apply_corrector(self, coeffs: np.ndarray) -> np.ndarray:
        """The pair's Ito corrector 1/2 sum_i (P_n P B_i)^2 on a batch."""
        lead = coeffs.shape[:-3]
        flat = coeffs.reshape(-1, 2 * self.kit.k * self.kit.k)
        out = self._corrector.dot(flat.T).T
        return np.ascontiguousarray(out).reshape(coeffs.shape) if lead else out.reshape(coeffs.shape)

    # -- batched array lanes (engine hot path) --------------------------------

    def rhs_drift(self, coeffs: np.ndarray, strat: bool = False) -> np.ndarray:
        """Ito (or Stratonovich, strat=True) drift for a batch (...,2,K,K)."""
        if self.kind == "zero":
            return np.zeros_like(coeffs)
        if self.kind == "additive-ou":
            return -coeffs
        heat = -self.params.nu * self.kit.ksq * coeffs
        if self.kind == "heat":
            return heat
        u, ux, uy = self.kit.state_blocks(coeffs)
        phys = -(u[..., 0:1, :, :] * ux + u[..., 1:2, :, :] * uy)
        out = self.kit.truncate_gather(phys)
        _apply_leray(out, self.band)
        out = out + heat
        if not strat:
            out = out + self.apply_corrector(coeffs)
        return out

    def rhs_step_terms(self, coeffs: np.ndarray, weights: np.ndarray | None, strat: bool = False):
        """Drift and weighted noise sum in one pass (shared derivative blocks)."""
        if self.kind != "salt-ns":
            drift = self.rhs_drift(coeffs, strat=strat)
            noise = None
            if weights is not None and self.m:
                noise = self.rhs_noise_contraction(coeffs, weights)
            return drift, noise
        want_noise = weights is not None and self.m > 0
        heat = -self.params.nu * self.kit.ksq * coeffs
        u, ux, uy = self.kit.state_blocks(coeffs)
        drift_phys = -(u[..., 0:1, :, :] * ux + u[..., 1:2, :, :] * uy)
        corr = None if strat else self.apply_corrector(coeffs)
        if not want_noise:
            out = self.kit.truncate_gather(drift_phys)
            _apply_leray(out, self.band)
            out = out + heat
            return (out if corr is None else out + corr), None
        xi_eff = np.einsum("...i,icxy->...cxy", weights, self._xi_phys)
        dxi_eff = np.einsum("...i,iljxy->...ljxy", weights, self._dxi)
        noise_phys = (
            xi_eff[..., 0:1, :, :] * ux
            + xi_eff[..., 1:2, :, :] * uy
            + np.einsum("...ljxy,...jxy->...lxy", dxi_eff, u)
        )
        both = self.kit.truncate_gather(np.concatenate([drift_phys, noise_phys], axis=-3))
        drift = both[..., :2, :, :]
        noise = both[..., 2:, :, :]
        _apply_leray(drift, self.band)
        _apply_leray(noise, self.band)
        drift = drift + heat
        return (drift if corr is None else drift + corr), noise

    def rhs_noise_contraction(self, coeffs: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """sum_i weights[..., i] * G_i(state); weights has shape (..., m)."""
        if self.m == 0:
            return np.zeros_like(coeffs)
        if self._additive is not None:
            return np.einsum("...i,icxy->...cxy", weights, self._additive)
        u, ux, uy = self.kit.state_blocks(coeffs)
        xi_eff = np.einsum("...i,icxy->...cxy", weights, self._xi_phys)
        # dxi axes are [derivative direction, xi component]; the zeroth-order
        # term needs (sum_j u^j d_l xi^j)_l, i.e. contraction over the component
        dxi_eff = np.einsum("...i,iljxy->...ljxy", weights, self._dxi)
        transport = xi_eff[..., 0:1, :, :] * ux + xi_eff[..., 1:2, :, :] * uy
        zeroth = np.einsum("...ljxy,...jxy->...lxy", dxi_eff, u)
        out = self.kit.truncate_gather(transport + zeroth)
        _apply_leray(out, self.band)
        return out

    def rhs_energy_terms(self, coeffs: np.ndarray):
        """(Ito drift, all noise columns) with one shared derivative pass."""
        if self.kind != "salt-ns":
            return self.rhs_drift(coeffs), self.rhs_noise_all(coeffs)
        heat = -self.params.nu * self.kit.ksq * coeffs
        u, ux, uy = self.kit.state_blocks(coeffs)
        drift_phys = -(u[..., 0:1, :, :] * ux + u[..., 1:2, :, :] * uy)
        transport = (
            self._xi_phys[:, 0][:, None] * ux[..., None, :, :, :]
            + self._xi_phys[:, 1][:, None] * uy[..., None, :, :, :]
        )
        zeroth = np.einsum("iljxy,...jxy->...ilxy", self._dxi, u)
        stacked = np.concatenate([drift_phys[..., None, :, :, :], transport + zeroth], axis=-4)
        out = self.kit.truncate_gather(stacked)
        _apply_leray(out, self.band)
        drift = out[..., 0, :, :, :] + heat + self.apply_corrector(coeffs)
        return drift, out[..., 1:, :, :, :]

    def rhs_noise_all(self, coeffs: np.ndarray) -> np.ndarray:
        """All noise columns at once: shape (..., m, 2, K, K)."""
        lead = coeffs.shape[:-3]
        if self.m == 0:
            return np.zeros(lead + (0, 2) + coeffs.shape[-2:], dtype=np.complex128)
        if self._additive is not None:
            out = np.broadcast_to(self._additive, lead + self._additive.shape)
            return out.copy()
        u, ux, uy = self.kit.state_blocks(coeffs)
        transport = (
            self._xi_phys[:, 0][:, None] * ux[..., None, :, :, :]
            + self._xi_phys[:, 1][:, None] * uy[..., None, :, :, :]
        )
        zeroth = np.einsum("iljxy,...jxy->...ilxy", self._dxi, u)
        out = self.kit.truncate_gather(transport + zeroth)
        _apply_leray(out, self.band)
        return out

    def rhs_noise_column(self, coeffs: np.ndarray, i: int) -> np.ndarray:
        if i < 0 or i >= self.m:
            raise IndexError(f"noise index {i} out of range (m={self.m})")
        w = np.zeros(coeffs.shape[:-3] + (self.m,))
        w[..., i] = 1.0
        return self.rhs_noise_contraction(coeffs, w)

    def xi_truncated(self) -> "SaltCoefficients":
        """The first m correlation fields (the columns the pair actually drives)."""
        if self.xi is None:
            raise ValueError("pair has no xi ensemble")
        return SaltCoefficients(self.xi.xi[: self.m], self.xi.decay_weights[: self.m])

    # -- field-level evaluators ------------------------------------------------

    def _check(self, f: SpectralField) -> None:
        if f.band != self.band:
            raise ValueError(f"state band {f.band} does not match pair band {self.band}")

    def drift(self, t: float, f: SpectralField) -> SpectralField:
        self._check(f)
        return SpectralField(self.band, self.rhs_drift(f.coeffs))

    def strat_drift(self, t: float, f: SpectralField) -> SpectralField:
        self._check(f)
        return SpectralField(self.band, self.rhs_drift(f.coeffs, strat=True))

    def noise_column(self, t: float, f: SpectralField, i: int) -> SpectralField:
        self._check(f)
        return SpectralField(self.band, self.rhs_noise_column(f.coeffs, i))


# -- raw (untruncated) SALT operators for oracles and audits -------------------


def _salt_kit(phi: SpectralField, xi: SaltCoefficients) -> GridKit:
    return GridKit(phi.band, xi_band=max(xi.band(), 1))


def salt_apply(phi: SpectralField, i: int, xi: SaltCoefficients) -> SpectralField:
    """B_i phi = xi_i . grad phi + (grad xi_i)^T phi, before Leray projection.

    The result lives on the enlarged band phi.band + xi.band so that a second
    application (the corrector composition) is exact.
    """
    if i < 0 or i >= len(xi):
        raise IndexError(f"noise index {i} out of range (m={len(xi)})")
    out_band = phi.band + xi.band()
    kit = GridKit(out_band, xi_band=xi.band())
    u, ux, uy = kit.state_blocks(phi.pad_to(out_band).coeffs)
    xf = xi.scaled(i).pad_to(out_band) if xi.scaled(i).band < out_band else xi.scaled(i)
    xhat = kit.to_hat(xf.coeffs)
    xp = kit.phys(xhat).real
    dxp = np.stack([kit.phys(kit.ikx * xhat).real, kit.phys(kit.iky * xhat).real])
    transport = xp[0] * ux + xp[1] * uy
    zeroth = np.einsum("ljxy,...jxy->...lxy", dxp, u)
    out = kit.truncate_gather(transport + zeroth, zero_mean=False)
    return SpectralField(out_band, out)


def salt_noise_column(u: SpectralField, i: int, xi: SaltCoefficients) -> SpectralField:
    """G_i(u) = Leray(B_i u); solenoidal, on the enlarged band."""
    return leray_project(salt_apply(u, i, xi))


def salt_corrector(u: SpectralField, xi: SaltCoefficients) -> SpectralField:
    """1/2 sum_i Leray(B_i(B_i u)), on the band enlarged by twice the xi band."""
    if len(xi) == 0:
        return SpectralField.zero(u.band)
    acc = None
    for i in range(len(xi)):
        term = salt_apply(salt_apply(u, i, xi), i, xi)
        acc = term if acc is None else acc + term
    return leray_project(0.5 * acc)


def advection(u: SpectralField, project: bool = True, truncate: bool = True) -> SpectralField:
    """Pseudo-spectral (u . grad) u, dealiased; Leray-projected by default.

    truncate=False keeps the full quadratic band 2*u.band (used by oracles);
    project=False skips the Leray step.
    """
    out_band = 2 * u.band
    kit = GridKit(out_band)
    up, ux, uy = kit.state_blocks(u.pad_to(out_band).coeffs)
    adv = up[..., 0:1, :, :] * ux + up[..., 1:2, :, :] * uy
    out = kit.truncate_gather(adv)
    f = SpectralField(out_band, out)
    if project:
        f = leray_project(f)
    if truncate:
        f = f.restrict_to(u.band)
    return f


def drift_eval(pair: OperatorPair, t: float, u: SpectralField) -> SpectralField:
    """Assembled drift of the pair at (t, u)."""
    return pair.drift(t, u)


# -- pair factories ------------------------------------------------------------


def make_pair(
    kind: str,
    band: int,
    nu: float = 1.0,
    noise_modes: int = 0,
    xi: SaltCoefficients | None = None,
    xi_amplitude: float = 0.3,
    xi_decay: float = 0.5,
    xi_phase_seed: int | None = None,
    additive_noise: list[SpectralField] | None = None,
) -> OperatorPair:
    if kind == "salt-ns":
        if xi is None:
            xi = default_xi_library(noise_modes, band, xi_amplitude, xi_decay, xi_phase_seed)
        return OperatorPair("salt-ns", band, NSParams(nu, noise_modes), xi=xi)
    if kind == "heat":
        return OperatorPair("heat", band, NSParams(nu), additive_noise=additive_noise)
    if kind == "zero":
        return OperatorPair("zero", band)
    if kind == "additive-ou":
        return OperatorPair("additive-ou", band, additive_noise=additive_noise)
    raise ValueError(f"unknown operator kind {kind!r}")
