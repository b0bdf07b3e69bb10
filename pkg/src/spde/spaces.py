"""Weighted spectral-coefficient spaces for mean-zero divergence-free fields on the 2-torus.

A field is stored as complex Fourier coefficients on the centered square band
``|k|_inf <= band`` (k = (0,0) is the mean mode and is excluded from the state
space).  The embedded spaces U, H, V and the dual-side norms Hstar, Hbar are
realized by per-mode weights:

    w_U = 1,   w_H = 1 + |k|^2,   w_V = (1 + |k|^2)^2,
    w_Hstar = 1 / w_H,            w_Hbar = w_H.

All operations here are pure functions of immutable values; they are safe to
call from any number of workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPACES = ("U", "H", "V", "Hstar", "Hbar")

_REALITY_TOL = 1e-12
_SOLENOIDAL_TOL = 1e-12


def wavenumber_grids(band: int) -> tuple[np.ndarray, np.ndarray]:
    """Centered integer wavenumber grids kx, ky of shape (2*band+1, 2*band+1)."""
    k = np.arange(-band, band + 1)
    return np.meshgrid(k, k, indexing="ij")


def space_weights(band: int, space: str) -> np.ndarray:
    """Per-mode weight grid for one of the supported space tags."""
    kx, ky = wavenumber_grids(band)
    ksq = (kx * kx + ky * ky).astype(float)
    if space == "U":
        return np.ones_like(ksq)
    if space == "H" or space == "Hbar":
        return 1.0 + ksq
    if space == "V":
        return (1.0 + ksq) ** 2
    if space == "Hstar":
        return 1.0 / (1.0 + ksq)
    raise ValueError(f"unknown space tag {space!r}; expected one of {SPACES}")


def mu_level(n: int) -> float:
    """Tail constant mu_n = min over |k|_inf > n of sqrt(w_H/w_U) = sqrt(1+(n+1)^2)."""
    if n < 0:
        raise ValueError("level must be nonnegative")
    return float(np.sqrt(1.0 + (n + 1) ** 2))


class SpectralField:
    """Complex Fourier coefficients of a 2D vector field, centered layout.

    ``coeffs[c, band+kx, band+ky]`` is component c of the coefficient at mode
    (kx, ky).  State fields keep the mean mode (0,0) at zero; noise-correlation
    fields may carry a constant (mean) part.
    """

    __slots__ = ("band", "coeffs")

    def __init__(self, band: int, coeffs: np.ndarray):
        k = 2 * band + 1
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != (2, k, k):
            raise ValueError(f"coeffs must have shape (2, {k}, {k}), got {coeffs.shape}")
        self.band = band
        self.coeffs = coeffs

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, band: int) -> "SpectralField":
        k = 2 * band + 1
        return cls(band, np.zeros((2, k, k), dtype=np.complex128))

    @classmethod
    def from_modes(cls, band: int, modes: dict[tuple[int, int], tuple[complex, complex]]) -> "SpectralField":
        """Field with exactly the given coefficients; everything else zero."""
        f = cls.zero(band)
        for (kx, ky), (cx, cy) in modes.items():
            if max(abs(kx), abs(ky)) > band:
                raise ValueError(f"mode {(kx, ky)} outside band {band}")
            f.coeffs[0, band + kx, band + ky] = cx
            f.coeffs[1, band + kx, band + ky] = cy
        return f

    @classmethod
    def real_mode(cls, band: int, k: tuple[int, int], vec: tuple[complex, complex]) -> "SpectralField":
        """Real-valued field from one conjugate pair: coeff(k)=vec, coeff(-k)=conj(vec)."""
        kx, ky = k
        return cls.from_modes(band, {(kx, ky): vec, (-kx, -ky): (np.conj(vec[0]), np.conj(vec[1]))})

    @classmethod
    def constant(cls, band: int, vec: tuple[float, float]) -> "SpectralField":
        """Spatially constant field (mean mode only); used for noise correlations."""
        return cls.from_modes(band, {(0, 0): (vec[0], vec[1])})

    # -- basic algebra -----------------------------------------------------

    def copy(self) -> "SpectralField":
        return SpectralField(self.band, self.coeffs.copy())

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_band(other)
        return SpectralField(self.band, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_band(other)
        return SpectralField(self.band, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.band, self.coeffs * scalar)

    __rmul__ = __mul__

    def _check_band(self, other: "SpectralField") -> None:
        if other.band != self.band:
            raise ValueError(f"band mismatch: {self.band} vs {other.band}")

    def pad_to(self, band: int) -> "SpectralField":
        """Embed into a larger band (zero padding of the new outer modes)."""
        if band < self.band:
            raise ValueError("pad_to target band smaller than current band")
        if band == self.band:
            return self.copy()
        out = SpectralField.zero(band)
        s = band - self.band
        k = 2 * self.band + 1
        out.coeffs[:, s : s + k, s : s + k] = self.coeffs
        return out

    def restrict_to(self, band: int) -> "SpectralField":
        """Center crop to a smaller band (drops the outer modes)."""
        if band > self.band:
            raise ValueError("restrict_to target band larger than current band")
        if band == self.band:
            return self.copy()
        s = self.band - band
        k = 2 * band + 1
        return SpectralField(band, self.coeffs[:, s : s + k, s : s + k].copy())

    def get_mode(self, k: tuple[int, int]) -> np.ndarray:
        kx, ky = k
        return self.coeffs[:, self.band + kx, self.band + ky]

    # -- invariants --------------------------------------------------------

    def reality_defect(self) -> float:
        """Max |coeff(-k) - conj(coeff(k))| over the band."""
        flipped = self.coeffs[:, ::-1, ::-1]
        return float(np.max(np.abs(flipped - np.conj(self.coeffs))))

    def solenoidal_defect(self) -> float:
        """Max |k . coeff(k)| relative to the coefficient magnitude."""
        kx, ky = wavenumber_grids(self.band)
        div = kx * self.coeffs[0] + ky * self.coeffs[1]
        scale = max(float(np.max(np.abs(self.coeffs))), 1e-300)
        return float(np.max(np.abs(div))) / scale

    def validate(self, require_real: bool = True, require_mean_zero: bool = True) -> None:
        if require_mean_zero and np.any(self.get_mode((0, 0)) != 0):
            raise ValueError("mean mode (0,0) must vanish for state fields")
        if self.solenoidal_defect() > _SOLENOIDAL_TOL:
            raise ValueError("field is not divergence-free (k . coeff != 0)")
        if require_real:
            scale = max(float(np.max(np.abs(self.coeffs))), 1e-300)
            if self.reality_defect() / scale > _REALITY_TOL:
                raise ValueError("coefficients violate conjugate symmetry")

    # -- norms and pairings --------------------------------------------------

    def norm(self, space: str) -> float:
        w = space_weights(self.band, space)
        return float(np.sqrt(np.sum(w * np.abs(self.coeffs) ** 2)))

    def norm_sq(self, space: str) -> float:
        w = space_weights(self.band, space)
        return float(np.sum(w * np.abs(self.coeffs) ** 2))

    def inner_u(self, other: "SpectralField") -> float:
        self._check_band(other)
        return float(np.real(np.sum(self.coeffs * np.conj(other.coeffs))))


def norm(field: SpectralField, space: str) -> float:
    """Weighted coefficient norm: sqrt(sum_k w_space(k) |coeff(k)|^2)."""
    return field.norm(space)


def inner(f: SpectralField, g: SpectralField, space: str = "U") -> float:
    f._check_band(g)
    w = space_weights(f.band, space)
    return float(np.real(np.sum(w * f.coeffs * np.conj(g.coeffs))))


def dual_pairing(f: SpectralField, g: SpectralField) -> float:
    """Hstar x H duality pairing, realized with unit weights.

    For f in the range of U this coincides with the U inner product, which is
    the compatibility the induced triple H -> U -> Hstar requires.
    """
    return f.inner_u(g)


def project_n(field: SpectralField, n: int) -> SpectralField:
    """Orthogonal projection onto modes 1 <= |k|_inf <= n (the mean stays out)."""
    if n < 1:
        raise ValueError("projection level must be >= 1")
    out = field.copy()
    kx, ky = wavenumber_grids(field.band)
    keep = (np.maximum(np.abs(kx), np.abs(ky)) <= n) & ((kx != 0) | (ky != 0))
    out.coeffs *= keep[None, :, :]
    return out


def tail_bound_check(field: SpectralField, n: int) -> float:
    """Ratio ||(I - P_n) f||_U * mu_n / ||f||_Hbar; at most 1 for any f."""
    tail = field - project_n(field, n)
    # remove the mean from the tail as well: it is not part of the basis range
    tail.coeffs[:, field.band, field.band] = 0.0
    hbar = field.norm("Hbar")
    if hbar == 0.0:
        return 0.0
    return tail.norm("U") * mu_level(n) / hbar


@dataclass(frozen=True)
class GrowthProfile:
    """Exponent p in the growth factors 1 + ||.||^p."""

    p: float = 2.0

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("growth exponent p must be nonnegative")


def growth_K(fields, space: str, profile: GrowthProfile = GrowthProfile()) -> float:
    """Growth factor 1 + sum of p-th powers of the given fields' space-norms.

    Accepts a single field or a sequence (the one- and two-argument forms).
    Note the p = 0 edge: x^0 = 1, so a single zero field gives 1 + 1 = 2.
    """
    if isinstance(fields, SpectralField):
        fields = (fields,)
    return 1.0 + sum(f.norm(space) ** profile.p for f in fields)


@dataclass(frozen=True)
class CutoffSpec:
    """Threshold R of the smooth cutoff: identity on [0, R], zero from 2R on."""

    R: float

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("cutoff threshold R must be positive")


def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def cutoff_eval(x, spec: CutoffSpec):
    """Smooth partition-of-unity cutoff: exactly 1 on [0,R], exactly 0 on [2R,inf).

    f(x) = q((2R-x)/R) / (q((2R-x)/R) + q((x-R)/R)) with q(s) = exp(-1/s) for
    s > 0 and 0 otherwise; strictly decreasing on (R, 2R).
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("cutoff argument must be nonnegative")
    r = spec.R
    top = _bump((2.0 * r - x) / r)
    bot = top + _bump((x - r) / r)
    with np.errstate(invalid="ignore"):
        val = np.where(bot > 0, top / np.where(bot > 0, bot, 1.0), 0.0)
    if val.ndim == 0:
        return float(val)
    return val


# -- path energy functionals ------------------------------------------------


def _grid_index(grid: np.ndarray, t: float) -> int:
    dt = grid[1] - grid[0] if len(grid) > 1 else 1.0
    j = int(round((t - grid[0]) / dt))
    if j < 0 or j >= len(grid) or abs(grid[0] + j * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"time {t} is not on the path grid")
    return j


def running_energy(grid: np.ndarray, sup_sq: np.ndarray, int_sq: np.ndarray) -> np.ndarray:
    """Series F(t_j) = max_{r<=j} sup_sq[r] + left-Riemann sum of int_sq up to t_j.

    Shapes broadcast over leading axes; the grid must be uniform.
    """
    grid = np.asarray(grid, dtype=float)
    if len(grid) > 2:
        steps = np.diff(grid)
        if np.max(np.abs(steps - steps[0])) > 1e-9 * max(steps[0], 1.0):
            raise ValueError("path grid must be uniform")
    dt = grid[1] - grid[0] if len(grid) > 1 else 0.0
    sup_part = np.maximum.accumulate(sup_sq, axis=-1)
    integral = np.zeros_like(np.asarray(int_sq, dtype=float))
    integral[..., 1:] = np.cumsum(int_sq[..., :-1], axis=-1) * dt
    return sup_part + integral


def uh_functional(path, t: float) -> float:
    """sup_{r<=t} ||psi_r||_U^2 + int_0^t ||psi_r||_H^2 dr on the record's grid.

    Frozen after the record's hitting time (the stopped-path convention).
    """
    j = _grid_index(np.asarray(path.grid), t)
    return float(path.uh_series[j])


def hv_functional(path, t: float) -> float:
    """sup_{r<=t} ||psi_r||_H^2 + int_0^t ||psi_r||_V^2 dr on the record's grid."""
    j = _grid_index(np.asarray(path.grid), t)
    return float(path.hv_series[j])


# -- random fields -----------------------------------------------------------


def random_solenoidal(
    band: int,
    rng: np.random.Generator,
    spectrum_slope: float = 1.5,
    target_norm_u: float = 1.0,
    clip_norm_u: float | None = None,
) -> SpectralField:
    """Seeded random real divergence-free field with a power-law spectrum.

    Each mode k gets a complex Gaussian amplitude times (1+|k|^2)^(-slope/2)
    along the one-dimensional solenoidal direction k_perp/|k|; the conjugate
    mirror enforces reality.  Scaled to the requested U norm and optionally
    clipped (the bounded-initial-data convention).
    """
    f = SpectralField.zero(band)
    for kx in range(-band, band + 1):
        for ky in range(-band, band + 1):
            if kx < 0 or (kx == 0 and ky <= 0):
                continue
            ksq = kx * kx + ky * ky
            g = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2.0)
            amp = (1.0 + ksq) ** (-spectrum_slope / 2.0)
            kmag = np.sqrt(ksq)
            perp = np.array([-ky / kmag, kx / kmag])
            vec = g * amp * perp
            f.coeffs[:, band + kx, band + ky] = vec
            f.coeffs[:, band - kx, band - ky] = np.conj(vec)
    u = f.norm("U")
    if u > 0 and target_norm_u is not None:
        f = f * (target_norm_u / u)
    if clip_norm_u is not None and f.norm("U") > clip_norm_u:
        f = f * (clip_norm_u / f.norm("U"))
    return f


def taylor_green(band: int, amplitude: float = 1.0) -> SpectralField:
    """The two-mode cellular field A (sin x cos y, -cos x sin y)."""
    if band < 1:
        raise ValueError("band must be at least 1 for the cellular field")
    a = amplitude / 4.0
    modes = {
        (1, 1): (-1j * a, 1j * a),
        (1, -1): (-1j * a, -1j * a),
        (-1, 1): (1j * a, 1j * a),
        (-1, -1): (1j * a, -1j * a),
    }
    f = SpectralField.from_modes(band, modes)
    f.validate()
    return f
