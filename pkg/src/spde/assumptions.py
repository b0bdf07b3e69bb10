"""Registry of the structural inequalities the operator pairs are audited against.

Each entry states one inequality of the form

    LHS(pair, fields)  <=  c * majorant(fields)  - gamma * coercivity(fields)
                           [+ eps * slack(fields)]

over one, two or three sample fields.  A witness evaluates the signed margin
RHS - LHS at supplied constants; the audit sweeps a sample set and fits the
constants canonically:

    gamma_fit = max(0, min over samples of -LHS / coercivity_weight)
    c_fit     = max(0, max over samples of (LHS + gamma_fit * coercivity
                                            - eps * slack) / majorant)

so the reported gamma is the coercivity the operators actually provide before
any help from the c-term, and c is the smallest constant closing the rest.
Inequalities that cannot be closed by any finite c reveal themselves through
superlinear growth of the LHS against the majorant (log-log regression slope).

Noise sums are truncated at the pair's noise dimension m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import OperatorPair, advection, salt_corrector, salt_noise_column
from .spaces import GrowthProfile, SpectralField, growth_K, random_solenoidal

ASSUMPTION_SETS = {
    1: ("A1.1", "A1.2", "A1.3", "A1.4"),
    2: ("A2.1", "A2.2"),
    3: ("A3.1", "A3.2"),
}


def drift_raw(pair: OperatorPair, t: float, u: SpectralField) -> SpectralField:
    """The drift without the Galerkin band truncation (enlarged band for salt-ns)."""
    if pair.kind == "zero":
        return SpectralField.zero(u.band)
    if pair.kind == "additive-ou":
        return -1.0 * u
    if pair.kind == "heat":
        return pair.drift(t, u)
    xb = max(pair.xi.band(), 0)
    out_band = max(2 * u.band, u.band + 2 * xb)
    heat = pair.params.nu * laplacian(u).pad_to(out_band)
    adv = advection(u, project=True, truncate=False).pad_to(out_band)
    corr = salt_corrector(u, pair.xi_truncated()).pad_to(out_band)
    return heat - adv + corr


def noise_raw(pair: OperatorPair, t: float, u: SpectralField, i: int) -> SpectralField:
    """Noise column without the Galerkin band truncation."""
    if i < 0 or i >= pair.m:
        raise IndexError(f"noise index {i} out of range (m={pair.m})")
    if pair.kind == "salt-ns":
        return salt_noise_column(u, i, pair.xi_truncated())
    return pair.noise_column(t, u, i)


def laplacian(u: SpectralField) -> SpectralField:
    from .spaces import wavenumber_grids

    kx, ky = wavenumber_grids(u.band)
    ksq = (kx * kx + ky * ky).astype(float)
    return SpectralField(u.band, -ksq * u.coeffs)


def _pad_pair(a: SpectralField, b: SpectralField):
    band = max(a.band, b.band)
    return a.pad_to(band), b.pad_to(band)


def inner_any(a: SpectralField, b: SpectralField, space: str = "U") -> float:
    from .spaces import inner

    a, b = _pad_pair(a, b)
    return inner(a, b, space)


def diff_any(a: SpectralField, b: SpectralField) -> SpectralField:
    a, b = _pad_pair(a, b)
    return a - b


class OpCache:
    """Memoized raw and projected operator evaluations for an audit sweep.

    Keys are object identities, so every entry also pins the keyed field: a
    garbage-collected field could otherwise hand its address to a new object
    and alias a stale entry.
    """

    def __init__(self, pair: OperatorPair, t: float = 0.0):
        self.pair = pair
        self.t = t
        self._memo: dict[tuple[str, int], tuple[SpectralField, object]] = {}

    def _get(self, kind: str, f: SpectralField, compute):
        key = (kind, id(f))
        hit = self._memo.get(key)
        if hit is None or hit[0] is not f:
            hit = (f, compute())
            self._memo[key] = hit
        return hit[1]

    def drift(self, f: SpectralField) -> SpectralField:
        return self._get("A", f, lambda: drift_raw(self.pair, self.t, f))

    def cols(self, f: SpectralField) -> list[SpectralField]:
        return self._get("G", f, lambda: [noise_raw(self.pair, self.t, f, i) for i in range(self.pair.m)])

    def pdrift(self, f: SpectralField) -> SpectralField:
        return self._get("PA", f, lambda: self.pair.drift(self.t, f))

    def pcols(self, f: SpectralField) -> list[SpectralField]:
        return self._get(
            "PG", f, lambda: [self.pair.noise_column(self.t, f, i) for i in range(self.pair.m)]
        )


@dataclass(frozen=True)
class Inequality:
    ineq_id: str
    nargs: int
    lhs: callable
    majorant: callable
    coercivity: callable | None = None  # weight of the -gamma term
    slack: callable | None = None  # weight of the +eps term (A3.2b)
    projected: bool = False


def _kU(prof, *fs):
    return growth_K(fs, "U", prof)


def _kH(prof, *fs):
    return growth_K(fs, "H", prof)


def _kV(prof, *fs):
    return growth_K(fs, "V", prof)


def _registry() -> dict[str, tuple[Inequality, ...]]:
    def a11a_lhs(c, fs, p):
        (f,) = fs
        return c.drift(f).norm("Hstar") + sum(g.norm("U") ** 2 for g in c.cols(f))

    def a11a_maj(fs, p):
        (f,) = fs
        return _kU(p, f) * (1.0 + f.norm("H") ** 2)

    def a11b_lhs(c, fs, p):
        f, g = fs[:2]
        return diff_any(c.drift(f), c.drift(g)).norm("U") ** 2

    def a11b_maj(fs, p):
        f, g = fs[:2]
        return _kV(p, f, g) * (f - g).norm("V") ** 2

    def a11c_lhs(c, fs, p):
        f, g = fs[:2]
        return sum(diff_any(a, b).norm("U") ** 2 for a, b in zip(c.cols(f), c.cols(g)))

    def a11c_maj(fs, p):
        f, g = fs[:2]
        return _kV(p, f, g) * (f - g).norm("H") ** 2

    def a12a_lhs(c, fs, p):
        (f,) = fs
        return 2.0 * inner_any(c.drift(f), f) + sum(g.norm("U") ** 2 for g in c.cols(f))

    def a12a_maj(fs, p):
        (f,) = fs
        return 1.0 + f.norm("U") ** 2

    def a12a_coer(fs):
        (f,) = fs
        return fs[0].norm("H") ** 2

    def a12b_lhs(c, fs, p):
        (f,) = fs
        return sum(inner_any(g, f) ** 2 for g in c.cols(f))

    def a12b_maj(fs, p):
        (f,) = fs
        return 1.0 + f.norm("U") ** 4

    def a13a_lhs(c, fs, p):
        f, g = fs[:2]
        return inner_any(c.drift(f), g)

    def a13a_maj(fs, p):
        f, g = fs[:2]
        q = 1.5
        return (_kU(p, f) + f.norm("H") ** q) * (_kU(p, g) + g.norm("H") ** q)

    def a13b_lhs(c, fs, p):
        f, g = fs[:2]
        return sum(inner_any(col, g) ** 2 for col in c.cols(f))

    def a13b_maj(fs, p):
        f, g = fs[:2]
        return _kU(p, f) * _kH(p, g)

    def a14a_lhs(c, fs, p):
        f, g, psi = fs[:3]
        return inner_any(diff_any(c.drift(f), c.drift(g)), psi)

    def a14a_maj(fs, p):
        f, g, psi = fs[:3]
        return _kV(p, psi) * (1.0 + f.norm("H") + g.norm("H")) * (f - g).norm("U")

    def a14b_lhs(c, fs, p):
        f, g, psi = fs[:3]
        return sum(inner_any(diff_any(a, b), psi) ** 2 for a, b in zip(c.cols(f), c.cols(g)))

    def a14b_maj(fs, p):
        f, g, psi = fs[:3]
        return _kV(p, psi) * (f - g).norm("U") ** 2

    def a21_lhs(c, fs, p):
        (f,) = fs
        return c.drift(f).norm("Hstar") ** 2

    def a22a_lhs(c, fs, p):
        f, g = fs[:2]
        d = f - g
        return 2.0 * inner_any(diff_any(c.drift(f), c.drift(g)), d) + sum(
            diff_any(a, b).norm("U") ** 2 for a, b in zip(c.cols(f), c.cols(g))
        )

    def a22a_maj(fs, p):
        f, g = fs[:2]
        return _kU(p, f, g) * (1.0 + f.norm("H") ** 2 + g.norm("H") ** 2) * (f - g).norm("U") ** 2

    def a22a_coer(fs):
        f, g = fs[:2]
        return (f - g).norm("H") ** 2

    def a22b_lhs(c, fs, p):
        f, g = fs[:2]
        d = f - g
        return sum(inner_any(diff_any(a, b), d) ** 2 for a, b in zip(c.cols(f), c.cols(g)))

    def a22b_maj(fs, p):
        f, g = fs[:2]
        return _kU(p, f, g) * (1.0 + f.norm("H") ** 2 + g.norm("H") ** 2) * (f - g).norm("U") ** 4

    def a31_lhs(c, fs, p):
        (f,) = fs
        return c.drift(f).norm("U") ** 2 + sum(g.norm("Hbar") ** 2 for g in c.cols(f))

    def a31_maj(fs, p):
        (f,) = fs
        return _kU(p, f) * (1.0 + f.norm("H") ** 4 + f.norm("V") ** 2)

    def a32a_lhs(c, fs, p):
        (f,) = fs
        return 2.0 * inner_any(c.pdrift(f), f, "H") + sum(g.norm("H") ** 2 for g in c.pcols(f))

    def a32a_maj(fs, p):
        (f,) = fs
        return _kU(p, f) * (1.0 + f.norm("H") ** 4)

    def a32a_coer(fs):
        return fs[0].norm("V") ** 2

    def a32b_lhs(c, fs, p):
        (f,) = fs
        return sum(inner_any(g, f, "H") ** 2 for g in c.pcols(f))

    def a32b_maj(fs, p):
        (f,) = fs
        return _kU(p, f) * (1.0 + f.norm("H") ** 6)

    def a32b_slack(fs):
        return fs[0].norm("V") ** 2

    def ia(*a, **k):
        return Inequality(*a, **k)

    return {
        "A1.1": (
            ia("A1.1a", 1, a11a_lhs, a11a_maj),
            ia("A1.1b", 2, a11b_lhs, a11b_maj),
            ia("A1.1c", 2, a11c_lhs, a11c_maj),
        ),
        "A1.2": (
            ia("A1.2a", 1, a12a_lhs, a12a_maj, coercivity=a12a_coer),
            ia("A1.2b", 1, a12b_lhs, a12b_maj),
        ),
        "A1.3": (
            ia("A1.3a", 2, a13a_lhs, a13a_maj),
            ia("A1.3b", 2, a13b_lhs, a13b_maj),
        ),
        "A1.4": (
            ia("A1.4a", 3, a14a_lhs, a14a_maj),
            ia("A1.4b", 3, a14b_lhs, a14b_maj),
        ),
        "A2.1": (ia("A2.1", 1, a21_lhs, a11a_maj),),
        "A2.2": (
            ia("A2.2a", 2, a22a_lhs, a22a_maj, coercivity=a22a_coer),
            ia("A2.2b", 2, a22b_lhs, a22b_maj),
        ),
        "A3.1": (ia("A3.1", 1, a31_lhs, a31_maj),),
        "A3.2": (
            ia("A3.2a", 1, a32a_lhs, a32a_maj, coercivity=a32a_coer, projected=True),
            ia("A3.2b", 1, a32b_lhs, a32b_maj, slack=a32b_slack, projected=True),
        ),
    }


REGISTRY = _registry()


@dataclass
class WitnessRow:
    ineq_id: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


@dataclass
class WitnessReport:
    assumption_id: str
    rows: list[WitnessRow]

    @property
    def margin(self) -> float:
        return min(r.margin for r in self.rows)

    @property
    def satisfied(self) -> bool:
        return self.margin >= -1e-10


def assumption_witness(
    pair: OperatorPair,
    assumption_id: str,
    fields,
    c: float = 1.0,
    gamma: float = 0.0,
    eps: float = 0.0,
    profile: GrowthProfile = GrowthProfile(2.0),
    t: float = 0.0,
) -> WitnessReport:
    """Signed margins RHS - LHS of every display under one assumption id.

    ``fields`` supplies the sample arguments; each display consumes as many
    leading fields as it needs.  Nonnegative margins mean satisfied at the
    given constants.
    """
    if assumption_id not in REGISTRY:
        raise KeyError(f"unknown assumption id {assumption_id!r}; known: {sorted(REGISTRY)}")
    if isinstance(fields, SpectralField):
        fields = (fields,)
    cache = OpCache(pair, t)
    rows = []
    for ineq in REGISTRY[assumption_id]:
        if len(fields) < ineq.nargs:
            raise ValueError(f"{ineq.ineq_id} needs {ineq.nargs} sample fields, got {len(fields)}")
        fs = tuple(fields[: ineq.nargs])
        lhs = ineq.lhs(cache, fs, profile)
        rhs = c * ineq.majorant(fs, profile)
        if ineq.coercivity is not None:
            rhs -= gamma * ineq.coercivity(fs)
        if ineq.slack is not None:
            rhs += eps * ineq.slack(fs)
        rows.append(WitnessRow(ineq.ineq_id, float(lhs), float(rhs)))
    return WitnessReport(assumption_id, rows)


@dataclass
class FitResult:
    ineq_id: str
    c: float
    gamma: float
    eps: float
    worst_margin: float
    samples: int
    slope: float | None
    superlinear: bool

    @property
    def finite(self) -> bool:
        return np.isfinite(self.c) and np.isfinite(self.gamma) and not self.superlinear


def fit_inequality(
    pair: OperatorPair,
    ineq: Inequality,
    sample_tuples,
    profile: GrowthProfile = GrowthProfile(2.0),
    eps: float = 0.5,
    t: float = 0.0,
    cache: OpCache | None = None,
) -> FitResult:
    """Fit (c, gamma) canonically over a sweep and report the binding margin."""
    cache = cache or OpCache(pair, t)
    lhs = np.empty(len(sample_tuples))
    maj = np.empty(len(sample_tuples))
    coer = np.zeros(len(sample_tuples))
    slack = np.zeros(len(sample_tuples))
    for s, fs in enumerate(sample_tuples):
        fs = fs[: ineq.nargs]
        lhs[s] = ineq.lhs(cache, fs, profile)
        maj[s] = ineq.majorant(fs, profile)
        if ineq.coercivity is not None:
            coer[s] = ineq.coercivity(fs)
        if ineq.slack is not None:
            slack[s] = ineq.slack(fs)
    use_eps = eps if ineq.slack is not None else 0.0
    gamma = 0.0
    if ineq.coercivity is not None:
        mask = coer > 1e-12
        if np.any(mask):
            gamma = max(0.0, float(np.min(-lhs[mask] / coer[mask])))
    resid = lhs + gamma * coer - use_eps * slack
    c = max(0.0, float(np.max(resid / np.maximum(maj, 1e-300))))
    margin = float(np.min(c * maj - gamma * coer + use_eps * slack - lhs))
    slope, superlinear = _scale_sweep(cache, ineq, sample_tuples, profile)
    return FitResult(ineq.ineq_id, c, gamma, use_eps, margin, len(sample_tuples), slope, superlinear)


def _scale_sweep(cache: OpCache, ineq: Inequality, sample_tuples, profile, bases: int = 3):
    """Detect that no finite c can close the inequality.

    Along amplitude scalings lambda * fields the ratio LHS / majorant must stay
    bounded; a positive log-log slope in lambda means the margin grows
    superlinearly against the claimed majorant.
    """
    lams = (1.0, 8.0, 64.0, 512.0)
    slopes = []
    for fs in sample_tuples[-bases:]:
        ratios = []
        for lam in lams:
            scaled = tuple(lam * f for f in fs[: ineq.nargs])
            lhs = ineq.lhs(cache, scaled, profile)
            maj = ineq.majorant(scaled, profile)
            ratios.append(lhs / max(maj, 1e-300))
        if ratios[-1] > 0 and ratios[-2] > 0:
            # asymptotic (last-segment) growth rate of the ratio
            slopes.append(float(np.log(ratios[-1] / ratios[-2]) / np.log(lams[-1] / lams[-2])))
    if not slopes:
        return None, False
    slope = float(np.median(slopes))
    return slope, slope > 0.5


def audit_samples(
    band: int,
    count: int,
    rng: np.random.Generator,
    include_probes: bool = True,
    amplitude_decades: float = 1.5,
) -> list[SpectralField]:
    """Sample fields for an audit sweep: scaled broadband plus low-mode probes.

    The probe fields expose the per-mode extremes of quadratic forms (the
    fitted coercivity is attained on them); the random fields cover generic
    directions across an amplitude range wide enough for slope regression.
    """
    fields: list[SpectralField] = []
    if include_probes:
        for j in range(1, band + 1):
            for k in ((j, 0), (0, j), (j, j), (j, -j)):
                kmag = np.hypot(*k)
                perp = (-k[1] / kmag, k[0] / kmag)
                fields.append(SpectralField.real_mode(band, k, (0.5 * perp[0], 0.5 * perp[1])))
    while len(fields) < count:
        amp = 10.0 ** rng.uniform(-amplitude_decades / 2.0, amplitude_decades)
        slope = rng.uniform(0.5, 2.5)
        fields.append(random_solenoidal(band, rng, spectrum_slope=slope, target_norm_u=amp))
    return fields[:count]


def tuples_for(fields: list[SpectralField], nargs: int):
    """Arity-matched sample tuples: consecutive fields, cyclic shifts."""
    n = len(fields)
    return [tuple(fields[(s + j) % n] for j in range(nargs)) for s in range(n)]
