"""Binary path snapshots and CSV norm-series export.

Layout (all little-endian):

    magic   8 bytes  b"SPDEPATH"
    version u32      currently 1
    level   i64, steps i64, m i64
    dt f64, T f64, M f64 (NaN = no threshold), R f64, baseline f64
    hit_index i64 (-1 = never), blown u8, scheme u8 (0 euler, 1 heun), pad[6]
    seed_count u32, seed_words u64[seed_count]
    grid f64[steps+1]
    per grid point: coefficients (2, K, K) as interleaved re, im f64

Norm and energy series are recomputed on load (they are derived data).
"""

from __future__ import annotations

import struct

import numpy as np

from .engine import PathRecord
from .spaces import space_weights

MAGIC = b"SPDEPATH"
VERSION = 1
_SCHEMES = ("euler", "heun")


def _seed_words(seed) -> list[int]:
    if isinstance(seed, (int, np.integer)):
        return [int(seed) & 0xFFFFFFFFFFFFFFFF]
    return [int(s) & 0xFFFFFFFFFFFFFFFF for s in seed]


def save_path(path_record: PathRecord, filename) -> None:
    rec = path_record
    if rec.states is None:
        raise ValueError("snapshot export needs state snapshots; record with record_states=True")
    steps = len(rec.grid) - 1
    k = rec.states.shape[-1]
    m_words = _seed_words(rec.seed)
    with open(filename, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<qqq", rec.level, steps, 0))
        fh.write(
            struct.pack(
                "<ddddd",
                rec.dt,
                float(rec.grid[-1]),
                float("nan") if rec.M is None else rec.M,
                rec.R,
                rec.baseline,
            )
        )
        fh.write(struct.pack("<qBB6x", rec.hit_index, int(rec.blown_up), _SCHEMES.index(rec.scheme)))
        fh.write(struct.pack("<I", len(m_words)))
        for w in m_words:
            fh.write(struct.pack("<Q", w))
        np.asarray(rec.grid, dtype="<f8").tofile(fh)
        flat = np.empty((steps + 1, 2, k, k, 2), dtype="<f8")
        flat[..., 0] = rec.states.real
        flat[..., 1] = rec.states.imag
        flat.tofile(fh)


def series_from_states(states: np.ndarray, dt: float, hit_index: int):
    """Recompute norm and energy series of a stopped path from its states."""
    band = (states.shape[-1] - 1) // 2
    w = {s: space_weights(band, s) for s in ("U", "H", "V")}
    sq = states.real**2 + states.imag**2
    u2 = np.sum(w["U"] * sq, axis=(-3, -2, -1))
    h2 = np.sum(w["H"] * sq, axis=(-3, -2, -1))
    v2 = np.sum(w["V"] * sq, axis=(-3, -2, -1))
    stop = hit_index if hit_index >= 0 else len(u2)
    uh = np.empty_like(u2)
    hv = np.empty_like(u2)
    sup_u = int_h = sup_h = int_v = None
    sup_u, sup_h, int_h, int_v = u2[0], h2[0], 0.0, 0.0
    uh[0], hv[0] = sup_u, sup_h
    for j in range(1, len(u2)):
        if j <= stop:
            int_h += h2[j - 1] * dt
            int_v += v2[j - 1] * dt
            sup_u = max(sup_u, u2[j])
            sup_h = max(sup_h, h2[j])
            uh[j] = sup_u + int_h
            hv[j] = sup_h + int_v
        else:
            uh[j] = uh[j - 1]
            hv[j] = hv[j - 1]
    return u2, h2, v2, uh, hv


def load_path(filename) -> PathRecord:
    with open(filename, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{filename}: not a path snapshot (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise ValueError(f"{filename}: unsupported snapshot version {version}")
        level, steps, _ = struct.unpack("<qqq", fh.read(24))
        dt, T, M, R, baseline = struct.unpack("<ddddd", fh.read(40))
        hit_index, blown, scheme_id = struct.unpack("<qBB6x", fh.read(16))
        (seed_count,) = struct.unpack("<I", fh.read(4))
        seed_words = [struct.unpack("<Q", fh.read(8))[0] for _ in range(seed_count)]
        grid = np.fromfile(fh, dtype="<f8", count=steps + 1)
        k = 2 * level + 1
        flat = np.fromfile(fh, dtype="<f8", count=(steps + 1) * 2 * k * k * 2)
    flat = flat.reshape(steps + 1, 2, k, k, 2)
    states = flat[..., 0] + 1j * flat[..., 1]
    u2, h2, v2, uh, hv = series_from_states(states, dt, hit_index)
    seed = seed_words[0] if seed_count == 1 else tuple(seed_words)
    return PathRecord(
        level=level,
        grid=grid,
        seed=seed,
        dt=dt,
        scheme=_SCHEMES[scheme_id],
        M=None if np.isnan(M) else M,
        R=R,
        norm_u_sq=u2,
        norm_h_sq=h2,
        norm_v_sq=v2,
        uh_series=uh,
        hv_series=hv,
        hit_index=int(hit_index),
        baseline=baseline,
        states=states,
        blown_up=bool(blown),
    )


def write_norms_csv(rec: PathRecord, filename) -> None:
    with open(filename, "w", newline="") as fh:
        fh.write("t,normU,normH,normV,uh,hv,hit\n")
        for row in rec.norms_csv_rows():
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
