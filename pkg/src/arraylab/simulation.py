"""
Narrowband snapshot simulation and DoA spatial spectra.

Sensor data follow the far-field plane-wave model

    x_l(t) = sum_k s_k(t) exp(j*pi*u_k*p_l) + n_l(t)

with ``p_l`` the integer sensor position in half wavelengths, independent
circular complex Gaussian source amplitudes and spatially white noise. The
SNR is per source per sensor.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .beamforming import ScanGrid, to_db
from .geometry import ArrayGeometry

RNG_NAME = "numpy.random.PCG64"
# grid rows processed per block in doa_spectrum; bounds peak memory
_BLOCK = 1024


class SceneError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SourceScene:
    directions: np.ndarray
    source_power: float = 1.0
    seed: Optional[int] = None

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.directions, dtype=float))
        if d.ndim != 1:
            raise SceneError("source directions must be a 1-D sequence")
        if np.any(np.abs(d) >= 1.0):
            raise SceneError("source direction cosines must lie strictly inside (-1, 1)")
        if d.size > 1 and np.any(np.diff(d) <= 0):
            raise SceneError("source directions must be strictly increasing")
        if self.source_power <= 0:
            raise SceneError("source power must be positive")
        d.setflags(write=False)
        object.__setattr__(self, "directions", d)

    @property
    def num_sources(self) -> int:
        return self.directions.size


def uniform_scene(num_sources: int, span: float = 0.95, source_power: float = 1.0, seed=None) -> SourceScene:
    """``num_sources`` directions evenly spaced in u over ``[-span, span]``."""
    if num_sources < 0:
        raise SceneError("number of sources must be >= 0")
    if num_sources == 1:
        dirs = np.array([0.0])
    else:
        dirs = np.linspace(-span, span, num_sources)
    return SourceScene(dirs, source_power, seed)


@dataclass(frozen=True, eq=False)
class SnapshotMatrix:
    data: np.ndarray
    noise_power: float
    source_power: float
    seed: Optional[int]
    rng: str = RNG_NAME

    @property
    def num_sensors(self) -> int:
        return self.data.shape[0]

    @property
    def num_snapshots(self) -> int:
        return self.data.shape[1]

    @property
    def snr_db(self) -> float:
        if self.noise_power == 0:
            return math.inf
        return 10.0 * math.log10(self.source_power / self.noise_power)


def _complex_gaussian(rng, shape, power):
    scale = math.sqrt(power / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def generate_snapshots(
    geometry: ArrayGeometry,
    scene: SourceScene,
    num_snapshots: int,
    snr_db: float,
    seed: Optional[int] = None,
) -> SnapshotMatrix:
    """
    Simulate ``num_snapshots`` array snapshots for ``scene``.

    ``snr_db = inf`` gives noise-free data. The seed falls back to
    ``scene.seed``; source amplitudes are drawn before the noise so the
    signal part does not depend on the SNR.
    """
    if num_snapshots < 1:
        raise SceneError("number of snapshots must be >= 1")
    if seed is None:
        seed = scene.seed
    rng = np.random.default_rng(seed)
    pos = geometry.positions_array().astype(float)
    T = int(num_snapshots)

    amps = _complex_gaussian(rng, (scene.num_sources, T), scene.source_power)
    steering = np.exp(1j * np.pi * np.multiply.outer(pos, scene.directions))
    data = steering @ amps if scene.num_sources else np.zeros((pos.size, T), complex)

    if math.isinf(snr_db) and snr_db > 0:
        noise_power = 0.0
    else:
        noise_power = scene.source_power / 10.0 ** (snr_db / 10.0)
        data = data + _complex_gaussian(rng, data.shape, noise_power)
    return SnapshotMatrix(data, noise_power, scene.source_power, seed)


@dataclass(frozen=True, eq=False)
class DoASpectrum:
    grid: ScanGrid
    values: np.ndarray
    peaks: list = field(default_factory=list)

    @property
    def values_db(self) -> np.ndarray:
        peak = self.values.max() if self.values.size and self.values.max() > 0 else 1.0
        return to_db(self.values / peak, 10.0)


def _beamform(rows: np.ndarray, positions: np.ndarray, u: np.ndarray) -> np.ndarray:
    """CBF outputs ``w(u)^H x`` for a block of scan directions; shape (len(u), T)."""
    weights = np.exp(-1j * np.pi * np.multiply.outer(u, positions)) / positions.size
    return weights @ rows


def combined_outputs(geometry: ArrayGeometry, data: np.ndarray, u: np.ndarray) -> np.ndarray:
    """
    Per-snapshot processor outputs at scan directions ``u``.

    Min families return ``min_i |y_i|``; product families return
    ``y_1 * conj(y_2)``; ULA/MRA return the full-array CBF output.
    """
    u = np.asarray(u, dtype=float)
    if geometry.combiner == "single":
        return _beamform(data, geometry.positions_array().astype(float), u)
    outs = [
        _beamform(data[idx], sub.positions.astype(float), u)
        for sub, idx in zip(geometry.subarrays, geometry.subarray_indices())
    ]
    if geometry.combiner == "min":
        return np.min(np.abs(outs), axis=0)
    return outs[0] * np.conj(outs[1])


def doa_spectrum(geometry: ArrayGeometry, snapshots: SnapshotMatrix, grid: ScanGrid) -> DoASpectrum:
    """Incoherent spectrum ``(1/T) * sum_t |y_t(u)|^2`` over the scan grid."""
    data = snapshots.data if isinstance(snapshots, SnapshotMatrix) else np.asarray(snapshots)
    if data.shape[0] != geometry.num_sensors:
        raise SceneError(
            f"snapshot matrix has {data.shape[0]} sensors, geometry has {geometry.num_sensors}"
        )
    u = grid.u_values
    values = np.empty(u.size)
    for start in range(0, u.size, _BLOCK):
        block = combined_outputs(geometry, data, u[start:start + _BLOCK])
        values[start:start + _BLOCK] = np.mean(np.abs(block) ** 2, axis=1)
    return DoASpectrum(grid, values)


@dataclass(frozen=True)
class PeakSet:
    peaks: list
    requested: int

    @property
    def shortfall(self) -> bool:
        return len(self.peaks) < self.requested


def detect_peaks(spectrum: DoASpectrum, k: int) -> PeakSet:
    """The ``k`` largest strict interior local maxima, largest first (ties: lower u)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    v = spectrum.values
    u = spectrum.grid.u_values
    idx = np.flatnonzero((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])) + 1
    order = np.lexsort((u[idx], -v[idx]))
    chosen = idx[order][:k]
    return PeakSet([(float(u[i]), float(v[i])) for i in chosen], k)


@dataclass
class DetectionReport:
    hits: int
    misses: int
    false_alarms: int
    matched_pairs: list
    tol_u: float
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "hits": self.hits,
            "misses": self.misses,
            "false_alarms": self.false_alarms,
            "matched_pairs": [list(p) for p in self.matched_pairs],
            "tol_u": self.tol_u,
            "seed": self.seed,
        }


def evaluate_detection(peaks, truth: SourceScene, tol_u: float, seed=None) -> DetectionReport:
    """
    Greedy one-to-one matching of peaks to true directions.

    Peaks are visited by descending value (ties: lower u); each takes the
    nearest unmatched true direction within ``tol_u``.
    """
    if tol_u <= 0:
        raise ValueError("tol_u must be positive")
    if isinstance(peaks, PeakSet):
        peaks = peaks.peaks
    ordered = sorted(peaks, key=lambda p: (-p[1], p[0]))
    truth_u = truth.directions
    free = np.ones(truth_u.size, dtype=bool)
    pairs = []
    for u_peak, _ in ordered:
        if not free.any():
            break
        dist = np.where(free, np.abs(truth_u - u_peak), np.inf)
        j = int(np.argmin(dist))
        if dist[j] <= tol_u:
            free[j] = False
            pairs.append((u_peak, float(truth_u[j])))
    hits = len(pairs)
    return DetectionReport(
        hits=hits,
        misses=int(truth_u.size - hits),
        false_alarms=len(ordered) - hits,
        matched_pairs=pairs,
        tol_u=tol_u,
        seed=seed if seed is not None else truth.seed,
    )


def spectrum_csv(spectrum: DoASpectrum, header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u", "value", "value_db"])
    for u, v, d in zip(spectrum.grid.u_values, spectrum.values, spectrum.values_db):
        w.writerow([repr(float(u)), repr(float(v)), repr(float(d))])
    return buf.getvalue()
