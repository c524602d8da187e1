"""
Conventional beamforming of subarrays and min/product combination.

Responses are evaluated against unit plane waves on a direction-cosine grid.
Every subarray uses uniform weights normalised to sum to one, so each
response, and every composite pattern, is exactly 1 at the steer direction.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .geometry import ArrayGeometry, Subarray

DEFAULT_GRID = 8192
MAG_FLOOR = 1e-8
DB_FLOOR = -160.0


class Combiner(str, Enum):
    MIN = "min"
    PRODUCT = "product"
    SINGLE = "single"


class PatternError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScanGrid:
    """Uniform direction-cosine grid covering [-1, 1] with both endpoints."""

    u_values: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u_values, dtype=float)
        if u.ndim != 1 or u.size < 2:
            raise PatternError("scan grid needs at least 2 points")
        if u[0] != -1.0 or u[-1] != 1.0:
            raise PatternError("scan grid must include the endpoints -1 and +1")
        steps = np.diff(u)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise PatternError("scan grid must be strictly increasing and uniform")
        u.setflags(write=False)
        object.__setattr__(self, "u_values", u)

    @property
    def resolution(self) -> int:
        return self.u_values.size

    @property
    def step(self) -> float:
        return 2.0 / (self.resolution - 1)

    @classmethod
    def uniform(cls, resolution: int = DEFAULT_GRID) -> "ScanGrid":
        if resolution < 2:
            raise PatternError(f"grid resolution must be >= 2, got {resolution}")
        # integer numerators keep the grid exactly symmetric about 0
        n = resolution - 1
        u = (2.0 * np.arange(resolution) - n) / n
        return cls(u)


def array_response(positions, u, u0: float = 0.0):
    """
    Uniformly weighted CBF response of sensors at ``positions``.

    Returns ``(1/K) * sum_p exp(j*pi*(u - u0)*p)`` for scalar or array ``u``.
    The direct geometric sum is used so grating-lobe directions never
    divide by zero.
    """
    pos = np.asarray(positions, dtype=float)
    du = np.asarray(u, dtype=float) - u0
    phase = np.pi * np.multiply.outer(du, pos)
    out = np.exp(1j * phase).sum(axis=-1) / pos.size
    return out[()] if out.ndim == 0 else out


def steering_response(sub: Subarray, u, u0: float = 0.0):
    return array_response(sub.positions, u, u0)


@dataclass(frozen=True, eq=False)
class SubarrayResponse:
    subarray: Optional[Subarray]
    steer: float
    grid: ScanGrid
    values: np.ndarray


def subarray_pattern(sub: Subarray, grid: ScanGrid, u0: float = 0.0) -> SubarrayResponse:
    return SubarrayResponse(sub, float(u0), grid, steering_response(sub, grid.u_values, u0))


@dataclass(frozen=True, eq=False)
class BeamPattern:
    """
    Composite magnitude pattern on a scan grid.

    ``magnitude_db`` uses ``20*log10`` for min and single patterns. A product
    pattern multiplies two amplitude responses, so it is already a
    power-like quantity and is put on the dB scale with ``10*log10``.
    """

    grid: ScanGrid
    steer: float
    combiner: Combiner
    magnitude: np.ndarray
    responses: tuple = ()

    @property
    def db_scale(self) -> float:
        return 10.0 if self.combiner is Combiner.PRODUCT else 20.0

    @property
    def magnitude_db(self) -> np.ndarray:
        return to_db(self.magnitude, self.db_scale)

    @property
    def u_values(self) -> np.ndarray:
        return self.grid.u_values


def to_db(magnitude, scale: float = 20.0) -> np.ndarray:
    mag = np.asarray(magnitude, dtype=float)
    floor = 10.0 ** (DB_FLOOR / scale)
    with np.errstate(divide="ignore"):
        db = scale * np.log10(np.maximum(mag, floor))
    return np.maximum(db, DB_FLOOR)


def _check_compatible(responses: Sequence[SubarrayResponse]):
    first = responses[0]
    for r in responses[1:]:
        same_grid = r.grid is first.grid or (
            r.grid.resolution == first.grid.resolution
            and np.array_equal(r.grid.u_values, first.grid.u_values)
        )
        if not same_grid:
            raise PatternError("responses are on different scan grids")
        if r.steer != first.steer:
            raise PatternError("responses are steered to different directions")


def combine_min(responses: Sequence[SubarrayResponse]) -> BeamPattern:
    responses = tuple(responses)
    if len(responses) < 2:
        raise PatternError("min combination needs at least two responses")
    _check_compatible(responses)
    mag = np.min(np.abs([r.values for r in responses]), axis=0)
    first = responses[0]
    return BeamPattern(first.grid, first.steer, Combiner.MIN, mag, responses)


def combine_product(responses: Sequence[SubarrayResponse]) -> BeamPattern:
    """``|r1 * conj(r2)|`` pointwise; conjugation does not change the magnitude."""
    responses = tuple(responses)
    if len(responses) != 2:
        raise PatternError(f"product combination takes exactly two responses, got {len(responses)}")
    _check_compatible(responses)
    r1, r2 = responses
    mag = np.abs(r1.values * np.conj(r2.values))
    return BeamPattern(r1.grid, r1.steer, Combiner.PRODUCT, mag, responses)


def single_pattern(response: SubarrayResponse) -> BeamPattern:
    return BeamPattern(response.grid, response.steer, Combiner.SINGLE, np.abs(response.values), (response,))


def composite_pattern(geometry: ArrayGeometry, grid: ScanGrid, u0: float = 0.0) -> BeamPattern:
    """Beam pattern of ``geometry`` with the processor its family uses."""
    if geometry.combiner == "single":
        values = array_response(geometry.positions, grid.u_values, u0)
        return single_pattern(SubarrayResponse(None, float(u0), grid, values))
    responses = [subarray_pattern(s, grid, u0) for s in geometry.subarrays]
    if geometry.combiner == "min":
        return combine_min(responses)
    return combine_product(responses)


def evaluate_pattern(geometry: ArrayGeometry, u, u0: float = 0.0) -> np.ndarray:
    """Composite magnitude at arbitrary direction cosines (off-grid evaluation)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if geometry.combiner == "single":
        return np.abs(array_response(geometry.positions, u, u0))
    vals = [steering_response(s, u, u0) for s in geometry.subarrays]
    if geometry.combiner == "min":
        return np.min(np.abs(vals), axis=0)
    return np.abs(vals[0] * np.conj(vals[1]))


def pattern_csv(pattern: BeamPattern, header_lines: Sequence[str] = ()) -> str:
    """CSV text ``u,magnitude,magnitude_db``; ``header_lines`` become ``#`` comments."""
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["u", "magnitude", "magnitude_db"])
    for u, m, d in zip(pattern.u_values, pattern.magnitude, pattern.magnitude_db):
        writer.writerow([repr(float(u)), repr(float(m)), repr(float(d))])
    return buf.getvalue()


def subarrays_csv(pattern: BeamPattern, header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    n = len(pattern.responses)
    cols = ["u"]
    for i in range(1, n + 1):
        cols += [f"sub{i}_magnitude", f"sub{i}_db"]
    writer.writerow(cols)
    mags = [np.abs(r.values) for r in pattern.responses]
    dbs = [to_db(m) for m in mags]
    for j, u in enumerate(pattern.u_values):
        row = [repr(float(u))]
        for m, d in zip(mags, dbs):
            row += [repr(float(m[j])), repr(float(d[j]))]
        writer.writerow(row)
    return buf.getvalue()


def pattern_json(pattern: BeamPattern, metadata: Optional[dict] = None, with_subarrays: bool = False) -> str:
    doc = {
        "metadata": metadata or {},
        "grid": {"resolution": pattern.grid.resolution, "u_min": -1.0, "u_max": 1.0},
        "steer": pattern.steer,
        "combiner": pattern.combiner.value,
        "db_scale": pattern.db_scale,
        "u": pattern.u_values.tolist(),
        "magnitude": pattern.magnitude.tolist(),
        "magnitude_db": pattern.magnitude_db.tolist(),
    }
    if with_subarrays:
        doc["subarrays"] = [
            {
                "subarray": r.subarray.to_dict() if r.subarray is not None else None,
                "real": np.real(r.values).tolist(),
                "imag": np.imag(r.values).tolist(),
            }
            for r in pattern.responses
        ]
    return json.dumps(doc)
