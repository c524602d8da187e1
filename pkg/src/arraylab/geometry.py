"""
Sparse linear array geometries.

All positions are integers in units of half a wavelength, with the first
sensor at 0. Each multi-subarray family records its constituent ULAs so the
beamforming and simulation layers can process them separately.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np


class GeometryError(ValueError):
    """Invalid array parameters."""


class ArrayKind(str, Enum):
    ULA = "ula"
    SCA = "sca"
    BASIC_CSA = "csa"
    ECSA = "ecsa"
    MCSA = "mcsa"
    NSA = "nsa"
    MRA = "mra"


# How each family's subarray outputs are combined.
COMBINER_BY_KIND = {
    ArrayKind.ULA: "single",
    ArrayKind.MRA: "single",
    ArrayKind.SCA: "min",
    ArrayKind.MCSA: "min",
    ArrayKind.BASIC_CSA: "product",
    ArrayKind.ECSA: "product",
    ArrayKind.NSA: "product",
}

ECSA_UNIFORM_C = Fraction(13, 2)

# 17-sensor minimum-redundancy ruler, aperture 101 (Wichmann construction
# W(2, 6)). Re-validated as hole-free on every load.
MRA_17_POSITIONS = (0, 1, 2, 5, 10, 15, 26, 37, 48, 59, 70, 81, 87, 93, 99, 100, 101)


@dataclass(frozen=True)
class Subarray:
    """Uniform linear subarray: ``offset + i * spacing`` for ``i < num_sensors``."""

    num_sensors: int
    spacing: int
    offset: int = 0

    def __post_init__(self):
        if self.num_sensors < 1:
            raise GeometryError(f"subarray needs at least one sensor, got {self.num_sensors}")
        if self.spacing < 1:
            raise GeometryError(f"subarray spacing must be >= 1, got {self.spacing}")
        if self.offset < 0:
            raise GeometryError(f"subarray offset must be >= 0, got {self.offset}")

    @property
    def positions(self) -> np.ndarray:
        return self.offset + self.spacing * np.arange(self.num_sensors, dtype=np.int64)

    def to_dict(self) -> dict:
        return {"num_sensors": self.num_sensors, "spacing": self.spacing, "offset": self.offset}


@dataclass(frozen=True)
class ArrayGeometry:
    """
    A linear array on the half-wavelength lattice.

    Parameters
    ----------
    kind : ArrayKind
        Array family.
    params : mapping
        Defining integers of the family (``M, N, P, Q`` for SCA, ``K`` for
        ULA, ...).
    subarrays : tuple of Subarray
        Constituent ULAs in processing order. Empty for MRA.
    positions : tuple of int
        Sorted, deduplicated union of all sensor positions.
    equivalent_ula_sensors : int or None
        Size of the full ULA with the same resolution. ``None`` when it is
        undefined (MRA input whose coarray has holes).
    metadata : dict
        Free-form flags, e.g. ``standard_c`` for ECSA.
    """

    kind: ArrayKind
    params: Mapping[str, Union[int, float]]
    subarrays: tuple
    positions: tuple
    equivalent_ula_sensors: Optional[int]
    metadata: Mapping = field(default_factory=dict)

    @property
    def num_sensors(self) -> int:
        return len(self.positions)

    @property
    def aperture(self) -> int:
        return self.positions[-1] - self.positions[0]

    @property
    def combiner(self) -> str:
        return COMBINER_BY_KIND[self.kind]

    def positions_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=np.int64)

    def subarray_indices(self) -> list:
        """Row indices into ``positions`` for each subarray's sensors."""
        lookup = {p: i for i, p in enumerate(self.positions)}
        return [np.array([lookup[int(p)] for p in sub.positions]) for sub in self.subarrays]

    def to_dict(self) -> dict:
        params = {k: (float(v) if isinstance(v, Fraction) else v) for k, v in self.params.items()}
        return {
            "kind": self.kind.value,
            "params": params,
            "positions": list(self.positions),
            "subarrays": [s.to_dict() for s in self.subarrays],
            "equivalent_ula_sensors": self.equivalent_ula_sensors,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _assemble(kind, params, subarrays, equivalent, metadata=None) -> ArrayGeometry:
    union = sorted({int(p) for sub in subarrays for p in sub.positions})
    return ArrayGeometry(
        kind=kind,
        params=dict(params),
        subarrays=tuple(subarrays),
        positions=tuple(union),
        equivalent_ula_sensors=equivalent,
        metadata=dict(metadata or {}),
    )


def _check_int(name, value, minimum):
    if isinstance(value, bool) or int(value) != value:
        raise GeometryError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise GeometryError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def validate_coprime(M: int, N: int) -> bool:
    return math.gcd(M, N) == 1


def build_ula(K: int) -> ArrayGeometry:
    K = _check_int("K", K, 1)
    return _assemble(ArrayKind.ULA, {"K": K}, [Subarray(K, 1)], K)


def build_sca(M: int, N: int, P: int, Q: int) -> ArrayGeometry:
    """
    Semi-coprime array.

    Subarray 1 has ``P*M`` sensors at spacing ``Q*N``, Subarray 2 has
    ``P*N`` sensors at spacing ``Q*M`` and Subarray 3 is a ``Q``-sensor
    full ULA. Subarrays 1 and 2 share the ``P`` positions that are
    multiples of ``Q*M*N``; all three share position 0.
    """
    M = _check_int("M", M, 1)
    N = _check_int("N", N, 1)
    P = _check_int("P", P, 2)
    Q = _check_int("Q", Q, 2)
    if not validate_coprime(M, N):
        raise GeometryError(f"M and N must be coprime, got M={M}, N={N}")
    subs = [Subarray(P * M, Q * N), Subarray(P * N, Q * M), Subarray(Q, 1)]
    return _assemble(ArrayKind.SCA, {"M": M, "N": N, "P": P, "Q": Q}, subs, P * Q * M * N)


def build_basic_csa(M: int, N: int) -> ArrayGeometry:
    M = _check_int("M", M, 2)
    N = _check_int("N", N, 2)
    if not validate_coprime(M, N):
        raise GeometryError(f"M and N must be coprime, got M={M}, N={N}")
    subs = [Subarray(M, N), Subarray(N, M)]
    return _assemble(ArrayKind.BASIC_CSA, {"M": M, "N": N}, subs, M * N)


def _as_fraction(c) -> Fraction:
    # str() keeps 6.5 exact and avoids binary expansions of e.g. 6.1
    return Fraction(str(c)) if isinstance(c, float) else Fraction(c)


def ecsa_subarray_sizes(M: int, c=ECSA_UNIFORM_C) -> tuple:
    """``(M_e, N_e) = (ceil(c*N) - 1, ceil(c*N))`` with ``N = M + 1``."""
    n_e = math.ceil(_as_fraction(c) * (M + 1))
    return n_e - 1, n_e


def build_ecsa(M: int, c=ECSA_UNIFORM_C) -> ArrayGeometry:
    """
    Extended coprime array with ``N = M + 1``.

    ``c`` is the extension factor; the default 6.5 is the uniform-shading
    value. Any other value is flagged ``standard_c=False``.
    """
    M = _check_int("M", M, 2)
    c = _as_fraction(c)
    if c < 1:
        raise GeometryError(f"extension factor c must be >= 1, got {float(c)}")
    N = M + 1
    m_e, n_e = ecsa_subarray_sizes(M, c)
    subs = [Subarray(m_e, N), Subarray(n_e, M)]
    meta = {"standard_c": c == ECSA_UNIFORM_C, "M_e": m_e, "N_e": n_e}
    params = {"M": M, "N": N, "c": float(c)}
    return _assemble(ArrayKind.ECSA, params, subs, m_e * N, meta)


def build_mcsa(M: int) -> ArrayGeometry:
    """Min-processing coprime array: two periods of each basic subarray, ``N = M + 1``."""
    M = _check_int("M", M, 2)
    N = M + 1
    subs = [Subarray(2 * M, N), Subarray(2 * N, M)]
    return _assemble(ArrayKind.MCSA, {"M": M, "N": N}, subs, 2 * M * N)


def build_nsa(M: int, N: int) -> ArrayGeometry:
    # no coprimality requirement for nested arrays
    M = _check_int("M", M, 2)
    N = _check_int("N", N, 1)
    subs = [Subarray(M, 1), Subarray(N, M)]
    return _assemble(ArrayKind.NSA, {"M": M, "N": N}, subs, M * N)


@dataclass(frozen=True)
class Coarray:
    lags: np.ndarray
    multiplicities: np.ndarray
    hole_free_up_to: int

    @property
    def aperture(self) -> int:
        return int(self.lags[-1])

    @property
    def is_hole_free(self) -> bool:
        return self.hole_free_up_to == self.aperture


def _coarray_of(positions: Sequence[int]) -> Coarray:
    pos = np.asarray(positions, dtype=np.int64)
    if pos.size == 0:
        raise GeometryError("coarray of an empty array")
    diffs = np.abs(np.subtract.outer(pos, pos)).ravel()
    counts = np.bincount(diffs)
    lags = np.flatnonzero(counts)
    missing = np.flatnonzero(counts == 0)
    hole_free = int(missing[0] - 1) if missing.size else int(lags[-1])
    return Coarray(lags=lags, multiplicities=counts[lags], hole_free_up_to=hole_free)


def compute_coarray(geometry: ArrayGeometry) -> Coarray:
    """Difference coarray with ordered-pair multiplicities (lag 0 counts each sensor once)."""
    return _coarray_of(geometry.positions)


def load_mra(positions: Iterable[int]) -> ArrayGeometry:
    """
    Accept a minimum-redundancy geometry from data.

    Positions are shifted so the first sensor sits at 0. The equivalent ULA
    size is ``aperture + 1`` only when the coarray is hole-free.
    """
    raw = list(positions)
    if not raw:
        raise GeometryError("MRA position list is empty")
    vals = []
    for p in raw:
        if isinstance(p, bool) or int(p) != p:
            raise GeometryError(f"MRA positions must be integers, got {p!r}")
        vals.append(int(p))
    if len(set(vals)) != len(vals):
        raise GeometryError("MRA positions contain duplicates")
    base = min(vals)
    norm = tuple(sorted(v - base for v in vals))
    co = _coarray_of(norm)
    equivalent = norm[-1] + 1 if co.is_hole_free else None
    meta = {"hole_free": co.is_hole_free, "hole_free_up_to": co.hole_free_up_to}
    return ArrayGeometry(
        kind=ArrayKind.MRA,
        params={"L": len(norm)},
        subarrays=(),
        positions=norm,
        equivalent_ula_sensors=equivalent,
        metadata=meta,
    )


def load_mra_file(path) -> ArrayGeometry:
    """Read MRA positions from a JSON list or a newline-separated integer file."""
    text = Path(path).read_text()
    stripped = text.strip()
    if stripped.startswith("["):
        values = json.loads(stripped)
    else:
        values = [int(line) for line in stripped.splitlines() if line.strip()]
    return load_mra(values)


def bundled_mra17() -> ArrayGeometry:
    return load_mra(MRA_17_POSITIONS)


_BUILDERS = {
    ArrayKind.ULA: (build_ula, ("K",)),
    ArrayKind.SCA: (build_sca, ("M", "N", "P", "Q")),
    ArrayKind.BASIC_CSA: (build_basic_csa, ("M", "N")),
    ArrayKind.ECSA: (build_ecsa, ("M",)),
    ArrayKind.MCSA: (build_mcsa, ("M",)),
    ArrayKind.NSA: (build_nsa, ("M", "N")),
}


def build_geometry(kind, params: Mapping) -> ArrayGeometry:
    """Dispatch on ``kind`` with a parameter mapping such as ``{"M": 3, "N": 4}``."""
    try:
        kind = ArrayKind(kind)
    except ValueError:
        raise GeometryError(f"unknown array kind {kind!r}") from None
    if kind is ArrayKind.MRA:
        if "positions" in params:
            return load_mra(params["positions"])
        return bundled_mra17()
    builder, names = _BUILDERS[kind]
    missing = [n for n in names if params.get(n) is None]
    if missing:
        raise GeometryError(f"{kind.value} requires parameter(s) {', '.join(missing)}")
    args = [params[n] for n in names]
    if kind is ArrayKind.ECSA and params.get("c") is not None:
        return builder(*args, c=params["c"])
    return builder(*args)


def geometry_from_dict(data: Mapping) -> ArrayGeometry:
    """Rebuild a geometry from its JSON form and check the stored positions."""
    kind = ArrayKind(data["kind"])
    if kind is ArrayKind.MRA:
        geom = load_mra(data["positions"])
    else:
        geom = build_geometry(kind, data["params"])
        if "positions" in data and list(data["positions"]) != list(geom.positions):
            raise GeometryError("stored positions disagree with the parameters")
    return geom
