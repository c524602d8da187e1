"""
Pattern measurements and sensor-savings ratios.

Patterns of arrays on the half-wavelength lattice are 2-periodic in u, so
the grid points u = -1 and u = +1 describe the same lobe. Lobe searches run
on the circular grid with the last point dropped, which keeps an endpoint
grating lobe from being counted twice.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional

import numpy as np

from .beamforming import BeamPattern, composite_pattern, ScanGrid
from .geometry import ArrayGeometry, ArrayKind, build_geometry, GeometryError


class MainLobeError(ValueError):
    """No null could be located on one side of the main lobe."""


@dataclass(frozen=True)
class MainLobe:
    # unwrapped indices on the circular grid: left <= peak <= right
    left: int
    peak: int
    right: int
    width: float


@dataclass(frozen=True)
class PatternMetrics:
    main_lobe_width: float
    psl_db: float
    psl_location: Optional[float]
    grating_lobes: list = field(default_factory=list)


def _periodic(pattern: BeamPattern):
    return pattern.magnitude[:-1], pattern.u_values[:-1]


def locate_main_lobe(pattern: BeamPattern) -> MainLobe:
    mag, u = _periodic(pattern)
    n = mag.size
    peak = int(np.argmin(np.abs(u - pattern.steer)))
    # also test the +1 endpoint, which wraps onto index 0
    if abs(1.0 - pattern.steer) < abs(u[peak] - pattern.steer):
        peak = 0

    left = peak
    while mag[(left - 1) % n] <= mag[left % n]:
        left -= 1
        if peak - left >= n:
            raise MainLobeError("no null found left of the main lobe; grid too coarse or pattern flat")
    right = peak
    while mag[(right + 1) % n] <= mag[right % n]:
        right += 1
        if right - peak >= n:
            raise MainLobeError("no null found right of the main lobe; grid too coarse or pattern flat")
    if right - left > n:
        raise MainLobeError("main lobe covers the whole grid")
    return MainLobe(left, peak, right, (right - left) * pattern.grid.step)


def main_lobe_width(pattern: BeamPattern) -> float:
    """Null-to-null main-lobe width in u units."""
    return locate_main_lobe(pattern).width


def _outside_main_lobe(lobe: MainLobe, n: int) -> np.ndarray:
    return np.arange(lobe.right + 1, lobe.left + n) % n


def peak_sidelobe_db(pattern: BeamPattern):
    """
    Highest level outside the null-to-null main lobe.

    Returns
    -------
    psl_db : float
        Peak sidelobe in dB relative to the main peak. ``-inf`` when the main
        lobe spans the whole period (e.g. a 2-sensor ULA).
    location : float or None
        Direction cosine of the peak sidelobe.
    """
    lobe = locate_main_lobe(pattern)
    db = pattern.magnitude_db[:-1]
    idx = _outside_main_lobe(lobe, db.size)
    if idx.size == 0:
        return float("-inf"), None
    best = idx[np.argmax(db[idx])]
    return float(db[best]), float(pattern.u_values[best])


def grating_lobe_report(pattern: BeamPattern, threshold_db: float = -3.0) -> list:
    """Local maxima outside the main lobe at or above ``threshold_db``, sorted by u."""
    lobe = locate_main_lobe(pattern)
    mag, u = _periodic(pattern)
    db = pattern.magnitude_db[:-1]
    n = mag.size
    is_max = (mag > np.roll(mag, 1)) & (mag >= np.roll(mag, -1))
    idx = _outside_main_lobe(lobe, n)
    hits = idx[is_max[idx] & (db[idx] >= threshold_db)]
    return sorted(float(u[i]) for i in hits)


def pattern_metrics(pattern: BeamPattern, threshold_db: float = -3.0) -> PatternMetrics:
    width = main_lobe_width(pattern)
    psl, loc = peak_sidelobe_db(pattern)
    return PatternMetrics(width, psl, loc, grating_lobe_report(pattern, threshold_db))


# Whether each family keeps ULA-level sidelobes.
MATCHES_ULA_PSL = {
    ArrayKind.ECSA: True,
    ArrayKind.BASIC_CSA: False,
    ArrayKind.MCSA: True,
    ArrayKind.NSA: False,
    ArrayKind.SCA: True,
    ArrayKind.ULA: True,
    ArrayKind.MRA: False,
}


@dataclass(frozen=True)
class SavingsRatio:
    """
    Sensor count relative to the full ULA of equal resolution.

    ``ratio`` is measured from the constructed geometry; ``formula_ratio`` is
    the closed form for the family (``None`` where none exists).
    """

    family: ArrayKind
    params: Mapping
    num_sensors: int
    equivalent_ula_sensors: Optional[int]
    ratio: Optional[Fraction]
    formula_ratio: Optional[Fraction]
    matches_ula_psl: bool

    @property
    def consistent(self) -> bool:
        return self.formula_ratio is None or self.formula_ratio == self.ratio


def nsa_ratio_general(M: int, N: int) -> Fraction:
    return Fraction(M + N - 1, M * N)


def formula_ratio(kind, params: Mapping) -> Optional[Fraction]:
    """
    Closed-form sensor ratio for a family.

    The tabulated ``2/N`` style forms assume ``N = M + 1``. For SCA and NSA
    with other ``(M, N)`` the general count formulas are used instead.
    """
    kind = ArrayKind(kind)
    if kind is ArrayKind.ULA:
        return Fraction(1)
    if kind is ArrayKind.MRA:
        return None
    M = int(params["M"])
    if kind is ArrayKind.ECSA:
        if Fraction(str(params.get("c", 6.5))) != Fraction(13, 2):
            return None
        N = M + 1
        return Fraction(2, N) * Fraction(13 * M + 6, 13 * M + 11)
    if kind is ArrayKind.MCSA:
        return Fraction(2, M + 1)
    N = int(params["N"])
    if kind is ArrayKind.BASIC_CSA:
        return Fraction(2, N)
    if kind is ArrayKind.NSA:
        return Fraction(2, N) if N == M + 1 else nsa_ratio_general(M, N)
    # SCA
    P, Q = int(params["P"]), int(params["Q"])
    if N == M + 1:
        return Fraction(2, N) * Fraction(2 * P * M + Q - 1, 2 * P * Q * M)
    return Fraction(P * M + P * N + Q - 1 - P, P * Q * M * N)


def savings_ratio(kind, params: Mapping) -> SavingsRatio:
    kind = ArrayKind(kind)
    if kind is ArrayKind.BASIC_CSA and int(params["N"]) != int(params["M"]) + 1:
        raise GeometryError("coprime-array ratios assume N = M + 1")
    geom = build_geometry(kind, params)
    return savings_ratio_of(geom)


def savings_ratio_of(geom: ArrayGeometry) -> SavingsRatio:
    eq = geom.equivalent_ula_sensors
    ratio = Fraction(geom.num_sensors, eq) if eq else None
    return SavingsRatio(
        family=geom.kind,
        params=dict(geom.params),
        num_sensors=geom.num_sensors,
        equivalent_ula_sensors=eq,
        ratio=ratio,
        formula_ratio=formula_ratio(geom.kind, geom.params),
        matches_ula_psl=MATCHES_ULA_PSL[geom.kind],
    )


def format_params(params: Mapping) -> str:
    return ";".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in params.items())


def savings_csv(rows, header_lines=()) -> str:
    """
    CSV ``family,params,num_sensors,equivalent_ula,ratio,matches_psl``.

    ``ratio`` is the family's closed form, or the counted ratio for families
    without one (MRA).
    """
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["family", "params", "num_sensors", "equivalent_ula", "ratio", "matches_psl"])
    for r in rows:
        shown = r.formula_ratio if r.formula_ratio is not None else r.ratio
        w.writerow([
            r.family.value,
            format_params(r.params),
            r.num_sensors,
            r.equivalent_ula_sensors if r.equivalent_ula_sensors is not None else "undefined",
            str(shown) if shown is not None else "undefined",
            "yes" if r.matches_ula_psl else "no",
        ])
    return buf.getvalue()


def measure(geom: ArrayGeometry, grid: ScanGrid, u0: float = 0.0) -> PatternMetrics:
    return pattern_metrics(composite_pattern(geom, grid, u0))
