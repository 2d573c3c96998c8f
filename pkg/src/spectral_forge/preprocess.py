"""Spectral calibration, per-pixel L1 normalization, and RGB reconstruction.

All functions are pure and per-pixel independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateReference,
    DimensionMismatch,
    EmptyBand,
    MissingWavelengths,
)
from .scene import CUBE_DTYPE, SpectralCube

CLAMP_MAX_DEFAULT = 2.0


@dataclass(frozen=True)
class CalibrationPair:
    """White and dark reference cubes matching the target geometry."""

    white: SpectralCube
    dark: SpectralCube

    def __post_init__(self):
        if self.white.data.shape != self.dark.data.shape:
            raise DimensionMismatch(
                f"white {self.white.data.shape} vs dark {self.dark.data.shape}"
            )

    @property
    def invalid_mask(self) -> np.ndarray:
        """True where white - dark is not strictly positive."""
        return self.white.data <= self.dark.data


def calibrate(
    raw: SpectralCube, cal: CalibrationPair, clamp_max: float = CLAMP_MAX_DEFAULT
) -> SpectralCube:
    """Reflectance calibration: (raw - dark) / (white - dark), clamped to [0, clamp_max]."""
    if raw.data.shape != cal.white.data.shape:
        raise DimensionMismatch(
            f"raw {raw.data.shape} vs references {cal.white.data.shape}"
        )
    if cal.invalid_mask.any():
        n = int(cal.invalid_mask.sum())
        raise DegenerateReference(f"white == dark at {n} cube elements")
    num = raw.data.astype(np.float64) - cal.dark.data.astype(np.float64)
    den = cal.white.data.astype(np.float64) - cal.dark.data.astype(np.float64)
    out = np.clip(num / den, 0.0, clamp_max)
    return raw.with_data(out.astype(CUBE_DTYPE))


def l1_normalize(cube: SpectralCube, return_degenerate: bool = False):
    """Scale every pixel spectrum to unit L1 norm.

    Removes per-pixel multiplicative illumination factors: scaling an input
    spectrum by any positive constant leaves the output unchanged. Pixels with
    zero spectral sum have no defined direction; they are set to the uniform
    spectrum 1/C and reported through the degenerate mask instead of failing.
    """
    data = cube.data.astype(np.float64)
    sums = np.abs(data).sum(axis=2)
    degenerate = sums == 0.0
    safe = np.where(degenerate, 1.0, sums)
    out = np.abs(data) / safe[:, :, None]
    if degenerate.any():
        out[degenerate] = 1.0 / cube.channels
    result = cube.with_data(out.astype(CUBE_DTYPE))
    if return_degenerate:
        return result, degenerate
    return result


@dataclass(frozen=True)
class RgbBands:
    """Wavelength intervals aggregated into the three color channels.

    Intervals are closed on both ends, so a channel sitting exactly on a
    boundary contributes to both adjacent bands.
    """

    blue_range_nm: tuple[float, float] = (500.0, 550.0)
    green_range_nm: tuple[float, float] = (550.0, 600.0)
    red_range_nm: tuple[float, float] = (600.0, 700.0)

    def __post_init__(self):
        for lo, hi in (self.blue_range_nm, self.green_range_nm, self.red_range_nm):
            if not lo <= hi:
                raise EmptyBand(f"band [{lo}, {hi}] is empty")

    @classmethod
    def from_dict(cls, payload: dict) -> "RgbBands":
        return cls(
            blue_range_nm=tuple(payload["blue_range_nm"]),
            green_range_nm=tuple(payload["green_range_nm"]),
            red_range_nm=tuple(payload["red_range_nm"]),
        )


DEFAULT_RGB_BANDS = RgbBands()


def _band_mean(data: np.ndarray, wavelengths: np.ndarray, band: tuple[float, float]) -> np.ndarray:
    lo, hi = band
    sel = (wavelengths >= lo) & (wavelengths <= hi)
    if not sel.any():
        raise EmptyBand(
            f"band [{lo}, {hi}] nm selects no channel of "
            f"[{wavelengths[0]}, {wavelengths[-1]}] nm"
        )
    return data[:, :, sel].mean(axis=2)


def reconstruct_rgb(cube: SpectralCube, bands: RgbBands = DEFAULT_RGB_BANDS) -> SpectralCube:
    """Aggregate spectral channels into an R, G, B cube (channel order R, G, B)."""
    if cube.wavelengths_nm is None:
        raise MissingWavelengths("cube carries no wavelength axis")
    wl = np.asarray(cube.wavelengths_nm)
    data = cube.data.astype(np.float64)
    rgb = np.stack(
        [
            _band_mean(data, wl, bands.red_range_nm),
            _band_mean(data, wl, bands.green_range_nm),
            _band_mean(data, wl, bands.blue_range_nm),
        ],
        axis=2,
    )
    return SpectralCube(data=rgb.astype(CUBE_DTYPE), wavelengths_nm=None)
