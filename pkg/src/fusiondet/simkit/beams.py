"""Low-resolution LiDAR simulation by inclination-band beam selection."""

from __future__ import annotations

import math
from typing import Sequence, Tuple

import numpy as np

from ..geom import cart_to_spherical

Band = Tuple[float, float]


def _deg_bands(*pairs) -> list:
    return [(math.radians(lo), math.radians(hi)) for lo, hi in pairs]


FOUR_BEAM_BANDS = _deg_bands((-7.1, -5.8), (-4.5, -3.2), (-1.9, -0.6), (0.7, 2.0))
ONE_BEAM_BANDS = _deg_bands((-1.9, -0.6))
FULL_RANGE_BANDS = _deg_bands((-30.0, 10.0))

PRESETS = {"4beam": FOUR_BEAM_BANDS, "1beam": ONE_BEAM_BANDS, "full": FULL_RANGE_BANDS}


def band_membership(inclination: np.ndarray, keep_bands: Sequence[Band]) -> np.ndarray:
    inclination = np.asarray(inclination, dtype=np.float64)
    keep = np.zeros(inclination.shape, dtype=bool)
    for lo, hi in keep_bands:
        keep |= (inclination >= lo) & (inclination <= hi)
    return keep


def reduce_beams(lidar: np.ndarray, keep_bands: Sequence[Band]) -> np.ndarray:
    """Keep the points whose inclination arcsin(z/r) lies in any closed band (radians)."""
    bands = sorted((float(lo), float(hi)) for lo, hi in keep_bands)
    for (lo0, hi0), (lo1, _) in zip(bands[:-1], bands[1:]):
        if lo1 <= hi0:
            raise ValueError(f"beam bands overlap: [{lo0}, {hi0}] and [{lo1}, ...]")
    lidar = np.asarray(lidar)
    if len(lidar) == 0:
        return lidar.copy()
    incl = cart_to_spherical(lidar[:, :3].astype(np.float64))[:, 1]
    return lidar[band_membership(incl, bands)]
