"""Derived spectral indices computed from co-temporal raw-band reflectance.

Two vegetation indices (NDVI, GCVI) and three crop-residue/tillage
indices (NDTI, STI, CRC). Index series are derived only at dates where all
required raw bands were observed (scene exports share dates, so exact-date
matching is used with no tolerance window).
"""

import numpy as np

from .dataset import ObservationSeries, SpectralBand

# Raw bands each derived index needs, in formula order.
REQUIRED_BANDS: dict[SpectralBand, tuple[SpectralBand, ...]] = {
    SpectralBand.NDVI: (SpectralBand.NIR, SpectralBand.RED),
    SpectralBand.GCVI: (SpectralBand.NIR, SpectralBand.GREEN),
    SpectralBand.NDTI: (SpectralBand.SWIR1, SpectralBand.SWIR2),
    SpectralBand.STI: (SpectralBand.SWIR1, SpectralBand.SWIR2),
    SpectralBand.CRC: (SpectralBand.SWIR1, SpectralBand.BLUE),
}


class IndexDomainError(ValueError):
    """Raised when an index denominator is zero for the given inputs."""


def _check_denominator(kind: SpectralBand, denom: float, inputs: dict) -> None:
    if denom == 0.0:
        shown = {b.value: v for b, v in inputs.items()}
        raise IndexDomainError(f"{kind.value}: zero denominator for inputs {shown}")


def compute_index(
    kind: SpectralBand,
    inputs: dict[SpectralBand, float],
    gcvi_minus_one: bool = False,
) -> float:
    """Evaluate one derived index from a single scene's raw-band values.

    ``gcvi_minus_one`` switches GCVI to the conventional NIR/Green - 1 form;
    the default is the plain ratio. The flag only shifts GCVI by a constant.
    """
    if not kind.is_derived:
        raise ValueError(f"{kind.value} is a raw band, not a derived index")
    required = REQUIRED_BANDS[kind]
    for band in required:
        if band not in inputs:
            raise ValueError(f"{kind.value} requires band {band.value}")
        if not np.isfinite(inputs[band]):
            raise ValueError(f"{kind.value}: non-finite input for {band.value}")

    if kind is SpectralBand.NDVI:
        nir, red = inputs[SpectralBand.NIR], inputs[SpectralBand.RED]
        _check_denominator(kind, nir + red, inputs)
        return (nir - red) / (nir + red)
    if kind is SpectralBand.GCVI:
        nir, green = inputs[SpectralBand.NIR], inputs[SpectralBand.GREEN]
        _check_denominator(kind, green, inputs)
        ratio = nir / green
        return ratio - 1.0 if gcvi_minus_one else ratio
    if kind is SpectralBand.NDTI:
        s1, s2 = inputs[SpectralBand.SWIR1], inputs[SpectralBand.SWIR2]
        _check_denominator(kind, s1 + s2, inputs)
        return (s1 - s2) / (s1 + s2)
    if kind is SpectralBand.STI:
        s1, s2 = inputs[SpectralBand.SWIR1], inputs[SpectralBand.SWIR2]
        _check_denominator(kind, s2, inputs)
        return s1 / s2
    if kind is SpectralBand.CRC:
        s1, blue = inputs[SpectralBand.SWIR1], inputs[SpectralBand.BLUE]
        _check_denominator(kind, s1 + blue, inputs)
        return (s1 - blue) / (s1 + blue)
    raise AssertionError(f"unhandled index {kind}")


def derive_index_series(
    raw_series: dict[SpectralBand, ObservationSeries],
    kind: SpectralBand,
    gcvi_minus_one: bool = False,
) -> ObservationSeries:
    """Build an index time series from raw-band series of one unit.

    Output has one sample per date present in every required raw-band
    series; dates missing from any input are dropped.
    """
    required = REQUIRED_BANDS[kind]
    for band in required:
        if band not in raw_series:
            raise ValueError(f"{kind.value} requires a series for band {band.value}")

    unit_ids = {raw_series[b].unit_id for b in required}
    if len(unit_ids) != 1:
        raise ValueError(f"input series mix units: {sorted(unit_ids)}")
    (unit_id,) = unit_ids

    common = set(raw_series[required[0]].dates)
    for band in required[1:]:
        common &= set(raw_series[band].dates)
    if not common:
        raise ValueError(f"{kind.value}: no co-temporal observations")

    dates = tuple(sorted(common))
    lookup = {
        band: dict(zip(raw_series[band].dates, raw_series[band].values))
        for band in required
    }
    values = np.array(
        [
            compute_index(kind, {band: lookup[band][d] for band in required},
                          gcvi_minus_one=gcvi_minus_one)
            for d in dates
        ],
        dtype=float,
    )
    return ObservationSeries(unit_id=unit_id, band=kind, dates=dates, values=values)
