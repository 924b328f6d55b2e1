from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pytest

from agribench.dataset import EMBEDDING_COLUMNS, ObservationSeries, SpectralBand


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_bundle(
    bundle: Path,
    units: list[list] | None = None,
    observations: list[list] | None = None,
    climate: list[list] | None = None,
    embeddings: list[list] | None = None,
    labels: list[list] | None = None,
) -> Path:
    """Write a minimal five-file bundle; omitted tables are empty."""
    bundle.mkdir(parents=True, exist_ok=True)
    write_csv(bundle / "units.csv",
              ["unit_id", "level", "state", "county_id", "ecoregion", "elevation_m"],
              units or [])
    write_csv(bundle / "observations.csv",
              ["unit_id", "band", "date", "value"],
              observations or [])
    write_csv(bundle / "climate.csv",
              ["unit_id", "date", "tmin_c", "tmax_c", "ppt_mm"],
              climate or [])
    write_csv(bundle / "embeddings.csv",
              ["unit_id", "year"] + list(EMBEDDING_COLUMNS),
              embeddings or [])
    write_csv(bundle / "labels.csv",
              ["unit_id", "year", "task", "value"],
              labels or [])
    return bundle


def make_series(
    band: SpectralBand,
    start: date,
    values,
    step_days: int = 10,
    unit_id: str = "u1",
) -> ObservationSeries:
    values = np.asarray(values, dtype=float)
    dates = tuple(start + timedelta(days=step_days * i) for i in range(len(values)))
    return ObservationSeries(unit_id=unit_id, band=band, dates=dates, values=values)


@pytest.fixture
def tmp_bundle(tmp_path):
    def _build(**tables):
        return write_bundle(tmp_path / "bundle", **tables)
    return _build
