"""Seeded synthetic dataset bundles with known generating functions.

Every unit-year gets per-band harmonic reflectance curves with randomly
drawn coefficients; observations are sampled from those curves at an
irregular 8-16 day revisit cadence (plus optional dropout) and optional
Gaussian noise. Labels are a linear map of named true curve features plus
noise, so regression runs have an analytic R-squared ceiling of
1 - sigma_label^2 / Var(label). Embeddings are a fixed linear map of the
true latent features, with an optional region-specific offset that shifts
West-side embeddings to emulate a geographic distribution shift.

Everything is a pure function of (spec, seed): per-unit randomness derives
from hashing the seed with the unit id, so generation order cannot affect
the output, and two runs produce byte-identical bundles.

The ``truth.csv`` sidecar is long format with columns
``kind,unit_id,year,band,name,value``:

- kind=coef:    generating harmonic coefficients (name in c,a1,b1,a2,b2)
- kind=feature: true feature values used by the label function
- kind=meta:    label_sigma, label_variance, r2_ceiling, region_offset, ...
"""

import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .dataset import EMBEDDING_COLUMNS, RAW_BANDS, SpectralBand
from .featurize import SEASON_TEMPLATES, SeasonTemplate
from .harmonics import time_fraction
from .seeding import spawn_rng

B = SpectralBand

DEFAULT_STATES = ("IL", "IN", "MI", "OH", "WI", "IA", "KS", "MN", "MO", "ND", "NE", "SD")

CALENDAR_TASKS = ("yield", "tillage_ratio", "tillage_class")


@dataclass(frozen=True)
class BandModel:
    """Coefficient ranges for one band's generating harmonics."""

    c_low: float
    c_high: float
    amp1: float  # max first-order amplitude
    amp2: float  # max second-order amplitude


# Ranges keep every curve inside the valid reflectance range [0, 1.5].
DEFAULT_BAND_MODELS: dict[SpectralBand, BandModel] = {
    B.RED: BandModel(0.08, 0.25, 0.05, 0.02),
    B.GREEN: BandModel(0.30, 0.40, 0.004, 0.002),
    B.BLUE: BandModel(0.05, 0.15, 0.03, 0.01),
    B.NIR: BandModel(0.40, 0.60, 0.15, 0.05),
    B.SWIR1: BandModel(0.20, 0.35, 0.06, 0.02),
    B.SWIR2: BandModel(0.12, 0.25, 0.05, 0.02),
}


@dataclass(frozen=True)
class SynthSpec:
    n_counties: int = 40
    fields_per_county: int = 0
    states: tuple[str, ...] = DEFAULT_STATES
    years: tuple[int, ...] = (2018, 2019, 2020, 2021)
    tasks: tuple[str, ...] = ("yield",)
    crop: str = "corn"
    revisit_days: tuple[float, float] = (8.0, 16.0)
    dropout: float = 0.0
    sigma_obs: float = 0.0
    band_models: dict[SpectralBand, BandModel] = field(
        default_factory=lambda: dict(DEFAULT_BAND_MODELS)
    )
    label_weights: dict[str, float] = field(default_factory=lambda: {"GCVI_peak": 1.0})
    label_intercept: float = 8.0
    label_sigma: float = 0.0
    label_r2_ceiling: float | None = None  # overrides label_sigma when set
    region_offset: float = 0.0

    def __post_init__(self):
        if self.n_counties < 1:
            raise ValueError("n_counties must be at least 1")
        if not self.years:
            raise ValueError("years must be nonempty")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.sigma_obs < 0 or self.label_sigma < 0:
            raise ValueError("noise sigmas must be nonnegative")
        if self.label_r2_ceiling is not None and not 0.0 < self.label_r2_ceiling <= 1.0:
            raise ValueError("label_r2_ceiling must be in (0, 1]")
        unknown = set(self.tasks) - {"yield", "tillage_ratio", "tillage_class", "covercrop_class"}
        if unknown:
            raise ValueError(f"unknown tasks {sorted(unknown)}")
        has_calendar = any(t in CALENDAR_TASKS for t in self.tasks)
        if "covercrop_class" in self.tasks and has_calendar:
            raise ValueError(
                "covercrop_class uses Oct-May curve regimes and cannot share a "
                "bundle with calendar-year tasks"
            )
        needs_fields = {"tillage_class", "covercrop_class"} & set(self.tasks)
        if needs_fields and self.fields_per_county < 1:
            raise ValueError(f"tasks {sorted(needs_fields)} require fields_per_county >= 1")

    def season_template(self) -> SeasonTemplate:
        if "covercrop_class" in self.tasks:
            return SEASON_TEMPLATES["covercrop"]
        return SEASON_TEMPLATES[self.crop]


@dataclass(frozen=True)
class UnitPlan:
    unit_id: str
    level: str
    state: str
    county_id: str
    ecoregion: str
    elevation_m: float


@dataclass(frozen=True)
class Curve:
    """One unit-year-band generating harmonic, t measured from t_origin."""

    c: float
    a1: float
    b1: float
    a2: float
    b2: float
    t_origin: date

    def at(self, t: np.ndarray) -> np.ndarray:
        w = 2.0 * np.pi * np.asarray(t, dtype=float)
        return (
            self.c
            + self.a1 * np.cos(w)
            + self.b1 * np.sin(w)
            + self.a2 * np.cos(2 * w)
            + self.b2 * np.sin(2 * w)
        )


def _plan_units(spec: SynthSpec, seed: int) -> list[UnitPlan]:
    from .dataset import default_ecoregion

    units = []
    for i in range(spec.n_counties):
        state = spec.states[i % len(spec.states)]
        county_id = f"{state}{i:03d}"
        rng = spawn_rng(seed, "elev", county_id)
        units.append(
            UnitPlan(
                unit_id=county_id,
                level="county",
                state=state,
                county_id=county_id,
                ecoregion=default_ecoregion(state),
                elevation_m=round(float(rng.uniform(150, 550)), 1),
            )
        )
        for j in range(spec.fields_per_county):
            field_id = f"{county_id}_f{j:02d}"
            rng = spawn_rng(seed, "elev", field_id)
            units.append(
                UnitPlan(
                    unit_id=field_id,
                    level="field",
                    state=state,
                    county_id=county_id,
                    ecoregion=default_ecoregion(state),
                    elevation_m=round(float(rng.uniform(150, 550)), 1),
                )
            )
    return units


def _draw_curve(spec: SynthSpec, seed: int, unit_id: str, year: int,
                band: SpectralBand, origin: date) -> Curve:
    model = spec.band_models[band]
    rng = spawn_rng(seed, "coef", unit_id, year, band.value)
    c = float(rng.uniform(model.c_low, model.c_high))
    r1 = float(rng.uniform(0.2 * model.amp1, model.amp1))
    th1 = float(rng.uniform(0, 2 * math.pi))
    r2 = float(rng.uniform(0, model.amp2))
    th2 = float(rng.uniform(0, 2 * math.pi))
    return Curve(
        c=c,
        a1=r1 * math.cos(th1),
        b1=r1 * math.sin(th1),
        a2=r2 * math.cos(th2),
        b2=r2 * math.sin(th2),
        t_origin=origin,
    )


def _observation_dates(spec: SynthSpec, seed: int, unit_id: str, year: int,
                       window) -> list[date]:
    rng = spawn_rng(seed, "dates", unit_id, year)
    mean_revisit = float(rng.uniform(*spec.revisit_days))
    span = (window.end - window.start).days
    offsets = []
    position = float(rng.uniform(0, mean_revisit))
    while position <= span:
        offsets.append(int(round(position)))
        position += max(1.0, float(rng.exponential(mean_revisit)))
    kept = []
    for off in sorted(set(offsets)):
        if spec.dropout > 0 and rng.random() < spec.dropout:
            continue
        kept.append(window.start + timedelta(days=off))
    return kept


def _band_value_name(name: str) -> tuple[SpectralBand, str]:
    band_name, stat = name.rsplit("_", 1)
    if stat not in ("peak", "c"):
        raise ValueError(f"unsupported true feature {name!r} (use <Band>_peak or <Band>_c)")
    return SpectralBand.from_name(band_name), stat


def _true_band_curve(curves: dict[SpectralBand, Curve], band: SpectralBand,
                     t: np.ndarray) -> np.ndarray:
    if band.is_raw:
        return curves[band].at(t)
    if band is B.NDVI:
        nir, red = curves[B.NIR].at(t), curves[B.RED].at(t)
        return (nir - red) / (nir + red)
    if band is B.GCVI:
        return curves[B.NIR].at(t) / curves[B.GREEN].at(t)
    if band is B.NDTI:
        s1, s2 = curves[B.SWIR1].at(t), curves[B.SWIR2].at(t)
        return (s1 - s2) / (s1 + s2)
    if band is B.STI:
        return curves[B.SWIR1].at(t) / curves[B.SWIR2].at(t)
    s1, blue = curves[B.SWIR1].at(t), curves[B.BLUE].at(t)
    return (s1 - blue) / (s1 + blue)


def _true_feature(name: str, curves: dict[SpectralBand, Curve], window,
                  origin: date) -> float:
    band, stat = _band_value_name(name)
    if stat == "c":
        if not band.is_raw:
            raise ValueError(f"{name!r}: _c features exist for raw bands only")
        return curves[band].c
    grid = window.grid_dates()
    t = np.array([time_fraction(origin, d) for d in grid])
    return float(_true_band_curve(curves, band, t).max())


def _format(value: float) -> str:
    return repr(float(value))


def generate(spec: SynthSpec, seed: int, out_dir: str | Path) -> dict:
    """Write the five bundle CSVs plus ``truth.csv``; returns row counts.

    Fully deterministic for a fixed (spec, seed): same bytes every run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    units = _plan_units(spec, seed)
    template = spec.season_template()
    years = tuple(sorted(spec.years))
    emb_years = years if "covercrop_class" not in spec.tasks else (years[0] - 1,) + years

    # Per unit-year generating curves and their true features.
    curves: dict[tuple[str, int], dict[SpectralBand, Curve]] = {}
    features: dict[tuple[str, int], dict[str, float]] = {}
    latents: dict[tuple[str, int], list[float]] = {}
    feature_names = sorted(spec.label_weights)
    for unit in units:
        for year in years:
            window = template.window(year)
            origin = date(window.start.year, 1, 1)
            unit_curves = {
                band: _draw_curve(spec, seed, unit.unit_id, year, band, origin)
                for band in RAW_BANDS
            }
            curves[(unit.unit_id, year)] = unit_curves
            feats = {
                name: _true_feature(name, unit_curves, window, origin)
                for name in feature_names
            }
            features[(unit.unit_id, year)] = feats
            signal = spec.label_intercept + sum(
                spec.label_weights[name] * feats[name] for name in feature_names
            )
            latents[(unit.unit_id, year)] = [signal] + [
                unit_curves[band].c for band in RAW_BANDS
            ]

    # Resolve the label noise scale.
    signals = {key: lat[0] for key, lat in latents.items()}
    signal_values = np.array([signals[key] for key in sorted(signals)])
    if spec.label_r2_ceiling is not None:
        signal_var = float(signal_values.var())
        sigma_label = math.sqrt(signal_var * (1.0 / spec.label_r2_ceiling - 1.0))
    else:
        sigma_label = spec.label_sigma

    lines_units = ["unit_id,level,state,county_id,ecoregion,elevation_m"]
    for u in units:
        lines_units.append(
            f"{u.unit_id},{u.level},{u.state},{u.county_id},{u.ecoregion},{u.elevation_m}"
        )

    lines_obs = ["unit_id,band,date,value"]
    n_obs = 0
    for unit in units:
        for year in years:
            window = template.window(year)
            origin = date(window.start.year, 1, 1)
            dates = _observation_dates(spec, seed, unit.unit_id, year, window)
            if not dates:
                continue
            t = np.array([time_fraction(origin, d) for d in dates])
            noise_rng = spawn_rng(seed, "obsnoise", unit.unit_id, year)
            for band in RAW_BANDS:
                values = curves[(unit.unit_id, year)][band].at(t)
                if spec.sigma_obs > 0:
                    values = values + spec.sigma_obs * noise_rng.standard_normal(len(t))
                    values = np.clip(values, 0.001, 1.499)
                for d, v in zip(dates, values):
                    lines_obs.append(f"{unit.unit_id},{band.value},{d.isoformat()},{_format(v)}")
                    n_obs += 1

    lines_climate = ["unit_id,date,tmin_c,tmax_c,ppt_mm"]
    n_climate = 0
    climate_start = date(years[0] - (1 if "covercrop_class" in spec.tasks else 0), 1, 1)
    climate_end = date(years[-1], 12, 31)
    n_days = (climate_end - climate_start).days + 1
    for unit in units:
        rng = spawn_rng(seed, "climate", unit.unit_id)
        day_offsets = np.arange(n_days)
        doy = np.array([
            (climate_start + timedelta(days=int(k))).timetuple().tm_yday
            for k in day_offsets
        ])
        tmean = 10.0 + 14.0 * np.sin(2 * np.pi * (doy - 105) / 365.25)
        tmean = tmean + rng.normal(0, 2.0, n_days)
        diurnal = rng.uniform(6.0, 12.0, n_days)
        wet = rng.random(n_days) < 0.35
        ppt = np.where(wet, rng.exponential(6.0, n_days), 0.0)
        for k in range(n_days):
            day = climate_start + timedelta(days=k)
            tmin = tmean[k] - diurnal[k] / 2.0
            tmax = tmean[k] + diurnal[k] / 2.0
            lines_climate.append(
                f"{unit.unit_id},{day.isoformat()},{_format(tmin)},{_format(tmax)},{_format(ppt[k])}"
            )
            n_climate += 1

    # Embeddings: fixed linear map of the standardized latents, plus the
    # optional West-side offset emulating a geographic shift.
    n_latent = 1 + len(RAW_BANDS)
    map_rng = spawn_rng(seed, "embedding_map")
    weight = map_rng.normal(0, 1.0 / math.sqrt(n_latent), size=(64, n_latent))
    bias = map_rng.normal(0, 0.2, size=64)
    # The region shift is an exact misread of the signal latent: adding
    # (offset/2) * W[:, 0] makes a West row read as if its signal latent were
    # offset/2 standard deviations higher, in every informative dimension at
    # once, so models trained in one region systematically mispredict the
    # other. A region beacon of the same magnitude on the four least
    # signal-loaded dims keeps the regions separable for in-domain models.
    beacon = np.zeros(64)
    beacon_dims = np.argsort(np.abs(weight[:, 0]))[:4]
    beacon[beacon_dims] = 1.0
    shift_dir = 0.5 * (weight[:, 0] + beacon)

    latent_matrix = np.array([latents[key] for key in sorted(latents)])
    latent_mean = latent_matrix.mean(axis=0)
    latent_std = latent_matrix.std(axis=0)
    latent_std[latent_std == 0] = 1.0

    lines_emb = ["unit_id,year," + ",".join(EMBEDDING_COLUMNS)]
    n_emb = 0
    unit_by_id = {u.unit_id: u for u in units}
    for unit in units:
        for year in emb_years:
            key = (unit.unit_id, year)
            if key in latents:
                z = (np.array(latents[key]) - latent_mean) / latent_std
            else:
                # Pre-window year for two-year concatenation: latent draws
                # from the unit's climatology, seeded like everything else.
                pre_rng = spawn_rng(seed, "prelatent", unit.unit_id, year)
                z = pre_rng.normal(0, 1, n_latent)
            vec = weight @ z + bias
            if spec.region_offset != 0.0 and unit_by_id[unit.unit_id].ecoregion == "West":
                vec = vec + spec.region_offset * shift_dir
            lines_emb.append(
                f"{unit.unit_id},{year}," + ",".join(_format(v) for v in vec)
            )
            n_emb += 1

    # Labels.
    lines_labels = ["unit_id,year,task,value"]
    truth_rows: list[str] = []
    n_labels = 0
    label_values: list[float] = []
    median_signal = float(np.median(signal_values))
    for task in spec.tasks:
        if task == "yield":
            levels = ("county", "field")
        elif task == "tillage_ratio":
            levels = ("county",)
        else:
            levels = ("field",)
        for unit in units:
            if unit.level not in levels:
                continue
            for year in years:
                signal = signals[(unit.unit_id, year)]
                rng = spawn_rng(seed, "label", task, unit.unit_id, year)
                noise = sigma_label * float(rng.standard_normal()) if sigma_label else 0.0
                if task == "yield":
                    value = signal + noise
                    label_values.append(value)
                elif task == "tillage_ratio":
                    value = 1.0 / (1.0 + math.exp(-(signal + noise - median_signal)))
                else:
                    value = 1.0 if signal + noise > median_signal else 0.0
                lines_labels.append(f"{unit.unit_id},{year},{task},{_format(value)}")
                n_labels += 1

    # Truth sidecar.
    truth_rows.append("kind,unit_id,year,band,name,value")
    for unit in units:
        for year in years:
            for band in RAW_BANDS:
                curve = curves[(unit.unit_id, year)][band]
                for name, value in zip(("c", "a1", "b1", "a2", "b2"),
                                       (curve.c, curve.a1, curve.b1, curve.a2, curve.b2)):
                    truth_rows.append(
                        f"coef,{unit.unit_id},{year},{band.value},{name},{_format(value)}"
                    )
            for name in feature_names:
                truth_rows.append(
                    f"feature,{unit.unit_id},{year},,{name},"
                    f"{_format(features[(unit.unit_id, year)][name])}"
                )
    label_var = float(np.var(np.array(label_values))) if label_values else float("nan")
    if label_values and label_var > 0:
        r2_ceiling = 1.0 - sigma_label**2 / label_var
    else:
        r2_ceiling = float("nan")
    meta = {
        "label_sigma": sigma_label,
        "label_variance": label_var,
        "r2_ceiling": r2_ceiling,
        "label_intercept": spec.label_intercept,
        "region_offset": spec.region_offset,
        "sigma_obs": spec.sigma_obs,
    }
    for name in sorted(meta):
        truth_rows.append(f"meta,,,,{name},{_format(meta[name])}")

    (out / "units.csv").write_text("\n".join(lines_units) + "\n", encoding="utf-8")
    (out / "observations.csv").write_text("\n".join(lines_obs) + "\n", encoding="utf-8")
    (out / "climate.csv").write_text("\n".join(lines_climate) + "\n", encoding="utf-8")
    (out / "embeddings.csv").write_text("\n".join(lines_emb) + "\n", encoding="utf-8")
    (out / "labels.csv").write_text("\n".join(lines_labels) + "\n", encoding="utf-8")
    (out / "truth.csv").write_text("\n".join(truth_rows) + "\n", encoding="utf-8")

    return {
        "units": len(units),
        "observations": n_obs,
        "climate": n_climate,
        "embeddings": n_emb,
        "labels": n_labels,
        "label_sigma": sigma_label,
        "r2_ceiling": r2_ceiling,
    }


def read_truth(bundle_dir: str | Path) -> dict:
    """Parse ``truth.csv`` back into coefficient/feature/meta lookups."""
    path = Path(bundle_dir) / "truth.csv"
    coefs: dict[tuple[str, int, str], dict[str, float]] = {}
    feats: dict[tuple[str, int], dict[str, float]] = {}
    meta: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "kind,unit_id,year,band,name,value":
            raise ValueError(f"unexpected truth.csv header: {header}")
        for line in fh:
            kind, unit_id, year, band, name, value = line.rstrip("\n").split(",")
            if kind == "coef":
                coefs.setdefault((unit_id, int(year), band), {})[name] = float(value)
            elif kind == "feature":
                feats.setdefault((unit_id, int(year)), {})[name] = float(value)
            else:
                meta[name] = float(value)
    return {"coefficients": coefs, "features": feats, "meta": meta}
