"""Monthly climate aggregates: accumulated precipitation and growing degree days.

GDD accumulates hourly thermal time between a base and a cap temperature,
with hourly temperatures interpolated sinusoidally between the daily minimum
and maximum. The double sum over days and hours 1..24 is implemented
literally and yields degree-hours; set ``gdd_per_day`` to divide by 24 for
conventional degree-day units.
"""

import calendar
import math
from dataclasses import dataclass

from .dataset import ClimateDaily


class NoClimateDataError(ValueError):
    pass


@dataclass(frozen=True)
class GddThresholds:
    """Lower/upper biological temperature thresholds in deg C."""

    t_base: float
    t_cap: float

    def __post_init__(self):
        if not self.t_base < self.t_cap:
            raise ValueError(f"t_base {self.t_base} must be below t_cap {self.t_cap}")


GDD_SOYBEAN = GddThresholds(t_base=8.0, t_cap=30.0)
GDD_WINTER_WHEAT = GddThresholds(t_base=0.0, t_cap=26.0)
# Corn thresholds are a configurable default (standard agronomic limits);
# runs that rely on them flag the assumption in their reports.
GDD_CORN_DEFAULT = GddThresholds(t_base=10.0, t_cap=30.0)

GDD_DEFAULTS = {
    "soybean": GDD_SOYBEAN,
    "winter_wheat": GDD_WINTER_WHEAT,
    "corn": GDD_CORN_DEFAULT,
}


@dataclass(frozen=True)
class MonthlyClimate:
    """Per-unit monthly aggregates plus the fraction of days present."""

    unit_id: str
    year: int
    month: int
    gdd: float
    ppt: float
    tmean: float
    coverage: float


def hourly_temp(tmin_c: float, tmax_c: float, hour: int) -> float:
    """Sinusoidal hourly temperature between the daily min and max.

    The phase puts the maximum at hour 12 and the minimum at the
    hour-24-adjacent trough; any fixed phase gives the same daily GDD sum.
    """
    if tmin_c > tmax_c:
        raise ValueError(f"tmin {tmin_c} > tmax {tmax_c}")
    if not 1 <= hour <= 24:
        raise ValueError(f"hour must be in 1..24, got {hour}")
    mid = (tmax_c + tmin_c) / 2.0
    amp = (tmax_c - tmin_c) / 2.0
    return mid + amp * math.sin(math.pi * (hour - 6) / 12.0)


def _check_month(days: list[ClimateDaily]) -> tuple[int, int]:
    if not days:
        raise NoClimateDataError("no climate data for month")
    year, month = days[0].day.year, days[0].day.month
    seen = set()
    for rec in days:
        if (rec.day.year, rec.day.month) != (year, month):
            raise ValueError(
                f"day {rec.day} outside month {year}-{month:02d}"
            )
        if rec.day in seen:
            raise ValueError(f"duplicate climate day {rec.day}")
        seen.add(rec.day)
    return year, month


def monthly_gdd(
    days: list[ClimateDaily], thresholds: GddThresholds, gdd_per_day: bool = False
) -> float:
    """Accumulated thermal time for one month, in degree-hours.

    Days are processed in date order; missing calendar days simply
    contribute nothing (their absence shows up in ``month_coverage``).
    """
    _check_month(days)
    span = thresholds.t_cap - thresholds.t_base
    total = 0.0
    for rec in sorted(days, key=lambda r: r.day):
        for hour in range(1, 25):
            t_h = hourly_temp(rec.tmin_c, rec.tmax_c, hour)
            total += max(0.0, min(t_h - thresholds.t_base, span))
    return total / 24.0 if gdd_per_day else total


def monthly_ppt(days: list[ClimateDaily]) -> float:
    """Sum of daily precipitation totals for one month, in mm.

    Uses exactly rounded (compensated) summation, so the result is
    independent of accumulation order.
    """
    _check_month(days)
    return math.fsum(rec.ppt_mm for rec in days)


def monthly_tmean(days: list[ClimateDaily]) -> float:
    """Mean of the daily (tmin + tmax) / 2 midpoints, in deg C."""
    _check_month(days)
    return math.fsum((rec.tmin_c + rec.tmax_c) / 2.0 for rec in days) / len(days)


def month_coverage(days: list[ClimateDaily], year: int, month: int) -> float:
    """Fraction of the month's calendar days present in ``days``."""
    n_days = calendar.monthrange(year, month)[1]
    present = {rec.day for rec in days if (rec.day.year, rec.day.month) == (year, month)}
    return len(present) / n_days


def summarize_month(
    unit_id: str,
    days: list[ClimateDaily],
    year: int,
    month: int,
    thresholds: GddThresholds,
    gdd_per_day: bool = False,
) -> MonthlyClimate:
    """Build the monthly aggregate record for one unit and month."""
    in_month = [rec for rec in days if (rec.day.year, rec.day.month) == (year, month)]
    if not in_month:
        raise NoClimateDataError(f"no climate data for month {year}-{month:02d}")
    return MonthlyClimate(
        unit_id=unit_id,
        year=year,
        month=month,
        gdd=monthly_gdd(in_month, thresholds, gdd_per_day=gdd_per_day),
        ppt=monthly_ppt(in_month),
        tmean=monthly_tmean(in_month),
        coverage=month_coverage(in_month, year, month),
    )
