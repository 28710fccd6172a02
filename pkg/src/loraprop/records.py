"""The observation record shared by the pipeline, the fitter and the metrics.

One record is one received uplink: timestamp, device, environmental
covariates, signal metrics, radio parameters, frame counters and the
gateway-relative geometry, plus the derived link-budget columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime

from .errors import InvalidConfigError

#: Exact CSV header, in column order.
CSV_COLUMNS = (
    "time",
    "device_id",
    "co2",
    "humidity",
    "pm25",
    "pressure",
    "temperature",
    "rssi",
    "snr",
    "SF",
    "frequency",
    "f_count",
    "p_count",
    "toa",
    "distance",
    "c_walls",
    "w_walls",
    "exp_pl",
    "n_power",
    "esp",
)

#: CSV column name -> record attribute.
COLUMN_ATTRS = {
    "time": "time",
    "device_id": "device_id",
    "co2": "co2_ppm",
    "humidity": "humidity_pct",
    "pm25": "pm25_ugm3",
    "pressure": "pressure_hpa",
    "temperature": "temperature_c",
    "rssi": "rssi_dbm",
    "snr": "snr_db",
    "SF": "sf",
    "frequency": "frequency_mhz",
    "f_count": "f_count",
    "p_count": "p_count",
    "toa": "toa_s",
    "distance": "distance_m",
    "c_walls": "c_walls",
    "w_walls": "w_walls",
    "exp_pl": "exp_pl_db",
    "n_power": "n_power_dbm",
    "esp": "esp_dbm",
}

#: The seven sensor/signal features anomaly screening runs on, in the fixed
#: order configuration files refer to.
FEATURE_FIELDS = ("co2", "humidity", "pm25", "pressure", "temperature", "rssi", "snr")

_INT_COLUMNS = frozenset({"SF", "f_count", "p_count", "c_walls", "w_walls"})
_TIME_FORMAT = "%Y-%m-%d %H:%M:%S"


@dataclass(frozen=True, slots=True)
class ObservationRecord:
    """One dataset row.

    Timestamps are naive local wall-clock values (the source data declares a
    single fixed timezone); arithmetic on them uses raw deltas.
    """

    time: datetime
    device_id: str
    co2_ppm: float
    humidity_pct: float
    pm25_ugm3: float
    pressure_hpa: float
    temperature_c: float
    rssi_dbm: float
    snr_db: float
    sf: int
    frequency_mhz: float
    f_count: int
    p_count: int
    toa_s: float
    distance_m: float
    c_walls: int
    w_walls: int
    exp_pl_db: float
    n_power_dbm: float
    esp_dbm: float

    def __post_init__(self) -> None:
        if not 7 <= self.sf <= 12:
            raise InvalidConfigError(f"sf out of range 7..12: {self.sf}")
        if self.distance_m <= 0:
            raise InvalidConfigError(f"distance must be positive: {self.distance_m}")
        if self.c_walls < 0 or self.w_walls < 0:
            raise InvalidConfigError("wall counts must be >= 0")


def field_value(record: ObservationRecord, column: str):
    """Value of a record attribute addressed by its CSV column name."""
    return getattr(record, COLUMN_ATTRS[column])


def parse_row(values: list[str]) -> ObservationRecord:
    """Build a record from one CSV row (strings in :data:`CSV_COLUMNS` order).

    Raises :class:`ValueError` subclasses with a machine-readable reason as
    the first message token: ``missing-value``, ``bad-<column>``,
    ``non-finite`` or the range violation from the record invariants.
    """
    if len(values) != len(CSV_COLUMNS):
        raise InvalidConfigError(
            f"wrong-field-count: expected {len(CSV_COLUMNS)}, got {len(values)}"
        )
    kwargs = {}
    for column, raw in zip(CSV_COLUMNS, values):
        text = raw.strip()
        if text == "":
            raise InvalidConfigError(f"missing-value: empty {column}")
        attr = COLUMN_ATTRS[column]
        if column == "time":
            try:
                kwargs[attr] = datetime.strptime(text, _TIME_FORMAT)
            except ValueError:
                try:
                    kwargs[attr] = datetime.fromisoformat(text)
                except ValueError:
                    raise InvalidConfigError(f"bad-time: {text!r}") from None
        elif column == "device_id":
            kwargs[attr] = text
        elif column in _INT_COLUMNS:
            try:
                as_float = float(text)
            except ValueError:
                raise InvalidConfigError(f"bad-{column}: {text!r}") from None
            if not math.isfinite(as_float):
                raise InvalidConfigError(f"non-finite: {column}={text!r}")
            if as_float != int(as_float):
                raise InvalidConfigError(f"bad-{column}: non-integer {text!r}")
            kwargs[attr] = int(as_float)
        else:
            try:
                value = float(text)
            except ValueError:
                raise InvalidConfigError(f"bad-{column}: {text!r}") from None
            if not math.isfinite(value):
                raise InvalidConfigError(f"non-finite: {column}={text!r}")
            kwargs[attr] = value
    return ObservationRecord(**kwargs)


def format_row(record: ObservationRecord) -> list[str]:
    """Serialise a record back to CSV cell strings, canonically.

    Floats use ``repr`` (shortest round-trip form) so re-serialising an
    unchanged record is byte-stable.
    """
    cells: list[str] = []
    for column in CSV_COLUMNS:
        value = field_value(record, column)
        if column == "time":
            # identical to the declared format for whole seconds, and keeps
            # sub-second precision when a record carries it
            cells.append(value.isoformat(sep=" "))
        elif column == "device_id":
            cells.append(value)
        elif column in _INT_COLUMNS:
            cells.append(str(value))
        else:
            cells.append(repr(value))
    return cells
