"""Shared domain types: dyads, calendar months, in-role/extra-role time.

All timestamps are Unix seconds. Local time is a fixed UTC offset in
minutes (no DST database); datasets spanning a DST change accept up to
one hour of role misclassification near the transition.

Minute bins are ``ts // 60`` (UTC epoch minutes). Because offsets are
whole minutes, month and working-hour boundaries always align with
minute boundaries, so a minute bin never straddles two months or two
roles.
"""

import enum
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import NamedTuple

from .errors import InvalidDyadError

# Unix epoch (1970-01-01) was a Thursday; Monday == 0.
_EPOCH_WEEKDAY = 3

MINUTES_PER_DAY = 1440

Dyad = tuple[str, str]


class Role(enum.Enum):
    IN_ROLE = "in_role"
    EXTRA_ROLE = "extra_role"


class Channel(enum.Enum):
    """The four ground-truth tie networks."""

    FB_FRIEND = "fb_friend"
    FB_INTERACTION = "fb_interaction"
    CALL = "call"
    SMS = "sms"

    @classmethod
    def from_token(cls, token: str) -> "Channel":
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise ValueError(f"unknown channel {token!r}") from None


@dataclass(frozen=True)
class RoleConfig:
    """Working-hours definition used to split in-role from extra-role time.

    In-role means a local weekday (Mon-Fri) with local hour in
    ``[work_start_hour, work_end_hour)``. Defaults to 08-17; the hours
    are a knob because no single convention fits every dataset.
    """

    utc_offset_minutes: int = 0
    work_start_hour: int = 8
    work_end_hour: int = 17

    def __post_init__(self):
        if not (0 <= self.work_start_hour < self.work_end_hour <= 24):
            raise ValueError("working hours must satisfy 0 <= start < end <= 24")


@dataclass(frozen=True, order=True)
class MonthWindow:
    """One calendar month in a fixed local UTC offset."""

    year: int
    month: int
    utc_offset_minutes: int = 0

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month out of range: {self.month}")

    @property
    def _tz(self) -> timezone:
        return timezone(timedelta(minutes=self.utc_offset_minutes))

    @property
    def start_ts(self) -> int:
        """Unix second of the first instant of the month (local)."""
        return int(datetime(self.year, self.month, 1, tzinfo=self._tz).timestamp())

    @property
    def end_ts(self) -> int:
        """Unix second just past the last instant (start of next month)."""
        return self.next().start_ts

    @property
    def n_minutes(self) -> int:
        return (self.end_ts - self.start_ts) // 60

    @property
    def start_minute(self) -> int:
        return self.start_ts // 60

    def contains(self, ts: int) -> bool:
        return self.start_ts <= ts < self.end_ts

    def next(self) -> "MonthWindow":
        return self.shift(1)

    def prev(self) -> "MonthWindow":
        return self.shift(-1)

    def shift(self, n_months: int) -> "MonthWindow":
        idx = self.year * 12 + (self.month - 1) + n_months
        return MonthWindow(idx // 12, idx % 12 + 1, self.utc_offset_minutes)

    @property
    def label(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"

    def __str__(self) -> str:
        return self.label

    @classmethod
    def parse(cls, text: str, utc_offset_minutes: int = 0) -> "MonthWindow":
        """Parse ``YYYY-MM`` into a window."""
        try:
            y, m = text.strip().split("-")
            return cls(int(y), int(m), utc_offset_minutes)
        except (ValueError, TypeError):
            raise ValueError(f"expected YYYY-MM, got {text!r}") from None


class ProximityEvent(NamedTuple):
    """One timestamped co-presence observation between two participants.

    ``location_id`` is None when the observation carried no usable
    location; ``ap_count`` (>= 1) is the number of access points seen
    during the observation, a crowd-density proxy.
    """

    ts: int
    user_a: str
    user_b: str
    location_id: str | None
    on_campus: bool
    ap_count: int

    @property
    def dyad(self) -> Dyad:
        return (self.user_a, self.user_b)


def canonical_dyad(u: str, v: str) -> Dyad:
    """Order a user pair lexicographically; raises on a self-pair."""
    if u == v:
        raise InvalidDyadError(f"dyad endpoints must differ, got {u!r} twice")
    return (u, v) if u < v else (v, u)


def minute_of(ts):
    """Minute bin of a timestamp; works on ints and numpy arrays."""
    return ts // 60


def local_hour_of_day(minute, utc_offset_minutes: int = 0):
    return ((minute + utc_offset_minutes) // 60) % 24


def local_day_of_week(minute, utc_offset_minutes: int = 0):
    """Weekday of the minute bin, Monday == 0."""
    return ((minute + utc_offset_minutes) // MINUTES_PER_DAY + _EPOCH_WEEKDAY) % 7


def local_hour_of_week(minute, utc_offset_minutes: int = 0):
    """Hour slot within the week, 0 == Monday 00h, 167 == Sunday 23h."""
    return local_day_of_week(minute, utc_offset_minutes) * 24 + local_hour_of_day(
        minute, utc_offset_minutes
    )


def role_of(ts: int, cfg: RoleConfig) -> Role:
    """In-role iff local weekday falls within the configured working hours."""
    minute = minute_of(ts)
    dow = local_day_of_week(minute, cfg.utc_offset_minutes)
    hour = local_hour_of_day(minute, cfg.utc_offset_minutes)
    in_role = dow <= 4 and cfg.work_start_hour <= hour < cfg.work_end_hour
    return Role.IN_ROLE if in_role else Role.EXTRA_ROLE


def month_of(ts: int, utc_offset_minutes: int = 0) -> MonthWindow:
    """Calendar month containing ``ts`` in the given local offset."""
    tz = timezone(timedelta(minutes=utc_offset_minutes))
    dt = datetime.fromtimestamp(ts, tz)
    return MonthWindow(dt.year, dt.month, utc_offset_minutes)


def month_span(first: MonthWindow, last: MonthWindow) -> list[MonthWindow]:
    """All months from ``first`` through ``last`` inclusive."""
    if (first.year, first.month) > (last.year, last.month):
        raise ValueError("first month is after last month")
    out = []
    cur = first
    while (cur.year, cur.month) <= (last.year, last.month):
        out.append(cur)
        cur = cur.next()
    return out
