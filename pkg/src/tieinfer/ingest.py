"""Parsing, validation, and normalization of event and label files.

Events are stored column-wise (numpy arrays over interned user/location
tables) so month-scale logs stay cheap to hold and to scan. Parsing has
two paths: a vectorized pandas path for clean files, and a line-by-line
fallback that produces exact 1-based line numbers for malformed input.

File formats (CSV is the interchange default):

* ``events.csv``: ts,user_a,user_b,location_id,on_campus,ap_count
  with on_campus in {true,false} and ap_count >= 1. An empty
  location_id marks an observation without a usable location.
* ``labels.csv``: year,month,channel,user_a,user_b with channel in
  {fb_friend, fb_interaction, call, sms}.
* ``channel_users.csv`` (optional roster): channel,user.
"""

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .core import Channel, Dyad, MonthWindow, ProximityEvent, canonical_dyad, month_of
from .errors import ParseError

EVENT_COLUMNS = ["ts", "user_a", "user_b", "location_id", "on_campus", "ap_count"]
LABEL_COLUMNS = ["year", "month", "channel", "user_a", "user_b"]

_BOOL_TOKENS = {"true": True, "1": True, "false": False, "0": False}


def _parse_bool(token: str) -> bool:
    try:
        return _BOOL_TOKENS[token.strip().lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {token!r}") from None


@dataclass
class EventLog:
    """Normalized, time-sorted co-presence events.

    ``users`` and ``locations`` are sorted tables; ``a``/``b`` index into
    ``users`` with ``users[a] < users[b]`` (canonical dyads), ``loc``
    indexes into ``locations`` with -1 for a missing location. Rows are
    sorted by (ts, a, b) and hold no duplicate (ts, dyad).
    """

    users: list[str]
    locations: list[str]
    ts: np.ndarray
    a: np.ndarray
    b: np.ndarray
    loc: np.ndarray
    campus: np.ndarray
    ap: np.ndarray
    n_malformed: int = 0

    @property
    def n_events(self) -> int:
        return int(self.ts.shape[0])

    @property
    def time_span(self) -> tuple[int, int] | None:
        if self.n_events == 0:
            return None
        return int(self.ts[0]), int(self.ts[-1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventLog):
            return NotImplemented
        return (
            self.users == other.users
            and self.locations == other.locations
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("ts", "a", "b", "loc", "campus", "ap")
            )
        )

    def iter_events(self):
        """Yield events as records with resolved user/location strings."""
        for i in range(self.n_events):
            li = int(self.loc[i])
            yield ProximityEvent(
                ts=int(self.ts[i]),
                user_a=self.users[int(self.a[i])],
                user_b=self.users[int(self.b[i])],
                location_id=self.locations[li] if li >= 0 else None,
                on_campus=bool(self.campus[i]),
                ap_count=int(self.ap[i]),
            )

    @classmethod
    def from_records(cls, records, n_malformed: int = 0) -> "EventLog":
        """Build a log from (ts, user_a, user_b, location_id, on_campus,
        ap_count) tuples; location_id may be None or ''."""
        rows = list(records)
        ts = np.array([r[0] for r in rows], dtype=np.int64)
        ua = np.array([r[1] for r in rows], dtype=object)
        ub = np.array([r[2] for r in rows], dtype=object)
        loc = np.array([r[3] if r[3] else "" for r in rows], dtype=object)
        campus = np.array([bool(r[4]) for r in rows], dtype=bool)
        ap = np.array([r[5] for r in rows], dtype=np.int64)
        return build_event_log(ts, ua, ub, loc, campus, ap, n_malformed)

    def month_windows(self, utc_offset_minutes: int = 0) -> list[MonthWindow]:
        """Consecutive months covering the log's time span."""
        span = self.time_span
        if span is None:
            return []
        first = month_of(span[0], utc_offset_minutes)
        last = month_of(span[1], utc_offset_minutes)
        out, cur = [], first
        while (cur.year, cur.month) <= (last.year, last.month):
            out.append(cur)
            cur = cur.next()
        return out


def _assemble(users, locations, ts, ai, bi, li, campus, ap, n_malformed=0) -> EventLog:
    """Integer-id core of log construction: canonical order, sort, dedup.

    A duplicate (ts, dyad) keeps the record with the largest ap_count;
    remaining ties prefer a present location, then the lexicographically
    smallest location, then on_campus=true. ``users``/``locations`` must
    be sorted so index order equals lexicographic order.
    """
    ts = np.asarray(ts, dtype=np.int64)
    ai = np.asarray(ai, dtype=np.int64)
    bi = np.asarray(bi, dtype=np.int64)
    li = np.asarray(li, dtype=np.int64)
    campus = np.asarray(campus, dtype=bool)
    ap = np.asarray(ap, dtype=np.int64)

    swap = ai > bi
    ai, bi = np.where(swap, bi, ai), np.where(swap, ai, bi)

    # Sort so the preferred record of each (ts, dyad) group comes first.
    loc_pref = np.where(li >= 0, li, len(locations))
    order = np.lexsort((~campus, loc_pref, -ap, bi, ai, ts))
    ts, ai, bi, li, campus, ap = (x[order] for x in (ts, ai, bi, li, campus, ap))
    keep = np.ones(ts.shape[0], dtype=bool)
    same = (ts[1:] == ts[:-1]) & (ai[1:] == ai[:-1]) & (bi[1:] == bi[:-1])
    keep[1:] = ~same
    ts, ai, bi, li, campus, ap = (x[keep] for x in (ts, ai, bi, li, campus, ap))

    # Compact the location table to ids that survived deduplication.
    used = np.unique(li[li >= 0])
    remap = np.full(max(len(locations), 1), -1, dtype=np.int64)
    remap[used] = np.arange(used.shape[0])
    li = np.where(li >= 0, remap[np.clip(li, 0, None)], -1)
    locations = [locations[int(i)] for i in used]

    return EventLog(
        users=list(users),
        locations=locations,
        ts=ts,
        a=ai.astype(np.int32),
        b=bi.astype(np.int32),
        loc=li.astype(np.int32),
        campus=campus,
        ap=ap.astype(np.int32),
        n_malformed=n_malformed,
    )


def build_event_log(ts, ua, ub, loc, campus, ap, n_malformed: int = 0) -> EventLog:
    """String-level log constructor used by the record-based paths."""
    ts = np.asarray(ts, dtype=np.int64)
    n = ts.shape[0]
    if n == 0:
        return EventLog([], [], ts, np.empty(0, np.int32), np.empty(0, np.int32),
                        np.empty(0, np.int32), np.empty(0, bool), np.empty(0, np.int32),
                        n_malformed)

    users = sorted(set(ua) | set(ub))
    uidx = {u: i for i, u in enumerate(users)}
    ai = np.fromiter((uidx[u] for u in ua), dtype=np.int64, count=n)
    bi = np.fromiter((uidx[u] for u in ub), dtype=np.int64, count=n)

    loc_names = sorted({x for x in loc if x})
    lidx = {name: i for i, name in enumerate(loc_names)}
    li = np.fromiter((lidx[x] if x else -1 for x in loc), dtype=np.int64, count=n)

    return _assemble(users, loc_names, ts, ai, bi, li, campus, ap, n_malformed)


def _open_text(source):
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    return source


def parse_events(source, format: str = "csv", strict: bool = True) -> EventLog:
    """Parse an event file into a normalized :class:`EventLog`.

    ``source`` is a path or an open text stream. With ``strict`` (the
    default) any malformed line raises :class:`ParseError` carrying line
    numbers; otherwise malformed lines are dropped and counted in
    ``EventLog.n_malformed``. Input line order never matters: the
    result is canonical.
    """
    if format == "csv":
        if isinstance(source, (str, Path)):
            try:
                return _parse_events_pandas(source)
            except _FallbackToPython:
                return _parse_events_python(source, strict)
        text = source.read()
        try:
            return _parse_events_pandas(io.StringIO(text))
        except _FallbackToPython:
            return _parse_events_python(io.StringIO(text), strict)
    if format == "jsonl":
        return _parse_events_jsonl(source, strict)
    raise ValueError(f"unknown format {format!r}")


class _FallbackToPython(Exception):
    pass


def _parse_events_pandas(source) -> EventLog:
    """Vectorized parse of a clean CSV; bails out on anything suspect."""
    try:
        df = pd.read_csv(
            source,
            dtype={
                "ts": np.int64,
                "user_a": "category",
                "user_b": "category",
                "location_id": "category",
                "on_campus": "category",
                "ap_count": np.int64,
            },
        )
    except (ValueError, TypeError, pd.errors.ParserError):
        raise _FallbackToPython
    if list(df.columns[: len(EVENT_COLUMNS)]) != EVENT_COLUMNS:
        raise _FallbackToPython
    for col in ("user_a", "user_b"):
        if df[col].isna().any() or any(not str(c) for c in df[col].cat.categories):
            raise _FallbackToPython
    camp_cats = [str(c).strip().lower() for c in df["on_campus"].cat.categories]
    if df["on_campus"].isna().any() or any(c not in _BOOL_TOKENS for c in camp_cats):
        raise _FallbackToPython
    if (df["ap_count"] < 1).any():
        raise _FallbackToPython

    # Map per-column category codes onto a single sorted user table so
    # the heavy per-row work stays in integer space.
    ua_cats = df["user_a"].cat.categories.to_numpy(dtype=str)
    ub_cats = df["user_b"].cat.categories.to_numpy(dtype=str)
    users = np.union1d(ua_cats, ub_cats)
    ai = np.searchsorted(users, ua_cats)[df["user_a"].cat.codes.to_numpy()]
    bi = np.searchsorted(users, ub_cats)[df["user_b"].cat.codes.to_numpy()]
    if (ai == bi).any():
        raise _FallbackToPython  # self-pairs need per-line reporting

    loc_cats = df["location_id"].cat.categories.to_numpy(dtype=str)
    keep_mask = np.array([bool(c) for c in loc_cats], dtype=bool)
    loc_names = np.sort(loc_cats[keep_mask])
    code_map = np.full(loc_cats.shape[0] + 1, -1, dtype=np.int64)
    if loc_names.shape[0]:
        code_map[:-1][keep_mask] = np.searchsorted(loc_names, loc_cats[keep_mask])
    li = code_map[df["location_id"].cat.codes.to_numpy()]

    campus_map = np.array([_BOOL_TOKENS[c] for c in camp_cats], dtype=bool)
    campus = campus_map[df["on_campus"].cat.codes.to_numpy()]

    return _assemble(
        [str(u) for u in users],
        [str(x) for x in loc_names],
        df["ts"].to_numpy(),
        ai,
        bi,
        li,
        campus,
        df["ap_count"].to_numpy(),
    )


def _validate_event_fields(fields: list[str]):
    if len(fields) != len(EVENT_COLUMNS):
        raise ValueError("wrong field count")
    ts = int(fields[0])
    ua, ub = fields[1].strip(), fields[2].strip()
    if not ua or not ub or ua == ub:
        raise ValueError("bad user pair")
    loc = fields[3].strip()
    campus = _parse_bool(fields[4])
    ap = int(fields[5])
    if ap < 1:
        raise ValueError("ap_count must be >= 1")
    return ts, ua, ub, loc, campus, ap


def _parse_events_python(source, strict: bool) -> EventLog:
    fh = _open_text(source)
    reader = csv.reader(fh)
    rows, bad_lines = [], []
    for lineno, fields in enumerate(reader, start=1):
        if lineno == 1:
            if [f.strip() for f in fields] != EVENT_COLUMNS:
                raise ParseError(
                    f"expected header {','.join(EVENT_COLUMNS)}", lines=[1]
                )
            continue
        if not fields:
            continue
        try:
            rows.append(_validate_event_fields(fields))
        except (ValueError, IndexError):
            bad_lines.append(lineno)
    if bad_lines and strict:
        raise ParseError(
            f"{len(bad_lines)} malformed event line(s)", lines=bad_lines
        )
    return EventLog.from_records(rows, n_malformed=len(bad_lines))


def _parse_events_jsonl(source, strict: bool) -> EventLog:
    fh = _open_text(source)
    rows, bad_lines = [], []
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            fields = [str(obj[k]) if obj.get(k) is not None else "" for k in EVENT_COLUMNS]
            rows.append(_validate_event_fields(fields))
        except (ValueError, KeyError, TypeError):
            bad_lines.append(lineno)
    if bad_lines and strict:
        raise ParseError(f"{len(bad_lines)} malformed event line(s)", lines=bad_lines)
    return EventLog.from_records(rows, n_malformed=len(bad_lines))


def write_events_csv(log: EventLog, path) -> None:
    """Serialize a log back to the canonical CSV form."""
    users = np.array(log.users, dtype=object)
    locs = np.array(log.locations + [""], dtype=object)
    df = pd.DataFrame(
        {
            "ts": log.ts,
            "user_a": users[log.a],
            "user_b": users[log.b],
            "location_id": locs[log.loc],
            "on_campus": np.where(log.campus, "true", "false"),
            "ap_count": log.ap,
        }
    )
    df.to_csv(path, index=False, lineterminator="\n")


@dataclass
class LabelSet:
    """Ground-truth edges per (month, channel) plus per-channel rosters.

    ``channel_users`` always contains at least the endpoints of that
    channel's edges; a roster file can widen it to everyone who uses
    the channel (needed to count true negatives fairly).
    """

    edges: dict[tuple[MonthWindow, Channel], set[Dyad]] = field(default_factory=dict)
    channel_users: dict[Channel, set[str]] = field(default_factory=dict)

    def edges_for(self, month: MonthWindow, channel: Channel) -> set[Dyad]:
        return self.edges.get((month, channel), set())

    def users_for(self, channel: Channel) -> set[str]:
        return self.channel_users.get(channel, set())

    def months(self) -> list[MonthWindow]:
        return sorted({m for m, _ in self.edges}, key=lambda w: (w.year, w.month))

    def all_users(self) -> set[str]:
        out = set()
        for users in self.channel_users.values():
            out |= users
        return out

    def add_edge(self, month: MonthWindow, channel: Channel, u: str, v: str) -> None:
        dyad = canonical_dyad(u, v)
        self.edges.setdefault((month, channel), set()).add(dyad)
        self.channel_users.setdefault(channel, set()).update(dyad)


def parse_ground_truth(
    source, roster_source=None, utc_offset_minutes: int = 0, strict: bool = True
) -> LabelSet:
    """Parse labels.csv (and an optional channel_users.csv roster)."""
    labels = LabelSet()
    fh = _open_text(source)
    reader = csv.reader(fh)
    bad_lines = []
    for lineno, fields in enumerate(reader, start=1):
        if lineno == 1:
            if [f.strip() for f in fields] != LABEL_COLUMNS:
                raise ParseError(f"expected header {','.join(LABEL_COLUMNS)}", lines=[1])
            continue
        if not fields:
            continue
        try:
            year, month = int(fields[0]), int(fields[1])
            channel = Channel.from_token(fields[2])
            window = MonthWindow(year, month, utc_offset_minutes)
            labels.add_edge(window, channel, fields[3].strip(), fields[4].strip())
        except Exception:
            if strict:
                raise ParseError(f"malformed label line {lineno}", lines=[lineno])
            bad_lines.append(lineno)

    if roster_source is not None:
        fh = _open_text(roster_source)
        reader = csv.reader(fh)
        for lineno, fields in enumerate(reader, start=1):
            if lineno == 1:
                if [f.strip() for f in fields] != ["channel", "user"]:
                    raise ParseError("expected header channel,user", lines=[1])
                continue
            if not fields:
                continue
            try:
                channel = Channel.from_token(fields[0])
                user = fields[1].strip()
                if not user:
                    raise ValueError("empty user")
            except Exception:
                if strict:
                    raise ParseError(f"malformed roster line {lineno}", lines=[lineno])
                continue
            labels.channel_users.setdefault(channel, set()).add(user)
    return labels


def write_labels_csv(labels: LabelSet, path) -> None:
    rows = []
    for (month, channel), dyads in labels.edges.items():
        for a, b in dyads:
            rows.append((month.year, month.month, channel.value, a, b))
    rows.sort()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_COLUMNS)
        w.writerows(rows)


def write_channel_users_csv(labels: LabelSet, path) -> None:
    rows = []
    for channel, users in labels.channel_users.items():
        rows.extend((channel.value, u) for u in users)
    rows.sort()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["channel", "user"])
        w.writerows(rows)


def slice_by_ts(log: EventLog, lo: int, hi: int) -> EventLog:
    """Events with lo <= ts < hi, with compacted user/location tables."""
    i0, i1 = np.searchsorted(log.ts, [lo, hi])
    a, b, loc = log.a[i0:i1], log.b[i0:i1], log.loc[i0:i1]
    used_users = np.unique(np.concatenate([a, b]))
    umap = np.full(max(len(log.users), 1), -1, dtype=np.int64)
    umap[used_users] = np.arange(used_users.shape[0])
    used_locs = np.unique(loc[loc >= 0])
    lmap = np.full(max(len(log.locations), 1), -1, dtype=np.int64)
    lmap[used_locs] = np.arange(used_locs.shape[0])
    return EventLog(
        users=[log.users[int(i)] for i in used_users],
        locations=[log.locations[int(i)] for i in used_locs],
        ts=log.ts[i0:i1].copy(),
        a=umap[a].astype(np.int32),
        b=umap[b].astype(np.int32),
        loc=np.where(loc >= 0, lmap[np.clip(loc, 0, None)], -1).astype(np.int32),
        campus=log.campus[i0:i1].copy(),
        ap=log.ap[i0:i1].copy(),
    )


def assign_months(ts: np.ndarray, utc_offset_minutes: int = 0):
    """Map each timestamp to its month window.

    Returns (months, index) where ``months`` is the consecutive list of
    windows covering the data and ``index[i]`` points into it.
    """
    if ts.shape[0] == 0:
        return [], np.empty(0, dtype=np.int64)
    first = month_of(int(ts.min()), utc_offset_minutes)
    last = month_of(int(ts.max()), utc_offset_minutes)
    months, cur = [], first
    while (cur.year, cur.month) <= (last.year, last.month):
        months.append(cur)
        cur = cur.next()
    bounds = np.array([m.start_ts for m in months[1:]], dtype=np.int64)
    return months, np.searchsorted(bounds, ts, side="right")


@dataclass
class ValidationReport:
    """Cross-check of an event log against a label set, report only."""

    missing_users: list[str]
    zero_event_months: list[str]
    month_table: list[dict]

    def to_dict(self) -> dict:
        return {
            "missing_users": self.missing_users,
            "zero_event_months": self.zero_event_months,
            "months": self.month_table,
        }


def validate_log(
    log: EventLog, labels: LabelSet, utc_offset_minutes: int = 0
) -> ValidationReport:
    """Summarize data availability per month and flag inconsistencies."""
    log_users = set(log.users)
    missing = sorted(labels.all_users() - log_users)

    months, idx = assign_months(log.ts, utc_offset_minutes)
    label_months = labels.months()
    all_months = sorted(
        {(m.year, m.month) for m in months} | {(m.year, m.month) for m in label_months}
    )
    per_month_events = {}
    per_month_dyads = {}
    for k, m in enumerate(months):
        mask = idx == k
        per_month_events[(m.year, m.month)] = int(mask.sum())
        if mask.any():
            key = log.a[mask].astype(np.int64) * len(log.users) + log.b[mask]
            per_month_dyads[(m.year, m.month)] = int(np.unique(key).shape[0])
        else:
            per_month_dyads[(m.year, m.month)] = 0

    table, zero = [], []
    for (y, mo) in all_months:
        row = {
            "year": y,
            "month": mo,
            "events": per_month_events.get((y, mo), 0),
            "copresent_dyads": per_month_dyads.get((y, mo), 0),
        }
        for ch in Channel:
            row[f"edges_{ch.value}"] = len(
                labels.edges_for(MonthWindow(y, mo, utc_offset_minutes), ch)
            )
        table.append(row)
        if row["events"] == 0:
            zero.append(f"{y:04d}-{mo:02d}")
    return ValidationReport(missing, zero, table)
