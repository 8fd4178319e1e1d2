"""Minute-resolution co-presence, meeting segmentation, and annotations.

Raw events are reduced to one-minute bins per dyad. Each dyad-minute
carries the group size (how many other people either member met within
five minute-bins, i.e. 300 s), the access-point count and location of
the densest event in the bin, an on-campus flag, an at-home flag, and
the in-role/extra-role split.

Everything is month-local: group-size windows and meetings never cross a
month boundary, so a month's features depend only on that month's
events.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import (
    MonthWindow,
    RoleConfig,
    local_day_of_week,
    local_hour_of_day,
)
from .ingest import EventLog, assign_months

GROUP_WINDOW_MINUTES = 5
DEFAULT_GAP_TOLERANCE = 10

HomeMap = dict[str, str]


class Meeting(NamedTuple):
    """A maximal run of co-presence minutes with bounded gaps."""

    user_a: str
    user_b: str
    start_minute: int
    end_minute: int
    minutes: int
    location: str | None


@dataclass
class MinuteGrid:
    """Columnar dyad-minute table, sorted by (month, dyad, minute)."""

    users: list[str]
    locations: list[str]
    months: list[MonthWindow]
    role_cfg: RoleConfig
    month_idx: np.ndarray
    a: np.ndarray
    b: np.ndarray
    minute: np.ndarray
    k: np.ndarray
    ap: np.ndarray
    campus: np.ndarray
    at_home: np.ndarray
    loc: np.ndarray
    in_role: np.ndarray
    hour: np.ndarray
    dow: np.ndarray

    @property
    def n_rows(self) -> int:
        return int(self.minute.shape[0])

    def month_slice(self, month: MonthWindow) -> slice:
        """Row range of one month (empty slice when absent)."""
        key = (month.year, month.month)
        for i, m in enumerate(self.months):
            if (m.year, m.month) == key:
                lo, hi = np.searchsorted(self.month_idx, [i, i + 1])
                return slice(int(lo), int(hi))
        return slice(0, 0)

    def rows_for_dyad(self, month: MonthWindow, user_a: str, user_b: str) -> np.ndarray:
        """Row indices of one dyad's minutes in a month (test helper)."""
        sl = self.month_slice(month)
        ai = self.users.index(user_a)
        bi = self.users.index(user_b)
        if ai > bi:
            ai, bi = bi, ai
        idx = np.arange(sl.start, sl.stop)
        mask = (self.a[sl] == ai) & (self.b[sl] == bi)
        return idx[mask]


def infer_homes(log: EventLog) -> HomeMap:
    """Each user's most-observed location over the whole log.

    Every event contributes one observation to both members. Ties break
    to the lexicographically smallest location id; users with no located
    events are absent from the map.
    """
    located = log.loc >= 0
    u = np.concatenate([log.a[located], log.b[located]]).astype(np.int64)
    l = np.concatenate([log.loc[located], log.loc[located]]).astype(np.int64)
    if u.shape[0] == 0:
        return {}
    key = u * len(log.locations) + l
    uniq, counts = np.unique(key, return_counts=True)
    uu = uniq // len(log.locations)
    ul = uniq % len(log.locations)
    # Per user: keep the (max count, min location) entry.
    order = np.lexsort((ul, -counts, uu))
    uu, ul = uu[order], ul[order]
    first = np.ones(uu.shape[0], dtype=bool)
    first[1:] = uu[1:] != uu[:-1]
    return {
        log.users[int(user)]: log.locations[int(locid)]
        for user, locid in zip(uu[first], ul[first])
    }


def build_minute_grid(
    log: EventLog, homes: HomeMap | None = None, cfg: RoleConfig | None = None
) -> MinuteGrid:
    """Reduce events to annotated dyad-minutes.

    A dyad-minute exists iff at least one event for the dyad falls in
    that minute. Its location/ap/on-campus come from the bin's event
    with the largest ap_count (ties: earliest timestamp). ``at_home`` is
    true when the minute's location is either member's home.
    """
    cfg = cfg or RoleConfig()
    homes = homes if homes is not None else infer_homes(log)

    months, midx = assign_months(log.ts, cfg.utc_offset_minutes)
    minute = log.ts // 60

    order = np.lexsort((log.ts, -log.ap.astype(np.int64), minute, log.b, log.a, midx))
    midx_s = midx[order]
    a_s = log.a[order].astype(np.int64)
    b_s = log.b[order].astype(np.int64)
    min_s = minute[order]
    first = np.ones(min_s.shape[0], dtype=bool)
    if min_s.shape[0]:
        first[1:] = (
            (midx_s[1:] != midx_s[:-1])
            | (a_s[1:] != a_s[:-1])
            | (b_s[1:] != b_s[:-1])
            | (min_s[1:] != min_s[:-1])
        )
    rows = order[first]

    g_midx = midx[rows].astype(np.int32)
    g_a = log.a[rows].astype(np.int32)
    g_b = log.b[rows].astype(np.int32)
    g_min = minute[rows]
    g_ap = log.ap[rows]
    g_loc = log.loc[rows]
    g_campus = log.campus[rows]

    hour = local_hour_of_day(g_min, cfg.utc_offset_minutes).astype(np.int8)
    dow = local_day_of_week(g_min, cfg.utc_offset_minutes).astype(np.int8)
    in_role = (
        (dow <= 4) & (hour >= cfg.work_start_hour) & (hour < cfg.work_end_hour)
    )

    home_idx = np.full(len(log.users), -1, dtype=np.int64)
    loc_pos = {name: i for i, name in enumerate(log.locations)}
    for i, user in enumerate(log.users):
        h = homes.get(user)
        if h is not None and h in loc_pos:
            home_idx[i] = loc_pos[h]
    at_home = (g_loc >= 0) & (
        (g_loc == home_idx[g_a]) | (g_loc == home_idx[g_b])
    )

    k = _group_sizes(g_midx, g_a, g_b, g_min, len(log.users))

    return MinuteGrid(
        users=log.users,
        locations=log.locations,
        months=months,
        role_cfg=cfg,
        month_idx=g_midx,
        a=g_a,
        b=g_b,
        minute=g_min,
        k=k,
        ap=g_ap.astype(np.int32),
        campus=g_campus,
        at_home=at_home,
        loc=g_loc.astype(np.int32),
        in_role=in_role,
        hour=hour,
        dow=dow,
    )


def _group_sizes(month_idx, a, b, minute, n_users) -> np.ndarray:
    """Group size per dyad-minute via an interval sweep over bitmasks.

    For each directed pair (u, c) the minutes where c counts as "near u"
    form a union of [m-W, m+W] intervals. Sweeping minutes in order and
    keeping one partner bitmask per user, the group size of a row is
    popcount(mask[a] | mask[b]) - 2: the dyad members themselves always
    sit in each other's masks (their own minute is within the window).
    """
    n = minute.shape[0]
    k_out = np.zeros(n, dtype=np.int32)
    if n == 0:
        return k_out
    W = GROUP_WINDOW_MINUTES

    for m_id in np.unique(month_idx):
        sel = np.nonzero(month_idx == m_id)[0]
        u = np.concatenate([a[sel], b[sel]]).astype(np.int64)
        p = np.concatenate([b[sel], a[sel]]).astype(np.int64)
        mm = np.concatenate([minute[sel], minute[sel]])
        order = np.lexsort((mm, p, u))
        u, p, mm = u[order], p[order], mm[order]

        new_run = np.ones(u.shape[0], dtype=bool)
        new_run[1:] = (
            (u[1:] != u[:-1]) | (p[1:] != p[:-1]) | (mm[1:] - mm[:-1] > 2 * W + 1)
        )
        starts = np.nonzero(new_run)[0]
        ends = np.concatenate([starts[1:] - 1, [u.shape[0] - 1]])
        set_t = mm[starts] - W
        clr_t = mm[ends] + W + 1
        iu, ip = u[starts], p[starts]

        set_order = np.argsort(set_t, kind="stable")
        clr_order = np.argsort(clr_t, kind="stable")
        s_t = set_t[set_order].tolist()
        s_u = iu[set_order].tolist()
        s_p = ip[set_order].tolist()
        c_t = clr_t[clr_order].tolist()
        c_u = iu[clr_order].tolist()
        c_p = ip[clr_order].tolist()

        q_order = sel[np.argsort(minute[sel], kind="stable")]
        q_min = minute[q_order].tolist()
        q_a = a[q_order].tolist()
        q_b = b[q_order].tolist()

        masks = [0] * n_users
        si = ci = 0
        n_set, n_clr = len(s_t), len(c_t)
        out = k_out  # local alias for the hot loop
        for qi in range(len(q_min)):
            qm = q_min[qi]
            while si < n_set and s_t[si] <= qm:
                masks[s_u[si]] |= 1 << s_p[si]
                si += 1
            while ci < n_clr and c_t[ci] <= qm:
                masks[c_u[ci]] &= ~(1 << c_p[ci])
                ci += 1
            out[q_order[qi]] = (masks[q_a[qi]] | masks[q_b[qi]]).bit_count() - 2
    return k_out


def run_breaks(dyad_key: np.ndarray, minute: np.ndarray, gap_tolerance: int) -> np.ndarray:
    """Start-of-meeting mask over rows sorted by (dyad_key, minute)."""
    n = minute.shape[0]
    mask = np.ones(n, dtype=bool)
    if n:
        mask[1:] = (dyad_key[1:] != dyad_key[:-1]) | (
            minute[1:] - minute[:-1] > gap_tolerance
        )
    return mask


@dataclass
class MeetingSet:
    """Columnar meetings for one month (optionally role-filtered)."""

    users: list[str]
    locations: list[str]
    a: np.ndarray
    b: np.ndarray
    start_minute: np.ndarray
    end_minute: np.ndarray
    minutes: np.ndarray
    dominant_loc: np.ndarray

    @property
    def n_meetings(self) -> int:
        return int(self.a.shape[0])

    def to_records(self) -> list[Meeting]:
        out = []
        for i in range(self.n_meetings):
            li = int(self.dominant_loc[i])
            out.append(
                Meeting(
                    self.users[int(self.a[i])],
                    self.users[int(self.b[i])],
                    int(self.start_minute[i]),
                    int(self.end_minute[i]),
                    int(self.minutes[i]),
                    self.locations[li] if li >= 0 else None,
                )
            )
        return out

    def write_csv(self, path) -> None:
        import csv

        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(
                ["user_a", "user_b", "start_minute", "end_minute", "minutes", "location"]
            )
            for rec in self.to_records():
                w.writerow(
                    [
                        rec.user_a,
                        rec.user_b,
                        rec.start_minute,
                        rec.end_minute,
                        rec.minutes,
                        rec.location or "",
                    ]
                )


def segment_meetings(
    grid: MinuteGrid,
    month: MonthWindow,
    gap_tolerance: int = DEFAULT_GAP_TOLERANCE,
    role: bool | None = None,
) -> MeetingSet:
    """Split a month's dyad-minutes into meetings.

    A meeting is a maximal run of a dyad's minutes with consecutive
    gaps <= ``gap_tolerance``. ``role`` filters to in-role (True) or
    extra-role (False) minutes first; None keeps all. The dominant
    location is the meeting's most frequent located minute (ties to the
    lexicographically smallest location).
    """
    if gap_tolerance < 1:
        raise ValueError("gap_tolerance must be >= 1")
    sl = grid.month_slice(month)
    idx = np.arange(sl.start, sl.stop)
    if role is not None:
        idx = idx[grid.in_role[sl] == role]

    a, b, minute, loc = grid.a[idx], grid.b[idx], grid.minute[idx], grid.loc[idx]
    dyad_key = a.astype(np.int64) * len(grid.users) + b
    starts_mask = run_breaks(dyad_key, minute, gap_tolerance)
    starts = np.nonzero(starts_mask)[0]
    ends = np.concatenate([starts[1:] - 1, [idx.shape[0] - 1]]) if starts.size else starts

    meeting_id = np.cumsum(starts_mask) - 1
    n_meet = starts.shape[0]
    dominant = np.full(n_meet, -1, dtype=np.int64)
    if n_meet:
        loc_key = np.where(loc >= 0, loc, len(grid.locations)).astype(np.int64)
        order = np.lexsort((loc_key, meeting_id))
        mid_s, loc_s = meeting_id[order], loc_key[order]
        run_start = np.ones(order.shape[0], dtype=bool)
        run_start[1:] = (mid_s[1:] != mid_s[:-1]) | (loc_s[1:] != loc_s[:-1])
        run_idx = np.nonzero(run_start)[0]
        run_count = np.diff(np.append(run_idx, order.shape[0]))
        r_mid, r_loc = mid_s[run_idx], loc_s[run_idx]
        pick = np.lexsort((r_loc, -run_count, r_mid))
        first = np.ones(pick.shape[0], dtype=bool)
        first[1:] = r_mid[pick][1:] != r_mid[pick][:-1]
        chosen = pick[first]
        dominant[r_mid[chosen]] = np.where(
            r_loc[chosen] < len(grid.locations), r_loc[chosen], -1
        )

    return MeetingSet(
        users=grid.users,
        locations=grid.locations,
        a=a[starts] if n_meet else np.empty(0, np.int32),
        b=b[starts] if n_meet else np.empty(0, np.int32),
        start_minute=minute[starts] if n_meet else np.empty(0, np.int64),
        end_minute=minute[ends] if n_meet else np.empty(0, np.int64),
        minutes=(ends - starts + 1).astype(np.int64)
        if n_meet
        else np.empty(0, np.int64),
        dominant_loc=dominant.astype(np.int32),
    )
