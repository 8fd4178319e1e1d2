"""The 48-column dyad-month feature matrix.

Sixteen base features in three variants (all minutes, in-role only,
extra-role only), variant-major column order:

* time spent together: total minutes, on campus, off campus, at either
  member's home, weighted by group size (sum of 1/(1+k)), weighted by
  access-point density (sum of 1/ap_count);
* regularity: Shannon entropies (bits) of hour-of-day, day-of-week and
  hour-of-week of the minutes, mean and median minutes between
  meetings, entropy of meeting locations;
* network similarity: Jaccard overlap of the two members' top
  5/15/25/50 contacts by co-presence minutes, after dropping the
  partner from each other's contact set.

Dyads with fewer than two meetings get the month length in minutes as
the inter-meeting sentinel: "rarely meet" must rank as a large gap, not
as missing data. Rows are exactly the dyads with at least one
co-presence minute in the month.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .core import Dyad, MonthWindow
from .context import DEFAULT_GAP_TOLERANCE, MinuteGrid, run_breaks
from .errors import ParseError

FEATURE_BASES = [
    "total_time",
    "time_on_campus",
    "time_off_campus",
    "time_at_home",
    "time_weighted_people",
    "time_weighted_aps",
    "entropy_hour_of_day",
    "entropy_day_of_week",
    "entropy_hour_of_week",
    "mean_inter_meeting",
    "median_inter_meeting",
    "entropy_locations",
    "jaccard_top5",
    "jaccard_top15",
    "jaccard_top25",
    "jaccard_top50",
]
VARIANTS = ["total", "in_role", "extra_role"]
FEATURE_COLUMNS = [f"{base}__{v}" for v in VARIANTS for base in FEATURE_BASES]
TOP_K_VALUES = (5, 15, 25, 50)

N_FEATURES = len(FEATURE_COLUMNS)


def shannon_entropy(counts) -> float:
    """Entropy in bits of a histogram given as bin counts.

    Zero when the total mass is <= 1 or concentrated in one bin.
    """
    arr = np.asarray(list(counts.values()) if isinstance(counts, dict) else counts,
                     dtype=np.float64)
    arr = arr[arr > 0]
    total = arr.sum()
    if total <= 0:
        return 0.0
    return float(np.log2(total) - (arr * np.log2(arr)).sum() / total)


def jaccard(set_a: set, set_b: set) -> float:
    """|A n B| / |A u B|, zero when both sets are empty."""
    union = len(set_a | set_b)
    if union == 0:
        return 0.0
    return len(set_a & set_b) / union


def top_contacts(
    grid: MinuteGrid, month: MonthWindow, user: str, k: int, role: bool | None = None
) -> list[str]:
    """The k partners with the most co-presence minutes with ``user``.

    Ties break to the lexicographically smaller user id; fewer than k
    contacts returns all of them.
    """
    sl = grid.month_slice(month)
    uidx = grid.users.index(user)
    mask = (grid.a[sl] == uidx) | (grid.b[sl] == uidx)
    if role is not None:
        mask &= grid.in_role[sl] == role
    partners = np.where(grid.a[sl][mask] == uidx, grid.b[sl][mask], grid.a[sl][mask])
    counts = np.bincount(partners, minlength=len(grid.users))
    order = sorted(np.nonzero(counts)[0], key=lambda p: (-counts[p], p))
    return [grid.users[int(p)] for p in order[:k]]


@dataclass
class FeatureMatrix:
    """Feature rows for one month; dyads sorted lexicographically."""

    month: MonthWindow
    dyads: list[Dyad]
    X: np.ndarray
    columns: list[str] = field(default_factory=lambda: list(FEATURE_COLUMNS))
    _index: dict | None = None

    @property
    def n_rows(self) -> int:
        return int(self.X.shape[0])

    def col(self, name: str) -> np.ndarray:
        return self.X[:, self.columns.index(name)]

    def row_index(self, dyad: Dyad) -> int | None:
        if self._index is None:
            self._index = {d: i for i, d in enumerate(self.dyads)}
        return self._index.get(dyad)

    def value(self, dyad: Dyad, column: str) -> float:
        i = self.row_index(dyad)
        if i is None:
            raise KeyError(f"dyad {dyad} not in matrix")
        return float(self.X[i, self.columns.index(column)])

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=self.columns)
        df.insert(0, "month", self.month.month)
        df.insert(0, "year", self.month.year)
        df.insert(0, "user_b", [d[1] for d in self.dyads])
        df.insert(0, "user_a", [d[0] for d in self.dyads])
        return df

    def write_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


def load_feature_matrices(paths, utc_offset_minutes: int = 0) -> list["FeatureMatrix"]:
    """Read one or more features.csv files, one matrix per month found."""
    if isinstance(paths, (str,)) or not hasattr(paths, "__iter__"):
        paths = [paths]
    frames = []
    for p in paths:
        df = pd.read_csv(p)
        expected = ["user_a", "user_b", "year", "month"] + FEATURE_COLUMNS
        if list(df.columns) != expected:
            raise ParseError(f"unexpected feature columns in {p}")
        frames.append(df)
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    out = []
    if df.empty:
        return out
    for (year, month), grp in df.groupby(["year", "month"], sort=True):
        grp = grp.sort_values(["user_a", "user_b"], kind="mergesort")
        dyads = list(zip(grp["user_a"].astype(str), grp["user_b"].astype(str)))
        X = grp[FEATURE_COLUMNS].to_numpy(dtype=np.float64)
        out.append(
            FeatureMatrix(
                MonthWindow(int(year), int(month), utc_offset_minutes), dyads, X
            )
        )
    return out


def _entropy_per_dyad(dyad_ids, bins, n_dyads, n_bins) -> np.ndarray:
    """Vectorized per-dyad Shannon entropy over integer bins."""
    H = np.zeros(n_dyads, dtype=np.float64)
    if dyad_ids.shape[0] == 0:
        return H
    key = dyad_ids.astype(np.int64) * n_bins + bins
    uniq, counts = np.unique(key, return_counts=True)
    gk = (uniq // n_bins).astype(np.int64)
    c = counts.astype(np.float64)
    sum_clogc = np.bincount(gk, weights=c * np.log2(c), minlength=n_dyads)
    total = np.bincount(gk, weights=c, minlength=n_dyads)
    present = total > 0
    H[present] = np.log2(total[present]) - sum_clogc[present] / total[present]
    # Guard against -0.0 and tiny negative round-off on degenerate rows.
    return np.maximum(H, 0.0)


def _gap_stats(dyad_ids, minutes, n_dyads, gap_tolerance, sentinel):
    """Mean and median end-to-start inter-meeting gaps per dyad."""
    mean = np.full(n_dyads, float(sentinel))
    median = np.full(n_dyads, float(sentinel))
    if dyad_ids.shape[0] == 0:
        return mean, median
    starts = run_breaks(dyad_ids, minutes, gap_tolerance)
    n_meet = np.bincount(dyad_ids[starts], minlength=n_dyads)
    gap_rows = starts.copy()
    gap_rows[0] = False
    same_dyad = np.zeros_like(gap_rows)
    same_dyad[1:] = dyad_ids[1:] == dyad_ids[:-1]
    gap_rows &= same_dyad
    gd = dyad_ids[gap_rows]
    gv = (minutes[np.nonzero(gap_rows)[0]] - minutes[np.nonzero(gap_rows)[0] - 1]).astype(
        np.float64
    )
    multi = n_meet >= 2
    if gd.shape[0]:
        sums = np.bincount(gd, weights=gv, minlength=n_dyads)
        cnts = np.bincount(gd, minlength=n_dyads)
        mean[multi] = sums[multi] / cnts[multi]
        order = np.lexsort((gv, gd))
        gd_s, gv_s = gd[order], gv[order]
        first = np.ones(gd_s.shape[0], dtype=bool)
        first[1:] = gd_s[1:] != gd_s[:-1]
        offsets = np.nonzero(first)[0]
        dy = gd_s[offsets]
        cnt = np.diff(np.append(offsets, gd_s.shape[0]))
        lo = gv_s[offsets + (cnt - 1) // 2]
        hi = gv_s[offsets + cnt // 2]
        median[dy] = (lo + hi) / 2.0
        median[~multi] = float(sentinel)
    return mean, median


def _top_contact_sets(a, b, n_users):
    """Per-user frozensets of top-k contacts (k in TOP_K_VALUES).

    ``a``/``b`` are dyad indices per row; every row contributes one
    minute to both directed totals. Returns {k: list of frozensets}.
    """
    if a.shape[0] == 0:
        empty = [frozenset()] * n_users
        return {k: list(empty) for k in TOP_K_VALUES}
    key = np.concatenate(
        [a.astype(np.int64) * n_users + b, b.astype(np.int64) * n_users + a]
    )
    pairs, counts = np.unique(key, return_counts=True)
    pu = (pairs // n_users).astype(np.int64)
    pp = (pairs % n_users).astype(np.int64)
    order = np.lexsort((pp, -counts, pu))
    pu, pp = pu[order], pp[order]
    first = np.ones(pu.shape[0], dtype=bool)
    first[1:] = pu[1:] != pu[:-1]
    offsets = np.nonzero(first)[0]
    bounds = np.append(offsets, pu.shape[0])
    sets = {k: [frozenset()] * n_users for k in TOP_K_VALUES}
    for i, off in enumerate(offsets):
        user = int(pu[off])
        row = pp[off : bounds[i + 1]]
        for k in TOP_K_VALUES:
            sets[k][user] = frozenset(row[:k].tolist())
    return sets


def build_feature_matrix(
    grid: MinuteGrid,
    month: MonthWindow,
    gap_tolerance: int = DEFAULT_GAP_TOLERANCE,
) -> FeatureMatrix:
    """Compute all 48 columns for every dyad co-present in the month."""
    sl = grid.month_slice(month)
    a = grid.a[sl].astype(np.int64)
    b = grid.b[sl].astype(np.int64)
    minute = grid.minute[sl]
    k = grid.k[sl].astype(np.float64)
    ap = grid.ap[sl].astype(np.float64)
    campus = grid.campus[sl]
    at_home = grid.at_home[sl]
    loc = grid.loc[sl].astype(np.int64)
    in_role = grid.in_role[sl]
    hour = grid.hour[sl].astype(np.int64)
    dow = grid.dow[sl].astype(np.int64)

    n_users = len(grid.users)
    n_locs = max(len(grid.locations), 1)
    dyad_key = a * n_users + b
    new_dyad = np.ones(dyad_key.shape[0], dtype=bool)
    if dyad_key.shape[0]:
        new_dyad[1:] = dyad_key[1:] != dyad_key[:-1]
    dyad_ids = (np.cumsum(new_dyad) - 1).astype(np.int64)
    n_dyads = int(dyad_ids[-1]) + 1 if dyad_key.shape[0] else 0
    dyads = [
        (grid.users[int(ai)], grid.users[int(bi)])
        for ai, bi in zip(a[new_dyad], b[new_dyad])
    ]
    d_a = a[new_dyad]
    d_b = b[new_dyad]
    month_len = month.n_minutes

    X = np.zeros((n_dyads, N_FEATURES), dtype=np.float64)
    how = dow * 24 + hour

    for vi, variant in enumerate(VARIANTS):
        if variant == "total":
            vm = np.ones(dyad_ids.shape[0], dtype=bool)
        elif variant == "in_role":
            vm = in_role.copy()
        else:
            vm = ~in_role
        d = dyad_ids[vm]
        base = vi * len(FEATURE_BASES)

        tt = np.bincount(d, minlength=n_dyads).astype(np.float64)
        X[:, base + 0] = tt
        X[:, base + 1] = np.bincount(d, weights=campus[vm].astype(np.float64),
                                     minlength=n_dyads)
        X[:, base + 2] = tt - X[:, base + 1]
        X[:, base + 3] = np.bincount(d, weights=at_home[vm].astype(np.float64),
                                     minlength=n_dyads)
        X[:, base + 4] = np.bincount(d, weights=1.0 / (1.0 + k[vm]), minlength=n_dyads)
        X[:, base + 5] = np.bincount(d, weights=1.0 / ap[vm], minlength=n_dyads)

        X[:, base + 6] = _entropy_per_dyad(d, hour[vm], n_dyads, 24)
        X[:, base + 7] = _entropy_per_dyad(d, dow[vm], n_dyads, 7)
        X[:, base + 8] = _entropy_per_dyad(d, how[vm], n_dyads, 168)

        mean_g, med_g = _gap_stats(d, minute[vm], n_dyads, gap_tolerance, month_len)
        X[:, base + 9] = mean_g
        X[:, base + 10] = med_g

        locm = vm & (loc >= 0)
        X[:, base + 11] = _entropy_per_dyad(dyad_ids[locm], loc[locm], n_dyads, n_locs)

        sets = _top_contact_sets(a[vm], b[vm], None, n_users)
        for kj, kval in enumerate(TOP_K_VALUES):
            col = np.zeros(n_dyads, dtype=np.float64)
            ksets = sets[kval]
            for di in range(n_dyads):
                ua, ub = int(d_a[di]), int(d_b[di])
                sa, sb = ksets[ua], ksets[ub]
                inter = len(sa & sb)
                denom = len(sa) + len(sb) - (ub in sa) - (ua in sb) - inter
                col[di] = inter / denom if denom > 0 else 0.0
            X[:, base + 12 + kj] = col

    return FeatureMatrix(month=month, dyads=dyads, X=X)
