"""The three competing feature sets and the two labels.

base     — raw building attributes, usage shares, and per-parcel sale
           history (carry-forward price, moving averages, percent changes),
           always computed from sales strictly before the row's year.
zone     — base plus per-(zip, year) means of the sale-history features,
           the prior-year zip sale count, and a parallel set restricted to
           the row's building category ("bt_only").
spatial  — base plus radius aggregates over the point-neighbor graph:
           prior-year neighbor sale counters, their 2-year sums and percent
           changes, and value lags in two weightings (_basic = plain mean,
           _dist = inverse-distance weighted with weights renormalized over
           observed neighbors).

All sale-derived lag and zone features for row year t read years <= t-1;
gap years resolve to the most recent prior year present in the panel
(skipped, never interpolated). Rows are always aligned to the panel sorted
by (bbl, year).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import sparse

from .ingest import category_of
from .spatial_index import NeighborGraph

IDW_MIN_DISTANCE_M = 1.0  # zero-distance clamp for stacked points

SHARE_COLS = {
    "Percent_Com": "area_com",
    "Percent_Res": "area_res",
    "Percent_Office": "area_office",
    "Percent_Retail": "area_retail",
    "Percent_Garage": "area_garage",
    "Percent_Storage": "area_storage",
    "Percent_Factory": "area_factory",
    "Percent_Other": "area_other",
}

HISTORY_COLS = [
    "Last_Sale_Price",
    "Last_Sale_Price_Total",
    "Years_Since_Last_Sale",
    "SMA_Price_2_year",
    "SMA_Price_3_year",
    "SMA_Price_5_year",
    "Percent_Change_SMA_2",
    "Percent_Change_SMA_5",
    "EMA_Price_2_year",
    "EMA_Price_3_year",
    "EMA_Price_5_year",
    "Percent_Change_EMA_2",
    "Percent_Change_EMA_5",
]

# history/share columns that get neighbor-lagged in both weightings
LAGGED_VALUE_COLS = list(SHARE_COLS) + [
    "SMA_Price_2_year",
    "SMA_Price_3_year",
    "SMA_Price_5_year",
    "Percent_Change_SMA_2",
    "Percent_Change_SMA_5",
    "EMA_Price_2_year",
    "EMA_Price_3_year",
    "EMA_Price_5_year",
    "Percent_Change_EMA_2",
    "Percent_Change_EMA_5",
]

RAW_NUMERIC_COLS = [
    "lat",
    "lon",
    "num_bldgs",
    "area_total",
    "area_com",
    "area_res",
    "area_office",
    "area_retail",
    "area_garage",
    "area_storage",
    "area_factory",
    "area_other",
    "assess_total",
    "year_built",
    "floors",
    "units_res",
    "units_total",
]


# ---------------------------------------------------------------------------
# primitives


def sma(values, n: int) -> float:
    """Mean of the most recent min(n, available) observations; NaN if none."""
    if n < 1:
        raise ValueError("window must be >= 1")
    vals = [v for v in values]
    if not vals:
        return math.nan
    window = vals[-n:]
    return float(sum(window) / len(window))


def ema(values, n: int) -> float:
    """Recursive EMA with alpha = 2/(n+1), seeded at the first observation."""
    if n < 1:
        raise ValueError("window must be >= 1")
    alpha = 2.0 / (n + 1)
    out = math.nan
    for v in values:
        # incremental form: exact fixed point on constant series
        out = v if math.isnan(out) else out + alpha * (v - out)
    return out


def percent_change(current: float, previous: float) -> float:
    """(current - previous) / previous; NaN on zero or missing previous."""
    if (
        current is None
        or previous is None
        or not math.isfinite(current)
        or not math.isfinite(previous)
        or previous == 0
    ):
        return math.nan
    return (current - previous) / previous


def _pc_array(cur: np.ndarray, prev: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (cur - prev) / prev
    bad = ~np.isfinite(prev) | (prev == 0) | ~np.isfinite(cur)
    out = np.where(bad, np.nan, out)
    return out


# ---------------------------------------------------------------------------
# feature matrix container


@dataclass
class FeatureMatrix:
    """Named-column numeric matrix keyed by (bbl, year); NaN marks missing."""

    kind: str  # base | zone | spatial
    frame: pd.DataFrame  # bbl, year, then feature columns
    feature_columns: list[str]
    formulas: dict[str, str] = field(default_factory=dict)

    def values(self) -> np.ndarray:
        return self.frame[self.feature_columns].to_numpy(dtype=np.float64)

    def keys(self) -> pd.DataFrame:
        return self.frame[["bbl", "year"]]

    @property
    def years(self) -> np.ndarray:
        return self.frame["year"].to_numpy()

    def select(self, rows) -> "FeatureMatrix":
        return FeatureMatrix(
            kind=self.kind,
            frame=self.frame.iloc[rows].reset_index(drop=True),
            feature_columns=list(self.feature_columns),
            formulas=dict(self.formulas),
        )

    def content_hash(self, year: int | None = None) -> str:
        frame = self.frame if year is None else self.frame[self.frame["year"] == year]
        blob = frame.to_csv(index=False).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_csv(self, path) -> None:
        path = str(path)
        self.frame.to_csv(path, index=False)
        manifest = {
            "kind": self.kind,
            "columns": [
                {"name": c, "kind": self.kind, "formula": self.formulas.get(c, "raw")}
                for c in self.feature_columns
            ],
        }
        with open(path + ".manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=1)

    @staticmethod
    def read_csv(path) -> "FeatureMatrix":
        path = str(path)
        with open(path + ".manifest.json") as fh:
            manifest = json.load(fh)
        frame = pd.read_csv(path, float_precision="round_trip")
        frame["bbl"] = frame["bbl"].astype(str)
        cols = [c["name"] for c in manifest["columns"]]
        return FeatureMatrix(
            kind=manifest["kind"],
            frame=frame,
            feature_columns=cols,
            formulas={c["name"]: c["formula"] for c in manifest["columns"]},
        )


@dataclass
class Labels:
    """sold for classification; sale_psf (NaN outside regression rows)."""

    sold: np.ndarray
    sale_psf: np.ndarray

    @property
    def regression_rows(self) -> np.ndarray:
        return np.isfinite(self.sale_psf)


def sorted_panel(panel: pd.DataFrame) -> pd.DataFrame:
    return panel.sort_values(["bbl", "year"], kind="mergesort").reset_index(drop=True)


def make_labels(panel: pd.DataFrame) -> Labels:
    """Classification uses every row; regression keeps sold rows with a
    positive price per square foot (zero-price deeds are non-market)."""
    panel = sorted_panel(panel)
    sold = panel["sold"].to_numpy(dtype=np.int8)
    psf = panel["sale_psf"].to_numpy(dtype=np.float64)
    target = np.where((sold == 1) & np.isfinite(psf) & (psf > 0), psf, np.nan)
    return Labels(sold=sold, sale_psf=target)


# ---------------------------------------------------------------------------
# base features


class _SaleHistory:
    """Per-parcel accumulator, updated strictly in year order."""

    __slots__ = ("last_psf", "last_total", "last_year", "hist", "smas", "emas", "pc_sma", "pc_ema")

    def __init__(self):
        self.last_psf = math.nan
        self.last_total = math.nan
        self.last_year = None
        self.hist: list[float] = []
        self.smas = {2: math.nan, 3: math.nan, 5: math.nan}
        self.emas = {2: math.nan, 3: math.nan, 5: math.nan}
        self.pc_sma = {2: math.nan, 5: math.nan}
        self.pc_ema = {2: math.nan, 5: math.nan}

    def snapshot(self, year: int) -> list[float]:
        since = float(year - self.last_year) if self.last_year is not None else math.nan
        return [
            self.last_psf,
            self.last_total,
            since,
            self.smas[2],
            self.smas[3],
            self.smas[5],
            self.pc_sma[2],
            self.pc_sma[5],
            self.emas[2],
            self.emas[3],
            self.emas[5],
            self.pc_ema[2],
            self.pc_ema[5],
        ]

    def update(self, year: int, psf: float, total: float) -> None:
        self.last_year = year
        if math.isfinite(total):
            self.last_total = total
        if not math.isfinite(psf):
            return  # a sale without footage moves the clock but not the averages
        self.last_psf = psf
        self.hist.append(psf)
        if len(self.hist) > 5:
            del self.hist[0]
        for n in (2, 3, 5):
            new_sma = sma(self.hist, n)
            alpha = 2.0 / (n + 1)
            old_ema = self.emas[n]
            new_ema = psf if math.isnan(old_ema) else old_ema + alpha * (psf - old_ema)
            if n in (2, 5):
                self.pc_sma[n] = percent_change(new_sma, self.smas[n])
                self.pc_ema[n] = percent_change(new_ema, old_ema)
            self.smas[n] = new_sma
            self.emas[n] = new_ema


def _one_hot(series: pd.Series, prefix: str, cap: int) -> pd.DataFrame:
    """One-hot with a level cap; overflow levels collapse into "other"."""
    counts = series.value_counts()
    keep = sorted(counts.index[:cap])
    values = series.where(series.isin(keep), other="other")
    levels = keep + (["other"] if (values == "other").any() else [])
    out = {f"{prefix}_{lvl}": (values == lvl).astype(np.float64) for lvl in levels}
    return pd.DataFrame(out, index=series.index)


def base_features(panel: pd.DataFrame, level_cap: int = 50) -> FeatureMatrix:
    """Raw attributes + usage shares + strictly-past sale history."""
    panel = sorted_panel(panel)
    out = panel[["bbl", "year"]].copy()
    formulas: dict[str, str] = {}

    out["Year"] = out["year"].astype(np.float64)
    formulas["Year"] = "raw:year"
    for col in RAW_NUMERIC_COLS:
        out[col] = pd.to_numeric(panel[col], errors="coerce").astype(np.float64)
        formulas[col] = "raw"
    out["zip_num"] = pd.to_numeric(panel["zip"], errors="coerce").astype(np.float64)
    formulas["zip_num"] = "raw:zip"

    built = out["year_built"]
    age = out["year"] - built
    out["Building_Age"] = np.where((built > 0) & (age >= 0), age, np.nan)
    formulas["Building_Age"] = "year - year_built"

    total = out["area_total"]
    out["has_building_area"] = (total > 0).astype(np.float64)
    formulas["has_building_area"] = "1{area_total > 0}"
    for share, part in SHARE_COLS.items():
        out[share] = np.where(total > 0, out[part] / total, np.nan)
        formulas[share] = f"{part} / area_total"

    cats = panel["building_class"].map(category_of)
    cat_dummies = _one_hot(cats, "Category", level_cap)
    boro_dummies = _one_hot(panel["borough"].astype(str), "Borough", level_cap)
    for frame in (cat_dummies, boro_dummies):
        for c in frame.columns:
            out[c] = frame[c]
            formulas[c] = "one-hot"

    # carry-forward history, one sequential pass per parcel
    hist_values = np.empty((len(panel), len(HISTORY_COLS)), dtype=np.float64)
    bbls = panel["bbl"].to_numpy()
    years = panel["year"].to_numpy()
    solds = panel["sold"].to_numpy()
    psfs = panel["sale_psf"].to_numpy(dtype=np.float64)
    totals = panel["sale_price_total"].to_numpy(dtype=np.float64)
    state: _SaleHistory | None = None
    current = None
    for i in range(len(panel)):
        if bbls[i] != current:
            current = bbls[i]
            state = _SaleHistory()
        hist_values[i] = state.snapshot(int(years[i]))
        if solds[i] == 1:
            state.update(int(years[i]), float(psfs[i]), float(totals[i]))
    for j, col in enumerate(HISTORY_COLS):
        out[col] = hist_values[:, j]
        formulas[col] = "sale-history"

    feature_columns = [c for c in out.columns if c not in ("bbl", "year")]
    return FeatureMatrix(kind="base", frame=out, feature_columns=feature_columns, formulas=formulas)


# ---------------------------------------------------------------------------
# zone features


def _previous_year_map(years: list[int]) -> dict[int, int | None]:
    ordered = sorted(set(int(y) for y in years))
    prev: dict[int, int | None] = {}
    for i, y in enumerate(ordered):
        prev[y] = ordered[i - 1] if i > 0 else None
    return prev


def zone_features(base: FeatureMatrix, panel: pd.DataFrame) -> FeatureMatrix:
    """Append per-(zip, year) means of the sale-history features, the
    prior-year zip sale count with its percent change, and the bt_only
    parallel set. Aggregates at year t only see data through t-1 because
    the underlying history features already do."""
    panel = sorted_panel(panel)
    frame = base.frame.copy()
    formulas = dict(base.formulas)
    zips = panel["zip"].astype(str)
    cats = panel["building_class"].map(category_of)
    years = panel["year"]

    group_zy = [zips, years]
    group_zcy = [zips, cats, years]
    for col in HISTORY_COLS:
        frame[f"{col}_zip_average"] = frame.groupby(group_zy)[col].transform("mean")
        formulas[f"{col}_zip_average"] = f"mean({col}) by (zip, year)"
        frame[f"{col}_bt_only"] = frame.groupby(group_zcy)[col].transform("mean")
        formulas[f"{col}_bt_only"] = f"mean({col}) by (zip, category, year)"

    # prior-year sale count per zip; gap years use the latest prior year
    counts = panel.groupby([zips.rename("zip"), years.rename("year")])["sold"].sum()
    table = counts.unstack(fill_value=0)
    all_years = sorted(panel["year"].unique())
    table = table.reindex(columns=all_years, fill_value=0)
    prev = _previous_year_map(all_years)

    zip_order = {z: i for i, z in enumerate(table.index)}
    year_count = table.to_numpy(dtype=np.float64)
    zi = zips.map(zip_order).to_numpy()
    sold_prev = np.full(len(panel), np.nan)
    sold_prev2 = np.full(len(panel), np.nan)
    for y in all_years:
        rows = (years == y).to_numpy()
        p1 = prev[y]
        if p1 is None:
            continue
        sold_prev[rows] = year_count[zi[rows], all_years.index(p1)]
        p2 = prev[p1]
        if p2 is not None:
            sold_prev2[rows] = year_count[zi[rows], all_years.index(p2)]
    frame["Last_Year_Zip_Sold"] = sold_prev
    formulas["Last_Year_Zip_Sold"] = "zip sales in prior year"
    frame["Last_Year_Zip_Sold_percent_change"] = _pc_array(sold_prev, sold_prev2)
    formulas["Last_Year_Zip_Sold_percent_change"] = "pc of prior-year zip sales"

    feature_columns = base.feature_columns + [
        c for c in frame.columns if c not in base.frame.columns
    ]
    return FeatureMatrix(kind="zone", frame=frame, feature_columns=feature_columns, formulas=formulas)


# ---------------------------------------------------------------------------
# spatial lag features


def _node_matrix(values, node_of_row, ypos, n_nodes, n_years) -> np.ndarray:
    M = np.full((n_nodes, n_years), np.nan)
    ok = node_of_row >= 0
    M[node_of_row[ok], ypos[ok]] = values[ok]
    return M


def _masked_lag(W: sparse.csr_matrix, col: np.ndarray) -> np.ndarray:
    """Weighted mean over neighbors, weights renormalized to the observed
    (non-missing) neighbors; NaN where nothing is observed."""
    mask = np.isfinite(col).astype(np.float64)
    vals = np.where(np.isfinite(col), col, 0.0)
    num = W @ (vals * mask)
    den = W @ mask
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / den
    return np.where(den > 0, out, np.nan)


def spatial_lag_features(
    base: FeatureMatrix, panel: pd.DataFrame, graph: NeighborGraph
) -> FeatureMatrix:
    """Append radius aggregates over the neighbor graph.

    Counter features for row year t ("..._In_Year") aggregate neighbor
    sales in the previous panel year; value lags (_basic / _dist) average
    the neighbors' year-t history and usage-share features, which are
    themselves strictly past. Rows without coordinates get all-missing
    spatial columns.
    """
    panel = sorted_panel(panel)
    frame = base.frame.copy()
    formulas = dict(base.formulas)

    nodes = sorted(graph.neighbors)
    node_id = {b: i for i, b in enumerate(nodes)}
    n_nodes = len(nodes)
    all_years = sorted(int(y) for y in panel["year"].unique())
    n_years = len(all_years)
    ypos_of = {y: i for i, y in enumerate(all_years)}

    node_of_row = panel["bbl"].map(lambda b: node_id.get(b, -1)).to_numpy(dtype=np.int64)
    ypos = panel["year"].map(ypos_of).to_numpy(dtype=np.int64)

    rows_i, cols_j, dists = [], [], []
    for src, lst in graph.neighbors.items():
        i = node_id[src]
        for dst, dv in lst:
            rows_i.append(i)
            cols_j.append(node_id[dst])
            dists.append(dv)
    rows_i = np.array(rows_i, dtype=np.int64)
    cols_j = np.array(cols_j, dtype=np.int64)
    dists = np.array(dists, dtype=np.float64)
    A = sparse.csr_matrix(
        (np.ones(len(rows_i)), (rows_i, cols_j)), shape=(n_nodes, n_nodes)
    )
    inv_dist = 1.0 / np.maximum(dists, IDW_MIN_DISTANCE_M)
    Wd = sparse.csr_matrix((inv_dist, (rows_i, cols_j)), shape=(n_nodes, n_nodes))
    degree = np.asarray(A.sum(axis=1)).ravel()

    def row_values(colname, source=None):
        src = frame[colname] if source is None else source
        return src.to_numpy(dtype=np.float64)

    sold = _node_matrix(panel["sold"].to_numpy(np.float64), node_of_row, ypos, n_nodes, n_years)
    sold = np.where(np.isfinite(sold), sold, 0.0)
    units_res = np.nan_to_num(
        _node_matrix(row_values("units_res"), node_of_row, ypos, n_nodes, n_years)
    )
    units_total = np.nan_to_num(
        _node_matrix(row_values("units_total"), node_of_row, ypos, n_nodes, n_years)
    )
    area = np.nan_to_num(
        _node_matrix(row_values("area_total"), node_of_row, ypos, n_nodes, n_years)
    )

    counters = {
        "Radius_Total_Sold_In_Year": sold,
        "Radius_Res_Units_Sold_In_Year": units_res * sold,
        "Radius_All_Units_Sold_In_Year": units_total * sold,
        "Radius_SF_Sold_In_Year": area * sold,
    }
    series: dict[str, np.ndarray] = {}
    for name, node_vals in counters.items():
        M = np.full((n_nodes, n_years), np.nan)
        for p in range(1, n_years):
            M[:, p] = A @ node_vals[:, p - 1]
        series[name] = M

    ysls = _node_matrix(row_values("Years_Since_Last_Sale"), node_of_row, ypos, n_nodes, n_years)
    M = np.full((n_nodes, n_years), np.nan)
    for p in range(n_years):
        M[:, p] = _masked_lag(A, ysls[:, p])
    series["Radius_Average_Years_Since_Last_Sale"] = M

    base_series = list(series)
    for name in base_series:
        M = series[name]
        sum2 = np.full_like(M, np.nan)
        sum2[:, 1:] = M[:, 1:] + M[:, :-1]
        series[f"{name}_sum_over_2_years"] = sum2
    for name in list(series):
        M = series[name]
        pc = np.full_like(M, np.nan)
        pc[:, 1:] = _pc_array(M[:, 1:], M[:, :-1])
        series[f"{name}_percent_change"] = pc

    pct = np.full((n_nodes, n_years), np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        for p in range(1, n_years):
            pct[:, p] = np.where(degree > 0, series["Radius_Total_Sold_In_Year"][:, p] / degree, np.nan)
    series["Percent_Neighbors_Sold"] = pct

    for col in LAGGED_VALUE_COLS:
        node_vals = _node_matrix(row_values(col), node_of_row, ypos, n_nodes, n_years)
        for suffix, W in (("_basic", A), ("_dist", Wd)):
            M = np.full((n_nodes, n_years), np.nan)
            for p in range(n_years):
                M[:, p] = _masked_lag(W, node_vals[:, p])
            series[f"{col}{suffix}"] = M
            pc = np.full_like(M, np.nan)
            pc[:, 1:] = _pc_array(M[:, 1:], M[:, :-1])
            series[f"{col}{suffix}_perc_change"] = pc

    valid = node_of_row >= 0
    for name, M in series.items():
        col = np.full(len(panel), np.nan)
        col[valid] = M[node_of_row[valid], ypos[valid]]
        frame[name] = col
        formulas[name] = "radius lag"

    feature_columns = base.feature_columns + list(series)
    return FeatureMatrix(
        kind="spatial", frame=frame, feature_columns=feature_columns, formulas=formulas
    )
