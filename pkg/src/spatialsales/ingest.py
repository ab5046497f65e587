"""Parcel and sales ingestion: key construction, alias resolution, the
panel join, and the global filters.

Tabular data rides in pandas DataFrames with a fixed canonical schema;
delimited inputs with foreign headers are adapted through a JSON
column-mapping sidecar so real exports and synthetic data share one
reader. The panel is always sorted by (bbl, year).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

BOROUGH_RANGE = (1, 5)

INCLUDED_CATEGORIES = frozenset("ABCDFGLO")
MAX_BUILDINGS_PER_LOT = 2

STAGE2_CATEGORIES = frozenset("CD")
STAGE2_BOROUGHS = frozenset({1, 2, 3})  # MN, BX, BK under the default coding

AREA_COLUMNS = [
    "area_total",
    "area_com",
    "area_res",
    "area_office",
    "area_retail",
    "area_garage",
    "area_storage",
    "area_factory",
    "area_other",
]

PARCEL_COLUMNS = [
    "bbl",
    "year",
    "lat",
    "lon",
    "building_class",
    "borough",
    "zip",
    "num_bldgs",
    *AREA_COLUMNS,
    "assess_total",
    "year_built",
    "floors",
    "units_res",
    "units_total",
]

SALE_COLUMNS = ["bbl", "sale_year", "sale_price_total", "gross_square_feet"]

PANEL_COLUMNS = PARCEL_COLUMNS + ["sold", "sale_price_total", "sale_psf", "has_coords"]


class InvalidKeyError(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class BblKey:
    """Borough-Block-Lot tax-lot key; canonical form "{borough}_{block}_{lot}"."""

    borough: int
    block: int
    lot: int

    def __str__(self) -> str:
        return f"{self.borough}_{self.block}_{self.lot}"

    @classmethod
    def parse(cls, text: str) -> "BblKey":
        parts = str(text).split("_")
        if len(parts) != 3:
            raise InvalidKeyError(f"malformed bbl {text!r}")
        try:
            borough, block, lot = (int(p) for p in parts)
        except ValueError as exc:
            raise InvalidKeyError(f"malformed bbl {text!r}") from exc
        return make_bbl(borough, block, lot)


def make_bbl(borough: int, block: int, lot: int) -> BblKey:
    if not (BOROUGH_RANGE[0] <= borough <= BOROUGH_RANGE[1]):
        raise InvalidKeyError(f"borough code {borough} outside {BOROUGH_RANGE}")
    if block < 0 or lot < 0:
        raise InvalidKeyError(f"negative block/lot in ({borough}, {block}, {lot})")
    return BblKey(int(borough), int(block), int(lot))


def category_of(building_class) -> str:
    """Building category = leading letter of the class code ("C4" -> "C")."""
    s = str(building_class)
    return s[0].upper() if s else ""


# ---------------------------------------------------------------------------
# readers


def _read_delimited(path, colmap_path=None) -> pd.DataFrame:
    path = str(path)
    sep = "\t" if path.endswith((".tsv", ".tab")) else ","
    df = pd.read_csv(path, sep=sep, float_precision="round_trip")
    if colmap_path is not None:
        with open(str(colmap_path)) as fh:
            mapping = json.load(fh)  # canonical name -> file header
        rename = {}
        for canonical, header in mapping.items():
            if header not in df.columns:
                raise SchemaError(f"mapped header {header!r} not in {path}")
            rename[header] = canonical
        df = df.rename(columns=rename)
    return df


def _require(df: pd.DataFrame, columns, what: str) -> None:
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise SchemaError(f"{what} input missing columns: {missing}")


def read_parcels(path, colmap_path=None) -> pd.DataFrame:
    df = _read_delimited(path, colmap_path)
    _require(df, PARCEL_COLUMNS, "parcel")
    df = df[PARCEL_COLUMNS].copy()
    df["bbl"] = df["bbl"].astype(str)
    df["zip"] = df["zip"].astype(str)
    for col in ("year", "borough", "num_bldgs"):
        df[col] = pd.to_numeric(df[col]).astype(np.int64)
    for col in ("lat", "lon", *AREA_COLUMNS, "assess_total"):
        df[col] = pd.to_numeric(df[col], errors="coerce").astype(np.float64)
    # out-of-range coordinates are as useless as absent ones
    bad = (df["lat"].abs() > 90) | (df["lon"].abs() > 180)
    df.loc[bad, ["lat", "lon"]] = np.nan
    neg = df[AREA_COLUMNS].lt(0).any(axis=1)
    if neg.any():
        raise SchemaError(f"{int(neg.sum())} parcel rows carry negative building areas")
    return df


def read_sales(path, colmap_path=None) -> pd.DataFrame:
    df = _read_delimited(path, colmap_path)
    _require(df, SALE_COLUMNS, "sales")
    df = df[SALE_COLUMNS].copy()
    df["bbl"] = df["bbl"].astype(str)
    df["sale_year"] = pd.to_numeric(df["sale_year"]).astype(np.int64)
    for col in ("sale_price_total", "gross_square_feet"):
        df[col] = pd.to_numeric(df[col], errors="coerce").astype(np.float64)
    if (df["sale_price_total"] < 0).any():
        raise SchemaError("negative sale prices in sales input")
    return df


def read_aliases(path) -> dict[str, str]:
    """Two-column CSV (reported_bbl, canonical_bbl) -> functional mapping."""
    df = pd.read_csv(str(path), dtype=str)
    _require(df, ["reported_bbl", "canonical_bbl"], "alias")
    if df["reported_bbl"].duplicated().any():
        dupes = df.loc[df["reported_bbl"].duplicated(), "reported_bbl"].tolist()
        raise SchemaError(f"alias table maps reported keys twice: {dupes[:5]}")
    return dict(zip(df["reported_bbl"], df["canonical_bbl"]))


def write_aliases(aliases: dict[str, str], path) -> None:
    pd.DataFrame(
        {"reported_bbl": list(aliases.keys()), "canonical_bbl": list(aliases.values())}
    ).to_csv(str(path), index=False)


# ---------------------------------------------------------------------------
# pipeline operations


def resolve_sales(sales: pd.DataFrame, aliases: dict[str, str]) -> pd.DataFrame:
    """Replace reported keys by canonical keys where an alias exists;
    everything else passes through unchanged."""
    out = sales.copy()
    if aliases:
        out["bbl"] = out["bbl"].map(lambda k: aliases.get(k, k))
    return out


@dataclass
class JoinStats:
    parcel_years: int
    multi_sale_dropped: int
    sales_total: int
    sales_matched: int

    @property
    def unmatched_rate(self) -> float:
        if self.sales_total == 0:
            return 0.0
        return 1.0 - self.sales_matched / self.sales_total


def join_panel(parcels: pd.DataFrame, sales: pd.DataFrame) -> tuple[pd.DataFrame, JoinStats]:
    """Left join of sales onto parcel-years.

    Parcel-years with two or more sales are dropped entirely; each
    remaining row is sold iff exactly one sale joined. sale_psf is
    price / gross square feet when the footage is positive, else missing.
    Rows without usable coordinates are retained but flagged.
    """
    counts = sales.groupby(["bbl", "sale_year"]).size()
    multi = set(counts[counts >= 2].index)
    singles = sales[~sales.set_index(["bbl", "sale_year"]).index.isin(multi)]

    parcel_keys = set(zip(parcels["bbl"], parcels["year"]))
    matched = sum((b, y) in parcel_keys for b, y in zip(sales["bbl"], sales["sale_year"]))

    panel = parcels.merge(
        singles.rename(columns={"sale_year": "year"}),
        on=["bbl", "year"],
        how="left",
        suffixes=("", "_sale"),
    )
    drop = panel.set_index(["bbl", "year"]).index.isin(multi)
    panel = panel[~drop].copy()

    panel["sold"] = panel["sale_price_total"].notna().astype(np.int8)
    gsf = panel["gross_square_feet"]
    panel["sale_psf"] = np.where(
        (panel["sold"] == 1) & (gsf > 0), panel["sale_price_total"] / gsf, np.nan
    )
    panel["has_coords"] = (panel["lat"].notna() & panel["lon"].notna()).astype(np.int8)
    panel = panel.drop(columns=["gross_square_feet"])
    panel = panel.sort_values(["bbl", "year"], kind="mergesort").reset_index(drop=True)

    stats = JoinStats(
        parcel_years=len(parcels),
        multi_sale_dropped=int(drop.sum()),
        sales_total=len(sales),
        sales_matched=int(matched),
    )
    return panel[PANEL_COLUMNS], stats


@dataclass
class FilterStats:
    rows_in: int
    rows_out: int

    @property
    def retention(self) -> float:
        return self.rows_out / self.rows_in if self.rows_in else 1.0


def apply_global_filters(
    panel: pd.DataFrame,
    categories=INCLUDED_CATEGORIES,
    max_bldgs: int = MAX_BUILDINGS_PER_LOT,
) -> tuple[pd.DataFrame, FilterStats]:
    """Keep only market-relevant building categories and small lots
    (num_bldgs <= max_bldgs, boundary inclusive). Idempotent."""
    cats = panel["building_class"].map(category_of)
    keep = cats.isin(set(categories)) & (panel["num_bldgs"] <= max_bldgs)
    out = panel[keep].reset_index(drop=True)
    return out, FilterStats(rows_in=len(panel), rows_out=len(out))


def subset_stage2(
    panel: pd.DataFrame,
    categories=STAGE2_CATEGORIES,
    boroughs=STAGE2_BOROUGHS,
) -> pd.DataFrame:
    """The refined second-stage slice: selected building categories in
    selected boroughs (borough coding is configurable)."""
    cats = panel["building_class"].map(category_of)
    keep = cats.isin(set(categories)) & panel["borough"].isin(set(boroughs))
    return panel[keep].reset_index(drop=True)


def truncate_outcomes(panel: pd.DataFrame, year: int) -> pd.DataFrame:
    """Censor the panel as it would have looked before ``year`` resolved:
    rows after ``year`` vanish, and sale outcomes in ``year`` itself are
    blanked. Used to prove temporal features never read the future."""
    out = panel[panel["year"] <= year].copy()
    now = out["year"] == year
    out.loc[now, "sold"] = 0
    out.loc[now, ["sale_price_total", "sale_psf"]] = np.nan
    return out.reset_index(drop=True)


def write_panel(panel: pd.DataFrame, path) -> None:
    panel[PANEL_COLUMNS].to_csv(str(path), index=False)


def read_panel(path) -> pd.DataFrame:
    df = pd.read_csv(str(path), float_precision="round_trip")
    _require(df, PANEL_COLUMNS, "panel")
    df["bbl"] = df["bbl"].astype(str)
    df["zip"] = df["zip"].astype(str)
    for col in ("year", "borough", "num_bldgs", "sold", "has_coords"):
        df[col] = pd.to_numeric(df[col]).astype(np.int64)
    df["sold"] = df["sold"].astype(np.int8)
    df["has_coords"] = df["has_coords"].astype(np.int8)
    return df[PANEL_COLUMNS]
