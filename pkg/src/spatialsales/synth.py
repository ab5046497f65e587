"""Synthetic parcel/sales panel with planted spatial structure.

The generator plants exactly the two effects the pipeline is supposed to
recover: a smooth latent price surface (price per square foot varies by
location) and lag-1 sale contagion (a parcel is likelier to sell when
its radius-d neighbors sold last year). Closed-form per-row sale
probabilities are returned as diagnostics so tests can compare empirical
rates against the generator's own arithmetic. Deterministic given seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .spatial_index import LocalProjection, ProjectedPoint, neighbors_grid

INCLUDED_PROFILES = {
    # letter: (mean log area, usage share recipe)
    "A": (7.4, {"area_res": 1.0}),
    "B": (7.8, {"area_res": 1.0}),
    "C": (8.6, {"area_res": 0.9, "area_retail": 0.1}),
    "D": (9.6, {"area_res": 0.85, "area_com": 0.15}),
    "F": (8.9, {"area_factory": 0.8, "area_storage": 0.2}),
    "G": (7.6, {"area_garage": 1.0}),
    "L": (9.0, {"area_office": 0.5, "area_storage": 0.5}),
    "O": (9.3, {"area_office": 0.85, "area_retail": 0.15}),
}
EXCLUDED_LETTERS = ["H", "K", "V"]

AREA_PARTS = [
    "area_com",
    "area_res",
    "area_office",
    "area_retail",
    "area_garage",
    "area_storage",
    "area_factory",
    "area_other",
]


@dataclass
class SynthConfig:
    n_points: int = 1500
    year_start: int = 2010
    n_years: int = 8
    extent_km: float = 12.0
    radius_m: float = 500.0
    base_sale_rate: float = 0.06
    contagion: float = 0.35
    alias_fraction: float = 0.0
    zero_price_fraction: float = 0.02
    multi_sale_fraction: float = 0.01
    missing_coord_fraction: float = 0.0
    excluded_category_fraction: float = 0.08
    multi_building_fraction: float = 0.03
    surface_bumps: int = 6
    surface_amplitude: float = 250.0
    base_psf: float = 350.0
    noise_sd: float = 40.0
    year_step: float = 8.0  # additive market drift per year, $/sf
    size_effect: float = 90.0
    n_zips: int = 16
    center_lat: float = 40.71
    center_lon: float = -73.95
    density_profile: str = "uniform"  # or "split": dense west, sparse east


@dataclass
class SynthCity:
    parcels: pd.DataFrame
    sales: pd.DataFrame
    aliases: dict[str, str]
    diagnostics: pd.DataFrame  # per (bbl, year): sale_prob, frac_prev, surface


def _positions(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    extent = cfg.extent_km * 1000.0
    n = cfg.n_points
    if cfg.density_profile == "split":
        n_dense = int(round(0.7 * n))
        west = rng.uniform([0, 0], [0.2 * extent, extent], size=(n_dense, 2))
        east = rng.uniform([0.25 * extent, 0], [extent, extent], size=(n - n_dense, 2))
        return np.vstack([west, east])
    return rng.uniform(0.0, extent, size=(n, 2))


def _surface(cfg: SynthConfig, xy: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    extent = cfg.extent_km * 1000.0
    centers = rng.uniform(0.0, extent, size=(cfg.surface_bumps, 2))
    widths = rng.uniform(0.12, 0.3, size=cfg.surface_bumps) * extent
    signs = rng.choice([-1.0, 1.0], size=cfg.surface_bumps)
    out = np.zeros(len(xy))
    for c, w, s in zip(centers, widths, signs):
        d2 = ((xy - c) ** 2).sum(axis=1)
        out += s * np.exp(-d2 / (2 * w * w))
    out += 0.4 * (xy[:, 0] / extent - 0.5)  # gentle east-west gradient
    return cfg.base_psf + cfg.surface_amplitude * out


def synth_city(cfg: SynthConfig, seed: int) -> SynthCity:
    rng = np.random.default_rng(seed)
    n = cfg.n_points
    years = list(range(cfg.year_start, cfg.year_start + cfg.n_years))
    empty_cols = {
        "parcels": pd.DataFrame(columns=["bbl"]),
        "sales": pd.DataFrame(columns=["bbl"]),
    }
    if n == 0:
        return SynthCity(
            parcels=empty_cols["parcels"],
            sales=empty_cols["sales"],
            aliases={},
            diagnostics=pd.DataFrame(columns=["bbl", "year"]),
        )

    extent = cfg.extent_km * 1000.0
    xy = _positions(cfg, rng)

    # identity: borough by west-east band, block by coarse grid, lot within block
    borough = np.clip((xy[:, 0] / extent * 5).astype(int) + 1, 1, 5)
    block = (xy[:, 1] // 400).astype(int) * 200 + (xy[:, 0] // 400).astype(int) + 1
    lot = np.zeros(n, dtype=int)
    seen: dict[tuple[int, int], int] = {}
    for i, (bo, bl) in enumerate(zip(borough, block)):
        seen[(bo, bl)] = seen.get((bo, bl), 0) + 1
        lot[i] = seen[(bo, bl)]
    bbl = np.array([f"{bo}_{bl}_{lo}" for bo, bl, lo in zip(borough, block, lot)])

    zip_side = max(1, int(math.ceil(math.sqrt(cfg.n_zips))))
    zr = np.minimum((xy[:, 1] / extent * zip_side).astype(int), zip_side - 1)
    zc = np.minimum((xy[:, 0] / extent * zip_side).astype(int), zip_side - 1)
    zips = (10000 + zr * zip_side + zc).astype(str)

    # building categories and attributes
    n_excl = int(round(cfg.excluded_category_fraction * n))
    letters = np.array(
        list(rng.choice(list(INCLUDED_PROFILES), size=n - n_excl))
        + list(rng.choice(EXCLUDED_LETTERS, size=n_excl))
    )
    rng.shuffle(letters)
    building_class = np.array([f"{c}{rng.integers(0, 10)}" for c in letters])

    area_total = np.zeros(n)
    parts = {c: np.zeros(n) for c in AREA_PARTS}
    for letter, (mean_log, recipe) in INCLUDED_PROFILES.items():
        m = letters == letter
        if not m.any():
            continue
        area_total[m] = np.exp(rng.normal(mean_log, 0.5, size=int(m.sum())))
        for part, share in recipe.items():
            parts[part][m] += share * area_total[m]
    excl = ~np.isin(letters, list(INCLUDED_PROFILES))
    area_total[excl] = np.exp(rng.normal(8.0, 0.6, size=int(excl.sum())))
    parts["area_other"][excl] += area_total[excl]
    area_total = np.round(area_total, 0)
    for c in parts:
        parts[c] = np.round(parts[c], 0)

    units_res = np.round(parts["area_res"] / 850.0).astype(int)
    units_total = units_res + np.round((area_total - parts["area_res"]) / 2000.0).astype(int)
    floors = np.maximum(1, np.round(area_total / 4000.0)).astype(int)
    year_built = rng.integers(1900, 2009, size=n)
    assess_total = np.round(area_total * rng.uniform(40, 120, size=n), 0)

    num_bldgs = np.ones(n, dtype=int)
    many = rng.random(n) < cfg.multi_building_fraction
    num_bldgs[many] = rng.integers(3, 6, size=int(many.sum()))
    two = (~many) & (rng.random(n) < 0.1)
    num_bldgs[two] = 2

    proj = LocalProjection(cfg.center_lat, cfg.center_lon)
    lat, lon = proj.to_latlon(xy[:, 0] - extent / 2, xy[:, 1] - extent / 2)
    missing = rng.random(n) < cfg.missing_coord_fraction
    lat = np.where(missing, np.nan, lat)
    lon = np.where(missing, np.nan, lon)

    # planted structure: neighbor graph once, then year-by-year contagion
    pts = [
        ProjectedPoint(b, float(x), float(y))
        for b, (x, y), miss in zip(bbl, xy, missing)
        if not miss
    ]
    graph = neighbors_grid(pts, cfg.radius_m)
    index = {b: i for i, b in enumerate(bbl)}
    nbr_idx = [np.array([], dtype=int)] * n
    for b, lst in graph.neighbors.items():
        nbr_idx[index[b]] = np.array([index[other] for other, _ in lst], dtype=int)

    surface = _surface(cfg, xy, rng)
    la = np.log(np.maximum(area_total, 1.0))
    la = (la - la.mean()) / (la.std() or 1.0)
    size_term = cfg.size_effect * (la * la - 1.0)  # nonlinear in building size

    sold = np.zeros((cfg.n_years, n), dtype=np.int8)
    prob = np.zeros((cfg.n_years, n))
    frac_prev = np.zeros((cfg.n_years, n))
    for t in range(cfg.n_years):
        if t > 0:
            prev = sold[t - 1]
            for i in range(n):
                nb = nbr_idx[i]
                if len(nb):
                    frac_prev[t, i] = prev[nb].mean()
        p = np.clip(cfg.base_sale_rate + cfg.contagion * frac_prev[t], 0.005, 0.9)
        prob[t] = p
        sold[t] = (rng.random(n) < p).astype(np.int8)

    psf = (
        surface[None, :]
        + size_term[None, :]
        + cfg.year_step * np.arange(cfg.n_years)[:, None]
        + rng.normal(0.0, cfg.noise_sd, size=(cfg.n_years, n))
    )
    psf = np.maximum(psf, 5.0)

    # assemble the long panel of parcel attributes
    rep = lambda a: np.tile(a, cfg.n_years)
    parcels = pd.DataFrame(
        {
            "bbl": rep(bbl),
            "year": np.repeat(years, n),
            "lat": rep(lat),
            "lon": rep(lon),
            "building_class": rep(building_class),
            "borough": rep(borough),
            "zip": rep(zips),
            "num_bldgs": rep(num_bldgs),
            "area_total": rep(area_total),
            "area_com": rep(parts["area_com"]),
            "area_res": rep(parts["area_res"]),
            "area_office": rep(parts["area_office"]),
            "area_retail": rep(parts["area_retail"]),
            "area_garage": rep(parts["area_garage"]),
            "area_storage": rep(parts["area_storage"]),
            "area_factory": rep(parts["area_factory"]),
            "area_other": rep(parts["area_other"]),
            "assess_total": rep(assess_total),
            "year_built": rep(year_built),
            "floors": rep(floors),
            "units_res": rep(units_res),
            "units_total": rep(units_total),
        }
    )

    # condo-style aliases: a slice of parcels reports a shifted lot number
    aliased = np.flatnonzero(rng.random(n) < cfg.alias_fraction)
    aliases = {}
    reported = [str(b) for b in bbl]  # plain list: numpy would truncate longer keys
    for i in aliased:
        rep_key = f"{borough[i]}_{block[i]}_{7500 + lot[i]}"
        aliases[rep_key] = str(bbl[i])
        reported[i] = rep_key

    sale_rows = []
    for t, year in enumerate(years):
        for i in np.flatnonzero(sold[t]):
            gsf = float(area_total[i])
            price = 0.0 if rng.random() < cfg.zero_price_fraction else float(psf[t, i] * gsf)
            sale_rows.append((reported[i], year, round(price, 2), gsf))
            if rng.random() < cfg.multi_sale_fraction:
                sale_rows.append((reported[i], year, round(price * 0.5, 2), gsf))
    sales = pd.DataFrame(sale_rows, columns=["bbl", "sale_year", "sale_price_total", "gross_square_feet"])

    diagnostics = pd.DataFrame(
        {
            "bbl": rep(bbl),
            "year": np.repeat(years, n),
            "sale_prob": prob.reshape(-1),
            "frac_neighbors_sold_prev": frac_prev.reshape(-1),
            "surface_psf": rep(surface),
            "sold": sold.reshape(-1),
        }
    )
    return SynthCity(parcels=parcels, sales=sales, aliases=aliases, diagnostics=diagnostics)
