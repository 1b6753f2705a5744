"""Reproducible network realizations.

A realization is built in three steps, each a pure function of the
configuration and the seed:

  build_layout   -> hexagonal macro grid with wrap-around, small cells, locations
  sample_gains   -> per (location, base station) linear power gains
  build_traffic  -> per-location arrival weights (homogeneous or hot-spot)

``build_scenario`` bundles the three into an immutable ``Scenario``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .errors import ConfigError

SUPPORTED_CLUSTER_SIZES = (1, 7, 19)

# Path-loss model validity floors: distances below are clamped to the floor.
MACRO_PL_FLOOR_M = 35.0
SMALL_PL_FLOOR_M = 10.0

# Azimuth of the first small cell on its circle (radians, measured from east).
# Small cell k of B sits at angle SC_AZIMUTH_OFFSET + 2*pi*k/B.
SC_AZIMUTH_OFFSET = 0.0

# Axial coordinates of the hexagonal clusters we support (center + rings).
_CLUSTER_AXIAL = {
    1: [(0, 0)],
    7: [(0, 0), (1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)],
    19: [(0, 0), (1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1),
         (2, 0), (1, 1), (0, 2), (-1, 2), (-2, 2), (-2, 1),
         (-2, 0), (-1, -1), (0, -2), (1, -2), (2, -2), (2, -1)],
}

# Axial shift that tiles the plane with copies of each cluster.
_CLUSTER_SHIFT = {1: (1, 0), 7: (2, 1), 19: (3, 2)}


@dataclass(frozen=True)
class TrafficSpec:
    """Spatial traffic profile descriptor.

    ``homogeneous`` puts equal weight on every location.  ``hotspot`` puts
    ``weight_ratio`` times more weight on locations inside a square of side
    ``side_m`` anchored at the position of small-cell slot ``cell_index`` of
    each macro (the anchor is geometric, so it exists even when the layout
    has no small cells); weights are renormalized to sum to one.
    """

    kind: str = "homogeneous"
    side_m: float = 150.0
    weight_ratio: float = 5.0
    cell_index: int = 0

    def __post_init__(self):
        if self.kind not in ("homogeneous", "hotspot"):
            raise ConfigError(f"unknown traffic kind {self.kind!r}")
        if self.side_m <= 0:
            raise ConfigError("hotspot side_m must be positive")
        if self.weight_ratio <= 0:
            raise ConfigError("hotspot weight_ratio must be positive")
        if self.cell_index < 0:
            raise ConfigError("hotspot cell_index must be >= 0")


@dataclass(frozen=True)
class ScenarioConfig:
    """Declarative description of one network realization family.

    Distances in meters, powers in dBm, bandwidth in Hz, file size in bits.
    """

    macro_count: int = 7
    small_cells_per_macro: int = 4
    locations_per_cell: int = 100
    inter_site_distance: float = 500.0
    sc_distance_from_center: float = 230.0
    shadowing_std: float = 8.0
    penetration_loss: float = 20.0
    antenna_gain_ue: float = 0.0
    noise_psd: float = -174.0
    subchannel_bandwidth: float = 180e3
    total_subchannels_per_macro: int = 100
    reuse_factor: int = 3
    p_macro: float = 46.0
    p_small: float = 30.0
    mean_file_size: float = 1e6
    rho_bar: float = 0.95
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    seed: int = 0

    def __post_init__(self):
        if self.macro_count not in SUPPORTED_CLUSTER_SIZES:
            raise ConfigError(
                f"macro_count must be one of {SUPPORTED_CLUSTER_SIZES} "
                f"(wrap-around requires a hexagonal cluster), got {self.macro_count}")
        if self.small_cells_per_macro < 0:
            raise ConfigError("small_cells_per_macro must be >= 0")
        if self.locations_per_cell <= 0:
            raise ConfigError("locations_per_cell must be positive")
        for name in ("inter_site_distance", "sc_distance_from_center",
                     "subchannel_bandwidth", "mean_file_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.shadowing_std < 0:
            raise ConfigError("shadowing_std must be >= 0")
        if not 0 < self.rho_bar < 1:
            raise ConfigError("rho_bar must lie strictly in (0, 1)")
        if self.reuse_factor not in (1, 3):
            raise ConfigError("reuse_factor must be 1 or 3 (hex lattice colorings)")
        if self.total_subchannels_per_macro < 2:
            raise ConfigError("total_subchannels_per_macro must be >= 2")
        if self.small_cells_per_macro > 0 and self.sc_distance_from_center >= self.hex_radius:
            raise ConfigError(
                f"sc_distance_from_center={self.sc_distance_from_center} places small "
                f"cells outside the cell (circumradius {self.hex_radius:.3f})")

    @property
    def hex_radius(self) -> float:
        """Circumradius of a macro hexagon."""
        return self.inter_site_distance / math.sqrt(3.0)

    @property
    def noise_watts_per_channel(self) -> float:
        """Noise PSD integrated over one sub-channel bandwidth, in watts."""
        return 10.0 ** ((self.noise_psd - 30.0) / 10.0) * self.subchannel_bandwidth

    # ---- config file ingestion (strict, JSON-compatible) ----

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise ConfigError("scenario config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "traffic" in kwargs:
            traw = kwargs["traffic"]
            if not isinstance(traw, dict):
                raise ConfigError("traffic section must be a JSON object")
            tknown = {f.name for f in fields(TrafficSpec)}
            tunknown = set(traw) - tknown
            if tunknown:
                raise ConfigError(f"unknown traffic keys: {sorted(tunknown)}")
            kwargs["traffic"] = TrafficSpec(**traw)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "traffic":
                value = {tf.name: getattr(value, tf.name) for tf in fields(TrafficSpec)}
            out[f.name] = value
        return out

    def with_(self, **kwargs) -> "ScenarioConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class BaseStation:
    id: int
    kind: str  # "macro" | "small"
    position: tuple  # (x, y) meters
    home_macro: int
    color: int


@dataclass(frozen=True)
class Location:
    id: int
    position: tuple
    home_macro: int


@dataclass(frozen=True)
class Layout:
    """Geometry of one realization: base stations, locations, wrap metric."""

    base_stations: tuple
    locations: tuple
    wrap_vectors: np.ndarray   # (n_mirrors, 2) mirror displacements incl. identity
    hex_radius: float
    bs_xy: np.ndarray          # (n_bs, 2)
    bs_kind: np.ndarray        # (n_bs,) of "macro"/"small"
    bs_color: np.ndarray       # (n_bs,) int
    bs_home: np.ndarray        # (n_bs,) macro id
    loc_xy: np.ndarray         # (L, 2)
    loc_home: np.ndarray       # (L,) macro id
    distance_m: np.ndarray     # (L, n_bs) wrap distances

    @property
    def n_locations(self) -> int:
        return self.loc_xy.shape[0]

    @property
    def n_base_stations(self) -> int:
        return self.bs_xy.shape[0]

    def wrap_distance(self, p, q) -> float:
        """Minimum distance between two points over all mirror displacements."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        d = p[None, :] - (q[None, :] + self.wrap_vectors)
        return float(np.sqrt((d * d).sum(axis=1)).min())


@dataclass(frozen=True)
class GainTable:
    """Linear power gains per (location, physical base station)."""

    gain: np.ndarray     # (L, n_bs) linear
    gain_db: np.ndarray  # (L, n_bs)


@dataclass(frozen=True)
class TrafficProfile:
    alpha: np.ndarray          # (L,) weights summing to 1
    hot_mask: np.ndarray       # (L,) bool; all-False for homogeneous profiles


@dataclass(frozen=True)
class Scenario:
    """Immutable bundle: configuration, geometry, gains, traffic weights."""

    config: ScenarioConfig
    layout: Layout
    gains: GainTable
    traffic: TrafficProfile


def _axial_to_xy(a: int, b: int, d: float) -> np.ndarray:
    return np.array([d * (a + 0.5 * b), d * (math.sqrt(3.0) / 2.0) * b])


def _wrap_vectors(macro_count: int, d: float) -> np.ndarray:
    i, j = _CLUSTER_SHIFT[macro_count]
    s1 = _axial_to_xy(i, j, d)
    # second generator: first one rotated by 60 degrees, i.e. (a,b) -> (-b, a+b)
    s2 = _axial_to_xy(-j, i + j, d)
    out = [a * s1 + b * s2 for a in (-1, 0, 1) for b in (-1, 0, 1)]
    return np.array(out)


def _point_in_hex(p: np.ndarray, center: np.ndarray, inradius: float, margin: float) -> bool:
    rel = p - center
    for k in range(6):
        ang = k * math.pi / 3.0
        if rel[0] * math.cos(ang) + rel[1] * math.sin(ang) > inradius - margin:
            return False
    return True


def _hex_grid(center: np.ndarray, circumradius: float, inradius: float,
              count: int) -> np.ndarray:
    """Exactly ``count`` points of a square grid inside the hexagon.

    The pitch starts at the value matching the hexagon area and shrinks
    until enough grid points fall inside; the ``count`` points closest to
    the center are kept (ties broken by (y, x) order).  Deterministic.
    """
    area = 1.5 * math.sqrt(3.0) * circumradius ** 2
    pitch = math.sqrt(area / count)
    margin = 1e-9 * circumradius
    while True:
        n_side = int(math.ceil(2.0 * circumradius / pitch)) + 1
        offs = (np.arange(n_side) - (n_side - 1) / 2.0) * pitch
        xx, yy = np.meshgrid(offs, offs)
        pts = np.column_stack([xx.ravel(), yy.ravel()]) + center
        keep = np.array([_point_in_hex(p, center, inradius, margin) for p in pts])
        pts = pts[keep]
        if pts.shape[0] >= count:
            break
        pitch *= 0.97
    dist = np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1])
    order = np.lexsort((pts[:, 0], pts[:, 1], dist))
    return pts[order[:count]]


def build_layout(config: ScenarioConfig) -> Layout:
    """Hexagonal macro grid with wrap-around, small cells, location grid."""
    d = config.inter_site_distance
    circum = config.hex_radius
    inrad = d / 2.0
    axials = _CLUSTER_AXIAL[config.macro_count]
    wrap = _wrap_vectors(config.macro_count, d)

    stations: list[BaseStation] = []
    for m, (a, b) in enumerate(axials):
        pos = _axial_to_xy(a, b, d)
        color = (a - b) % config.reuse_factor
        stations.append(BaseStation(id=m, kind="macro", position=tuple(pos),
                                    home_macro=m, color=color))
    n_macro = len(stations)
    for m, (a, b) in enumerate(axials):
        mpos = _axial_to_xy(a, b, d)
        for k in range(config.small_cells_per_macro):
            ang = SC_AZIMUTH_OFFSET + 2.0 * math.pi * k / config.small_cells_per_macro
            pos = mpos + config.sc_distance_from_center * np.array([math.cos(ang), math.sin(ang)])
            stations.append(BaseStation(id=len(stations), kind="small",
                                        position=tuple(pos), home_macro=m,
                                        color=stations[m].color))

    seen = set()
    for bs in stations:
        key = (round(bs.position[0], 6), round(bs.position[1], 6))
        if key in seen:
            raise ConfigError("co-located base stations are not allowed")
        seen.add(key)

    locations: list[Location] = []
    for m, (a, b) in enumerate(axials):
        mpos = _axial_to_xy(a, b, d)
        for p in _hex_grid(mpos, circum, inrad, config.locations_per_cell):
            locations.append(Location(id=len(locations), position=tuple(p), home_macro=m))

    bs_xy = np.array([s.position for s in stations])
    loc_xy = np.array([l.position for l in locations])
    # wrap distances: min over mirror displacements of the BS positions
    diff = loc_xy[:, None, None, :] - (bs_xy[None, :, None, :] + wrap[None, None, :, :])
    distance = np.sqrt((diff * diff).sum(axis=3)).min(axis=2)

    return Layout(
        base_stations=tuple(stations),
        locations=tuple(locations),
        wrap_vectors=wrap,
        hex_radius=circum,
        bs_xy=bs_xy,
        bs_kind=np.array([s.kind for s in stations]),
        bs_color=np.array([s.color for s in stations]),
        bs_home=np.array([s.home_macro for s in stations]),
        loc_xy=loc_xy,
        loc_home=np.array([l.home_macro for l in locations]),
        distance_m=distance,
    )


def path_loss_db(distance_m, kind: str) -> np.ndarray:
    """Distance-based path loss in dB; distances clamped to the model floor."""
    d = np.asarray(distance_m, dtype=float)
    if kind == "macro":
        d = np.maximum(d, MACRO_PL_FLOOR_M)
        return 128.0 + 37.6 * np.log10(d / 1000.0)
    if kind == "small":
        d = np.maximum(d, SMALL_PL_FLOOR_M)
        return 140.7 + 36.7 * np.log10(d / 1000.0)
    raise ValueError(f"unknown base station kind {kind!r}")


def sample_gains(layout: Layout, config: ScenarioConfig, seed: int) -> GainTable:
    """Linear gains: path loss, one shadowing draw per link, fixed losses.

    gain_dB = -PL(distance) - shadow - penetration_loss + UE antenna gain,
    with shadow ~ Normal(0, shadowing_std) drawn independently per
    (location, base station).  Bit-reproducible from (layout, config, seed).
    """
    pl = np.empty_like(layout.distance_m)
    for kind in ("macro", "small"):
        cols = layout.bs_kind == kind
        if cols.any():
            pl[:, cols] = path_loss_db(layout.distance_m[:, cols], kind)
    rng = np.random.default_rng(seed)
    shadow = rng.normal(0.0, config.shadowing_std, size=pl.shape)
    gain_db = -pl - shadow - config.penetration_loss + config.antenna_gain_ue
    return GainTable(gain=10.0 ** (gain_db / 10.0), gain_db=gain_db)


def hotspot_weights(n_hot: int, n_cold: int, ratio: float) -> tuple[float, float]:
    """Per-location weights (hot, cold) with hot/cold = ratio, summing to one."""
    if n_hot <= 0:
        raise ConfigError("hotspot contains no locations")
    cold = 1.0 / (n_hot * ratio + n_cold)
    return ratio * cold, cold


def hotspot_anchors(config: ScenarioConfig, layout: Layout) -> np.ndarray:
    """Hot-spot square centers: small-cell slot ``cell_index`` of each macro."""
    b = config.small_cells_per_macro
    idx = config.traffic.cell_index
    if b > 0 and idx >= b:
        raise ConfigError(f"hotspot cell_index {idx} >= small_cells_per_macro {b}")
    ang = SC_AZIMUTH_OFFSET + (2.0 * math.pi * idx / b if b > 0 else 0.0)
    offset = config.sc_distance_from_center * np.array([math.cos(ang), math.sin(ang)])
    macros = layout.bs_xy[layout.bs_kind == "macro"]
    return macros + offset[None, :]


def build_traffic(config: ScenarioConfig, layout: Layout) -> TrafficProfile:
    """Arrival weights per location; weights always sum to one."""
    n = layout.n_locations
    spec = config.traffic
    if spec.kind == "homogeneous":
        alpha = np.full(n, 1.0 / n)
        return TrafficProfile(alpha=alpha, hot_mask=np.zeros(n, dtype=bool))

    anchors = hotspot_anchors(config, layout)
    half = spec.side_m / 2.0
    hot = np.zeros(n, dtype=bool)
    for anchor in anchors:
        # wrapped displacement, then an axis-aligned box test
        diff = layout.loc_xy[:, None, :] - (anchor[None, None, :] + layout.wrap_vectors[None, :, :])
        norms = (diff * diff).sum(axis=2)
        best = diff[np.arange(n), norms.argmin(axis=1)]
        hot |= (np.abs(best[:, 0]) <= half) & (np.abs(best[:, 1]) <= half)
    n_hot = int(hot.sum())
    w_hot, w_cold = hotspot_weights(n_hot, n - n_hot, spec.weight_ratio)
    alpha = np.where(hot, w_hot, w_cold)
    alpha = alpha / alpha.sum()
    return TrafficProfile(alpha=alpha, hot_mask=hot)


def build_scenario(config: ScenarioConfig, seed: Optional[int] = None) -> Scenario:
    """Full realization from a config; the seed defaults to config.seed."""
    layout = build_layout(config)
    gains = sample_gains(layout, config, config.seed if seed is None else seed)
    traffic = build_traffic(config, layout)
    return Scenario(config=config, layout=layout, gains=gains, traffic=traffic)
