"""Physical-layer link model.

Turns a scenario plus a resource-allocation scheme into virtual base
stations (one queue each), per-channel transmit powers, interferer sets,
SINRs and MCS-mapped per-channel bit rates for every (location, virtual
base station) pair.  Everything here is load-independent: stations are
assumed to transmit on all their channels all the time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .scenario import Scenario

RA_KINDS = ("ccd", "od", "psd")

BAND_FULL = "full"
BAND_SHARED = "shared"
BAND_DEDICATED = "dedicated"


@dataclass(frozen=True)
class RaScheme:
    """Resource allocation scheme.

    ccd: macro and small cells transmit on all M sub-channels.
    od:  k sub-channels go exclusively to the small-cell pool, M-k to macros.
    psd: k sub-channels are shared by macro and small cells (macro power
         budget p_small on them), M-k are macro-exclusive with the
         remaining power budget.
    """

    kind: str
    k: Optional[int] = None

    def __post_init__(self):
        if self.kind not in RA_KINDS:
            raise ConfigError(f"unknown RA scheme {self.kind!r}")
        if self.kind == "ccd":
            if self.k is not None:
                raise ConfigError("ccd takes no sub-channel split k")
        elif self.k is None:
            raise ConfigError(f"{self.kind} requires a sub-channel split k")

    def validate_for(self, m: int) -> None:
        if self.kind != "ccd" and not 1 <= self.k <= m - 1:
            raise ConfigError(
                f"k={self.k} out of range [1, {m - 1}] (both tiers need a channel)")


@dataclass(frozen=True)
class VirtualBs:
    """A (physical base station, band) pair acting as one queue."""

    id: int
    physical_bs: int
    kind: str             # "macro" | "small"
    band: str             # full | shared | dedicated
    k_j: int              # sub-channels
    p_per_channel: float  # watts
    color: int
    interferers: tuple = field(default_factory=tuple)


@dataclass(frozen=True)
class McsTable:
    """Discrete SINR-to-rate mapping (LTE adaptive modulation and coding)."""

    thresholds_db: tuple = (-6.5, -4.0, -2.6, -1.0, 1.0, 3.0, 6.6, 10.0,
                            11.4, 11.8, 13.0, 13.8, 15.6, 16.8, 17.6)
    efficiencies: tuple = (0.15, 0.23, 0.38, 0.60, 0.88, 1.18, 1.48, 1.91,
                           2.41, 2.73, 3.32, 3.90, 4.52, 5.12, 5.55)
    sc_ofdm: int = 12      # data subcarriers per sub-channel
    sy_ofdm: int = 14      # OFDM symbols per subframe
    t_subframe: float = 1e-3

    def __post_init__(self):
        if len(self.thresholds_db) != len(self.efficiencies):
            raise ConfigError("MCS thresholds and efficiencies differ in length")
        t = np.asarray(self.thresholds_db)
        e = np.asarray(self.efficiencies)
        if not (np.diff(t) > 0).all() or not (np.diff(e) > 0).all():
            raise ConfigError("MCS thresholds and efficiencies must be strictly increasing")

    @property
    def symbol_rate(self) -> float:
        """Symbols per second on one sub-channel."""
        return self.sc_ofdm * self.sy_ofdm / self.t_subframe


DEFAULT_MCS = McsTable()


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def _bands_overlap(a: str, b: str) -> bool:
    return a == b or BAND_FULL in (a, b)


def expand_virtual(scenario: Scenario, ra: RaScheme) -> list[VirtualBs]:
    """Virtual base stations with per-channel powers and interferer sets.

    Interferers of j are the other virtual stations with an overlapping
    band and the same reuse color; macros of other colors never interfere.
    Under psd each macro contributes two virtual stations (shared band
    first, then the macro-exclusive band).
    """
    cfg = scenario.config
    ra.validate_for(cfg.total_subchannels_per_macro)
    m = cfg.total_subchannels_per_macro
    p_macro = dbm_to_watts(cfg.p_macro)
    p_small = dbm_to_watts(cfg.p_small)
    if ra.kind == "psd" and p_macro <= p_small:
        raise ConfigError("psd requires p_macro > p_small (shared-band budget split)")

    layout = scenario.layout
    raw: list[dict] = []
    for bs in layout.base_stations:
        if bs.kind == "macro":
            if ra.kind == "ccd":
                raw.append(dict(physical_bs=bs.id, kind="macro", band=BAND_FULL,
                                k_j=m, p_per_channel=p_macro / m, color=bs.color))
            elif ra.kind == "od":
                raw.append(dict(physical_bs=bs.id, kind="macro", band=BAND_DEDICATED,
                                k_j=m - ra.k, p_per_channel=p_macro / (m - ra.k),
                                color=bs.color))
            else:  # psd
                raw.append(dict(physical_bs=bs.id, kind="macro", band=BAND_SHARED,
                                k_j=ra.k, p_per_channel=p_small / ra.k, color=bs.color))
                raw.append(dict(physical_bs=bs.id, kind="macro", band=BAND_DEDICATED,
                                k_j=m - ra.k,
                                p_per_channel=(p_macro - p_small) / (m - ra.k),
                                color=bs.color))
        else:
            if ra.kind == "ccd":
                raw.append(dict(physical_bs=bs.id, kind="small", band=BAND_FULL,
                                k_j=m, p_per_channel=p_small / m, color=bs.color))
            else:
                raw.append(dict(physical_bs=bs.id, kind="small", band=BAND_SHARED,
                                k_j=ra.k, p_per_channel=p_small / ra.k, color=bs.color))

    virtuals = []
    for vid, spec in enumerate(raw):
        interferers = tuple(
            h for h, other in enumerate(raw)
            if h != vid and other["color"] == spec["color"]
            and _bands_overlap(other["band"], spec["band"]))
        virtuals.append(VirtualBs(id=vid, interferers=interferers, **spec))
    return virtuals


def compute_sinr(scenario: Scenario, virtuals: list[VirtualBs]) -> np.ndarray:
    """Per-channel SINR (linear) for every (location, virtual station) pair."""
    gains = scenario.gains.gain
    noise = scenario.config.noise_watts_per_channel
    phys = np.array([v.physical_bs for v in virtuals])
    power = np.array([v.p_per_channel for v in virtuals])
    received = gains[:, phys] * power[None, :]      # (L, V)
    adj = np.zeros((len(virtuals), len(virtuals)))
    for v in virtuals:
        adj[list(v.interferers), v.id] = 1.0
    interference = received @ adj
    return received / (noise + interference)


def mcs_rate(sinr, mcs: McsTable = DEFAULT_MCS) -> np.ndarray:
    """Per-channel bit rate for a linear SINR (array-friendly).

    The highest MCS level whose threshold does not exceed the SINR is
    used; a SINR below the lowest threshold means no coverage (rate 0).
    """
    sinr = np.asarray(sinr, dtype=float)
    with np.errstate(divide="ignore"):
        sinr_db = 10.0 * np.log10(sinr, where=sinr > 0,
                                  out=np.full(sinr.shape, -np.inf))
    level = np.searchsorted(np.asarray(mcs.thresholds_db), sinr_db, side="right") - 1
    eff = np.concatenate([[0.0], np.asarray(mcs.efficiencies)])
    return mcs.symbol_rate * eff[level + 1]


@dataclass(frozen=True)
class LinkTable:
    """SINRs and per-channel bit rates under a fixed RA scheme."""

    ra: RaScheme
    virtuals: tuple                 # of VirtualBs
    sinr: np.ndarray                # (L, V) linear
    rate_bps: np.ndarray            # (L, V) per sub-channel
    k: np.ndarray                   # (V,) sub-channels per virtual station

    @property
    def n_locations(self) -> int:
        return self.sinr.shape[0]

    @property
    def n_virtuals(self) -> int:
        return self.sinr.shape[1]

    @property
    def small_mask(self) -> np.ndarray:
        return np.array([v.kind == "small" for v in self.virtuals])

    def covered(self) -> np.ndarray:
        """Boolean (L, V): pairs admissible for association (positive rate)."""
        return self.rate_bps > 0


def build_link_table(scenario: Scenario, ra: RaScheme,
                     mcs: McsTable = DEFAULT_MCS) -> LinkTable:
    """LinkTable for one (scenario, RA scheme); pure and load-independent."""
    virtuals = expand_virtual(scenario, ra)
    sinr = compute_sinr(scenario, virtuals)
    rate = mcs_rate(sinr, mcs)
    return LinkTable(ra=ra, virtuals=tuple(virtuals), sinr=sinr, rate_bps=rate,
                     k=np.array([v.k_j for v in virtuals]))
