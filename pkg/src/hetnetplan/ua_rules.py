"""Physical-layer user association rules.

Every rule returns a total map location -> virtual base station.  Only
pairs with a positive bit rate are admissible; a location no station
covers raises CoverageError.  Ties are always broken toward the lowest
virtual station id so reruns are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoverageError
from .phy import BAND_DEDICATED, LinkTable
from .scenario import Scenario, path_loss_db


@dataclass(frozen=True)
class Association:
    """One serving virtual base station per location (one-hot map)."""

    target: np.ndarray  # (L,) int virtual-bs ids

    @property
    def n_locations(self) -> int:
        return self.target.shape[0]


def validate_association(assoc: Association, link: LinkTable) -> None:
    """Raise if the map is not total over covered pairs."""
    t = assoc.target
    if t.shape[0] != link.n_locations:
        raise ValueError("association length does not match the link table")
    if (t < 0).any() or (t >= link.n_virtuals).any():
        raise ValueError("association targets an unknown virtual station")
    rates = link.rate_bps[np.arange(t.shape[0]), t]
    bad = np.flatnonzero(rates <= 0)
    if bad.size:
        raise CoverageError(int(bad[0]), f"location {bad[0]} mapped to a zero-rate station")


def _masked_argmax(score: np.ndarray, admissible: np.ndarray) -> np.ndarray:
    """Row argmax over admissible entries; raises on fully masked rows."""
    masked = np.where(admissible, score, -np.inf)
    uncovered = np.flatnonzero(~admissible.any(axis=1))
    if uncovered.size:
        raise CoverageError(int(uncovered[0]))
    return masked.argmax(axis=1)


def best_sinr(link: LinkTable) -> Association:
    """Associate with the admissible station of highest per-channel SINR."""
    return Association(target=_masked_argmax(link.sinr, link.covered()))


def range_extension(scenario: Scenario, link: LinkTable, *,
                    prefer_shared: bool = False) -> Association:
    """Associate with the station of least path loss (no shadowing, no power).

    Path loss is a property of the physical station, so the argmin runs
    over physical stations (ties toward the lowest id).  When the winner
    exposes two bands (a psd macro) the macro-exclusive band is used
    unless ``prefer_shared`` is set; bands without coverage are skipped.
    """
    layout = scenario.layout
    pl = np.empty_like(layout.distance_m)
    for kind in ("macro", "small"):
        cols = layout.bs_kind == kind
        if cols.any():
            pl[:, cols] = path_loss_db(layout.distance_m[:, cols], kind)

    covered = link.covered()
    phys = np.array([v.physical_bs for v in link.virtuals])
    n_loc = link.n_locations
    n_phys = layout.n_base_stations
    # a physical station is admissible where any of its bands covers
    phys_cov = np.zeros((n_loc, n_phys), dtype=bool)
    for col, p in enumerate(phys):
        phys_cov[:, p] |= covered[:, col]
    best_phys = _masked_argmax(-pl, phys_cov)

    # pick the band of the winning physical station
    band_pref = np.array([(v.band == BAND_DEDICATED) == prefer_shared
                          for v in link.virtuals])  # True ranks after False
    target = np.empty(n_loc, dtype=int)
    for p in np.unique(best_phys):
        rows = best_phys == p
        cols = np.flatnonzero(phys == p)
        cols = cols[np.argsort(band_pref[cols], kind="stable")]
        choice = np.full(rows.sum(), -1)
        for c in cols[::-1]:
            choice = np.where(covered[rows, c], c, choice)
        target[rows] = choice
    return Association(target=target)


def small_cell_first(link: LinkTable, beta_db: float) -> Association:
    """Prefer the best small cell while its SINR exceeds ``beta_db``.

    Falls back to the overall best-SINR station when no small cell beats
    the threshold (or none covers the location).  ``beta_db=-inf`` keeps
    every location on its best covering small cell.
    """
    covered = link.covered()
    small = link.small_mask
    fallback = _masked_argmax(link.sinr, covered)
    if not small.any():
        return Association(target=fallback)

    sc_adm = covered & small[None, :]
    masked = np.where(sc_adm, link.sinr, -np.inf)
    sc_best = masked.argmax(axis=1)
    sc_sinr = masked[np.arange(masked.shape[0]), sc_best]
    with np.errstate(divide="ignore"):
        sc_sinr_db = 10.0 * np.log10(np.maximum(sc_sinr, 0.0))
    take_small = np.isfinite(sc_sinr_db) & (sc_sinr_db > beta_db)
    return Association(target=np.where(take_small, sc_best, fallback))
