"""Analytic performance of the processor-sharing queue set.

Given an association, a link table and a traffic profile, each virtual
base station is an independent multi-class M/G/1 processor-sharing
queue.  Loads, stability, the largest stable arrival rate of a fixed
rule, and per-class / system / worst-class delays all follow in closed
form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnstableQueueError
from .phy import LinkTable
from .scenario import TrafficProfile
from .ua_rules import Association


@dataclass(frozen=True)
class LoadVector:
    """Per-queue load factor and its per-unit-arrival-rate work term."""

    rho: np.ndarray   # (V,) load factors
    work: np.ndarray  # (V,) seconds of offered work per arriving user


@dataclass(frozen=True)
class DelayReport:
    t_per_class: np.ndarray    # (L,) mean sojourn per location, seconds
    t_system: float            # arrival-weighted mean over classes
    t_max: float               # worst class
    sum_lambda_t: float        # total mean number in system
    sum_rho_ratio: float       # sum of rho/(1-rho) over queues
    queues_above_cap: tuple    # queue ids with rho in [rho_bar, 1)


def service_seconds(assoc: Association, link: LinkTable,
                    file_size_bits: float) -> np.ndarray:
    """Mean service requirement of each class at its serving queue."""
    t = assoc.target
    rates = link.rate_bps[np.arange(t.shape[0]), t]
    return file_size_bits / (link.k[t] * rates)


def loads(assoc: Association, link: LinkTable, traffic: TrafficProfile,
          arrival_rate: float, file_size_bits: float) -> LoadVector:
    """Load factor of every queue under a total association."""
    s = service_seconds(assoc, link, file_size_bits)
    work = np.bincount(assoc.target, weights=traffic.alpha * s,
                       minlength=link.n_virtuals)
    return LoadVector(rho=arrival_rate * work, work=work)


def is_stable(load: LoadVector, rho_bar: float) -> bool:
    """True when every load factor stays within the cap (inclusive)."""
    return bool((load.rho <= rho_bar).all())


def lambda_max_of_rule(assoc: Association, link: LinkTable,
                       traffic: TrafficProfile, file_size_bits: float,
                       rho_bar: float) -> float:
    """Largest arrival rate keeping every queue within the cap for this map."""
    work = loads(assoc, link, traffic, 1.0, file_size_bits).work
    peak = work.max() if work.size else 0.0
    return float(rho_bar / peak) if peak > 0 else float("inf")


def delays(assoc: Association, link: LinkTable, traffic: TrafficProfile,
           arrival_rate: float, file_size_bits: float, rho_bar: float = 0.95,
           *, max_over_weighted_only: bool = False) -> DelayReport:
    """Mean sojourn times of the processor-sharing queues.

    Rejects any queue at or above load one.  Queues loaded between the
    engineering cap and one are evaluated but reported in
    ``queues_above_cap``.  ``max_over_weighted_only`` restricts the
    worst-class statistic to locations with positive arrival weight.
    """
    load = loads(assoc, link, traffic, arrival_rate, file_size_bits)
    unstable = np.flatnonzero(load.rho >= 1.0)
    if unstable.size:
        q = int(unstable[0])
        raise UnstableQueueError(q, float(load.rho[q]))

    s = service_seconds(assoc, link, file_size_bits)
    t_class = s / (1.0 - load.rho[assoc.target])
    alpha = traffic.alpha
    t_system = float((alpha * t_class).sum() / alpha.sum())
    if max_over_weighted_only:
        t_max = float(t_class[alpha > 0].max())
    else:
        t_max = float(t_class.max())
    above = np.flatnonzero(load.rho > rho_bar)
    return DelayReport(
        t_per_class=t_class,
        t_system=t_system,
        t_max=t_max,
        sum_lambda_t=float(arrival_rate * (alpha * t_class).sum()),
        sum_rho_ratio=float((load.rho / (1.0 - load.rho)).sum()),
        queues_above_cap=tuple(int(j) for j in above),
    )
