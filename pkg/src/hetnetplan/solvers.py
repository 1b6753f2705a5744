"""Joint association / spectrum-split optimizers.

Three solvers, one per planning metric:

* ``solve_minmax_load``     exact min-max queue work over all total
                            assignments (best-first branch and bound);
                            the largest stable arrival rate is the load
                            cap divided by that optimum.
* ``minmax_delay``          bisection on the worst-class delay, each probe
                            answered by a feasibility branch and bound.
* ``avgdelay_lower_bound``  convex relaxation of the mean system delay
                            with a computed (not assumed) duality-gap
                            certificate.

All searches are deterministic; node budgets turn them into anytime
solvers that return an incumbent plus a proven bound.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CoverageError, InfeasibleRateError
from .phy import DEFAULT_MCS, LinkTable, RaScheme, build_link_table
from .queueing import lambda_max_of_rule
from .scenario import Scenario, TrafficProfile, build_scenario
from .ua_rules import Association, best_sinr, range_extension, small_cell_first

# slack used by every load / delay feasibility comparison (absolute, loads are O(1))
FEAS_EPS = 1e-9


@dataclass(frozen=True)
class AssignProblem:
    """Array view of one fixed-split planning instance."""

    rate_bps: np.ndarray       # (L, V) per-channel bit rates, 0 = not covered
    k: np.ndarray              # (V,) sub-channels per queue
    alpha: np.ndarray          # (L,) arrival weights, sum 1
    file_size_bits: float
    rho_bar: float

    def __post_init__(self):
        if abs(self.alpha.sum() - 1.0) > 1e-9:
            raise ValueError("arrival weights must sum to one")

    @classmethod
    def from_link(cls, link: LinkTable, traffic: TrafficProfile,
                  file_size_bits: float, rho_bar: float) -> "AssignProblem":
        return cls(rate_bps=link.rate_bps, k=link.k, alpha=traffic.alpha,
                   file_size_bits=file_size_bits, rho_bar=rho_bar)

    @property
    def n_locations(self) -> int:
        return self.rate_bps.shape[0]

    @property
    def n_queues(self) -> int:
        return self.rate_bps.shape[1]

    def service_seconds(self) -> np.ndarray:
        """(L, V) mean service times; inf where a pair is not covered."""
        with np.errstate(divide="ignore"):
            return np.where(self.rate_bps > 0,
                            self.file_size_bits / (self.k[None, :] * self.rate_bps),
                            np.inf)

    def work_costs(self) -> np.ndarray:
        """(L, V) per-unit-arrival-rate load contributions; inf = forbidden."""
        return self.alpha[:, None] * self.service_seconds()


@dataclass(frozen=True)
class AssignCosts:
    """Min-max-load cost matrix; forbidden pairs are +inf."""

    c: np.ndarray  # (L, V)

    @classmethod
    def from_problem(cls, problem: AssignProblem) -> "AssignCosts":
        return cls(c=problem.work_costs())


@dataclass
class OptResult:
    """Solver output with its certificate.

    ``bound`` is the proven bound on the true optimum from the side the
    incumbent value does not cover (a lower bound for minimizations, an
    upper bound for the achievable-rate maximization).
    """

    kind: str
    value: float
    k: Optional[int] = None
    association: Optional[Association] = None
    certificate: str = "optimal"
    iterations: int = 0
    wallclock: float = 0.0
    bound: Optional[float] = None
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# min-max load (largest stable arrival rate)
# ---------------------------------------------------------------------------


def _assignment_value(c: np.ndarray, target: np.ndarray) -> float:
    loads = np.bincount(target, weights=c[np.arange(len(target)), target],
                        minlength=c.shape[1])
    return float(loads.max())


def _greedy_from(c: np.ndarray, order: np.ndarray, loads: np.ndarray,
                 target: np.ndarray) -> float:
    """Complete a partial assignment greedily (least resulting load first)."""
    loads = loads.copy()
    for i in order:
        cand = loads + c[i]
        j = int(np.argmin(cand))
        target[i] = j
        loads[j] = cand[j]
    return float(loads.max())


def solve_minmax_load(costs: AssignCosts, *, node_budget: Optional[int] = None,
                      initial_targets: Sequence[np.ndarray] = (),
                      full_bound_limit: int = 6000) -> OptResult:
    """Minimize the maximum per-queue work over all total assignments.

    Best-first branch and bound; locations with the fewest admissible
    queues are fixed first.  Without a node budget the search runs to
    proven optimality.  With a budget the incumbent is returned together
    with the smallest open lower bound (certificate ``"gap"``).
    ``initial_targets`` seed the incumbent, so the result is never worse
    than any provided assignment.
    """
    t_start = time.perf_counter()
    c = costs.c
    n_loc, n_q = c.shape
    finite = np.isfinite(c)
    uncovered = np.flatnonzero(~finite.any(axis=1))
    if uncovered.size:
        raise CoverageError(int(uncovered[0]))

    n_allowed = finite.sum(axis=1)
    minc_all = np.where(finite, c, np.inf).min(axis=1)
    order = np.lexsort((np.arange(n_loc), -minc_all, n_allowed))
    cs = np.where(finite, c, np.inf)[order]
    minc = minc_all[order]
    # suffix aggregates over the branching order (index d = locations d..L-1)
    suf_sum = np.concatenate([np.cumsum(minc[::-1])[::-1], [0.0]])
    suf_max = np.concatenate([np.maximum.accumulate(minc[::-1])[::-1], [-np.inf]])

    # incumbent: greedy completion from scratch, plus any caller-provided maps
    best_target = np.empty(n_loc, dtype=int)
    best_value = _greedy_from(cs, np.arange(n_loc), np.zeros(n_q), best_target)
    for seed in initial_targets:
        value = _assignment_value(c, np.asarray(seed, dtype=int))
        if value < best_value:
            best_value = value
            best_target = np.asarray(seed, dtype=int)[order]

    root_lb = max(suf_max[0], suf_sum[0] / n_q)
    # nodes[i] = (parent, choice); loads are rebuilt by walking the chain
    nodes: list[tuple[int, int]] = [(-1, -1)]
    heap: list[tuple[float, int, int, int]] = [(root_lb, 0, 0, 0)]  # lb, tie, depth, node
    tie = itertools.count(1)
    pops = 0
    proven_lb = root_lb
    budget_hit = False

    while heap:
        lb, _, depth, node_id = heapq.heappop(heap)
        if lb >= best_value:
            proven_lb = best_value
            break
        if node_budget is not None and pops >= node_budget:
            budget_hit = True
            proven_lb = lb
            break
        pops += 1

        loads = np.zeros(n_q)
        nid, d = node_id, depth
        while nid > 0:
            parent, choice = nodes[nid]
            d -= 1
            loads[choice] += cs[d, choice]
            nid = parent

        if depth == n_loc:
            if lb < best_value:
                best_value = lb
                tgt = np.empty(n_loc, dtype=int)
                nid, d = node_id, depth
                while nid > 0:
                    parent, choice = nodes[nid]
                    d -= 1
                    tgt[d] = choice
                    nid = parent
                best_target = tgt
            continue

        if pops % 512 == 0 and depth < n_loc:
            tgt = np.empty(n_loc, dtype=int)
            nid, d = node_id, depth
            while nid > 0:
                parent, choice = nodes[nid]
                d -= 1
                tgt[d] = choice
                nid = parent
            value = _greedy_from(cs, np.arange(depth, n_loc), loads, tgt)
            if value < best_value:
                best_value = value
                best_target = tgt

        row = cs[depth]
        cur_max = loads.max() if depth else 0.0
        sum_loads = loads.sum()
        nxt = depth + 1
        remaining = n_loc - nxt
        do_full = remaining * n_q <= full_bound_limit and remaining > 0
        for j in np.flatnonzero(np.isfinite(row)):
            new_load = loads[j] + row[j]
            child_max = max(cur_max, new_load)
            if child_max >= best_value:
                continue
            child_lb = child_max
            if remaining:
                old = loads[j]
                loads[j] = new_load
                child_lb = max(child_lb,
                               loads.min() + suf_max[nxt],
                               (sum_loads + row[j] + suf_sum[nxt]) / n_q)
                if do_full and child_lb < best_value:
                    child_lb = max(child_lb,
                                   float(np.min(loads[None, :] + cs[nxt:], axis=1).max()))
                loads[j] = old
            if child_lb < best_value:
                nodes.append((node_id, int(j)))
                heapq.heappush(heap, (child_lb, next(tie), nxt, len(nodes) - 1))
    else:
        proven_lb = best_value

    target = np.empty(n_loc, dtype=int)
    target[order] = best_target
    value = _assignment_value(c, target)
    return OptResult(
        kind="minmax_load",
        value=value,
        association=Association(target=target),
        certificate="gap" if budget_hit else "optimal",
        iterations=pops,
        wallclock=time.perf_counter() - t_start,
        bound=float(min(proven_lb, value)),
    )


def _rule_seed_targets(scenario: Scenario, link: LinkTable,
                       scf_betas: Sequence[float]) -> list[np.ndarray]:
    seeds = []
    try:
        seeds.append(best_sinr(link).target)
        seeds.append(range_extension(scenario, link).target)
        for beta in scf_betas:
            seeds.append(small_cell_first(link, beta).target)
    except CoverageError:
        pass
    return seeds


def lambda_max_optimal(scenario: Scenario, ra_kind: str, *,
                       k: Optional[int] = None,
                       k_grid: Optional[Sequence[int]] = None,
                       mcs=DEFAULT_MCS,
                       node_budget: Optional[int] = None,
                       seed_rules: bool = True) -> OptResult:
    """Best achievable arrival rate over associations (and over k if swept).

    For a fixed split the optimum is the load cap over the min-max work.
    With ``k_grid`` (or by default every admissible split for od/psd) the
    best split is returned, with the per-split table in ``extra``.
    """
    cfg = scenario.config
    if ra_kind == "ccd":
        grid = [None]
    elif k is not None:
        grid = [k]
    else:
        grid = list(k_grid) if k_grid is not None \
            else list(range(1, cfg.total_subchannels_per_macro))

    best: Optional[OptResult] = None
    per_k = []
    total_nodes = 0
    t_start = time.perf_counter()
    for kk in grid:
        ra = RaScheme(ra_kind, kk)
        link = build_link_table(scenario, ra, mcs)
        problem = AssignProblem.from_link(link, scenario.traffic,
                                          cfg.mean_file_size, cfg.rho_bar)
        costs = AssignCosts.from_problem(problem)
        seeds = _rule_seed_targets(scenario, link, mcs.thresholds_db) if seed_rules else []
        res = solve_minmax_load(costs, node_budget=node_budget,
                                initial_targets=seeds)
        total_nodes += res.iterations
        # the reduction is tight: the returned association attains the optimum
        assert abs(_assignment_value(costs.c, res.association.target)
                   - res.value) <= 1e-12 * max(1.0, res.value)
        rate = cfg.rho_bar / res.value if res.value > 0 else float("inf")
        upper = cfg.rho_bar / res.bound if res.bound and res.bound > 0 \
            else float("inf")
        per_k.append({"k": kk, "value": rate, "certificate": res.certificate,
                      "upper_bound": upper, "nodes": res.iterations})
        if best is None or rate > best.value:
            best = OptResult(kind="lambda_max", value=rate, k=kk,
                             association=res.association,
                             certificate=res.certificate,
                             bound=upper)
    best.iterations = total_nodes
    best.wallclock = time.perf_counter() - t_start
    best.extra["per_k"] = per_k
    return best


# ---------------------------------------------------------------------------
# min-max delay (bisection over a feasibility search)
# ---------------------------------------------------------------------------


def delay_feasible(t_value: float, arrival_rate: float, problem: AssignProblem,
                   *, node_budget: Optional[int] = None
                   ) -> tuple[str, Optional[Association]]:
    """Does a total assignment keep every class delay within ``t_value``?

    The load cap, totality, and the per-pair delay coupling
    ``service_ij <= t * (1 - rho_j)`` must all hold.  Returns
    ``("feasible", witness)``, ``("infeasible", None)``, or
    ``("budget", None)`` when the node budget ran out before a proof.
    """
    if t_value <= 0:
        return "infeasible", None
    s = problem.service_seconds()
    lamw = arrival_rate * problem.alpha[:, None] * s
    rho_bar = problem.rho_bar
    n_loc, n_q = s.shape

    admissible = np.isfinite(s) & (s <= t_value * (1.0 + FEAS_EPS))
    pair_cap = np.minimum(rho_bar, 1.0 - s / t_value)
    admissible &= lamw <= pair_cap + FEAS_EPS
    if (~admissible.any(axis=1)).any():
        return "infeasible", None

    order = np.lexsort((np.arange(n_loc), admissible.sum(axis=1)))
    s_o = s[order]
    lamw_o = np.where(admissible, lamw, np.inf)[order]
    s_masked = np.where(admissible, s, np.inf)[order]

    loads = np.zeros(n_q)
    smax = np.zeros(n_q)
    target = np.full(n_loc, -1, dtype=int)
    nodes = 0

    def children(depth: int) -> list[int]:
        row_w = lamw_o[depth]
        cap = np.minimum(rho_bar, 1.0 - np.maximum(smax, s_masked[depth]) / t_value)
        ok = np.flatnonzero(loads + row_w <= cap + FEAS_EPS)
        return ok[np.argsort(loads[ok] + row_w[ok], kind="stable")].tolist()

    def forward_ok(depth: int) -> bool:
        if depth >= n_loc:
            return True
        rest_w = lamw_o[depth:]
        rest_s = s_masked[depth:]
        cap = np.minimum(rho_bar, 1.0 - np.maximum(smax[None, :], rest_s) / t_value)
        return bool((loads[None, :] + rest_w <= cap + FEAS_EPS).any(axis=1).all())

    stack: list[tuple[int, list[int]]] = [(0, children(0))]
    while stack:
        depth, kids = stack[-1]
        if not kids:
            stack.pop()
            if stack:
                j = target[depth - 1]
                loads[j] -= lamw_o[depth - 1, j]
                # smax must be recomputed from the surviving assignments
                mask = target[:depth - 1] == j
                smax[j] = s_o[:depth - 1][mask, j].max() if mask.any() else 0.0
                target[depth - 1] = -1
            continue
        if node_budget is not None and nodes >= node_budget:
            return "budget", None
        nodes += 1
        j = kids.pop(0)
        loads[j] += lamw_o[depth, j]
        old_smax = smax[j]
        smax[j] = max(smax[j], s_o[depth, j])
        target[depth] = j
        if depth + 1 == n_loc:
            out = np.empty(n_loc, dtype=int)
            out[order] = target
            return "feasible", Association(target=out)
        if forward_ok(depth + 1):
            stack.append((depth + 1, children(depth + 1)))
        else:
            loads[j] -= lamw_o[depth, j]
            smax[j] = old_smax
            target[depth] = -1
    return "infeasible", None


def _max_delay_of(problem: AssignProblem, target: np.ndarray,
                  arrival_rate: float) -> float:
    s = problem.service_seconds()[np.arange(len(target)), target]
    work = np.bincount(target, weights=problem.alpha * s, minlength=problem.n_queues)
    rho = arrival_rate * work
    if (rho >= 1.0).any():
        return float("inf")
    return float((s / (1.0 - rho[target])).max())


def minmax_delay(arrival_rate: float, problem: AssignProblem, epsilon: float,
                 *, node_budget: Optional[int] = None) -> OptResult:
    """Smallest achievable worst-class delay, within ``epsilon``.

    Bisection between zero and the worst-class delay of the min-max-load
    association (feasible whenever the arrival rate is) with each probe
    resolved by ``delay_feasible``.  The returned value is the proven
    feasible end of the final bracket.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    t_start = time.perf_counter()
    base = solve_minmax_load(AssignCosts.from_problem(problem),
                             node_budget=node_budget)
    if arrival_rate * base.value > problem.rho_bar + FEAS_EPS:
        raise InfeasibleRateError(
            f"arrival rate {arrival_rate:.6g} exceeds the stable maximum "
            f"{problem.rho_bar / base.value:.6g}")

    witness = base.association
    upper = _max_delay_of(problem, witness.target, arrival_rate)
    lower = 0.0
    calls = 0
    exact = base.certificate == "optimal"
    while upper - lower > epsilon:
        mid = 0.5 * (lower + upper)
        status, assoc = delay_feasible(mid, arrival_rate, problem,
                                       node_budget=node_budget)
        calls += 1
        if status == "feasible":
            upper = mid
            witness = assoc
        else:
            lower = mid
            if status == "budget":
                exact = False
    return OptResult(
        kind="minmax_delay",
        value=upper,
        association=witness,
        certificate=f"within {epsilon:g}" if exact else "upper-bound",
        iterations=calls,
        wallclock=time.perf_counter() - t_start,
        bound=lower,
        extra={"t0": _max_delay_of(problem, base.association.target, arrival_rate)},
    )


# ---------------------------------------------------------------------------
# average-delay lower bound (convex relaxation with a gap certificate)
# ---------------------------------------------------------------------------


def _relaxation_matrices(problem: AssignProblem, arrival_rate: float):
    import scipy.sparse as sp

    s = problem.service_seconds()
    admissible = np.isfinite(s)
    if (~admissible.any(axis=1)).any():
        raise CoverageError(int(np.flatnonzero(~admissible.any(axis=1))[0]))
    rows, cols = np.nonzero(admissible)
    n_pairs = rows.size
    lamw = arrival_rate * problem.alpha[rows] * s[rows, cols]
    idx = np.arange(n_pairs)
    row_sum = sp.csr_matrix((np.ones(n_pairs), (rows, idx)),
                            shape=(problem.n_locations, n_pairs))
    load_map = sp.csr_matrix((lamw, (cols, idx)),
                             shape=(problem.n_queues, n_pairs))
    return rows, cols, lamw, row_sum, load_map


def _fw_gap(x: np.ndarray, rho: np.ndarray, lamw: np.ndarray, cols: np.ndarray,
            row_sum, load_map, rho_bar: float):
    """One linear minimization over the feasible set; returns (gap, vertex)."""
    from scipy.optimize import linprog

    grad = lamw / np.square(1.0 - rho[cols])
    res = linprog(grad, A_eq=row_sum, b_eq=np.ones(row_sum.shape[0]),
                  A_ub=load_map, b_ub=np.full(load_map.shape[0], rho_bar),
                  bounds=(0.0, 1.0), method="highs")
    if res.status == 2:
        raise InfeasibleRateError("relaxed association problem is infeasible")
    if not res.success:
        raise RuntimeError(f"linear subproblem failed: {res.message}")
    gap = float(grad @ x - res.fun)
    return gap, res.x


def avgdelay_lower_bound(arrival_rate: float, problem: AssignProblem,
                         tol: float = 1e-6, *, max_refine: int = 200) -> OptResult:
    """Certified lower bound on the average system delay at this rate.

    Solves the fractional-association relaxation minimizing the summed
    queue congestion 1/(1-rho), then certifies the optimality gap with
    conditional-gradient probes (each probe is one linear program); if
    the gap exceeds ``tol`` the point is polished with conditional
    gradient steps until it does not.  The reported bound subtracts the
    measured gap, so it is valid regardless of solver accuracy.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    t_start = time.perf_counter()
    rows, cols, lamw, row_sum, load_map = _relaxation_matrices(problem, arrival_rate)
    n_q = problem.n_queues
    rho_bar = problem.rho_bar

    x = _solve_relaxation_ipm(lamw, cols, row_sum, load_map, rho_bar)
    if x is None:
        # feasible start from the linear oracle alone, then pure conditional gradient
        gap, x = _fw_gap(np.zeros_like(lamw), np.zeros(n_q), lamw, cols,
                         row_sum, load_map, rho_bar)

    def objective(xv):
        rho = load_map @ xv
        if (rho >= 1.0).any():
            return np.inf, rho
        return float((1.0 / (1.0 - rho)).sum()), rho

    f_val, rho = objective(x)
    gap, vertex = _fw_gap(x, rho, lamw, cols, row_sum, load_map, rho_bar)
    refinements = 0
    while gap > tol and refinements < max_refine:
        # exact line search toward the oracle vertex (1-D convex)
        d_rho = (load_map @ vertex) - rho
        lo, hi = 0.0, 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            deriv = float((d_rho / np.square(1.0 - (rho + mid * d_rho))).sum())
            if deriv > 0:
                hi = mid
            else:
                lo = mid
        step = 0.5 * (lo + hi)
        x = x + step * (vertex - x)
        f_val, rho = objective(x)
        gap, vertex = _fw_gap(x, rho, lamw, cols, row_sum, load_map, rho_bar)
        refinements += 1

    q_certified = f_val - gap
    bound = (q_certified - n_q) / (arrival_rate * problem.alpha.sum())
    x_full = np.zeros(problem.rate_bps.shape)
    x_full[rows, cols] = x
    return OptResult(
        kind="avgdelay_lb",
        value=float(bound),
        certificate=f"lower-bound (gap {gap:.3g})" + ("" if gap <= tol else " above tol"),
        iterations=refinements,
        wallclock=time.perf_counter() - t_start,
        extra={"q_hat": f_val, "gap": gap, "n_queues": n_q,
               "rho": rho, "x": x_full},
    )


def _solve_relaxation_ipm(lamw, cols, row_sum, load_map, rho_bar):
    """Interior-point solve of the relaxation; None when unavailable/failed."""
    try:
        import cvxpy as cp
    except ImportError:  # pragma: no cover
        return None
    n_pairs = lamw.size
    x = cp.Variable(n_pairs, nonneg=True)
    rho = load_map @ x
    constraints = [row_sum @ x == np.ones(row_sum.shape[0]), rho <= rho_bar]
    prob = cp.Problem(cp.Minimize(cp.sum(cp.inv_pos(1.0 - rho))), constraints)
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.error.SolverError:
        return None
    if prob.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        raise InfeasibleRateError("relaxed association problem is infeasible")
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or x.value is None:
        return None
    xv = np.clip(x.value, 0.0, None)
    # renormalize rows so the point is a valid fractional association
    sums = np.asarray(row_sum @ xv).ravel()
    scale = np.where(sums > 0, 1.0 / np.maximum(sums, 1e-300), 1.0)
    xv = xv * np.asarray(row_sum.T @ scale).ravel()
    rho_v = load_map @ xv
    if (rho_v >= 1.0 - 1e-12).any():
        return None
    return xv


# ---------------------------------------------------------------------------
# sweeps over splits, rules and arrival rates
# ---------------------------------------------------------------------------

RULES = ("optimal", "best-sinr", "re", "scf")


def _rule_association(rule: str, scenario: Scenario, link: LinkTable,
                      beta: Optional[float] = None) -> Association:
    if rule == "best-sinr":
        return best_sinr(link)
    if rule == "re":
        return range_extension(scenario, link)
    if rule == "scf":
        if beta is None:
            raise ValueError("scf needs a beta threshold")
        return small_cell_first(link, beta)
    raise ValueError(f"unknown rule {rule!r}")


def _sweep_one_realization(config, seed, metric, ra_list, k_grid, rules,
                           lambda_grid, scf_betas, node_budget, epsilon, tol,
                           mcs) -> list[dict]:
    scenario = build_scenario(config, seed=seed)
    cfg = scenario.config
    rows: list[dict] = []

    def emit(ra, kk, rule, beta, lam, metric_name, value, certificate="", iters=0):
        rows.append({"ra": ra, "k": kk if kk is not None else "",
                     "rule": rule, "beta": beta if beta is not None else "",
                     "lambda": lam if lam is not None else "",
                     "metric": metric_name, "value": value,
                     "certificate": certificate, "iterations": iters,
                     "seed": seed})

    for ra_kind in ra_list:
        grid = [None] if ra_kind == "ccd" else list(k_grid)
        for kk in grid:
            link = build_link_table(scenario, RaScheme(ra_kind, kk), mcs)
            problem = AssignProblem.from_link(link, scenario.traffic,
                                              cfg.mean_file_size, cfg.rho_bar)
            for rule in rules:
                betas = scf_betas if rule == "scf" else [None]
                for beta in betas:
                    try:
                        if metric == "lambda_max":
                            if rule == "optimal":
                                seeds = _rule_seed_targets(scenario, link, scf_betas)
                                res = solve_minmax_load(
                                    AssignCosts.from_problem(problem),
                                    node_budget=node_budget,
                                    initial_targets=seeds)
                                emit(ra_kind, kk, rule, beta, None, metric,
                                     cfg.rho_bar / res.value, res.certificate,
                                     res.iterations)
                            else:
                                assoc = _rule_association(rule, scenario, link, beta)
                                emit(ra_kind, kk, rule, beta, None, metric,
                                     lambda_max_of_rule(assoc, link, scenario.traffic,
                                                        cfg.mean_file_size, cfg.rho_bar))
                        else:
                            for lam in lambda_grid:
                                try:
                                    _emit_delay_metric(
                                        emit, metric, rule, beta, lam, ra_kind, kk,
                                        scenario, link, problem, node_budget,
                                        epsilon, tol)
                                except Exception as exc:  # noqa: BLE001 - cell marker
                                    emit(ra_kind, kk, rule, beta, lam, metric,
                                         float("nan"), f"error:{type(exc).__name__}")
                    except Exception as exc:  # noqa: BLE001 - cell marker
                        emit(ra_kind, kk, rule, beta, None, metric,
                             float("nan"), f"error:{type(exc).__name__}")
    return rows


def _emit_delay_metric(emit, metric, rule, beta, lam, ra_kind, kk, scenario,
                       link, problem, node_budget, epsilon, tol):
    from . import queueing

    cfg = scenario.config
    if metric == "max_delay":
        if rule == "optimal":
            res = minmax_delay(lam, problem, epsilon, node_budget=node_budget)
            emit(ra_kind, kk, rule, beta, lam, metric, res.value,
                 res.certificate, res.iterations)
        else:
            assoc = _rule_association(rule, scenario, link, beta)
            rep = queueing.delays(assoc, link, scenario.traffic, lam,
                                  cfg.mean_file_size, cfg.rho_bar)
            emit(ra_kind, kk, rule, beta, lam, metric, rep.t_max)
    elif metric == "avg_delay":
        if rule == "optimal":
            res = avgdelay_lower_bound(lam, problem, tol)
            emit(ra_kind, kk, rule, beta, lam, "avg_delay_bound", res.value,
                 res.certificate, res.iterations)
        else:
            assoc = _rule_association(rule, scenario, link, beta)
            rep = queueing.delays(assoc, link, scenario.traffic, lam,
                                  cfg.mean_file_size, cfg.rho_bar)
            emit(ra_kind, kk, rule, beta, lam, metric, rep.t_system)
    else:
        raise ValueError(f"unknown metric {metric!r}")


def sweep(config, *, metric: str, ra_list: Sequence[str],
          k_grid: Optional[Sequence[int]] = None,
          rules: Sequence[str] = RULES,
          lambda_grid: Optional[Sequence[float]] = None,
          realizations: int = 1, base_seed: Optional[int] = None,
          scf_betas: Optional[Sequence[float]] = None,
          node_budget: Optional[int] = None, epsilon: float = 0.02,
          tol: float = 1e-5, mcs=DEFAULT_MCS, workers: int = 1) -> list[dict]:
    """Metric table over (RA, split, rule, arrival rate) and realizations.

    One row per table cell and realization; failed cells carry NaN with
    an ``error:...`` certificate instead of aborting the sweep.  Rows come
    back sorted by their identifying columns, independent of worker
    scheduling.
    """
    if metric not in ("lambda_max", "max_delay", "avg_delay"):
        raise ValueError(f"unknown metric {metric!r}")
    if metric != "lambda_max" and not lambda_grid:
        raise ValueError(f"{metric} requires a lambda_grid")
    if k_grid is None:
        k_grid = range(1, config.total_subchannels_per_macro)
    if scf_betas is None:
        scf_betas = mcs.thresholds_db
    if base_seed is None:
        base_seed = config.seed
    seeds = [base_seed + r for r in range(realizations)]
    args = [(config, s, metric, tuple(ra_list), tuple(k_grid), tuple(rules),
             tuple(lambda_grid or ()), tuple(scf_betas), node_budget, epsilon,
             tol, mcs) for s in seeds]

    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_sweep_worker, args))
    else:
        chunks = [_sweep_worker(a) for a in args]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r["metric"], r["ra"], str(r["k"]), r["rule"],
                             str(r["beta"]), str(r["lambda"]), r["seed"]))
    return rows


def _sweep_worker(args) -> list[dict]:
    return _sweep_one_realization(*args)


def aggregate_rows(rows: Sequence[dict]) -> list[dict]:
    """Mean metric over realizations for each table cell; errors counted."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (row["metric"], row["ra"], row["k"], row["rule"], row["beta"],
               row["lambda"])
        groups.setdefault(key, []).append(row)
    out = []
    for key, members in sorted(groups.items(), key=lambda kv: tuple(map(str, kv[0]))):
        values = [m["value"] for m in members if np.isfinite(m["value"])]
        out.append({
            "metric": key[0], "ra": key[1], "k": key[2], "rule": key[3],
            "beta": key[4], "lambda": key[5],
            "value": float(np.mean(values)) if values else float("nan"),
            "n": len(values), "errors": len(members) - len(values),
        })
    return out
