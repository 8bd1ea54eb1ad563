"""Optimal two-stage mixed-observation policy by value iteration on simplex grids.

Refinement: ``V(r) = min{1 - max(q1, q2), c + E[V(r')]}`` on the 3-simplex of
``(r11, r10, r01)`` with the observation drawn from s1.  Scanning:
``U(p) = min{v(p), c + min(Phi_c(p), Phi_s)}`` on the 2-simplex of
``(p11, pmix)`` where ``v(p11, pmix) = V(p11, pmix/2, pmix/2)``,
``Phi_c(p) = E[U(p')]`` continues with the current pair and ``Phi_s`` is the
same expectation taken from the prior (a fresh pair).

Each expectation becomes a sparse row-stochastic matrix acting on node values:
the quadrature point ``z_i`` of each component density carries weight
``P(component | belief) * w_i`` and is spread over the vertices of the cell that
contains the updated belief.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import ndimage, sparse

from .belief import QStats, ScanBelief
from .models import DEFAULT_QUAD_NODES, ModelPair, ObservationStream
from .records import DEFAULT_MAX_SAMPLES, TrialRecord
from .simplex import SimplexGrid

DEFAULT_RES2 = 201
DEFAULT_RES3 = 61
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 2000
REGION_TOL = 1e-6
_CHUNK_ENTRIES = 2_000_000


class DPConvergenceError(RuntimeError):
    """Value iteration hit its sweep limit before reaching the tolerance."""

    def __init__(self, kind, residual, sweeps):
        super().__init__(f"{kind} value iteration did not converge: residual {residual:.3e} "
                         f"after {sweeps} sweeps")
        self.kind = kind
        self.residual = residual
        self.sweeps = sweeps


@dataclass(frozen=True, eq=False)
class ValueSurface:
    """Node values of one DP function on a simplex grid."""

    grid: SimplexGrid
    values: np.ndarray
    kind: str
    phi_s: Optional[float] = None
    residual: float = 0.0
    sweeps: int = 0
    continuation: Optional[np.ndarray] = field(default=None, repr=False)

    KINDS = ("V_refine", "v_slice", "U_scan", "Phi_c")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"kind must be one of {self.KINDS}")
        if len(self.values) != self.grid.size:
            raise ValueError("one value per grid node is required")
        if self.values.min() < -1e-12 or self.values.max() > 1.0 + 1e-12:
            raise ValueError("surface values must lie in [0, 1]")

    def __call__(self, points) -> np.ndarray:
        return self.grid.interpolate(self.values, points)

    def at(self, point) -> float:
        return float(self.grid.interpolate_one(self.values, tuple(point)))


@dataclass(frozen=True, eq=False)
class PolicyRegions:
    """Stop-scanning (``r_tau``) and switch (``r_phi``) masks on the scan grid."""

    grid: SimplexGrid
    r_tau: np.ndarray
    r_phi: np.ndarray


def optimal_terminal_decision(q: QStats) -> str:
    """Claim s1 only when its posterior is strictly larger."""
    return "s1" if q.q1 > q.q2 else "s2"


# -- transition operators -------------------------------------------------------

def _assemble(grid: SimplexGrid, n_rows: int, row_parts):
    """Sparse matrix from per-chunk ``(rows, comp_w, points, quad_w)`` lists."""
    blocks = []
    dim = grid.dim
    for start, stop, comps in row_parts:
        rows_all, cols_all, vals_all = [], [], []
        for comp_w, pts, quad_w in comps:
            c, q = pts.shape[0], pts.shape[1]
            idx, bary = grid.locate(pts.reshape(-1, dim))
            vals = (comp_w[:, None, None] * quad_w[None, :, None]
                    * bary.reshape(c, q, dim + 1)).ravel()
            rows = np.repeat(np.arange(c), q * (dim + 1))
            keep = vals > 0.0
            rows_all.append(rows[keep])
            cols_all.append(idx.ravel()[keep])
            vals_all.append(vals[keep])
        block = sparse.coo_matrix(
            (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
            shape=(stop - start, grid.size)).tocsr()
        block.sum_duplicates()
        blocks.append(block)
    return sparse.vstack(blocks, format="csr")


def _chunks(n_rows, per_row):
    step = max(1, _CHUNK_ENTRIES // max(per_row, 1))
    for start in range(0, n_rows, step):
        yield start, min(n_rows, start + step)


def _refine_posterior(r, t):
    """Updated (r11, r10, r01) for nodes ``r`` (m, 3) and log ratios ``t`` (q,)."""
    q1 = r[:, 0] + r[:, 1]
    r00 = np.clip(1.0 - r.sum(axis=1), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(q1 > 0, r[:, 0] / q1, 0.0)
        b = np.where(q1 < 1, r[:, 2] / (r[:, 2] + r00), 0.0)
        logit = np.log(q1) - np.log1p(-q1)
    x = logit[:, None] + t[None, :]
    q1n = np.where(np.isnan(x), q1[:, None], 0.5 * (1.0 + np.tanh(0.5 * x)))
    q1n = np.where(q1[:, None] <= 0.0, 0.0, np.where(q1[:, None] >= 1.0, 1.0, q1n))
    return np.stack([a[:, None] * q1n, (1.0 - a[:, None]) * q1n, b[:, None] * (1.0 - q1n)], axis=-1)


@lru_cache(maxsize=8)
def refine_operator(model: ModelPair, grid3: SimplexGrid, n_quad: int = DEFAULT_QUAD_NODES):
    """Matrix ``M`` with ``(M V)[i] = E[V(r')]`` from refinement node ``i``."""
    rules = [(1, model.quadrature(1, 1, n_quad)), (0, model.quadrature(1, 0, n_quad))]
    ts = {h: np.asarray(model.log_ratio(1, x), dtype=float) for h, (x, _) in rules}
    nodes = grid3.nodes
    per_row = sum(len(x) for _, (x, _) in rules) * 4

    def parts():
        for start, stop in _chunks(grid3.size, per_row):
            r = nodes[start:stop]
            q1 = r[:, 0] + r[:, 1]
            comps = []
            for h, (_, w) in rules:
                comps.append((q1 if h == 1 else 1.0 - q1, _refine_posterior(r, ts[h]), w))
            yield start, stop, comps

    return _assemble(grid3, grid3.size, parts())


def _scan_posterior(p, lg):
    """Updated (p11, pmix) for beliefs ``p`` (m, 2) and log g2,g1,g0 rows ``lg`` (3, q)."""
    p00 = np.clip(1.0 - p.sum(axis=1), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        lp = np.log(np.stack([p[:, 0], p[:, 1], p00], axis=1))
    x = lp[:, :, None] + lg[None, :, :]
    top = x.max(axis=1, keepdims=True)
    e = np.exp(x - top)
    e /= e.sum(axis=1, keepdims=True)
    return np.stack([e[:, 0], e[:, 1]], axis=-1)


def _scan_rows(model, grid2, points, n_quad):
    rules = [model.quadrature(2, k, n_quad) for k in (2, 1, 0)]
    lgs = []
    for x, _ in rules:
        lgs.append(np.stack([np.asarray(model.logpdf(2, k, x), dtype=float) for k in (2, 1, 0)]))
    per_row = sum(len(x) for x, _ in rules) * 3
    p00 = np.clip(1.0 - points.sum(axis=1), 0.0, 1.0)
    weights = [points[:, 0], points[:, 1], p00]

    def parts():
        for start, stop in _chunks(len(points), per_row):
            p = points[start:stop]
            comps = [(weights[k][start:stop], _scan_posterior(p, lgs[k]), rules[k][1])
                     for k in range(3)]
            yield start, stop, comps

    return _assemble(grid2, len(points), parts())


@lru_cache(maxsize=8)
def scan_operator(model: ModelPair, grid2: SimplexGrid, prior: ScanBelief,
                  n_quad: int = DEFAULT_QUAD_NODES):
    """``(M_c, m_s)``: continuation matrix and the fresh-pair row from ``prior``."""
    m_c = _scan_rows(model, grid2, np.asarray(grid2.nodes), n_quad)
    m_s = _scan_rows(model, grid2, np.array([[prior.p11, prior.pmix]]), n_quad)
    return m_c, np.asarray(m_s.todense()).ravel()


# -- value iteration ------------------------------------------------------------

def refine_stop_cost(grid3: SimplexGrid) -> np.ndarray:
    r = grid3.nodes
    q1 = r[:, 0] + r[:, 1]
    q2 = r[:, 0] + r[:, 2]
    return np.clip(1.0 - np.maximum(q1, q2), 0.0, 1.0)


def _iterate(step, start, tol, max_iter, kind, require_convergence):
    cur = start
    residual = math.inf
    sweeps = 0
    while sweeps < max_iter:
        nxt = step(cur)
        sweeps += 1
        if np.any(nxt > cur + 1e-15):
            raise AssertionError(f"{kind} iterate increased at sweep {sweeps}")
        if np.any(nxt < -1e-15) or np.any(nxt > 1.0 + 1e-15):
            raise AssertionError(f"{kind} iterate left [0, 1] at sweep {sweeps}")
        residual = float(np.max(cur - nxt))
        cur = nxt
        if residual < tol:
            return cur, residual, sweeps
    if require_convergence:
        raise DPConvergenceError(kind, residual, sweeps)
    return cur, residual, sweeps


def refine_value_iteration(model: ModelPair, c: float, grid3: SimplexGrid,
                           tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                           n_quad: int = DEFAULT_QUAD_NODES, start: np.ndarray | None = None,
                           require_convergence: bool = True) -> ValueSurface:
    """Refinement value function.  ``max_iter`` sweeps from the stop cost give
    the optimal cost with at most that many refinement samples."""
    if grid3.dim != 3:
        raise ValueError("refinement grid must be 3-dimensional")
    if c <= 0:
        raise ValueError("c must be positive")
    m = refine_operator(model, grid3, n_quad)
    stop = refine_stop_cost(grid3)
    init = stop if start is None else np.minimum(stop, start)
    values, residual, sweeps = _iterate(lambda v: np.minimum(stop, c + m @ v), init, tol,
                                        max_iter, "refinement", require_convergence)
    cont = m @ values
    return ValueSurface(grid3, values, "V_refine", residual=residual, sweeps=sweeps,
                        continuation=cont)


def extract_v_slice(V_refine: ValueSurface, grid2: SimplexGrid, c: float | None = None) -> ValueSurface:
    """``v(p11, pmix) = V(p11, pmix/2, pmix/2)`` on the scanning grid.

    The slice runs along the ridge ``r10 = r01`` of the stop cost, where
    interpolating ``V`` itself would cut the kink.  With ``c`` given the stop
    cost is evaluated exactly and only the smooth continuation is interpolated.
    """
    p = np.asarray(grid2.nodes)
    pts = np.stack([p[:, 0], 0.5 * p[:, 1], 0.5 * p[:, 1]], axis=1)
    if c is None or V_refine.continuation is None:
        values = V_refine(pts)
    else:
        stop = 1.0 - (p[:, 0] + 0.5 * p[:, 1])
        values = np.minimum(stop, c + V_refine.grid.interpolate(V_refine.continuation, pts))
    return ValueSurface(grid2, np.clip(values, 0.0, 1.0), "v_slice")


def scan_value_iteration(model: ModelPair, c: float, v_slice: ValueSurface, prior: ScanBelief,
                         tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                         n_quad: int = DEFAULT_QUAD_NODES, start: np.ndarray | None = None,
                         require_convergence: bool = True):
    """Returns ``(U, Phi_c, phi_s)``."""
    grid2 = v_slice.grid
    m_c, m_s = scan_operator(model, grid2, prior, n_quad)
    v = v_slice.values
    init = v if start is None else np.minimum(v, start)

    def step(u):
        return np.minimum(v, c + np.minimum(m_c @ u, m_s @ u))

    u, residual, sweeps = _iterate(step, init, tol, max_iter, "scanning", require_convergence)
    phi_c = np.clip(m_c @ u, 0.0, 1.0)
    phi_s = float(m_s @ u)
    # Report U as the Bellman image of the reported Phi surfaces so the two
    # upper envelopes hold exactly.
    u = np.minimum(v, c + np.minimum(phi_c, phi_s))
    U = ValueSurface(grid2, u, "U_scan", phi_s=phi_s, residual=residual, sweeps=sweeps)
    return U, ValueSurface(grid2, phi_c, "Phi_c", phi_s=phi_s), phi_s


def extract_regions(U: ValueSurface, v: ValueSurface, Phi_c: ValueSurface, phi_s: float,
                    region_tol: float = REGION_TOL, tie_tol: float = 0.0) -> PolicyRegions:
    r_tau = (v.values - U.values) <= region_tol
    r_phi = Phi_c.values > phi_s + tie_tol
    return PolicyRegions(U.grid, r_tau, r_phi)


_TRIANGULAR = np.array([[0, 1, 1], [1, 1, 1], [1, 1, 0]])


def region_components(grid: SimplexGrid, mask) -> int:
    """Number of connected components of a node mask on a 2-simplex grid.

    Nodes are adjacent when they share an edge of the triangulation.
    """
    if grid.dim != 2:
        raise ValueError("components are counted on the 2-simplex grid")
    image = np.zeros((grid.n + 1, grid.n + 1), dtype=bool)
    lat = grid.lattice
    image[lat[:, 0], lat[:, 1]] = np.asarray(mask, dtype=bool)
    return int(ndimage.label(image, structure=_TRIANGULAR)[1])


# -- solved policy and its execution -------------------------------------------

@dataclass(frozen=True, eq=False)
class OptimalPolicy:
    model: ModelPair
    pi0: float
    c: float
    V_refine: ValueSurface
    v: ValueSurface
    U: ValueSurface
    Phi_c: ValueSurface
    phi_s: float
    regions: PolicyRegions
    region_tol: float = REGION_TOL

    def __post_init__(self):
        object.__setattr__(self, "_v_list", self.v.values.tolist())
        object.__setattr__(self, "_phi_list", self.Phi_c.values.tolist())
        object.__setattr__(self, "_cont_list", self.V_refine.continuation.tolist())

    @property
    def prior(self) -> ScanBelief:
        return ScanBelief.prior(self.pi0)

    def stop_scanning(self, p11: float, pmix: float, fresh: bool = False) -> bool:
        v = self.v.grid.interpolate_one(self._v_list, (p11, pmix))
        phi = self.phi_s if fresh else self.Phi_c.grid.interpolate_one(self._phi_list, (p11, pmix))
        return v <= self.c + min(phi, self.phi_s) + self.region_tol

    def switch(self, p11: float, pmix: float) -> bool:
        return self.Phi_c.grid.interpolate_one(self._phi_list, (p11, pmix)) > self.phi_s

    def stop_refining(self, r11: float, r10: float, r01: float) -> bool:
        stop = 1.0 - max(r11 + r10, r11 + r01)
        cont = self.V_refine.grid.interpolate_one(self._cont_list, (r11, r10, r01))
        return stop <= self.c + cont


def solve_optimal(model: ModelPair, pi0: float, c: float, res2: int = DEFAULT_RES2,
                  res3: int = DEFAULT_RES3, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER, n_quad: int = DEFAULT_QUAD_NODES,
                  region_tol: float = REGION_TOL, warm: OptimalPolicy | None = None) -> OptimalPolicy:
    """Solve both stages.  ``warm`` may hold a solution for a larger ``c``,
    whose surfaces dominate the new fixed point and so are valid starts."""
    grid3 = _grid(3, res3)
    grid2 = _grid(2, res2)
    prior = ScanBelief.prior(pi0)
    start_v = start_u = None
    if warm is not None and warm.c >= c and warm.V_refine.grid is grid3 and warm.U.grid is grid2:
        start_v, start_u = warm.V_refine.values, warm.U.values
    V = refine_value_iteration(model, c, grid3, tol, max_iter, n_quad, start=start_v)
    v = extract_v_slice(V, grid2, c)
    U, phi_c, phi_s = scan_value_iteration(model, c, v, prior, tol, max_iter, n_quad, start=start_u)
    regions = extract_regions(U, v, phi_c, phi_s, region_tol)
    return OptimalPolicy(model, pi0, c, V, v, U, phi_c, phi_s, regions, region_tol)


@lru_cache(maxsize=8)
def _grid(dim, res):
    return SimplexGrid(dim, res)


def _normalised3(l2, l1, l0):
    top = max(l2, l1, l0)
    e2 = math.exp(l2 - top) if l2 > -math.inf else 0.0
    e1 = math.exp(l1 - top) if l1 > -math.inf else 0.0
    e0 = math.exp(l0 - top) if l0 > -math.inf else 0.0
    s = e2 + e1 + e0
    return e2 / s, e1 / s


def _log(p):
    return math.log(p) if p > 0.0 else -math.inf


def run_optimal_trial(model: ModelPair, policy: OptimalPolicy, rng,
                      max_samples: int = DEFAULT_MAX_SAMPLES) -> TrialRecord:
    """Execute the solved policy, interpolating its surfaces at off-grid beliefs."""
    stream = ObservationStream(model, rng)
    lr20 = model.log_ratio_fn(2, 2, 0)
    lr10 = model.log_ratio_fn(2, 1, 0)
    lr_single = model.log_ratio_fn(1)
    prior = policy.prior
    p11, pmix = prior.p11, prior.pmix
    h1 = stream.bernoulli(policy.pi0)
    h2 = stream.bernoulli(policy.pi0)
    tau0 = 0
    switches = 0
    fresh = True
    while not policy.stop_scanning(p11, pmix, fresh):
        if tau0 >= max_samples:
            return TrialRecord("optimal", tau0, 0, switches, False, truncated=True)
        if not fresh and policy.switch(p11, pmix):
            switches += 1
            h1 = stream.bernoulli(policy.pi0)
            h2 = stream.bernoulli(policy.pi0)
            p11, pmix = prior.p11, prior.pmix
        z = stream.draw(2, int(h1) + int(h2))
        tau0 += 1
        p00 = max(0.0, 1.0 - p11 - pmix)
        l0 = _log(p00)
        p11, pmix = _normalised3(_log(p11) + lr20(z), _log(pmix) + lr10(z), l0)
        fresh = False
    r11, r10, r01 = p11, 0.5 * pmix, 0.5 * pmix
    tau1 = 0
    while not policy.stop_refining(r11, r10, r01):
        if tau0 + tau1 >= max_samples:
            return TrialRecord("optimal", tau0, tau1, switches, False, truncated=True)
        t = lr_single(stream.draw(1, int(h1)))
        tau1 += 1
        q1 = r11 + r10
        r00 = max(0.0, 1.0 - r11 - r10 - r01)
        a = r11 / q1 if q1 > 0.0 else 0.0
        b = r01 / (r01 + r00) if q1 < 1.0 else 0.0
        if 0.0 < q1 < 1.0:
            x = math.log(q1) - math.log1p(-q1) + t
            q1 = 1.0 / (1.0 + math.exp(-x)) if x > -700 else 0.0
        r11, r10, r01 = a * q1, (1.0 - a) * q1, b * (1.0 - q1)
    claim = optimal_terminal_decision(QStats(r11 + r10, r11 + r01))
    correct = bool(h1) if claim == "s1" else bool(h2)
    return TrialRecord("optimal", tau0, tau1, switches, correct)


# -- exact finite-horizon oracle ---------------------------------------------------

def finite_horizon_oracle(toy_model, c, T: int, start) -> Fraction:
    """Exact optimal refinement cost with at most ``T`` samples on a two-point alphabet.

    ``toy_model`` supplies ``p0``/``p1`` (P(Y=1) under H0/H1); ``start`` is
    ``(r11, r10, r01, r00)``.  Arithmetic is exact over fractions.
    """
    p0 = Fraction(toy_model.p0).limit_denominator(10 ** 9)
    p1 = Fraction(toy_model.p1).limit_denominator(10 ** 9)
    c = Fraction(c).limit_denominator(10 ** 12)
    lik = {1: {0: 1 - p1, 1: p1}, 0: {0: 1 - p0, 1: p0}}
    r0 = tuple(Fraction(x).limit_denominator(10 ** 12) for x in start)
    if sum(r0) != 1:
        raise ValueError("start belief must sum to 1")

    @lru_cache(maxsize=None)
    def value(r, steps_left):
        r11, r10, r01, r00 = r
        stop = 1 - max(r11 + r10, r11 + r01)
        if steps_left == 0:
            return stop
        cont = c
        for x in (0, 1):
            w = (r11 * lik[1][x], r10 * lik[1][x], r01 * lik[0][x], r00 * lik[0][x])
            total = sum(w)
            if total:
                cont += total * value(tuple(v / total for v in w), steps_left - 1)
        return min(stop, cont)

    return value(r0, T)
