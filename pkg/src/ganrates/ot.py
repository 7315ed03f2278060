"""Exact optimal transport between empirical measures.

Three exact routes share one result type:

* the transportation network simplex (general weights, any dimension),
* an assignment route for equal-size uniform measures, certified optimal by
  explicit dual potentials,
* the monotone (quantile) coupling on the real line.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numba
import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .measures import EmpiricalMeasure, stream


class DegenerateInput(ValueError):
    """A measure carries no mass."""


class TooLarge(ValueError):
    """Brute force requested on more atoms than it can enumerate."""


class SolverFailure(RuntimeError):
    pass


DENSE_ASSIGNMENT_MAX = 4096


@dataclass
class TransportPlan:
    """Optimal coupling (sparse), its cost and dual potentials.

    ``source_potential[i] - target_potential[j] <= c(x_i, y_j)`` for all pairs,
    and the dual value ``a @ source_potential - b @ target_potential`` equals
    the primal cost at optimality.
    """

    coupling: sparse.csr_matrix
    cost: float
    source_potential: np.ndarray
    target_potential: np.ndarray
    power: int = 1

    @property
    def dual_value(self) -> float:
        a = np.asarray(self.coupling.sum(axis=1)).ravel()
        b = np.asarray(self.coupling.sum(axis=0)).ravel()
        return float(a @ self.source_potential - b @ self.target_potential)

    @property
    def distance(self) -> float:
        return self.cost ** (1.0 / self.power)


def cost_matrix(x: np.ndarray, y: np.ndarray, power: int = 1) -> np.ndarray:
    c = cdist(x, y)
    return c if power == 1 else c ** power


# ---------------------------------------------------------------------------
# transportation network simplex
# ---------------------------------------------------------------------------

def _northwest_corner(a: np.ndarray, b: np.ndarray):
    n, m = len(a), len(b)
    ra, rb = a.astype(float).copy(), b.astype(float).copy()
    cells, flows = [], []
    i = j = 0
    while True:
        q = max(min(ra[i], rb[j]), 0.0)
        cells.append((i, j))
        flows.append(q)
        ra[i] -= q
        rb[j] -= q
        if i == n - 1 and j == m - 1:
            break
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return cells, flows


def network_simplex(a: np.ndarray, b: np.ndarray, C: np.ndarray, tol: float = 1e-12,
                    max_iter: int | None = None):
    """Solve ``min <C, P>`` over couplings of ``a`` and ``b``.

    Returns ``(cells, flows, u, v)``: the basic cells with their flows and
    duals satisfying ``u_i + v_j <= C_ij`` (equality on the basis).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.sum() <= 0 or b.sum() <= 0:
        raise DegenerateInput("measure with zero total mass")
    n, m = C.shape
    b = b * (a.sum() / b.sum())
    cells, flows = _northwest_corner(a, b)
    basis = {cell: f for cell, f in zip(cells, flows)}
    scale = max(float(np.abs(C).max()), 1.0)
    max_iter = max_iter or 50 * (n + m) ** 2
    N = n + m
    u = np.zeros(n)
    v = np.zeros(m)

    for _ in range(max_iter):
        # tree structure and duals by BFS from row 0
        adj = [[] for _ in range(N)]
        for (i, j) in basis:
            adj[i].append(n + j)
            adj[n + j].append(i)
        parent = np.full(N, -1)
        depth = np.zeros(N, dtype=int)
        seen = np.zeros(N, dtype=bool)
        seen[0] = True
        u[0] = 0.0
        queue = [0]
        for node in queue:
            for nb in adj[node]:
                if seen[nb]:
                    continue
                seen[nb] = True
                parent[nb] = node
                depth[nb] = depth[node] + 1
                if node < n:
                    v[nb - n] = C[node, nb - n] - u[node]
                else:
                    u[nb] = C[nb, node - n] - v[node - n]
                queue.append(nb)
        red = C - u[:, None] - v[None, :]
        k = int(np.argmin(red))
        ie, je = divmod(k, m)
        if red[ie, je] >= -tol * scale:
            break
        # cycle: path from column je to row ie through the tree
        p, q = n + je, ie
        left, right = [], []
        while p != q:
            if depth[p] >= depth[q]:
                left.append(p)
                p = parent[p]
            else:
                right.append(q)
                q = parent[q]
        lca = p
        nodes = left + [lca] + right[::-1]
        arcs = []
        for s, t in zip(nodes[:-1], nodes[1:]):
            arcs.append((s, t - n) if s < n else (t, s - n))
        minus = arcs[0::2]
        theta = min(basis[c] for c in minus)
        leaving = next(c for c in minus if basis[c] == theta)
        for c in minus:
            basis[c] -= theta
        for c in arcs[1::2]:
            basis[c] += theta
        del basis[leaving]
        basis[(ie, je)] = theta
    else:
        raise SolverFailure("network simplex hit the iteration cap")

    cells = list(basis)
    flows = np.maximum(np.array([basis[c] for c in cells]), 0.0)
    return cells, flows, u.copy(), v.copy()


# ---------------------------------------------------------------------------
# assignment route
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _auction(indptr, indices, cost, prices, col, owner, eps):
    """Gauss-Seidel forward auction (minimization) on a sparse bipartite graph.

    Unassigned rows bid for their cheapest column; ``col``/``owner`` and
    ``prices`` are updated in place, so a call can resume from an earlier
    state.  On return every row is assigned and eps-complementary slackness
    holds.  The caller must ensure a perfect matching exists.
    """
    n = indptr.size - 1
    stack = np.empty(n, np.int64)
    top = 0
    for i in range(n - 1, -1, -1):
        if col[i] < 0:
            stack[top] = i
            top += 1
    while top > 0:
        top -= 1
        i = stack[top]
        best = -np.inf
        second = -np.inf
        bj = -1
        for e in range(indptr[i], indptr[i + 1]):
            j = indices[e]
            val = -cost[e] - prices[j]
            if val > best:
                second = best
                best = val
                bj = j
            elif val > second:
                second = val
        if second == -np.inf:
            second = best - 1.0
        prices[bj] += best - second + eps
        old = owner[bj]
        owner[bj] = i
        col[i] = bj
        if old >= 0:
            col[old] = -1
            stack[top] = old
            top += 1


@numba.njit(cache=True)
def _dense_check(x, y, power, v, own, slack, extra):
    """Dense c-transform ``u_i = min_j c_ij - v_j`` plus the ``extra`` best
    columns of every row whose transform undercuts its current profit."""
    n, D = x.shape
    m = y.shape[0]
    u = np.empty(n)
    out_r = np.empty(n * extra, np.int64)
    out_c = np.empty(n * extra, np.int64)
    cnt = 0
    bestv = np.empty(extra)
    bestj = np.empty(extra, np.int64)
    for i in range(n):
        for q in range(extra):
            bestv[q] = np.inf
            bestj[q] = -1
        for j in range(m):
            s = 0.0
            for d in range(D):
                t = x[i, d] - y[j, d]
                s += t * t
            r = (np.sqrt(s) if power == 1 else s ** (0.5 * power)) - v[j]
            if r < bestv[extra - 1]:
                q = extra - 1
                while q > 0 and bestv[q - 1] > r:
                    bestv[q] = bestv[q - 1]
                    bestj[q] = bestj[q - 1]
                    q -= 1
                bestv[q] = r
                bestj[q] = j
        u[i] = bestv[0]
        if bestv[0] < own[i] - slack:
            for q in range(extra):
                out_r[cnt] = i
                out_c[cnt] = bestj[q]
                cnt += 1
    return u, out_r[:cnt], out_c[:cnt]


@numba.njit(cache=True)
def _column_potentials(indptr, indices, cost, col, max_relax):
    """Largest ``v <= 0`` with ``v_j <= v_col[i] + c_ij - c_i,col[i]`` on every edge.

    These are shortest-path distances in the residual graph of an optimal
    matching (queue-based Bellman-Ford; no negative cycle exists at an
    optimum).  Returns ``(v, ok)``; ``ok`` is False if relaxation runs away.
    """
    n = col.size
    row_of = np.empty(n, np.int64)
    own = np.empty(n)
    for i in range(n):
        row_of[col[i]] = i
        for e in range(indptr[i], indptr[i + 1]):
            if indices[e] == col[i]:
                own[i] = cost[e]
    v = np.zeros(n)
    queue = np.empty(n, np.int64)
    inq = np.ones(n, np.bool_)
    for j in range(n):
        queue[j] = j
    head = 0
    size = n
    relax = 0
    while size > 0:
        s = queue[head]
        head = (head + 1) % n
        size -= 1
        inq[s] = False
        i = row_of[s]
        for e in range(indptr[i], indptr[i + 1]):
            j = indices[e]
            cand = v[s] + cost[e] - own[i]
            if cand < v[j] - 1e-14:
                v[j] = cand
                relax += 1
                if relax > max_relax:
                    return v, False
                if not inq[j]:
                    queue[(head + size) % n] = j
                    size += 1
                    inq[j] = True
    return v, True


def _matching_duals(x, y, col, power, tol, k, extra=8, max_rounds=200):
    """Certifying duals for an optimal matching ``col`` (complementary slackness is exact)."""
    n = x.shape[0]
    rows, cols = _knn_edges(x, y, k)
    rows = np.concatenate([rows, np.arange(n)])
    cols = np.concatenate([cols, col])
    slack = tol / 10.0 + 1e-13
    for _ in range(max_rounds):
        G = sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
        G.sum_duplicates()
        indptr = G.indptr.astype(np.int64)
        indices = G.indices.astype(np.int64)
        er = np.repeat(np.arange(n), np.diff(indptr))
        c = np.linalg.norm(x[er] - y[indices], axis=1) ** power
        v, ok = _column_potentials(indptr, indices, c, col.astype(np.int64), 50 * n * n + 1000)
        if not ok:
            raise SolverFailure("matching is not optimal; residual graph has a negative cycle")
        own = np.linalg.norm(x - y[col], axis=1) ** power - v[col]
        u, new_r, new_c = _dense_check(x, y, power, v, own, slack, extra)
        if new_r.size == 0:
            # u is the exact c-transform; it can only undercut own by the slack
            return u, v
        rows = np.concatenate([rows, new_r])
        cols = np.concatenate([cols, new_c])
    raise SolverFailure("assignment certificate did not close")


def _knn_edges(x, y, k):
    n = x.shape[0]
    k = min(k, n)
    _, idx = cKDTree(y).query(x, k=k)
    _, idx2 = cKDTree(x).query(y, k=k)
    idx = idx.reshape(n, k)
    idx2 = idx2.reshape(n, k)
    rows = np.concatenate([np.repeat(np.arange(n), k), idx2.ravel()])
    cols = np.concatenate([idx.ravel(), np.repeat(np.arange(n), k)])
    return rows, cols


def _coincident_pairs(x, y):
    """Greedy pairing of rows of ``x`` with bitwise equal rows of ``y``."""
    free = {}
    for j, key in enumerate(map(bytes, y)):
        free.setdefault(key, []).append(j)
    pairs = []
    for i, key in enumerate(map(bytes, x)):
        bucket = free.get(key)
        if bucket:
            pairs.append((i, bucket.pop()))
    return pairs


def _sparse_auction(x, y, power, tol, k, theta=8.0, extra=8, max_rounds=200):
    n = x.shape[0]
    if power == 1:
        pairs = _coincident_pairs(x, y)
        if pairs:
            # shared atoms cost nothing under W1; match them and solve the rest
            pi, pj = (np.array(t, dtype=np.int64) for t in zip(*pairs))
            ri = np.setdiff1d(np.arange(n), pi)
            rj = np.setdiff1d(np.arange(n), pj)
            col = np.empty(n, np.int64)
            col[pi] = pj
            if ri.size == 0:
                return col, np.zeros(n), np.zeros(n)
            sub, _, sv = _sparse_auction(x[ri], y[rj], 1, tol, k, theta, extra, max_rounds)
            col[ri] = rj[sub]
            # phi = c-transform of the reduced column duals is 1-Lipschitz, so
            # (phi(x), -phi(y)) is feasible for the full problem at no loss
            phi = PotentialFn(y[rj], -sv)
            return col, phi(x), -phi(y)
    eps_final = tol / 10.0
    rows, cols = _knn_edges(x, y, k)
    prices = np.zeros(n)
    col = -np.ones(n, np.int64)
    owner = -np.ones(n, np.int64)
    eps = None
    for _ in range(max_rounds):
        G = sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
        G.sum_duplicates()
        if eps is None and np.any(maximum_bipartite_matching(G, perm_type="column") < 0):
            k = 2 * k
            rows, cols = _knn_edges(x, y, k)
            continue
        indptr = G.indptr.astype(np.int64)
        indices = G.indices.astype(np.int64)
        er = np.repeat(np.arange(n), np.diff(indptr))
        c = np.linalg.norm(x[er] - y[indices], axis=1) ** power
        if eps is None:
            eps = max(float(c.max()) / 4.0, eps_final)
        # eps-scaling, warm-started from the current prices
        while True:
            col[:] = -1
            owner[:] = -1
            _auction(indptr, indices, c, prices, col, owner, eps)
            if eps <= eps_final:
                break
            eps = max(eps / theta, eps_final)
        v = -prices
        own = np.linalg.norm(x - y[col], axis=1) ** power - v[col]
        u, new_r, new_c = _dense_check(x, y, power, v, own, eps_final + 1e-13, extra)
        if new_r.size == 0:
            return col, u, v
        rows = np.concatenate([rows, new_r])
        cols = np.concatenate([cols, new_c])
        # restart the scaling at the size of the worst violation
        eps = max(float(np.max(own - u)), eps_final)
    raise SolverFailure("assignment certificate did not close")


def assignment(x: np.ndarray, y: np.ndarray, power: int = 1, tol: float = 1e-10, k: int = 16,
               duals: bool = True):
    """Optimal matching of two equal-size point sets with certifying duals.

    Problems up to ``DENSE_ASSIGNMENT_MAX`` points go to a dense solver; their
    duals, when asked for, are residual shortest-path potentials of that
    matching, grown over a k-nearest-neighbour graph until the dense
    c-transform check passes.  Larger ones run an eps-scaling auction
    on a k-nearest-neighbour graph and add whatever edges the dense
    c-transform check flags until the certificate closes; the returned
    matching is then optimal to within ``tol`` in mean cost.
    Returns ``(col_of_row, u, v)`` with ``u_i + v_j <= c_ij`` everywhere;
    ``u, v`` are ``None`` with ``duals=False``.
    """
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("assignment needs equal sizes")
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if n <= DENSE_ASSIGNMENT_MAX:
        rows, cols = linear_sum_assignment(cost_matrix(x, y, power))
        col_of_row = np.empty(n, dtype=int)
        col_of_row[rows] = cols
        if not duals:
            return col_of_row, None, None
        u, v = _matching_duals(x, y, col_of_row, power, tol, k)
        return col_of_row, u, v
    col, u, v = _sparse_auction(x, y, power, tol, k)
    return col.astype(int), (u if duals else None), (v if duals else None)


# ---------------------------------------------------------------------------
# one-dimensional route
# ---------------------------------------------------------------------------

def _cdf_gap(x, a, y, b):
    """Merged support and ``F_mu - F_nu`` on each gap between support points."""
    t = np.concatenate([x, y])
    mass = np.concatenate([a, -b])
    order = np.argsort(t, kind="stable")
    t, mass = t[order], mass[order]
    gap = np.cumsum(mass)[:-1]
    return t, gap


def w1_1d(x, a, y, b) -> float:
    """``int |F_mu - F_nu|`` on the line."""
    t, gap = _cdf_gap(np.asarray(x, float).ravel(), np.asarray(a, float),
                      np.asarray(y, float).ravel(), np.asarray(b, float))
    return float(np.abs(gap) @ np.diff(t))


def _monotone_plan(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> TransportPlan:
    x, y = mu.points[:, 0], nu.points[:, 0]
    ox, oy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    cells, flows = _northwest_corner(mu.weights[ox], nu.weights[oy])
    rows = np.array([ox[i] for i, _ in cells])
    cols = np.array([oy[j] for _, j in cells])
    flows = np.maximum(np.asarray(flows), 0.0)
    P = sparse.csr_matrix((flows, (rows, cols)), shape=(mu.n, nu.n))
    pot = _potential_1d(mu, nu)
    f = pot.values_at(mu.points)
    g = pot.values_at(nu.points)
    cost = float(flows @ np.abs(x[rows] - y[cols]))
    return TransportPlan(P, cost, f, g, 1)


# ---------------------------------------------------------------------------
# public solvers
# ---------------------------------------------------------------------------

def _check(mu: EmpiricalMeasure, nu: EmpiricalMeasure):
    if mu.dim != nu.dim:
        raise ValueError("measures live in different dimensions")
    if mu.weights.sum() <= 0 or nu.weights.sum() <= 0:
        raise DegenerateInput("measure with zero total mass")


def _solve(mu: EmpiricalMeasure, nu: EmpiricalMeasure, power: int, method: str) -> TransportPlan:
    _check(mu, nu)
    if method == "auto":
        if power == 1 and mu.dim == 1:
            method = "monotone"
        elif mu.n == nu.n and mu.is_uniform and nu.is_uniform:
            method = "assignment"
        else:
            method = "simplex"
    if method == "monotone":
        if power != 1 or mu.dim != 1:
            raise ValueError("monotone route is for W1 on the line")
        return _monotone_plan(mu, nu)
    if method == "assignment":
        if not (mu.n == nu.n and mu.is_uniform and nu.is_uniform):
            raise ValueError("assignment route needs equal-size uniform measures")
        n = mu.n
        col, u, v = assignment(mu.points, nu.points, power)
        P = sparse.csr_matrix((np.full(n, 1.0 / n), (np.arange(n), col)), shape=(n, n))
        diff = mu.points - nu.points[col]
        cost = float(np.mean(np.linalg.norm(diff, axis=1) ** power))
        return TransportPlan(P, cost, u, -v, power)
    if method == "simplex":
        C = cost_matrix(mu.points, nu.points, power)
        cells, flows, u, v = network_simplex(mu.weights, nu.weights, C)
        rows = np.array([c[0] for c in cells])
        cols = np.array([c[1] for c in cells])
        P = sparse.csr_matrix((flows, (rows, cols)), shape=(mu.n, nu.n))
        cost = float(flows @ C[rows, cols])
        return TransportPlan(P, cost, u, -v, power)
    raise ValueError(f"unknown method {method!r}")


def w1_exact(mu: EmpiricalMeasure, nu: EmpiricalMeasure, method: str = "auto") -> TransportPlan:
    """Optimal W1 plan with Euclidean ground cost."""
    return _solve(mu, nu, 1, method)


def w1(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """W1 value only, through the cheapest exact route."""
    _check(mu, nu)
    if mu.dim == 1:
        return w1_1d(mu.points, mu.weights, nu.points, nu.weights)
    if mu.n == nu.n and mu.is_uniform and nu.is_uniform:
        col, _, _ = assignment(mu.points, nu.points, 1, duals=False)
        return float(np.mean(np.linalg.norm(mu.points - nu.points[col], axis=1)))
    return w1_exact(mu, nu).cost


def w2_exact(mu: EmpiricalMeasure, nu: EmpiricalMeasure, method: str = "auto") -> float:
    """W2 with Euclidean ground metric (squared-cost transport, then square root)."""
    if method == "auto" and mu.dim == 1 and mu.n == nu.n and mu.is_uniform and nu.is_uniform:
        x, y = np.sort(mu.points[:, 0]), np.sort(nu.points[:, 0])
        return float(math.sqrt(np.mean((x - y) ** 2)))
    if method == "auto" and mu.dim == 1:
        method = "simplex"
    return _solve(mu, nu, 2, method).distance


def w1_bruteforce(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Minimum average matching cost over all permutations (test oracle)."""
    n = mu.n
    if nu.n != n or not (mu.is_uniform and nu.is_uniform):
        raise ValueError("brute force needs equal-size uniform measures")
    if n > 8:
        raise TooLarge("brute force limited to 8 atoms")
    best = math.inf
    for perm in itertools.permutations(range(n)):
        total = 0.0
        for i, j in enumerate(perm):
            total += math.sqrt(sum((p - q) ** 2 for p, q in zip(mu.points[i], nu.points[j])))
        best = min(best, total / n)
    return best


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

@dataclass
class PotentialFn:
    """``f(x) = min_k (values_k + |x - anchors_k|_2) - offset``; 1-Lipschitz.

    With no anchors the function is the constant ``-offset``.
    """

    anchors: np.ndarray
    values: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        self.anchors = np.asarray(self.anchors, dtype=float)
        if self.anchors.ndim == 1:
            self.anchors = self.anchors[:, None]
        self.values = np.asarray(self.values, dtype=float)
        if self.anchors.shape[1] == 1 and len(self.anchors):
            order = np.argsort(self.anchors[:, 0], kind="stable")
            t = self.anchors[order, 0]
            h = self.values[order]
            # tightened anchor values: the lower envelope evaluated at each anchor
            h = np.minimum(h, t + np.minimum.accumulate(h - t))
            h = np.minimum(h, np.minimum.accumulate((h + t)[::-1])[::-1] - t)
            self._line = (t, h)
        else:
            self._line = None

    @classmethod
    def constant(cls, dim: int, value: float = 0.0) -> "PotentialFn":
        return cls(np.zeros((0, dim)), np.zeros(0), -float(value))

    @property
    def dim(self) -> int:
        return self.anchors.shape[1]

    def values_at(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if self.dim == 1 else x[None, :]
        if not len(self.anchors):
            return np.full(x.shape[0], -self.offset)
        if self._line is not None:
            t, h = self._line
            s = x[:, 0]
            k = np.searchsorted(t, s)
            lo = np.clip(k - 1, 0, len(t) - 1)
            hi = np.clip(k, 0, len(t) - 1)
            out = np.minimum(h[lo] + np.abs(s - t[lo]), h[hi] + np.abs(s - t[hi]))
        else:
            out = np.empty(x.shape[0])
            step = max(1, 2_000_000 // max(len(self.values), 1))
            for s in range(0, x.shape[0], step):
                out[s:s + step] = (cdist(x[s:s + step], self.anchors) + self.values).min(axis=1)
        return out - self.offset

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.values_at(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """A.e. gradient ``(x - a_k) / |x - a_k|`` at the minimizing anchor ``k``.

        On the line the right derivative is returned everywhere; elsewhere the
        gradient is taken as zero on anchors.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if self.dim == 1 else x[None, :]
        if not len(self.anchors):
            return np.zeros_like(x)
        if self._line is not None:
            # right derivative of the envelope, so kinks at anchors still move points
            t, h = self._line
            s = x[:, 0]
            k = np.searchsorted(t, s, side="right")
            lo = np.clip(k - 1, 0, len(t) - 1)
            hi = np.clip(k, 0, len(t) - 1)
            rising = h[lo] + (s - t[lo]) < h[hi] + (t[hi] - s)
            rising = np.where(k == 0, False, np.where(k == len(t), True, rising))
            return np.where(rising, 1.0, -1.0)[:, None]
        idx = np.empty(x.shape[0], dtype=int)
        step = max(1, 2_000_000 // max(len(self.values), 1))
        for s in range(0, x.shape[0], step):
            idx[s:s + step] = (cdist(x[s:s + step], self.anchors) + self.values).argmin(axis=1)
        diff = x - self.anchors[idx]
        norm = np.linalg.norm(diff, axis=1, keepdims=True)
        return np.divide(diff, norm, out=np.zeros_like(diff), where=norm > 0)

    def recentered(self) -> "PotentialFn":
        zero = np.zeros((1, self.dim))
        base = float(self.values_at(zero)[0]) + self.offset
        return PotentialFn(self.anchors, self.values, base)

    def to_dict(self) -> dict:
        return {"anchors": self.anchors.tolist(), "values": self.values.tolist(), "offset": self.offset,
                "dim": self.dim}

    @classmethod
    def from_dict(cls, data: dict) -> "PotentialFn":
        anchors = np.array(data["anchors"], float)
        if anchors.size == 0:
            anchors = anchors.reshape(0, int(data.get("dim", 1)))
        return cls(anchors, np.array(data["values"], float), float(data["offset"]))


def _potential_1d(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> PotentialFn:
    """Exact W1 potential on the line: ``f' = -sign(F_mu - F_nu)``."""
    t, gap = _cdf_gap(mu.points[:, 0], mu.weights, nu.points[:, 0], nu.weights)
    vals = np.concatenate([[0.0], np.cumsum(-np.sign(gap) * np.diff(t))])
    return PotentialFn(t[:, None], vals)


def kantorovich_potential(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> PotentialFn:
    """1-Lipschitz ``f`` with ``mu f - nu f = W1(mu, nu)`` and ``f(0) = 0``."""
    _check(mu, nu)
    if mu.dim == 1:
        return _potential_1d(mu, nu).recentered()
    plan = w1_exact(mu, nu)
    # c-transform of the source duals, anchored on the target atoms
    C = cost_matrix(mu.points, nu.points)
    g = np.max(plan.source_potential[:, None] - C, axis=0)
    return PotentialFn(nu.points, g).recentered()


# ---------------------------------------------------------------------------
# empirical-measure rates
# ---------------------------------------------------------------------------

def uniform_cube(D: int) -> Callable[[int, np.random.Generator], np.ndarray]:
    return lambda n, rng: rng.random((n, D))


PROXY_FACTOR = 64


def rate_cell(D: int, n: int, rep: int, seed: int, law=None, proxy_size: int | None = None) -> float:
    """One replicate of ``W1(P_n, proxy)``.

    On the line the proxy for the population law is an independent sample of
    ``proxy_size`` atoms; in higher dimension it is an independent sample of
    the same size ``n`` (exact two-sample assignment).
    """
    law = law or uniform_cube(D)
    rng = stream(seed, D, rep, n)
    x = law(n, rng)
    if D == 1:
        m = proxy_size or PROXY_FACTOR * n
        y = law(m, stream(seed, D, rep, 0))
        return w1_1d(x, np.full(n, 1.0 / n), y, np.full(m, 1.0 / m))
    y = law(n, rng)
    col, _, _ = assignment(x, y, 1, duals=False)
    return float(np.mean(np.linalg.norm(x - y[col], axis=1)))


def empirical_rate_table(D: int, n_grid: Sequence[int], reps: int, law=None, seed: int = 0,
                         pool=None):
    """Mean over replicates of ``W1(P_n, proxy)`` for each ``n``; see :func:`rate_cell`."""
    from .rates import RateSeries

    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be strictly increasing")
    proxy = PROXY_FACTOR * max(n_grid)
    cells = [(n, r) for n in n_grid for r in range(reps)]
    fn = lambda c: rate_cell(D, c[0], c[1], seed, law, proxy)  # noqa: E731
    values = list(pool.map(fn, cells)) if pool is not None else [fn(c) for c in cells]
    return RateSeries.from_rows([(n, r, v) for (n, r), v in zip(cells, values)])
