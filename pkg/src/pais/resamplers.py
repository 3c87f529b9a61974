"""Resampling a weighted ensemble to uniform weights.

Three schemes:

- ETPF: solve the optimal-transport problem between the weighted and the
  uniform empirical measures (squared-Euclidean cost) with a transportation
  simplex written for this rank-(2M-1) structure, then apply the
  deterministic transform x_j = M sum_i T_ij y_i.
- bootstrap: M multinomial draws with replacement.
- AMR: greedy split of z = M w into M sub-multinomial rows, each anchored at
  the current largest z entry and filled from its geographically nearest
  live donors, resampled by row means (deterministic) or one categorical
  draw per row (stochastic).

The simplex offers two pricing rules. "dantzig" scans every cell for the
most negative reduced cost each pivot; it is the default and what the
benchmark subcommand times. "block" scans fixed-size blocks from a roving
cursor and takes the best candidate in the first block that has one; the
sampler loop uses it because it pivots the same optimum in far less time at
ensemble sizes. Degeneracy is handled by perturbing the row marginals by
multiples of 1e-15 (the last column absorbs the total) and recovering exact
flows on the final basis tree against the original marginals; a stretch of
zero-progress pivots switches pricing to Bland's first-negative rule, which
cannot cycle.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ParameterError, PaisError
from .kernels import normalize_log_weights

__all__ = [
    "CouplingPlan",
    "SubMultinomials",
    "solve_transport",
    "etpf_resample",
    "bootstrap_resample",
    "amr_split",
    "amr_resample",
]

_PRICING = {"dantzig": 0, "block": 1}
_BLOCK = 256
_STALL_SWITCH = 40


@dataclass(frozen=True)
class CouplingPlan:
    """Optimal transport plan between weighted input and uniform output.

    matrix rows follow the input points (sums = row_marginals = normalized
    weights); columns follow the output slots (sums = 1/M each).
    """

    matrix: np.ndarray
    row_marginals: np.ndarray
    col_marginals: np.ndarray
    cost: float


@dataclass(frozen=True)
class SubMultinomials:
    """Row i of `vectors` is the sub-multinomial p_i; (1/M) sum_i p_i = w."""

    vectors: np.ndarray


@njit(cache=True, nogil=True)
def _solve_core(C, a0, b0, pricing, max_pivots, block, stall_switch):
    m, n = C.shape
    nb = m + n - 1
    # Perturbed marginals guide the pivoting; exact flows are recovered on
    # the final tree from the originals.
    a = a0.copy()
    b = b0.copy()
    tot = 0.0
    for i in range(m):
        d = 1e-15 * (i + 1)
        a[i] += d
        tot += d
    b[n - 1] += tot

    rows = np.empty(nb, np.int64)
    cols = np.empty(nb, np.int64)
    vals = np.zeros(nb, np.float64)
    # Northwest-corner start.
    i = 0
    j = 0
    k = 0
    ra = a.copy()
    rb = b.copy()
    while True:
        rows[k] = i
        cols[k] = j
        t = ra[i] if ra[i] < rb[j] else rb[j]
        vals[k] = t
        ra[i] -= t
        rb[j] -= t
        if i == m - 1 and j == n - 1:
            break
        if ra[i] <= rb[j] and i < m - 1:
            i += 1
        else:
            j += 1
        k += 1

    # The basis is a spanning tree of the bipartite row/col graph, kept as
    # doubly linked cell lists per row node and per column node.
    head_r = np.full(m, -1, np.int64)
    head_c = np.full(n, -1, np.int64)
    nxt_r = np.full(nb, -1, np.int64)
    prv_r = np.full(nb, -1, np.int64)
    nxt_c = np.full(nb, -1, np.int64)
    prv_c = np.full(nb, -1, np.int64)
    for k in range(nb):
        i = rows[k]
        j = cols[k]
        nxt_r[k] = head_r[i]
        if head_r[i] >= 0:
            prv_r[head_r[i]] = k
        head_r[i] = k
        prv_r[k] = -1
        nxt_c[k] = head_c[j]
        if head_c[j] >= 0:
            prv_c[head_c[j]] = k
        head_c[j] = k
        prv_c[k] = -1

    # Initial duals by traversal from row 0.
    u = np.empty(m, np.float64)
    v = np.empty(n, np.float64)
    useen = np.zeros(m, np.bool_)
    vseen = np.zeros(n, np.bool_)
    stack = np.empty(m + n, np.int64)
    u[0] = 0.0
    useen[0] = True
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if node < m:
            k = head_r[node]
            while k >= 0:
                j = cols[k]
                if not vseen[j]:
                    v[j] = C[node, j] - u[node]
                    vseen[j] = True
                    stack[top] = m + j
                    top += 1
                k = nxt_r[k]
        else:
            jj = node - m
            k = head_c[jj]
            while k >= 0:
                i = rows[k]
                if not useen[i]:
                    u[i] = C[i, jj] - v[jj]
                    useen[i] = True
                    stack[top] = i
                    top += 1
                k = nxt_c[k]

    parent_cell = np.empty(m + n, np.int64)
    cyc = np.empty(2 * (m if m < n else n) + 2, np.int64)
    comp = np.empty(m + n, np.int64)
    total = m * n
    cursor = 0
    npiv = 0
    stalled = 0
    while npiv < max_pivots:
        bi = -1
        bj = -1
        if stalled >= stall_switch:
            # Bland: first negative reduced cost in row-major order.
            for idx in range(total):
                ii = idx // n
                jj = idx - ii * n
                if C[ii, jj] - u[ii] - v[jj] < -1e-11:
                    bi = ii
                    bj = jj
                    break
        elif pricing == 0:
            # Dantzig: most negative reduced cost over every cell.
            best = -1e-11
            for idx in range(total):
                ii = idx // n
                jj = idx - ii * n
                r = C[ii, jj] - u[ii] - v[jj]
                if r < best:
                    best = r
                    bi = ii
                    bj = jj
        else:
            # Block scan from a roving cursor, one wrap maximum.
            scanned = 0
            best = -1e-11
            while scanned < total:
                lim = block if total - scanned > block else total - scanned
                for _ in range(lim):
                    ii = cursor // n
                    jj = cursor - ii * n
                    r = C[ii, jj] - u[ii] - v[jj]
                    if r < best:
                        best = r
                        bi = ii
                        bj = jj
                    cursor += 1
                    if cursor == total:
                        cursor = 0
                scanned += lim
                if bi >= 0:
                    break
        if bi < 0:
            break
        npiv += 1

        # Unique tree path from row node bi to column node bj.
        for q in range(m + n):
            parent_cell[q] = -1
        for q in range(m):
            useen[q] = False
        for q in range(n):
            vseen[q] = False
        useen[bi] = True
        top = 0
        stack[top] = bi
        top += 1
        reached = False
        while top > 0 and not reached:
            top -= 1
            node = stack[top]
            if node < m:
                k = head_r[node]
                while k >= 0:
                    j = cols[k]
                    if not vseen[j]:
                        vseen[j] = True
                        parent_cell[m + j] = k
                        if j == bj:
                            reached = True
                            break
                        stack[top] = m + j
                        top += 1
                    k = nxt_r[k]
            else:
                jj = node - m
                k = head_c[jj]
                while k >= 0:
                    i = rows[k]
                    if not useen[i]:
                        useen[i] = True
                        parent_cell[i] = k
                        stack[top] = i
                        top += 1
                    k = nxt_c[k]
        ncyc = 0
        node = m + bj
        while node != bi:
            k = parent_cell[node]
            cyc[ncyc] = k
            ncyc += 1
            node = rows[k] if node >= m else m + cols[k]
        # Walking back from bj, even positions lose theta, odd gain it.
        theta = 1e300
        leave = -1
        for q in range(0, ncyc, 2):
            k = cyc[q]
            if vals[k] < theta:
                theta = vals[k]
                leave = k
        for q in range(0, ncyc, 2):
            vals[cyc[q]] -= theta
        for q in range(1, ncyc, 2):
            vals[cyc[q]] += theta
        stalled = stalled + 1 if theta <= 1e-14 else 0
        li = rows[leave]
        lj = cols[leave]
        r_enter = C[bi, bj] - u[bi] - v[bj]
        # Unlink the leaving cell.
        pk = prv_r[leave]
        nk = nxt_r[leave]
        if pk >= 0:
            nxt_r[pk] = nk
        else:
            head_r[li] = nk
        if nk >= 0:
            prv_r[nk] = pk
        pk = prv_c[leave]
        nk = nxt_c[leave]
        if pk >= 0:
            nxt_c[pk] = nk
        else:
            head_c[lj] = nk
        if nk >= 0:
            prv_c[nk] = pk
        # Relabel duals on the detached component containing column bj.
        ncmp = 0
        for q in range(m):
            useen[q] = False
        for q in range(n):
            vseen[q] = False
        vseen[bj] = True
        top = 0
        stack[top] = m + bj
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            comp[ncmp] = node
            ncmp += 1
            if node < m:
                k = head_r[node]
                while k >= 0:
                    j = cols[k]
                    if not vseen[j]:
                        vseen[j] = True
                        stack[top] = m + j
                        top += 1
                    k = nxt_r[k]
            else:
                jj = node - m
                k = head_c[jj]
                while k >= 0:
                    i = rows[k]
                    if not useen[i]:
                        useen[i] = True
                        stack[top] = i
                        top += 1
                    k = nxt_c[k]
        for q in range(ncmp):
            node = comp[q]
            if node < m:
                u[node] -= r_enter
            else:
                v[node - m] += r_enter
        # Reuse the leaving slot for the entering cell.
        rows[leave] = bi
        cols[leave] = bj
        vals[leave] = theta
        nxt_r[leave] = head_r[bi]
        if head_r[bi] >= 0:
            prv_r[head_r[bi]] = leave
        head_r[bi] = leave
        prv_r[leave] = -1
        nxt_c[leave] = head_c[bj]
        if head_c[bj] >= 0:
            prv_c[head_c[bj]] = leave
        head_c[bj] = leave
        prv_c[leave] = -1

    # Exact flows on the final basis tree from the original marginals,
    # peeling degree-1 nodes.
    ra = a0.copy()
    rb = b0.copy()
    deg = np.zeros(m + n, np.int64)
    for k in range(nb):
        deg[rows[k]] += 1
        deg[m + cols[k]] += 1
    out = np.zeros((m, n), np.float64)
    qn = np.empty(m + n, np.int64)
    qh = 0
    qt = 0
    for node in range(m + n):
        if deg[node] == 1:
            qn[qt] = node
            qt += 1
    alive = np.ones(nb, np.bool_)
    while qh < qt:
        node = qn[qh]
        qh += 1
        if deg[node] != 1:
            continue
        k = head_r[node] if node < m else head_c[node - m]
        while k >= 0 and not alive[k]:
            k = nxt_r[k] if node < m else nxt_c[k]
        if k < 0:
            continue
        i = rows[k]
        j = cols[k]
        t = ra[i] if node < m else rb[j]
        out[i, j] = t
        ra[i] -= t
        rb[j] -= t
        alive[k] = False
        deg[i] -= 1
        deg[m + j] -= 1
        other = (m + j) if node < m else i
        if deg[other] == 1:
            qn[qt] = other
            qt += 1
    return out, npiv


def _check_probability(weights, m=None):
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or (m is not None and w.shape[0] != m):
        raise ParameterError("weights must be a vector matching the points")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ParameterError("weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > 1e-8:
        raise ParameterError(f"weights must sum to 1, got {w.sum()!r}")
    return w


def _as_point_matrix(points):
    y = np.asarray(points, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] < 1:
        raise ParameterError("points must be an (M, d) array")
    return y


def solve_transport(weights, points, pricing="dantzig"):
    """Exact minimizer of sum_ij T_ij ||y_i - y_j||^2 with row marginals
    `weights` and uniform column marginals.

    Minimizing expected squared displacement between the coupled copies is
    the correlation-maximizing coupling. Zero weights stay in the problem
    (empty rows) so indexing is stable.
    """
    y = _as_point_matrix(points)
    m = y.shape[0]
    w = _check_probability(weights, m)
    if pricing not in _PRICING:
        raise ParameterError(f"unknown pricing rule {pricing!r}")
    cost = np.ascontiguousarray(
        ((y[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
    )
    uniform = np.full(m, 1.0 / m)
    max_pivots = max(100_000, 200 * m)
    plan, npiv = _solve_core(
        cost, w, uniform, _PRICING[pricing], max_pivots, _BLOCK, _STALL_SWITCH
    )
    if npiv >= max_pivots:
        raise PaisError("transport solve exceeded its pivot budget")
    tiny = plan[(plan < 0)]
    if tiny.size:
        if tiny.min() < -1e-9:
            raise PaisError("transport solve produced a negative flow")
        plan = np.where(plan < 0, 0.0, plan)
    bad_row = np.abs(plan.sum(axis=1) - w).max()
    bad_col = np.abs(plan.sum(axis=0) - uniform).max()
    if max(bad_row, bad_col) > 1e-10:
        raise PaisError("transport plan violates its marginals")
    return CouplingPlan(
        matrix=plan,
        row_marginals=w,
        col_marginals=uniform,
        cost=float((plan * cost).sum()),
    )


def etpf_resample(points, log_weights, mode="deterministic", rng=None,
                  pricing="dantzig"):
    """Transform the weighted ensemble through the optimal coupling.

    deterministic (default): x_j = M sum_i T_ij y_i, the mean of column j's
    conditional. stochastic: one draw per column from M T_{. j}.
    """
    y = _as_point_matrix(points)
    w = normalize_log_weights(log_weights)
    plan = solve_transport(w, y, pricing=pricing).matrix
    m = y.shape[0]
    if mode == "deterministic":
        return m * (plan.T @ y)
    if mode != "stochastic":
        raise ParameterError(f"unknown etpf mode {mode!r}")
    if rng is None:
        raise ParameterError("stochastic etpf needs an rng")
    probs = m * plan
    cum = np.cumsum(probs, axis=0)
    cum /= cum[-1, :]
    picks = (rng.random(m)[None, :] > cum).sum(axis=0)
    return y[picks]


def bootstrap_resample(points, log_weights, rng):
    """M independent multinomial draws with replacement."""
    y = _as_point_matrix(points)
    w = normalize_log_weights(log_weights)
    idx = rng.choice(y.shape[0], size=y.shape[0], replace=True, p=w)
    return y[idx]


def amr_split(weights, points):
    """Greedy sub-multinomial split of z = M w (deterministic, tie rules:
    lowest index wins; donor distances are measured from the row anchor)."""
    y = _as_point_matrix(points)
    m = y.shape[0]
    w = _check_probability(weights, m)
    z = m * w
    p = np.zeros((m, m))
    for i in range(m):
        anchor = int(np.argmax(z))
        if z[anchor] >= 1.0:
            p[i, anchor] = 1.0
            z[anchor] -= 1.0
            continue
        p[i, anchor] = z[anchor]
        remaining = 1.0 - z[anchor]
        z[anchor] = 0.0
        last = anchor
        dist = ((y - y[anchor]) ** 2).sum(axis=1)
        while remaining > 0.0:
            live = z > 0.0
            if not np.any(live):
                # Accumulated roundoff left the row short; fold it into the
                # last donor and insist it really is roundoff.
                if remaining > 1e-10:
                    raise PaisError(
                        f"amr_split row {i} short by {remaining!r}"
                    )
                p[i, last] += remaining
                break
            nearest = int(np.argmin(np.where(live, dist, np.inf)))
            if z[nearest] <= remaining:
                p[i, nearest] = z[nearest]
                remaining -= z[nearest]
                z[nearest] = 0.0
            else:
                p[i, nearest] = remaining
                z[nearest] -= remaining
                remaining = 0.0
            last = nearest
    return SubMultinomials(vectors=p)


def amr_resample(points, log_weights, mode="deterministic", rng=None):
    """Resample via the AMR split: row means, or one draw per row."""
    y = _as_point_matrix(points)
    w = normalize_log_weights(log_weights)
    p = amr_split(w, y).vectors
    if mode == "deterministic":
        return p @ y
    if mode != "stochastic":
        raise ParameterError(f"unknown amr mode {mode!r}")
    if rng is None:
        raise ParameterError("stochastic amr needs an rng")
    cum = np.cumsum(p, axis=1)
    cum /= cum[:, -1][:, None]
    picks = (rng.random(y.shape[0])[:, None] > cum).sum(axis=1)
    return y[picks]
