"""Minimizers of the regularized empirical risk

    E(u) = lambda * gtv(u) + (1/n) sum_i |u_i - y_i|

over u in [0,1]^n. Both terms decompose over level sets (coarea), so a
binary global minimizer exists and is found exactly by a min s-t cut.
A first-order primal-dual iteration solves the relaxation at scales where
building the flow network is not wanted, and exhaustive enumeration serves
as the small-instance oracle. The overfitting certificate bounds the dual
variables and, when it holds, guarantees the labels themselves are the
unique minimizer.
"""

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, maximum_flow

from . import ValidationError
from .graph import EdgeField, divergence, gtv


class SolverConfig:
    def __init__(self, lambda_, max_iters=20000, tol=1e-7, step_ratio=1.0,
                 threshold=0.5):
        if not (lambda_ > 0):
            raise ValidationError("lambda must be positive")
        if not (tol > 0):
            raise ValidationError("tol must be positive")
        if not (0.0 < threshold < 1.0):
            raise ValidationError("threshold must lie in (0, 1)")
        self.lambda_ = float(lambda_)
        self.max_iters = int(max_iters)
        self.tol = float(tol)
        self.step_ratio = float(step_ratio)
        self.threshold = float(threshold)


class SolveResult:
    def __init__(self, u, u_binary, energy_relaxed, energy_binary, iters, gap,
                 method, converged=True):
        self.u = u
        self.u_binary = u_binary
        self.energy_relaxed = energy_relaxed
        self.energy_binary = energy_binary
        self.iters = iters
        self.gap = gap
        self.method = method
        self.converged = converged


def _check_labels(graph, labels):
    y = np.asarray(labels)
    if y.shape != (graph.n,):
        raise ValidationError("labels have wrong length")
    if not np.all(np.isin(y, (0, 1))):
        raise ValidationError("labels must be binary")
    return y.astype(float)


def energy(graph, labels, lam, u):
    u = np.asarray(u, dtype=float)
    y = np.asarray(labels, dtype=float)
    if u.shape != (graph.n,) or y.shape != (graph.n,):
        raise ValidationError("shape mismatch")
    return lam * gtv(graph, u) + float(np.abs(u - y).mean())


def solve_brute_force(graph, labels, lam):
    """Exhaustive minimum over u in {0,1}^n; ties broken by the
    lexicographically smallest u. Refused above n = 20."""
    y = _check_labels(graph, labels)
    n = graph.n
    if n > 20:
        raise ValidationError("brute force refused for n > 20")
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)  # bit 0 of u is the high bit
    scale = 2.0 * lam / (n ** 2 * graph.eps)
    best_e, best_u = np.inf, None
    for lo in range(0, 1 << n, 1 << 16):
        hi = min(lo + (1 << 16), 1 << n)
        k = np.arange(lo, hi, dtype=np.int64)
        bits = ((k[:, None] >> shifts[None, :]) & 1).astype(float)
        e = np.abs(bits - y).mean(axis=1)
        if graph.m:
            e = e + scale * (np.abs(bits[:, graph.ei] - bits[:, graph.ej]) @ graph.w)
        j = int(np.argmin(e))
        if e[j] < best_e:
            best_e, best_u = float(e[j]), bits[j].copy()
    eb = energy(graph, labels, lam, best_u)
    return SolveResult(best_u.copy(), best_u, eb, eb, iters=1 << n, gap=0.0,
                       method="brute_force")


def solve_mincut(graph, labels, lam):
    """Exact binary minimizer via a min s-t cut.

    Terminal arcs carry capacity 1/n toward the node's own label; each
    undirected edge becomes two opposite arcs of capacity lambda*2*w/(n^2 eps),
    so a cut pays exactly the energy of the induced labeling. The flow solver
    works on int32 capacities, so floats are scaled to a top value of 2^31-1;
    the rounding is ~2e-10 relative per arc, far below energy gaps between
    distinct labelings, and the returned energy is recomputed in floats from
    the cut labeling itself.
    """
    y = _check_labels(graph, labels)
    n = graph.n
    s, t = n, n + 1
    pair_cap = (2.0 * lam / (n ** 2 * graph.eps)) * graph.w if graph.m else np.empty(0)
    rows = np.concatenate([np.full(n, s), np.arange(n), graph.ei, graph.ej])
    cols = np.concatenate([np.arange(n), np.full(n, t), graph.ej, graph.ei])
    caps = np.concatenate([y / n, (1.0 - y) / n, pair_cap, pair_cap])
    keep = caps > 0
    rows, cols, caps = rows[keep], cols[keep], caps[keep]
    u = np.zeros(n)
    if caps.size:
        # scipy's maximum_flow saturates silently past int32 even on int64 input
        scale = (2.0 ** 31 - 1.0) / caps.max()
        icaps = np.rint(caps * scale).astype(np.int64)
        cap = csr_matrix((icaps, (rows, cols)), shape=(n + 2, n + 2))
        res = maximum_flow(cap, s, t)
        residual = cap - res.flow
        residual.data = (residual.data > 0).astype(np.int64)
        residual.eliminate_zeros()
        reach = breadth_first_order(residual, s, directed=True,
                                    return_predecessors=False)
        reach = reach[reach < n]
        u[reach] = 1.0
    eb = energy(graph, labels, lam, u)
    return SolveResult(u.copy(), u, eb, eb, iters=0, gap=0.0, method="mincut")


def binarize(graph, labels, lam, u):
    """Best threshold binarization of u in [0,1]^n.

    Evaluates 1_{u > t} at every distinct value of u, at t = 1/2, and the
    all-ones labeling (the t below min(u) level set), and returns the lowest
    energy one; ties go to the lowest threshold. By the coarea decomposition
    the winner's energy never exceeds energy(u).
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(labels, dtype=float)
    if u.shape != (graph.n,):
        raise ValidationError("node function has wrong length")
    thresholds = np.unique(np.concatenate([u, [0.5]]))
    n = graph.n
    scale = 2.0 * lam / (n ** 2 * graph.eps)
    best_e, best_b = np.inf, None
    # candidate rows: all-ones first (threshold below every value), then
    # level sets by ascending threshold; first argmin keeps the lowest t
    for lo in range(-1, thresholds.size, 64):
        ts = thresholds[max(lo, 0):lo + 64]
        b = u[None, :] > ts[:, None]
        if lo == -1:
            b = np.vstack([np.ones((1, n), dtype=bool), b])
        bf = b.astype(float)
        e = np.abs(bf - y[None, :]).mean(axis=1)
        if graph.m:
            e = e + scale * (np.abs(bf[:, graph.ei] - bf[:, graph.ej]) @ graph.w)
        j = int(np.argmin(e))
        if e[j] < best_e:
            best_e, best_b = float(e[j]), bf[j].copy()
    return best_b


def certify_overfit(graph, lam):
    """Dual bound s_i = (2 lambda/(eps n)) sum_j eta_eps(x_i - x_j), diagonal
    included. max s_i < 1 guarantees the unique minimizer is the labels."""
    s = (2.0 * lam / (graph.eps * graph.n)) * graph.degree_sums
    smax = float(s.max())
    return smax < 1.0, 1.0 - smax


def solve_primal_dual(graph, labels, config):
    """First-order primal-dual iteration on

        min_{u in [0,1]^n} max_{|p| <= 1} c <div(p), u> + (1/n) sum |u_i - y_i|

    with c = lambda/(n^2 eps). Dual step projects p onto [-1, 1] per ordered
    edge slot; primal step soft-shrinks u toward y by tau/n and clips to
    [0, 1]. Steps sized from a 30-step power estimate of the operator norm.
    Stops when the relative energy change over 50 iterations drops below tol;
    the lowest-energy iterate is kept, so energy_relaxed never exceeds the
    energy of the initial point u0 = labels.
    """
    y = _check_labels(graph, labels)
    lam = config.lambda_
    n, m = graph.n, graph.m
    e0 = energy(graph, labels, lam, y)
    if m == 0:
        return SolveResult(y.copy(), y.copy(), e0, e0, 0, 0.0, "primal_dual")
    c = lam / (n ** 2 * graph.eps)
    cw = c * graph.w
    ei, ej = graph.ei, graph.ej

    def K(u):
        du = cw * (u[ej] - u[ei])
        return np.stack([du, -du], axis=1)

    def KT(p):
        a = cw * (p[:, 1] - p[:, 0])
        return np.bincount(ei, weights=a, minlength=n) - np.bincount(ej, weights=a, minlength=n)

    rng = np.random.Generator(np.random.Philox(2718))
    v = rng.standard_normal(n)
    lsq = 1.0
    for _ in range(30):
        v = KT(K(v))
        lsq = np.linalg.norm(v)
        if lsq == 0:
            break
        v /= lsq
    L = np.sqrt(lsq) * 1.02 if lsq > 0 else 1.0  # small margin over the estimate
    tau = config.step_ratio / L
    sigma = 1.0 / (config.step_ratio * L)

    u = y.copy()
    ubar = u.copy()
    p = np.zeros((m, 2))
    best_e, best_u, best_p = e0, u.copy(), p.copy()
    hist = [e0]
    it = 0
    converged = False
    for it in range(1, config.max_iters + 1):
        p = np.clip(p + sigma * K(ubar), -1.0, 1.0)
        a = (u - tau * KT(p)) - y
        unew = y + np.sign(a) * np.maximum(np.abs(a) - tau / n, 0.0)
        unew = np.clip(unew, 0.0, 1.0)
        ubar = 2.0 * unew - u
        u = unew
        e = energy(graph, labels, lam, u)
        if e < best_e:
            best_e, best_u, best_p = e, u.copy(), p.copy()
        hist.append(e)
        if it >= 50 and it % 10 == 0:
            ref = hist[-51]
            if abs(ref - e) <= config.tol * max(abs(ref), 1e-12):
                converged = True
                break
    # certified lower bound from the dual feasible point at the best iterate
    dual = float(np.sum(np.minimum(y / n, c * divergence(graph, EdgeField(best_p))
                                   + (1.0 - y) / n)))
    gap = best_e - dual
    ub = binarize(graph, labels, lam, best_u)
    return SolveResult(best_u, ub, best_e, energy(graph, labels, lam, ub),
                       iters=it, gap=gap, method="primal_dual", converged=converged)
