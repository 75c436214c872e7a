"""Risk evaluation, TL1 transport distances, and continuum comparison oracles.

Covers the empirical side (misclassification rates, Voronoi/1-NN extension of
node labelings to the whole domain, Monte-Carlo test risk with binomial CIs)
and the transport side (exact TL1 between equal-size weighted point sets via
an assignment solver, a 1-NN proxy usable at any scale, a sup-displacement
diagnostic for matchings against a quadrature grid). The continuum oracles
(rho^2-weighted interface measure and the discrete-vs-continuum comparison
table) give the targets the graph functional is expected to approach.
"""

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from . import ValidationError
from .graph import build, gtv
from .groundtruth import bayes_classify, sample
from .kernels import surface_tension

# exact assignments are O(n^3) worst case; beyond this, use tl1_proxy_1nn
ASSIGNMENT_BUDGET = 4096


def empirical_risk(u, labels):
    """Mean |u_i - y_i|; for binary u this is the fraction of disagreements."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(labels, dtype=float)
    if u.shape != y.shape:
        raise ValidationError("u and labels must have the same shape")
    return float(np.mean(np.abs(u - y)))


class VoronoiClassifier:
    """1-NN extension of binary node values to the whole domain.

    Prediction at x is the value at the nearest reference point; exact
    distance ties go to the lowest point index. Querying a reference point
    returns that point's own value whenever it is the unique nearest.
    """

    def __init__(self, points, values):
        points = np.asarray(points, dtype=float)
        values = np.asarray(values, dtype=float)
        if points.ndim != 2 or points.shape[0] == 0:
            raise ValidationError("reference cloud must be a nonempty (n, d) array")
        if values.shape != (points.shape[0],):
            raise ValidationError("need one value per reference point")
        if not np.all((values == 0) | (values == 1)):
            raise ValidationError("node values must be binary")
        self.points = points
        self.values = values
        self._tree = cKDTree(points)

    def __call__(self, x):
        single = np.asarray(x).ndim == 1
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k = min(8, self.points.shape[0])
        _, nb = self._tree.query(x, k=k)
        nb = nb.reshape(x.shape[0], -1)
        # recompute distances so exact ties resolve by index, not tree order
        d2 = ((x[:, None, :] - self.points[nb]) ** 2).sum(axis=2)
        tie = d2 == d2.min(axis=1, keepdims=True)
        pick = np.where(tie, nb, self.points.shape[0]).min(axis=1)
        out = self.values[pick]
        return float(out[0]) if single else out


def voronoi_extend(cloud, u):
    points = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=float)
    return VoronoiClassifier(points, u)


def test_risk(classifier, model, m, seed):
    """Monte-Carlo risk of a classifier under the model, with a 95% CI.

    Draws m fresh labeled samples and returns (mean |c(x) - y|, halfwidth of
    the plug-in binomial confidence interval). Unbiased for the true risk.
    """
    if m < 100:
        raise ValidationError("need m >= 100 fresh samples")
    fresh = sample(model, int(m), seed)
    pred = np.asarray(classifier(fresh.points), dtype=float)
    p = float(np.mean(np.abs(pred - fresh.labels)))
    ci = 1.96 * np.sqrt(max(p * (1.0 - p), 0.0) / m)
    return p, float(ci)


def bayes_agreement(classifier, model, m, seed):
    """Fraction of m fresh samples where classifier(x) matches the Bayes rule.

    For binary classifiers 1 - agreement is the L1(nu) distance to the Bayes
    classifier, estimated by Monte-Carlo.
    """
    if m < 100:
        raise ValidationError("need m >= 100 fresh samples")
    fresh = sample(model, int(m), seed)
    pred = np.asarray(classifier(fresh.points), dtype=float)
    return float(np.mean(pred == bayes_classify(model, fresh.points)))


class TransportPlanResult:
    """Assignment between two equal-size point sets plus summary costs."""

    def __init__(self, assignment, cost, sup_displacement):
        self.assignment = assignment
        self.cost = cost
        self.sup_displacement = sup_displacement

    def __repr__(self):
        return "TransportPlanResult(cost=%g, sup_displacement=%g)" % (
            self.cost, self.sup_displacement)


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def tl1_exact(points_a, f_a, points_b, f_b):
    """Exact TL1 distance between two equal-size discrete functions.

    Minimizes (1/n) sum_i |x_i - z_s(i)| + |f(x_i) - g(z_s(i))| over
    assignments s, solved by an exact augmenting-path assignment algorithm.
    For uniform empirical measures of equal size an optimal coupling may be
    taken as a permutation, so this is the genuine TL1 distance between the
    two elements. Unequal sizes (general couplings) are out of scope.
    """
    xa, xb = _as_points(points_a), _as_points(points_b)
    fa = np.asarray(f_a, dtype=float)
    fb = np.asarray(f_b, dtype=float)
    if xa.shape[0] != xb.shape[0]:
        raise ValidationError("equal point counts required; use tl1_proxy_1nn otherwise")
    if xa.shape[0] == 0:
        raise ValidationError("empty point sets")
    if xa.shape[1] != xb.shape[1]:
        raise ValidationError("dimension mismatch")
    if fa.shape != (xa.shape[0],) or fb.shape != (xb.shape[0],):
        raise ValidationError("need one function value per point")
    n = xa.shape[0]
    if n > ASSIGNMENT_BUDGET:
        raise ValidationError("assignment budget is n <= %d" % ASSIGNMENT_BUDGET)
    disp = cdist(xa, xb)
    cost_mat = disp + np.abs(fa[:, None] - fb[None, :])
    rows, cols = linear_sum_assignment(cost_mat)
    return TransportPlanResult(cols, float(cost_mat[rows, cols].sum() / n),
                               float(disp[rows, cols].max()))


def tl1_proxy_1nn(cloud, u, model, u_ref, m, seed):
    """1-NN transport proxy for the TL1 distance to a continuum classifier.

    Draws m fresh samples z_k from the model, maps each to its nearest cloud
    point T(z_k), and averages |z_k - T(z_k)| + |u(T(z_k)) - u_ref(z_k)|.
    Upper-bound flavored, usable at any n; when every z_k lands exactly on a
    cloud point this reduces to the plain L1 mismatch of values.
    """
    if m < 100:
        raise ValidationError("need m >= 100 fresh samples")
    points = cloud.points if hasattr(cloud, "points") else _as_points(cloud)
    u = np.asarray(u, dtype=float)
    fresh = sample(model, int(m), seed)
    dist, idx = cKDTree(points).query(fresh.points, k=1)
    vals = np.abs(u[idx] - np.asarray(u_ref(fresh.points), dtype=float))
    return float(np.mean(dist + vals))


def _cell_grid(lo, hi, k):
    # centers of the smallest r^d lattice holding k points, lex order, first k
    d = lo.size
    r = int(np.ceil(k ** (1.0 / d)))
    while r > 1 and (r - 1) ** d >= k:
        r -= 1
    axes = [lo[j] + (hi[j] - lo[j]) * (np.arange(r) + 0.5) / r for j in range(d)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    return mesh[:k]


def quadrature_points(model, n):
    """Deterministic n-point quadrature approximating the model density.

    Points are apportioned to density cells proportionally to cell mass
    (largest remainder), then laid out on a regular sub-lattice of cell
    centers within each cell.
    """
    vols = np.prod(model._rho_hi - model._rho_lo, axis=1)
    quota = n * model._rho * vols
    base = np.floor(quota).astype(np.int64)
    short = int(n - base.sum())
    if short > 0:
        base[np.argsort(-(quota - base), kind="stable")[:short]] += 1
    parts = [_cell_grid(model._rho_lo[c], model._rho_hi[c], int(k))
             for c, k in enumerate(base) if k > 0]
    return np.concatenate(parts, axis=0)


def transport_sup_diagnostic(cloud, model, grid_res, seed=None):
    """Worst-case displacement of an optimal matching grid -> cloud.

    Matches the n = grid_res^d deterministic quadrature points of the model
    to the cloud by minimum total Euclidean cost and reports the largest
    per-pair displacement. The seed argument is accepted for interface parity
    but unused: the quadrature grid is deterministic.
    """
    points = cloud.points if hasattr(cloud, "points") else _as_points(cloud)
    n, d = points.shape
    if grid_res ** d != n:
        raise ValidationError("grid_res^%d must equal the cloud size" % d)
    if n > ASSIGNMENT_BUDGET:
        raise ValidationError("assignment budget is n <= %d" % ASSIGNMENT_BUDGET)
    disp = cdist(quadrature_points(model, n), points)
    rows, cols = linear_sum_assignment(disp)
    picked = disp[rows, cols]
    return TransportPlanResult(cols, float(picked.sum() / n), float(picked.max()))


def _tent_partition(points, lo, eps):
    """Tent partition of unity on the eps/2 grid, evaluated at the points.

    Returns (keys, weights, n_nodes): for each point, the flat indices of the
    2^d grid nodes whose tents touch it and the tent values there. Tents are
    products of 1-D hats of half-width eps/2, so each point's weights sum to
    1 and the slopes scale like 1/eps.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = points.shape
    h = eps / 2.0
    rel = (points - lo) / h
    base = np.floor(rel).astype(np.int64)
    frac = rel - base
    # one node past the farthest occupied cell on each axis
    dims = base.max(axis=0) + 2
    strides = np.concatenate([np.cumprod(dims[::-1])[-2::-1], [1]])
    keys = np.empty((n, 2 ** d), dtype=np.int64)
    weights = np.empty((n, 2 ** d))
    for c in range(2 ** d):
        offs = np.array([(c >> (d - 1 - j)) & 1 for j in range(d)], dtype=np.int64)
        weights[:, c] = np.prod(np.where(offs == 1, frac, 1.0 - frac), axis=1)
        keys[:, c] = ((base + offs) * strides).sum(axis=1)
    return keys, weights, int(np.prod(dims))


def concentration_diagnostic(cloud, model, eps):
    """Localized cancellation of label noise at scale eps.

    Evaluates sum_z |(1/n) sum_i (mu(x_i) - y_i) psi_z(x_i)| over a tent
    partition of unity {psi_z} on the eps/2 grid. Vanishes when labels equal
    mu(x) exactly and is expected to shrink like sqrt(log n / (n eps^d)) for
    genuinely random labels.
    """
    if not (eps > 0):
        raise ValidationError("eps must be positive")
    points = np.atleast_2d(np.asarray(cloud.points, dtype=float))
    resid = model.mu_at(points) - np.asarray(cloud.labels, dtype=float)
    keys, weights, n_nodes = _tent_partition(points, model.lo, eps)
    acc = np.zeros(n_nodes)
    np.add.at(acc, keys.ravel(), (resid[:, None] * weights).ravel())
    return float(np.abs(acc).sum() / points.shape[0])


def continuum_tv_indicator(model, interface):
    """Exact rho^2-weighted measure of a piecewise-flat interface.

    d = 1: interface is an array of jump points, each contributing rho(x)^2.
    d = 2: array of segments shaped (k, 2, 2), each contributing its length
    times rho^2 at its location. d = 3: triangles shaped (k, 3, 3), area
    weighted the same way. Every piece must lie within a single density cell
    (pieces are attributed by the half-open cell holding their vertices);
    split anything that crosses a cell boundary before calling.
    """
    arr = np.asarray(interface, dtype=float)
    if arr.size == 0:
        return 0.0
    if model.d == 1:
        rho = np.asarray(model.rho_at(arr.reshape(-1, 1)), dtype=float)
        return float(np.sum(rho ** 2))
    verts = arr.reshape(arr.shape[0], -1, model.d)
    if verts.shape[1] != model.d:
        raise ValidationError("pieces need %d vertices each in d = %d"
                              % (model.d, model.d))
    ci = model._cell_index(model._rho_lo, model._rho_hi, verts[:, 0])
    for v in range(1, model.d):
        cv = model._cell_index(model._rho_lo, model._rho_hi, verts[:, v])
        if np.any(cv != ci):
            raise ValidationError("interface piece crosses a density cell; split it first")
    if model.d == 2:
        measure = np.linalg.norm(verts[:, 1] - verts[:, 0], axis=1)
    else:
        cross = np.cross(verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0])
        measure = 0.5 * np.linalg.norm(cross, axis=1)
    return float(np.sum(measure * model._rho[ci] ** 2))


def gamma_check(model, interface, profile, n_list, eps_rule, seed):
    """Discrete-vs-continuum comparison table for the graph functional.

    For each n: sample a cloud, restrict the Bayes classifier to it, and
    compare its graph total variation at eps = eps_rule(n) against the
    continuum target sigma_eta * TV(u_B). Returns one row per n with the
    absolute and relative errors.
    """
    target = surface_tension(profile, model.d) * continuum_tv_indicator(model, interface)
    rows = []
    for i, n in enumerate(n_list):
        n = int(n)
        cloud = sample(model, n, (seed, i))
        eps = float(eps_rule(n))
        val = gtv(build(cloud, eps, profile), bayes_classify(model, cloud.points))
        abs_err = abs(val - target)
        rows.append({
            "n": n, "eps": eps, "gtv": float(val), "target": float(target),
            "abs_err": float(abs_err),
            "rel_err": float(abs_err / target) if target > 0
            else (float("inf") if abs_err > 0 else 0.0),
        })
    return rows
