"""Synthetic ground truth on a box: piecewise-constant density rho and
conditional mean mu over rectangular partitions, i.i.d. sampling, and the
exactly computable Bayes quantities (risk, classifier, median label).

Cell conventions: cells are half-open [lo, hi) along each axis except at
the domain's upper face, which is closed, so every point of the domain
belongs to exactly one cell. Boundary ties mu = 1/2 classify as 1.
"""

import csv
import json

import numpy as np

from . import DegenerateMedianError, ValidationError


class GroundTruthModel:
    """Axis-aligned box domain with piecewise-constant rho and mu.

    density_cells and mu_cells are independent rectangular partitions of the
    domain, each a list of (lo, hi, value) with lo/hi d-vectors. rho values
    are probability densities (they integrate to 1 over the domain and are
    strictly positive); mu values lie in [0, 1] and no cell sits exactly at
    1/2, so {mu = 1/2} has zero Lebesgue measure.
    """

    def __init__(self, lo, hi, density_cells, mu_cells, name="model"):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if self.lo.ndim != 1 or self.lo.shape != self.hi.shape:
            raise ValidationError("domain lo/hi must be d-vectors of equal length")
        if not np.all(self.hi > self.lo):
            raise ValidationError("domain must have positive extent")
        self.d = self.lo.size
        self.name = str(name)
        self._rho_lo, self._rho_hi, self._rho = self._pack_cells(density_cells, "density")
        self._mu_lo, self._mu_hi, self._mu = self._pack_cells(mu_cells, "mu")
        if np.any(self._rho <= 0):
            raise ValidationError("density must be strictly positive on every cell")
        mass = float(np.sum(self._rho * self._volumes(self._rho_lo, self._rho_hi)))
        if abs(mass - 1.0) > 1e-12:
            raise ValidationError("density must integrate to 1, got %.17g" % mass)
        if np.any(self._mu < 0) or np.any(self._mu > 1):
            raise ValidationError("mu values must lie in [0, 1]")
        if np.any(self._mu == 0.5):
            raise ValidationError("a mu cell at exactly 1/2 is rejected")

    # -- partition handling -------------------------------------------------

    def _pack_cells(self, cells, what):
        if not cells:
            raise ValidationError("empty %s partition" % what)
        lo = np.array([np.asarray(c[0], dtype=float) for c in cells])
        hi = np.array([np.asarray(c[1], dtype=float) for c in cells])
        val = np.array([float(c[2]) for c in cells])
        if lo.shape[1] != self.d:
            raise ValidationError("%s cell dimension mismatch" % what)
        if not np.all(hi > lo):
            raise ValidationError("%s cells must have positive extent" % what)
        if np.any(lo < self.lo - 1e-12) or np.any(hi > self.hi + 1e-12):
            raise ValidationError("%s cells must lie inside the domain" % what)
        vols = self._volumes(lo, hi)
        dom_vol = float(np.prod(self.hi - self.lo))
        if abs(vols.sum() - dom_vol) > 1e-12 * dom_vol:
            raise ValidationError("%s cells do not tile the domain" % what)
        # pairwise disjointness (partitions are small, O(k^2) is fine)
        k = len(val)
        for i in range(k):
            for j in range(i + 1, k):
                if np.all(np.minimum(hi[i], hi[j]) - np.maximum(lo[i], lo[j]) > 1e-12):
                    raise ValidationError("%s cells overlap" % what)
        return lo, hi, val

    @staticmethod
    def _volumes(lo, hi):
        return np.prod(hi - lo, axis=1)

    def _cell_index(self, los, his, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if np.any(x < self.lo - 1e-12) or np.any(x > self.hi + 1e-12):
            raise ValidationError("point outside the domain")
        idx = np.full(x.shape[0], -1, dtype=np.int64)
        for c in range(los.shape[0]):
            at_top = his[c] == self.hi
            inside = np.all(x >= los[c], axis=1) & np.all(
                (x < his[c]) | (at_top & (x <= his[c])), axis=1)
            idx[inside & (idx < 0)] = c
        if np.any(idx < 0):
            raise ValidationError("point not covered by the partition")
        return idx

    def rho_at(self, x):
        single = np.asarray(x).ndim == 1
        v = self._rho[self._cell_index(self._rho_lo, self._rho_hi, x)]
        return float(v[0]) if single else v

    def mu_at(self, x):
        single = np.asarray(x).ndim == 1
        v = self._mu[self._cell_index(self._mu_lo, self._mu_hi, x)]
        return float(v[0]) if single else v

    def _refined(self):
        # intersections of the two partitions with (volume, rho, mu) per piece
        out = []
        for i in range(self._rho_lo.shape[0]):
            for j in range(self._mu_lo.shape[0]):
                lo = np.maximum(self._rho_lo[i], self._mu_lo[j])
                hi = np.minimum(self._rho_hi[i], self._mu_hi[j])
                if np.all(hi > lo):
                    out.append((float(np.prod(hi - lo)), self._rho[i], self._mu[j]))
        return out


class LabeledCloud:
    """Sample points with binary labels."""

    def __init__(self, points, labels, seed=None, model_id=""):
        self.points = np.asarray(points, dtype=float)
        self.labels = np.asarray(labels)
        if self.points.ndim != 2 or self.points.shape[0] != self.labels.shape[0]:
            raise ValidationError("points must be (n, d) with one label per point")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise ValidationError("labels must be exactly 0 or 1")
        self.labels = self.labels.astype(np.int64)
        self.seed = seed
        self.model_id = model_id

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]


def sample(model, n, seed):
    """Draw n i.i.d. samples: x from rho (cell by mass, uniform within), then
    y = 1 with probability mu(x). Philox counter-based stream, so identical
    seeds reproduce the cloud bit for bit; seed may be an int or a tuple
    (tuples keep independent draws, e.g. test sets, on separate streams).
    """
    if n < 1:
        raise ValidationError("need n >= 1 samples")
    rng = np.random.Generator(np.random.Philox(seed))
    masses = model._rho * GroundTruthModel._volumes(model._rho_lo, model._rho_hi)
    cum = np.cumsum(masses)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, rng.random(n), side="right")
    idx = np.minimum(idx, len(cum) - 1)
    lo, hi = model._rho_lo[idx], model._rho_hi[idx]
    x = lo + rng.random((n, model.d)) * (hi - lo)
    y = (rng.random(n) < model.mu_at(x)).astype(np.int64)
    return LabeledCloud(x, y, seed=seed, model_id=model.name)


def bayes_classify(model, x):
    """The risk-minimizing label: 1 iff mu(x) >= 1/2."""
    v = model.mu_at(x)
    if np.ndim(v) == 0:
        return int(v >= 0.5)
    return (v >= 0.5).astype(np.int64)


def bayes_risk(model):
    """integral of min(mu, 1-mu) rho over the domain, exact cell-wise."""
    return sum(vol * rho * min(mu, 1.0 - mu) for vol, rho, mu in model._refined())


def median_label(model):
    """1 iff the Bayes-1 region carries more than half the mass.

    Raises DegenerateMedianError when the mass is exactly 1/2 (the symmetric
    quadrant model is exactly degenerate).
    """
    p1 = sum(vol * rho for vol, rho, mu in model._refined() if mu >= 0.5)
    if abs(p1 - 0.5) <= 1e-12:
        raise DegenerateMedianError("mass of {u_B = 1} is exactly 1/2")
    return int(p1 > 0.5)


def risk_of_constant(model, c):
    """Risk of the constant labeling c: integral of (|c-1| mu + |c| (1-mu)) rho."""
    return sum(vol * rho * (abs(c - 1.0) * mu + abs(c) * (1.0 - mu))
               for vol, rho, mu in model._refined())


def label_one_probability(model):
    """P(y = 1) = integral of mu rho."""
    return sum(vol * rho * mu for vol, rho, mu in model._refined())


# -- built-in models --------------------------------------------------------

def quadrant_model():
    """Uniform density on the unit square; mu = 0.55 on the upper-left and
    lower-right quadrants and 0.45 on the other two. Exactly degenerate
    median: each Bayes class carries half the mass."""
    cells = [((0.0, 0.5), (0.5, 1.0), 0.55),   # upper left
             ((0.5, 0.0), (1.0, 0.5), 0.55),   # lower right
             ((0.5, 0.5), (1.0, 1.0), 0.45),   # upper right
             ((0.0, 0.0), (0.5, 0.5), 0.45)]   # lower left
    return GroundTruthModel((0, 0), (1, 1),
                            [((0, 0), (1, 1), 1.0)], cells, name="quadrant")


def asymmetric_model():
    """Uniform density; mu = 0.55 on the left 60 percent of mass, 0.45 on the
    rest. Median label 1, R(1) = 0.49, R(0) = 0.51, Bayes risk 0.45."""
    cells = [((0.0, 0.0), (0.6, 1.0), 0.55),
             ((0.6, 0.0), (1.0, 1.0), 0.45)]
    return GroundTruthModel((0, 0), (1, 1),
                            [((0, 0), (1, 1), 1.0)], cells, name="asymmetric")


def halfplane_model():
    """Uniform density on the unit square, mu = 1 on {x0 > 1/2} and 0 on the
    rest: the Bayes classifier is the noiseless half-plane indicator."""
    cells = [((0.0, 0.0), (0.5, 1.0), 0.0),
             ((0.5, 0.0), (1.0, 1.0), 1.0)]
    return GroundTruthModel((0, 0), (1, 1),
                            [((0, 0), (1, 1), 1.0)], cells, name="halfplane")


BUILTIN_MODELS = {"quadrant": quadrant_model, "asymmetric": asymmetric_model,
                  "halfplane": halfplane_model}


# -- persistence ------------------------------------------------------------

def model_to_dict(model):
    def cells(lo, hi, val):
        return [{"lo": list(map(float, l)), "hi": list(map(float, h)),
                 "value": float(v)} for l, h, v in zip(lo, hi, val)]
    return {"name": model.name,
            "domain": {"lo": list(map(float, model.lo)),
                       "hi": list(map(float, model.hi))},
            "density_cells": cells(model._rho_lo, model._rho_hi, model._rho),
            "mu_cells": cells(model._mu_lo, model._mu_hi, model._mu)}


def model_from_dict(obj):
    try:
        dom = obj["domain"]
        dens = [(c["lo"], c["hi"], c["value"]) for c in obj["density_cells"]]
        mu = [(c["lo"], c["hi"], c["value"]) for c in obj["mu_cells"]]
        return GroundTruthModel(dom["lo"], dom["hi"], dens, mu,
                                name=obj.get("name", "model"))
    except (KeyError, TypeError) as e:
        raise ValidationError("malformed model description: %s" % e) from None


def save_model(model, path):
    with open(path, "w") as f:
        json.dump(model_to_dict(model), f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(path):
    with open(path) as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise ValidationError("model file is not valid JSON: %s" % e) from None
    return model_from_dict(obj)


def save_cloud(cloud, path):
    """Dataset CSV: header x0,...,x{d-1},y, one row per sample, floats written
    with enough digits to round-trip exactly."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x%d" % k for k in range(cloud.d)] + ["y"])
        for i in range(cloud.n):
            w.writerow(["%.17g" % v for v in cloud.points[i]] + [str(int(cloud.labels[i]))])


def load_cloud(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or not rows[0] or rows[0][-1] != "y":
        raise ValidationError("dataset CSV must have header x0,...,y")
    d = len(rows[0]) - 1
    if [*rows[0][:d]] != ["x%d" % k for k in range(d)]:
        raise ValidationError("dataset CSV must have header x0,...,y")
    try:
        pts = np.array([[float(v) for v in r[:d]] for r in rows[1:]], dtype=float)
        labels = np.array([int(r[d]) for r in rows[1:]])
    except (ValueError, IndexError) as e:
        raise ValidationError("malformed dataset row: %s" % e) from None
    if pts.size == 0:
        raise ValidationError("dataset has no rows")
    return LabeledCloud(pts, labels)
