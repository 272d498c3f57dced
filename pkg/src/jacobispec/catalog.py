"""Ready-made model families and synthetic curvature-level models.

Each constructor documents its chart layout; coordinate order matters
because directions and points are plain component sequences.  Functions
of a single variable (the f_i below) are written in one placeholder
variable and relabeled onto the right chart slot.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np

from . import expr as ex
from . import geom
from .expr import Chart, Expression, parse
from .geom import MetricModel, OperatorAtPoint
from .polyring import RatFunc


def _as_entry(e, chart: Chart) -> Expression:
    if isinstance(e, str):
        return parse(e, chart)
    if isinstance(e, Expression):
        return e
    return ex._as_expr(e)


def _one_var(e) -> Expression:
    """Coerce a single-variable function given as str/Expression/number."""
    if isinstance(e, str):
        return parse(e, Chart(("u",)))
    if isinstance(e, Expression):
        return e
    return ex._as_expr(e)


WALKER_CHART = Chart(("x1", "x2", "x3", "x4"))


def walker(g34) -> MetricModel:
    """Dimension-4 signature (2,2) metric with g13 = g24 = 1, g34 free.

    g34 may be a string over (x1, x2, x3, x4) or an Expression.
    """
    f = _as_entry(g34, WALKER_CHART)
    bad = ex.free_vars(f) - {0, 1, 2, 3}
    if bad:
        raise ValueError("g34 references variables outside x1..x4")
    Z = ex.ZERO
    entries = [[Z] * 4 for _ in range(4)]
    entries[0][2] = entries[2][0] = ex.ONE
    entries[1][3] = entries[3][1] = ex.ONE
    entries[2][3] = entries[3][2] = f
    return MetricModel(WALKER_CHART, entries, signature=(2, 2), name="walker")


def plane_wave_pp(psi) -> MetricModel:
    """Neutral metric on R^{2p}: g(dxi, dxj) = psi_ij(x), g(dxi, dxbj) = delta.

    Chart: (x1..xp, xb1..xbp); psi is a p x p symmetric matrix of
    expressions in x1..xp.
    """
    p = len(psi)
    if p < 2:
        raise ValueError("need p >= 2")
    chart_x = Chart(tuple(f"x{i+1}" for i in range(p)))
    chart = chart_x.extend(tuple(f"xb{i+1}" for i in range(p)))
    rows = [[_as_entry(psi[i][j], chart_x) for j in range(p)] for i in range(p)]
    for i in range(p):
        for j in range(i + 1, p):
            if not geom._structurally_equal(rows[i][j], rows[j][i]):
                raise ValueError("psi must be symmetric")
    for i in range(p):
        for j in range(p):
            if ex.free_vars(rows[i][j]) - set(range(p)):
                raise ValueError("psi entries may only use x1..xp")
    m = 2 * p
    Z = ex.ZERO
    entries = [[Z] * m for _ in range(m)]
    for i in range(p):
        for j in range(p):
            entries[i][j] = rows[i][j]
    for i in range(p):
        entries[i][p + i] = ex.ONE
        entries[p + i][i] = ex.ONE
    return MetricModel(chart, entries, signature=(p, p), name="plane-wave")


def nilpotent3(f: Sequence) -> MetricModel:
    """Signature (2s, s) metric on R^{3s} with three-step nilpotent Jacobi.

    Chart: (u1..us, t1..ts, v1..vs).  Every g(dui, dui) equals
    -2 * sum_j (f_j(u_j) + u_j t_j); g(dui, dvi) = 1; g(dti, dti) = -1.
    Each f_j is a function of one variable.
    """
    s = len(f)
    if s < 2:
        raise ValueError("need s >= 2")
    names = [f"u{i+1}" for i in range(s)] + [f"t{i+1}" for i in range(s)] + [f"v{i+1}" for i in range(s)]
    chart = Chart(tuple(names))
    m = 3 * s
    total = ex.ZERO
    for j in range(s):
        fj = ex.relabel_vars(_one_var(f[j]), {0: j})
        uj_tj = ex.mul(ex.variable(j), ex.variable(s + j))
        total = total + fj + uj_tj
    uu = ex.mul(ex.const(-2), total)
    Z = ex.ZERO
    entries = [[Z] * m for _ in range(m)]
    for i in range(s):
        entries[i][i] = uu
        entries[i][2 * s + i] = ex.ONE
        entries[2 * s + i][i] = ex.ONE
        entries[s + i][s + i] = ex.const(-1)
    return MetricModel(chart, entries, signature=(2 * s, s), name="nilpotent3")


def curvature_homogeneous(f, ell: int = 0) -> MetricModel:
    """Neutral metric on R^{6+2l}: g(dx,dx) = f(y) + y z_0 + ... + y^{l+1} z_l.

    Chart: (x, y, z0..zl, xt, yt, zt0..ztl) with unit pairings
    g(dx, dxt) = g(dy, dyt) = g(dzi, dzti) = 1.  f is a function of one
    variable (placed on y).
    """
    if ell < 0:
        raise ValueError("ell must be >= 0")
    half = 3 + ell
    names = ["x", "y"] + [f"z{i}" for i in range(ell + 1)]
    names += ["xt", "yt"] + [f"zt{i}" for i in range(ell + 1)]
    chart = Chart(tuple(names))
    m = 2 * half
    fy = ex.relabel_vars(_one_var(f), {0: 1})
    gxx = fy
    for i in range(ell + 1):
        gxx = gxx + ex.mul(ex.pow_(ex.variable(1), i + 1), ex.variable(2 + i))
    Z = ex.ZERO
    entries = [[Z] * m for _ in range(m)]
    entries[0][0] = gxx
    for i in range(half):
        entries[i][half + i] = ex.ONE
        entries[half + i][i] = ex.ONE
    return MetricModel(chart, entries, signature=(half, half), name="curvature-homogeneous")


def round_sphere(n: int) -> MetricModel:
    """Stereographic chart of the unit sphere: g = 4 delta / (1 + |u|^2)^2."""
    if n < 2:
        raise ValueError("need n >= 2")
    chart = Chart(tuple(f"u{i+1}" for i in range(n)))
    ss = ex.add(*[ex.pow_(ex.variable(i), 2) for i in range(n)])
    conf = ex.div(ex.const(4), ex.pow_(ex.ONE + ss, 2))
    Z = ex.ZERO
    entries = [[Z] * n for _ in range(n)]
    for i in range(n):
        entries[i][i] = conf
    return MetricModel(chart, entries, signature=(0, n), name=f"sphere-{n}")


def flat_space(k: int, signature: tuple[int, int] | None = None) -> MetricModel:
    """Constant diagonal +-1 metric on a box chart (y1..yk)."""
    if k < 1:
        raise ValueError("need k >= 1")
    if signature is None:
        signature = (0, k)
    p, q = signature
    if p + q != k or p < 0 or q < 0:
        raise ValueError(f"signature {signature} does not fit dimension {k}")
    chart = Chart(tuple(f"y{i+1}" for i in range(k)))
    Z = ex.ZERO
    entries = [[Z] * k for _ in range(k)]
    for i in range(k):
        entries[i][i] = ex.const(-1) if i < p else ex.ONE
    return MetricModel(chart, entries, signature=(p, q), name=f"flat-{k}")


product_metric = geom.product_metric
product_connection = geom.product_connection


# -- synthetic curvature-level models ------------------------------------


class RankOneModel:
    """Jacobi operators J(x)y = tau(x,x) y - tau(x,y) x for symmetric tau.

    tau entries may be numbers or Expressions over the chart (w1..wm);
    the model is curvature-level: it exposes Jacobi operators directly
    rather than a connection.
    """

    def __init__(self, tau, m: int | None = None):
        size = len(tau)
        if m is None:
            m = size
        if size != m:
            raise ValueError("tau must be m x m")
        self.m = m
        self.chart = Chart(tuple(f"w{i+1}" for i in range(m)))
        grid = [[_as_entry(tau[i][j], self.chart) for j in range(m)] for i in range(m)]
        for i in range(m):
            for j in range(i + 1, m):
                if not geom._structurally_equal(grid[i][j], grid[j][i]):
                    raise ValueError("tau must be symmetric")
        self.tau = tuple(tuple(row) for row in grid)
        self._cache: dict = {}

    def is_rational(self) -> bool:
        return all(ex.rational_only(e) for row in self.tau for e in row)

    def tau_at(self, pt) -> np.ndarray:
        values = [float(v) for v in geom._coords(pt, self.m)]
        return np.array(
            [[ex.evaluate(self.tau[i][j], values) for j in range(self.m)] for i in range(self.m)],
            dtype=float,
        )

    def jacobi(self, pt, x) -> OperatorAtPoint:
        m = self.m
        coords = geom._coords(pt, m)
        x = list(x)
        if len(x) != m:
            raise ValueError("direction dimension mismatch")
        if self.is_rational() and geom._all_exact(coords) and geom._all_exact(x):
            T = [[ex.evaluate(self.tau[i][j], coords) for j in range(m)] for i in range(m)]
            xf = [Fraction(t) for t in x]
            txx = sum(xf[i] * T[i][j] * xf[j] for i in range(m) for j in range(m))
            tx = [sum(T[i][j] * xf[j] for j in range(m)) for i in range(m)]
            mat = tuple(
                tuple((txx if l == i else 0) - xf[l] * tx[i] for i in range(m)) for l in range(m)
            )
            return OperatorAtPoint(mat, True, "J")
        T = self.tau_at(coords)
        ax = np.array([float(t) for t in x])
        txx = float(ax @ T @ ax)
        mat = txx * np.eye(m) - np.outer(ax, T @ ax)
        return OperatorAtPoint(mat, False, "J")

    def jacobi_family(self):
        """Exact J(v) over 2m variables (chart coords then v), or None."""
        if "family" not in self._cache:
            m = self.m
            if not self.is_rational():
                self._cache["family"] = None
                return None
            n2 = 2 * m
            ident = list(range(m))
            try:
                T = [
                    [ex.to_ratfunc(self.tau[i][j], m).relabel(n2, ident) for j in range(m)]
                    for i in range(m)
                ]
            except ex.NotRationalError:
                self._cache["family"] = None
                return None
            vs = [RatFunc.var(n2, m + j) for j in range(m)]
            zero = RatFunc.const(n2, 0)
            txx = zero
            for i in range(m):
                for j in range(m):
                    if T[i][j]:
                        txx = txx + T[i][j] * vs[i] * vs[j]
            tx = []
            for i in range(m):
                acc = zero
                for j in range(m):
                    if T[i][j]:
                        acc = acc + T[i][j] * vs[j]
                tx.append(acc)
            J = [[zero] * m for _ in range(m)]
            for l in range(m):
                for i in range(m):
                    acc = txx if l == i else zero
                    J[l][i] = acc - vs[l] * tx[i]
            self._cache["family"] = J
        return self._cache["family"]


def rank_one(tau, m: int | None = None) -> RankOneModel:
    return RankOneModel(tau, m)


class HypersurfaceModel:
    """Curvature-level conjugate-triple data (g, Ric*) on one chart.

    Carries the relative metric g and the conormal Ricci tensor Ric*;
    the Ricci operator rho* = g^{-1} Ric* is derived pointwise.  The
    model is umbilic at a point when Ric* = (m-1) H g there.
    """

    def __init__(self, g_entries, ric_star):
        m = len(g_entries)
        if m < 2:
            raise ValueError("need dimension >= 2")
        self.m = m
        self.chart = Chart(tuple(f"w{i+1}" for i in range(m)))
        G = [[_as_entry(g_entries[i][j], self.chart) for j in range(m)] for i in range(m)]
        S = [[_as_entry(ric_star[i][j], self.chart) for j in range(m)] for i in range(m)]
        for i in range(m):
            for j in range(i + 1, m):
                if not geom._structurally_equal(G[i][j], G[j][i]):
                    raise ValueError("g must be symmetric")
                if not geom._structurally_equal(S[i][j], S[j][i]):
                    raise ValueError("Ric* must be symmetric")
        self.g_entries = tuple(tuple(row) for row in G)
        self.ric_star = tuple(tuple(row) for row in S)

    def g_at(self, pt) -> np.ndarray:
        values = [float(v) for v in geom._coords(pt, self.m)]
        return np.array(
            [[ex.evaluate(self.g_entries[i][j], values) for j in range(self.m)] for i in range(self.m)],
            dtype=float,
        )

    def ric_star_at(self, pt) -> np.ndarray:
        values = [float(v) for v in geom._coords(pt, self.m)]
        return np.array(
            [[ex.evaluate(self.ric_star[i][j], values) for j in range(self.m)] for i in range(self.m)],
            dtype=float,
        )

    def rho_star_at(self, pt) -> np.ndarray:
        G = self.g_at(pt)
        det = np.linalg.det(G)
        if abs(det) < 1e-12:
            raise geom.DegenerateMetricError(f"det g = {det:.3e}")
        return np.linalg.solve(G, self.ric_star_at(pt))

    def mean_curvature_at(self, pt) -> float:
        m = self.m
        return float(np.trace(self.rho_star_at(pt))) / (m * (m - 1))

    def is_umbilic_at(self, pt, tol: float = 1e-10) -> bool:
        G = self.g_at(pt)
        S = self.ric_star_at(pt)
        H = self.mean_curvature_at(pt)
        resid = S - (self.m - 1) * H * G
        scale = max(1.0, float(np.abs(S).max()), float(np.abs(G).max()))
        return bool(np.abs(resid).max() <= tol * scale)

    def jacobi(self, pt, x, which: str = "conormal") -> OperatorAtPoint:
        return hypersurface_jacobi(self, pt, x, which)

    def jacobi_family(self, which: str = "conormal"):
        """Exact J(v) over 2m variables, or None for transcendental data."""
        m = self.m
        n2 = 2 * m
        ident = list(range(m))
        try:
            G = [[ex.to_ratfunc(self.g_entries[i][j], m) for j in range(m)] for i in range(m)]
            S = [[ex.to_ratfunc(self.ric_star[i][j], m) for j in range(m)] for i in range(m)]
        except ex.NotRationalError:
            return None
        w = Fraction(1, m - 1)
        vs = [RatFunc.var(n2, m + j) for j in range(m)]
        zero = RatFunc.const(n2, 0)
        if which == "conormal":
            Sl = [[S[i][j].relabel(n2, ident) for j in range(m)] for i in range(m)]
            sxx = zero
            for i in range(m):
                for j in range(m):
                    if Sl[i][j]:
                        sxx = sxx + Sl[i][j] * vs[i] * vs[j]
            sx = [sum((Sl[i][j] * vs[j] for j in range(m) if Sl[i][j]), zero) for i in range(m)]
            return [
                [((sxx if l == i else zero) - vs[l] * sx[i]) * w for i in range(m)]
                for l in range(m)
            ]
        if which != "induced":
            raise ValueError("which must be 'induced' or 'conormal'")
        ginv, _ = geom.rat_matrix_inverse(G, m, m)
        rho = [
            [sum((ginv[i][s] * S[s][j] for s in range(m) if ginv[i][s] and S[s][j]), RatFunc.const(m, 0)) for j in range(m)]
            for i in range(m)
        ]
        rho = [[rho[i][j].relabel(n2, ident) for j in range(m)] for i in range(m)]
        Gl = [[G[i][j].relabel(n2, ident) for j in range(m)] for i in range(m)]
        gxx = zero
        for i in range(m):
            for j in range(m):
                if Gl[i][j]:
                    gxx = gxx + Gl[i][j] * vs[i] * vs[j]
        gx = [sum((Gl[i][j] * vs[j] for j in range(m) if Gl[i][j]), zero) for i in range(m)]
        rhox = [sum((rho[l][j] * vs[j] for j in range(m) if rho[l][j]), zero) for l in range(m)]
        return [
            [(gxx * rho[l][i] - rhox[l] * gx[i]) * w for i in range(m)]
            for l in range(m)
        ]


def hypersurface(g_entries, ric_star) -> HypersurfaceModel:
    return HypersurfaceModel(g_entries, ric_star)


def hypersurface_jacobi(h: HypersurfaceModel, pt, x, which: str) -> OperatorAtPoint:
    """Jacobi operator of the induced or conormal connection.

    conormal: J(x)y = {Ric*(x,x) y - Ric*(y,x) x} / (m-1)
    induced:  J(x)y = {g(x,x) rho* y - g(y,x) rho* x} / (m-1)
    """
    m = h.m
    ax = np.array([float(t) for t in x])
    if len(ax) != m:
        raise ValueError("direction dimension mismatch")
    if which == "conormal":
        S = h.ric_star_at(pt)
        sxx = float(ax @ S @ ax)
        mat = (sxx * np.eye(m) - np.outer(ax, S @ ax)) / (m - 1)
        return OperatorAtPoint(mat, False, "J_conormal")
    if which == "induced":
        G = h.g_at(pt)
        rho = h.rho_star_at(pt)
        gxx = float(ax @ G @ ax)
        mat = (gxx * rho - np.outer(rho @ ax, G @ ax)) / (m - 1)
        return OperatorAtPoint(mat, False, "J_induced")
    raise ValueError("which must be 'induced' or 'conormal'")


# -- registry for the CLI -------------------------------------------------

CATALOG = {
    "walker": {
        "build": walker,
        "params": {"g34": "expression in x1..x4"},
        "doc": "4-dim neutral Walker metric; g13 = g24 = 1, g34 free.",
    },
    "plane_wave_pp": {
        "build": plane_wave_pp,
        "params": {"psi": "p x p symmetric matrix of expressions in x1..xp"},
        "doc": "2p-dim neutral metric with J(x)^2 = 0.",
    },
    "nilpotent3": {
        "build": nilpotent3,
        "params": {"f": "list of s one-variable expressions"},
        "doc": "3s-dim signature (2s, s) metric with J(x)^3 = 0.",
    },
    "curvature_homogeneous": {
        "build": curvature_homogeneous,
        "params": {"f": "one-variable expression", "ell": "integer >= 0"},
        "doc": "(6+2l)-dim neutral metric g(dx,dx) = f(y) + sum y^{i+1} z_i.",
    },
    "round_sphere": {
        "build": round_sphere,
        "params": {"n": "integer >= 2"},
        "doc": "Unit sphere in a stereographic chart.",
    },
    "flat_space": {
        "build": flat_space,
        "params": {"k": "integer >= 1", "signature": "optional (p, q)"},
        "doc": "Flat diagonal +-1 metric (torus chart).",
    },
    "rank_one": {
        "build": rank_one,
        "params": {"tau": "m x m symmetric matrix of expressions over w1..wm"},
        "doc": "Synthetic model with J(x)y = tau(x,x)y - tau(x,y)x.",
    },
    "hypersurface": {
        "build": hypersurface,
        "params": {
            "g": "m x m symmetric matrix of expressions over w1..wm",
            "ric_star": "m x m symmetric matrix of expressions over w1..wm",
        },
        "doc": "Relative-hypersurface data (g, Ric*); induced and conormal Jacobi.",
    },
    "product": {
        "build": product_metric,
        "params": {"factors": "two catalog metrics"},
        "doc": "Block product of two metric models.",
    },
}
