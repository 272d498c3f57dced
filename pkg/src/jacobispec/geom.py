"""Metric and affine-connection models with their curvature operators.

Index conventions, fixed once and used everywhere:

    [R(v1, v2) w]^l = v1^i v2^j w^k R^l_{ijk},
    R^l_{ijk} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik}
              + Gamma^l_{im} Gamma^m_{jk} - Gamma^l_{jm} Gamma^m_{ik},
    J(x) y = R(y, x) x,
    Ric(a, b) = trace(w -> R(w, a) b).

Storage mirrors the formulas: curvature tensors are indexed [l][i][j][k]
with l the output slot, Jacobi matrices J[l][i] act on column vectors.

Every model supports two evaluation modes.  The numeric mode compiles the
connection coefficients and their coordinate derivatives into one flat
float function per model and does the tensor algebra in numpy.  The exact
mode converts everything to rational functions; it exists whenever no
exp/sin/cos appears in the model and is what the classifiers use to turn
sampled claims into proofs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import expr as ex
from .expr import Chart, Expression, Point
from .polyring import Poly, RatFunc


class DegenerateMetricError(ValueError):
    """Metric determinant vanished at the requested point."""


def _coords(pt, m: int) -> tuple:
    values = pt.values if isinstance(pt, Point) else tuple(pt)
    if len(values) != m:
        raise ValueError(f"expected {m} coordinates, got {len(values)}")
    return tuple(values)


def _all_exact(values) -> bool:
    return all(isinstance(v, (int, Fraction)) for v in values)


def _float_coords(values) -> list[float]:
    return [float(v) for v in values]


def _structurally_equal(a: Expression, b: Expression) -> bool:
    if a is b:
        return True
    if a.kind != b.kind or a.value != b.value or len(a.args) != len(b.args):
        return False
    return all(_structurally_equal(x, y) for x, y in zip(a.args, b.args))


@dataclass(frozen=True)
class OperatorAtPoint:
    """A linear operator on one tangent space, with provenance.

    ref records the magnitude the entries were accumulated at before
    any cancelling subtraction; entries far below roundoff of ref are
    numerically zero even when they dominate the matrix itself.
    """

    matrix: object  # (m, m) float ndarray, or tuple of tuples of Fraction
    exact: bool
    tag: str
    ref: float = 0.0

    @property
    def m(self) -> int:
        return len(self.matrix)

    def as_array(self) -> np.ndarray:
        if isinstance(self.matrix, np.ndarray):
            return self.matrix
        return np.array([[float(x) for x in row] for row in self.matrix])


@dataclass(frozen=True)
class CovectorField:
    """A 1-form given by component expressions in the chart frame."""

    chart: Chart
    components: tuple

    @classmethod
    def of(cls, chart: Chart, components: Sequence) -> "CovectorField":
        comps = tuple(ex._as_expr(c) if not isinstance(c, Expression) else c for c in components)
        if len(comps) != len(chart):
            raise ValueError("component count does not match chart")
        return cls(chart, comps)


# -- generic matrix inversion over expression-like rings -------------------


def _inverse_symbolic(entries, m, zero, one, is_zero_entry, build_div):
    """Adjugate/determinant inverse with structural-zero pruning.

    Works for Expression entries and for RatFunc entries; sparse metrics
    (all the catalog families) stay cheap because zero entries prune the
    cofactor expansion.
    """
    diag = all(is_zero_entry(entries[i][j]) for i in range(m) for j in range(m) if i != j)
    if diag:
        inv = [[zero for _ in range(m)] for _ in range(m)]
        det = one
        for i in range(m):
            det = det * entries[i][i]
            inv[i][i] = build_div(one, entries[i][i])
        return inv, det

    memo: dict[tuple, object] = {}

    def det_of(rows: tuple[int, ...], colmask: int):
        if not rows:
            return one
        key = (rows, colmask)
        got = memo.get(key)
        if got is not None:
            return got
        r = rows[0]
        rest = rows[1:]
        acc = None
        sign = 1
        for j in range(m):
            if not (colmask >> j) & 1:
                continue
            e = entries[r][j]
            if not is_zero_entry(e):
                sub = det_of(rest, colmask & ~(1 << j))
                term = e * sub
                if sign < 0:
                    term = -term
                acc = term if acc is None else acc + term
            sign = -sign
        result = acc if acc is not None else zero
        memo[key] = result
        return result

    full = tuple(range(m))
    det = det_of(full, (1 << m) - 1)
    if is_zero_entry(det):
        raise DegenerateMetricError("metric is symbolically degenerate")
    inv = [[zero for _ in range(m)] for _ in range(m)]
    for i in range(m):
        for j in range(m):
            rows = tuple(r for r in range(m) if r != j)
            minor = det_of(rows, ((1 << m) - 1) & ~(1 << i))
            if is_zero_entry(minor):
                continue
            if (i + j) % 2:
                minor = -minor
            inv[i][j] = build_div(minor, det)
    return inv, det


def _expr_is_zero_entry(e: Expression) -> bool:
    return e.kind == "const" and e.value == 0


def expr_matrix_inverse(entries, m):
    return _inverse_symbolic(
        entries, m, ex.ZERO, ex.ONE, _expr_is_zero_entry, lambda a, b: ex.div(a, b)
    )


def rat_matrix_inverse(entries, m, nvars):
    zero = RatFunc.const(nvars, 0)
    one = RatFunc.const(nvars, 1)
    return _inverse_symbolic(entries, m, zero, one, lambda r: r.is_zero, lambda a, b: a / b)


def poly_to_expr(p: Poly) -> Expression:
    from .polyring import MASK, SHIFT

    terms = []
    for key in sorted(p.terms, reverse=True):
        c = p.terms[key]
        factors = [ex.const(Fraction(int(c.numerator), int(c.denominator)))]
        rem = key
        i = 0
        while rem:
            e = rem & MASK
            if e:
                factors.append(ex.pow_(ex.variable(i), e))
            rem >>= SHIFT
            i += 1
        terms.append(ex.mul(*factors))
    return ex.add(*terms) if terms else ex.ZERO


def ratfunc_to_expr(r: RatFunc) -> Expression:
    num = poly_to_expr(r.num)
    if r.den.is_constant:
        return num
    return ex.div(num, poly_to_expr(r.den))


# -- models ----------------------------------------------------------------


class MetricModel:
    """A pseudo-Riemannian metric in one chart."""

    def __init__(self, chart: Chart, entries, signature: tuple[int, int] | None = None, name: str = ""):
        m = len(chart)
        self.chart = chart
        self.name = name
        grid = [[None] * m for _ in range(m)]
        for i in range(m):
            for j in range(m):
                e = entries[i][j]
                grid[i][j] = e if isinstance(e, Expression) else ex._as_expr(e)
        for i in range(m):
            for j in range(i + 1, m):
                if not _structurally_equal(grid[i][j], grid[j][i]):
                    raise ValueError(f"metric entries not symmetric at ({i}, {j})")
        self.entries = tuple(tuple(row) for row in grid)
        self._declared_signature = signature
        self._cache: dict = {}

    @property
    def m(self) -> int:
        return len(self.chart)

    def is_rational(self) -> bool:
        return all(ex.rational_only(e) for row in self.entries for e in row)

    def _compiled(self):
        fn = self._cache.get("compiled")
        if fn is None:
            flat = [e for row in self.entries for e in row]
            fn = ex.compile_evaluator(flat, self.m)
            self._cache["compiled"] = fn
        return fn

    def metric_at(self, pt) -> np.ndarray:
        values = _float_coords(_coords(pt, self.m))
        vals = self._compiled()(values)
        return np.array(vals, dtype=float).reshape(self.m, self.m)

    def metric_at_exact(self, pt):
        values = _coords(pt, self.m)
        return [[ex.evaluate(self.entries[i][j], values) for j in range(self.m)] for i in range(self.m)]

    def inverse_at(self, pt) -> np.ndarray:
        G = self.metric_at(pt)
        det = np.linalg.det(G)
        if abs(det) < 1e-12:
            raise DegenerateMetricError(f"det g = {det:.3e} at {tuple(pt)}")
        return np.linalg.inv(G)

    def signature(self) -> tuple[int, int]:
        """(negative, positive) eigenvalue counts of g."""
        if self._declared_signature is not None:
            return self._declared_signature
        sig = self._cache.get("signature")
        if sig is None:
            pt = [Fraction(1, 7 + 3 * i) for i in range(self.m)]
            G = self.metric_at(pt)
            eig = np.linalg.eigvalsh((G + G.T) / 2)
            if np.any(np.abs(eig) < 1e-10):
                G = self.metric_at([Fraction(2, 5 + 2 * i) for i in range(self.m)])
                eig = np.linalg.eigvalsh((G + G.T) / 2)
            sig = (int(np.sum(eig < 0)), int(np.sum(eig > 0)))
            self._cache["signature"] = sig
        return sig

    def rat_entries(self):
        """Metric as RatFunc matrix, or None when transcendental."""
        if "rat" not in self._cache:
            try:
                self._cache["rat"] = [
                    [ex.to_ratfunc(e, self.m) for e in row] for row in self.entries
                ]
            except ex.NotRationalError:
                self._cache["rat"] = None
        return self._cache["rat"]

    def rat_inverse(self):
        if "rat_inv" not in self._cache:
            rat = self.rat_entries()
            if rat is None:
                self._cache["rat_inv"] = None
            else:
                inv, det = rat_matrix_inverse(rat, self.m, self.m)
                self._cache["rat_inv"] = (inv, det)
        return self._cache["rat_inv"]


class ConnectionModel:
    """A (coordinate-frame) affine connection: Gamma^k_{ij} expressions."""

    def __init__(self, chart: Chart, gamma, name: str = "", source_metric: MetricModel | None = None):
        m = len(chart)
        self.chart = chart
        self.name = name
        self.source_metric = source_metric
        grid = [[[None] * m for _ in range(m)] for _ in range(m)]
        for k in range(m):
            for i in range(m):
                for j in range(m):
                    e = gamma[k][i][j]
                    grid[k][i][j] = e if isinstance(e, Expression) else ex._as_expr(e)
        for k in range(m):
            for i in range(m):
                for j in range(i + 1, m):
                    if not _structurally_equal(grid[k][i][j], grid[k][j][i]):
                        raise ValueError(f"connection not torsion-free at ({k}, {i}, {j})")
        self.gamma = tuple(tuple(tuple(row) for row in plane) for plane in grid)
        self._cache: dict = {}

    @property
    def m(self) -> int:
        return len(self.chart)

    def is_rational(self) -> bool:
        return all(
            ex.rational_only(self.gamma[k][i][j])
            for k in range(self.m)
            for i in range(self.m)
            for j in range(self.m)
        )

    # -- numeric path ---------------------------------------------------

    def _compiled(self):
        fn = self._cache.get("compiled")
        if fn is None:
            m = self.m
            exprs = []
            for k in range(m):
                for i in range(m):
                    for j in range(m):
                        exprs.append(self.gamma[k][i][j])
            for d in range(m):
                for k in range(m):
                    for i in range(m):
                        for j in range(m):
                            exprs.append(ex.differentiate(self.gamma[k][i][j], d))
            fn = ex.compile_evaluator(exprs, m)
            self._cache["compiled"] = fn
        return fn

    def _gamma_blocks_at(self, pt) -> tuple[np.ndarray, np.ndarray]:
        m = self.m
        values = _float_coords(_coords(pt, m))
        flat = np.array(self._compiled()(values), dtype=float)
        gam = flat[: m**3].reshape(m, m, m)
        dgam = flat[m**3 :].reshape(m, m, m, m)
        return gam, dgam

    def gamma_at(self, pt) -> np.ndarray:
        return self._gamma_blocks_at(pt)[0]

    def curvature_at(self, pt) -> np.ndarray:
        """R[l, i, j, k] as floats at the point."""
        gam, dgam = self._gamma_blocks_at(pt)
        term1 = np.einsum("iljk->lijk", dgam)
        term2 = np.einsum("jlik->lijk", dgam)
        term3 = np.einsum("lim,mjk->lijk", gam, gam)
        term4 = np.einsum("ljm,mik->lijk", gam, gam)
        return term1 - term2 + term3 - term4

    # -- exact path -------------------------------------------------------

    def rat_gamma(self):
        if "rat_gamma" not in self._cache:
            m = self.m
            try:
                self._cache["rat_gamma"] = [
                    [[ex.to_ratfunc(self.gamma[k][i][j], m) for j in range(m)] for i in range(m)]
                    for k in range(m)
                ]
            except ex.NotRationalError:
                self._cache["rat_gamma"] = None
        return self._cache["rat_gamma"]

    def rat_curvature(self):
        """R[l][i][j][k] as RatFunc over the chart variables, or None."""
        if "rat_R" not in self._cache:
            gam = self.rat_gamma()
            if gam is None:
                self._cache["rat_R"] = None
                return None
            m = self.m
            zero = RatFunc.const(m, 0)
            dgam = [
                [[[gam[k][i][j].diff(d) for j in range(m)] for i in range(m)] for k in range(m)]
                for d in range(m)
            ]
            R = [[[[zero] * m for _ in range(m)] for _ in range(m)] for _ in range(m)]
            for l in range(m):
                for i in range(m):
                    for j in range(i + 1, m):
                        for k in range(m):
                            acc = dgam[i][l][j][k] - dgam[j][l][i][k]
                            for mm in range(m):
                                a = gam[l][i][mm]
                                b = gam[mm][j][k]
                                if a and b:
                                    acc = acc + a * b
                                a = gam[l][j][mm]
                                b = gam[mm][i][k]
                                if a and b:
                                    acc = acc - a * b
                            R[l][i][j][k] = acc
                            R[l][j][i][k] = -acc
            self._cache["rat_R"] = R
        return self._cache["rat_R"]

    def rat_ricci(self):
        """Ric[a][b] = trace(w -> R(w, a) b), exact, or None."""
        if "rat_ric" not in self._cache:
            R = self.rat_curvature()
            if R is None:
                self._cache["rat_ric"] = None
                return None
            m = self.m
            zero = RatFunc.const(m, 0)
            ric = [[zero] * m for _ in range(m)]
            for a in range(m):
                for b in range(m):
                    acc = zero
                    for s in range(m):
                        acc = acc + R[s][s][a][b]
                    ric[a][b] = acc
            self._cache["rat_ric"] = ric
        return self._cache["rat_ric"]

    def jacobi_family(self):
        """J(v)[l][i] over 2m variables (chart coords then v components)."""
        if "jac_family" not in self._cache:
            R = self.rat_curvature()
            if R is None:
                self._cache["jac_family"] = None
                return None
            m = self.m
            n2 = 2 * m
            ident = list(range(m))
            zero = RatFunc.const(n2, 0)
            vs = [RatFunc.var(n2, m + j) for j in range(m)]
            J = [[zero] * m for _ in range(m)]
            for l in range(m):
                for i in range(m):
                    acc = zero
                    for j in range(m):
                        for k in range(m):
                            rf = R[l][i][j][k]
                            if rf:
                                acc = acc + rf.relabel(n2, ident) * vs[j] * vs[k]
                    J[l][i] = acc
            self._cache["jac_family"] = J
        return self._cache["jac_family"]


# -- Levi-Civita ------------------------------------------------------------


def levi_civita(g: MetricModel) -> ConnectionModel:
    """Christoffel symbols of the metric, materialized as expressions.

    Rational metrics go through exact rational-function arithmetic (the
    result is the expanded canonical form); transcendental metrics use
    symbolic cofactor inversion, which stays small for the sparse and
    diagonal shapes that actually occur.
    """
    cached = g._cache.get("levi_civita")
    if cached is not None:
        return cached
    m = g.m
    rat = g.rat_entries()
    if rat is not None:
        inv, _ = g.rat_inverse()
        dg = [[[rat[i][j].diff(d) for j in range(m)] for i in range(m)] for d in range(m)]
        zero = RatFunc.const(m, 0)
        gamma = [[[None] * m for _ in range(m)] for _ in range(m)]
        for k in range(m):
            for i in range(m):
                for j in range(i, m):
                    acc = zero
                    for l in range(m):
                        kl = inv[k][l]
                        if not kl:
                            continue
                        term = dg[i][j][l] + dg[j][i][l] - dg[l][i][j]
                        if term:
                            acc = acc + kl * term
                    e = ratfunc_to_expr(acc * Fraction(1, 2))
                    gamma[k][i][j] = e
                    gamma[k][j][i] = e
    else:
        inv, _ = expr_matrix_inverse(g.entries, m)
        gamma = [[[None] * m for _ in range(m)] for _ in range(m)]
        for k in range(m):
            for i in range(m):
                for j in range(i, m):
                    terms = []
                    for l in range(m):
                        kl = inv[k][l]
                        if _expr_is_zero_entry(kl):
                            continue
                        inner = (
                            ex.differentiate(g.entries[j][l], i)
                            + ex.differentiate(g.entries[i][l], j)
                            - ex.differentiate(g.entries[i][j], l)
                        )
                        if not _expr_is_zero_entry(inner):
                            terms.append(ex.mul(kl, inner))
                    e = ex.mul(ex.const(Fraction(1, 2)), ex.add(*terms)) if terms else ex.ZERO
                    gamma[k][i][j] = e
                    gamma[k][j][i] = e
    conn = ConnectionModel(g.chart, gamma, name=f"LC({g.name})" if g.name else "LC", source_metric=g)
    g._cache["levi_civita"] = conn
    return conn


def _lc_of(g: MetricModel) -> ConnectionModel:
    return levi_civita(g)


# -- pointwise operators -----------------------------------------------------


def curvature_operator(c: ConnectionModel, pt, v1, v2) -> OperatorAtPoint:
    """Matrix of w -> R(v1, v2) w at the point."""
    m = c.m
    v1 = list(v1)
    v2 = list(v2)
    if len(v1) != m or len(v2) != m:
        raise ValueError("direction dimension mismatch")
    coords = _coords(pt, m)
    if c.is_rational() and _all_exact(coords) and _all_exact(v1) and _all_exact(v2):
        R = c.rat_curvature()
        vals = [Fraction(v) if isinstance(v, int) else v for v in coords]
        mat = []
        for l in range(m):
            row = []
            for k in range(m):
                acc = Fraction(0)
                for i in range(m):
                    if v1[i] == 0:
                        continue
                    for j in range(m):
                        if v2[j] == 0 or not R[l][i][j][k]:
                            continue
                        acc += Fraction(v1[i]) * Fraction(v2[j]) * R[l][i][j][k].eval(vals)
                row.append(acc)
            mat.append(tuple(row))
        return OperatorAtPoint(tuple(mat), True, "R(v1,v2)")
    Rn = c.curvature_at(pt)
    a1 = np.array([float(t) for t in v1])
    a2 = np.array([float(t) for t in v2])
    mat = np.einsum("lijk,i,j->lk", Rn, a1, a2)
    return OperatorAtPoint(mat, False, "R(v1,v2)")


def _jacobi_from_R_exact(R, coords, x, m) -> tuple:
    vals = [Fraction(v) if isinstance(v, int) else v for v in coords]
    xf = [Fraction(t) if isinstance(t, int) else t for t in x]
    mat = []
    for l in range(m):
        row = []
        for i in range(m):
            acc = Fraction(0)
            for j in range(m):
                if xf[j] == 0:
                    continue
                for k in range(m):
                    if xf[k] == 0 or not R[l][i][j][k]:
                        continue
                    acc += xf[j] * xf[k] * R[l][i][j][k].eval(vals)
            row.append(acc)
        mat.append(tuple(row))
    return tuple(mat)


def jacobi(c: ConnectionModel, pt, x) -> OperatorAtPoint:
    """Jacobi operator J(x): y -> R(y, x) x at the point.

    Exact (Fraction matrix) for rational models with rational inputs;
    float otherwise.
    """
    m = c.m
    x = list(x)
    if len(x) != m:
        raise ValueError("direction dimension mismatch")
    coords = _coords(pt, m)
    if c.is_rational() and _all_exact(coords) and _all_exact(x):
        R = c.rat_curvature()
        mat = _jacobi_from_R_exact(R, coords, x, m)
        return OperatorAtPoint(mat, True, "J")
    Rn = c.curvature_at(pt)
    ax = np.array([float(t) for t in x])
    mat = np.einsum("lijk,j,k->li", Rn, ax, ax)
    return OperatorAtPoint(mat, False, "J")


def ricci(c: ConnectionModel, pt) -> np.ndarray:
    """Ricci tensor Ric[a][b] = trace(w -> R(w, a) b) at the point."""
    Rn = c.curvature_at(pt)
    return np.einsum("ssab->ab", Rn)


# -- Weyl conformal tensor ----------------------------------------------------


def _kulkarni_nomizu(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # matches the curvature arrangement R4[i,j,k,l] = g(R(di,dj)dk, dl)
    return (
        np.einsum("jk,il->ijkl", A, B)
        + np.einsum("il,jk->ijkl", A, B)
        - np.einsum("ik,jl->ijkl", A, B)
        - np.einsum("jl,ik->ijkl", A, B)
    )


def _weyl_conformal_parts(g: MetricModel, pt) -> tuple[np.ndarray, np.ndarray]:
    """(1,3) Weyl tensor plus the magnitude its terms cancelled at."""
    m = g.m
    if m <= 3:
        z = np.zeros((m, m, m, m))
        return z, z
    c = _lc_of(g)
    Rn = c.curvature_at(pt)
    G = g.metric_at(pt)
    Ginv = g.inverse_at(pt)
    R4 = np.einsum("sijk,sl->ijkl", Rn, G)
    Ric = np.einsum("ssab->ab", Rn)
    Ric = (Ric + Ric.T) / 2
    scal = float(np.einsum("ab,ab->", Ginv, Ric))
    ric0 = Ric - (scal / m) * G
    A = _kulkarni_nomizu(ric0, G) / (m - 2)
    B = _kulkarni_nomizu(G, G) * (scal / (2 * m * (m - 1)))
    W4 = R4 - A - B
    mag4 = np.abs(R4) + np.abs(A) + np.abs(B)
    W = np.einsum("ijks,sl->lijk", W4, Ginv)
    mag = np.einsum("ijks,sl->lijk", mag4, np.abs(Ginv))
    return W, mag


def weyl_conformal(g: MetricModel, pt) -> np.ndarray:
    """(1,3) Weyl conformal curvature W[l, i, j, k]; zero for m <= 3."""
    return _weyl_conformal_parts(g, pt)[0]


def conformal_jacobi(g: MetricModel, pt, x) -> OperatorAtPoint:
    """Conformal Jacobi operator J_W(x): y -> W(y, x) x."""
    m = g.m
    x = np.array([float(t) for t in x])
    if len(x) != m:
        raise ValueError("direction dimension mismatch")
    W, mag = _weyl_conformal_parts(g, pt)
    mat = np.einsum("lijk,j,k->li", W, x, x)
    ax = np.abs(x)
    ref = float(np.einsum("lijk,j,k->li", mag, ax, ax).max()) if m else 0.0
    return OperatorAtPoint(mat, False, "J_W", ref)


def rat_weyl_conformal(g: MetricModel):
    """Exact (1,3) Weyl tensor over the chart ring, or None."""
    cached = g._cache.get("rat_weyl")
    if cached is not None or "rat_weyl" in g._cache:
        return cached
    m = g.m
    rat = g.rat_entries()
    if rat is None or m <= 3:
        g._cache["rat_weyl"] = None
        return None
    c = _lc_of(g)
    R = c.rat_curvature()
    inv, _ = g.rat_inverse()
    zero = RatFunc.const(m, 0)

    def kn(A, B, i, j, k, l):
        return A[j][k] * B[i][l] + A[i][l] * B[j][k] - A[i][k] * B[j][l] - A[j][l] * B[i][k]

    R4 = [[[[zero] * m for _ in range(m)] for _ in range(m)] for _ in range(m)]
    for i in range(m):
        for j in range(m):
            for k in range(m):
                for l in range(m):
                    acc = zero
                    for s in range(m):
                        if R[s][i][j][k] and rat[s][l]:
                            acc = acc + R[s][i][j][k] * rat[s][l]
                    R4[i][j][k][l] = acc
    ric = [[zero] * m for _ in range(m)]
    for a in range(m):
        for b in range(m):
            acc = zero
            for s in range(m):
                acc = acc + R[s][s][a][b]
            ric[a][b] = acc
    scal = zero
    for a in range(m):
        for b in range(m):
            if inv[a][b] and ric[a][b]:
                scal = scal + inv[a][b] * ric[a][b]
    ric0 = [[ric[a][b] - rat[a][b] * scal * Fraction(1, m) for b in range(m)] for a in range(m)]
    W4 = [[[[zero] * m for _ in range(m)] for _ in range(m)] for _ in range(m)]
    half = Fraction(1, 2 * m * (m - 1))
    for i in range(m):
        for j in range(m):
            for k in range(m):
                for l in range(m):
                    W4[i][j][k][l] = (
                        R4[i][j][k][l]
                        - kn(ric0, rat, i, j, k, l) * Fraction(1, m - 2)
                        - kn(rat, rat, i, j, k, l) * scal * half
                    )
    W = [[[[zero] * m for _ in range(m)] for _ in range(m)] for _ in range(m)]
    for l in range(m):
        for i in range(m):
            for j in range(m):
                for k in range(m):
                    acc = zero
                    for s in range(m):
                        if W4[i][j][k][s] and inv[s][l]:
                            acc = acc + W4[i][j][k][s] * inv[s][l]
                    W[l][i][j][k] = acc
    g._cache["rat_weyl"] = W
    return W


# -- Weyl projective operator --------------------------------------------------


def _projective_tensor_np(Rn: np.ndarray, Ric: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """P[l,i,j,k] from curvature and Ricci arrays (full displayed form).

    Also returns the magnitude the terms cancelled at, for noise floors.
    """
    eye = np.eye(m)
    asym = np.abs(Ric - Ric.T).max() <= 1e-9 * (1.0 + np.abs(Ric).max())
    if asym:
        T1 = np.einsum("jk,li->lijk", Ric, eye) / (m - 1)
        T2 = np.einsum("ik,lj->lijk", Ric, eye) / (m - 1)
        return Rn - T1 + T2, np.abs(Rn) + np.abs(T1) + np.abs(T2)
    c1 = 1.0 / (m * m - 1)
    c2 = 1.0 / (m + 1)
    T1 = c1 * np.einsum("ik,lj->lijk", m * Ric + Ric.T, eye)
    T2 = c1 * np.einsum("jk,li->lijk", m * Ric + Ric.T, eye)
    T3 = c2 * np.einsum("ij,lk->lijk", Ric - Ric.T, eye)
    return Rn + T1 - T2 + T3, np.abs(Rn) + np.abs(T1) + np.abs(T2) + np.abs(T3)


def weyl_projective(c: ConnectionModel, pt, v1, v2) -> OperatorAtPoint:
    """Matrix of w -> P(v1, v2) w, the projective curvature operator.

    Uses the short 1/(m-1) form when the Ricci tensor is symmetric at the
    point and the full 1/(m^2-1), 1/(m+1) form otherwise; the two agree
    on Ricci-symmetric connections.
    """
    m = c.m
    if m < 2:
        raise ValueError("projective curvature needs dimension >= 2")
    Rn = c.curvature_at(pt)
    Ric = np.einsum("ssab->ab", Rn)
    P, mag = _projective_tensor_np(Rn, Ric, m)
    a1 = np.array([float(t) for t in v1])
    a2 = np.array([float(t) for t in v2])
    mat = np.einsum("lijk,i,j->lk", P, a1, a2)
    ref = float(np.einsum("lijk,i,j->lk", mag, np.abs(a1), np.abs(a2)).max())
    return OperatorAtPoint(mat, False, "P(v1,v2)", ref)


def projective_jacobi(c: ConnectionModel, pt, x) -> OperatorAtPoint:
    """Projective Jacobi operator J_P(x): y -> P(y, x) x."""
    m = c.m
    if m < 2:
        raise ValueError("projective curvature needs dimension >= 2")
    Rn = c.curvature_at(pt)
    Ric = np.einsum("ssab->ab", Rn)
    P, mag = _projective_tensor_np(Rn, Ric, m)
    ax = np.array([float(t) for t in x])
    mat = np.einsum("lijk,j,k->li", P, ax, ax)
    ref = float(np.einsum("lijk,j,k->li", mag, np.abs(ax), np.abs(ax)).max())
    return OperatorAtPoint(mat, False, "J_P", ref)


def rat_weyl_projective(c: ConnectionModel):
    """Exact P[l][i][j][k] over the chart ring, or None."""
    if c.m < 2:
        raise ValueError("projective curvature needs dimension >= 2")
    cached = c._cache.get("rat_P")
    if cached is not None or "rat_P" in c._cache:
        return cached
    R = c.rat_curvature()
    if R is None:
        c._cache["rat_P"] = None
        return None
    m = c.m
    ric = c.rat_ricci()
    symmetric = all(ric[a][b].equals(ric[b][a]) for a in range(m) for b in range(a + 1, m))
    zero = RatFunc.const(m, 0)
    P = [[[[zero] * m for _ in range(m)] for _ in range(m)] for _ in range(m)]
    if symmetric:
        w = Fraction(1, m - 1)
        for l in range(m):
            for i in range(m):
                for j in range(m):
                    for k in range(m):
                        acc = R[l][i][j][k]
                        if l == i and ric[j][k]:
                            acc = acc - ric[j][k] * w
                        if l == j and ric[i][k]:
                            acc = acc + ric[i][k] * w
                        P[l][i][j][k] = acc
    else:
        c1 = Fraction(1, m * m - 1)
        c2 = Fraction(1, m + 1)
        for l in range(m):
            for i in range(m):
                for j in range(m):
                    for k in range(m):
                        acc = R[l][i][j][k]
                        if l == j:
                            acc = acc + (ric[i][k] * m + ric[k][i]) * c1
                        if l == i:
                            acc = acc - (ric[j][k] * m + ric[k][j]) * c1
                        if l == k:
                            acc = acc + (ric[i][j] - ric[j][i]) * c2
                        P[l][i][j][k] = acc
    c._cache["rat_P"] = P
    return P


def _family_from_tensor(T, m):
    """Contract an exact [l][i][j][k] tensor with direction variables."""
    n2 = 2 * m
    ident = list(range(m))
    zero = RatFunc.const(n2, 0)
    vs = [RatFunc.var(n2, m + j) for j in range(m)]
    J = [[zero] * m for _ in range(m)]
    for l in range(m):
        for i in range(m):
            acc = zero
            for j in range(m):
                for k in range(m):
                    if T[l][i][j][k]:
                        acc = acc + T[l][i][j][k].relabel(n2, ident) * vs[j] * vs[k]
            J[l][i] = acc
    return J


def conformal_jacobi_family(g: MetricModel):
    W = rat_weyl_conformal(g)
    if W is None:
        return None
    return _family_from_tensor(W, g.m)


def projective_jacobi_family(c: ConnectionModel):
    P = rat_weyl_projective(c)
    if P is None:
        return None
    return _family_from_tensor(P, c.m)


# -- constructions -----------------------------------------------------------


def projective_change(c: ConnectionModel, theta: CovectorField) -> ConnectionModel:
    """Gamma^k_{ij} - theta_i delta^k_j - theta_j delta^k_i."""
    if theta.chart != c.chart:
        raise ValueError("covector chart mismatch")
    m = c.m
    gamma = [[[c.gamma[k][i][j] for j in range(m)] for i in range(m)] for k in range(m)]
    for k in range(m):
        for i in range(m):
            gamma[k][i][k] = gamma[k][i][k] - theta.components[i]
            gamma[k][k][i] = gamma[k][k][i] - theta.components[i]
    return ConnectionModel(c.chart, gamma, name=f"{c.name}#" if c.name else "projective-change")


def _concat_charts(c1: Chart, c2: Chart) -> Chart:
    names2 = []
    used = set(c1.names)
    for nm in c2.names:
        cand = nm
        idx = 2
        while cand in used:
            cand = f"{nm}_{idx}"
            idx += 1
        used.add(cand)
        names2.append(cand)
    return Chart(c1.names + tuple(names2))


def product_connection(c1: ConnectionModel, c2: ConnectionModel) -> ConnectionModel:
    """Block-diagonal product; each factor keeps its own coordinates."""
    m1, m2 = c1.m, c2.m
    m = m1 + m2
    chart = _concat_charts(c1.chart, c2.chart)
    shift = {i: m1 + i for i in range(m2)}
    gamma = [[[ex.ZERO] * m for _ in range(m)] for _ in range(m)]
    for k in range(m1):
        for i in range(m1):
            for j in range(m1):
                gamma[k][i][j] = c1.gamma[k][i][j]
    for k in range(m2):
        for i in range(m2):
            for j in range(m2):
                gamma[m1 + k][m1 + i][m1 + j] = ex.relabel_vars(c2.gamma[k][i][j], shift)
    name = f"{c1.name} x {c2.name}".strip()
    return ConnectionModel(chart, gamma, name=name)


def product_metric(g1: MetricModel, g2: MetricModel) -> MetricModel:
    m1, m2 = g1.m, g2.m
    m = m1 + m2
    chart = _concat_charts(g1.chart, g2.chart)
    shift = {i: m1 + i for i in range(m2)}
    entries = [[ex.ZERO] * m for _ in range(m)]
    for i in range(m1):
        for j in range(m1):
            entries[i][j] = g1.entries[i][j]
    for i in range(m2):
        for j in range(m2):
            entries[m1 + i][m1 + j] = ex.relabel_vars(g2.entries[i][j], shift)
    p1, q1 = g1.signature()
    p2, q2 = g2.signature()
    name = f"{g1.name} x {g2.name}".strip()
    return MetricModel(chart, entries, signature=(p1 + p2, q1 + q2), name=name)


# -- unit vectors -------------------------------------------------------------


def _exact_sqrt(q: Fraction) -> Fraction | None:
    import math

    if q < 0:
        return None
    rn = math.isqrt(q.numerator)
    rd = math.isqrt(q.denominator)
    if rn * rn == q.numerator and rd * rd == q.denominator:
        return Fraction(rn, rd)
    return None


def normalize_direction(g: MetricModel, pt, x):
    """Rescale x to |g(x,x)| = 1; exact when everything is rational and
    |g(x,x)| is a perfect rational square."""
    m = g.m
    coords = _coords(pt, m)
    x = list(x)
    if g.is_rational() and _all_exact(coords) and _all_exact(x):
        G = g.metric_at_exact(coords)
        q = sum(Fraction(x[i]) * G[i][j] * Fraction(x[j]) for i in range(m) for j in range(m))
        if q == 0:
            raise ValueError("null direction cannot be normalized")
        root = _exact_sqrt(abs(q))
        if root is not None:
            return [Fraction(t) / root for t in x]
    G = g.metric_at(coords)
    ax = np.array([float(t) for t in x])
    q = float(ax @ G @ ax)
    if abs(q) < 1e-14:
        raise ValueError("null direction cannot be normalized")
    return list(ax / np.sqrt(abs(q)))


def sample_unit_vectors(g: MetricModel, pt, sign: int, n: int, seed: int) -> list[np.ndarray]:
    """Deterministic unit-vector samples of the requested causal sign.

    Components are drawn uniformly from [-1, 1]^m, near-null draws
    (|g(x,x)| < 1e-6) are rejected, and survivors are rescaled to
    |g(x,x)| = 1.  Raises if the declared signature cannot realize the
    sign at all.
    """
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    p, q = g.signature()
    if sign == 1 and q == 0:
        raise ValueError(f"sign +1 not realizable for signature {(p, q)}")
    if sign == -1 and p == 0:
        raise ValueError(f"sign -1 not realizable for signature {(p, q)}")
    m = g.m
    G = g.metric_at(pt)
    rng = np.random.default_rng(seed)
    out = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 2000 * max(n, 1):
            raise RuntimeError("could not sample unit vectors of requested sign")
        x = rng.uniform(-1.0, 1.0, size=m)
        qq = float(x @ G @ x)
        if abs(qq) < 1e-6:
            continue
        if (qq > 0) != (sign == 1):
            continue
        out.append(x / np.sqrt(abs(qq)))
    return out
