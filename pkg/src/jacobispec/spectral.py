"""Characteristic polynomials, spectra, and scale comparison.

Conventions: for an m x m operator A the characteristic polynomial is
stored as det(A - t*I) = sum_nu kappa_nu * t^(m-nu), so kappa_0 = (-1)^m
and kappa_m = det(A).  Coefficients come from the Faddeev-LeVerrier
recursion, which runs unchanged over floats, exact rationals, and
symbolic rational functions.

Zero eigenvalues are decided at the coefficient level (trailing kappas
chopped against a scale), never by looking at root magnitudes: roots of
t^4 = 1e-15 are 1.8e-4, far above any sensible tolerance, while the
coefficients themselves are honest.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass
from fractions import Fraction
from math import comb, inf
from typing import Sequence

import numpy as np

# Double roots reaching us through a companion matrix carry ~sqrt(eps)
# error, so clustering radii never drop below this even for smaller tol.
CLUSTER_FLOOR = 5e-7

# Characteristic coefficients computed in floats carry roundoff of this
# order times the matrix entry scale raised to the coefficient index.
NOISE_EPS = 1e-13

MAX_SYMBOLIC_TERMS = 400_000


class SymbolicBudgetExceeded(Exception):
    """Symbolic computation grew past the term-count guardrail."""


def _matrix_of(op):
    return getattr(op, "matrix", op)


def _is_exact_matrix(mat) -> bool:
    return not isinstance(mat, np.ndarray)


@dataclass(frozen=True)
class CharPoly:
    """det(A - t I) coefficients kappa_0..kappa_m (kappa_0 = (-1)^m)."""

    m: int
    kappa: tuple
    exact: bool

    def __post_init__(self):
        assert len(self.kappa) == self.m + 1

    def monic_coeffs(self) -> list[complex]:
        """Coefficients of det(t I - A) = t^m + c_1 t^(m-1) + ... + c_m."""
        sign = (-1) ** self.m
        return [sign * complex(k) for k in self.kappa]

    def eval(self, t):
        acc = 0
        for nu, k in enumerate(self.kappa):
            acc += k * t ** (self.m - nu)
        return acc

    def scale(self) -> float:
        """Spectral-radius proxy max_nu |kappa_nu|^(1/nu)."""
        s = 0.0
        for nu in range(1, self.m + 1):
            v = abs(complex(self.kappa[nu]))
            if v > 0:
                s = max(s, v ** (1.0 / nu))
        return s

    def chopped(self, tol: float, ref: float = 1.0) -> "CharPoly":
        """Zero out coefficients indistinguishable from zero.

        A coefficient goes when it is below tol relative to the spectral
        scale, or below the float-roundoff floor set by the matrix entry
        scale ``ref``; kappa_nu aggregates nu-fold products, so both
        scales enter at the nu-th power.
        """
        if self.exact:
            return self
        s = self.scale()
        kappa = list(self.kappa)
        for nu in range(1, self.m + 1):
            limit = comb(self.m, nu) * max(tol * s**nu, NOISE_EPS * ref**nu)
            if abs(kappa[nu]) <= limit:
                kappa[nu] = 0.0
        return CharPoly(self.m, tuple(kappa), self.exact)


def _fl_exact(mat) -> list[Fraction]:
    m = len(mat)
    rows = [[Fraction(x) for x in row] for row in mat]
    M = [[Fraction(int(i == j)) for j in range(m)] for i in range(m)]
    coeffs = [Fraction(1)]
    for k in range(1, m + 1):
        AM = [
            [sum(rows[i][l] * M[l][j] for l in range(m)) for j in range(m)]
            for i in range(m)
        ]
        ck = -sum(AM[i][i] for i in range(m)) / k
        coeffs.append(ck)
        M = [[AM[i][j] + (ck if i == j else 0) for j in range(m)] for i in range(m)]
    return coeffs


def _fl_float(mat: np.ndarray) -> list[float]:
    A = np.asarray(mat, dtype=float)
    m = A.shape[0]
    M = np.eye(m)
    coeffs = [1.0]
    for k in range(1, m + 1):
        AM = A @ M
        ck = -np.trace(AM) / k
        coeffs.append(float(ck))
        M = AM + ck * np.eye(m)
    return coeffs


def fl_symbolic(mat, max_terms: int = MAX_SYMBOLIC_TERMS) -> list:
    """Faddeev-LeVerrier over ring elements (RatFunc/Poly), guarded by size."""
    m = len(mat)
    zero = mat[0][0] * 0
    one = zero + 1
    M = [[one if i == j else zero for j in range(m)] for i in range(m)]
    coeffs = [one]

    def _size(x):
        try:
            return x.size()
        except AttributeError:
            return len(x.terms)

    for k in range(1, m + 1):
        AM = [[zero] * m for _ in range(m)]
        for i in range(m):
            for j in range(m):
                acc = zero
                for l in range(m):
                    a = mat[i][l]
                    b = M[l][j]
                    if not a or not b:
                        continue
                    if _size(a) * _size(b) > 4 * max_terms:
                        raise SymbolicBudgetExceeded(f"entry product at step {k}")
                    acc = acc + a * b
                AM[i][j] = acc
        total = sum(_size(AM[i][j]) for i in range(m) for j in range(m))
        if total > max_terms:
            raise SymbolicBudgetExceeded(f"matrix size {total} at step {k}")
        tr = zero
        for i in range(m):
            tr = tr + AM[i][i]
        ck = tr * Fraction(-1, k)
        coeffs.append(ck)
        M = [[AM[i][j] + (ck if i == j else zero) for j in range(m)] for i in range(m)]
    return coeffs


def char_poly(op) -> CharPoly:
    """Characteristic polynomial of an operator (matrix or OperatorAtPoint)."""
    mat = _matrix_of(op)
    if _is_exact_matrix(mat):
        coeffs = _fl_exact(mat)
        m = len(coeffs) - 1
        sign = (-1) ** m
        return CharPoly(m, tuple(sign * c for c in coeffs), True)
    coeffs = _fl_float(mat)
    m = len(coeffs) - 1
    sign = (-1) ** m
    return CharPoly(m, tuple(sign * c for c in coeffs), False)


def kappa_from_symbolic(coeffs: Sequence) -> list:
    """Turn monic FL output over a ring into kappa_nu (paper ordering)."""
    m = len(coeffs) - 1
    sign = (-1) ** m
    return [c * sign for c in coeffs]


def trace_powers(op, upto: int) -> list:
    """Power traces tr(A^nu) for nu = 1..upto."""
    mat = _matrix_of(op)
    if _is_exact_matrix(mat):
        m = len(mat)
        rows = [[Fraction(x) for x in row] for row in mat]
        out = []
        P = rows
        for _ in range(upto):
            out.append(sum(P[i][i] for i in range(m)))
            P = [
                [sum(P[i][l] * rows[l][j] for l in range(m)) for j in range(m)]
                for i in range(m)
            ]
        # the loop above appends tr(A^1) first, then advances
        return out
    A = np.asarray(mat, dtype=float)
    out = []
    P = A
    for _ in range(upto):
        out.append(float(np.trace(P)))
        P = P @ A
    return out


@dataclass(frozen=True)
class SpectrumMultiset:
    """Eigenvalues with multiplicities, plus the defining coefficients."""

    entries: tuple  # ((complex eigenvalue, int multiplicity), ...)
    m: int
    kappa: tuple | None = None
    exact: bool = False

    @classmethod
    def from_pairs(cls, pairs, exact: bool = False) -> "SpectrumMultiset":
        entries = tuple(
            sorted(((complex(v), int(k)) for v, k in pairs), key=lambda e: (e[0].real, e[0].imag))
        )
        m = sum(k for _, k in entries)
        return cls(entries, m, None, exact)

    def __iter__(self):
        return iter(self.entries)

    def nonzero(self) -> list[tuple[complex, int]]:
        return [(v, k) for v, k in self.entries if v != 0]

    def zero_multiplicity(self) -> int:
        return sum(k for v, k in self.entries if v == 0)

    @property
    def all_zero(self) -> bool:
        return not self.nonzero()

    def values(self) -> list[complex]:
        out = []
        for v, k in self.entries:
            out.extend([v] * k)
        return out

    def scaled(self, c: complex) -> "SpectrumMultiset":
        return SpectrumMultiset.from_pairs([(v * c, k) for v, k in self.entries], self.exact)

    def canonical(self) -> "SpectrumMultiset":
        """Scale so the largest-modulus eigenvalue is 1 (smallest-argument
        tie-break); the all-zero spectrum is its own representative."""
        nz = self.nonzero()
        if not nz:
            return self
        top = max(abs(v) for v, _ in nz)
        ties = [v for v, _ in nz if abs(v) >= top * (1 - 1e-12)]
        pivot = min(ties, key=lambda v: cmath.phase(v) % (2 * cmath.pi))
        return self.scaled(1.0 / pivot)

    def reexpansion_residual(self) -> float:
        """Max relative coefficient error of prod (lambda - t)^mult vs kappa."""
        if self.kappa is None:
            return 0.0
        coeffs = [1.0 + 0j]
        for v, k in self.entries:
            for _ in range(k):
                coeffs = [0j] + coeffs
                coeffs = [coeffs[i] - v * (coeffs[i + 1] if i + 1 < len(coeffs) else 0) for i in range(len(coeffs))]
        # coeffs are for prod (t - lambda) monic; convert to kappa ordering
        sign = (-1) ** self.m
        worst = 0.0
        s = max(1.0, max(abs(v) for v, _ in self.entries) if self.entries else 1.0)
        for nu in range(self.m + 1):
            recon = sign * coeffs[self.m - nu]
            ref = complex(self.kappa[nu])
            worst = max(worst, abs(recon - ref) / (comb(self.m, nu) * s**nu))
        return worst

    def pretty(self) -> str:
        def fmt(v: complex) -> str:
            if abs(v.imag) < 1e-14:
                return f"{v.real:.10g}"
            return f"{v.real:.10g}{v.imag:+.10g}i"

        return "{" + ", ".join(f"{fmt(v)}: {k}" for v, k in self.entries) + "}"


def _floor_for(k: int) -> float:
    # a k-fold root recovered from coefficients splits by ~eps^(1/k); the
    # radius for gathering its fragments has to grow accordingly
    if k <= 2:
        return CLUSTER_FLOOR
    return 1e-12 ** (1.0 / k)


def _residual_limit(k: int) -> float:
    # the centroid of a split k-fold root reproduces the coefficients to
    # roughly the square of the split width; allow a safety factor
    return max(1e-7, 30.0 * _floor_for(k) ** 2)


def _expand_monic(entries: list[tuple[complex, int]]) -> np.ndarray:
    coeffs = np.array([1.0 + 0j])
    for val, mult in entries:
        for _ in range(mult):
            coeffs = np.convolve(coeffs, np.array([1.0 + 0j, -val]))
    return coeffs


def _expansion_residual(entries, monic, s: float) -> float:
    got = _expand_monic(entries)
    ref = np.asarray(monic, dtype=complex)
    deg = len(ref) - 1
    err = 0.0
    base = max(s, 1e-12)
    for idx in range(1, deg + 1):
        w = comb(deg, idx) * base**idx
        err = max(err, abs(got[idx] - ref[idx]) / w)
    return err


def _components(centers: list[complex], radius: float) -> list[list[int]]:
    """Connected components of the proximity graph (single linkage)."""
    n = len(centers)
    seen = [False] * n
    comps: list[list[int]] = []
    for start in range(n):
        if seen[start]:
            continue
        queue = [start]
        seen[start] = True
        comp: list[int] = []
        while queue:
            i = queue.pop()
            comp.append(i)
            for j in range(n):
                if not seen[j] and abs(centers[i] - centers[j]) <= radius:
                    seen[j] = True
                    queue.append(j)
        comps.append(sorted(comp))
    return comps


def _refine_roots(roots: list[complex], op_eigs: list[complex], scale: float) -> list[complex]:
    """Snap companion-matrix roots to direct operator eigenvalues.

    A repeated diagonalizable eigenvalue comes out of the operator matrix
    far more accurately than out of the characteristic coefficients, so
    each root adopts the nearest unclaimed operator eigenvalue.  Values
    farther than one percent of the spectral scale describe a different
    part of the spectrum (e.g. the smear of a deflated zero) and are
    left alone.
    """
    if not op_eigs:
        return roots
    limit = max(scale, 1e-12) * 1e-2
    pairs = sorted(
        ((abs(r - e), i, j) for i, r in enumerate(roots) for j, e in enumerate(op_eigs)),
        key=lambda t: t[0],
    )
    out = list(roots)
    used_r: set[int] = set()
    used_e: set[int] = set()
    for dist, i, j in pairs:
        if dist > limit:
            break
        if i in used_r or j in used_e:
            continue
        out[i] = op_eigs[j]
        used_r.add(i)
        used_e.add(j)
    return out


def _cluster(points: list[complex], scale: float, tol: float, monic) -> list[tuple[complex, int]]:
    """Multiplicity-aware clustering of approximate polynomial roots.

    Tiers run from high hypothesized multiplicity down to plain pairs:
    tier k gathers a proximity component within the eps^(1/k) radius only
    when it holds at least k points, since a k-fold root smears all k of
    its copies at once.  A component containing a sub-group that is tight
    at the pair radius is left alone at tiers above 2: the tight group
    already explains itself as a smaller multiple, and fragments of a
    genuine k-fold root land that close together with probability zero.
    Every merge must also keep the re-expanded polynomial close to the
    characteristic coefficients, which stay well-conditioned, so chaining
    genuinely distinct roots is rejected.  Deterministic: points are
    sorted and components scan in index order.
    """
    clusters = [(z, 1) for z in sorted(points, key=lambda w: (w.real, w.imag))]
    base = max(scale, 1e-12)
    pair_radius = base * max(tol, CLUSTER_FLOOR)
    for k in range(min(len(points), 12), 1, -1):
        radius = base * max(tol, _floor_for(k))
        while len(clusters) > 1:
            comps = _components([c for c, _ in clusters], radius)
            committed = False
            for comp in comps:
                size = sum(clusters[i][1] for i in comp)
                if len(comp) < 2 or size < k:
                    continue
                if k >= 3:
                    sub = _components([clusters[i][0] for i in comp], pair_radius)
                    if any(sum(clusters[comp[t]][1] for t in grp) >= 2 for grp in sub):
                        continue
                center = sum(clusters[i][0] * clusters[i][1] for i in comp) / size
                candidate = [(center, size)] + [
                    clusters[i] for i in range(len(clusters)) if i not in comp
                ]
                if monic is None or _expansion_residual(candidate, monic, scale) <= _residual_limit(size):
                    clusters = candidate
                    committed = True
                    break
            if not committed:
                break
    return clusters


def eigenvalues(op, tol: float = 1e-8) -> SpectrumMultiset:
    """Spectrum with multiplicities via companion-matrix roots.

    Trailing characteristic coefficients are chopped first, so nilpotent
    directions give exact zero eigenvalues instead of spurious 1e-4 roots.
    Clustering radii are relative to the spectral scale with floors that
    grow with the hypothesized multiplicity (a k-fold root splits by
    ~eps^(1/k) through the companion matrix); over-merging is caught by
    re-expanding the multiset against the characteristic coefficients.
    """
    cp = char_poly(op)
    mat = _matrix_of(op)
    if _is_exact_matrix(mat):
        fmat = np.array([[float(x) for x in row] for row in mat])
    else:
        fmat = np.asarray(mat, dtype=float)
    anorm = float(np.max(np.abs(fmat))) if fmat.size else 0.0
    anorm = max(anorm, float(getattr(op, "ref", 0.0)))
    floated = CharPoly(cp.m, tuple(float(k) for k in cp.kappa), False)
    work = floated.chopped(tol, anorm)
    m = work.m
    if cp.exact:
        # exact zero tests beat the chopper where they apply
        kappa = [float(k) if cp.kappa[nu] != 0 else 0.0 for nu, k in enumerate(work.kappa)]
        work = CharPoly(m, tuple(kappa), False)
    zeros = 0
    for nu in range(m, 0, -1):
        if work.kappa[nu] == 0.0:
            zeros += 1
        else:
            break
    entries: list[tuple[complex, int]] = []
    if zeros:
        entries.append((0j, zeros))
    deg = m - zeros
    if deg > 0:
        monic = work.monic_coeffs()[: deg + 1]
        roots = [complex(r) for r in np.roots(np.array(monic, dtype=complex))]
        s = max(abs(r) for r in roots) if roots else 0.0
        try:
            op_eigs = [complex(v) for v in np.linalg.eigvals(fmat)]
        except np.linalg.LinAlgError:
            op_eigs = []
        roots = _refine_roots(roots, op_eigs, s)
        entries.extend(_cluster(roots, s, tol, monic))
    entries.sort(key=lambda e: (e[0].real, e[0].imag))
    return SpectrumMultiset(tuple(entries), m, tuple(float(k) for k in work.kappa), cp.exact)


def is_nilpotent(op, tol: float = 1e-8) -> bool:
    """All characteristic coefficients kappa_1..kappa_m vanish."""
    cp = char_poly(op)
    if cp.exact:
        return all(k == 0 for k in cp.kappa[1:])
    mat = np.asarray(_matrix_of(op), dtype=float)
    anorm = float(np.max(np.abs(mat))) if mat.size else 0.0
    anorm = max(anorm, float(getattr(op, "ref", 0.0)))
    chopped = cp.chopped(tol, anorm)
    return all(k == 0.0 for k in chopped.kappa[1:])


@dataclass(frozen=True)
class ScaleMatch:
    """A successful spectra comparison: spec_a = c * spec_b (nonzero parts)."""

    c: complex
    residual: float
    nu: int  # coefficient index that supplied the scale candidates


def _esym(values: list[complex]) -> list[complex]:
    """e_0..e_k of the value list, by incremental expansion."""
    e = [1.0 + 0j]
    for v in values:
        nxt = [1.0 + 0j]
        for i in range(1, len(e) + 1):
            prev = e[i] if i < len(e) else 0j
            nxt.append(prev + v * e[i - 1])
        e = nxt
    return e


def projective_compare(a: SpectrumMultiset, b: SpectrumMultiset, tol: float = 1e-8) -> ScaleMatch | None:
    """Find c with nonzero(a) = c * nonzero(b) as multisets, or None.

    Scale recovery: smallest nu with e_nu(b) away from zero gives nu
    candidate roots for c; each candidate is verified against every
    coefficient relation e_nu(a) = c^nu e_nu(b) and finally against the
    eigenvalue multisets themselves.  Both spectra all-zero compares
    equal with c = 1.
    """
    nza = a.nonzero()
    nzb = b.nonzero()
    if not nza and not nzb:
        return ScaleMatch(1.0 + 0j, 0.0, 0)
    if not nza or not nzb:
        return None
    ka = sum(k for _, k in nza)
    kb = sum(k for _, k in nzb)
    if ka != kb:
        return None
    va = []
    for v, k in nza:
        va.extend([v] * k)
    vb = []
    for v, k in nzb:
        vb.extend([v] * k)
    ea = _esym(va)
    eb = _esym(vb)
    sa = max(abs(v) for v in va)
    sb = max(abs(v) for v in vb)
    k = ka
    pick = 0
    for nu in range(1, k + 1):
        if abs(eb[nu]) > tol * comb(k, nu) * sb**nu:
            pick = nu
            break
    if pick == 0:
        return None  # b's nonzero part is numerically indistinguishable from zero
    if abs(ea[pick]) <= tol * comb(k, pick) * sa**pick:
        return None
    ratio = ea[pick] / eb[pick]
    r, theta = cmath.polar(ratio)
    candidates = [
        cmath.rect(r ** (1.0 / pick), (theta + 2 * cmath.pi * j) / pick)
        for j in range(pick)
    ]
    candidates.sort(key=lambda z: cmath.phase(z) % (2 * cmath.pi))
    slack = 8 * k
    for c in candidates:
        sc = max(sa, abs(c) * sb, 1e-300)
        worst = 0.0
        ok = True
        for nu in range(1, k + 1):
            denom = comb(k, nu) * sc**nu
            err = abs(ea[nu] - eb[nu] * c**nu) / denom
            worst = max(worst, err)
            if err > slack * tol:
                ok = False
                break
        if not ok:
            continue
        if _multisets_match(va, [v * c for v in vb], max(tol, CLUSTER_FLOOR) * max(sa, 1e-300)):
            return ScaleMatch(c, worst, pick)
    return None


def spectra_equal(a: SpectrumMultiset, b: SpectrumMultiset, tol: float = 1e-8) -> bool:
    """Multiset equality of two spectra, zero entries included."""
    if a.m != b.m:
        return False
    va = []
    for v, k in a.entries:
        va.extend([complex(v)] * k)
    vb = []
    for v, k in b.entries:
        vb.extend([complex(v)] * k)
    scale = max([abs(v) for v in va + vb], default=0.0)
    radius = max(tol, CLUSTER_FLOOR) * max(scale, 1e-300)
    return _multisets_match(va, vb, radius)


def _multisets_match(xs: list[complex], ys: list[complex], radius: float) -> bool:
    if len(xs) != len(ys):
        return False
    remaining = list(ys)
    for x in sorted(xs, key=lambda z: (z.real, z.imag)):
        best = None
        best_d = inf
        for i, y in enumerate(remaining):
            d = abs(x - y)
            if d < best_d:
                best, best_d = i, d
        if best is None or best_d > radius:
            return False
        remaining.pop(best)
    return True
