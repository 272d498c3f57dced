"""Exact multivariate polynomials and rational functions over the rationals.

This is the engine behind every symbolic computation in the package:
Christoffel symbols, curvature entries, characteristic-polynomial
coefficients and the identity checks built on them.  It is deliberately
small: sparse dict-of-monomials polynomials, a rational-function wrapper,
and just enough normalization (content, monomial factors, exact division)
to keep Walker-type pipelines from growing denominators.

Monomials are packed into a single integer key, 16 bits per variable, so
that monomial multiplication is one integer addition.  Exponents above
65535 would corrupt neighbouring fields; degrees in this package stay in
the low hundreds.
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd
from typing import Iterable, Sequence

try:  # pragma: no cover - exercised implicitly by every test
    from gmpy2 import mpq as QQ
except ImportError:  # pragma: no cover
    QQ = Fraction

SHIFT = 16
MASK = (1 << SHIFT) - 1

_QZERO = QQ(0)
_QONE = QQ(1)


def _as_coeff(value) -> "QQ":
    if isinstance(value, (int, Fraction)):
        return QQ(value)
    return value  # already QQ


def pack(exponents: Sequence[int]) -> int:
    key = 0
    for i, e in enumerate(exponents):
        key |= e << (SHIFT * i)
    return key


def unpack(key: int, n: int) -> tuple[int, ...]:
    return tuple((key >> (SHIFT * i)) & MASK for i in range(n))


class Poly:
    """Sparse multivariate polynomial with exact rational coefficients."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: dict[int, "QQ"] | None = None):
        self.n = n
        self.terms = terms if terms is not None else {}

    # -- constructors ------------------------------------------------

    @classmethod
    def zero(cls, n: int) -> "Poly":
        return cls(n, {})

    @classmethod
    def const(cls, n: int, value) -> "Poly":
        c = _as_coeff(value)
        return cls(n, {0: c} if c else {})

    @classmethod
    def var(cls, n: int, index: int) -> "Poly":
        if not 0 <= index < n:
            raise IndexError(f"variable {index} out of range for {n} variables")
        return cls(n, {1 << (SHIFT * index): _QONE})

    @classmethod
    def from_terms(cls, n: int, items: Iterable[tuple[Sequence[int], object]]) -> "Poly":
        terms: dict[int, QQ] = {}
        for exps, c in items:
            c = _as_coeff(c)
            if not c:
                continue
            k = pack(exps)
            acc = terms.get(k)
            if acc is None:
                terms[k] = c
            else:
                acc = acc + c
                if acc:
                    terms[k] = acc
                else:
                    del terms[k]
        return cls(n, terms)

    # -- predicates --------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_constant(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and 0 in self.terms)

    def const_value(self) -> Fraction:
        """Value of a constant polynomial as a Fraction."""
        if not self.terms:
            return Fraction(0)
        if len(self.terms) == 1 and 0 in self.terms:
            c = self.terms[0]
            return Fraction(int(c.numerator), int(c.denominator))
        raise ValueError("polynomial is not constant")

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def equals(self, other: "Poly") -> bool:
        return self.n == other.n and self.terms == other.terms

    # -- ring operations ---------------------------------------------

    def _coerce(self, other) -> "Poly | None":
        if isinstance(other, Poly):
            if other.n != self.n:
                raise ValueError("mixed variable counts")
            return other
        if isinstance(other, (int, Fraction)) or type(other) is type(_QONE):
            return Poly.const(self.n, other)
        return None

    def __add__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        big, small = (self.terms, other.terms) if len(self.terms) >= len(other.terms) else (other.terms, self.terms)
        out = dict(big)
        for k, c in small.items():
            acc = out.get(k)
            if acc is None:
                out[k] = c
            else:
                acc = acc + c
                if acc:
                    out[k] = acc
                else:
                    del out[k]
        return Poly(self.n, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.n, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        out = dict(self.terms)
        for k, c in other.terms.items():
            acc = out.get(k)
            if acc is None:
                out[k] = -c
            else:
                acc = acc - c
                if acc:
                    out[k] = acc
                else:
                    del out[k]
        return Poly(self.n, out)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)) or type(other) is type(_QONE):
            c = _as_coeff(other)
            if not c:
                return Poly(self.n, {})
            return Poly(self.n, {k: v * c for k, v in self.terms.items()})
        if not isinstance(other, Poly):
            return NotImplemented
        if other.n != self.n:
            raise ValueError("mixed variable counts")
        a, b = self.terms, other.terms
        if not a or not b:
            return Poly(self.n, {})
        if len(a) < len(b):
            a, b = b, a
        out: dict[int, QQ] = {}
        get = out.get
        for kb, cb in b.items():
            for ka, ca in a.items():
                k = ka + kb
                c = ca * cb
                acc = get(k)
                if acc is None:
                    out[k] = c
                else:
                    acc = acc + c
                    if acc:
                        out[k] = acc
                    else:
                        del out[k]
        return Poly(self.n, out)

    __rmul__ = __mul__

    def __pow__(self, exponent: int):
        if exponent < 0:
            raise ValueError("negative power of a polynomial")
        result = Poly.const(self.n, 1)
        base = self
        e = exponent
        while e:
            if e & 1:
                result = result * base
            e >>= 1
            if e:
                base = base * base
        return result

    # -- calculus ----------------------------------------------------

    def diff(self, index: int) -> "Poly":
        shift = SHIFT * index
        out: dict[int, QQ] = {}
        for k, c in self.terms.items():
            e = (k >> shift) & MASK
            if e:
                out[k - (1 << shift)] = c * e
        return Poly(self.n, out)

    def eval(self, values: Sequence) -> object:
        """Evaluate at a point; exact for Fraction/int inputs."""
        total = None
        for k, c in self.terms.items():
            v = Fraction(int(c.numerator), int(c.denominator))
            for i in range(self.n):
                e = (k >> (SHIFT * i)) & MASK
                if e:
                    v = v * values[i] ** e
            total = v if total is None else total + v
        return 0 if total is None else total

    # -- structure ---------------------------------------------------

    def total_degree(self) -> int:
        best = 0
        for k in self.terms:
            d = 0
            while k:
                d += k & MASK
                k >>= SHIFT
            if d > best:
                best = d
        return best

    def degree_in(self, index: int) -> int:
        shift = SHIFT * index
        return max(((k >> shift) & MASK for k in self.terms), default=0)

    def relabel(self, new_n: int, mapping: Sequence[int]) -> "Poly":
        """Move variable i of self to position mapping[i] in a new ring."""
        out: dict[int, QQ] = {}
        for k, c in self.terms.items():
            nk = 0
            rem = k
            i = 0
            while rem:
                e = rem & MASK
                if e:
                    nk |= e << (SHIFT * mapping[i])
                rem >>= SHIFT
                i += 1
            out[nk] = c
        return Poly(new_n, out)

    def max_coeff_height(self) -> int:
        h = 0
        for c in self.terms.values():
            h = max(h, abs(int(c.numerator)), int(c.denominator))
        return h

    # -- normalization helpers ----------------------------------------

    def monomial_gcd_key(self) -> int:
        """Packed key of the largest monomial dividing every term."""
        if not self.terms:
            return 0
        mins = [MASK] * self.n
        for k in self.terms:
            for i in range(self.n):
                e = (k >> (SHIFT * i)) & MASK
                if e < mins[i]:
                    mins[i] = e
            if not any(mins):
                return 0
        return pack(mins)

    def shift_down(self, key: int) -> "Poly":
        """Divide by the monomial with packed key ``key`` (must divide)."""
        if key == 0:
            return self
        return Poly(self.n, {k - key: c for k, c in self.terms.items()})

    def content(self) -> Fraction:
        """Positive rational c with (1/c)*self integral and primitive."""
        if not self.terms:
            return Fraction(1)
        num_gcd = 0
        den_lcm = 1
        for c in self.terms.values():
            num_gcd = gcd(num_gcd, int(c.numerator))
            d = int(c.denominator)
            den_lcm = den_lcm // gcd(den_lcm, d) * d
        return Fraction(num_gcd if num_gcd else 1, den_lcm)

    def leading(self) -> tuple[int, "QQ"]:
        """Leading term under the packed-key order (a valid monomial order)."""
        k = max(self.terms)
        return k, self.terms[k]


def exact_div(a: Poly, b: Poly) -> Poly | None:
    """Return a/b when b divides a exactly, else None."""
    if b.is_zero:
        raise ZeroDivisionError("polynomial division by zero")
    if a.is_zero:
        return Poly.zero(a.n)
    if b.is_constant:
        inv = 1 / b.terms[0]
        return Poly(a.n, {k: c * inv for k, c in a.terms.items()})
    kb, cb = b.leading()
    eb = unpack(kb, b.n)
    rem = Poly(a.n, dict(a.terms))
    qterms: dict[int, QQ] = {}
    # Single-divisor multivariate division; remainder must stay empty.
    while rem.terms:
        kr = max(rem.terms)
        er = unpack(kr, a.n)
        if any(er[i] < eb[i] for i in range(a.n)):
            return None
        qk = kr - kb
        qc = rem.terms[kr] / cb
        qterms[qk] = qc
        rem = rem - Poly(a.n, {qk: qc}) * b
    return Poly(a.n, qterms)


def _subst_int(p: Poly, index: int, xi: int) -> Poly:
    """Evaluate one variable at an integer, keeping the ring shape."""
    shift = SHIFT * index
    clear = ~(MASK << shift)
    out: dict[int, QQ] = {}
    for k, c in p.terms.items():
        e = (k >> shift) & MASK
        nk = k & clear
        val = c * xi**e if e else c
        acc = out.get(nk)
        if acc is None:
            out[nk] = val
        else:
            acc = acc + val
            if acc:
                out[nk] = acc
            else:
                del out[nk]
    return Poly(p.n, out)


def _smod_digit(p: Poly, xi: int) -> Poly:
    """Coefficientwise symmetric remainder mod xi (integer coefficients)."""
    half = xi // 2
    out: dict[int, QQ] = {}
    for k, c in p.terms.items():
        r = int(c) % xi
        if r > half:
            r -= xi
        if r:
            out[k] = QQ(r)
    return Poly(p.n, out)


def _primitive(p: Poly) -> Poly:
    if p.is_zero:
        return p
    c = p.content()
    _, lead = p.leading()
    if lead < 0:
        c = -c
    if c != 1:
        inv = QQ(1) / QQ(c)
        return Poly(p.n, {k: v * inv for k, v in p.terms.items()})
    return p


def _icont(p: Poly) -> int:
    """Integer content of an integer-coefficient polynomial."""
    g = 0
    for c in p.terms.values():
        g = gcd(g, abs(int(c)))
        if g == 1:
            return 1
    return g if g else 1


def _iscale(p: Poly, c: int) -> Poly:
    if c == 1:
        return p
    inv = QQ(1, c)
    return Poly(p.n, {k: v * inv for k, v in p.terms.items()})


def _gcd_heuristic(a: Poly, b: Poly) -> Poly | None:
    """Evaluation-reconstruction gcd of integer-coefficient polynomials.

    One shared variable is evaluated at a large integer, the gcd of the
    images is taken recursively, and the variable is restored through
    balanced base-xi digit expansion.  Integer content travels with the
    result at every level; candidates are verified by exact division,
    so the heuristic can give up but never answer wrongly.
    """
    ca, cb = _icont(a), _icont(b)
    cont = gcd(ca, cb)
    a = _iscale(a, ca)
    b = _iscale(b, cb)
    shared = [i for i in range(a.n) if a.degree_in(i) and b.degree_in(i)]
    if not shared:
        # primitive parts with no shared variable are coprime
        return Poly.const(a.n, cont)
    var = min(shared, key=lambda i: a.degree_in(i) + b.degree_in(i))
    limit = min(a.degree_in(var), b.degree_in(var))
    shift = SHIFT * var
    xi = 2 * min(a.max_coeff_height(), b.max_coeff_height()) + 29
    for _ in range(6):
        if xi.bit_length() > 120_000:
            return None
        ia = _subst_int(a, var, xi)
        ib = _subst_int(b, var, xi)
        if not (ia.is_zero or ib.is_zero):
            gamma = _gcd_heuristic(ia, ib)
            if gamma is not None:
                g = Poly.zero(a.n)
                cur = gamma
                e = 0
                while cur.terms and e <= limit:
                    digit = _smod_digit(cur, xi)
                    if digit.terms:
                        g = g + Poly(a.n, {k | (e << shift): c for k, c in digit.terms.items()})
                    nxt: dict[int, QQ] = {}
                    for k, c in cur.terms.items():
                        d = digit.terms.get(k, _QZERO)
                        q = (int(c) - int(d)) // xi
                        if q:
                            nxt[k] = QQ(q)
                    cur = Poly(a.n, nxt)
                    e += 1
                if not cur.terms and g.terms:
                    g = _iscale(g, _icont(g))
                    if exact_div(a, g) is not None and exact_div(b, g) is not None:
                        return g * cont if cont != 1 else g
        xi = (xi * 2731) // 1000 + 29
    return None


def poly_gcd(a: Poly, b: Poly) -> Poly | None:
    """Primitive gcd of two nonzero polynomials, or None if undecided.

    Heuristic but never wrong: every candidate is verified by exact
    division before being returned.
    """
    if a.is_zero or b.is_zero or a.n != b.n:
        return None
    g = _gcd_heuristic(_primitive(a), _primitive(b))
    if g is None or g.is_constant:
        return g
    return _primitive(g)


class RatFunc:
    """Quotient of two Polys, normalized enough for canonical zero tests.

    Normalization: zero numerator forces denominator 1; constant
    denominators fold into the numerator; common monomial and rational
    content cancels; exact polynomial division is attempted once, and
    past a small size threshold a verified heuristic gcd cancels shared
    factors.  Equality still goes through cross-multiplication, which
    tolerates unreduced representatives.
    """

    __slots__ = ("num", "den")

    def __init__(self, num: Poly, den: Poly | None = None, _normalized: bool = False):
        if den is None:
            den = Poly.const(num.n, 1)
        if _normalized:
            self.num = num
            self.den = den
            return
        if den.is_zero:
            raise ZeroDivisionError("zero denominator")
        if num.is_zero:
            self.num = num
            self.den = Poly.const(num.n, 1)
            return
        if den.is_constant:
            inv = 1 / den.terms[0]
            self.num = num * inv if inv != 1 else num
            self.den = Poly.const(num.n, 1)
            return
        mk = num.monomial_gcd_key()
        if mk:
            dk = den.monomial_gcd_key()
            common = pack(tuple(min(a, b) for a, b in zip(unpack(mk, num.n), unpack(dk, num.n))))
            if common:
                num = num.shift_down(common)
                den = den.shift_down(common)
                if den.is_constant:
                    inv = 1 / den.terms[0]
                    self.num = num * inv
                    self.den = Poly.const(num.n, 1)
                    return
        q = exact_div(num, den)
        if q is not None:
            self.num = q
            self.den = Poly.const(num.n, 1)
            return
        if len(num.terms) + len(den.terms) > 16:
            g = poly_gcd(num, den)
            if g is not None and not g.is_constant:
                num = exact_div(num, g)
                den = exact_div(den, g)
                if den.is_constant:
                    inv = 1 / den.terms[0]
                    self.num = num * inv
                    self.den = Poly.const(num.n, 1)
                    return
        c = den.content()
        _, lc = den.leading()
        if lc < 0:
            c = -c
        if c != 1:
            inv = QQ(1) / QQ(c)
            num = num * inv
            den = den * inv
        self.num = num
        self.den = den

    # -- constructors ------------------------------------------------

    @classmethod
    def const(cls, n: int, value) -> "RatFunc":
        return cls(Poly.const(n, value))

    @classmethod
    def var(cls, n: int, index: int) -> "RatFunc":
        return cls(Poly.var(n, index))

    # -- predicates --------------------------------------------------

    @property
    def n(self) -> int:
        return self.num.n

    @property
    def is_zero(self) -> bool:
        return self.num.is_zero

    @property
    def is_poly(self) -> bool:
        return self.den.is_constant

    def __bool__(self) -> bool:
        return not self.num.is_zero

    def equals(self, other: "RatFunc") -> bool:
        return (self.num * other.den - other.num * self.den).is_zero

    def size(self) -> int:
        return len(self.num.terms) + len(self.den.terms)

    # -- arithmetic ---------------------------------------------------

    def _coerce(self, other) -> "RatFunc | None":
        if isinstance(other, RatFunc):
            return other
        if isinstance(other, (int, Fraction)) or type(other) is type(_QONE):
            return RatFunc.const(self.n, other)
        if isinstance(other, Poly):
            return RatFunc(other)
        return None

    def _combine(self, other, sign: int) -> "RatFunc":
        # denominators are often powers of one base polynomial; when one
        # divides the other, keep the larger instead of multiplying them
        if self.den.terms == other.den.terms:
            return RatFunc(self.num + other.num if sign > 0 else self.num - other.num, self.den)
        if not self.den.is_constant and not other.den.is_constant:
            q = exact_div(self.den, other.den)
            if q is not None:
                rhs = other.num * q
                return RatFunc(self.num + rhs if sign > 0 else self.num - rhs, self.den)
            q = exact_div(other.den, self.den)
            if q is not None:
                lhs = self.num * q
                return RatFunc(lhs + other.num if sign > 0 else lhs - other.num, other.den)
        top = self.num * other.den
        rhs = other.num * self.den
        return RatFunc(top + rhs if sign > 0 else top - rhs, self.den * other.den)

    def __add__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self._combine(other, 1)

    __radd__ = __add__

    def __neg__(self):
        return RatFunc(-self.num, self.den, _normalized=True)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self._combine(other, -1)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)) or type(other) is type(_QONE):
            c = _as_coeff(other)
            if not c:
                return RatFunc.const(self.n, 0)
            return RatFunc(self.num * c, self.den, _normalized=True)
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        # cross-cancellation keeps products of reduced fractions reduced
        na, da = self.num, other.den
        nb, db = other.num, self.den
        if not da.is_constant:
            q = exact_div(na, da)
            if q is not None:
                na, da = q, Poly.const(self.n, 1)
        if not db.is_constant:
            q = exact_div(nb, db)
            if q is not None:
                nb, db = q, Poly.const(self.n, 1)
        return RatFunc(na * nb, da * db)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        if other.num.is_zero:
            raise ZeroDivisionError("division by zero rational function")
        return self * RatFunc(other.den, other.num)

    def __rtruediv__(self, other):
        other = self._coerce(other)
        return other / self

    def __pow__(self, exponent: int):
        if exponent < 0:
            return RatFunc(self.den ** (-exponent), self.num ** (-exponent))
        return RatFunc(self.num**exponent, self.den**exponent)

    # -- calculus ----------------------------------------------------

    def diff(self, index: int) -> "RatFunc":
        if self.den.is_constant:
            return RatFunc(self.num.diff(index), self.den, _normalized=True)
        u, v = self.num, self.den
        top = u.diff(index) * v - u * v.diff(index)
        q = exact_div(top, v)
        if q is not None:
            return RatFunc(q, v)
        return RatFunc(top, v * v)

    def eval(self, values: Sequence) -> object:
        den = self.den.eval(values)
        if den == 0:
            raise ZeroDivisionError("pole of rational function")
        return self.num.eval(values) / den

    def relabel(self, new_n: int, mapping: Sequence[int]) -> "RatFunc":
        return RatFunc(self.num.relabel(new_n, mapping), self.den.relabel(new_n, mapping), _normalized=True)
