"""Deciders for spectral-rigidity properties of Jacobi-type operators.

Each classifier asks whether the eigenvalue multiset of an operator
family is independent of the direction (and, for global variants, of
the base point), either exactly or up to a direction-dependent scale.
Rational models get an exact polynomial-identity proof first; when a
model is transcendental, or the identity work exceeds the symbolic
budget, the decision falls back to seeded numeric sampling.  Sampled
verdicts are evidence, never proof, and record the budget they used.

The Walker helpers at the bottom analyse four-dimensional metrics of
the form built by ``catalog.walker``: duality type, Einstein property
and the structural normal forms whose Jacobi spectra admit closed
expressions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd

import numpy as np

from . import catalog
from . import expr as ex
from . import geom
from . import spectral
from .expr import Chart, Expression
from .geom import ConnectionModel, DegenerateMetricError, MetricModel
from .polyring import RatFunc
from .spectral import SpectrumMultiset, SymbolicBudgetExceeded

HOLDS_SYMBOLIC = "holds-symbolic"
HOLDS_SAMPLED = "holds-sampled"
FAILS = "fails"
INAPPLICABLE = "inapplicable"

STATUSES = (HOLDS_SYMBOLIC, HOLDS_SAMPLED, FAILS, INAPPLICABLE)

SYMBOLIC_MODES = ("auto", "on", "off")


def _check_symbolic_mode(mode: str) -> None:
    if mode not in SYMBOLIC_MODES:
        raise ValueError(f"symbolic must be one of {SYMBOLIC_MODES}, got {mode!r}")


def _require_symbolic(mode: str, prop: str, detail: str) -> None:
    # symbolic="on" promises an exact decision; failing that is an error,
    # not a silent fallback to sampling
    if mode == "on":
        raise RuntimeError(f"{prop}: symbolic decision unavailable ({detail})")


@dataclass(frozen=True)
class SampleBudget:
    """Knobs for the numeric fallback; defaults keep runs deterministic."""

    points: int = 5
    directions: int = 50
    seed: int = 42
    tol: float = 1e-8
    box: tuple[float, float] = (-2.0, 2.0)

    def __post_init__(self):
        if self.points < 1:
            raise ValueError("need at least one sample point")
        if self.directions < 1:
            raise ValueError("need at least one sample direction")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if not self.box[0] < self.box[1]:
            raise ValueError("sample box must have positive width")


@dataclass(frozen=True)
class Verdict:
    """Outcome of one property check.

    status is one of the module constants; fails always carries a
    witness and holds-sampled always carries the budget that produced
    it.  spectra holds representative (point, spectrum) pairs so a
    caller can show what the operator family actually looks like.
    """

    prop: str
    status: str
    witness: dict | None = None
    spectra: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    budget: SampleBudget | None = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == FAILS and not self.witness:
            raise ValueError("a failing verdict needs a witness")
        if self.status == HOLDS_SAMPLED and self.budget is None:
            raise ValueError("a sampled verdict must record its budget")

    @property
    def holds(self) -> bool:
        return self.status in (HOLDS_SYMBOLIC, HOLDS_SAMPLED)


# -- sampling machinery -------------------------------------------------------

_RESAMPLE_ERRORS = (ZeroDivisionError, DegenerateMetricError, OverflowError, RuntimeError)


def _pick_points(m: int, b: SampleBudget, rng, probe):
    """Draw pole-free points from the box; probe must raise on bad ones."""
    pts = []
    skipped = 0
    attempts = 0
    while len(pts) < b.points:
        attempts += 1
        if attempts > 200 * b.points:
            raise RuntimeError("could not sample enough pole-free points")
        pt = rng.uniform(b.box[0], b.box[1], size=m)
        try:
            probe(pt)
        except _RESAMPLE_ERRORS:
            skipped += 1
            continue
        pts.append(pt)
    return pts, skipped


def _euclid_dirs(m: int, n: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        v = rng.normal(size=m)
        r = float(np.linalg.norm(v))
        if r < 1e-6:
            continue
        out.append(v / r)
    return out


def _point_key(pt) -> tuple[float, ...]:
    return tuple(float(t) for t in pt)


def _spec_str(sp: SpectrumMultiset) -> str:
    return sp.pretty()


def _scan_sampled(prop, b, m, probe, groups_at, op_at, scale_mode, cross, extras):
    """Shared sampling loop.

    groups_at(pt, seed) yields (tag, directions) groups; spectra are
    compared inside each group against a per-group reference and, when
    cross is set, group representatives are compared across points.
    scale_mode compares up to a scalar factor (all-zero spectra are
    then consistent with anything); otherwise equality is required.
    """
    rng = np.random.default_rng(b.seed)
    pts, skipped = _pick_points(m, b, rng, probe)
    if skipped:
        extras["resampled_points"] = skipped

    def matches(sp, ref):
        if scale_mode:
            return spectral.projective_compare(sp, ref, b.tol) is not None
        return spectral.spectra_equal(sp, ref, b.tol)

    reps = []
    table = []
    for pt in pts:
        dir_seed = int(rng.integers(1 << 31))
        for tag, dirs in groups_at(pt, dir_seed):
            ref = None
            first = None
            for x in dirs:
                sp = spectral.eigenvalues(op_at(pt, x, tag), b.tol)
                if first is None:
                    first = (x, sp)
                if ref is None:
                    if scale_mode and not sp.nonzero():
                        continue  # zero spectrum matches any reference scale
                    ref = (x, sp)
                    continue
                if not matches(sp, ref[1]):
                    witness = {
                        "point": _point_key(pt),
                        "direction": tuple(float(t) for t in x),
                        "spectrum": _spec_str(sp),
                        "reference_direction": tuple(float(t) for t in ref[0]),
                        "reference_spectrum": _spec_str(ref[1]),
                    }
                    if tag is not None:
                        witness["group"] = tag
                    table.append((_point_key(pt), sp))
                    return Verdict(prop, FAILS, witness=witness, spectra=table,
                                   extras=extras, budget=b)
            rep = ref or first
            if rep is not None:
                reps.append((pt, tag, rep[1]))
                table.append((_point_key(pt), rep[1]))
    if cross and reps:
        base = None
        for pt, tag, sp in reps:
            if scale_mode and not sp.nonzero():
                continue  # zero spectrum matches any reference scale
            if base is None:
                base = (pt, sp)
                continue
            if not matches(sp, base[1]):
                witness = {
                    "point": _point_key(pt),
                    "spectrum": _spec_str(sp),
                    "reference_point": _point_key(base[0]),
                    "reference_spectrum": _spec_str(base[1]),
                }
                return Verdict(prop, FAILS, witness=witness, spectra=table,
                               extras=extras, budget=b)
    return Verdict(prop, HOLDS_SAMPLED, spectra=table, extras=extras, budget=b)


def _representatives(b, m, probe, groups_at, op_at):
    """A small (point, spectrum) table to attach to symbolic verdicts."""
    try:
        rng = np.random.default_rng(b.seed)
        pts, _ = _pick_points(m, b, rng, probe)
        out = []
        for pt in pts:
            dir_seed = int(rng.integers(1 << 31))
            for tag, dirs in groups_at(pt, dir_seed):
                if dirs:
                    sp = spectral.eigenvalues(op_at(pt, dirs[0], tag), b.tol)
                    out.append((_point_key(pt), sp))
        return out
    except (SymbolicBudgetExceeded, *_RESAMPLE_ERRORS):
        return []


# -- symbolic machinery -------------------------------------------------------


def _jacobi_op(model, pt, x):
    if isinstance(model, ConnectionModel):
        return geom.jacobi(model, pt, x)
    return model.jacobi(pt, x)


def _family_of(model):
    fam = getattr(model, "jacobi_family", None)
    return fam() if fam is not None else None


def _symbolic_kappas(J):
    """kappa_1..kappa_m of an exact operator family, or raise on budget."""
    coeffs = spectral.fl_symbolic(J)
    return spectral.kappa_from_symbolic(coeffs)[1:]


def _pow_guarded(r: RatFunc, e: int) -> RatFunc:
    if e > 1:
        size = r.size()
        if size > 4 and size**e > 4 * spectral.MAX_SYMBOLIC_TERMS:
            raise SymbolicBudgetExceeded(f"size-{size} factor raised to {e}")
    return r**e


def _mul_guarded(a: RatFunc, b: RatFunc) -> RatFunc:
    if a.size() * b.size() > 8 * spectral.MAX_SYMBOLIC_TERMS:
        raise SymbolicBudgetExceeded("identity product too large")
    return a * b


def _copy_maps(m: int, two_points: bool):
    """Relabel maps embedding two (x, v) copies into one variable space.

    With two_points the copies get independent base points (x, y, v, w
    blocks); otherwise they share the x block.
    """
    if two_points:
        n = 4 * m
        map_a = list(range(m)) + list(range(2 * m, 3 * m))
        map_b = list(range(m, 2 * m)) + list(range(3 * m, 4 * m))
    else:
        n = 3 * m
        map_a = list(range(2 * m))
        map_b = list(range(m)) + list(range(2 * m, 3 * m))
    return n, map_a, map_b


def _scale_identities(kappas, m: int, two_points: bool) -> bool:
    """Exact test that all spectra in the family agree up to a scale.

    For directions v, w the multisets match up to some factor exactly
    when kappa_nu(v)^(mu/g) kappa_mu(w)^(nu/g) is symmetric in v, w for
    every pair of indices with nonzero coefficient, g = gcd(nu, mu).
    Reduced exponents matter: they keep the test sensitive to the sign
    of the scale factor.  A single active index never obstructs.
    """
    active = [(nu, k) for nu, k in enumerate(kappas, start=1) if not k.is_zero]
    if len(active) <= 1:
        return True
    n, map_a, map_b = _copy_maps(m, two_points)
    rel = [(nu, k.relabel(n, map_a), k.relabel(n, map_b)) for nu, k in active]
    for i in range(len(rel)):
        for j in range(i + 1, len(rel)):
            nu, ka_a, ka_b = rel[i]
            mu, kb_a, kb_b = rel[j]
            g = gcd(nu, mu)
            ea, eb = mu // g, nu // g
            lhs = _mul_guarded(_pow_guarded(ka_a, ea), _pow_guarded(kb_b, eb))
            rhs = _mul_guarded(_pow_guarded(kb_a, eb), _pow_guarded(ka_b, ea))
            if not (lhs - rhs).is_zero:
                return False
    return True


def _metric_quadratic_family(g: MetricModel):
    """g(v, v) as an exact function of (chart coords, v), or None."""
    rat = g.rat_entries()
    if rat is None:
        return None
    m = g.m
    n2 = 2 * m
    ident = list(range(m))
    vs = [RatFunc.var(n2, m + i) for i in range(m)]
    acc = RatFunc.const(n2, 0)
    for i in range(m):
        for j in range(m):
            if rat[i][j]:
                acc = acc + rat[i][j].relabel(n2, ident) * vs[i] * vs[j]
    return acc


def _norm_identities(kappas, gq, m: int, two_points: bool) -> bool:
    """Exact test that spectra are constant across unit directions.

    kappa_nu is 2nu-homogeneous in the direction, as is g(v, v)^nu, so
    constancy on either unit pseudo-sphere is the symmetric identity
    kappa_nu(v) g(w, w)^nu = kappa_nu(w) g(v, v)^nu.
    """
    n, map_a, map_b = _copy_maps(m, two_points)
    gq_a = gq.relabel(n, map_a)
    gq_b = gq.relabel(n, map_b)
    for nu, k in enumerate(kappas, start=1):
        if k.is_zero:
            continue
        lhs = _mul_guarded(k.relabel(n, map_a), _pow_guarded(gq_b, nu))
        rhs = _mul_guarded(k.relabel(n, map_b), _pow_guarded(gq_a, nu))
        if not (lhs - rhs).is_zero:
            return False
    return True


# -- classifiers --------------------------------------------------------------


def classify_affine_osserman(model, budget: SampleBudget | None = None,
                             symbolic: str = "auto") -> Verdict:
    """Is the Jacobi operator nilpotent for every direction at every point?"""
    _check_symbolic_mode(symbolic)
    b = budget or SampleBudget()
    prop = "affine-osserman"
    m = model.m
    extras: dict = {}

    def probe(pt):
        _jacobi_op(model, pt, np.ones(m))

    def groups_at(pt, seed):
        return [(None, _euclid_dirs(m, b.directions, seed))]

    def op_at(pt, x, tag):
        return _jacobi_op(model, pt, x)

    J = _family_of(model) if symbolic != "off" else None
    if J is None and symbolic != "off":
        _require_symbolic(symbolic, prop, "no exact operator family")
    if J is not None:
        try:
            kappas = _symbolic_kappas(J)
        except SymbolicBudgetExceeded as exc:
            _require_symbolic(symbolic, prop, str(exc))
            extras["symbolic"] = f"budget exceeded: {exc}"
            kappas = None
        if kappas is not None:
            if all(k.is_zero for k in kappas):
                extras["spectrum"] = "{0} at every point and direction"
                reps = _representatives(b, m, probe, groups_at, op_at)
                return Verdict(prop, HOLDS_SYMBOLIC, spectra=reps, extras=extras)
            extras["symbolic"] = "nonzero characteristic coefficient; sampling for a witness"

    rng = np.random.default_rng(b.seed)
    pts, skipped = _pick_points(m, b, rng, probe)
    if skipped:
        extras["resampled_points"] = skipped
    table = []
    for pt in pts:
        dirs = _euclid_dirs(m, b.directions, int(rng.integers(1 << 31)))
        rep = None
        for x in dirs:
            op = _jacobi_op(model, pt, x)
            sp = spectral.eigenvalues(op, b.tol)
            if rep is None:
                rep = sp
            if sp.nonzero():
                table.append((_point_key(pt), sp))
                witness = {
                    "point": _point_key(pt),
                    "direction": tuple(float(t) for t in x),
                    "spectrum": _spec_str(sp),
                }
                return Verdict(prop, FAILS, witness=witness, spectra=table,
                               extras=extras, budget=b)
        table.append((_point_key(pt), rep))
    return Verdict(prop, HOLDS_SAMPLED, spectra=table, extras=extras, budget=b)


def classify_projectively_osserman(model, budget: SampleBudget | None = None,
                                   pointwise_only: bool = False,
                                   symbolic: str = "auto") -> Verdict:
    """Do all Jacobi spectra agree up to scale with one reference multiset?

    By default the reference is shared across points (the global
    property); pointwise_only restricts the comparison to each point.
    """
    _check_symbolic_mode(symbolic)
    b = budget or SampleBudget()
    prop = "projectively-osserman"
    m = model.m
    extras: dict = {"scope": "pointwise" if pointwise_only else "global"}

    def probe(pt):
        _jacobi_op(model, pt, np.ones(m))

    def groups_at(pt, seed):
        return [(None, _euclid_dirs(m, b.directions, seed))]

    def op_at(pt, x, tag):
        return _jacobi_op(model, pt, x)

    J = _family_of(model) if symbolic != "off" else None
    if J is None and symbolic != "off":
        _require_symbolic(symbolic, prop, "no exact operator family")
    if J is not None:
        try:
            kappas = _symbolic_kappas(J)
            if all(k.is_zero for k in kappas):
                extras["spectrum"] = "{0} at every point and direction"
                reps = _representatives(b, m, probe, groups_at, op_at)
                return Verdict(prop, HOLDS_SYMBOLIC, spectra=reps, extras=extras)
            if _scale_identities(kappas, m, two_points=not pointwise_only):
                reps = _representatives(b, m, probe, groups_at, op_at)
                return Verdict(prop, HOLDS_SYMBOLIC, spectra=reps, extras=extras)
            extras["symbolic"] = "scale identity fails; sampling for a witness"
        except SymbolicBudgetExceeded as exc:
            _require_symbolic(symbolic, prop, str(exc))
            extras["symbolic"] = f"budget exceeded: {exc}"

    return _scan_sampled(prop, b, m, probe, groups_at, op_at,
                         scale_mode=True, cross=not pointwise_only, extras=extras)


def classify_osserman(g: MetricModel, sign: int = 1,
                      budget: SampleBudget | None = None,
                      pointwise_only: bool = False,
                      symbolic: str = "auto") -> Verdict:
    """Are Jacobi spectra constant across unit directions of the given sign?

    sign +1 uses spacelike unit vectors, -1 timelike ones.  The default
    compares spectra across points as well (the global property).
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    _check_symbolic_mode(symbolic)
    b = budget or SampleBudget()
    prop = "osserman"
    m = g.m
    extras: dict = {"sign": sign, "scope": "pointwise" if pointwise_only else "global"}

    neg, pos = g.signature()
    needed = pos if sign == 1 else neg
    if needed < 1:
        extras["reason"] = (
            f"sign {sign:+d} unit vectors do not exist for signature ({neg}, {pos})"
        )
        return Verdict(prop, INAPPLICABLE, extras=extras)

    lc = geom.levi_civita(g)

    def probe(pt):
        g.inverse_at(pt)
        geom.sample_unit_vectors(g, pt, sign, 1, seed=7)

    def groups_at(pt, seed):
        return [(None, geom.sample_unit_vectors(g, pt, sign, b.directions, seed))]

    def op_at(pt, x, tag):
        return geom.jacobi(lc, pt, x)

    J = lc.jacobi_family() if symbolic != "off" else None
    gq = _metric_quadratic_family(g) if symbolic != "off" else None
    if (J is None or gq is None) and symbolic != "off":
        _require_symbolic(symbolic, prop, "no exact operator family")
    if J is not None and gq is not None:
        try:
            kappas = _symbolic_kappas(J)
            if all(k.is_zero for k in kappas):
                extras["spectrum"] = "{0} at every point and direction"
                reps = _representatives(b, m, probe, groups_at, op_at)
                return Verdict(prop, HOLDS_SYMBOLIC, spectra=reps, extras=extras)
            if _norm_identities(kappas, gq, m, two_points=not pointwise_only):
                reps = _representatives(b, m, probe, groups_at, op_at)
                return Verdict(prop, HOLDS_SYMBOLIC, spectra=reps, extras=extras)
            extras["symbolic"] = "unit-direction identity fails; sampling for a witness"
        except SymbolicBudgetExceeded as exc:
            _require_symbolic(symbolic, prop, str(exc))
            extras["symbolic"] = f"budget exceeded: {exc}"

    return _scan_sampled(prop, b, m, probe, groups_at, op_at,
                         scale_mode=False, cross=not pointwise_only, extras=extras)


def classify_conformally_osserman(g: MetricModel,
                                  budget: SampleBudget | None = None,
                                  symbolic: str = "auto") -> Verdict:
    """Are conformal Jacobi spectra constant on each unit pseudo-sphere?

    The property is pointwise and checked on every realizable sign.
    Below dimension four the conformal curvature vanishes identically
    and the question is inapplicable.
    """
    _check_symbolic_mode(symbolic)
    b = budget or SampleBudget()
    prop = "conformally-osserman"
    m = g.m
    extras: dict = {}
    if m < 4:
        extras["reason"] = "conformal curvature vanishes identically below dimension 4"
        return Verdict(prop, INAPPLICABLE, extras=extras)

    neg, pos = g.signature()
    signs = [s for s in (1, -1) if (pos if s == 1 else neg) >= 1]
    extras["signs"] = tuple(signs)

    def probe(pt):
        g.inverse_at(pt)
        for s in signs:
            geom.sample_unit_vectors(g, pt, s, 1, seed=7)

    def groups_at(pt, seed):
        return [
            (s, geom.sample_unit_vectors(g, pt, s, b.directions, seed + i))
            for i, s in enumerate(signs)
        ]

    def op_at(pt, x, tag):
        return geom.conformal_jacobi(g, pt, x)

    verdict = None
    J = geom.conformal_jacobi_family(g) if symbolic != "off" else None
    gq = _metric_quadratic_family(g) if symbolic != "off" else None
    if (J is None or gq is None) and symbolic != "off":
        _require_symbolic(symbolic, prop, "no exact operator family")
    if J is not None and gq is not None:
        try:
            kappas = _symbolic_kappas(J)
            if all(k.is_zero for k in kappas):
                extras["spectrum"] = "{0} at every point and direction"
                reps = _representatives(b, m, probe, groups_at, op_at)
                verdict = Verdict(prop, HOLDS_SYMBOLIC, spectra=reps, extras=extras)
            elif _norm_identities(kappas, gq, m, two_points=False):
                reps = _representatives(b, m, probe, groups_at, op_at)
                verdict = Verdict(prop, HOLDS_SYMBOLIC, spectra=reps, extras=extras)
            else:
                extras["symbolic"] = "unit-direction identity fails; sampling for a witness"
        except SymbolicBudgetExceeded as exc:
            _require_symbolic(symbolic, prop, str(exc))
            extras["symbolic"] = f"budget exceeded: {exc}"

    if verdict is None:
        verdict = _scan_sampled(prop, b, m, probe, groups_at, op_at,
                                scale_mode=False, cross=False, extras=extras)
    _note_rescale_invariance(g, b, extras)
    return verdict


def _note_rescale_invariance(g: MetricModel, b: SampleBudget, extras: dict) -> None:
    """Record how far W(1,3) moves under a conformal rescale of g."""
    try:
        rng = np.random.default_rng(b.seed + 17)
        h = ex.ZERO
        for i in range(g.m):
            c = Fraction(int(rng.integers(1, 4)), int(rng.integers(2, 5)))
            if rng.integers(2):
                c = -c
            h = h + ex.const(c) * ex.variable(i)
        factor = ex.call("exp", h)
        entries = [[factor * g.entries[i][j] for j in range(g.m)] for i in range(g.m)]
        gh = MetricModel(g.chart, entries, signature=g.signature())
        worst = 0.0
        checked = 0
        attempts = 0
        while checked < 2 and attempts < 40:
            attempts += 1
            pt = rng.uniform(b.box[0], b.box[1], size=g.m)
            try:
                wa = geom.weyl_conformal(g, pt)
                wb = geom.weyl_conformal(gh, pt)
            except _RESAMPLE_ERRORS:
                continue
            scale = max(float(np.max(np.abs(wa))), float(np.max(np.abs(wb))), 1.0)
            worst = max(worst, float(np.max(np.abs(wa - wb))) / scale)
            checked += 1
        if checked:
            extras["rescale_drift"] = worst
    except (ex.ExprError, SymbolicBudgetExceeded, *_RESAMPLE_ERRORS):
        pass


def classify_projective_weyl_osserman(c: ConnectionModel,
                                      budget: SampleBudget | None = None,
                                      symbolic: str = "auto") -> Verdict:
    """Do projective-curvature Jacobi spectra agree up to scale pointwise?"""
    _check_symbolic_mode(symbolic)
    b = budget or SampleBudget()
    prop = "projective-weyl-osserman"
    m = c.m
    extras: dict = {}
    if m < 2:
        extras["reason"] = "projective curvature needs dimension at least 2"
        return Verdict(prop, INAPPLICABLE, extras=extras)

    def probe(pt):
        geom.projective_jacobi(c, pt, np.ones(m))

    def groups_at(pt, seed):
        return [(None, _euclid_dirs(m, b.directions, seed))]

    def op_at(pt, x, tag):
        return geom.projective_jacobi(c, pt, x)

    J = geom.projective_jacobi_family(c) if symbolic != "off" else None
    if J is None and symbolic != "off":
        _require_symbolic(symbolic, prop, "no exact operator family")
    if J is not None:
        try:
            kappas = _symbolic_kappas(J)
            if all(k.is_zero for k in kappas):
                extras["spectrum"] = "{0} at every point and direction"
                reps = _representatives(b, m, probe, groups_at, op_at)
                return Verdict(prop, HOLDS_SYMBOLIC, spectra=reps, extras=extras)
            if _scale_identities(kappas, m, two_points=False):
                reps = _representatives(b, m, probe, groups_at, op_at)
                return Verdict(prop, HOLDS_SYMBOLIC, spectra=reps, extras=extras)
            extras["symbolic"] = "scale identity fails; sampling for a witness"
        except SymbolicBudgetExceeded as exc:
            _require_symbolic(symbolic, prop, str(exc))
            extras["symbolic"] = f"budget exceeded: {exc}"

    return _scan_sampled(prop, b, m, probe, groups_at, op_at,
                         scale_mode=True, cross=False, extras=extras)


# -- Walker metrics on R^4 ----------------------------------------------------

WALKER_DIRECTION_CHART = Chart(("x1", "x2", "x3", "x4", "v1", "v2", "v3", "v4"))

FORM_1 = "form-1"
FORM_2 = "form-2"
FORM_3 = "form-3"


@dataclass(frozen=True)
class WalkerReport:
    """Structure flags for a Walker metric determined by its g34 entry.

    residuals maps each defining condition to its normal form ("0" when
    satisfied); exact records whether the decisions were proved
    symbolically rather than by sampling.  einstein is only reachable
    in the form-3 family, matching the curvature identities these
    metrics satisfy.
    """

    self_dual: bool
    anti_self_dual: bool
    einstein: bool
    proj_osserman_form: str | None
    residuals: dict
    exact: bool


def _residual_str(e: Expression, nvars: int, chart: Chart) -> tuple[str, bool, bool]:
    """(normal form or source text, is_zero, exact)."""
    try:
        rf = ex.to_ratfunc(e, nvars)
        if rf.is_zero:
            return "0", True, True
        return ex.to_string(geom.ratfunc_to_expr(rf), chart), False, True
    except ex.NotRationalError:
        chk = ex.is_zero(e, nvars)
        if chk.zero:
            return "0", True, chk.exact
        return ex.to_string(e, chart), False, chk.exact


def walker_analyze(g34) -> WalkerReport:
    """Classify the Walker metric with the given g34 entry.

    Decides self-duality, anti-self-duality and the Einstein property,
    and names which structural family (form-1, form-2, form-3) the
    entry falls into, if any:

      form-3: g34 linear in x1, x2 with coefficients in (x3, x4)
      form-1: g34 = p(x1, x4) + s(x3)
      form-2: g34 = q(x2, x3) + s(x4)

    All conditions are derivative identities in g34 alone, so no
    explicit decomposition into component functions is needed.
    """
    g = catalog.walker(g34)
    f = g.entries[2][3]
    chart = g.chart

    def d(e, *idx):
        for i in idx:
            e = ex.differentiate(e, i)
        return e

    x1 = ex.variable(0)
    x2 = ex.variable(1)

    g1, g2 = d(f, 0), d(f, 1)
    g11, g22, g12 = d(f, 0, 0), d(f, 1, 1), d(f, 0, 1)
    g13, g14 = d(f, 0, 2), d(f, 0, 3)
    g23, g24 = d(f, 1, 2), d(f, 1, 3)
    g34 = d(f, 2, 3)
    g113, g224 = d(g11, 2), d(g22, 3)
    g133, g134 = d(g13, 2), d(g13, 3)
    g234 = d(g23, 3)

    # anti-self-duality: with p, q read off through derivatives of g34,
    # the two compatibility identities of the mixed family
    s34 = g34 - x1 * g134 - x2 * g234
    asd_balance = f * g13 - x1 * g134 - x2 * g133 - s34

    conditions = {
        "g_1": g1,
        "g_2": g2,
        "g_11": g11,
        "g_22": g22,
        "g_12": g12,
        "g_13": g13,
        "g_24": g24,
        "g_34": g34,
        "g_113": g113,
        "g_224": g224,
        "g_13_minus_g_24": g13 - g24,
        "asd_residual": asd_balance,
        "einstein_g1sq_minus_2g14": g1 * g1 - ex.const(2) * g14,
        "einstein_g2sq_minus_2g23": g2 * g2 - ex.const(2) * g23,
        "einstein_g1g2_minus_g13_minus_g24": g1 * g2 - g13 - g24,
    }

    residuals: dict = {}
    zero: dict = {}
    exact = True
    for key, e in conditions.items():
        text, is0, ok = _residual_str(e, 4, chart)
        residuals[key] = text
        zero[key] = is0
        exact = exact and ok

    form3 = zero["g_11"] and zero["g_22"] and zero["g_12"]
    form1 = zero["g_2"] and zero["g_13"] and zero["g_34"]
    form2 = zero["g_1"] and zero["g_24"] and zero["g_34"]
    self_dual = form3
    anti_self_dual = (
        zero["g_12"] and zero["g_113"] and zero["g_224"]
        and zero["g_13_minus_g_24"] and zero["asd_residual"]
    )
    einstein = (
        form3
        and zero["einstein_g1sq_minus_2g14"]
        and zero["einstein_g2sq_minus_2g23"]
        and zero["einstein_g1g2_minus_g13_minus_g24"]
    )

    _crosscheck_einstein(g, einstein, exact)

    if form3:
        form = FORM_3
    elif form1:
        form = FORM_1
    elif form2:
        form = FORM_2
    else:
        form = None

    return WalkerReport(
        self_dual=self_dual,
        anti_self_dual=anti_self_dual,
        einstein=einstein,
        proj_osserman_form=form,
        residuals=residuals,
        exact=exact,
    )


def _crosscheck_einstein(g: MetricModel, flag: bool, exact: bool) -> None:
    """The derivative criteria must agree with the Ricci tensor itself."""
    lc = geom.levi_civita(g)
    if exact and g.is_rational():
        ric = lc.rat_ricci()
        if ric is not None:
            flat = all(r.is_zero for row in ric for r in row)
            if flat != flag:
                raise RuntimeError(
                    "Einstein criteria disagree with the direct Ricci computation"
                )
            return
    if flag:
        rng = np.random.default_rng(3)
        checked = 0
        attempts = 0
        while checked < 3 and attempts < 60:
            attempts += 1
            pt = rng.uniform(-1.5, 1.5, size=4)
            try:
                ric = geom.ricci(lc, pt)
            except _RESAMPLE_ERRORS:
                continue
            if float(np.max(np.abs(ric))) > 1e-7:
                raise RuntimeError(
                    "Einstein criteria disagree with the direct Ricci computation"
                )
            checked += 1


def walker_closed_form_a(g34, which: str) -> Expression:
    """Closed-form eigenvalue function a(x, v) of the requested family.

    For a Walker metric in the named structural family the Jacobi
    operator of a direction v has characteristic polynomial
    t^2 (t - a)^2; the returned expression lives on the eight-variable
    chart (x1..x4, v1..v4).  Raises ValueError when g34 does not
    satisfy the conditions of the requested form.
    """
    if which not in (FORM_1, FORM_2, FORM_3):
        raise ValueError("which must be one of form-1, form-2, form-3")
    g = catalog.walker(g34)
    f = g.entries[2][3]

    def d(e, *idx):
        for i in idx:
            e = ex.differentiate(e, i)
        return e

    def want(*derivs):
        for idx in derivs:
            if not ex.is_zero(d(f, *idx), 4).zero:
                raise ValueError(f"g34 does not satisfy the {which} conditions")

    v1, v2, v3, v4 = (ex.variable(4 + i) for i in range(4))
    quarter = ex.const(Fraction(1, 4))
    two = ex.const(2)

    if which == FORM_3:
        want((0, 0), (1, 1), (0, 1))
        p, q = d(f, 0), d(f, 1)
        inner = (
            -(v4 * v4) * p * p
            + two * v3 * v4 * p * q
            - (v3 * v3) * q * q
            + two * (v4 * v4) * d(p, 3)
            - two * v3 * v4 * d(q, 3)
            - two * v3 * v4 * d(p, 2)
            + two * (v3 * v3) * d(q, 2)
        )
        return quarter * inner
    if which == FORM_1:
        want((1,), (0, 2), (2, 3))
        p = d(f, 0)
        inner = v4 * p * p - two * v4 * d(p, 3) - two * v1 * d(p, 0)
        return -(quarter * v4 * inner)
    want((0,), (1, 3), (2, 3))
    q = d(f, 1)
    inner = v3 * q * q - two * v3 * d(q, 2) - two * v2 * d(q, 1)
    return -(quarter * v3 * inner)
