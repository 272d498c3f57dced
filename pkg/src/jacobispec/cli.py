"""Command line front end.

Subcommands: ``analyze`` runs every applicable spectral-rigidity check
on the models in a file, ``spectrum`` prints Jacobi-type spectra at one
point and direction, ``catalog`` browses the built-in model families,
and ``verify`` runs the self-check suite.

Exit codes: 0 success, 2 unreadable or unparsable input, 3 runtime
failure while computing, 4 usage error, 5 verification failure.
Reports are deterministic; timing goes to stderr only.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction

import numpy as np

from . import __version__, catalog, classify, geom, modelfile, spectral
from . import expr as ex
from .classify import SampleBudget, Verdict
from .geom import ConnectionModel, DegenerateMetricError, MetricModel
from .modelfile import ModelFileError
from .spectral import SymbolicBudgetExceeded

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_RUNTIME = 3
EXIT_USAGE = 4
EXIT_VERIFY = 5

_RUNTIME_ERRORS = (
    RuntimeError,
    ZeroDivisionError,
    OverflowError,
    DegenerateMetricError,
    SymbolicBudgetExceeded,
)


class _UsageError(Exception):
    """Bad arguments discovered after argparse (dimension mismatches etc.)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- formatting ----------------------------------------------------------------


def _fmt(v) -> str:
    return format(float(v), ".10g")


def _fmt_point(pt) -> str:
    return "(" + ", ".join(_fmt(t) for t in pt) + ")"


def _r12(v: float) -> float:
    # 12 significant digits: plenty to identify a value, short enough to
    # absorb last-bit jitter between BLAS builds
    return float(format(float(v), ".12g"))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return _r12(float(x))
    return x


def _spectrum_json(sp: spectral.SpectrumMultiset) -> dict:
    return {
        "display": sp.pretty(),
        "entries": [[_r12(v.real), _r12(v.imag), int(k)] for v, k in sp.entries],
    }


def _budget_json(b: SampleBudget) -> dict:
    return {
        "points": b.points,
        "directions": b.directions,
        "seed": b.seed,
        "tol": b.tol,
        "box": list(b.box),
    }


def _budget_str(b: SampleBudget) -> str:
    return f"points={b.points} dirs={b.directions} seed={b.seed} tol={b.tol:g}"


# -- verdict rendering ---------------------------------------------------------

_PROJECTIVE_PROPS = {"projectively-osserman", "projective-weyl-osserman"}


def _prop_label(v: Verdict) -> str:
    if v.prop == "osserman":
        return f"osserman({v.extras.get('sign', 1):+d})"
    return v.prop


def _verdict_lines(v: Verdict) -> list[str]:
    lines = [f"  {_prop_label(v):<26}{v.status}"]
    pad = "      "
    if v.status == classify.INAPPLICABLE:
        lines.append(pad + v.extras.get("reason", "not applicable"))
        return lines
    if v.status == classify.HOLDS_SYMBOLIC:
        lines.append(pad + "decided symbolically")
    else:
        lines.append(pad + "sampled: " + _budget_str(v.budget))
    if "spectrum" in v.extras:
        lines.append(pad + "spectrum: " + v.extras["spectrum"])
    if "symbolic" in v.extras:
        lines.append(pad + "note: " + v.extras["symbolic"])
    if v.witness:
        w = v.witness
        if "direction" in w:
            lines.append(pad + f"witness: point {_fmt_point(w['point'])} "
                               f"direction {_fmt_point(w['direction'])}")
        else:
            lines.append(pad + f"witness: point {_fmt_point(w['point'])} vs point "
                               f"{_fmt_point(w['reference_point'])}")
        lines.append(pad + f"  spectrum  {w['spectrum']}")
        if "reference_direction" in w:
            lines.append(pad + f"  reference {w['reference_spectrum']} at direction "
                               f"{_fmt_point(w['reference_direction'])}")
        elif "reference_spectrum" in w:
            lines.append(pad + f"  reference {w['reference_spectrum']}")
        else:
            lines.append(pad + "  expected the zero spectrum")
    projective = v.prop in _PROJECTIVE_PROPS
    shown = 0
    seen = None
    for pt, sp in v.spectra:
        if sp is None:
            continue
        if projective:
            line = pad + f"S_P at {_fmt_point(pt)}: {sp.canonical().pretty()}"
        else:
            line = pad + f"spectrum at {_fmt_point(pt)}: {sp.pretty()}"
        if line == seen:
            continue
        lines.append(line)
        seen = line
        shown += 1
        if shown == 3:
            break
    if "rescale_drift" in v.extras:
        lines.append(pad + f"rescale drift: {v.extras['rescale_drift']:.3e}")
    return lines


def _verdict_json(v: Verdict) -> dict:
    mode = "none"
    if v.status == classify.HOLDS_SYMBOLIC:
        mode = "symbolic"
    elif v.status in (classify.HOLDS_SAMPLED, classify.FAILS):
        mode = "sampled"
    projective = v.prop in _PROJECTIVE_PROPS
    spectra = []
    for pt, sp in v.spectra:
        if sp is None:
            continue
        shown = sp.canonical() if projective else sp
        spectra.append({"point": _jsonable(pt), "spectrum": _spectrum_json(shown)})
    return {
        "property": _prop_label(v),
        "status": v.status,
        "holds": v.holds,
        "provenance": {
            "mode": mode,
            "budget": _budget_json(v.budget) if v.budget else None,
        },
        "witness": _jsonable(v.witness),
        "spectra": spectra,
        "extras": _jsonable(v.extras),
    }


# -- model dispatch ------------------------------------------------------------


def _walker_g34(g: MetricModel):
    """The free entry when g structurally matches the 4-dim pattern
    g13 = g24 = 1, g34 arbitrary, everything else zero."""
    if not isinstance(g, MetricModel) or g.m != 4:
        return None
    for i in range(4):
        for j in range(i, 4):
            e = g.entries[i][j]
            if (i, j) in ((0, 2), (1, 3)):
                if not geom._structurally_equal(e, ex.ONE):
                    return None
            elif (i, j) != (2, 3):
                if not geom._structurally_equal(e, ex.ZERO):
                    return None
    return g.entries[2][3]


def _model_kind(model) -> str:
    if isinstance(model, MetricModel):
        return "metric"
    if isinstance(model, ConnectionModel):
        return "connection"
    if isinstance(model, catalog.RankOneModel):
        return "rank-one"
    return "hypersurface"


def _verdicts_for(model, b: SampleBudget, symbolic: str) -> list[Verdict]:
    if isinstance(model, MetricModel):
        lc = geom.levi_civita(model)
        return [
            classify.classify_osserman(model, 1, b, symbolic=symbolic),
            classify.classify_osserman(model, -1, b, symbolic=symbolic),
            classify.classify_conformally_osserman(model, b, symbolic=symbolic),
            classify.classify_affine_osserman(lc, b, symbolic=symbolic),
            classify.classify_projectively_osserman(lc, b, symbolic=symbolic),
            classify.classify_projective_weyl_osserman(lc, b, symbolic=symbolic),
        ]
    if isinstance(model, ConnectionModel):
        return [
            classify.classify_affine_osserman(model, b, symbolic=symbolic),
            classify.classify_projectively_osserman(model, b, symbolic=symbolic),
            classify.classify_projective_weyl_osserman(model, b, symbolic=symbolic),
        ]
    return [
        classify.classify_affine_osserman(model, b, symbolic=symbolic),
        classify.classify_projectively_osserman(model, b, symbolic=symbolic),
    ]


def _walker_json(report: classify.WalkerReport) -> dict:
    return {
        "form": report.proj_osserman_form,
        "self_dual": report.self_dual,
        "anti_self_dual": report.anti_self_dual,
        "einstein": report.einstein,
        "exact": report.exact,
        "residuals": {
            name: {"display": text, "zero": text == "0"}
            for name, text in sorted(report.residuals.items())
        },
    }


def _yn(flag: bool) -> str:
    return "yes" if flag else "no"


def _analyze_model(name: str, model, b: SampleBudget, symbolic: str):
    kind = _model_kind(model)
    lines = []
    head = f'model "{name}" ({kind}, dimension {model.m}'
    if isinstance(model, MetricModel):
        neg, pos = model.signature()
        head += f", signature ({neg}, {pos})"
    head += ")"
    lines.append(head)
    entry: dict = {"name": name, "kind": kind, "dimension": model.m}
    if isinstance(model, MetricModel):
        entry["signature"] = list(model.signature())
    entry["walker"] = None
    g34 = _walker_g34(model) if isinstance(model, MetricModel) else None
    if g34 is not None:
        report = classify.walker_analyze(g34)
        entry["walker"] = _walker_json(report)
        form = report.proj_osserman_form or "none"
        lines.append(
            f"  walker metric: family {form}; self-dual {_yn(report.self_dual)}; "
            f"anti-self-dual {_yn(report.anti_self_dual)}; "
            f"einstein {_yn(report.einstein)}"
            + ("" if report.exact else " (sampled residuals)")
        )
    verdicts = _verdicts_for(model, b, symbolic)
    for v in verdicts:
        lines.extend(_verdict_lines(v))
    entry["verdicts"] = [_verdict_json(v) for v in verdicts]
    return lines, entry


def _load_models(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            src = fh.read()
    except OSError as e:
        raise ModelFileError(f"cannot read {path}: {e.strerror or e}") from None
    blocks = modelfile.parse_model_file(src)
    return modelfile.build_all(blocks)


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- subcommands ---------------------------------------------------------------


def cmd_analyze(args) -> int:
    b = _budget_of(args)
    pairs = _load_models(args.file)
    lines = []
    models_json = []
    for block, model in pairs:
        mlines, entry = _analyze_model(block.name, model, b, args.symbolic)
        lines.extend(mlines)
        lines.append("")
        models_json.append(entry)
    text = "\n".join(lines).rstrip("\n")
    print(text)
    if args.json:
        payload = {
            "tool": {"name": "jacobispec", "version": __version__},
            "command": "analyze",
            "budget": _budget_json(b),
            "symbolic": args.symbolic,
            "models": models_json,
        }
        _write_json(args.json, payload)
    return EXIT_OK


def _parse_csv(text: str, what: str, m: int):
    parts = [t.strip() for t in text.split(",")]
    out = []
    for t in parts:
        if not t:
            raise _UsageError(f"empty component in {what} {text!r}")
        try:
            out.append(Fraction(t))
        except (ValueError, ZeroDivisionError):
            try:
                out.append(float(t))
            except ValueError:
                raise _UsageError(f"bad {what} component {t!r}") from None
    if len(out) != m:
        raise _UsageError(f"{what} has {len(out)} components, model has dimension {m}")
    return out


def _spectrum_ops(model, pt, x):
    """(label, operator) pairs applicable to the model type."""
    if isinstance(model, MetricModel):
        lc = geom.levi_civita(model)
        ops = [("J", geom.jacobi(lc, pt, x))]
        if model.m >= 4:
            ops.append(("J_W", geom.conformal_jacobi(model, pt, x)))
        ops.append(("J_P", geom.projective_jacobi(lc, pt, x)))
        return ops
    if isinstance(model, ConnectionModel):
        return [
            ("J", geom.jacobi(model, pt, x)),
            ("J_P", geom.projective_jacobi(model, pt, x)),
        ]
    return [("J", model.jacobi(pt, x))]


def cmd_spectrum(args) -> int:
    pairs = _load_models(args.file)
    n = len(args.point.split(","))
    matching = [(block, model) for block, model in pairs if model.m == n]
    if not matching:
        dims = sorted({model.m for _, model in pairs})
        raise _UsageError(f"point has {n} components but the models have dimension "
                          + ", ".join(str(d) for d in dims))
    out_json = []
    first = True
    for block, model in matching:
        pt = _parse_csv(args.point, "point", model.m)
        x = _parse_csv(args.direction, "direction", model.m)
        if not first:
            print()
        first = False
        print(f'model "{block.name}" ({_model_kind(model)}, dimension {model.m})')
        print(f"  point     {_fmt_point(pt)}")
        print(f"  direction {_fmt_point(x)}")
        entry = {"name": block.name, "kind": _model_kind(model), "operators": {}}
        for label, op in _spectrum_ops(model, pt, x):
            sp = spectral.eigenvalues(op, args.tol)
            print(f"  {label:<4} {sp.pretty()}")
            entry["operators"][label] = _spectrum_json(sp)
            if label == "J_P":
                canon = sp.canonical()
                print(f"  S_P  {canon.pretty()}")
                entry["operators"]["S_P"] = _spectrum_json(canon)
        out_json.append(entry)
    if args.json:
        payload = {
            "tool": {"name": "jacobispec", "version": __version__},
            "command": "spectrum",
            "point": args.point,
            "direction": args.direction,
            "tol": args.tol,
            "models": out_json,
        }
        _write_json(args.json, payload)
    return EXIT_OK


def cmd_catalog(args) -> int:
    if args.action == "list":
        width = max(len(n) for n in catalog.CATALOG)
        for name in sorted(catalog.CATALOG):
            print(f"{name:<{width}}  {catalog.CATALOG[name]['doc']}")
        return EXIT_OK
    entry = catalog.CATALOG.get(args.name)
    if entry is None:
        print(f"jacobispec: unknown catalog model {args.name!r}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{args.name}: {entry['doc']}")
    if entry["params"]:
        print("params:")
        for pname, desc in entry["params"].items():
            print(f"  {pname}: {desc}")
    else:
        print("params: none")
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import verification

    for item in args.item or ():
        if item not in verification.ITEMS:
            known = ", ".join(verification.ITEMS)
            print(f"jacobispec: unknown item {item!r} (known: {known})", file=sys.stderr)
            return EXIT_USAGE
    names = args.item or list(verification.ITEMS)
    results = verification.run_items(names, seed=args.seed)
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print(f"{status}: {r.slug} ({r.seconds:.1f}s) {r.detail}")
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} items passed")
    if args.json:
        payload = {
            "tool": {"name": "jacobispec", "version": __version__},
            "command": "verify",
            "seed": args.seed,
            "items": [
                {"slug": r.slug, "ok": r.ok, "detail": r.detail,
                 "seconds": round(r.seconds, 3)}
                for r in results
            ],
        }
        _write_json(args.json, payload)
    return EXIT_VERIFY if failed else EXIT_OK


# -- argument wiring -----------------------------------------------------------


def _budget_of(args) -> SampleBudget:
    try:
        return SampleBudget(points=args.points, directions=args.dirs,
                            seed=args.seed, tol=args.tol)
    except ValueError as e:
        raise _UsageError(str(e)) from None


def _add_budget_flags(p) -> None:
    p.add_argument("--points", type=int, default=5, help="sample points (default 5)")
    p.add_argument("--dirs", type=int, default=50, help="sample directions per point (default 50)")
    p.add_argument("--seed", type=int, default=42, help="sampling seed (default 42)")
    p.add_argument("--tol", type=float, default=1e-8, help="numeric tolerance (default 1e-8)")


def build_parser() -> _Parser:
    parser = _Parser(prog="jacobispec",
                     description="Spectral rigidity of Jacobi-type operators.")
    parser.add_argument("--version", action="version", version=f"jacobispec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pa = sub.add_parser("analyze", help="classify every model in a file")
    pa.add_argument("file", help="model file")
    _add_budget_flags(pa)
    pa.add_argument("--json", metavar="PATH", help="also write a JSON report")
    pa.add_argument("--symbolic", choices=("auto", "on", "off"), default="auto",
                    help="exact decision mode (default auto)")
    pa.set_defaults(fn=cmd_analyze)

    ps = sub.add_parser("spectrum", help="spectra at one point and direction")
    ps.add_argument("file", help="model file")
    ps.add_argument("--point", required=True, help="comma-separated coordinates")
    ps.add_argument("--direction", required=True, help="comma-separated components")
    ps.add_argument("--tol", type=float, default=1e-8, help="numeric tolerance (default 1e-8)")
    ps.add_argument("--json", metavar="PATH", help="also write a JSON report")
    ps.set_defaults(fn=cmd_spectrum)

    pc = sub.add_parser("catalog", help="browse built-in model families")
    pc.add_argument("action", choices=("list", "show"))
    pc.add_argument("name", nargs="?", help="family name (for show)")
    pc.set_defaults(fn=cmd_catalog)

    pv = sub.add_parser("verify", help="run the self-check suite")
    pv.add_argument("--item", action="append", help="run only the named item (repeatable)")
    pv.add_argument("--seed", type=int, default=42, help="suite seed (default 42)")
    pv.add_argument("--json", metavar="PATH", help="also write a JSON report")
    pv.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if getattr(args, "fn", None) is cmd_catalog and args.action == "show" and not args.name:
        print("jacobispec: catalog show needs a model name", file=sys.stderr)
        return EXIT_USAGE
    start = time.monotonic()
    try:
        code = args.fn(args)
    except ModelFileError as e:
        print(f"jacobispec: {e}", file=sys.stderr)
        code = EXIT_PARSE
    except _UsageError as e:
        print(f"jacobispec: {e}", file=sys.stderr)
        code = EXIT_USAGE
    except _RUNTIME_ERRORS as e:
        print(f"jacobispec: {type(e).__name__}: {e}", file=sys.stderr)
        code = EXIT_RUNTIME
    finally:
        print(f"wall {time.monotonic() - start:.2f}s", file=sys.stderr)
    return code
