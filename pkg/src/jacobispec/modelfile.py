"""Plain-text model files: parsing and instantiation.

A file holds one or more blocks.  Each block declares a metric in
coordinates, an affine connection in coordinates, or an instance of a
built-in model family:

    manifold "cigar" {
        coords: x y;
        metric { (1, 1) = 1/(1 + x^2 + y^2); (2, 2) = 1/(1 + x^2 + y^2); }
    }

    connection "shear" {
        coords: u v;
        gamma(1; 1, 2) = u;
    }

    catalog "null-walker" {
        use walker;
        param g34 = x1*x3;
    }

Indices in the file are 1-based.  Metric entries and connection
coefficients are completed symmetrically ((i, j) fills (j, i)); unlisted
entries are zero.  `param` values are expressions, integers, or nested
bracket lists of those, matching what the named model family expects.
`#` starts a comment that runs to the end of the line.

Errors carry a byte offset into the source so callers can point at the
failing spot.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import catalog
from . import expr as ex
from .expr import Chart, ExprError
from .geom import ConnectionModel, MetricModel

__all__ = [
    "ModelBlock",
    "ModelFileError",
    "build_all",
    "instantiate",
    "parse_model_file",
]

_IDENT = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_INT = re.compile(r"\d+")
_PUNCT = "{}():;,=[]"

BLOCK_KINDS = ("manifold", "connection", "catalog")


class ModelFileError(ValueError):
    """Model-file failure; ``offset`` is a byte position in the source."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} at byte {offset}"
        super().__init__(message)
        self.offset = offset


@dataclass
class ModelBlock:
    """One parsed block, indices already 0-based and validated."""

    kind: str
    name: str
    offset: int
    coords: tuple[str, ...] | None = None
    signature: tuple[int, int] | None = None
    metric: dict = field(default_factory=dict)  # (i, j) i<=j -> (source, offset)
    gamma: dict = field(default_factory=dict)  # (k, i, j) i<=j -> (source, offset)
    params: dict = field(default_factory=dict)  # name -> (value, offset)
    use: str | None = None


class _Scanner:
    """Cursor over the source with comment skipping and raw-slice capture."""

    def __init__(self, src: str):
        self.src = src
        self.pos = 0

    def _skip(self) -> None:
        src, n = self.src, len(self.src)
        while self.pos < n:
            c = src[self.pos]
            if c in " \t\r\n":
                self.pos += 1
            elif c == "#":
                nl = src.find("\n", self.pos)
                self.pos = n if nl < 0 else nl + 1
            else:
                return

    def peek(self) -> tuple[str, str, int]:
        self._skip()
        if self.pos >= len(self.src):
            return ("end", "", self.pos)
        c = self.src[self.pos]
        if c == '"':
            close = self.src.find('"', self.pos + 1)
            if close < 0:
                raise ModelFileError("unterminated string", self.pos)
            return ("string", self.src[self.pos + 1 : close], self.pos)
        m = _IDENT.match(self.src, self.pos)
        if m:
            return ("ident", m.group(), self.pos)
        m = _INT.match(self.src, self.pos)
        if m:
            return ("int", m.group(), self.pos)
        if c in _PUNCT:
            return ("punct", c, self.pos)
        raise ModelFileError(f"unexpected character {c!r}", self.pos)

    def take(self) -> tuple[str, str, int]:
        kind, text, offset = self.peek()
        if kind == "string":
            self.pos = offset + len(text) + 2
        elif kind != "end":
            self.pos = offset + len(text)
        return (kind, text, offset)

    def expect(self, text: str) -> int:
        kind, got, offset = self.take()
        if got != text or kind == "string":
            shown = "end of file" if kind == "end" else repr(got)
            raise ModelFileError(f"expected {text!r}, found {shown}", offset)
        return offset

    def expect_int(self) -> tuple[int, int]:
        kind, text, offset = self.take()
        if kind != "int":
            raise ModelFileError("expected an integer", offset)
        return (int(text), offset)

    def expect_ident(self) -> tuple[str, int]:
        kind, text, offset = self.take()
        if kind != "ident":
            raise ModelFileError("expected an identifier", offset)
        return (text, offset)

    def capture_until(self, stops: str) -> tuple[str, int]:
        """Raw source up to an unnested stop character; cursor stays on it."""
        self._skip()
        start = self.pos
        depth = 0
        src, n = self.src, len(self.src)
        i = start
        while i < n:
            c = src[i]
            if c == "#":
                nl = src.find("\n", i)
                i = n if nl < 0 else nl + 1
                continue
            if c in "([":
                depth += 1
            elif c in ")]":
                if depth == 0 and c in stops:
                    break
                depth -= 1
                if depth < 0:
                    raise ModelFileError("unbalanced brackets", i)
            elif depth == 0 and c in stops:
                break
            i += 1
        if i >= n:
            raise ModelFileError("unterminated expression", start)
        text = src[start:i].strip()
        if not text:
            raise ModelFileError("empty expression", start)
        self.pos = i
        return (text, start)


def _parse_value(sc: _Scanner):
    """Param value: int, nested bracket list, or raw expression source."""
    sc._skip()
    offset = sc.pos
    head = sc.src[sc.pos] if sc.pos < len(sc.src) else ""
    if head == "[":
        sc.take()
        items = []
        kind, text, _ = sc.peek()
        if kind == "punct" and text == "]":
            sc.take()
            return ([], offset)
        while True:
            value, _ = _parse_value(sc)
            items.append(value)
            kind, text, at = sc.take()
            if text == "]":
                return (items, offset)
            if text != ",":
                raise ModelFileError("expected ',' or ']'", at)
    if head == "(":
        sc.take()
        items = []
        while True:
            value, _ = _parse_value(sc)
            items.append(value)
            kind, text, at = sc.take()
            if text == ")":
                return (tuple(items), offset)
            if text != ",":
                raise ModelFileError("expected ',' or ')'", at)
    text, offset = sc.capture_until(",;)]")
    if re.fullmatch(r"-?\d+", text):
        return (int(text), offset)
    return (text, offset)


def _parse_block(sc: _Scanner) -> ModelBlock:
    kind, offset = sc.expect_ident()
    if kind not in BLOCK_KINDS:
        raise ModelFileError(
            f"expected 'manifold', 'connection', or 'catalog', found {kind!r}", offset
        )
    nkind, name, at = sc.take()
    if nkind != "string":
        raise ModelFileError("expected a quoted block name", at)
    sc.expect("{")

    coords: tuple[str, ...] | None = None
    signature = None
    sig_offset = 0
    saw_metric = False
    metric: dict = {}  # 1-based for now
    gamma: dict = {}
    params: dict = {}
    use = None

    while True:
        tkind, text, at = sc.peek()
        if tkind == "punct" and text == "}":
            sc.take()
            break
        if tkind == "end":
            raise ModelFileError("unterminated block (missing '}')", at)
        item, at = sc.expect_ident()

        if item == "coords":
            if coords is not None:
                raise ModelFileError("duplicate coords item", at)
            sc.expect(":")
            names = []
            while True:
                nm, _ = sc.expect_ident()
                names.append(nm)
                tkind, text, _ = sc.peek()
                if tkind == "punct" and text == ";":
                    sc.take()
                    break
            coords = tuple(names)

        elif item == "signature":
            if signature is not None:
                raise ModelFileError("duplicate signature item", at)
            sc.expect(":")
            p, _ = sc.expect_int()
            sc.expect(",")
            q, _ = sc.expect_int()
            sc.expect(";")
            signature = (p, q)
            sig_offset = at

        elif item == "metric":
            if saw_metric:
                raise ModelFileError("duplicate metric item", at)
            saw_metric = True
            sc.expect("{")
            while True:
                tkind, text, _ = sc.peek()
                if tkind == "punct" and text == "}":
                    sc.take()
                    break
                eat = sc.expect("(")
                i, _ = sc.expect_int()
                sc.expect(",")
                j, _ = sc.expect_int()
                sc.expect(")")
                sc.expect("=")
                source, src_at = sc.capture_until(";")
                sc.expect(";")
                key = (min(i, j), max(i, j))
                if key in metric:
                    raise ModelFileError(f"duplicate metric entry ({i}, {j})", eat)
                metric[key] = (source, src_at, eat)

        elif item == "gamma":
            sc.expect("(")
            k, _ = sc.expect_int()
            sc.expect(";")
            i, _ = sc.expect_int()
            sc.expect(",")
            j, _ = sc.expect_int()
            sc.expect(")")
            sc.expect("=")
            source, src_at = sc.capture_until(";")
            sc.expect(";")
            key = (k, min(i, j), max(i, j))
            if key in gamma:
                raise ModelFileError(f"duplicate gamma entry ({k}; {i}, {j})", at)
            gamma[key] = (source, src_at, at)

        elif item == "param":
            pname, _ = sc.expect_ident()
            if pname in params:
                raise ModelFileError(f"duplicate param {pname!r}", at)
            sc.expect("=")
            value, vat = _parse_value(sc)
            sc.expect(";")
            params[pname] = (value, vat)

        elif item == "use":
            if use is not None:
                raise ModelFileError("duplicate use item", at)
            uname, _ = sc.expect_ident()
            sc.expect(";")
            use = uname

        else:
            raise ModelFileError(f"unknown item {item!r}", at)

    return _finish_block(kind, name, offset, coords, signature, sig_offset,
                         saw_metric, metric, gamma, params, use)


def _finish_block(kind, name, offset, coords, signature, sig_offset,
                  saw_metric, metric, gamma, params, use) -> ModelBlock:
    """Per-kind validation; converts 1-based indices to 0-based."""
    if kind == "catalog":
        if use is None:
            raise ModelFileError(f"catalog block {name!r} needs a 'use' item", offset)
        for bad, label in ((coords, "coords"), (signature, "signature")):
            if bad is not None:
                raise ModelFileError(f"{label} not allowed in a catalog block", offset)
        if saw_metric or gamma:
            raise ModelFileError("metric and gamma not allowed in a catalog block", offset)
        return ModelBlock(kind, name, offset, params=params, use=use)

    if coords is None:
        raise ModelFileError(f"{kind} block {name!r} needs a coords item", offset)
    if params:
        raise ModelFileError("param only applies to catalog blocks", offset)
    if use is not None:
        raise ModelFileError("use only applies to catalog blocks", offset)
    m = len(coords)

    if kind == "manifold":
        if gamma:
            raise ModelFileError("gamma not allowed in a manifold block", offset)
        if not saw_metric:
            raise ModelFileError(f"manifold block {name!r} needs a metric item", offset)
        if signature is not None:
            p, q = signature
            if p < 0 or q < 0 or p + q != m:
                raise ModelFileError(
                    f"signature ({p}, {q}) does not fit dimension {m}", sig_offset
                )
        entries = {}
        for (i, j), (source, src_at, eat) in metric.items():
            if not (1 <= i <= m and 1 <= j <= m):
                raise ModelFileError(f"metric index ({i}, {j}) out of range 1..{m}", eat)
            entries[(i - 1, j - 1)] = (source, src_at)
        return ModelBlock(kind, name, offset, coords=coords,
                          signature=signature, metric=entries)

    # connection
    if saw_metric:
        raise ModelFileError("metric not allowed in a connection block", offset)
    if signature is not None:
        raise ModelFileError("signature only applies to manifold blocks", offset)
    entries = {}
    for (k, i, j), (source, src_at, at) in gamma.items():
        if not (1 <= k <= m and 1 <= i <= m and 1 <= j <= m):
            raise ModelFileError(f"gamma index ({k}; {i}, {j}) out of range 1..{m}", at)
        entries[(k - 1, i - 1, j - 1)] = (source, src_at)
    return ModelBlock(kind, name, offset, coords=coords, gamma=entries)


def parse_model_file(src: str) -> list[ModelBlock]:
    """Parse a whole file into blocks; raises ModelFileError with offsets."""
    sc = _Scanner(src)
    blocks = []
    while True:
        kind, _, at = sc.peek()
        if kind == "end":
            break
        blocks.append(_parse_block(sc))
    if not blocks:
        raise ModelFileError("no blocks found", 0)
    return blocks


def _parse_entry(source: str, offset: int, chart: Chart):
    try:
        return ex.parse(source, chart)
    except ExprError as e:
        message = re.sub(r" at byte \d+$", "", str(e))
        raise ModelFileError(message, offset + (e.offset or 0)) from None


def instantiate(block: ModelBlock, built: dict | None = None):
    """Build the model a block describes.

    Returns a MetricModel, a ConnectionModel, or one of the synthetic
    catalog models, depending on the block kind.  ``built`` maps names
    of earlier blocks to their models; the ``product`` family resolves
    its ``factors`` there.
    """
    if block.kind == "manifold":
        chart = _chart_of(block)
        m = len(chart)
        grid = [[ex.ZERO] * m for _ in range(m)]
        for (i, j), (source, at) in block.metric.items():
            e = _parse_entry(source, at, chart)
            grid[i][j] = e
            grid[j][i] = e
        return MetricModel(chart, grid, signature=block.signature, name=block.name)

    if block.kind == "connection":
        chart = _chart_of(block)
        m = len(chart)
        grid = [[[ex.ZERO] * m for _ in range(m)] for _ in range(m)]
        for (k, i, j), (source, at) in block.gamma.items():
            e = _parse_entry(source, at, chart)
            grid[k][i][j] = e
            grid[k][j][i] = e
        return ConnectionModel(chart, grid, name=block.name)

    entry = catalog.CATALOG.get(block.use)
    if entry is None:
        known = ", ".join(sorted(catalog.CATALOG))
        raise ModelFileError(
            f"unknown catalog model {block.use!r} (known: {known})", block.offset
        )
    kwargs = {}
    for pname, (value, at) in block.params.items():
        if pname not in entry["params"]:
            allowed = ", ".join(sorted(entry["params"])) or "none"
            raise ModelFileError(
                f"model {block.use!r} has no param {pname!r} (takes: {allowed})", at
            )
        kwargs[pname] = value
    if block.use == "product":
        return _build_product(block, kwargs, built or {})
    try:
        return entry["build"](**kwargs)
    except (TypeError, ValueError, ExprError) as e:
        raise ModelFileError(f"catalog model {block.use!r}: {e}", block.offset) from None


def _build_product(block: ModelBlock, kwargs: dict, built: dict):
    """Product factors name earlier blocks; folds pairwise left to right."""
    factors = kwargs.get("factors")
    if not isinstance(factors, list) or len(factors) < 2:
        raise ModelFileError(
            "product needs param factors = [name, name, ...] with at least two names",
            block.offset,
        )
    models = []
    for ref in factors:
        model = built.get(ref) if isinstance(ref, str) else None
        if model is None:
            raise ModelFileError(
                f"product factor {ref!r} does not name an earlier block", block.offset
            )
        if not isinstance(model, MetricModel):
            raise ModelFileError(f"product factor {ref!r} is not a metric", block.offset)
        models.append(model)
    out = models[0]
    for nxt in models[1:]:
        out = catalog.CATALOG["product"]["build"](out, nxt)
    return out


def build_all(blocks: list[ModelBlock]) -> list[tuple[ModelBlock, object]]:
    """Instantiate every block in order, letting later blocks see earlier ones."""
    built: dict = {}
    out = []
    for block in blocks:
        if block.name in built:
            raise ModelFileError(f"duplicate block name {block.name!r}", block.offset)
        model = instantiate(block, built)
        built[block.name] = model
        out.append((block, model))
    return out


def _chart_of(block: ModelBlock) -> Chart:
    try:
        return Chart(block.coords)
    except ValueError as e:
        raise ModelFileError(str(e), block.offset) from None
