"""SPRK tableaux, the coefficient mini-language, and the built-in methods.

A tableau holds one ``s x s`` matrix ``Z[(q, m)]`` and one ``s``-vector
``gamma[(q, m)]`` per partition ``q = 1..Q`` and channel ``m = 0..M``.
Entries are exact :class:`~sprk.words.AlgebraElement` values built from the
generators ``h``, ``dW[m]`` and ``J[m,0]``.

File format (JSON, ``format: 1``)::

    {"format": 1, "name": "...", "Q": 2, "M": 1, "s": 2, "mode": "strat",
     "Z":     {"1,0": [["0", "0"], ["h/2", "h/2"]], "1,*": [...], ...},
     "gamma": {"1,0": ["h/2", "h/2"], "1,*": [...], ...}}

A ``"q,*"`` key is a template over the noise index and is instantiated for
``m = 1..M``; inside it ``*`` (or ``m``) stands for that index.

Expression grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := rational | 'h' | 'dW' '[' idx ']' | 'J' '[' idx ',' idx ']'
              | '(' expr ')' | '-' factor
    idx    := integer | '*' | 'm'

Division is only allowed by nonzero monomials ``c * h**k``.  ``J[0,m]`` is
sugar for ``h*dW[m] - J[m,0]``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Sequence

from .bseries import Mode
from .words import AlgebraElement, strat_to_ito

Block = tuple[int, int]


class TableauFormatError(ValueError):
    """Base class for tableau document and expression errors.

    ``entry`` is ``(q, m, i, j)`` for matrix entries, ``(q, m, i)`` for
    weights (1-based), or ``None`` for document-level problems.
    """

    def __init__(self, message: str, entry: tuple | None = None, line: int | None = None,
                 column: int | None = None):
        self.entry = entry
        self.line = line
        self.column = column
        where = []
        if entry is not None:
            where.append("entry " + ",".join(map(str, entry)))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        super().__init__(message + (f" ({'; '.join(where)})" if where else ""))


class ExpressionSyntaxError(TableauFormatError):
    pass


class UnknownSymbolError(TableauFormatError):
    pass


class DivisionError(TableauFormatError):
    """Division by something other than a nonzero ``c * h**k``."""


class DivisionByZeroError(DivisionError):
    pass


class UnsupportedVariableError(TableauFormatError):
    """Entry lowers to a random variable outside ``{h, dW[m], J[m,0]}``."""


class MissingBlockError(TableauFormatError):
    pass


class DimensionError(TableauFormatError):
    pass


# --------------------------------------------------------------------------
# expression parsing

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z_0-9]*)|(.))")


def _tokenize(text: str, entry):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        if m.group(1):
            tokens.append(("num", m.group(1), m.start(1)))
        elif m.group(2):
            tokens.append(("id", m.group(2), m.start(2)))
        elif m.group(3):
            ch = m.group(3)
            if ch not in "+-*/()[],":
                raise ExpressionSyntaxError(f"unexpected character {ch!r}", entry,
                                            column=m.start(3) + 1)
            tokens.append((ch, ch, m.start(3)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _ExprParser:
    def __init__(self, text: str, *, noise: int | None, M: int | None, entry=None,
                 general_words: bool = False):
        self.text = text
        self.noise = noise
        self.M = M
        self.entry = entry
        self.general = general_words
        self.tokens = _tokenize(text, entry)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None):
        tok = self.tokens[self.i]
        if kind is not None and tok[0] != kind:
            what = "end of expression" if tok[0] == "end" else repr(tok[1])
            raise ExpressionSyntaxError(f"expected {kind!r}, found {what}", self.entry,
                                        column=tok[2] + 1)
        self.i += 1
        return tok

    def parse(self) -> AlgebraElement:
        if self.peek()[0] == "end":
            raise ExpressionSyntaxError("empty expression", self.entry, column=1)
        value = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExpressionSyntaxError(f"unexpected {tok[1]!r}", self.entry, column=tok[2] + 1)
        return value

    def expr(self) -> AlgebraElement:
        value = self.term()
        while self.peek()[0] in "+-":
            op = self.take()[0]
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self) -> AlgebraElement:
        value = self.factor()
        while self.peek()[0] in ("*", "/"):
            op, _, col = self.take()
            rhs = self.factor()
            if op == "*":
                value = value * rhs
            else:
                value = value * self._reciprocal(rhs, col)
        return value

    def _reciprocal(self, d: AlgebraElement, col: int) -> AlgebraElement:
        if d.is_zero():
            raise DivisionByZeroError("division by zero", self.entry, column=col + 1)
        terms = list(d.items())
        if len(terms) != 1 or terms[0][0][1] != ():
            raise DivisionError(f"cannot divide by {d}; only by c*h^k", self.entry,
                                column=col + 1)
        (k, _), c = terms[0]
        return AlgebraElement({(-k, ()): 1 / c})

    def factor(self) -> AlgebraElement:
        kind, text, col = self.peek()
        if kind == "-":
            self.take()
            return -self.factor()
        if kind == "num":
            self.take()
            return AlgebraElement.const(int(text))
        if kind == "(":
            self.take()
            value = self.expr()
            self.take(")")
            return value
        if kind == "id":
            self.take()
            if text == "h":
                return AlgebraElement.h()
            if text == "dW":
                (m,) = self._indices(1)
                return AlgebraElement.dW(self._noise(m, col))
            if text == "J":
                a, b = self._indices(2)
                if b == 0 and a != 0:
                    return AlgebraElement.J(self._noise(a, col))
                if a == 0 and b != 0:
                    m = self._noise(b, col)
                    return AlgebraElement.h() * AlgebraElement.dW(m) - AlgebraElement.J(m)
                raise UnknownSymbolError(f"J[{a},{b}] is not a supported increment",
                                         self.entry, column=col + 1)
            if self.general and text in ("I", "S"):
                word = self._indices(None)
                for a in word:
                    if a:
                        self._noise(a, col)
                if text == "I":
                    return AlgebraElement.word(word)
                return strat_to_ito(word)
            raise UnknownSymbolError(f"unknown symbol {text!r}", self.entry, column=col + 1)
        what = "end of expression" if kind == "end" else repr(text)
        raise ExpressionSyntaxError(f"unexpected {what}", self.entry, column=col + 1)

    def _indices(self, count: int | None) -> list[int]:
        self.take("[")
        out = [self._index()]
        while self.peek()[0] == ",":
            self.take()
            out.append(self._index())
        close = self.take("]")
        if count is not None and len(out) != count:
            raise ExpressionSyntaxError(f"expected {count} index(es)", self.entry,
                                        column=close[2] + 1)
        return out

    def _index(self) -> int:
        kind, text, col = self.peek()
        if kind == "num":
            self.take()
            return int(text)
        if kind == "*" or (kind == "id" and text == "m"):
            self.take()
            if not self.noise:
                raise UnknownSymbolError("noise placeholder outside a stochastic block",
                                         self.entry, column=col + 1)
            return self.noise
        raise ExpressionSyntaxError(f"bad index {text!r}", self.entry, column=col + 1)

    def _noise(self, m: int, col: int) -> int:
        if m < 1 or (self.M is not None and m > self.M):
            raise UnknownSymbolError(f"noise index {m} out of range 1..{self.M}", self.entry,
                                     column=col + 1)
        return m


def parse_expression(text: str, *, noise: int | None = None, M: int | None = None,
                     entry=None, general_words: bool = False) -> AlgebraElement:
    """Lower one coefficient expression to an element.

    ``noise`` substitutes the ``*``/``m`` placeholder.  With
    ``general_words`` the extra factors ``I[w...]`` (Itô word) and
    ``S[w...]`` (Stratonovich word) are accepted and products of random
    variables are not restricted.
    """
    return _ExprParser(str(text), noise=noise, M=M, entry=entry,
                       general_words=general_words).parse()


def _is_generator(word: tuple[int, ...]) -> bool:
    return word == () or (len(word) == 1 and word[0] != 0) or (len(word) == 2 and word[1] == 0)


def _check_entry(value: AlgebraElement, entry) -> AlgebraElement:
    for (_, w), _ in value.items():
        if not _is_generator(w):
            raise UnsupportedVariableError(
                f"entry {value} uses a random variable outside h, dW[m], J[m,0]", entry)
    return value


def format_expression(value: AlgebraElement, placeholder: int | None = None) -> str:
    """Mini-language text for an entry; ``placeholder`` noise prints as ``*``."""
    if value.is_zero():
        return "0"
    parts = []
    for (k, w), c in value.items():
        idx = (lambda a: "*" if a == placeholder else str(a))
        factors = []
        if len(w) == 1:
            factors.append(f"dW[{idx(w[0])}]")
        elif len(w) == 2:
            factors.append(f"J[{idx(w[0])},0]")
        elif w:
            raise UnsupportedVariableError(f"cannot print word {w}")
        factors.extend(["h"] * max(k, 0))
        num = abs(c.numerator)
        text = "*".join(([str(num)] if num != 1 or not factors else []) + factors)
        if c.denominator != 1:
            text += f"/{c.denominator}"
        if k < 0:
            text += "/h" * (-k)
        parts.append(("-" if c < 0 else "+", text))
    out = ("-" if parts[0][0] == "-" else "") + parts[0][1]
    for sign, text in parts[1:]:
        out += f" {sign} {text}"
    return out


# --------------------------------------------------------------------------
# the tableau


@dataclass(frozen=True)
class QIWitness:
    i: int
    j: int
    m1: int
    m2: int
    residual: AlgebraElement


@dataclass(frozen=True)
class QIReport:
    holds: bool
    witnesses: list[QIWitness] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"holds": self.holds,
                "witnesses": [{"i": w.i, "j": w.j, "m1": w.m1, "m2": w.m2,
                               "residual": str(w.residual)} for w in self.witnesses]}


class Tableau:
    """Generalized Butcher tableau of an SPRK method (immutable)."""

    def __init__(self, name: str, Q: int, M: int, s: int,
                 Z: Mapping[Block, Sequence[Sequence[AlgebraElement]]],
                 gamma: Mapping[Block, Sequence[AlgebraElement]],
                 mode=Mode.STRATONOVICH, source: Mapping | None = None):
        self.name = name
        self.Q, self.M, self.s = int(Q), int(M), int(s)
        self.mode = Mode.parse(mode)
        self.Z = {}
        self.gamma = {}
        for q in range(1, self.Q + 1):
            for m in range(self.M + 1):
                if (q, m) not in Z:
                    raise MissingBlockError(f"missing Z block ({q},{m})")
                if (q, m) not in gamma:
                    raise MissingBlockError(f"missing gamma block ({q},{m})")
                rows = tuple(tuple(r) for r in Z[(q, m)])
                if len(rows) != self.s or any(len(r) != self.s for r in rows):
                    raise DimensionError(f"Z block ({q},{m}) is not {self.s}x{self.s}")
                g = tuple(gamma[(q, m)])
                if len(g) != self.s:
                    raise DimensionError(f"gamma block ({q},{m}) does not have {self.s} entries")
                self.Z[(q, m)] = rows
                self.gamma[(q, m)] = g
        self._source = dict(source) if source is not None else None
        self._hash = hash((self.Q, self.M, self.s, self.mode,
                           tuple(sorted(self.Z.items())), tuple(sorted(self.gamma.items()))))

    def __eq__(self, other):
        if not isinstance(other, Tableau):
            return NotImplemented
        return (self.Q, self.M, self.s, self.mode, self.Z, self.gamma) == \
            (other.Q, other.M, other.s, other.mode, other.Z, other.gamma)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Tableau({self.name!r}, Q={self.Q}, M={self.M}, s={self.s}, mode={self.mode.value})"

    def blocks(self):
        return sorted(self.Z)

    def with_mode(self, mode) -> Tableau:
        return Tableau(self.name, self.Q, self.M, self.s, self.Z, self.gamma, mode, self._source)

    def with_noise_count(self, M: int) -> Tableau:
        """Re-instantiate a template tableau for a different ``M``."""
        if M == self.M:
            return self
        if self._source is None:
            raise ValueError(f"tableau {self.name!r} has no template to re-instantiate")
        return parse_tableau(self._source, M=M)

    def zero_block_free(self):
        """Blocks with at least one structurally nonzero entry."""
        return [b for b in self.blocks()
                if any(e for row in self.Z[b] for e in row) or any(self.gamma[b])]

    def dependency_pairs(self) -> set[tuple[int, int]]:
        """``(i, j)`` (0-based) such that stage ``i`` uses stage ``j``."""
        return {(i, j) for Z in self.Z.values() for i in range(self.s) for j in range(self.s)
                if Z[i][j]}

    def explicit_order(self) -> list[int] | None:
        """Stage evaluation order if the stage graph is acyclic, else ``None``."""
        deps = self.dependency_pairs()
        order: list[int] = []
        done: set[int] = set()
        while len(order) < self.s:
            ready = [i for i in range(self.s) if i not in done
                     and all(j in done for (a, j) in deps if a == i)]
            if not ready:
                return None
            order.append(ready[0])
            done.add(ready[0])
        return order

    # serialization ------------------------------------------------------

    def _template_blocks(self, q: int):
        """``(Z, gamma)`` of block ``(q, 1)`` if all ``(q, m)`` are relabelings of it."""
        if self.M < 1:
            return None
        base_Z, base_g = self.Z[(q, 1)], self.gamma[(q, 1)]
        entries = [e for row in base_Z for e in row] + list(base_g)
        if any(e.letters() - {0, 1} for e in entries):
            return None
        for m in range(2, self.M + 1):
            if any(_relabel(e, m) != f for e, f in zip(entries, [x for row in self.Z[(q, m)]
                                                                  for x in row] +
                                                          list(self.gamma[(q, m)]))):
                return None
        return base_Z, base_g

    def to_document(self) -> dict[str, Any]:
        Z_doc: dict[str, Any] = {}
        g_doc: dict[str, Any] = {}
        for q in range(1, self.Q + 1):
            Z_doc[f"{q},0"] = [[format_expression(e) for e in row] for row in self.Z[(q, 0)]]
            g_doc[f"{q},0"] = [format_expression(e) for e in self.gamma[(q, 0)]]
            templ = self._template_blocks(q)
            if templ is not None:
                Z_doc[f"{q},*"] = [[format_expression(e, 1) for e in row] for row in templ[0]]
                g_doc[f"{q},*"] = [format_expression(e, 1) for e in templ[1]]
            else:
                for m in range(1, self.M + 1):
                    Z_doc[f"{q},{m}"] = [[format_expression(e) for e in row]
                                         for row in self.Z[(q, m)]]
                    g_doc[f"{q},{m}"] = [format_expression(e) for e in self.gamma[(q, m)]]
        return {"format": 1, "name": self.name, "Q": self.Q, "M": self.M, "s": self.s,
                "mode": self.mode.value, "Z": Z_doc, "gamma": g_doc}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_document(), indent=indent)

    def pretty(self) -> str:
        """Plain-text listing of all blocks."""
        lines = [f"{self.name}: Q={self.Q} M={self.M} s={self.s} mode={self.mode.value}"]
        for (q, m) in self.blocks():
            lines.append(f"Z({q},{m}):")
            for row in self.Z[(q, m)]:
                lines.append("  [" + ", ".join(str(e) for e in row) + "]")
        for (q, m) in self.blocks():
            lines.append(f"gamma({q},{m}): [" + ", ".join(str(e) for e in self.gamma[(q, m)]) + "]")
        return "\n".join(lines)


def _relabel(e: AlgebraElement, m: int) -> AlgebraElement:
    return AlgebraElement({(k, tuple(m if a == 1 else a for a in w)): c for (k, w), c in e.items()})


def _parse_key(key: str, doc_M: int):
    parts = [p.strip() for p in str(key).split(",")]
    if len(parts) != 2:
        raise TableauFormatError(f"bad block key {key!r}; expected 'q,m' or 'q,*'")
    try:
        q = int(parts[0])
    except ValueError:
        raise TableauFormatError(f"bad block key {key!r}") from None
    if parts[1] in ("*", "m"):
        return q, None
    try:
        return q, int(parts[1])
    except ValueError:
        raise TableauFormatError(f"bad block key {key!r}") from None


def parse_tableau(document, M: int | None = None) -> Tableau:
    """Build a tableau from a JSON document (text or already-decoded dict).

    ``M`` overrides the document's noise count when templates are used.
    """
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ExpressionSyntaxError(f"invalid JSON: {exc.msg}", line=exc.lineno,
                                        column=exc.colno) from None
    else:
        doc = dict(document)
    if not isinstance(doc, dict):
        raise TableauFormatError("tableau document must be a JSON object")
    if doc.get("format", 1) != 1:
        raise TableauFormatError(f"unsupported format {doc.get('format')!r}")
    for key in ("Q", "M", "s", "Z", "gamma"):
        if key not in doc:
            raise TableauFormatError(f"missing field {key!r}")
    Q, s = int(doc["Q"]), int(doc["s"])
    M = int(doc["M"]) if M is None else int(M)
    mode = Mode.parse(doc.get("mode", "strat"))
    name = str(doc.get("name", "tableau"))

    def blocks(section: str):
        explicit: dict[Block, Any] = {}
        template: dict[int, Any] = {}
        for key, value in doc[section].items():
            q, m = _parse_key(key, M)
            if not 1 <= q <= Q:
                raise TableauFormatError(f"{section} block {key!r} outside partitions 1..{Q}")
            if m is None:
                template[q] = value
            else:
                explicit[(q, m)] = value
        out = {}
        for q in range(1, Q + 1):
            for m in range(M + 1):
                if (q, m) in explicit:
                    out[(q, m)] = explicit[(q, m)]
                elif m >= 1 and q in template:
                    out[(q, m)] = template[q]
                else:
                    raise MissingBlockError(f"missing {section} block ({q},{m})")
        return out

    Z_src, g_src = blocks("Z"), blocks("gamma")
    Z: dict[Block, list] = {}
    gamma: dict[Block, list] = {}
    for (q, m), rows in Z_src.items():
        if not isinstance(rows, list) or len(rows) != s or \
                any(not isinstance(r, list) or len(r) != s for r in rows):
            raise DimensionError(f"Z block ({q},{m}) must be {s}x{s}", entry=(q, m))
        Z[(q, m)] = [[_check_entry(parse_expression(e, noise=m, M=M, entry=(q, m, i + 1, j + 1)),
                                   (q, m, i + 1, j + 1))
                      for j, e in enumerate(row)] for i, row in enumerate(rows)]
    for (q, m), vec in g_src.items():
        if not isinstance(vec, list) or len(vec) != s:
            raise DimensionError(f"gamma block ({q},{m}) must have {s} entries", entry=(q, m))
        gamma[(q, m)] = [_check_entry(parse_expression(e, noise=m, M=M, entry=(q, m, i + 1)),
                                      (q, m, i + 1))
                         for i, e in enumerate(vec)]
    source = dict(doc)
    source["M"] = M
    return Tableau(name, Q, M, s, Z, gamma, mode, source=source)


def load_tableau(path_or_name: str, M: int | None = None) -> Tableau:
    """A built-in name or a path to a JSON tableau file."""
    if path_or_name in BUILTIN_DOCUMENTS:
        return builtin(path_or_name, M=M)
    with open(path_or_name, encoding="utf-8") as fh:
        return parse_tableau(fh.read(), M=M)


# --------------------------------------------------------------------------
# built-in methods

_Z2 = [["0", "0"], ["0", "0"]]
_G2 = ["0", "0"]

_SV_LEFT = {
    "format": 1, "name": "sv_left", "Q": 2, "M": 1, "s": 2, "mode": "ito",
    "Z": {"1,0": [["0", "0"], ["h/2", "h/2"]], "1,*": _Z2,
          "2,0": [["0", "0"], ["h", "0"]], "2,*": [["0", "0"], ["dW[*]", "0"]]},
    "gamma": {"1,0": ["h/2", "h/2"], "1,*": _G2,
              "2,0": ["h/2", "h/2"], "2,*": ["dW[*]", "0"]},
}

_SV_RIGHT = {
    "format": 1, "name": "sv_right", "Q": 2, "M": 1, "s": 2, "mode": "ito",
    "Z": {"1,0": [["0", "0"], ["h/2", "h/2"]], "1,*": [["0", "0"], ["dW[*]/2", "dW[*]/2"]],
          "2,0": [["0", "0"], ["h", "0"]], "2,*": [["0", "0"], ["dW[*]", "0"]]},
    "gamma": {"1,0": ["h/2", "h/2"], "1,*": ["dW[*]/2", "dW[*]/2"],
              "2,0": ["h/2", "h/2"], "2,*": ["dW[*]/2", "dW[*]/2"]},
}

_SV_RIGHT_3 = {
    **_SV_RIGHT, "name": "sv_right_3part", "Q": 3,
    "Z": {**_SV_RIGHT["Z"], "3,0": _SV_RIGHT["Z"]["2,0"], "3,*": _Z2},
    "gamma": {**_SV_RIGHT["gamma"], "3,0": _SV_RIGHT["gamma"]["2,0"], "3,*": _G2},
}

_A = "3/2*J[*,0]/h - 1/2*dW[*]"
_B = "-3/2*J[*,0]/h + 3/2*dW[*]"
_MILSTEIN_15 = {
    "format": 1, "name": "milstein_15", "Q": 2, "M": 1, "s": 2, "mode": "strat",
    "Z": {"1,0": [["h/4", "0"], ["h/4", "3*h/4"]], "1,*": [[_A, "0"], [_A, _B]],
          "2,0": [["0", "0"], ["2*h/3", "0"]], "2,*": _Z2},
    "gamma": {"1,0": ["h/4", "3*h/4"], "1,*": [_A, _B],
              "2,0": ["2*h/3", "h/3"], "2,*": _G2},
}

_STORMER_VERLET = {
    "format": 1, "name": "stormer_verlet", "Q": 2, "M": 1, "s": 2, "mode": "strat",
    "Z": {"1,0": [["0", "0"], ["h/2", "h/2"]], "1,*": [["0", "0"], ["dW[*]/2", "dW[*]/2"]],
          "2,0": [["h/2", "0"], ["h/2", "0"]], "2,*": [["dW[*]/2", "0"], ["dW[*]/2", "0"]]},
    "gamma": {"1,0": ["h/2", "h/2"], "1,*": ["dW[*]/2", "dW[*]/2"],
              "2,0": ["h/2", "h/2"], "2,*": ["dW[*]/2", "dW[*]/2"]},
}

BUILTIN_DOCUMENTS: dict[str, dict] = {
    "sv_left": _SV_LEFT,
    "sv_right": _SV_RIGHT,
    "sv_right_3part": _SV_RIGHT_3,
    "milstein_15": _MILSTEIN_15,
    "stormer_verlet": _STORMER_VERLET,
}


def builtin(name: str, M: int | None = None) -> Tableau:
    """One of ``sv_left``, ``sv_right``, ``sv_right_3part``, ``milstein_15``,
    ``stormer_verlet``, instantiated for ``M`` noises (default 1)."""
    try:
        doc = BUILTIN_DOCUMENTS[name]
    except KeyError:
        raise KeyError(f"unknown built-in tableau {name!r}; choose from "
                       f"{', '.join(BUILTIN_DOCUMENTS)}") from None
    return parse_tableau(doc, M=M)


# --------------------------------------------------------------------------
# quadratic invariants


def check_quadratic_invariant(tab: Tableau) -> QIReport:
    """Test ``g1_i g2_j == g2_j Z1_ji + g1_i Z2_ij`` for all ``i, j, m1, m2``.

    Here ``g1 = gamma(1, m1)``, ``Z1 = Z(1, m1)``, ``g2 = gamma(2, m2)`` and
    ``Z2 = Z(2, m2)``.  Witness indices are 1-based.
    """
    if tab.Q != 2:
        raise ValueError(f"quadratic-invariant condition needs Q = 2, got Q = {tab.Q}")
    witnesses = []
    for m1 in range(tab.M + 1):
        g1, Z1 = tab.gamma[(1, m1)], tab.Z[(1, m1)]
        for m2 in range(tab.M + 1):
            g2, Z2 = tab.gamma[(2, m2)], tab.Z[(2, m2)]
            for i in range(tab.s):
                for j in range(tab.s):
                    residual = g1[i] * g2[j] - g2[j] * Z1[j][i] - g1[i] * Z2[i][j]
                    if not residual.is_zero():
                        witnesses.append(QIWitness(i + 1, j + 1, m1, m2, residual))
    return QIReport(not witnesses, witnesses)


def zero_tableau(Q: int = 2, M: int = 1, s: int = 2, name: str = "zero") -> Tableau:
    zero = AlgebraElement.zero()
    Z = {(q, m): [[zero] * s for _ in range(s)] for q in range(1, Q + 1) for m in range(M + 1)}
    g = {(q, m): [zero] * s for q in range(1, Q + 1) for m in range(M + 1)}
    return Tableau(name, Q, M, s, Z, g)


def constant_tableau(Z: Mapping[Block, Sequence[Sequence]], gamma: Mapping[Block, Sequence],
                     Q: int, M: int, s: int, name: str = "constant") -> Tableau:
    """Tableau with plain rational entries (useful for algebraic checks)."""
    c = AlgebraElement.const
    return Tableau(name, Q, M, s,
                   {b: [[c(Fraction(x)) for x in row] for row in rows] for b, rows in Z.items()},
                   {b: [c(Fraction(x)) for x in vec] for b, vec in gamma.items()})
