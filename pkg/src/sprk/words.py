"""Exact algebra of iterated Itô integrals over ``[0, h]``.

A word ``(w1, ..., wn)`` over ``{0, 1, ..., M}`` denotes the iterated Itô
integral ``I_w(h) = ∫ ... ∫ dW_{w1} ... dW_{wn}``, innermost letter first,
with letter 0 meaning ``dt``.  Products follow the Itô (quasi-shuffle)
rule; a bracket between two equal nonzero letters produces a ``dt``.

:class:`AlgebraElement` stores exact rational combinations of
``h**k * I_w`` in a canonical basis: ``k`` is any integer and ``w`` is either
empty or starts with a nonzero letter.  Every other word is rewritten using
``h**k / k! * I_u = I_{0^k} ⧢ I_u``, which is unique because the algebra is
free over the Laurent polynomials in ``h`` with that basis.  Canonical form
makes equality of random variables decidable by comparing term maps and
makes expectations trivial (only the empty word has nonzero mean).
"""

from __future__ import annotations

import math
from collections import defaultdict
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Union

import numpy as np

Word = tuple[int, ...]
Key = tuple[int, Word]
Rational = Union[int, Fraction]

INF = math.inf


def word_order(w: Word) -> Fraction:
    """Grade of ``I_w``: 1 per ``dt`` letter, 1/2 per noise letter."""
    return Fraction(sum(2 if a == 0 else 1 for a in w), 2)


# --------------------------------------------------------------------------
# raw word level (no h factors): used for processes such as integrands


def _merge(acc: dict, items: Iterable[tuple[Word, Fraction]], scale: Rational = 1):
    for w, c in items:
        acc[w] = acc.get(w, 0) + scale * c


def _pruned(acc: dict) -> tuple[tuple[Word, Fraction], ...]:
    return tuple(sorted((w, Fraction(c)) for w, c in acc.items() if c != 0))


@lru_cache(maxsize=None)
def raw_quasi_shuffle(u: Word, v: Word) -> tuple[tuple[Word, Fraction], ...]:
    """Itô product ``I_u * I_v`` as a raw word sum.

    Uses ``I(u·a) I(v·b) = [I(u·a) I(v)]·b + [I(u) I(v·b)]·a
    + [a == b != 0] [I(u) I(v)]·0``.
    """
    if not u:
        return ((v, Fraction(1)),)
    if not v:
        return ((u, Fraction(1)),)
    if u > v:
        return raw_quasi_shuffle(v, u)
    u0, a = u[:-1], u[-1]
    v0, b = v[:-1], v[-1]
    acc: dict[Word, Fraction] = {}
    _merge(acc, ((w + (b,), c) for w, c in raw_quasi_shuffle(u, v0)))
    _merge(acc, ((w + (a,), c) for w, c in raw_quasi_shuffle(u0, v)))
    if a == b != 0:
        _merge(acc, ((w + (0,), c) for w, c in raw_quasi_shuffle(u0, v0)))
    return _pruned(acc)


def raw_product(x: Mapping[Word, Fraction], y: Mapping[Word, Fraction]) -> dict[Word, Fraction]:
    acc: dict[Word, Fraction] = {}
    for u, cu in x.items():
        for v, cv in y.items():
            _merge(acc, raw_quasi_shuffle(u, v), cu * cv)
    return {w: c for w, c in acc.items() if c != 0}


@lru_cache(maxsize=None)
def _normalize_word(w: Word) -> tuple[tuple[Key, Fraction], ...]:
    k = 0
    while k < len(w) and w[k] == 0:
        k += 1
    if k == 0:
        return (((0, w), Fraction(1)),)
    u = w[k:]
    # I_{0^k} ⧢ I_u = I_{0^k u} + (words with fewer leading zeros)
    acc: dict[Key, Fraction] = {(k, u): Fraction(1, math.factorial(k))}
    for other, c in raw_quasi_shuffle((0,) * k, u):
        if other == w:
            if c != 1:  # pragma: no cover - the leading-zero interleaving is unique
                raise AssertionError(f"unexpected multiplicity for {w}")
            continue
        for key, d in _normalize_word(other):
            acc[key] = acc.get(key, 0) - c * d
    return tuple(sorted((key, Fraction(c)) for key, c in acc.items() if c != 0))


def raw_to_element(x: Mapping[Word, Fraction]) -> AlgebraElement:
    acc: dict[Key, Fraction] = {}
    for w, c in x.items():
        for key, d in _normalize_word(w):
            acc[key] = acc.get(key, 0) + c * d
    return AlgebraElement(acc)


def element_to_raw(a: AlgebraElement) -> dict[Word, Fraction]:
    """Rewrite ``h**k I_w`` as ``k! I_{0^k} ⧢ I_w``; requires ``k >= 0``."""
    acc: dict[Word, Fraction] = {}
    for (k, w), c in a.terms.items():
        if k < 0:
            raise ValueError("negative powers of h have no raw word form")
        _merge(acc, raw_quasi_shuffle((0,) * k, w), c * math.factorial(k))
    return {w: c for w, c in acc.items() if c != 0}


def append_letter(x: Mapping[Word, Fraction], letter: int, stratonovich: bool = False
                  ) -> dict[Word, Fraction]:
    """Integrate the process ``x`` against ``dW_letter`` (raw words).

    In Stratonovich mode the quadratic covariation correction
    ``1/2 d<x, W_letter>`` is added: every word ending in ``letter != 0``
    contributes half of itself with that last letter replaced by ``dt``.
    """
    acc: dict[Word, Fraction] = {}
    for w, c in x.items():
        acc[w + (letter,)] = acc.get(w + (letter,), 0) + c
        if stratonovich and letter != 0 and w and w[-1] == letter:
            key = w[:-1] + (0,)
            acc[key] = acc.get(key, 0) + c / 2
    return {w: c for w, c in acc.items() if c != 0}


# --------------------------------------------------------------------------
# canonical elements


class AlgebraElement:
    """Exact rational combination of ``h**k * I_w`` in canonical form.

    Supports ``+``, ``-``, ``*`` (with elements or rationals), ``/`` by
    rationals, equality and hashing.  Instances are immutable.
    """

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Key, Rational] | None = None):
        clean = {}
        for (k, w), c in (terms or {}).items():
            if c == 0:
                continue
            w = tuple(w)
            if w and w[0] == 0:
                raise ValueError(f"word {w} is not canonical; use AlgebraElement.word()")
            clean[(int(k), w)] = Fraction(c)
        self._terms = dict(sorted(clean.items()))
        self._hash = None

    # constructors -------------------------------------------------------

    @classmethod
    def zero(cls) -> AlgebraElement:
        return cls()

    @classmethod
    def one(cls) -> AlgebraElement:
        return cls({(0, ()): 1})

    @classmethod
    def const(cls, c: Rational) -> AlgebraElement:
        return cls({(0, ()): c})

    @classmethod
    def h(cls, power: int = 1) -> AlgebraElement:
        return cls({(power, ()): 1})

    @classmethod
    def word(cls, w: Iterable[int]) -> AlgebraElement:
        """``I_w`` for an arbitrary word, brought to canonical form."""
        return raw_to_element({tuple(w): Fraction(1)})

    @classmethod
    def dW(cls, m: int) -> AlgebraElement:
        return cls.word((m,))

    @classmethod
    def J(cls, m: int) -> AlgebraElement:
        """``J_(m,0) = ∫ (W_m(s) - W_m(0)) ds``."""
        return cls.word((m, 0))

    # access -------------------------------------------------------------

    @property
    def terms(self) -> dict[Key, Fraction]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def orders(self) -> set[Fraction]:
        return {k + word_order(w) for k, w in self._terms}

    def min_hshift(self) -> int:
        return min((k for k, _ in self._terms), default=0)

    def letters(self) -> set[int]:
        return {a for _, w in self._terms for a in w}

    def constant_value(self) -> Fraction | None:
        """The rational value if the element is a plain constant."""
        if not self._terms:
            return Fraction(0)
        if list(self._terms) == [(0, ())]:
            return self._terms[(0, ())]
        return None

    # arithmetic ---------------------------------------------------------

    @staticmethod
    def _coerce(x) -> AlgebraElement:
        if isinstance(x, AlgebraElement):
            return x
        if isinstance(x, (int, Fraction)):
            return AlgebraElement.const(x)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        acc = dict(self._terms)
        for key, c in other._terms.items():
            acc[key] = acc.get(key, 0) + c
        return AlgebraElement(acc)

    __radd__ = __add__

    def __neg__(self):
        return AlgebraElement({key: -c for key, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other - self

    def scale(self, c: Rational) -> AlgebraElement:
        return AlgebraElement({key: c * v for key, v in self._terms.items()})

    def h_shift(self, k: int) -> AlgebraElement:
        """Multiply by ``h**k`` (``k`` may be negative)."""
        return AlgebraElement({(s + k, w): c for (s, w), c in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        if not isinstance(other, AlgebraElement):
            return NotImplemented
        return mul(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(Fraction(1) / Fraction(other))
        return NotImplemented

    def __pow__(self, n: int):
        result = AlgebraElement.one()
        for _ in range(n):
            result = result * self
        return result

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = AlgebraElement.const(other)
        if not isinstance(other, AlgebraElement):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(self._terms.items()))
        return self._hash

    def __repr__(self):
        return f"AlgebraElement({format_element(self)!r})"

    def __str__(self):
        return format_element(self)


def mul(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    """Product: quasi-shuffle of words, sum of h-shifts."""
    acc: dict[Key, Fraction] = {}
    for (ka, wa), ca in a.items():
        for (kb, wb), cb in b.items():
            c = ca * cb
            for w, d in raw_quasi_shuffle(wa, wb):
                for (k, u), e in _normalize_word(w):
                    key = (k + ka + kb, u)
                    acc[key] = acc.get(key, 0) + c * d * e
    return AlgebraElement(acc)


def add(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    return a + b


def negate(a: AlgebraElement) -> AlgebraElement:
    return -a


def scale(a: AlgebraElement, c: Rational) -> AlgebraElement:
    return a.scale(c)


def h_shift(a: AlgebraElement, k: int) -> AlgebraElement:
    return a.h_shift(k)


def quasi_shuffle(u: Iterable[int], v: Iterable[int]) -> AlgebraElement:
    """Canonical form of the Itô product ``I_u * I_v``."""
    return raw_to_element(dict(raw_quasi_shuffle(tuple(u), tuple(v))))


@lru_cache(maxsize=None)
def _strat_raw(w: Word) -> tuple[tuple[Word, Fraction], ...]:
    if not w:
        return (((), Fraction(1)),)
    inner = dict(_strat_raw(w[:-1]))
    return _pruned(append_letter(inner, w[-1], stratonovich=True))


def strat_to_ito(w: Iterable[int]) -> AlgebraElement:
    """Itô form of the iterated Stratonovich integral over the word ``w``."""
    return raw_to_element(dict(_strat_raw(tuple(w))))


# --------------------------------------------------------------------------
# expectations


class HPolynomial:
    """Finite map from (half-integer) powers of ``h`` to rationals."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Mapping | None = None):
        self.coeffs = {Fraction(e): Fraction(c) for e, c in (coeffs or {}).items() if c != 0}
        self.coeffs = dict(sorted(self.coeffs.items()))

    def __add__(self, other: HPolynomial) -> HPolynomial:
        acc = dict(self.coeffs)
        for e, c in other.coeffs.items():
            acc[e] = acc.get(e, 0) + c
        return HPolynomial(acc)

    def __neg__(self) -> HPolynomial:
        return HPolynomial({e: -c for e, c in self.coeffs.items()})

    def __sub__(self, other: HPolynomial) -> HPolynomial:
        return self + (-other)

    def __eq__(self, other):
        if isinstance(other, HPolynomial):
            return self.coeffs == other.coeffs
        if isinstance(other, (int, Fraction)):
            return self.coeffs == HPolynomial({0: other}).coeffs
        return NotImplemented

    def __hash__(self):
        return hash(tuple(self.coeffs.items()))

    def __call__(self, h: float) -> float:
        return float(sum(float(c) * h ** float(e) for e, c in self.coeffs.items()))

    def is_zero(self) -> bool:
        return not self.coeffs

    def __repr__(self):
        return f"HPolynomial({self})"

    def __str__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for e, c in self.coeffs.items():
            parts.append(_monomial(c, "h" if e == 1 else (f"h^{e}" if e else "")))
        return _join(parts)


def expectation(a: AlgebraElement) -> HPolynomial:
    """``E[a]``: only constant-word terms survive in canonical form."""
    return HPolynomial({k: c for (k, w), c in a.items() if not w})


@lru_cache(maxsize=None)
def _pair_moment(u: Word, v: Word) -> Fraction:
    """Coefficient ``c`` of ``E[I_u I_v] = c h^n`` (n fixed by grading)."""
    if not u and not v:
        return Fraction(1)
    if not u or not v:
        w = u or v
        if any(w):
            return Fraction(0)
        return Fraction(1, math.factorial(len(w)))
    if u > v:
        return _pair_moment(v, u)
    n = word_order(u) + word_order(v)  # integer whenever the moment is nonzero
    total = Fraction(0)
    a, b = u[-1], v[-1]
    if a == b != 0:
        total += _pair_moment(u[:-1], v[:-1])
    if a == 0:
        total += _pair_moment(u[:-1], v)
    if b == 0:
        total += _pair_moment(u, v[:-1])
    return total / n if total else Fraction(0)


def expect_product(a: AlgebraElement, b: AlgebraElement) -> HPolynomial:
    """``E[a b]`` without forming the product."""
    acc: dict[Fraction, Fraction] = defaultdict(Fraction)
    for (ka, wa), ca in a.items():
        for (kb, wb), cb in b.items():
            m = _pair_moment(wa, wb)
            if m:
                acc[ka + kb + word_order(wa) + word_order(wb)] += ca * cb * m
    return HPolynomial(acc)


def leading_order(p: HPolynomial):
    """Smallest exponent with a nonzero coefficient; ``inf`` for zero."""
    return min(p.coeffs, default=INF)


# --------------------------------------------------------------------------
# printing


def _word_symbol(w: Word) -> str:
    if not w:
        return ""
    if len(w) == 1:
        return f"W[{w[0]}]"
    if len(w) == 2 and w[1] == 0 and w[0] != 0:
        return f"J[{w[0]},0]"
    return "I[" + ",".join(map(str, w)) + "]"


def _monomial(c: Fraction, body: str) -> str:
    if not body:
        return str(c)
    if c == 1:
        return body
    if c == -1:
        return "-" + body
    return f"{c}*{body}"


def _join(parts: list[str]) -> str:
    out = parts[0]
    for p in parts[1:]:
        out += " - " + p[1:] if p.startswith("-") else " + " + p
    return out


def format_element(a: AlgebraElement) -> str:
    """E.g. ``3/2*h^-1*J[1,0] - 1/2*W[1]``."""
    if a.is_zero():
        return "0"
    parts = []
    for (k, w), c in sorted(a.items(), key=lambda kv: (kv[0][0] + word_order(kv[0][1]),
                                                        kv[0][0], kv[0][1])):
        factors = []
        if k:
            factors.append("h" if k == 1 else f"h^{k}")
        if w:
            factors.append(_word_symbol(w))
        parts.append(_monomial(c, "*".join(factors)))
    return _join(parts)


def format_raw(x: Mapping[Word, Fraction]) -> str:
    """Raw word sum, e.g. ``2*(1,1) + (0)``."""
    if not x:
        return "0"
    return _join([_monomial(c, "(" + ",".join(map(str, w)) + ")") for w, c in sorted(x.items())])


# --------------------------------------------------------------------------
# Monte Carlo oracle

MC_BLOCK = 2048


def _simulate_words(words: set[Word], h: float, grid: int, n: int, M: int,
                    rng: np.random.Generator) -> dict[Word, np.ndarray]:
    dt = h / grid
    dW = {m: rng.standard_normal((n, grid)) * math.sqrt(dt) for m in range(1, M + 1)}
    incr = lambda a: dW[a] if a else dt  # noqa: E731
    prefixes = sorted({w[:i] for w in words for i in range(1, len(w) + 1)}, key=len)
    # path of I_prefix evaluated at the left grid points t_0..t_{grid-1}
    left: dict[Word, np.ndarray] = {(): np.ones((n, grid))}
    final: dict[Word, np.ndarray] = {(): np.ones(n)}
    for p in prefixes:
        steps = left[p[:-1]] * incr(p[-1])
        cum = np.cumsum(steps, axis=1)
        final[p] = cum[:, -1]
        left[p] = np.concatenate([np.zeros((n, 1)), cum[:, :-1]], axis=1)
    return {w: final[w] for w in words}


def mc_oracle(a: AlgebraElement, h: float, paths: int = 100_000, grid: int = 1024,
              seed: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate of ``E[a]`` with its standard error.

    Each word is simulated by left-point (Itô) Riemann sums on a uniform grid
    over one Wiener path per noise index.  Paths are processed in blocks of
    fixed size, each with its own substream derived from ``(seed, block)``,
    so results do not depend on how blocks are scheduled.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if grid < 64:
        raise ValueError("grid must be at least 64")
    words = {w for _, w in a.terms}
    M = max(a.letters(), default=0)
    total = 0.0
    total_sq = 0.0
    done = 0
    block = 0
    while done < paths:
        n = min(MC_BLOCK, paths - done)
        rng = np.random.default_rng([seed, block])
        sims = _simulate_words(words, h, grid, n, M, rng)
        value = np.zeros(n)
        for (k, w), c in a.items():
            value += float(c) * h**k * sims[w]
        total += math.fsum(value)
        total_sq += math.fsum(value * value)
        done += n
        block += 1
    mean = total / paths
    var = max(total_sq / paths - mean * mean, 0.0)
    return mean, math.sqrt(var / max(paths - 1, 1))
