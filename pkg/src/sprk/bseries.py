"""Elementary weight functions of the exact and the numerical solution.

``phi(t, mode)`` is the exact-solution weight: a leaf ``(q, m)`` gives
``ΔW_m`` and a node integrates the product of its children's weights
against ``dW_m`` (Itô or Stratonovich).  ``Phi`` and ``Psi`` are the weights
of an SPRK method, finite sums of products of tableau coefficients.  All
results are exact :class:`~sprk.words.AlgebraElement` values.

Expansions are taken around ``t = 0`` over a single step.
"""

from __future__ import annotations

import enum
import weakref
from fractions import Fraction
from functools import lru_cache
from typing import TYPE_CHECKING

from .trees import Tree, butcher_product
from .words import AlgebraElement, Word, append_letter, mul, raw_product, raw_to_element

if TYPE_CHECKING:
    from .tableau import Tableau


class Mode(str, enum.Enum):
    ITO = "ito"
    STRATONOVICH = "strat"

    @classmethod
    def parse(cls, value) -> Mode:
        if isinstance(value, Mode):
            return value
        v = str(value).lower()
        if v in ("ito", "itô", "i"):
            return cls.ITO
        if v in ("strat", "stratonovich", "s"):
            return cls.STRATONOVICH
        raise ValueError(f"unknown mode {value!r}")


ITO = Mode.ITO
STRAT = Mode.STRATONOVICH


@lru_cache(maxsize=None)
def _phi_raw(t: Tree, mode: Mode) -> tuple[tuple[Word, Fraction], ...]:
    integrand: dict[Word, Fraction] = {(): Fraction(1)}
    for c in t.children:
        integrand = raw_product(integrand, dict(_phi_raw(c, mode)))
    result = append_letter(integrand, t.color, stratonovich=mode is Mode.STRATONOVICH)
    return tuple(sorted(result.items()))


@lru_cache(maxsize=None)
def _phi(t: Tree, mode: Mode) -> AlgebraElement:
    return raw_to_element(dict(_phi_raw(t, mode)))


def phi(t: Tree, mode=Mode.STRATONOVICH) -> AlgebraElement:
    """Exact-solution weight of ``t`` as an Itô-form element."""
    return _phi(t, Mode.parse(mode))


class TableauRangeError(ValueError):
    """A tree uses a shape or noise index the tableau does not define."""


class WeightCache:
    """Memoized ``Psi_i`` and ``Phi`` for one tableau."""

    def __init__(self, tab: Tableau):
        self.tab = tab
        self._psi: dict[Tree, tuple[AlgebraElement, ...]] = {}
        self._Phi: dict[Tree, AlgebraElement] = {}

    def _check(self, t: Tree):
        if t.shape > self.tab.Q or t.color > self.tab.M:
            raise TableauRangeError(
                f"node ({t.shape},{t.color}) outside tableau range Q={self.tab.Q}, M={self.tab.M}")

    def _child_products(self, t: Tree) -> list[AlgebraElement]:
        s = self.tab.s
        prods = [AlgebraElement.one() for _ in range(s)]
        for c in t.children:
            psi_c = self.psi_vector(c)
            prods = [mul(prods[j], psi_c[j]) for j in range(s)]
        return prods

    def psi_vector(self, t: Tree) -> tuple[AlgebraElement, ...]:
        """``(Psi_1(t), ..., Psi_s(t))``."""
        cached = self._psi.get(t)
        if cached is not None:
            return cached
        self._check(t)
        Z = self.tab.Z[(t.shape, t.color)]
        prods = self._child_products(t)
        s = self.tab.s
        out = []
        for i in range(s):
            acc = AlgebraElement.zero()
            for j in range(s):
                if Z[i][j]:
                    acc = acc + mul(Z[i][j], prods[j])
            out.append(acc)
        result = tuple(out)
        self._psi[t] = result
        return result

    def Psi(self, i: int, t: Tree) -> AlgebraElement:
        """Stage weight, stage index ``i`` counted from 1."""
        return self.psi_vector(t)[i - 1]

    def Phi(self, t: Tree) -> AlgebraElement:
        cached = self._Phi.get(t)
        if cached is not None:
            return cached
        self._check(t)
        gamma = self.tab.gamma[(t.shape, t.color)]
        prods = self._child_products(t)
        acc = AlgebraElement.zero()
        for i, g in enumerate(gamma):
            if g:
                acc = acc + mul(g, prods[i])
        self._Phi[t] = acc
        return acc


_caches: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def weights(tab: Tableau) -> WeightCache:
    """Shared per-tableau cache; equal tableaux share one entry."""
    cache = _caches.get(tab)
    if cache is None:
        cache = _caches[tab] = WeightCache(tab)
    return cache


def Phi(t: Tree, tab: Tableau) -> AlgebraElement:
    """Numerical-solution weight of ``t`` for the method ``tab``."""
    return weights(tab).Phi(t)


def Psi(i: int, t: Tree, tab: Tableau) -> AlgebraElement:
    """Weight of ``t`` in stage ``i`` (1-based)."""
    return weights(tab).Psi(i, t)


def phi_product_identity_check(u: Tree, v: Tree, mode=Mode.STRATONOVICH) -> bool:
    """Whether ``phi(u) phi(v) == phi(u∘v) + phi(v∘u)`` holds exactly."""
    mode = Mode.parse(mode)
    lhs = phi(u, mode) * phi(v, mode)
    rhs = phi(butcher_product(u, v), mode) + phi(butcher_product(v, u), mode)
    return lhs == rhs


def Phi_product_identity_check(u: Tree, v: Tree, tab: Tableau) -> bool:
    """Numerical analogue: ``Phi(u) Phi(v) == Phi(u∘v) + Phi(v∘u)``."""
    w = weights(tab)
    return w.Phi(u) * w.Phi(v) == w.Phi(butcher_product(u, v)) + w.Phi(butcher_product(v, u))
