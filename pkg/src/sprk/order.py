"""Strong and weak order verdicts for SPRK tableaux.

For ``Δ(τ) = Φ(τ) - φ(τ)`` the method has mean-square order ``p`` when

* ``E[Δ(τ)²] = O(h^(2p+1))`` for every tree with ``ρ(τ) <= p``, and
* ``E[Δ(τ)] = O(h^(p+1))`` for every tree with ``ρ(τ) <= p + 1/2``,

given that ``Φ(τ) = O(h^ρ(τ))``.  It has weak order ``p`` when
``E[∏Φ(τ_k)] - E[∏φ(τ_k)] = O(h^(p+1))`` for every multiset of trees with
``Σρ(τ_k) <= p + 1/2``.  All quantities are exact rationals; orders are
checked at each half-integer level up to the target so a maximal passed
order can be reported.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .bseries import Mode, phi, weights
from .tableau import Tableau, check_quadratic_invariant
from .trees import (DEFAULT_TREE_CAP, Tree, enumerate_trees, filter_additive, filter_separable,
                    qi_representatives, reference_row, to_bracket)
from .words import AlgebraElement, HPolynomial, expect_product, expectation, leading_order, mul

INF = math.inf
HALF = Fraction(1, 2)
MAX_WEAK_ORDER = Fraction(2)
DEFAULT_MULTISET_CAP = 2_000_000


class OrderCheckError(ValueError):
    pass


class QIHypothesisError(OrderCheckError):
    """Class reduction requested for a tableau or mode where it is not valid."""


class MultisetCapExceeded(RuntimeError):
    def __init__(self, message: str, estimate: int):
        self.estimate = estimate
        super().__init__(message)


def _fmt_order(x) -> str:
    return "inf" if x == INF else str(x)


def _half_levels(p: Fraction) -> list[Fraction]:
    return [Fraction(k, 2) for k in range(1, int(2 * p) + 1)]


def as_order(p) -> Fraction:
    """Parse a target order (``1.5``, ``"3/2"``); must be a positive half-integer."""
    f = Fraction(str(p)) if not isinstance(p, Fraction) else p
    if f < HALF or (2 * f).denominator != 1:
        raise OrderCheckError(f"order must be a half-integer >= 1/2, got {p}")
    return f


# --------------------------------------------------------------------------
# tree filters


class FilterKind(str, enum.Enum):
    ALL = "all"
    SEPARABLE = "separable"
    ADDITIVE3 = "additive3"
    QI = "qi"


@dataclass(frozen=True)
class TreeFilter:
    """Structural pruning of the tree set.

    ``noisy`` is the set of partitions carrying noise for the separable and
    qi filters; ``None`` means "infer from the tableau" (partitions with a
    nonzero stochastic block), or all partitions when no tableau is given.
    """

    kind: FilterKind = FilterKind.ALL
    noisy: frozenset[int] | None = None

    @classmethod
    def parse(cls, text: str | None) -> TreeFilter:
        """``all``, ``additive3``, ``qi``, ``separable`` or ``separable:1,2``."""
        if text is None or text == "":
            return cls()
        name, _, rest = str(text).partition(":")
        try:
            kind = FilterKind(name.strip().lower())
        except ValueError:
            raise OrderCheckError(f"unknown tree filter {text!r}") from None
        noisy = None
        if rest:
            if kind not in (FilterKind.SEPARABLE, FilterKind.QI):
                raise OrderCheckError(f"filter {name!r} takes no partition list")
            try:
                noisy = frozenset(int(x) for x in rest.split(",") if x.strip())
            except ValueError:
                raise OrderCheckError(f"bad partition list in {text!r}") from None
        return cls(kind, noisy)

    def __str__(self) -> str:
        if self.noisy is not None:
            return f"{self.kind.value}:{','.join(map(str, sorted(self.noisy)))}"
        return self.kind.value

    def noisy_partitions(self, Q: int, tab: Tableau | None = None) -> frozenset[int]:
        if self.noisy is not None:
            return self.noisy
        if tab is None:
            return frozenset(range(1, Q + 1))
        return noisy_partitions_of(tab)

    def apply(self, trees: Iterable[Tree], Q: int, tab: Tableau | None = None) -> list[Tree]:
        trees = list(trees)
        if self.kind is FilterKind.ALL:
            return trees
        if self.kind is FilterKind.ADDITIVE3:
            return filter_additive(trees)
        sep = filter_separable(trees, self.noisy_partitions(Q, tab))
        if self.kind is FilterKind.SEPARABLE:
            return sep
        return qi_representatives(sep)


def noisy_partitions_of(tab: Tableau) -> frozenset[int]:
    """Partitions ``q`` with some nonzero ``Z(q, m)`` or ``gamma(q, m)``, ``m >= 1``."""
    out = set()
    for (q, m) in tab.blocks():
        if m and (any(e for row in tab.Z[(q, m)] for e in row) or any(tab.gamma[(q, m)])):
            out.add(q)
    return frozenset(out)


def reduce_by_qi(trees: Iterable[Tree], tab: Tableau, mode=Mode.STRATONOVICH) -> list[Tree]:
    """One representative per root-shift class, after checking the hypotheses."""
    if Mode.parse(mode) is not Mode.STRATONOVICH:
        raise QIHypothesisError("class reduction is only valid in Stratonovich mode")
    rep = check_quadratic_invariant(tab)
    if not rep.holds:
        raise QIHypothesisError(
            f"tableau {tab.name!r} violates the quadratic-invariant condition "
            f"({len(rep.witnesses)} witnesses); no reduction")
    return qi_representatives(trees)


# --------------------------------------------------------------------------
# query and report


class CheckKind(str, enum.Enum):
    STRONG = "strong"
    WEAK = "weak"
    BOTH = "both"


@dataclass(frozen=True)
class OrderQuery:
    tableau: Tableau
    p: Fraction
    mode: Mode | None = None
    tree_filter: TreeFilter = field(default_factory=TreeFilter)
    kind: CheckKind = CheckKind.STRONG
    cap: int = DEFAULT_TREE_CAP
    multiset_cap: int = DEFAULT_MULTISET_CAP

    def __post_init__(self):
        object.__setattr__(self, "p", as_order(self.p))
        object.__setattr__(self, "mode", Mode.parse(self.mode or self.tableau.mode))
        object.__setattr__(self, "kind", CheckKind(self.kind))
        if isinstance(self.tree_filter, str):
            object.__setattr__(self, "tree_filter", TreeFilter.parse(self.tree_filter))
        if self.tree_filter.kind is FilterKind.QI:
            if self.mode is not Mode.STRATONOVICH:
                raise QIHypothesisError("the qi filter requires Stratonovich mode")
            if self.tableau.Q != 2:
                raise QIHypothesisError("the qi filter requires Q = 2")
            if not check_quadratic_invariant(self.tableau).holds:
                raise QIHypothesisError(
                    f"tableau {self.tableau.name!r} violates the quadratic-invariant condition")


@dataclass(frozen=True)
class TreeRecord:
    tree: Tree
    rho: Fraction
    row: int | None
    l2_order: Fraction | float
    mean_order: Fraction | float
    l2_required: Fraction | None
    mean_required: Fraction | None

    @property
    def l2_pass(self) -> bool | None:
        return None if self.l2_required is None else self.l2_order >= self.l2_required

    @property
    def mean_pass(self) -> bool | None:
        return None if self.mean_required is None else self.mean_order >= self.mean_required

    @property
    def passed(self) -> bool:
        return self.l2_pass is not False and self.mean_pass is not False

    def to_dict(self) -> dict:
        return {"tree": to_bracket(self.tree), "rho": str(self.rho), "row": self.row,
                "l2_order": _fmt_order(self.l2_order), "mean_order": _fmt_order(self.mean_order),
                "l2_required": None if self.l2_required is None else str(self.l2_required),
                "mean_required": None if self.mean_required is None else str(self.mean_required),
                "l2_pass": self.l2_pass, "mean_pass": self.mean_pass, "pass": self.passed}


@dataclass(frozen=True)
class MultisetRecord:
    trees: tuple[Tree, ...]
    rho: Fraction
    order: Fraction | float
    required: Fraction

    @property
    def passed(self) -> bool:
        return self.order >= self.required

    def to_dict(self) -> dict:
        return {"trees": [to_bracket(t) for t in self.trees], "rho": str(self.rho),
                "order": _fmt_order(self.order), "required": str(self.required),
                "pass": self.passed}


@dataclass
class OrderReport:
    tableau: str
    mode: Mode
    p: Fraction
    tree_filter: str
    kind: CheckKind
    strong_records: list[TreeRecord] = field(default_factory=list)
    weak_records: list[MultisetRecord] = field(default_factory=list)
    strong_levels: dict[Fraction, bool] = field(default_factory=dict)
    weak_levels: dict[Fraction, bool] = field(default_factory=dict)
    growth_violations: list[Tree] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @staticmethod
    def _max_level(levels: dict[Fraction, bool]) -> Fraction:
        best = Fraction(0)
        for lvl in sorted(levels):
            if not levels[lvl]:
                break
            best = lvl
        return best

    @property
    def max_strong(self) -> Fraction | None:
        return self._max_level(self.strong_levels) if self.strong_levels else None

    @property
    def max_weak(self) -> Fraction | None:
        return self._max_level(self.weak_levels) if self.weak_levels else None

    @property
    def strong_passed(self) -> bool | None:
        return None if self.max_strong is None else self.max_strong >= self.p

    @property
    def weak_passed(self) -> bool | None:
        return None if self.max_weak is None else self.max_weak >= self.p

    @property
    def passed(self) -> bool:
        return self.strong_passed is not False and self.weak_passed is not False

    def strong_witnesses(self) -> list[TreeRecord]:
        return [r for r in self.strong_records if not r.passed]

    def weak_witnesses(self) -> list[MultisetRecord]:
        return [r for r in self.weak_records if not r.passed]

    def to_dict(self) -> dict:
        lv = lambda d: {str(k): v for k, v in sorted(d.items())}
        opt = lambda x: None if x is None else str(x)
        return {
            "tableau": self.tableau, "mode": self.mode.value, "p": str(self.p),
            "filter": self.tree_filter, "kind": self.kind.value, "passed": self.passed,
            "max_strong_order": opt(self.max_strong), "max_weak_order": opt(self.max_weak),
            "strong_levels": lv(self.strong_levels), "weak_levels": lv(self.weak_levels),
            "strong": [r.to_dict() for r in self.strong_records],
            "strong_witnesses": [to_bracket(r.tree) for r in self.strong_witnesses()],
            "weak_failures": [r.to_dict() for r in self.weak_witnesses()],
            "weak_checked": len(self.weak_records),
            "growth_violations": [to_bracket(t) for t in self.growth_violations],
            "notes": list(self.notes),
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def format_text(self) -> str:
        out = [f"tableau {self.tableau}  mode {self.mode.value}  filter {self.tree_filter}  "
               f"target p={self.p}"]
        if self.strong_records:
            out.append("")
            out.append(f"{'No':>3}  {'rho':>4}  {'L2':>5} {'req':>4}  {'mean':>5} {'req':>4}  "
                       f"{'ok':>4}  tree")
            for r in self.strong_records:
                out.append(
                    f"{r.row if r.row is not None else '-':>3}  {str(r.rho):>4}  "
                    f"{_fmt_order(r.l2_order):>5} {str(r.l2_required or '-'):>4}  "
                    f"{_fmt_order(r.mean_order):>5} {str(r.mean_required or '-'):>4}  "
                    f"{'yes' if r.passed else 'NO':>4}  {to_bracket(r.tree)}")
        if self.strong_levels:
            out.append("strong levels: " + ", ".join(
                f"{k}:{'pass' if v else 'fail'}" for k, v in sorted(self.strong_levels.items())))
            out.append(f"max strong order: {self.max_strong}")
        if self.weak_levels:
            out.append(f"weak multisets checked: {len(self.weak_records)}")
            for r in self.weak_witnesses()[:20]:
                out.append(f"  weak fail: {{{', '.join(to_bracket(t) for t in r.trees)}}} "
                           f"order {_fmt_order(r.order)} < {r.required}")
            out.append("weak levels: " + ", ".join(
                f"{k}:{'pass' if v else 'fail'}" for k, v in sorted(self.weak_levels.items())))
            out.append(f"max weak order: {self.max_weak}")
        if self.growth_violations:
            out.append("growth premise violated by: " +
                       ", ".join(to_bracket(t) for t in self.growth_violations))
        out.extend(f"note: {n}" for n in self.notes)
        out.append("PASS" if self.passed else "FAIL")
        return "\n".join(out)


# --------------------------------------------------------------------------
# strong conditions


def _delta(t: Tree, tab: Tableau, mode: Mode) -> AlgebraElement:
    return weights(tab).Phi(t) - phi(t, mode)


def tree_orders(t: Tree, tab: Tableau, mode=Mode.STRATONOVICH):
    """``(leading order of E[Δ²], leading order of E[Δ])`` for one tree."""
    d = _delta(t, tab, Mode.parse(mode))
    return leading_order(expect_product(d, d)), leading_order(expectation(d))


def _strong_level_ok(rho: Fraction, l2, mean, level: Fraction) -> bool:
    if rho <= level and l2 < 2 * level + 1:
        return False
    if rho <= level + HALF and mean < level + 1:
        return False
    return True


def _query_trees(query: OrderQuery, max_order: Fraction) -> list[Tree]:
    tab = query.tableau
    trees = enumerate_trees(tab.Q, tab.M, max_order, cap=query.cap)
    return query.tree_filter.apply(trees, tab.Q, tab)


def check_strong(query: OrderQuery) -> OrderReport:
    """Mean-square order check at every half-integer level up to ``query.p``."""
    tab, mode, p = query.tableau, query.mode, query.p
    report = OrderReport(tab.name, mode, p, str(query.tree_filter), CheckKind.STRONG)
    trees = _query_trees(query, p + HALF)
    orders = {}
    for t in trees:
        orders[t] = tree_orders(t, tab, mode)
        rho = t.order
        report.strong_records.append(TreeRecord(
            t, rho, reference_row(t), *orders[t],
            l2_required=2 * p + 1 if rho <= p else None, mean_required=p + 1))
    for level in _half_levels(p):
        report.strong_levels[level] = all(
            _strong_level_ok(t.order, *orders[t], level) for t in trees if t.order <= level + HALF)
    _growth_premise(query, p + 1, report)
    if query.tree_filter.kind is FilterKind.QI:
        report.notes.append(
            "root-shift classes collapse only once all lower-order trees pass the L2 "
            "condition; levels are evaluated in increasing order, so a failing lower "
            "level caps the verdict before any collapsed class is relied on")
        report.notes.append(
            "the class-reduction result is stated with O(h^(p+1/2)) for both the "
            "pathwise and the mean clause; verdicts here use the mean threshold "
            "h^(p+1), which the reduction also carries given the growth premise")
    return report


def _growth_premise(query: OrderQuery, up_to: Fraction, report: OrderReport):
    tab = query.tableau
    w = weights(tab)
    for t in _query_trees(query, up_to):
        P = w.Phi(t)
        if leading_order(expect_product(P, P)) < 2 * t.order:
            report.growth_violations.append(t)
    report.notes.append(f"growth premise E[Phi^2] = O(h^(2 rho)) checked for trees with "
                        f"rho <= {up_to}; higher orders are assumed")


# --------------------------------------------------------------------------
# weak conditions


def _multisets(trees: Sequence[Tree], budget: Fraction, start: int = 0) -> Iterable[tuple[int, ...]]:
    for i in range(start, len(trees)):
        r = trees[i].order
        if r > budget:
            continue
        yield (i,)
        for rest in _multisets(trees, budget - r, i):
            yield (i,) + rest


def count_multisets(trees: Sequence[Tree], budget: Fraction) -> int:
    """Number of non-empty multisets with total order at most ``budget``."""
    weights_ = sorted(int(2 * t.order) for t in trees)
    b = int(2 * budget)
    ways = [1] + [0] * b  # unbounded knapsack counting multisets
    for w in weights_:
        for x in range(w, b + 1):
            ways[x] += ways[x - w]
    return sum(ways) - 1


def check_weak(query: OrderQuery) -> OrderReport:
    """Weak order check over all multisets with ``Σρ <= p + 1/2``."""
    tab, mode, p = query.tableau, query.mode, query.p
    if p > MAX_WEAK_ORDER:
        raise OrderCheckError(f"weak check is limited to p <= {MAX_WEAK_ORDER}")
    report = OrderReport(tab.name, mode, p, str(query.tree_filter), CheckKind.WEAK)
    tree_filter = query.tree_filter
    if tree_filter.kind is FilterKind.QI:
        tree_filter = TreeFilter(FilterKind.SEPARABLE, tree_filter.noisy)
        report.notes.append("root-shift reduction does not apply to weak conditions; "
                            "the full separable tree set is used")
    trees = tree_filter.apply(enumerate_trees(tab.Q, tab.M, p + HALF, cap=query.cap),
                              tab.Q, tab)
    budget = p + HALF
    estimate = count_multisets(trees, budget)
    if estimate > query.multiset_cap:
        raise MultisetCapExceeded(
            f"{estimate} multisets exceed the cap of {query.multiset_cap}", estimate)
    w = weights(tab)
    Phis = [w.Phi(t) for t in trees]
    phis = [phi(t, mode) for t in trees]

    def dfs(start: int, rho: Fraction, P: AlgebraElement, E: AlgebraElement, chosen: tuple):
        for i in range(start, len(trees)):
            r = rho + trees[i].order
            if r > budget:
                continue
            P2, E2 = mul(P, Phis[i]), mul(E, phis[i])
            sel = chosen + (i,)
            diff = expectation(P2) - expectation(E2)
            report.weak_records.append(MultisetRecord(
                tuple(trees[k] for k in sel), r, leading_order(diff), p + 1))
            dfs(i, r, P2, E2, sel)

    dfs(0, Fraction(0), AlgebraElement.one(), AlgebraElement.one(), ())
    report.weak_records.sort(key=lambda r: (r.rho, [t.key for t in r.trees]))
    for level in _half_levels(p):
        report.weak_levels[level] = all(r.order >= level + 1 for r in report.weak_records
                                        if r.rho <= level + HALF)
    return report


def check(query: OrderQuery) -> OrderReport:
    """Strong, weak or both, merged into one report."""
    if query.kind is CheckKind.STRONG:
        return check_strong(query)
    if query.kind is CheckKind.WEAK:
        return check_weak(query)
    strong, weak = check_strong(query), check_weak(query)
    strong.kind = CheckKind.BOTH
    strong.weak_records = weak.weak_records
    strong.weak_levels = weak.weak_levels
    strong.notes.extend(n for n in weak.notes if n not in strong.notes)
    return strong


def strong_order(tab: Tableau, p, mode=None, tree_filter: TreeFilter | str = "all") -> Fraction:
    """Maximal mean-square order up to ``p``."""
    return check_strong(OrderQuery(tab, as_order(p), mode, _tf(tree_filter))).max_strong


def weak_order(tab: Tableau, p, mode=None, tree_filter: TreeFilter | str = "all") -> Fraction:
    """Maximal weak order up to ``p``."""
    return check_weak(OrderQuery(tab, as_order(p), mode, _tf(tree_filter),
                                 CheckKind.WEAK)).max_weak


def _tf(x) -> TreeFilter:
    return x if isinstance(x, TreeFilter) else TreeFilter.parse(x)


# --------------------------------------------------------------------------
# single-tree trace and weight tables


@dataclass(frozen=True)
class TreeExplanation:
    tree: Tree
    mode: Mode
    phi: AlgebraElement
    Phi: AlgebraElement
    delta: AlgebraElement
    mean_delta: HPolynomial
    mean_square_delta: HPolynomial
    mean_phi: HPolynomial
    mean_Phi: HPolynomial
    order_limit: Fraction | float

    @property
    def l2_order(self):
        return leading_order(self.mean_square_delta)

    @property
    def mean_order(self):
        return leading_order(self.mean_delta)

    def to_dict(self) -> dict:
        return {"tree": to_bracket(self.tree), "rho": str(self.tree.order),
                "mode": self.mode.value, "phi": str(self.phi), "Phi": str(self.Phi),
                "delta": str(self.delta), "E_delta": str(self.mean_delta),
                "E_delta2": str(self.mean_square_delta), "E_phi": str(self.mean_phi),
                "E_Phi": str(self.mean_Phi), "l2_order": _fmt_order(self.l2_order),
                "mean_order": _fmt_order(self.mean_order),
                "order_limit": _fmt_order(self.order_limit)}

    def format_text(self) -> str:
        d = self.to_dict()
        return "\n".join(f"{k:>10}: {v}" for k, v in d.items())


def explain_tree(tab: Tableau, t: Tree, mode=None, max_level=Fraction(10)) -> TreeExplanation:
    """Full symbolic trace of one tree's conditions.

    ``order_limit`` is the largest strong order the conditions of this tree
    alone allow (``inf`` when ``Φ = φ`` exactly).
    """
    mode = Mode.parse(mode or tab.mode)
    P = weights(tab).Phi(t)
    e = phi(t, mode)
    d = P - e
    ms, mean = expect_product(d, d), expectation(d)
    l2, mo = leading_order(ms), leading_order(mean)
    limit: Fraction | float = INF
    for level in _half_levels(Fraction(max_level)):
        if not _strong_level_ok(t.order, l2, mo, level):
            limit = level - HALF
            break
    return TreeExplanation(t, mode, e, P, d, mean, ms, expectation(e), expectation(P), limit)


@dataclass(frozen=True)
class WeightRow:
    row: int | None
    tree: Tree
    rho: Fraction
    phi: AlgebraElement
    Phi: AlgebraElement | None

    def to_dict(self) -> dict:
        return {"row": self.row, "tree": to_bracket(self.tree), "rho": str(self.rho),
                "phi": str(self.phi), "Phi": None if self.Phi is None else str(self.Phi)}


def weight_table(Q: int, M: int, max_order, tab: Tableau | None = None, mode=Mode.STRATONOVICH,
                 tree_filter: TreeFilter | str = "all", cap: int = DEFAULT_TREE_CAP
                 ) -> list[WeightRow]:
    """Rows ``(No, τ, ρ, φ, Φ)`` for all (filtered) trees up to ``max_order``."""
    mode = Mode.parse(mode)
    trees = _tf(tree_filter).apply(enumerate_trees(Q, M, max_order, cap=cap), Q, tab)
    w = weights(tab) if tab is not None else None
    return [WeightRow(reference_row(t), t, t.order, phi(t, mode),
                      None if w is None else w.Phi(t)) for t in trees]


def format_weight_table(rows: Sequence[WeightRow]) -> str:
    lines = [f"{'No':>3}  {'rho':>4}  tree | phi | Phi"]
    for r in rows:
        lines.append(f"{r.row if r.row is not None else '-':>3}  {str(r.rho):>4}  "
                     f"{to_bracket(r.tree)} | {r.phi} | {'-' if r.Phi is None else r.Phi}")
    return "\n".join(lines)
