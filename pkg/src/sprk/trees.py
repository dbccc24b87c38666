"""Multishaped, multicolored rooted trees.

A tree node carries a *shape* (partition index ``q >= 1``) and a *color*
(noise index ``m >= 0``, where 0 is the deterministic ``dt`` channel).
Trees are stored in canonical form: children are sorted under the recursive
lexicographic order on ``(shape, color, children)``, so structural equality
coincides with isomorphism and trees can be hashed and used as dict keys.

The empty trees are never materialized; they only encode the constant
term of a B-series.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import factorial
from typing import Iterable, Iterator, Sequence

DEFAULT_TREE_CAP = 10**6


class TreeError(ValueError):
    """Invalid tree construction or an operation outside its domain."""


class TreeCountExceeded(RuntimeError):
    """Enumeration would produce more trees than the configured cap."""


@dataclass(frozen=True)
class NodeLabel:
    shape: int
    color: int

    def __post_init__(self):
        if self.shape < 1 or self.color < 0:
            raise TreeError(f"invalid node label ({self.shape},{self.color})")

    @property
    def stochastic(self) -> bool:
        return self.color != 0

    @property
    def weight(self) -> int:
        """Order of the node in half units (2 for dt, 1 for dW)."""
        return 1 if self.color else 2


@dataclass(frozen=True, eq=False)
class Tree:
    """Canonical shaped, colored rooted tree ``[children]_{shape,color}``.

    Build instances with :func:`leaf` and :func:`node`; the constructor
    sorts the children itself, so any child order is accepted.
    """

    shape: int
    color: int
    children: tuple[Tree, ...] = field(default=())

    def __post_init__(self):
        if self.shape < 1 or self.color < 0:
            raise TreeError(f"invalid node label ({self.shape},{self.color})")
        ordered = tuple(sorted(self.children, key=lambda t: t.key))
        object.__setattr__(self, "children", ordered)

    @cached_property
    def key(self) -> tuple:
        return (self.shape, self.color, tuple(c.key for c in self.children))

    @cached_property
    def _hash(self) -> int:
        return hash(self.key)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tree):
            return NotImplemented
        return self is other or self.key == other.key

    def __lt__(self, other: Tree) -> bool:
        return self.key < other.key

    def __le__(self, other: Tree) -> bool:
        return self.key <= other.key

    def __gt__(self, other: Tree) -> bool:
        return self.key > other.key

    def __ge__(self, other: Tree) -> bool:
        return self.key >= other.key

    @property
    def label(self) -> NodeLabel:
        return NodeLabel(self.shape, self.color)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @cached_property
    def weight(self) -> int:
        """Twice the tree order (an integer)."""
        return (1 if self.color else 2) + sum(c.weight for c in self.children)

    @property
    def order(self) -> Fraction:
        return Fraction(self.weight, 2)

    @cached_property
    def num_nodes(self) -> int:
        return 1 + sum(c.num_nodes for c in self.children)

    def nodes(self) -> Iterator[Tree]:
        """Pre-order traversal over all subtrees (one per node)."""
        yield self
        for c in self.children:
            yield from c.nodes()

    def edges(self) -> Iterator[tuple[Tree, Tree]]:
        for c in self.children:
            yield self, c
            yield from c.edges()

    def max_shape(self) -> int:
        return max(t.shape for t in self.nodes())

    def max_color(self) -> int:
        return max(t.color for t in self.nodes())

    def __str__(self) -> str:
        return to_bracket(self)

    def __repr__(self) -> str:
        return f"Tree({to_bracket(self)!r})"


def _check_label(q: int, m: int, Q: int | None, M: int | None):
    if q < 1 or (Q is not None and q > Q):
        raise TreeError(f"shape {q} out of range 1..{Q}")
    if m < 0 or (M is not None and m > M):
        raise TreeError(f"color {m} out of range 0..{M}")


def leaf(q: int, m: int, *, Q: int | None = None, M: int | None = None) -> Tree:
    """Single node of shape ``q`` and color ``m``."""
    _check_label(q, m, Q, M)
    return Tree(q, m)


def node(q: int, m: int, children: Sequence[Tree], *, Q: int | None = None,
         M: int | None = None) -> Tree:
    """Join ``children`` by single branches to a new root ``(q, m)``."""
    _check_label(q, m, Q, M)
    children = tuple(children)
    if not children:
        raise TreeError("node() needs at least one child; use leaf()")
    return Tree(q, m, children)


def alpha(t: Tree) -> Fraction:
    """Symmetry coefficient: product over nodes of 1/(r1! r2! ...)."""
    value = Fraction(1)
    for c in t.children:
        value *= alpha(c)
    for _, group in itertools.groupby(t.children):
        value /= factorial(len(list(group)))
    return value


def rho(t: Tree) -> Fraction:
    """Tree order: 1 per deterministic node, 1/2 per stochastic node."""
    return t.order


def butcher_product(u: Tree, v: Tree) -> Tree:
    """Graft ``v`` as an extra child of the root of ``u``."""
    return Tree(u.shape, u.color, u.children + (v,))


# --------------------------------------------------------------------------
# enumeration


def enumerate_trees(Q: int, M: int, max_order, *, cap: int = DEFAULT_TREE_CAP) -> list[Tree]:
    """All canonical trees with ``rho <= max_order``, sorted by (order, key).

    Children are generated as non-decreasing sequences over the sorted list
    of smaller trees, so no isomorphism check is needed afterwards.
    """
    if Q < 1 or M < 0:
        raise TreeError(f"need Q >= 1 and M >= 0, got Q={Q}, M={M}")
    max_weight = int(Fraction(max_order) * 2)
    if max_weight < 1:
        raise TreeError("max_order must be at least 1/2")
    labels = [(q, m) for q in range(1, Q + 1) for m in range(M + 1)]

    by_weight: dict[int, list[Tree]] = defaultdict(list)
    total = 0
    for w in range(1, max_weight + 1):
        smaller = sorted(itertools.chain.from_iterable(by_weight[k] for k in range(1, w)),
                         key=lambda t: t.key)
        level = []
        for q, m in labels:
            rest = w - (1 if m else 2)
            if rest < 0:
                continue
            if rest == 0:
                level.append(Tree(q, m))
                continue
            for forest in _forests(smaller, rest, 0):
                level.append(Tree(q, m, forest))
                if total + len(level) > cap:
                    raise TreeCountExceeded(
                        f"more than {cap} trees up to order {Fraction(max_weight, 2)}")
        level.sort(key=lambda t: t.key)
        by_weight[w] = level
        total += len(level)
    return [t for w in range(1, max_weight + 1) for t in by_weight[w]]


def _forests(pool: list[Tree], weight: int, start: int) -> Iterator[tuple[Tree, ...]]:
    """Multisets of trees from ``pool[start:]`` with total ``weight``."""
    for i in range(start, len(pool)):
        t = pool[i]
        if t.weight > weight:
            continue
        if t.weight == weight:
            yield (t,)
        else:
            for rest in _forests(pool, weight - t.weight, i):
                yield (t,) + rest


def count_by_order(trees: Iterable[Tree]) -> dict[Fraction, int]:
    counts: dict[Fraction, int] = defaultdict(int)
    for t in trees:
        counts[t.order] += 1
    return dict(sorted(counts.items()))


# --------------------------------------------------------------------------
# structural filters


def same_shape_adjacent(t: Tree) -> bool:
    return any(a.shape == b.shape for a, b in t.edges())


def is_separable_tree(t: Tree, noisy_partitions: Iterable[int]) -> bool:
    noisy = set(noisy_partitions)
    if same_shape_adjacent(t):
        return False
    return all(n.color == 0 or n.shape in noisy for n in t.nodes())


def filter_separable(trees: Iterable[Tree], noisy_partitions: Iterable[int]) -> list[Tree]:
    """Keep trees whose elementary differentials survive for separable systems.

    Drops every tree with an edge joining two nodes of equal shape, and every
    tree containing a stochastic node in a partition outside
    ``noisy_partitions``.
    """
    noisy = frozenset(noisy_partitions)
    return [t for t in trees if is_separable_tree(t, noisy)]


def is_additive_tree(t: Tree) -> bool:
    for n in t.nodes():
        if n.shape == 3 and n.color != 0:
            return False
        if n.shape == 3 and n.children:
            return False
        if n.color != 0 and any((c.shape, c.color) != (3, 0) for c in n.children):
            return False
    return True


def filter_additive(trees: Iterable[Tree]) -> list[Tree]:
    """Additive-noise pruning with partition 3 holding time (``dX3 = dt``)."""
    return [t for t in trees if is_additive_tree(t)]


# --------------------------------------------------------------------------
# root shifting


@dataclass(frozen=True)
class UnrootedClass:
    """All rootings of one free tree."""

    members: frozenset[Tree]

    @property
    def representative(self) -> Tree:
        return min(self.members, key=lambda t: t.key)

    @property
    def order(self) -> Fraction:
        return self.representative.order

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, t: Tree) -> bool:
        return t in self.members


def _to_graph(t: Tree) -> tuple[list[tuple[int, int]], list[list[int]]]:
    labels: list[tuple[int, int]] = []
    adj: list[list[int]] = []

    def visit(sub: Tree, parent: int | None) -> None:
        idx = len(labels)
        labels.append((sub.shape, sub.color))
        adj.append([])
        if parent is not None:
            adj[idx].append(parent)
            adj[parent].append(idx)
        for c in sub.children:
            visit(c, idx)

    visit(t, None)
    return labels, adj


def _rooted_at(labels, adj, root: int) -> Tree:
    def build(v: int, parent: int) -> Tree:
        q, m = labels[v]
        return Tree(q, m, tuple(build(w, v) for w in adj[v] if w != parent))

    return build(root, -1)


def root_shift_class(t: Tree) -> UnrootedClass:
    """The set of trees obtained from ``t``'s free tree by choosing any root."""
    if same_shape_adjacent(t):
        raise TreeError(f"{t} has adjacent nodes of equal shape (not in TS)")
    labels, adj = _to_graph(t)
    return UnrootedClass(frozenset(_rooted_at(labels, adj, r) for r in range(len(labels))))


def qi_representatives(trees: Iterable[Tree]) -> list[Tree]:
    """One representative (the smallest member) per unrooted class.

    Output keeps the input ordering of the first member seen from each class.
    """
    seen: set[Tree] = set()
    reps = []
    for t in trees:
        if t in seen:
            continue
        cls = root_shift_class(t)
        seen.update(cls.members)
        reps.append(cls.representative)
    return sorted(reps, key=lambda t: (t.weight, t.key))


# --------------------------------------------------------------------------
# skeletons of the reference table of trees up to order 2


def skeleton(t: Tree) -> Tree:
    """Forget shapes and noise indices: keep only deterministic/stochastic."""
    return Tree(1, 1 if t.color else 0, tuple(skeleton(c) for c in t.children))


def _sk(spec) -> Tree:
    kind, *kids = spec
    return Tree(1, 1 if kind == "s" else 0, tuple(_sk(k) for k in kids))


_REFERENCE_SKELETONS = [
    ("s",),
    ("d",),
    ("s", ("s",)),
    ("s", ("s",), ("s",)),
    ("s", ("s", ("s",))),
    ("s", ("d",)),
    ("d", ("s",)),
    ("d", ("d",)),
    ("d", ("s",), ("s",)),
    ("s", ("d",), ("s",)),
    ("d", ("s", ("s",))),
    ("s", ("d", ("s",))),
    ("s", ("s", ("d",))),
    ("s", ("s", ("s", ("s",)))),
    ("s", ("s", ("s",)), ("s",)),
    ("s", ("s",), ("s",), ("s",)),
    ("s", ("s", ("s",), ("s",))),
]

_ROW_OF_SKELETON = {_sk(spec): i + 1 for i, spec in enumerate(_REFERENCE_SKELETONS)}


def reference_row(t: Tree) -> int | None:
    """Row number (1..17) of ``t``'s pattern in the table of trees up to order 2."""
    return _ROW_OF_SKELETON.get(skeleton(t))


def reference_skeleton(row: int) -> Tree:
    return _sk(_REFERENCE_SKELETONS[row - 1])


# --------------------------------------------------------------------------
# bracket text format:  b(q,m)  for a leaf,  [c1,c2,...](q,m)  for a node


def to_bracket(t: Tree) -> str:
    if not t.children:
        return f"b({t.shape},{t.color})"
    return "[" + ",".join(to_bracket(c) for c in t.children) + f"]({t.shape},{t.color})"


def parse_tree(text: str) -> Tree:
    """Inverse of :func:`to_bracket` (whitespace is ignored)."""
    s = "".join(text.split())
    pos = 0

    def expect(ch: str):
        nonlocal pos
        if pos >= len(s) or s[pos] != ch:
            found = s[pos] if pos < len(s) else "end of input"
            raise TreeError(f"expected {ch!r} at position {pos}, found {found!r}")
        pos += 1

    def integer() -> int:
        nonlocal pos
        start = pos
        while pos < len(s) and s[pos].isdigit():
            pos += 1
        if start == pos:
            raise TreeError(f"expected integer at position {pos}")
        return int(s[start:pos])

    def label() -> tuple[int, int]:
        expect("(")
        q = integer()
        expect(",")
        m = integer()
        expect(")")
        return q, m

    def tree() -> Tree:
        nonlocal pos
        if s.startswith("b", pos):
            pos += 1
            return leaf(*label())
        expect("[")
        kids = [tree()]
        while pos < len(s) and s[pos] == ",":
            pos += 1
            kids.append(tree())
        expect("]")
        return node(*label(), kids)

    result = tree()
    if pos != len(s):
        raise TreeError(f"trailing characters at position {pos}")
    return result
