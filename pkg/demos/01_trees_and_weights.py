"""Trees, their orders, and the weights attached to them.

Every term in the one-step expansion of a partitioned SDE is indexed by a
rooted tree whose nodes carry a partition (shape) and a noise channel
(color, 0 meaning dt).  This script walks through the objects the rest of
the library is built on.
"""

from fractions import Fraction

from sprk import builtin, enumerate_trees, parse_tree
from sprk.bseries import ITO, Phi, phi
from sprk.order import TreeFilter, format_weight_table, weight_table
from sprk.trees import alpha, count_by_order, rho

# A deterministic node counts 1 towards the order, a stochastic node 1/2.
t = parse_tree("[[b(1,0),b(1,0)](2,1),[b(1,2)](3,2)](2,0)")
print("tree          ", t)
print("order rho     ", rho(t))
print("symmetry 1/a  ", 1 / alpha(t))


def by_order(ts):
    return "  ".join(f"{k}:{v}" for k, v in count_by_order(ts).items())


# How many conditions does a two-partition method with one noise face?
trees = enumerate_trees(Q=2, M=1, max_order=2)
print("\nall trees by order       ", by_order(trees))
for spec in ("separable", "qi"):
    print(f"{spec:<10} trees by order ", by_order(TreeFilter.parse(spec).apply(trees, 2)))

# Exact weights phi(t) are iterated integrals; method weights Phi(t) are
# polynomials in the tableau entries.  For the additive-noise method the
# two agree on every tree except rows 6 and 7, where only the means match.
tab = builtin("sv_right_3part", M=2)
rows = weight_table(3, 2, Fraction(2), tab, ITO, "additive3")
print("\nadditive-noise method, trees up to order 2:")
print(format_weight_table([r for r in rows if r.row in (6, 7, 9)][:6]))

tau6 = parse_tree("[b(3,0)](1,1)")
print("\nrow 6 in detail")
print("  phi =", phi(tau6, ITO))
print("  Phi =", Phi(tau6, tab))
