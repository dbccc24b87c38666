"""Deciding the order of a method from its tableau.

The checker compares method weights with exact weights tree by tree: the
mean-square defect must be small enough for strong order, and expectations
of products over multisets of trees for weak order.  Everything is exact
rational arithmetic, so a verdict is a proof for the enumerated trees.
"""

from sprk import OrderQuery, builtin, check, explain_tree, parse_tree

cases = [
    ("sv_right_3part", 2, "ito", "additive3", "both"),
    ("sv_right_3part", 1.5, "ito", "additive3", "strong"),
    ("milstein_15", 1.5, "strat", "separable", "strong"),
    ("milstein_15", 1.5, "ito", "separable", "strong"),
    ("stormer_verlet", 1.5, "strat", "separable", "strong"),
]
for name, p, mode, filt, kind in cases:
    rep = check(OrderQuery(builtin(name), p, mode, filt, kind))
    verdict = "passes" if rep.passed else "fails"
    print(f"{name:<15} p={p:<4} {mode:<5} {filt:<10} {kind:<6} {verdict}; "
          f"strong {rep.max_strong}, weak {rep.max_weak}")
    for w in rep.strong_witnesses()[:3]:
        print(f"    failing tree {w.tree} (row {w.row}): L2 order {w.l2_order}, "
              f"mean order {w.mean_order}")

# With two independent noises the Stormer-Verlet scheme drops to order 1/2.
rep = check(OrderQuery(builtin("stormer_verlet", M=2), 1, "strat", "separable"))
print("\nstormer_verlet with two noises: strong order", rep.max_strong)

# A symbolic trace of one condition.
print()
print(explain_tree(builtin("milstein_15"), parse_tree("[b(1,1),b(1,1)](2,0)")).format_text())

# sv_left never couples noise into the first partition, so it fails as soon
# as that partition is noisy, and recovers when it is not.
general = check(OrderQuery(builtin("sv_left"), 0.5, "ito"))
restricted = check(OrderQuery(builtin("sv_left"), 1, "ito", "separable:2"))
print(f"\nsv_left, general problems: strong {general.max_strong}; "
      f"noise only in partition 2: strong {restricted.max_strong}")
