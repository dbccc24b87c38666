"""Bringing your own method.

Tableaux are JSON documents whose entries are small expressions in h,
dW[m] and J[m,0].  Blocks keyed "q,*" are templates instantiated for every
noise channel.  Here we write a symplectic-Euler-type splitting by hand,
ask for its order, and check the answer numerically.
"""

import json
import tempfile

from sprk import OrderQuery, builtin_problem, check, load_tableau, strong_study
from sprk.simulate import dyadic_steps

doc = {
    "format": 1, "name": "symplectic_euler", "Q": 2, "M": 1, "s": 1, "mode": "strat",
    "Z": {"1,0": [["0"]], "1,*": [["0"]], "2,0": [["h"]], "2,*": [["dW[*]"]]},
    "gamma": {"1,0": ["h"], "1,*": ["dW[*]"], "2,0": ["h"], "2,*": ["dW[*]"]},
}
with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
    json.dump(doc, fh)
tab = load_tableau(fh.name)
print(tab.pretty())

for filt in ("all", "separable:1"):
    rep = check(OrderQuery(tab, 1, None, filt, "both"))
    print(f"\nfilter {filt}: strong {rep.max_strong}, weak {rep.max_weak}")
    for w in rep.strong_witnesses()[:2]:
        print(f"  failing tree {w.tree}")

# The pendulum has noise only in its first partition, which is exactly the
# separable:1 setting above.
res = strong_study(tab, builtin_problem("synchrotron"), 1.0, dyadic_steps(1 / 8, 4), 2000, seed=0)
print("\npendulum strong slope", round(res.slope, 3))
