"""Exact order conditions and Monte Carlo verification for stochastic
partitioned Runge-Kutta (SPRK) methods.

Submodules
----------
trees      colored, shaped rooted trees and structural filters
words      iterated stochastic integrals as exact algebra elements
bseries    exact and numerical elementary weights
tableau    method coefficients, the expression language and built-ins
order      strong and weak order checks
simulate   numerical stepping and convergence studies
cli        the ``sprk`` command
"""

from .bseries import Mode, Phi, Psi, phi
from .order import OrderQuery, OrderReport, TreeFilter, check, explain_tree, strong_order, weak_order
from .simulate import (SdeProblem, builtin_problem, invariant_drift, sample_increments, step,
                       strong_study, weak_study)
from .tableau import Tableau, builtin, check_quadratic_invariant, load_tableau, parse_tableau
from .trees import Tree, enumerate_trees, leaf, node, parse_tree, to_bracket
from .words import AlgebraElement, expectation, mc_oracle, quasi_shuffle, strat_to_ito

__version__ = "0.1.0"

__all__ = [
    "AlgebraElement", "Mode", "OrderQuery", "OrderReport", "SdeProblem", "Tableau", "Tree",
    "TreeFilter", "builtin", "builtin_problem", "check", "check_quadratic_invariant",
    "enumerate_trees", "expectation", "explain_tree", "invariant_drift", "leaf", "load_tableau",
    "mc_oracle", "node", "parse_tableau", "parse_tree", "phi", "Phi", "Psi", "quasi_shuffle",
    "sample_increments", "step", "strat_to_ito", "strong_order", "strong_study", "to_bracket",
    "weak_order", "weak_study",
]
