import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sprk.bseries import ITO, STRAT
from sprk.tableau import (BUILTIN_DOCUMENTS, DimensionError, DivisionByZeroError, DivisionError,
                          ExpressionSyntaxError, MissingBlockError, TableauFormatError,
                          UnknownSymbolError, UnsupportedVariableError, builtin,
                          check_quadratic_invariant, format_expression, load_tableau,
                          parse_expression, parse_tableau, zero_tableau)
from sprk.words import AlgebraElement

E = AlgebraElement
h = E.h()
half = Fraction(1, 2)
O = E.zero()


def W(m):
    return E.dW(m)


def J(m):
    return E.J(m)


def L(x):
    """Nested tuples as lists, for comparing tableau blocks with literals."""
    return [L(v) for v in x] if isinstance(x, (tuple, list)) else x


class TestExpressions:
    def test_generators(self):
        assert parse_expression("h") == h
        assert parse_expression("dW[2]") == W(2)
        assert parse_expression("J[1,0]") == J(1)

    def test_reverse_integral_sugar(self):
        assert parse_expression("J[0,2]") == h * W(2) - J(2)

    def test_scaled_integral(self):
        got = parse_expression("3/2*J[m,0]/h - 1/2*dW[m]", noise=1)
        assert got == Fraction(3, 2) * E.h(-1) * J(1) - half * W(1)

    def test_placeholder_noise(self):
        assert parse_expression("dW[*]*h/2", noise=3) == half * h * W(3)

    def test_precedence_and_unary_minus(self):
        assert parse_expression("-(1 + 2)*h - -h/4") == Fraction(-11, 4) * h
        assert parse_expression("2*3/4") == E.const(Fraction(3, 2))

    @given(st.integers(-50, 50), st.integers(1, 20), st.integers(0, 2))
    def test_format_round_trip(self, a, b, k):
        e = Fraction(a, b) * E.h(k) * W(1) + h
        assert parse_expression(format_expression(e)) == e

    @pytest.mark.parametrize("text,err", [
        ("h/0", DivisionByZeroError),
        ("h/(h-1)", DivisionError),
        ("1/dW[1]", DivisionError),
        ("x", UnknownSymbolError),
        ("h +", ExpressionSyntaxError),
        ("(h", ExpressionSyntaxError),
        ("h $ 2", ExpressionSyntaxError),
        ("dW[*]", TableauFormatError),
    ])
    def test_errors(self, text, err):
        with pytest.raises(err):
            parse_expression(text)

    def test_error_column(self):
        with pytest.raises(ExpressionSyntaxError) as info:
            parse_expression("h + )")
        assert info.value.column == 5

    def test_noise_index_out_of_range(self):
        with pytest.raises(TableauFormatError):
            parse_expression("dW[3]", M=2)

    def test_unsupported_random_variable(self):
        doc = json.loads(builtin("sv_right").to_json())
        doc["Z"]["1,0"][1][0] = "dW[1]*dW[1]"
        with pytest.raises(UnsupportedVariableError) as info:
            parse_tableau(doc)
        assert info.value.entry == (1, 0, 2, 1)


class TestBuiltins:
    def test_sv_right(self):
        tab = builtin("sv_right", M=2)
        assert tab.mode is ITO
        for m in (1, 2):
            assert L(tab.Z[(1, m)][1]) == [half * W(m), half * W(m)]
            assert L(tab.Z[(2, m)]) == [[O, O], [W(m), O]]
            assert L(tab.gamma[(2, m)]) == [half * W(m)] * 2
        assert L(tab.Z[(2, 0)]) == [[O, O], [h, O]]
        assert L(tab.gamma[(1, 0)]) == [half * h] * 2

    def test_sv_left(self):
        tab = builtin("sv_left")
        assert L(tab.Z[(1, 1)]) == [[O, O], [O, O]]
        assert L(tab.gamma[(1, 1)]) == [O, O]
        assert L(tab.gamma[(2, 1)]) == [W(1), O]

    def test_sv_right_3part(self):
        tab = builtin("sv_right_3part")
        assert tab.Q == 3
        assert tab.Z[(3, 0)] == tab.Z[(2, 0)]
        assert tab.gamma[(3, 0)] == tab.gamma[(2, 0)]
        assert L(tab.Z[(3, 1)]) == [[O, O], [O, O]]

    def test_milstein(self):
        tab = builtin("milstein_15")
        a = Fraction(3, 2) * E.h(-1) * J(1) - half * W(1)
        b = -Fraction(3, 2) * E.h(-1) * J(1) + Fraction(3, 2) * W(1)
        assert tab.mode is STRAT
        assert L(tab.gamma[(2, 0)]) == [Fraction(2, 3) * h, Fraction(1, 3) * h]
        assert L(tab.gamma[(1, 0)]) == [Fraction(1, 4) * h, Fraction(3, 4) * h]
        assert L(tab.Z[(1, 1)]) == [[a, O], [a, b]]
        assert L(tab.gamma[(1, 1)]) == [a, b]
        assert L(tab.Z[(2, 0)]) == [[O, O], [Fraction(2, 3) * h, O]]

    def test_stormer_verlet(self):
        tab = builtin("stormer_verlet")
        assert (tab.Q, tab.s) == (2, 2)
        assert L(tab.Z[(2, 0)]) == [[half * h, O], [half * h, O]]
        assert L(tab.Z[(1, 0)]) == [[O, O], [half * h, half * h]]
        assert L(tab.Z[(2, 1)]) == [[half * W(1), O], [half * W(1), O]]

    def test_template_instantiation_relabels_noise(self):
        tab = builtin("milstein_15", M=3)
        base = tab.Z[(1, 1)][0][0]
        for m in (2, 3):
            relabeled = E({(k, tuple(m if a == 1 else a for a in w)): c
                           for (k, w), c in base.items()})
            assert tab.Z[(1, m)][0][0] == relabeled

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            builtin("rk4")

    @pytest.mark.parametrize("name", sorted(BUILTIN_DOCUMENTS))
    def test_round_trip(self, name):
        tab = builtin(name, M=2)
        again = parse_tableau(tab.to_json())
        assert again == tab and again.mode == tab.mode and again.name == tab.name

    def test_noise_count_override(self):
        tab = builtin("stormer_verlet")
        assert tab.with_noise_count(3) == builtin("stormer_verlet", M=3)
        assert tab.with_noise_count(3).M == 3

    def test_immutable_and_hashable(self):
        a, b = builtin("sv_right"), builtin("sv_right")
        assert a == b and hash(a) == hash(b)
        assert a != builtin("sv_left")


class TestDocuments:
    def _doc(self):
        return json.loads(json.dumps(BUILTIN_DOCUMENTS["sv_right"]))

    def test_missing_block(self):
        doc = self._doc()
        del doc["Z"]["2,*"]
        with pytest.raises(MissingBlockError):
            parse_tableau(doc)

    def test_dimension_mismatch(self):
        doc = self._doc()
        doc["gamma"]["1,0"] = ["h"]
        with pytest.raises(DimensionError):
            parse_tableau(doc)

    def test_entry_location_reported(self):
        doc = self._doc()
        doc["Z"]["2,0"][1][0] = "h/0"
        with pytest.raises(DivisionByZeroError) as info:
            parse_tableau(doc)
        assert info.value.entry == (2, 0, 2, 1)

    def test_invalid_json_reports_line(self):
        with pytest.raises(ExpressionSyntaxError) as info:
            parse_tableau('{\n "Q": 2,\n oops}')
        assert info.value.line == 3

    def test_bad_format_version(self):
        doc = self._doc()
        doc["format"] = 2
        with pytest.raises(TableauFormatError):
            parse_tableau(doc)

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(builtin("milstein_15").to_json())
        assert load_tableau(str(path)) == builtin("milstein_15")


class TestQuadraticInvariant:
    def test_stormer_verlet_holds(self):
        for M in (1, 2):
            assert check_quadratic_invariant(builtin("stormer_verlet", M=M)).holds

    def test_sv_left_fails(self):
        rep = check_quadratic_invariant(builtin("sv_left"))
        assert not rep.holds and rep.witnesses
        assert any(w.i == 1 and w.j == 1 and w.m2 == 1 for w in rep.witnesses)

    def test_zero_tableau_holds(self):
        assert check_quadratic_invariant(zero_tableau()).holds

    def test_needs_two_partitions(self):
        with pytest.raises(ValueError):
            check_quadratic_invariant(builtin("sv_right_3part"))

    def test_report_serializes(self):
        json.dumps(check_quadratic_invariant(builtin("sv_left")).to_dict())
