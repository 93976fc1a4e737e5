from fractions import Fraction

import pytest

from hpcheck.syntax import (
    Add, And, Assign, BoolLit, Box, Choice, Cmp, Diamond, Div, Exists,
    Forall, Implies, Loop, Mul, Neg, Not, Num, ODE, Or, Pow, RandomAssign,
    Seq, Sub, Test, Var, assigned_variables, bound_variables, conj,
    conjuncts, desugar_if, exists, forall, free_variables, fresh_name,
    is_fol, is_quantifier_free, seq, substitute,
)


def test_num_coerces_to_fraction():
    assert Num(3).value == Fraction(3)
    assert Num(Fraction(1, 2)).value == Fraction(1, 2)


def test_div_rejects_literal_zero():
    with pytest.raises(ValueError):
        Div(Var("x"), Num(0))


def test_pow_rejects_negative_exponent():
    with pytest.raises(ValueError):
        Pow(Var("x"), -1)


def test_cmp_rejects_unknown_operator():
    with pytest.raises(ValueError):
        Cmp("~", Var("x"), Var("y"))


def test_ode_rejects_duplicate_variables():
    with pytest.raises(ValueError):
        ODE((("x", Var("v")), ("x", Num(1))), BoolLit(True))


def test_desugar_if_shape():
    p = Cmp("<=", Var("x"), Num(0))
    body = Assign("a", Num(1))
    sugar = desugar_if(p, body)
    assert sugar == Choice(Seq(Test(p), body), Test(Not(p)))


def test_desugar_if_behaves_like_conditional():
    # when the condition holds the guarded branch runs; otherwise the
    # program is a no-op (the skip branch's test passes)
    from hpcheck.semantics import Branch, Final, run
    p = Cmp("<=", Var("x"), Num(0))
    prog = desugar_if(p, Assign("a", Num(1)))
    taken, _ = run({"x": Fraction(-1), "a": Fraction(0)}, prog,
                   [Branch("left")])
    assert isinstance(taken, Final) and taken.state["a"] == 1
    skipped, _ = run({"x": Fraction(2), "a": Fraction(0)}, prog,
                     [Branch("right")])
    assert isinstance(skipped, Final) and skipped.state["a"] == 0


def test_free_variables_formula():
    f = Implies(Cmp("<=", Var("x"), Var("y")), Forall("x", Cmp("=", Var("x"), Var("z"))))
    assert free_variables(f) == {"x", "y", "z"}


def test_free_variables_modality_includes_program_vars():
    f = Box(Seq(Assign("a", Var("b")), Test(Cmp(">=", Var("a"), Num(0)))),
            Cmp("<=", Var("x"), Num(1)))
    assert free_variables(f) == {"a", "b", "x"}


def test_assigned_variables():
    prog = seq(Assign("x", Num(0)), RandomAssign("y"), Loop(Assign("z", Var("x"))))
    assert assigned_variables(prog) == {"x", "y", "z"}


def test_fresh_name_avoids_collisions():
    assert fresh_name("x", {"x"}) == "x_1"
    assert fresh_name("x", {"x", "x_1"}) == "x_2"
    assert fresh_name("y", {"x"}) == "y_1"


def test_smart_quantifiers_rename_duplicate_binders():
    inner = exists("x", Cmp("=", Var("x"), Num(0)))
    outer = forall("x", And(Cmp(">=", Var("x"), Num(0)), inner))
    # the inner binder must not capture the outer variable
    assert isinstance(outer, Forall)
    inner_q = outer.body.right
    assert isinstance(inner_q, Exists)
    assert inner_q.var != "x"


def test_substitute_simple():
    f = Cmp("<=", Var("x"), Var("y"))
    g = substitute(f, "x", Num(3))
    assert g == Cmp("<=", Num(3), Var("y"))


def test_substitute_capture_avoiding():
    f = Forall("y", Cmp("<=", Var("x"), Var("y")))
    g = substitute(f, "x", Var("y"))
    assert isinstance(g, Forall)
    assert g.var != "y"
    assert free_variables(g) == {"y"}


def test_substitute_through_writing_modality_rejected():
    f = Box(Assign("x", Num(0)), Cmp("<=", Var("x"), Var("c")))
    with pytest.raises(ValueError):
        substitute(f, "x", Num(1))


def test_substitute_bound_variable_is_noop():
    f = Forall("x", Cmp("<=", Var("x"), Num(0)))
    assert substitute(f, "x", Num(5)) == f


def test_conjuncts_flatten():
    a = Cmp("<=", Var("x"), Num(0))
    b = Cmp(">=", Var("y"), Num(1))
    c = Cmp("=", Var("z"), Num(2))
    assert conjuncts(conj(a, b, c)) == [a, b, c]


def test_is_fol_and_quantifier_free():
    plain = Cmp("<=", Var("x"), Num(0))
    assert is_fol(plain) and is_quantifier_free(plain)
    quantified = Forall("x", plain)
    assert is_fol(quantified) and not is_quantifier_free(quantified)
    modal = Box(Assign("x", Num(0)), plain)
    assert not is_fol(modal)


def test_bound_variables():
    f = Forall("x", Exists("y", Cmp("=", Var("x"), Var("y"))))
    assert bound_variables(f) == {"x", "y"}


def test_boollit_singletons():
    assert BoolLit(True) is not None
    assert BoolLit(True) == BoolLit(True)
    assert BoolLit(True) != BoolLit(False)


def test_formula_equality_is_structural():
    t = Add(Var("x"), Num(1))
    assert t == Add(Var("x"), Num(1))
    assert Mul(t, t) == Mul(Add(Var("x"), Num(1)), Add(Var("x"), Num(1)))
    assert Sub(Var("x"), Num(1)) != Sub(Num(1), Var("x"))
    assert Neg(Var("x")) == Neg(Var("x"))
