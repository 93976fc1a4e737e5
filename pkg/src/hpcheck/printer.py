"""Deterministic pretty-printer; output re-parses to an identical tree."""

from __future__ import annotations

from fractions import Fraction

from .syntax import (
    Add, And, Assign, BoolLit, Box, Choice, Cmp, Diamond, Div, Exists,
    Forall, Iff, Implies, Loop, Mul, Neg, Not, Num, ODE, Or, Pow,
    RandomAssign, Seq, Sub, Test, Var,
)

# Term precedence levels: additive=1, multiplicative=2, unary=3, power=4, atom=5
# Formula levels: iff=1, implies=2, or=3, and=4, unary=5, atom=6
# Program levels: choice=1, seq=2, atom=3


def _frac(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def print_term(term, level: int = 0) -> str:
    if isinstance(term, Var):
        return term.name
    if isinstance(term, Num):
        if value_is_negative(term) or term.value.denominator != 1:
            # `-3` and `9/5` re-lex as unary minus / division; a negative
            # fraction such as `-7/5` is a division at the outermost level
            own = 2 if term.value.denominator != 1 else 3
            return _wrap(_frac(term.value), own, level)
        return str(term.value.numerator)
    if isinstance(term, Add):
        return _wrap(f"{print_term(term.left, 1)} + {print_term(term.right, 2)}",
                     1, level)
    if isinstance(term, Sub):
        return _wrap(f"{print_term(term.left, 1)} - {print_term(term.right, 2)}",
                     1, level)
    if isinstance(term, Mul):
        return _wrap(f"{print_term(term.left, 2)} * {print_term(term.right, 3)}",
                     2, level)
    if isinstance(term, Div):
        return _wrap(f"{print_term(term.num, 2)} / {print_term(term.den, 3)}",
                     2, level)
    if isinstance(term, Neg):
        inner = print_term(term.inner, 3)
        # `-3` and `-4^2` would re-lex with the minus glued to the literal;
        # force parentheses whenever the operand starts with a digit
        if inner[0].isdigit():
            return _wrap(f"-({print_term(term.inner, 0)})", 3, level)
        return _wrap(f"-{inner}", 3, level)
    if isinstance(term, Pow):
        return _wrap(f"{print_term(term.base, 5)}^{term.exp}", 4, level)
    raise TypeError(f"not a term: {term!r}")


def value_is_negative(term) -> bool:
    return isinstance(term, Num) and term.value < 0


def _wrap(text: str, own_level: int, context_level: int) -> str:
    if own_level < context_level:
        return f"({text})"
    return text


def print_formula(formula, level: int = 0) -> str:
    if isinstance(formula, BoolLit):
        return "true" if formula.value else "false"
    if isinstance(formula, Cmp):
        return _wrap(f"{print_term(formula.left)} {formula.op} "
                     f"{print_term(formula.right)}", 6, level)
    if isinstance(formula, Iff):
        return _wrap(f"{print_formula(formula.left, 2)} <-> "
                     f"{print_formula(formula.right, 1)}", 1, level)
    if isinstance(formula, Implies):
        return _wrap(f"{print_formula(formula.left, 3)} -> "
                     f"{print_formula(formula.right, 2)}", 2, level)
    if isinstance(formula, Or):
        return _wrap(f"{print_formula(formula.left, 3)} | "
                     f"{print_formula(formula.right, 4)}", 3, level)
    if isinstance(formula, And):
        return _wrap(f"{print_formula(formula.left, 4)} & "
                     f"{print_formula(formula.right, 5)}", 4, level)
    if isinstance(formula, Not):
        return _wrap(f"!{print_formula(formula.inner, 5)}", 5, level)
    # Quantifiers and modalities extend right as far as possible, so they
    # need parentheses in any binary-operator context.
    if isinstance(formula, (Forall, Exists)):
        kw = "forall" if isinstance(formula, Forall) else "exists"
        return _wrap(f"{kw} {formula.var} {print_formula(formula.body, 0)}",
                     1 if level <= 1 else 0, level)
    if isinstance(formula, Box):
        return _wrap(f"[{print_program(formula.program)}] "
                     f"{print_formula(formula.post, 0)}",
                     1 if level <= 1 else 0, level)
    if isinstance(formula, Diamond):
        return _wrap(f"<{print_program(formula.program)}> "
                     f"{print_formula(formula.post, 0)}",
                     1 if level <= 1 else 0, level)
    raise TypeError(f"not a formula: {formula!r}")


def print_program(program, level: int = 0) -> str:
    if isinstance(program, Assign):
        return _wrap(f"{program.var} := {print_term(program.term)}", 3, level)
    if isinstance(program, RandomAssign):
        return _wrap(f"{program.var} := *", 3, level)
    if isinstance(program, Test):
        return _wrap(f"?{print_formula(program.condition, 0)}", 3, level)
    if isinstance(program, ODE):
        eqs = ", ".join(f"{v}' = {print_term(rhs)}" for v, rhs in program.equations)
        if program.domain == BoolLit(True):
            return f"{{{eqs}}}"
        return f"{{{eqs} & {print_formula(program.domain)}}}"
    if isinstance(program, Choice):
        return _wrap(f"{print_program(program.left, 1)} ++ "
                     f"{print_program(program.right, 2)}", 1, level)
    if isinstance(program, Seq):
        return _wrap(f"{print_program(program.first, 2)}; "
                     f"{print_program(program.second, 3)}", 2, level)
    if isinstance(program, Loop):
        return f"{{{print_program(program.body, 0)}}}*"
    raise TypeError(f"not a program: {program!r}")


def pretty_print(node) -> str:
    """Print a formula, program or model deterministically."""
    from .model import Model
    if isinstance(node, Model):
        return print_model(node)
    try:
        return print_formula(node)
    except TypeError:
        return print_program(node)


def print_model(model) -> str:
    lines = []
    lines.append("CONSTANTS")
    for c in model.constants:
        entry = f"  {c.name} = {_frac(c.value)}"
        if c.constraint != BoolLit(True):
            entry += f" : {print_formula(c.constraint)}"
        lines.append(entry)
    lines.append("DOMAINS")
    for var, (lo, hi) in model.domains.items():
        lines.append(f"  {var} = [{_frac(lo)}, {_frac(hi)}]")
    lines.append("INIT")
    lines.append(f"  {print_formula(model.init)}")
    lines.append("GUARANTEE")
    lines.append(f"  {print_formula(model.guarantee)}")
    for keyword, prog in (("ENV", model.env), ("AUX", model.aux),
                          ("CTRL", model.ctrl), ("PLANT", model.plant)):
        lines.append(keyword)
        lines.append(f"  {print_program(prog)}")
    for name, inv in model.invariants.items():
        lines.append(f"INVARIANT {name}")
        lines.append(f"  {print_formula(inv)}")
    if model.relation is not None:
        lines.append("RELATION")
        lines.append(f"  {print_formula(model.relation)}")
    return "\n".join(lines) + "\n"
