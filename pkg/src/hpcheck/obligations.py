"""Proof-obligation generation: loop branches, the exploiting-controller
conditions, the unchallenged-controller conditions, and the environment
friendliness probe.

Each obligation packages a closed formula together with its quantifier
kind, a search box for the quantified variables, and fixed values for the
symbolic constants, ready for the checker.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .model import Model
from .syntax import (
    And, Box, Cmp, Diamond, Exists, Forall, Formula, Implies, Not, Num,
    Seq, Var, conjuncts, free_variables, substitute,
)

FALSIFY_UNIVERSAL = "falsify_universal"
FIND_WITNESS = "find_witness"


class MissingRelation(Exception):
    pass


@dataclass(frozen=True)
class Obligation:
    name: str
    formula: Formula
    kind: str
    search_box: dict = field(default_factory=dict)
    fixed_constants: dict = field(default_factory=dict)

    def quantified_vars(self):
        vars_, _ = self.split()
        return vars_

    def matrix(self):
        _, matrix = self.split()
        return matrix

    def split(self):
        ctor = Forall if self.kind == FALSIFY_UNIVERSAL else Exists
        vars_ = []
        node = self.formula
        while isinstance(node, ctor):
            vars_.append(node.var)
            node = node.body
        return vars_, node

    def to_json(self):
        from .printer import print_formula
        return {
            "name": self.name,
            "kind": self.kind,
            "formula": print_formula(self.formula),
            "search_box": {v: [str(lo), str(hi)]
                           for v, (lo, hi) in sorted(self.search_box.items())},
            "fixed_constants": {k: str(v)
                                for k, v in sorted(self.fixed_constants.items())},
        }


def _ordered_vars(model: Model, names) -> list:
    """Deterministic variable order: state, env, action, then the rest."""
    preferred = list(model.state_vars)
    if model.env_var:
        preferred.append(model.env_var)
    if model.action_var:
        preferred.append(model.action_var)
    out = [v for v in preferred if v in names]
    out.extend(sorted(n for n in names if n not in out))
    return out


def _close(model: Model, name: str, matrix: Formula, kind: str,
           quantified=None, search_constants=False) -> Obligation:
    constants = model.constant_values()
    if quantified is None:
        quantified = free_variables(matrix) - set(constants) - {model.time_var}
    quantified = _ordered_vars(model, set(quantified))
    fixed = dict(constants)
    box = {v: model.search_interval(v) for v in quantified}
    if search_constants:
        for c in model.constants:
            if c.name in free_variables(matrix):
                box[c.name] = _constant_bounds(c)
                quantified.append(c.name)
                del fixed[c.name]
    ctor = Forall if kind == FALSIFY_UNIVERSAL else Exists
    formula = matrix
    for v in reversed(quantified):
        formula = ctor(v, formula)
    return Obligation(name, formula, kind, box, fixed)


def _constant_bounds(constant):
    """Search interval for a constant, from its own constraint conjuncts."""
    lo, hi = Fraction(-100), Fraction(100)
    for c in conjuncts(constant.constraint):
        if not isinstance(c, Cmp):
            continue
        if isinstance(c.left, Var) and c.left.name == constant.name \
                and isinstance(c.right, Num):
            if c.op in (">", ">="):
                lo = max(lo, c.right.value)
            elif c.op in ("<", "<="):
                hi = min(hi, c.right.value)
        elif isinstance(c.right, Var) and c.right.name == constant.name \
                and isinstance(c.left, Num):
            if c.op in (">", ">="):
                hi = min(hi, c.left.value)
            elif c.op in ("<", "<="):
                lo = max(lo, c.left.value)
    return (lo, hi)


def loop_obligations(model: Model, zeta: Formula, *,
                     search_constants=False) -> list:
    """The three loop-rule branches, all universally closed."""
    _require_declared(model, zeta)
    step_vars = set(model.state_vars) | free_variables(zeta) - set(
        model.constant_values())
    if model.env_var:
        step_vars.add(model.env_var)
    if model.action_var:
        step_vars.add(model.action_var)
    step_vars.discard(model.time_var)
    return [
        _close(model, "loop_i", Implies(model.init, zeta), FALSIFY_UNIVERSAL,
               search_constants=search_constants),
        _close(model, "loop_ii", Implies(zeta, Box(model.loop_body(), zeta)),
               FALSIFY_UNIVERSAL, quantified=step_vars,
               search_constants=search_constants),
        _close(model, "loop_iii", Implies(zeta, model.guarantee),
               FALSIFY_UNIVERSAL, search_constants=search_constants),
    ]


def _require_declared(model: Model, zeta: Formula):
    declared = model.declared_variables() | set(model.constant_values())
    undeclared = free_variables(zeta) - declared
    if undeclared:
        raise ValueError(f"undeclared variables in invariant: {sorted(undeclared)}")


def _relation_vars(model: Model):
    if model.relation is None:
        raise MissingRelation("model has no RELATION section")
    e = model.env_var
    if e is None:
        raise MissingRelation("relation requires the standard env shape")
    return e, f"{e}_post", f"{e}_prev"


def rho_obligation(model: Model, zeta: Formula, *,
                   search_constants=False) -> Obligation:
    """For every next env action related to the current one, env can take it.

    Falsification witnesses of this obligation are exactly the
    counterexamples exhibiting an invariant too weak to rule out a
    friendly environment.
    """
    e, e_post, _ = _relation_vars(model)
    matrix = Implies(And(zeta, model.relation),
                     Diamond(model.env, Cmp("=", Var(e), Var(e_post))))
    return _close(model, "rho", matrix, FALSIFY_UNIVERSAL,
                  search_constants=search_constants)


def exploit_witness_formula(model: Model, zeta: Formula, *,
                            search_constants=False) -> Obligation:
    """Existential whose witness certifies an exploiting controller."""
    e, e_post, e_prev = _relation_vars(model)
    zeta_prev = substitute(zeta, e, Var(e_prev))
    relation_prev = substitute(substitute(model.relation, e, Var(e_prev)),
                               e_post, Var(e))
    after_env = Seq(model.aux, Seq(model.ctrl, model.plant))
    matrix = And(And(zeta_prev, relation_prev), Diamond(after_env, Not(zeta)))
    return _close(model, "exploit", matrix, FIND_WITNESS,
                  search_constants=search_constants)


def chi_obligation(model: Model, zeta: Formula, *,
                   search_constants=False):
    """Invariant preservation with ctrl removed, and its negation."""
    uncontrolled = Seq(model.env, Seq(model.aux, model.plant))
    chi_matrix = Implies(zeta, Box(uncontrolled, zeta))
    not_chi_matrix = And(zeta, Diamond(uncontrolled, Not(zeta)))
    step_vars = (set(model.state_vars) | free_variables(zeta)
                 - set(model.constant_values()) - {model.time_var})
    if model.env_var:
        step_vars.add(model.env_var)
    if model.action_var:
        step_vars.add(model.action_var)
    chi = _close(model, "chi", chi_matrix, FALSIFY_UNIVERSAL,
                 quantified=step_vars, search_constants=search_constants)
    not_chi = _close(model, "not_chi", not_chi_matrix, FIND_WITNESS,
                     quantified=step_vars, search_constants=search_constants)
    return chi, not_chi


def psi_obligation(model: Model, zeta_general: Formula, instantiation_var: str,
                   instantiation_term, *, search_constants=False) -> Obligation:
    """Controller-necessity existential: env and aux can break the
    instantiated invariant and the plant does not reestablish it."""
    if instantiation_var not in free_variables(zeta_general):
        raise ValueError(
            f"{instantiation_var!r} is not free in the general invariant")
    zeta_inst = substitute(zeta_general, instantiation_var, instantiation_term)
    env_aux = Seq(model.env, model.aux)
    inner = And(Not(zeta_general), Diamond(model.plant, Not(zeta_inst)))
    matrix = And(zeta_inst, Diamond(env_aux, inner))
    quantified = (free_variables(zeta_inst) | set(model.state_vars)) \
        - set(model.constant_values()) - {model.time_var}
    if model.env_var:
        quantified.add(model.env_var)
    quantified.discard(instantiation_var)
    if model.action_var:
        quantified.discard(model.action_var)
    return _close(model, "psi", matrix, FIND_WITNESS, quantified=quantified,
                  search_constants=search_constants)


def friendliness_probe(model: Model, *, search_constants=False) -> Obligation:
    """A witness exhibits friendliness of env w.r.t. the relation."""
    e, e_post, _ = _relation_vars(model)
    matrix = And(model.relation,
                 Not(Diamond(model.env, Cmp("=", Var(e), Var(e_post)))))
    quantified = (model.declared_variables() | {e_post}) \
        - set(model.constant_values()) - {model.time_var}
    return _close(model, "friendly", matrix, FIND_WITNESS,
                  quantified=quantified, search_constants=search_constants)


def negate_obligation(obligation: Obligation) -> Obligation:
    """Structural negation: swap quantifier kind and negate the matrix."""
    vars_, matrix = obligation.split()
    if obligation.kind == FALSIFY_UNIVERSAL:
        kind, ctor = FIND_WITNESS, Exists
    else:
        kind, ctor = FALSIFY_UNIVERSAL, Forall
    formula = Not(matrix)
    for v in reversed(vars_):
        formula = ctor(v, formula)
    return Obligation(f"not_{obligation.name}", formula, kind,
                      dict(obligation.search_box),
                      dict(obligation.fixed_constants))
