"""Deterministic execution of hybrid programs under resolved nondeterminism.

All nondeterminism (random assignments, choices, ODE durations, loop
counts) is externalized into a ChoiceScript consumed left to right, so a
run is a pure function of (state, program, script).  States map variable
names to exact rationals where possible; floats appear only on the
numeric ODE fallback path.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .syntax import (
    Add, And, Assign, BoolLit, Box, Choice, Cmp, Diamond, Div, Exists,
    Forall, Iff, Implies, Loop, Mul, Neg, Not, Num, ODE, Or, Pow,
    RandomAssign, Seq, Sub, Test, Var, conjuncts,
)

# States are plain dicts: name -> Fraction (exact) or float (approximate).
State = dict


class UndeclaredVariable(Exception):
    pass


class QuantifierInFormula(Exception):
    pass


class ScriptError(Exception):
    pass


class NumericBlowup(Exception):
    pass


# Fixed-step integrator and evolution-domain grid defaults.
DEFAULT_ODE_STEP = 1 / 64
DEFAULT_GRID_POINTS = 64
DEFAULT_HORIZON = Fraction(100)


def is_exact(value) -> bool:
    return isinstance(value, (Fraction, int))


def eval_term(state: State, term):
    if isinstance(term, Var):
        try:
            return state[term.name]
        except KeyError:
            raise UndeclaredVariable(term.name) from None
    if isinstance(term, Num):
        return term.value
    if isinstance(term, Add):
        return eval_term(state, term.left) + eval_term(state, term.right)
    if isinstance(term, Sub):
        return eval_term(state, term.left) - eval_term(state, term.right)
    if isinstance(term, Mul):
        return eval_term(state, term.left) * eval_term(state, term.right)
    if isinstance(term, Neg):
        return -eval_term(state, term.inner)
    if isinstance(term, Div):
        num = eval_term(state, term.num)
        den = eval_term(state, term.den)
        if is_exact(num) and is_exact(den):
            return Fraction(num, 1) / Fraction(den, 1)
        return num / den
    if isinstance(term, Pow):
        return eval_term(state, term.base) ** term.exp
    raise TypeError(f"not a term: {term!r}")


_CMP = {
    "<=": lambda a, b: a <= b,
    "<": lambda a, b: a < b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def eval_fol(state: State, formula) -> bool:
    """Truth of a quantifier-free, modality-free formula in a state."""
    if isinstance(formula, BoolLit):
        return formula.value
    if isinstance(formula, Cmp):
        return _CMP[formula.op](eval_term(state, formula.left),
                                eval_term(state, formula.right))
    if isinstance(formula, Not):
        return not eval_fol(state, formula.inner)
    if isinstance(formula, And):
        return eval_fol(state, formula.left) and eval_fol(state, formula.right)
    if isinstance(formula, Or):
        return eval_fol(state, formula.left) or eval_fol(state, formula.right)
    if isinstance(formula, Implies):
        return (not eval_fol(state, formula.left)) or eval_fol(state, formula.right)
    if isinstance(formula, Iff):
        return eval_fol(state, formula.left) == eval_fol(state, formula.right)
    if isinstance(formula, (Forall, Exists)):
        raise QuantifierInFormula("quantified formulas are decided by search")
    if isinstance(formula, (Box, Diamond)):
        raise QuantifierInFormula("modalities are decided by search")
    raise TypeError(f"not a formula: {formula!r}")


# ---------------------------------------------------------------------------
# Choice scripts

@dataclass(frozen=True)
class Branch:
    side: str  # 'left' | 'right'

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError("branch side must be 'left' or 'right'")


@dataclass(frozen=True)
class RandomValue:
    value: object  # Fraction or float


@dataclass(frozen=True)
class Duration:
    value: object

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("negative duration")


@dataclass(frozen=True)
class LoopCount:
    count: int

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("negative loop count")


def parse_script(text: str) -> list:
    """Parse a decision-per-line script file.

    Lines: `loop N`, `value V`, `branch left|right`, `duration D`; blank
    lines and `#` comments are skipped.  V and D accept fractions (9/5)
    and decimals (1.8), both read exactly.
    """
    decisions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ScriptError(f"line {lineno}: expected 'keyword argument'")
        keyword, arg = parts
        try:
            if keyword == "loop":
                decisions.append(LoopCount(int(arg)))
            elif keyword == "value":
                decisions.append(RandomValue(Fraction(arg)))
            elif keyword == "branch":
                decisions.append(Branch(arg))
            elif keyword == "duration":
                decisions.append(Duration(Fraction(arg)))
            else:
                raise ScriptError(f"line {lineno}: unknown keyword {keyword!r}")
        except (ValueError, ZeroDivisionError) as exc:
            raise ScriptError(f"line {lineno}: {exc}") from None
    return decisions


def format_script(decisions) -> str:
    lines = []
    for d in decisions:
        if isinstance(d, LoopCount):
            lines.append(f"loop {d.count}")
        elif isinstance(d, RandomValue):
            lines.append(f"value {d.value}")
        elif isinstance(d, Branch):
            lines.append(f"branch {d.side}")
        elif isinstance(d, Duration):
            lines.append(f"duration {d.value}")
        else:
            raise TypeError(d)
    return "\n".join(lines) + ("\n" if lines else "")


class ScriptCursor:
    def __init__(self, decisions):
        self.decisions = list(decisions)
        self.index = 0

    def take(self, kind):
        if self.index >= len(self.decisions):
            raise ScriptError(f"script exhausted; expected {kind.__name__}")
        decision = self.decisions[self.index]
        if not isinstance(decision, kind):
            raise ScriptError(
                f"script mismatch at position {self.index}: expected "
                f"{kind.__name__}, got {type(decision).__name__}")
        self.index += 1
        return decision

    def exhausted(self) -> bool:
        return self.index >= len(self.decisions)


# ---------------------------------------------------------------------------
# Outcomes and traces

@dataclass(frozen=True)
class Final:
    state: State


@dataclass(frozen=True)
class Aborted:
    failed_test: object
    state: State


@dataclass(frozen=True)
class TraceStep:
    time: object
    label: str
    state: State


# ---------------------------------------------------------------------------
# ODE evolution

def closed_form_template(ode: ODE):
    """Match the double-integrator-with-clock template.

    Returns (pos, vel, clock, accel_rhs) or None.  The acceleration right
    hand side must be a variable not evolved by the ODE or a literal.
    """
    if len(ode.equations) != 3:
        return None
    evolved = {v for v, _ in ode.equations}
    pos = vel = clock = accel = None
    for v, rhs in ode.equations:
        if rhs == Num(Fraction(1)):
            clock = v
    if clock is None:
        return None
    for v, rhs in ode.equations:
        if v == clock:
            continue
        if isinstance(rhs, Var) and any(v2 == rhs.name and v2 != clock
                                        for v2, _ in ode.equations):
            pos, vel = v, rhs.name
    if pos is None:
        return None
    for v, rhs in ode.equations:
        if v == vel:
            if isinstance(rhs, Var) and rhs.name not in evolved:
                accel = rhs
            elif isinstance(rhs, Num):
                accel = rhs
            else:
                return None
    if accel is None:
        return None
    return pos, vel, clock, accel


def _linear_in(term, variables) -> bool:
    """Syntactic check that a term is affine in the given variables."""
    def degree(t):
        if isinstance(t, Var):
            return 1 if t.name in variables else 0
        if isinstance(t, Num):
            return 0
        if isinstance(t, (Add, Sub)):
            return max(degree(t.left), degree(t.right))
        if isinstance(t, Neg):
            return degree(t.inner)
        if isinstance(t, Mul):
            return degree(t.left) + degree(t.right)
        if isinstance(t, Div):
            return degree(t.num) + 2 * degree(t.den)
        if isinstance(t, Pow):
            return degree(t.base) * t.exp
        return 2
    return degree(term) <= 1


def _template_state_at(state, template, t):
    pos, vel, clock, accel = template
    a = eval_term(state, accel)
    out = dict(state)
    out[pos] = state[pos] + state[vel] * t + a * t * t / 2
    out[vel] = state[vel] + a * t
    out[clock] = state[clock] + t
    return out


def _domain_conjuncts_affine(ode: ODE, template) -> bool:
    pos, vel, clock, _ = template
    affine_vars = {vel, clock}
    for c in conjuncts(ode.domain):
        if isinstance(c, BoolLit):
            continue
        if not isinstance(c, Cmp):
            return False
        if pos in _vars_of_cmp(c):
            return False
        if not (_linear_in(c.left, affine_vars) and _linear_in(c.right, affine_vars)):
            return False
    return True


def _vars_of_cmp(c: Cmp):
    from .syntax import free_variables
    return free_variables(c.left) | free_variables(c.right)


def evolve_plant(state: State, ode: ODE, duration, *,
                 step=DEFAULT_ODE_STEP, grid_points=DEFAULT_GRID_POINTS):
    """Evolve an ODE for a fixed duration.

    Returns Final(state at duration) when the evolution domain holds
    throughout [0, duration], else Aborted.  The double-integrator
    template uses the exact polynomial solution with endpoint domain
    checks; other ODEs integrate with fixed-step RK4 and check the domain
    on a dense grid.
    """
    if duration < 0:
        raise ValueError("negative duration")
    template = closed_form_template(ode)
    if template is not None and _domain_conjuncts_affine(ode, template):
        start_ok = eval_fol(state, ode.domain)
        end_state = _template_state_at(state, template, duration)
        if not start_ok:
            return Aborted(ode.domain, state)
        if not eval_fol(end_state, ode.domain):
            return Aborted(ode.domain, end_state)
        return Final(end_state)
    return _evolve_numeric(state, ode, duration, step, grid_points)


def _derivatives(state, ode):
    return {v: eval_term(state, rhs) for v, rhs in ode.equations}


def _rk4_step(state, ode, h):
    def shifted(base, deriv, factor):
        out = dict(base)
        for v in deriv:
            out[v] = base[v] + factor * deriv[v]
        return out

    k1 = _derivatives(state, ode)
    k2 = _derivatives(shifted(state, k1, h / 2), ode)
    k3 = _derivatives(shifted(state, k2, h / 2), ode)
    k4 = _derivatives(shifted(state, k3, h), ode)
    out = dict(state)
    for v in k1:
        out[v] = state[v] + (h / 6) * (k1[v] + 2 * k2[v] + 2 * k3[v] + k4[v])
        if not _finite(out[v]):
            raise NumericBlowup(v)
    return out


def _finite(value) -> bool:
    if isinstance(value, float):
        return value == value and abs(value) != float("inf")
    return True


def _evolve_numeric(state, ode, duration, step, grid_points):
    duration = float(duration)
    current = {k: float(v) for k, v in state.items()}
    if not eval_fol(current, ode.domain):
        return Aborted(ode.domain, current)
    # integrate on a uniform grid of grid_points + 2 samples incl. endpoints
    samples = grid_points + 1
    t = 0.0
    for i in range(1, samples + 1):
        target = duration * i / samples
        while t < target - 1e-15:
            h = min(step, target - t)
            current = _rk4_step(current, ode, h)
            t += h
        if not eval_fol(current, ode.domain):
            return Aborted(ode.domain, current)
    return Final(current)


def max_admissible_duration(state: State, ode: ODE, *,
                            horizon=DEFAULT_HORIZON, step=DEFAULT_ODE_STEP,
                            grid_points=DEFAULT_GRID_POINTS, tol=1e-9):
    """Supremum of durations for which the domain holds throughout."""
    template = closed_form_template(ode)
    if not eval_fol(state, ode.domain):
        return Fraction(0)
    if template is not None and _domain_conjuncts_affine(ode, template):
        bound = None
        at0 = state
        at1 = _template_state_at(state, template, Fraction(1))
        for c in conjuncts(ode.domain):
            if isinstance(c, BoolLit):
                continue
            b = _affine_conjunct_bound(at0, at1, c)
            if b is not None:
                bound = b if bound is None else min(bound, b)
        return bound if bound is not None else horizon
    # general case: bisection on the grid-checked predicate
    lo, hi = 0.0, float(horizon)
    if isinstance(_evolve_numeric(state, ode, hi, step, grid_points), Final):
        return hi
    while hi - lo > tol:
        mid = (lo + hi) / 2
        outcome = _evolve_numeric(state, ode, mid, step, grid_points)
        if isinstance(outcome, Final):
            lo = mid
        else:
            hi = mid
    return lo


def _affine_conjunct_bound(at0, at1, c: Cmp):
    """Latest time an affine conjunct still holds, or None if unbounded."""
    def diff(state):
        return eval_term(state, c.left) - eval_term(state, c.right)

    d0 = diff(at0)
    slope = diff(at1) - d0
    if c.op in (">=", ">"):
        sign = 1
    elif c.op in ("<=", "<"):
        sign = -1
        d0, slope = -d0, -slope
    elif c.op == "=":
        return None if slope == 0 else Fraction(0)
    else:  # '!='
        if slope == 0:
            return None
        crossing = -Fraction(d0) / Fraction(slope)
        return crossing if crossing > 0 else None
    # need sign-normalized margin d0 + slope*t >= 0 (or > 0)
    if slope >= 0:
        return None
    return Fraction(d0) / Fraction(-slope)


# ---------------------------------------------------------------------------
# Program execution

def run(state: State, program, script, *, collect_trace=True,
        step=DEFAULT_ODE_STEP, grid_points=DEFAULT_GRID_POINTS):
    """Deterministic replay of a program under a choice script.

    Returns (Outcome, trace).  The trace is a list of TraceStep with
    nondecreasing times, starting at the initial state; it is empty when
    collect_trace is False.
    """
    cursor = script if isinstance(script, ScriptCursor) else ScriptCursor(script)
    trace = []
    clock = [Fraction(0)]
    if collect_trace:
        trace.append(TraceStep(clock[0], "init", dict(state)))
    outcome = _exec(dict(state), program, cursor, trace, clock,
                    collect_trace, step, grid_points)
    if isinstance(outcome, Final) and not cursor.exhausted():
        raise ScriptError(
            f"surplus script decisions from position {cursor.index}")
    return outcome, trace


def _record(trace, clock, label, state, collect):
    if collect:
        trace.append(TraceStep(clock[0], label, dict(state)))


def _exec(state, program, cursor, trace, clock, collect, step, grid_points):
    if isinstance(program, Assign):
        state = dict(state)
        state[program.var] = eval_term(state, program.term)
        _record(trace, clock, f"{program.var} := ...", state, collect)
        return Final(state)
    if isinstance(program, RandomAssign):
        decision = cursor.take(RandomValue)
        state = dict(state)
        state[program.var] = decision.value
        _record(trace, clock, f"{program.var} := *", state, collect)
        return Final(state)
    if isinstance(program, Test):
        if eval_fol(state, program.condition):
            _record(trace, clock, "test", state, collect)
            return Final(state)
        return Aborted(program.condition, state)
    if isinstance(program, ODE):
        decision = cursor.take(Duration)
        outcome = evolve_plant(state, program, decision.value,
                               step=step, grid_points=grid_points)
        if isinstance(outcome, Final):
            clock[0] = clock[0] + decision.value
            _record(trace, clock, "ode", outcome.state, collect)
        return outcome
    if isinstance(program, Choice):
        decision = cursor.take(Branch)
        chosen = program.left if decision.side == "left" else program.right
        return _exec(state, chosen, cursor, trace, clock, collect, step,
                     grid_points)
    if isinstance(program, Seq):
        outcome = _exec(state, program.first, cursor, trace, clock, collect,
                        step, grid_points)
        if isinstance(outcome, Aborted):
            return outcome
        return _exec(outcome.state, program.second, cursor, trace, clock,
                     collect, step, grid_points)
    if isinstance(program, Loop):
        decision = cursor.take(LoopCount)
        for _ in range(decision.count):
            outcome = _exec(state, program.body, cursor, trace, clock,
                            collect, step, grid_points)
            if isinstance(outcome, Aborted):
                return outcome
            state = outcome.state
        return Final(state)
    raise TypeError(f"not a program: {program!r}")
