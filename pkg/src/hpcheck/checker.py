"""Desk-scale obligation checking.

Universal obligations are attacked by searching for a falsifying
assignment of the quantified variables; existential obligations by
searching for a witness.  Candidates come from a coarse-to-fine grid,
seeded uniform sampling and coordinate-descent refinement.  Modalities
are decided by script enumeration; the diamond-over-env pattern
`<e := *; ?P> e = e1` is decided goal-directed (bind e := e1, evaluate P)
with no search.  Every candidate success is re-checked by exact rational
replay before a verdict is emitted, so found-verdicts carry certificates
that cannot be false alarms.

Search cannot prove validity of quantified nonlinear arithmetic:
NotFalsified / NoWitnessFound are budget-exhausted non-results.
"""

from __future__ import annotations

import hashlib
import itertools
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction

from .obligations import FALSIFY_UNIVERSAL, FIND_WITNESS, Obligation
from .semantics import (
    Aborted, Branch, Duration, Final, LoopCount, RandomValue, ScriptCursor,
    eval_fol, eval_term, is_exact, max_admissible_duration, run,
)
from .syntax import (
    And, Assign, BoolLit, Box, Choice, Cmp, Diamond, Forall, Exists, Iff,
    Implies, Loop, Not, Num, ODE, Or, RandomAssign, Seq, Test, Var,
    assigned_variables, conjuncts, free_variables,
)

STRICT_EPS = 1e-12
NUMERIC_PADDING = 1e-9

FALSIFIED = "falsified"
WITNESS_FOUND = "witness_found"
NOT_FALSIFIED = "not_falsified"
NO_WITNESS_FOUND = "no_witness_found"

VERDICT_VOCABULARY = {
    FALSIFIED: "No (counterexample)",
    WITNESS_FOUND: "witness found",
    NOT_FALSIFIED: "consistent with valid",
    NO_WITNESS_FOUND: "no witness within budget",
}


class CheckError(Exception):
    pass


class UnsupportedObligation(CheckError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    budget: int = 200_000
    seed: int = 0
    grid_levels: int = 2
    local_refine_iters: int = 24
    duration_samples_per_ode: int = 4
    values_per_random_assign: int = 6
    loop_counts: tuple = (0, 1, 2)
    # Optional exhaustive mode: every quantified variable takes values from
    # a finite list; no sampling or refinement happens.
    discrete: dict | None = None

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.duration_samples_per_ode < 2:
            raise ValueError("need at least the 0 and max duration samples")


@dataclass
class Stats:
    evaluations: int = 0
    candidates: int = 0
    wall_time: float = 0.0
    discarded_certificates: int = 0


@dataclass
class Verdict:
    status: str
    counterexample: "Counterexample | None"
    stats: Stats
    obligation: Obligation
    seed: int

    @property
    def found(self) -> bool:
        return self.status in (FALSIFIED, WITNESS_FOUND)

    def to_json(self):
        out = {
            "obligation": self.obligation.name,
            "kind": self.obligation.kind,
            "verdict": self.status,
            "evaluations": self.stats.evaluations,
            "seed": self.seed,
        }
        if self.counterexample is not None:
            out["certificate"] = self.counterexample.to_json()
        return out


# Evidence trees mirror the matrix structure along the established path.

@dataclass
class EvLeaf:
    formula: object
    value: bool


@dataclass
class EvNot:
    inner: object


@dataclass
class EvBoth:
    left: object
    right: object


@dataclass
class EvPick:
    side: str  # 'left' | 'right'
    inner: object


@dataclass
class EvScript:
    script: list
    inner: object


@dataclass
class EvGoalFail:
    """Goal-directed refutation of <e := *; ?P> e = e1: P fails at e1."""
    value: object


@dataclass
class Counterexample:
    assignment: dict
    evidence: object
    leaf: tuple  # (innermost quantifier-free formula, truth value)
    scripts: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    numeric_only: bool = False
    margin: float = 0.0

    def to_json(self):
        return {
            "assignment": {k: str(v) for k, v in sorted(self.assignment.items())},
            "scripts": [[_decision_json(d) for d in script]
                        for script in self.scripts],
            "margin": self.margin,
            "exact": not self.numeric_only,
        }


def _decision_json(decision):
    if isinstance(decision, Branch):
        return {"branch": decision.side}
    if isinstance(decision, RandomValue):
        return {"value": str(decision.value)}
    if isinstance(decision, Duration):
        return {"duration": str(decision.value)}
    if isinstance(decision, LoopCount):
        return {"loop": decision.count}
    raise TypeError(decision)


def flatten_scripts(evidence) -> list:
    out = []
    stack = [evidence]
    while stack:
        node = stack.pop(0)
        if isinstance(node, EvScript):
            out.append(node.script)
            stack.insert(0, node.inner)
        elif isinstance(node, EvGoalFail):
            out.append([RandomValue(node.value)])
        elif isinstance(node, EvNot):
            stack.insert(0, node.inner)
        elif isinstance(node, EvBoth):
            stack.insert(0, node.right)
            stack.insert(0, node.left)
        elif isinstance(node, EvPick):
            stack.insert(0, node.inner)
    return out


def innermost_leaf(evidence):
    node = evidence
    last = None
    while node is not None:
        if isinstance(node, EvLeaf):
            last = (node.formula, node.value)
            node = None
        elif isinstance(node, EvNot):
            node = node.inner
        elif isinstance(node, EvBoth):
            last_right = innermost_leaf(node.right)
            return last_right if last_right is not None else innermost_leaf(node.left)
        elif isinstance(node, (EvPick, EvScript)):
            node = node.inner
        elif isinstance(node, EvGoalFail):
            return None
        else:
            node = None
    return last


# ---------------------------------------------------------------------------
# Violation margin

_INF = float("inf")


def violation_margin(state, formula) -> float:
    """Signed margin: > 0 implies true, < 0 implies false.

    Strict comparisons and equalities get an epsilon tie-break; exact
    truth decisions never rely on this margin, it only guides refinement.
    """
    if isinstance(formula, BoolLit):
        return _INF if formula.value else -_INF
    if isinstance(formula, Cmp):
        left = float(eval_term(state, formula.left))
        right = float(eval_term(state, formula.right))
        if formula.op == ">=":
            return left - right
        if formula.op == ">":
            return left - right - STRICT_EPS
        if formula.op == "<=":
            return right - left
        if formula.op == "<":
            return right - left - STRICT_EPS
        if formula.op == "=":
            return -abs(left - right)
        return abs(left - right) - STRICT_EPS  # '!='
    if isinstance(formula, Not):
        return -violation_margin(state, formula.inner)
    if isinstance(formula, And):
        return min(violation_margin(state, formula.left),
                   violation_margin(state, formula.right))
    if isinstance(formula, Or):
        return max(violation_margin(state, formula.left),
                   violation_margin(state, formula.right))
    if isinstance(formula, Implies):
        return max(-violation_margin(state, formula.left),
                   violation_margin(state, formula.right))
    if isinstance(formula, Iff):
        a = violation_margin(state, formula.left)
        b = violation_margin(state, formula.right)
        return min(max(-a, b), max(a, -b))
    raise CheckError("violation margin requires a quantifier-free formula")


# Quantifier-free formulas are compiled to closures once per obligation;
# the search evaluates them millions of times.

def _term_expr(term, consts) -> str:
    from .syntax import Add, Div, Mul, Neg, Pow, Sub
    if isinstance(term, Var):
        return f"s[{term.name!r}]"
    if isinstance(term, Num):
        consts.append(term.value)
        return f"_C[{len(consts) - 1}]"
    if isinstance(term, Add):
        return f"({_term_expr(term.left, consts)} + {_term_expr(term.right, consts)})"
    if isinstance(term, Sub):
        return f"({_term_expr(term.left, consts)} - {_term_expr(term.right, consts)})"
    if isinstance(term, Mul):
        return f"({_term_expr(term.left, consts)} * {_term_expr(term.right, consts)})"
    if isinstance(term, Neg):
        return f"(-{_term_expr(term.inner, consts)})"
    from .syntax import Div as _Div
    if isinstance(term, _Div):
        return f"({_term_expr(term.num, consts)} / {_term_expr(term.den, consts)})"
    if isinstance(term, Pow):
        return f"({_term_expr(term.base, consts)} ** {term.exp})"
    raise TypeError(term)


_PYOP = {"<=": "<=", "<": "<", ">=": ">=", ">": ">", "=": "==", "!=": "!="}


def _fol_expr(formula, consts) -> str:
    if isinstance(formula, BoolLit):
        return "True" if formula.value else "False"
    if isinstance(formula, Cmp):
        return (f"({_term_expr(formula.left, consts)} {_PYOP[formula.op]} "
                f"{_term_expr(formula.right, consts)})")
    if isinstance(formula, Not):
        return f"(not {_fol_expr(formula.inner, consts)})"
    if isinstance(formula, And):
        return f"({_fol_expr(formula.left, consts)} and {_fol_expr(formula.right, consts)})"
    if isinstance(formula, Or):
        return f"({_fol_expr(formula.left, consts)} or {_fol_expr(formula.right, consts)})"
    if isinstance(formula, Implies):
        return f"((not {_fol_expr(formula.left, consts)}) or {_fol_expr(formula.right, consts)})"
    if isinstance(formula, Iff):
        return f"({_fol_expr(formula.left, consts)} == {_fol_expr(formula.right, consts)})"
    raise TypeError(formula)


def compile_fol(formula):
    """state -> bool, equivalent to eval_fol on quantifier-free input."""
    consts = []
    expr = _fol_expr(formula, consts)
    return eval(f"lambda s: {expr}", {"_C": consts})


def compile_term(term):
    consts = []
    expr = _term_expr(term, consts)
    return eval(f"lambda s: {expr}", {"_C": consts})


def _has_modality(formula, memo) -> bool:
    key = id(formula)
    if key in memo:
        return memo[key]
    if isinstance(formula, (Box, Diamond)):
        out = True
    elif isinstance(formula, Not):
        out = _has_modality(formula.inner, memo)
    elif isinstance(formula, (And, Or, Implies, Iff)):
        out = (_has_modality(formula.left, memo)
               or _has_modality(formula.right, memo))
    elif isinstance(formula, (Forall, Exists)):
        raise UnsupportedObligation(
            "inner quantifiers are not supported; close the formula instead")
    else:
        out = False
    memo[key] = out
    return out


def _env_goal_pattern(diamond: Diamond):
    """Match <x := *; ?P> (x = t) with x not free in t; return (x, P, t)."""
    p = diamond.program
    if not (isinstance(p, Seq) and isinstance(p.first, RandomAssign)
            and isinstance(p.second, Test)):
        return None
    post = diamond.post
    if not (isinstance(post, Cmp) and post.op == "="):
        return None
    x = p.first.var
    for pinned, other in ((post.left, post.right), (post.right, post.left)):
        if pinned == Var(x) and x not in free_variables(other):
            return x, p.second.condition, other
    return None


# ---------------------------------------------------------------------------
# Search engine

class _Engine:
    def __init__(self, obligation: Obligation, config: SearchConfig):
        self.obligation = obligation
        self.config = config
        self.stats = Stats()
        self.memo = {}
        self.want_margin = True  # cleared for most stream candidates
        self._fol_cache = {}
        self._ode_cache = {}
        self._goal_cache = {}
        self._binop_cache = {}
        self._sampler_cache = {}
        self._rng = None
        self._rng_key = ("", 0)

    def reset_rng(self, salt: str):
        """Reseed lazily; most candidates never draw a sample."""
        self._rng = None
        self._rng_key = salt

    @property
    def rng(self):
        if self._rng is None:
            self._rng = random.Random(
                _derive_seed(self.config.seed, self.obligation.name,
                             self._rng_key))
        return self._rng

    def _fol(self, formula):
        fn = self._fol_cache.get(id(formula))
        if fn is None:
            fn = compile_fol(formula)
            self._fol_cache[id(formula)] = fn
        return fn

    # budget ---------------------------------------------------------------

    def _count(self, n=1):
        self.stats.evaluations += n

    def over_budget(self) -> bool:
        return self.stats.evaluations >= self.config.budget

    # leaf evaluation ------------------------------------------------------

    def _leaf(self, state, formula, target):
        self._count()
        truth = self._fol(formula)(state)
        if self.want_margin:
            margin = violation_margin(state, formula)
            oriented = margin if target else -margin
        else:
            oriented = 1.0 if truth == target else -1.0
        if truth == target:
            return EvLeaf(formula, truth), oriented
        return None, oriented

    # establish ------------------------------------------------------------

    def establish(self, state, formula, target):
        """Try to make `formula` evaluate to `target` in `state`.

        Returns (evidence or None, oriented margin); larger margin means
        closer to success.
        """
        if not _has_modality(formula, self.memo):
            return self._leaf(state, formula, target)
        if isinstance(formula, Not):
            return self.establish(state, formula.inner, not target)
        if isinstance(formula, (And, Or, Implies)):
            ops = self._binop_cache.get(id(formula))
            if ops is None:
                if isinstance(formula, And):
                    ops = (formula.left, formula.right, True)
                elif isinstance(formula, Or):
                    ops = (formula.left, formula.right, False)
                else:
                    ops = (Not(formula.left), formula.right, False)
                self._binop_cache[id(formula)] = ops
            left, right, both_on_true = ops
            return self._binary(state, left, right, target,
                                both_needed=both_on_true == target)
        if isinstance(formula, Iff):
            raise UnsupportedObligation("modal <-> is not supported")
        if isinstance(formula, Box):
            if target:
                raise UnsupportedObligation(
                    "cannot establish a box by search; negate the obligation")
            return self._refute_box(state, formula)
        if isinstance(formula, Diamond):
            return self._diamond(state, formula, target)
        raise CheckError(f"unexpected formula {formula!r}")

    def _binary(self, state, left, right, target, both_needed):
        if both_needed:
            ev_l, m_l = self.establish(state, left, target)
            if ev_l is None and _has_modality(right, self.memo):
                return None, m_l  # skip an expensive doomed operand
            ev_r, m_r = self.establish(state, right, target)
            margin = min(m_l, m_r)
            if ev_l is not None and ev_r is not None:
                return EvBoth(ev_l, ev_r), margin
            return None, margin
        ev_l, m_l = self.establish(state, left, target)
        if ev_l is not None:
            return EvPick("left", ev_l), m_l
        ev_r, m_r = self.establish(state, right, target)
        if ev_r is not None:
            return EvPick("right", ev_r), max(m_l, m_r)
        return None, max(m_l, m_r)

    def _refute_box(self, state, box: Box):
        best = -_INF
        for final_state, script in self._runs(state, box.program):
            ev, margin = self.establish(final_state, box.post, False)
            best = max(best, margin)
            if ev is not None:
                return EvScript(script, ev), margin
            if self.over_budget():
                break
        return None, best

    def _diamond(self, state, diamond: Diamond, target):
        if id(diamond) in self._goal_cache:
            goal = self._goal_cache[id(diamond)]
        else:
            goal = _env_goal_pattern(diamond)
            self._goal_cache[id(diamond)] = goal
        if goal is not None:
            x, test, pin_term = goal
            value = eval_term(state, pin_term)
            bound = dict(state)
            bound[x] = value
            self._count()
            holds = self._fol(test)(bound)
            margin = violation_margin(bound, test) if self.want_margin \
                else (1.0 if holds else -1.0)
            if target:
                if holds:
                    return EvScript([RandomValue(value)],
                                    EvLeaf(diamond.post, True)), margin
                return None, margin
            if not holds:
                return EvGoalFail(value), -margin
            return None, -margin
        if not target:
            raise UnsupportedObligation(
                "cannot refute a general diamond by search")
        best = -_INF
        for final_state, script in self._runs(state, diamond.program):
            ev, margin = self.establish(final_state, diamond.post, True)
            best = max(best, margin)
            if ev is not None:
                return EvScript(script, ev), margin
            if self.over_budget():
                break
        return None, best

    # run enumeration ------------------------------------------------------

    def _runs(self, state, program):
        """Enumerate non-aborting runs as (final state, script)."""
        if isinstance(program, Assign):
            out = dict(state)
            out[program.var] = eval_term(state, program.term)
            yield out, []
            return
        if isinstance(program, RandomAssign):
            following = None
            for value in self._random_values(state, program.var, following):
                out = dict(state)
                out[program.var] = value
                yield out, [RandomValue(value)]
            return
        if isinstance(program, Test):
            self._count()
            if self._fol(program.condition)(state):
                yield state, []
            return
        if isinstance(program, ODE):
            for duration in self._durations(state, program):
                outcome = self._evolve(state, program, duration)
                if isinstance(outcome, Final):
                    yield outcome.state, [Duration(duration)]
            return
        if isinstance(program, Choice):
            yield from self._prefixed(state, program.left, Branch("left"))
            if not self.over_budget():
                yield from self._prefixed(state, program.right, Branch("right"))
            return
        if isinstance(program, Seq):
            first, second = program.first, program.second
            # fuse `x := *; ?P` so the test can pin candidate values
            if isinstance(first, RandomAssign) and isinstance(second, Test):
                test_fn = self._fol(second.condition)
                for value in self._random_values(state, first.var,
                                                 second.condition):
                    out = dict(state)
                    out[first.var] = value
                    self._count()
                    if test_fn(out):
                        yield out, [RandomValue(value)]
                return
            for mid_state, script1 in self._runs(state, first):
                for final_state, script2 in self._runs(mid_state, second):
                    yield final_state, script1 + script2
                    if self.over_budget():
                        return
                if self.over_budget():
                    return
            return
        if isinstance(program, Loop):
            for count in self.config.loop_counts:
                for final_state, script in self._unroll(state, program.body,
                                                        count):
                    yield final_state, [LoopCount(count)] + script
                if self.over_budget():
                    return
            return
        raise CheckError(f"unexpected program {program!r}")

    def _prefixed(self, state, program, decision):
        for final_state, script in self._runs(state, program):
            yield final_state, [decision] + script

    def _unroll(self, state, body, count):
        if count == 0:
            yield state, []
            return
        for mid_state, script1 in self._runs(state, body):
            for final_state, script2 in self._unroll(mid_state, body, count - 1):
                yield final_state, script1 + script2

    def _ode_info(self, ode):
        info = self._ode_cache.get(id(ode))
        if info is None:
            from .semantics import (_domain_conjuncts_affine,
                                    closed_form_template)
            template = closed_form_template(ode)
            if template is not None and _domain_conjuncts_affine(ode, template):
                info = (template, self._fol(ode.domain))
            else:
                info = (None, None)
            self._ode_cache[id(ode)] = info
        return info

    def _evolve(self, state, ode, duration):
        self._count(2)
        template, domain_fn = self._ode_info(ode)
        if template is None:
            from .semantics import evolve_plant
            return evolve_plant(state, ode, duration)
        from .semantics import _template_state_at
        if not domain_fn(state):
            return Aborted(ode.domain, state)
        end = _template_state_at(state, template, duration)
        if not domain_fn(end):
            return Aborted(ode.domain, end)
        return Final(end)

    def _random_values(self, state, var, following_test):
        lo, hi = self.obligation.search_box.get(
            var, self._box_fallback(var))
        values = []
        if following_test is not None:
            values.extend(self._pins(state, var, following_test))
        values.extend([lo, hi])
        for _ in range(self.config.values_per_random_assign):
            values.append(self._uniform(lo, hi))
        seen = set()
        out = []
        for v in values:
            if v not in seen:
                seen.add(v)
                out.append(v)
        return out

    def _box_fallback(self, var):
        from .parser import DEFAULT_DOMAIN
        for suffix in ("_post", "_prev"):
            if var.endswith(suffix):
                base = var[: -len(suffix)]
                if base in self.obligation.search_box:
                    return self.obligation.search_box[base]
        return DEFAULT_DOMAIN

    def _pins(self, state, var, test):
        """Boundary values of `var` from affine conjuncts of the test."""
        pins = []
        for diff_fn in self._pin_diffs(test, var):
            probe = dict(state)
            try:
                probe[var] = Fraction(0)
                d0 = diff_fn(probe)
                probe[var] = Fraction(1)
                d1 = diff_fn(probe)
            except Exception:
                continue
            slope = d1 - d0
            if slope != 0:
                probe[var] = Fraction(2)
                d2 = diff_fn(probe)
                if d2 - d1 == d1 - d0:  # affine in var, boundary is exact
                    pins.append(-Fraction(d0) / Fraction(slope))
        return pins

    def _pin_diffs(self, test, var):
        key = (id(test), var)
        fns = self._ode_cache.get(key)
        if fns is None:
            from .syntax import Sub
            fns = []
            for c in conjuncts(test):
                if not isinstance(c, Cmp):
                    continue
                if var in free_variables(c.left) | free_variables(c.right):
                    fns.append(compile_term(Sub(c.left, c.right)))
            self._ode_cache[key] = fns
        return fns

    def _durations(self, state, ode):
        self._count(2)
        maximum = max_admissible_duration(state, ode)
        if maximum <= 0:
            return [Fraction(0)]
        out = [maximum, Fraction(0)]
        for _ in range(self.config.duration_samples_per_ode - 2):
            out.append(self._uniform(Fraction(0), maximum))
        return out

    def _uniform(self, lo, hi):
        mk = self._sampler_cache.get((lo, hi))
        if mk is None:
            mk = _sampler(lo, hi)
            self._sampler_cache[(lo, hi)] = mk
        return mk(self.rng.getrandbits(16))


# ---------------------------------------------------------------------------
# Candidate streams

def _derive_seed(seed, name, salt=""):
    digest = hashlib.blake2b(f"{seed}:{name}:{salt}".encode(),
                             digest_size=8).digest()
    return int.from_bytes(digest, "big")


def _grid_points(lo, hi, level):
    n = 1 << (level + 1)
    return [(lo + (hi - lo) * Fraction(i, n), i) for i in range(n + 1)]


def _sampler(lo, hi):
    """Fast exact uniform sampler over [lo, hi] with denominator 2^16."""
    import math
    span = hi - lo
    d = lo.denominator * span.denominator // math.gcd(lo.denominator,
                                                      span.denominator)
    base = int(lo * d) << 16
    step = int(span * d)
    den = d << 16
    return lambda n: Fraction(base + n * step, den)


def _candidates(search_vars, box, config, rng):
    if config.discrete is not None:
        lists = [config.discrete[v] for v in search_vars]
        for combo in itertools.product(*lists):
            yield dict(zip(search_vars, combo))
        return
    if not search_vars:
        yield {}
        return
    for level in range(config.grid_levels + 1):
        axes = [_grid_points(*box[v], level) for v in search_vars]
        for combo in itertools.product(*axes):
            if level > 0 and all(i % 2 == 0 for _, i in combo):
                continue  # already visited at the previous level
            yield {v: value for v, (value, _) in zip(search_vars, combo)}
    samplers = [(v, _sampler(*box[v])) for v in search_vars]
    bits = rng.getrandbits
    while True:
        yield {v: mk(bits(16)) for v, mk in samplers}


def _uniform_frac(rng, lo, hi):
    return lo + (hi - lo) * Fraction(rng.randrange(1 << 16), 1 << 16)


# ---------------------------------------------------------------------------
# Certification (exact replay)

class _Replayer:
    def __init__(self):
        self.trace = []
        self.numeric_only = False
        self.last_leaf = None

    def replay(self, state, formula, target, evidence) -> bool:
        # search walks through Not without recording a node of its own
        while isinstance(formula, Not) and not isinstance(evidence, EvLeaf):
            if isinstance(evidence, EvNot):
                evidence = evidence.inner
            formula, target = formula.inner, not target
        if isinstance(evidence, EvLeaf):
            truth = self._eval_exact(state, evidence.formula)
            self.last_leaf = (evidence.formula, truth)
            return truth == target and truth == evidence.value
        if isinstance(evidence, EvNot):
            if not isinstance(formula, Not):
                return False
            return self.replay(state, formula.inner, not target, evidence.inner)
        if isinstance(evidence, EvBoth):
            left, right = _operands(formula, target, both=True)
            if left is None:
                return False
            return (self.replay(state, left, target, evidence.left)
                    and self.replay(state, right, target, evidence.right))
        if isinstance(evidence, EvPick):
            left, right = _operands(formula, target, both=False)
            if left is None:
                return False
            chosen = left if evidence.side == "left" else right
            return self.replay(state, chosen, target, evidence.inner)
        if isinstance(evidence, EvScript):
            if isinstance(formula, Box) and not target:
                program, post, post_target = formula.program, formula.post, False
            elif isinstance(formula, Diamond) and target:
                program, post, post_target = formula.program, formula.post, True
            else:
                return False
            outcome, trace = run(state, program, evidence.script)
            self.trace.extend(trace)
            if not isinstance(outcome, Final):
                return False
            if any(not is_exact(v) for v in outcome.state.values()):
                self.numeric_only = True
            return self.replay(outcome.state, post, post_target, evidence.inner)
        if isinstance(evidence, EvGoalFail):
            if not (isinstance(formula, Diamond) and not target):
                return False
            goal = _env_goal_pattern(formula)
            if goal is None:
                return False
            x, test, pin_term = goal
            if evidence.value != eval_term(state, pin_term):
                return False
            outcome, trace = run(state, formula.program,
                                 [RandomValue(evidence.value)])
            self.trace.extend(trace)
            self.last_leaf = (test, False)
            return isinstance(outcome, Aborted)
        return False

    def _eval_exact(self, state, formula) -> bool:
        truth = eval_fol(state, formula)
        if any(not is_exact(v) for v in state.values()):
            self.numeric_only = True
            # float replay tolerates boundary wobble within the padding
            if abs(violation_margin(state, formula)) <= NUMERIC_PADDING:
                return truth
        return truth


def _operands(formula, target, both):
    """Operand pair of a binary connective for the given target polarity."""
    if isinstance(formula, And):
        needs_both = target
        left, right = formula.left, formula.right
    elif isinstance(formula, Or):
        needs_both = not target
        left, right = formula.left, formula.right
    elif isinstance(formula, Implies):
        needs_both = not target
        left, right = Not(formula.left), formula.right
    else:
        return None, None
    if needs_both != both:
        return None, None
    return left, right


def certify(counterexample: Counterexample, obligation: Obligation) -> bool:
    """Replay the certificate with exact rational arithmetic.

    Returns True iff the recorded truth value is reproduced.  When a
    non-closed-form ODE forces floating point, the replay downgrades to
    numeric with interval padding and the certificate is marked
    `numeric_only`.
    """
    target = obligation.kind == FIND_WITNESS
    state = {}
    for k, v in obligation.fixed_constants.items():
        state[k] = Fraction(v)
    for k, v in counterexample.assignment.items():
        state[k] = Fraction(v)
    _, matrix = obligation.split()
    for var in _plumbing_vars(obligation, state):
        state.setdefault(var, Fraction(0))
    replayer = _Replayer()
    try:
        ok = replayer.replay(state, matrix, target, counterexample.evidence)
    except Exception:
        return False
    if not ok:
        return False
    counterexample.trace = replayer.trace
    counterexample.numeric_only = replayer.numeric_only
    if replayer.last_leaf is not None:
        counterexample.leaf = replayer.last_leaf
    return True


def _plumbing_vars(obligation, state):
    return free_variables(obligation.formula) - set(state)


# ---------------------------------------------------------------------------
# Main entry points

def check(obligation: Obligation, config: SearchConfig = SearchConfig()) -> Verdict:
    """Decide an obligation within a search budget.

    FalsifyUniversal: search for an assignment making the matrix false.
    FindWitness: search for an assignment making the matrix true.
    Deterministic in (obligation, config) including the seed.
    """
    start = time.perf_counter()
    target = obligation.kind == FIND_WITNESS
    quantified, matrix = obligation.split()
    uncovered = (free_variables(obligation.formula)
                 - set(obligation.fixed_constants) - set(quantified)
                 - _assigned_in(matrix))
    if uncovered:
        raise CheckError(f"uncoverable free symbols: {sorted(uncovered)}")

    engine = _Engine(obligation, config)
    matrix_vars = free_variables(matrix)
    search_vars = [v for v in quantified if v in matrix_vars]
    box = obligation.search_box
    stream_rng = random.Random(_derive_seed(config.seed, obligation.name, "grid"))
    base_state = {k: Fraction(v) for k, v in obligation.fixed_constants.items()}
    for v in quantified:
        if v not in search_vars:
            lo, hi = box[v]
            base_state[v] = (lo + hi) / 2
    for v in _assigned_in(matrix) - set(base_state) - set(search_vars):
        base_state[v] = Fraction(0)

    best_margin = -_INF
    best_candidate = None
    exhaustive = config.discrete is not None
    for index, candidate in enumerate(_candidates(search_vars, box, config,
                                                  stream_rng)):
        if engine.over_budget():
            break
        engine.stats.candidates += 1
        # margins are only needed to seed refinement; skip the float work
        # for most candidates
        engine.want_margin = index % 64 == 0
        engine.reset_rng(str(index))
        verdict = _try_candidate(engine, base_state, candidate, matrix, target,
                                 obligation, quantified)
        if isinstance(verdict, Counterexample):
            return _found(obligation, config, engine, verdict, start)
        if verdict > best_margin:
            best_margin = verdict
            best_candidate = candidate

    engine.want_margin = True
    if not exhaustive and best_candidate is not None \
            and not engine.over_budget():
        found = _refine(engine, base_state, dict(best_candidate), matrix,
                        target, obligation, quantified, best_margin)
        if found is not None:
            return _found(obligation, config, engine, found, start)

    engine.stats.wall_time = time.perf_counter() - start
    status = NO_WITNESS_FOUND if target else NOT_FALSIFIED
    return Verdict(status, None, engine.stats, obligation, config.seed)


def _assigned_in(matrix):
    out = set()
    stack = [matrix]
    while stack:
        node = stack.pop()
        if isinstance(node, (Box, Diamond)):
            out |= assigned_variables(node.program)
            stack.append(node.post)
        elif isinstance(node, Not):
            stack.append(node.inner)
        elif isinstance(node, (And, Or, Implies, Iff)):
            stack.extend((node.left, node.right))
    return out


def _try_candidate(engine, base_state, candidate, matrix, target, obligation,
                   quantified):
    state = dict(base_state)
    state.update(candidate)
    evidence, margin = engine.establish(state, matrix, target)
    if evidence is None:
        return margin
    assignment = {v: state[v] for v in quantified}
    leaf = innermost_leaf(evidence) or (matrix, target)
    cex = Counterexample(assignment, evidence, leaf,
                         scripts=flatten_scripts(evidence),
                         margin=margin if margin not in (_INF, -_INF) else 0.0)
    if certify(cex, obligation):
        return cex
    engine.stats.discarded_certificates += 1
    return margin


def _refine(engine, base_state, candidate, matrix, target, obligation,
            quantified, margin):
    """Coordinate descent on the violation margin around the best sample."""
    box = obligation.search_box
    steps = {v: (box[v][1] - box[v][0]) / 8 for v in candidate}
    for _ in range(engine.config.local_refine_iters):
        if engine.over_budget():
            return None
        improved = False
        for v in candidate:
            for direction in (1, -1):
                trial = dict(candidate)
                trial[v] = _clamp(candidate[v] + direction * steps[v], *box[v])
                if trial[v] == candidate[v]:
                    continue
                result = _try_candidate(engine, base_state, trial, matrix,
                                        target, obligation, quantified)
                if isinstance(result, Counterexample):
                    return result
                if result > margin:
                    margin = result
                    candidate = trial
                    improved = True
                    break
        if not improved:
            for v in steps:
                steps[v] = steps[v] / 2
    return None


def _clamp(value, lo, hi):
    return max(lo, min(hi, value))


def _found(obligation, config, engine, cex, start):
    engine.stats.wall_time = time.perf_counter() - start
    status = WITNESS_FOUND if obligation.kind == FIND_WITNESS else FALSIFIED
    return Verdict(status, cex, engine.stats, obligation, config.seed)


# ---------------------------------------------------------------------------
# Suites

@dataclass
class Report:
    rows: list = field(default_factory=list)
    caveat: str = ("search-based verdicts: 'consistent with valid' and "
                   "'no witness within budget' are budget-exhausted "
                   "non-results, not proofs")


def obligations_for(model, zeta_name: str, kind):
    from . import obligations as ob
    if zeta_name not in model.invariants:
        raise CheckError(f"unknown invariant {zeta_name!r}")
    zeta = model.invariants[zeta_name]
    if isinstance(kind, tuple) and kind[0] == "psi":
        _, general_name, inst_var, inst_term = kind
        from .parser import parse_term
        term = inst_term if not isinstance(inst_term, str) else parse_term(inst_term)
        return [ob.psi_obligation(model, model.invariants[general_name],
                                  inst_var, term)]
    if kind == "loop":
        return ob.loop_obligations(model, zeta)
    if kind == "rho":
        return [ob.rho_obligation(model, zeta)]
    if kind == "exploit":
        return [ob.exploit_witness_formula(model, zeta)]
    if kind == "chi":
        return [ob.chi_obligation(model, zeta)[0]]
    if kind == "not_chi":
        return [ob.chi_obligation(model, zeta)[1]]
    if kind == "friendly":
        return [ob.friendliness_probe(model)]
    raise CheckError(f"unknown obligation selector {kind!r}")


def derive_controller_witness(model, zeta_instantiated, psi_verdict):
    """Turn a controller-necessity witness into an uncontrolled-step witness.

    A witness of the necessity existential provides a state where the
    instantiated invariant holds and scripts through env;aux and plant
    after which it fails.  Replaying the same decisions through
    env;aux;plant from the same state breaks the invariant with ctrl
    removed, so it certifies the negated preservation existential.
    Returns the (obligation, certified verdict) pair.
    """
    from .obligations import chi_obligation
    if not psi_verdict.found or psi_verdict.counterexample is None:
        raise CheckError("necessity witness required")
    psi_cex = psi_verdict.counterexample
    scripts = psi_cex.scripts
    if len(scripts) != 2:
        raise CheckError("unexpected witness shape")
    env_aux_script, plant_script = scripts
    combined = list(env_aux_script) + list(plant_script)
    _, not_chi = chi_obligation(model, zeta_instantiated)
    matrix = not_chi.matrix()
    if not isinstance(matrix, And) or not isinstance(matrix.right, Diamond):
        raise CheckError("unexpected obligation shape")
    post = matrix.right.post  # Not(zeta)
    evidence = EvBoth(EvLeaf(matrix.left, True),
                      EvScript(combined, EvLeaf(post, True)))
    assignment = dict(psi_cex.assignment)
    for var in not_chi.quantified_vars():
        if var not in assignment:
            lo, hi = not_chi.search_box[var]
            assignment[var] = (lo + hi) / 2
    cex = Counterexample(assignment, evidence, (post, True),
                         scripts=[combined])
    if not certify(cex, not_chi):
        raise CheckError("derived witness failed certification")
    verdict = Verdict(WITNESS_FOUND, cex, Stats(), not_chi, psi_verdict.seed)
    return not_chi, verdict


def check_suite(model, suite_spec, config: SearchConfig = SearchConfig()) -> Report:
    """Run named obligations per invariant; deterministic given the seed."""
    report = Report()
    for zeta_name, kinds in suite_spec:
        for kind in kinds:
            for obligation in obligations_for(model, zeta_name, kind):
                verdict = check(obligation, config)
                report.rows.append({
                    "invariant": zeta_name,
                    "obligation": obligation.name,
                    "kind": obligation.kind,
                    "verdict": verdict.status,
                    "summary": VERDICT_VOCABULARY[verdict.status],
                    "evaluations": verdict.stats.evaluations,
                })
    return report
