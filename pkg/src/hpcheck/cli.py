"""Command line front end: parse, simulate, check, table2.

Exit codes: 0 success (and, for table2, all rows matching), 1 a
counterexample or witness was found, 2 usage or parse error, 3 internal
certification failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

from . import __version__
from .checker import (
    FALSIFIED, NO_WITNESS_FOUND, NOT_FALSIFIED, VERDICT_VOCABULARY,
    WITNESS_FOUND, CheckError, SearchConfig, UnsupportedObligation, certify,
    check, obligations_for,
)
from .model import Model
from .models import MODEL_IDS, builtin, table2_suite
from .obligations import FALSIFY_UNIVERSAL, MissingRelation
from .parser import ParseError, parse_model, parse_term
from .printer import print_model
from .semantics import (
    Aborted, Branch, Duration, Final, LoopCount, RandomValue, ScriptError,
    eval_fol, eval_term, max_admissible_duration, parse_script, run,
)
from .syntax import Choice, Loop, ODE, RandomAssign, Seq, Test

EXIT_OK = 0
EXIT_FOUND = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3

SELECTORS = ("loop", "rho", "gamma", "exploit", "chi", "not-chi", "psi",
             "friendly", "all")

CAVEAT = ("note: 'consistent with valid' / 'no witness within budget' are "
          "budget-exhausted search results, not proofs")


class UsageError(Exception):
    pass


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (UsageError, ParseError, ScriptError, MissingRelation,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckError, UnsupportedObligation) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="hpcheck",
        description="Model-level checking of hybrid-program control models.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("parse", help="parse a model file and echo it back")
    p.add_argument("model")
    _common_flags(p)
    p.set_defaults(handler=cmd_parse)

    p = sub.add_parser("simulate", help="replay or sample executions")
    p.add_argument("model")
    p.add_argument("--script", help="choice script file")
    p.add_argument("--random", type=int, metavar="N",
                   help="sample N random executions")
    _common_flags(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("check", help="check obligations for one invariant")
    p.add_argument("model")
    p.add_argument("--invariant", required=True)
    p.add_argument("--obligation", default="all", choices=SELECTORS)
    _common_flags(p)
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser("table2", help="run the bundled eight-row suite")
    _common_flags(p)
    p.set_defaults(handler=cmd_table2)
    return parser


def _common_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=200_000)
    p.add_argument("--box", action="append", default=[], metavar="VAR=LO:HI")
    p.add_argument("--const", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--trace", metavar="PATH")


def _load_model(path: str) -> Model:
    if path in MODEL_IDS:
        # a fresh parse: --box/--const may mutate the returned model, and
        # the builtin() instance is cached and shared
        return parse_model(builtin(path).source, name=path)
    with open(path) as fh:
        text = fh.read()
    name = os.path.splitext(os.path.basename(path))[0]
    return parse_model(text, name=name)


def _model_hash(model: Model) -> str:
    return hashlib.sha256(model.source.encode()).hexdigest()[:16]


def _parse_pairs(pairs, what):
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"bad {what} {pair!r}; expected NAME=VALUE")
        name, value = pair.split("=", 1)
        out[name.strip()] = value.strip()
    return out


def _parse_const_value(text):
    try:
        return eval_term({}, parse_term(text))
    except Exception:
        raise UsageError(f"bad constant value {text!r}") from None


def _apply_overrides(model: Model, args):
    """Return (box overrides, constant overrides) from CLI flags."""
    boxes = {}
    for var, spec in _parse_pairs(args.box, "box").items():
        if ":" not in spec:
            raise UsageError(f"bad box {spec!r}; expected LO:HI")
        lo, hi = spec.split(":", 1)
        boxes[var] = (_parse_const_value(lo), _parse_const_value(hi))
    consts = {name: _parse_const_value(value)
              for name, value in _parse_pairs(args.const, "const").items()}
    model.domains.update(boxes)
    return boxes, consts


def _config_echo(args, boxes, consts):
    return {
        "seed": args.seed,
        "budget": args.budget,
        "boxes": {v: [str(lo), str(hi)] for v, (lo, hi) in sorted(boxes.items())},
        "constants": {k: str(v) for k, v in sorted(consts.items())},
    }


def _emit(args, report: dict, text_lines):
    if args.format == "json":
        print(json.dumps(report, sort_keys=True, indent=2))
    else:
        for line in text_lines:
            print(line)


# ---------------------------------------------------------------------------
# parse

def cmd_parse(args) -> int:
    model = _load_model(args.model)
    report = {
        "version": __version__,
        "model": model.name,
        "model_hash": _model_hash(model),
        "nonstandard_shape": model.nonstandard_shape,
        "warnings": model.warnings,
        "invariants": sorted(model.invariants),
    }
    lines = [print_model(model).rstrip("\n")]
    for w in model.warnings:
        lines.append(f"warning: {w}")
    if model.nonstandard_shape:
        lines.append("note: model does not follow the env/aux/ctrl/plant shape")
    _emit(args, report, lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate

def _initial_state(model: Model, consts):
    state = {k: Fraction(v) for k, v in model.constant_values().items()}
    for var in model.domains:
        state.setdefault(var, Fraction(0))
    state.setdefault(model.time_var, Fraction(0))
    for name, value in consts.items():
        state[name] = Fraction(value)
    return state


def _trace_vars(model: Model):
    ordered = [v for v in model.domains]
    if model.time_var not in ordered:
        ordered.append(model.time_var)
    return ordered

def _write_trace(path, model, trace):
    ordered = _trace_vars(model)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "construct", "t"] + ordered)
        for i, step in enumerate(trace):
            row = [i, step.label, _num_str(step.time)]
            row.extend(_num_str(step.state[v]) if v in step.state else ""
                       for v in ordered)
            writer.writerow(row)


def _num_str(value):
    if isinstance(value, Fraction):
        return str(value)
    return repr(value)


def _random_script(model: Model, initial, rng, max_loops=3):
    """Resolve every nondeterminism point uniformly at random."""
    decisions = []

    def walk(state, program):
        if isinstance(program, RandomAssign):
            lo, hi = model.search_interval(program.var)
            value = lo + (hi - lo) * Fraction(rng.randrange(1 << 16), 1 << 16)
            decisions.append(RandomValue(value))
            out = dict(state)
            out[program.var] = value
            return Final(out)
        if isinstance(program, ODE):
            maximum = max_admissible_duration(state, program)
            duration = maximum * Fraction(rng.randrange(1 << 16), 1 << 16) \
                if maximum > 0 else Fraction(0)
            if rng.random() < 0.5 and maximum > 0:
                duration = maximum
            decisions.append(Duration(duration))
            from .semantics import evolve_plant
            return evolve_plant(state, program, duration)
        if isinstance(program, Choice):
            side = rng.choice(("left", "right"))
            decisions.append(Branch(side))
            chosen = program.left if side == "left" else program.right
            return walk(state, chosen)
        if isinstance(program, Seq):
            outcome = walk(state, program.first)
            if isinstance(outcome, Aborted):
                return outcome
            return walk(outcome.state, program.second)
        if isinstance(program, Loop):
            count = rng.randrange(max_loops + 1)
            decisions.append(LoopCount(count))
            for _ in range(count):
                outcome = walk(state, program.body)
                if isinstance(outcome, Aborted):
                    return outcome
                state = outcome.state
            return Final(state)
        if isinstance(program, Test):
            if eval_fol(state, program.condition):
                return Final(state)
            return Aborted(program.condition, state)
        from .syntax import Assign
        if isinstance(program, Assign):
            out = dict(state)
            out[program.var] = eval_term(state, program.term)
            return Final(out)
        raise TypeError(program)

    outcome = walk(dict(initial), model.loop_program())
    return decisions, outcome


def cmd_simulate(args) -> int:
    model = _load_model(args.model)
    boxes, consts = _apply_overrides(model, args)
    state = _initial_state(model, consts)
    report = {
        "version": __version__,
        "model": model.name,
        "model_hash": _model_hash(model),
        "config": _config_echo(args, boxes, consts),
        "runs": [],
    }
    lines = []
    if args.script and args.random is not None:
        raise UsageError("--script and --random are mutually exclusive")
    if args.script:
        if args.script == "fig2":
            from .models import fig2_script
            script = fig2_script()
        else:
            with open(args.script) as fh:
                script = parse_script(fh.read())
        outcome, trace = run(state, model.loop_program(), script)
        report["runs"].append(_run_json(model, outcome))
        lines.extend(_run_lines(model, outcome))
        if args.trace:
            _write_trace(args.trace, model, trace)
    elif args.random is not None:
        rng = random.Random(args.seed)
        aborted = violations = 0
        last_trace = []
        for _ in range(args.random):
            script, _ = _random_script(model, state, rng)
            outcome, trace = run(state, model.loop_program(), script)
            last_trace = trace
            if isinstance(outcome, Aborted):
                aborted += 1
            elif not eval_fol(outcome.state, model.guarantee):
                violations += 1
        report["runs"].append({
            "sampled": args.random,
            "aborted": aborted,
            "guarantee_violations": violations,
        })
        lines.append(f"{args.random} runs: {aborted} aborted, "
                     f"{violations} guarantee violations")
        if args.trace and last_trace:
            _write_trace(args.trace, model, last_trace)
    else:
        raise UsageError("simulate needs --script or --random")
    _emit(args, report, lines)
    return EXIT_OK


def _run_json(model, outcome):
    if isinstance(outcome, Final):
        return {"outcome": "final",
                "state": {k: _num_str(v)
                          for k, v in sorted(outcome.state.items())}}
    from .printer import print_formula
    return {"outcome": "aborted",
            "failed_test": print_formula(outcome.failed_test),
            "state": {k: _num_str(v) for k, v in sorted(outcome.state.items())}}


def _run_lines(model, outcome):
    if isinstance(outcome, Final):
        vals = ", ".join(f"{v} = {_num_str(outcome.state[v])}"
                         for v in _trace_vars(model) if v in outcome.state)
        return [f"final: {vals}"]
    from .printer import print_formula
    vals = ", ".join(f"{v} = {_num_str(outcome.state[v])}"
                     for v in _trace_vars(model) if v in outcome.state)
    return [f"aborted at test {print_formula(outcome.failed_test)}",
            f"state: {vals}"]


# ---------------------------------------------------------------------------
# check

def _selector_kinds(selector: str, model: Model):
    if selector == "gamma":
        return [("loop", (1,))]  # preservation branch only
    if selector == "psi":
        if "zeta_iter" not in model.invariants:
            raise UsageError("psi needs an invariant named zeta_iter")
        return [("psi", "zeta_iter", model.action_var, "-anmin")]
    mapping = {"loop": "loop", "rho": "rho", "exploit": "exploit",
               "chi": "chi", "not-chi": "not_chi", "friendly": "friendly"}
    if selector in mapping:
        return [mapping[selector]]
    if selector == "all":
        return ["loop", "rho", "exploit", "chi", "not_chi", "friendly"]
    raise UsageError(f"unknown obligation selector {selector!r}")


def _row_obligations(model, invariant, kind):
    if isinstance(kind, tuple) and kind[0] == "loop":
        obs = obligations_for(model, invariant, "loop")
        return [obs[i] for i in kind[1]]
    return obligations_for(model, invariant, kind)


def _make_config(args) -> SearchConfig:
    return SearchConfig(budget=args.budget, seed=args.seed)


def cmd_check(args) -> int:
    model = _load_model(args.model)
    boxes, consts = _apply_overrides(model, args)
    if consts:
        _override_constants(model, consts)
    if args.invariant not in model.invariants:
        raise UsageError(f"unknown invariant {args.invariant!r}; "
                         f"model has {sorted(model.invariants)}")
    config = _make_config(args)
    kinds = _selector_kinds(args.obligation, model)
    verdicts = []
    for kind in kinds:
        for obligation in _row_obligations(model, args.invariant, kind):
            verdicts.append(check(obligation, config))
    report = {
        "version": __version__,
        "model": model.name,
        "model_hash": _model_hash(model),
        "config": _config_echo(args, boxes, consts),
        "invariant": args.invariant,
        "verdicts": [v.to_json() for v in verdicts],
        "caveat": CAVEAT,
    }
    lines = [f"{model.name} / {args.invariant}"]
    for v in verdicts:
        lines.append(f"  {v.obligation.name:10s} {VERDICT_VOCABULARY[v.status]}"
                     f"  ({v.stats.evaluations} evaluations)")
        if v.counterexample is not None:
            assignment = ", ".join(
                f"{k} = {val}" for k, val in sorted(
                    v.counterexample.assignment.items()))
            lines.append(f"    certificate: {assignment}")
    lines.append(CAVEAT)
    _emit(args, report, lines)
    found = any(v.found for v in verdicts)
    if args.trace:
        for v in verdicts:
            if v.counterexample is not None and v.counterexample.trace:
                _write_trace(args.trace, model, v.counterexample.trace)
                break
    return EXIT_FOUND if found else EXIT_OK


def _override_constants(model: Model, consts):
    from .model import Constant
    replaced = []
    for c in model.constants:
        if c.name in consts:
            replaced.append(Constant(c.name, Fraction(consts[c.name]),
                                     c.constraint))
        else:
            replaced.append(c)
    model.constants = replaced


# ---------------------------------------------------------------------------
# table2

def _conjunct_kind(name: str):
    return {"rho": "rho", "not_chi": "not_chi", "psi":
            ("psi", "zeta_iter", "a", "-anmin")}[name]


def _evaluate_row(row, config, cache):
    model = builtin(row.model_id)
    obligations = list(obligations_for(model, row.invariant, "loop"))
    for conjunct in row.conjuncts:
        obligations.extend(
            obligations_for(model, row.invariant, _conjunct_kind(conjunct)))
    verdicts = []
    for ob in obligations:
        key = (row.model_id, row.invariant, ob.name)
        verdict = cache.get(key)
        if verdict is None:
            verdict = check(ob, config)
            cache[key] = verdict
        verdicts.append(verdict)
    passed = all(
        v.status == NOT_FALSIFIED if v.obligation.kind == FALSIFY_UNIVERSAL
        else v.status == WITNESS_FOUND
        for v in verdicts)
    return verdicts, "Yes" if passed else "No"


def cmd_table2(args) -> int:
    config = _make_config(args)
    rows = table2_suite()
    workers = max(1, int(os.environ.get("HPCHECK_THREADS", "1")))
    cache = {}  # identical obligations shared by several rows; check() is
    # deterministic, so cache hits cannot change any verdict
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda r: _evaluate_row(r, config, cache), rows))
    else:
        results = [_evaluate_row(r, config, cache) for r in rows]

    report_rows = []
    lines = [f"{'model':5s} {'invariant':10s} {'conjuncts':16s} "
             f"{'expected':8s} {'ours':5s} match"]
    all_match = True
    for row, (verdicts, ours) in zip(rows, results):
        match = ours == row.expected
        all_match = all_match and match
        conj = " ".join(row.conjuncts) or "-"
        lines.append(f"{row.model_id:5s} {row.invariant:10s} {conj:16s} "
                     f"{row.expected:8s} {ours:5s} {'yes' if match else 'NO'}")
        report_rows.append({
            "model": row.model_id,
            "invariant": row.invariant,
            "conjuncts": list(row.conjuncts),
            "expected": row.expected,
            "computed": ours,
            "match": match,
            "reason": row.reason,
            "verdicts": [v.to_json() for v in verdicts],
        })
    lines.append(CAVEAT)
    lines.append("all rows match" if all_match else "MISMATCH: see rows above")
    report = {
        "version": __version__,
        "config": _config_echo(args, {}, {}),
        "rows": report_rows,
        "all_match": all_match,
        "caveat": CAVEAT,
    }
    _emit(args, report, lines)
    return EXIT_OK if all_match else EXIT_FOUND


if __name__ == "__main__":
    sys.exit(main())
