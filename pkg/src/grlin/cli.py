"""Batch command-line front end: check, run, derive, laws.

Diagnostics go to stderr as ``file:line:col: CODE: message``; values and
reports go to stdout. Exit codes: 0 success, 1 diagnostics or failures,
2 usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import deriving, evaluator, grades, lawcheck, parser, typecheck
from .syntax import free_tyvars
from .deriving import DeriveError
from .evaluator import Fuel, FuelExhausted, NoMain, StuckTerm
from .parser import ParseError


def _default_fuel() -> int:
    env = os.environ.get("GRLIN_FUEL")
    if env:
        try:
            return int(env)
        except ValueError:
            print(f"grlin: bad GRLIN_FUEL value {env!r}", file=sys.stderr)
            raise SystemExit(2)
    return evaluator.DEFAULT_FUEL


def _load_program(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        print(f"grlin: cannot read {path}: {e.strerror}", file=sys.stderr)
        raise SystemExit(2)
    return parser.parse_program(text, file=path)


def cmd_check(args) -> int:
    try:
        prog = _load_program(args.file)
    except ParseError as e:
        print(f"{e.pos}: {typecheck.SYNTAX}: {e.message}", file=sys.stderr)
        return 1
    diags = typecheck.check_program(prog)
    for d in diags:
        print(d.render(), file=sys.stderr)
    return 1 if diags else 0


def cmd_run(args) -> int:
    try:
        prog = _load_program(args.file)
    except ParseError as e:
        print(f"{e.pos}: {typecheck.SYNTAX}: {e.message}", file=sys.stderr)
        return 1
    diags = typecheck.check_program(prog)
    if diags:
        for d in diags:
            print(d.render(), file=sys.stderr)
        return 1
    try:
        print(evaluator.run_main(prog, Fuel(args.fuel)))
    except FuelExhausted as e:
        print(f"grlin: {e}", file=sys.stderr)
        return 1
    except (NoMain, StuckTerm) as e:
        print(f"grlin: {e}", file=sys.stderr)
        return 1
    return 0


def _parse_grade_arg(text: str, sr: str) -> grades.Grade:
    try:
        return grades.parse_grade(text, sr)
    except grades.GradeError as e:
        print(f"grlin: bad grade {text!r}: {e}", file=sys.stderr)
        raise SystemExit(2)


def cmd_derive(args) -> int:
    sr = args.semiring
    kind = {"copyshape": "copyShape"}.get(args.kind, args.kind)
    try:
        subject = parser.parse_type(args.type, sr)
    except ParseError as e:
        print(f"{e.pos}: {typecheck.SYNTAX}: {e.message}", file=sys.stderr)
        return 1
    try:
        if kind == "push":
            if args.grade is None:
                print("grlin: push needs --grade", file=sys.stderr)
                return 2
            comb = deriving.derive_push(subject, _parse_grade_arg(args.grade, sr))
        elif kind == "pull":
            rs, default = _pull_grades(args, subject, sr)
            comb = deriving.derive_pull(subject, rs, sr, default_grade=default)
        elif kind == "drop":
            comb = deriving.derive_drop(subject, sr)
        elif kind == "copyShape":
            comb = deriving.derive_copyshape(subject, sr)
        else:  # fmap
            if args.grade is None:
                print("grlin: fmap needs --grade", file=sys.stderr)
                return 2
            tyvars = sorted(free_tyvars(subject))
            if len(tyvars) != 1:
                print(f"grlin: fmap needs a subject with exactly one type variable "
                      f"(found {tyvars or 'none'})", file=sys.stderr)
                return 2
            comb = deriving.derive_fmap(subject, tyvars[0],
                                        _parse_grade_arg(args.grade, sr), sr)
    except DeriveError as e:
        print(f"grlin: {e.code}: {e.message}", file=sys.stderr)
        return 1
    print(parser.pretty_term(comb.term))
    print(f"  : {parser.pretty_type(comb.type)}")
    if args.explain:
        print(f"-- key: {comb.key_str()}")
        for line in comb.trace:
            print(f"-- {line}")
    return 0


def _pull_grades(args, subject, sr):
    occurring = free_tyvars(subject)
    if args.grades:
        rs = {}
        for part in args.grades.split(","):
            if "=" not in part:
                print(f"grlin: bad --grades entry {part!r} (want var=grade)",
                      file=sys.stderr)
                raise SystemExit(2)
            name, text = part.split("=", 1)
            rs[name.strip()] = _parse_grade_arg(text.strip(), sr)
        return rs, (_parse_grade_arg(args.grade, sr) if args.grade else None)
    if args.grade is not None:
        g = _parse_grade_arg(args.grade, sr)
        return {a: g for a in occurring}, g
    print("grlin: pull needs --grade or --grades", file=sys.stderr)
    raise SystemExit(2)


def cmd_laws(args) -> int:
    names = lawcheck.SUITES if args.suite == "all" else [args.suite]
    reports = []
    for name in names:
        reports.append(lawcheck.run_suite(
            name, cases=args.cases, seed=args.seed, max_depth=args.max_depth,
            only_case=args.case))
    print(lawcheck.format_reports(reports))
    failed = sum(len(r.failures) for r in reports)
    return 1 if failed else 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(
        prog="grlin",
        description="Graded linear calculus: check, run, derive, laws.")
    sub = ap.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="type-check a program")
    p_check.add_argument("file")
    p_check.set_defaults(fn=cmd_check)

    p_run = sub.add_parser("run", help="check and evaluate main")
    p_run.add_argument("file")
    p_run.add_argument("--fuel", type=int, default=_default_fuel())
    p_run.set_defaults(fn=cmd_run)

    p_der = sub.add_parser("derive", help="derive a combinator at a type")
    p_der.add_argument("kind",
                       choices=["push", "pull", "drop", "copyshape", "fmap"])
    p_der.add_argument("type")
    p_der.add_argument("--semiring", default=grades.NAT_EXACT,
                       choices=list(grades.SEMIRINGS))
    p_der.add_argument("--grade")
    p_der.add_argument("--grades", help="per-variable grades for pull: a=G,b=H")
    p_der.add_argument("--explain", action="store_true")
    p_der.set_defaults(fn=cmd_derive)

    p_laws = sub.add_parser("laws", help="run the property suites")
    p_laws.add_argument("--suite", default="all",
                        choices=["all"] + list(lawcheck.SUITES))
    p_laws.add_argument("--seed", type=int, default=lawcheck.DEFAULT_SEED)
    p_laws.add_argument("--cases", type=int, default=None)
    p_laws.add_argument("--max-depth", type=int, default=None)
    p_laws.add_argument("--case", type=int, default=None,
                        help="re-run a single case by index")
    p_laws.set_defaults(fn=cmd_laws)

    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
