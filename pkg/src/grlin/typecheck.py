"""Algorithmic typing: bidirectional checking with per-variable usage accounting.

Linear binders must be consumed exactly once on every control path; graded
binders accumulate a usage grade that must be approximated by the declared
grade at binder exit. Grade approximation is applied only at binder exit and
at case-branch merges. Promotion is checking-only (its grade is free
bottom-up), so programs carry top-level signatures.

Top-level names and letrec-bound names are recursive references: using them
charges no usage. The recursive binder itself therefore admits contraction,
which the unrolling equation for letrec requires anyway.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import grades, syntax
from .grades import Grade
from .parser import SourceProgram
from .syntax import (
    App, Base, Box, Case, Con, Derive, Fun, IntLit, Lam, LetRec, Mu, Pattern,
    PBox, PCon, PInt, Pos, Promote, PVar, PWild, Sum, Tensor, Term, TyVar,
    Type, Unit, Var, fresh_name, free_vars, multi_constructor,
    subst_term, types_equal, unroll_mu,
)

# Stable diagnostic codes (the negative suite matches on these).
TYPE_MISMATCH = "TYPE_MISMATCH"
LINEARITY = "LINEARITY"
GRADE_EXCEEDED = "GRADE_EXCEEDED"
PROMOTE_LINEAR = "PROMOTE_LINEAR"
WILDCARD_WEAKEN = "WILDCARD_WEAKEN"
MATCH_USAGE = "MATCH_USAGE"
NO_UPPER_BOUND = "NO_UPPER_BOUND"
MEET_UNDEFINED = "MEET_UNDEFINED"
NEEDS_ANNOTATION = "NEEDS_ANNOTATION"
MIXED_SEMIRING = "MIXED_SEMIRING"
UNKNOWN_VAR = "UNKNOWN_VAR"
DUPLICATE_DEF = "DUPLICATE_DEF"
SYNTAX = "SYNTAX"
# Codes raised by the deriving engine for in-program derive nodes.
BOX_IN_SUBJECT = "BOX_IN_SUBJECT"
FUN_IN_SUBJECT = "FUN_IN_SUBJECT"
BASE_IN_SUBJECT = "BASE_IN_SUBJECT"
SIDE_CONDITION = "SIDE_CONDITION"
POLYMORPHIC_DROP = "POLYMORPHIC_DROP"
NOT_DROPPABLE = "NOT_DROPPABLE"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    pos: Pos | None = None
    grades: tuple[Grade, ...] = ()
    var: str | None = None

    def render(self) -> str:
        where = str(self.pos) if self.pos else "<no position>"
        return f"{where}: {self.code}: {self.message}"


class CheckError(Exception):
    def __init__(self, diag: Diagnostic):
        super().__init__(diag.render())
        self.diag = diag


def _fail(code: str, message: str, pos: Pos | None = None,
          gs: tuple[Grade, ...] = (), var: str | None = None):
    raise CheckError(Diagnostic(code, message, pos, gs, var))


# Assumptions -----------------------------------------------------------------

@dataclass(frozen=True)
class Linear:
    type: Type


@dataclass(frozen=True)
class Graded:
    type: Type
    grade: Grade


@dataclass(frozen=True)
class RecRef:
    """letrec-bound or top-level name; uses charge no usage."""
    type: Type


Assumption = Linear | Graded | RecRef


# Usages ----------------------------------------------------------------------

@dataclass(frozen=True)
class LinearUses:
    count: int


@dataclass(frozen=True)
class GradedUses:
    grade: Grade


Usage = LinearUses | GradedUses
UsageMap = dict


@dataclass
class BinderRecord:
    """Exit record for one binder; used by the usage-count cross-check."""
    name: str
    pos: Pos | None
    kind: str  # "linear" or "graded"
    declared: Grade | None
    usage: Usage


def usage_add(u1: UsageMap, u2: UsageMap) -> UsageMap:
    out = dict(u1)
    for name, u in u2.items():
        if name not in out:
            out[name] = u
        elif isinstance(u, LinearUses):
            out[name] = LinearUses(out[name].count + u.count)
        else:
            out[name] = GradedUses(grades.sr_add(out[name].grade, u.grade))
    return out


def merge_branch_usages(us: list[UsageMap], sr: str) -> UsageMap:
    """Join per-branch usages: least upper bounds for graded variables,
    equal counts for linear ones."""
    assert us, "merge of empty branch list"
    if len(us) == 1:
        return dict(us[0])
    names = set()
    for u in us:
        names |= u.keys()
    out: UsageMap = {}
    for name in names:
        entries = [u.get(name) for u in us]
        if any(isinstance(e, LinearUses) for e in entries):
            counts = [(e.count if e is not None else 0) for e in entries]
            if len(set(counts)) != 1:
                _fail(LINEARITY,
                      f"linear variable {name!r} is used in some branches but not others",
                      var=name)
            out[name] = LinearUses(counts[0])
        else:
            acc = None
            for e in entries:
                g = e.grade if e is not None else grades.zero(sr)
                if acc is None:
                    acc = g
                else:
                    j = grades.sr_lub(acc, g)
                    if j is None:
                        _fail(NO_UPPER_BOUND,
                              f"branch usages {acc} and {g} of {name!r} have no upper bound",
                              gs=(acc, g), var=name)
                    acc = j
            out[name] = GradedUses(acc)
    return out


def _scan_type_semiring(ty: Type, sr: str, pos: Pos | None) -> None:
    if isinstance(ty, Box):
        if ty.grade.semiring != sr:
            _fail(MIXED_SEMIRING,
                  f"grade {ty.grade} is from {ty.grade.semiring}, program uses {sr}",
                  pos, gs=(ty.grade,))
        _scan_type_semiring(ty.body, sr, pos)
    elif isinstance(ty, Fun):
        _scan_type_semiring(ty.arg, sr, pos)
        _scan_type_semiring(ty.res, sr, pos)
    elif isinstance(ty, (Tensor, Sum)):
        _scan_type_semiring(ty.left, sr, pos)
        _scan_type_semiring(ty.right, sr, pos)
    elif isinstance(ty, Mu):
        _scan_type_semiring(ty.body, sr, pos)


class Checker:
    def __init__(self, semiring: str, defs: dict[str, Type] | None = None,
                 record: bool = False):
        self.sr = semiring
        self.defs = defs or {}
        self.records: list[BinderRecord] = []
        self.record = record

    # -- helpers -------------------------------------------------------------

    def _exit_binder(self, usage: UsageMap, name: str, asm: Assumption,
                     pos: Pos | None) -> None:
        u = usage.pop(name, None)
        if isinstance(asm, RecRef):
            return
        if isinstance(asm, Linear):
            count = u.count if u is not None else 0
            if self.record:
                self.records.append(BinderRecord(name, pos, "linear", None,
                                                 LinearUses(count)))
            if count != 1:
                _fail(LINEARITY,
                      f"linear variable {name!r} used {count} times (expected exactly 1)",
                      pos, var=name)
        else:
            g = u.grade if u is not None else grades.zero(self.sr)
            if self.record:
                self.records.append(BinderRecord(name, pos, "graded", asm.grade,
                                                 GradedUses(g)))
            if not grades.sr_leq(g, asm.grade):
                _fail(GRADE_EXCEEDED,
                      f"variable {name!r} used at grade {g}, "
                      f"but its binder permits {asm.grade}",
                      pos, gs=(g, asm.grade), var=name)

    def _rename_binder(self, ctx: dict, name: str, body: Term) -> tuple[str, Term]:
        if name not in ctx and name not in self.defs:
            return name, body
        new = fresh_name(name, set(ctx) | set(self.defs) | free_vars(body))
        return new, subst_term(body, {name: Var(new)})

    def _scale(self, r: Grade, usage: UsageMap, pos: Pos | None) -> UsageMap:
        out: UsageMap = {}
        for name, u in usage.items():
            if isinstance(u, LinearUses):
                if u.count == 0:
                    continue
                _fail(PROMOTE_LINEAR,
                      f"linear variable {name!r} used under a promotion",
                      pos, var=name)
            out[name] = GradedUses(grades.sr_mul(r, u.grade))
        return out

    # -- patterns ------------------------------------------------------------

    def check_pattern(self, enc: Grade | None, p: Pattern, ty: Type
                      ) -> list[tuple[str, Assumption, Pos | None]]:
        binders = self._pattern(enc, p, ty)
        seen = set()
        for name, _, pos in binders:
            if name in seen:
                _fail(LINEARITY, f"variable {name!r} bound twice in one pattern",
                      pos, var=name)
            seen.add(name)
        return binders

    def _pattern(self, enc, p, ty):
        if isinstance(ty, Mu) and isinstance(p, (PCon, PInt, PBox)):
            ty = unroll_mu(ty)
        if isinstance(p, PVar):
            asm = Linear(ty) if enc is None else Graded(ty, enc)
            return [(p.name, asm, p.pos)]
        if isinstance(p, PWild):
            if enc is None:
                _fail(WILDCARD_WEAKEN,
                      "wildcard discards a value; it is only allowed under a box pattern",
                      p.pos)
            z = grades.zero(self.sr)
            if not grades.sr_leq(z, enc):
                _fail(WILDCARD_WEAKEN,
                      f"wildcard needs weakening: {z} is not approximated by {enc}",
                      p.pos, gs=(z, enc))
            return []
        if isinstance(p, PBox):
            if enc is not None:
                _fail(TYPE_MISMATCH, "box patterns cannot be nested", p.pos)
            if not isinstance(ty, Box):
                _fail(TYPE_MISMATCH,
                      f"box pattern against non-box type {_show(ty)}", p.pos)
            if ty.grade.semiring != self.sr:
                _fail(MIXED_SEMIRING,
                      f"grade {ty.grade} is from {ty.grade.semiring}, program uses {self.sr}",
                      p.pos, gs=(ty.grade,))
            return self._pattern(ty.grade, p.pat, ty.body)
        if isinstance(p, PInt):
            if not (isinstance(ty, Base) and ty.name == "Int"):
                _fail(TYPE_MISMATCH,
                      f"integer pattern against type {_show(ty)}", p.pos)
            if enc is not None:
                o = grades.one(self.sr)
                if not grades.sr_leq(o, enc):
                    _fail(MATCH_USAGE,
                          f"matching a literal consumes a use: {o} is not approximated by {enc}",
                          p.pos, gs=(o, enc))
            return []
        if isinstance(p, PCon):
            if enc is not None and multi_constructor(ty):
                o = grades.one(self.sr)
                if not grades.sr_leq(o, enc):
                    _fail(MATCH_USAGE,
                          f"matching a multi-constructor type consumes a use: "
                          f"{o} is not approximated by {enc}",
                          p.pos, gs=(o, enc))
            if p.con == "unit":
                if not isinstance(ty, Unit):
                    _fail(TYPE_MISMATCH, f"unit pattern against type {_show(ty)}", p.pos)
                return []
            if p.con == ",":
                if not isinstance(ty, Tensor):
                    _fail(TYPE_MISMATCH, f"pair pattern against type {_show(ty)}", p.pos)
                return (self._pattern(enc, p.args[0], ty.left)
                        + self._pattern(enc, p.args[1], ty.right))
            if p.con in ("inl", "inr"):
                if not isinstance(ty, Sum):
                    _fail(TYPE_MISMATCH, f"{p.con} pattern against type {_show(ty)}", p.pos)
                side = ty.left if p.con == "inl" else ty.right
                return self._pattern(enc, p.args[0], side)
            _fail(TYPE_MISMATCH, f"unknown constructor {p.con!r}", p.pos)
        raise AssertionError(f"unhandled pattern: {p}")

    # -- terms ---------------------------------------------------------------

    def check(self, ctx: dict, t: Term, expected: Type) -> UsageMap:
        if isinstance(t, Lam):
            if isinstance(expected, Mu):
                return self.check(ctx, t, unroll_mu(expected))
            if not isinstance(expected, Fun):
                _fail(TYPE_MISMATCH,
                      f"lambda against non-function type {_show(expected)}", t.pos)
            var, body = self._rename_binder(ctx, t.var, t.body)
            asm = Linear(expected.arg)
            usage = self.check({**ctx, var: asm}, body, expected.res)
            self._exit_binder(usage, var, asm, t.pos)
            return usage
        if isinstance(t, Promote):
            if isinstance(expected, Mu):
                return self.check(ctx, t, unroll_mu(expected))
            if not isinstance(expected, Box):
                _fail(TYPE_MISMATCH,
                      f"promotion against non-box type {_show(expected)}", t.pos)
            if expected.grade.semiring != self.sr:
                _fail(MIXED_SEMIRING,
                      f"grade {expected.grade} is from {expected.grade.semiring}, "
                      f"program uses {self.sr}", t.pos, gs=(expected.grade,))
            inner = self.check(ctx, t.body, expected.body)
            return self._scale(expected.grade, inner, t.pos)
        if isinstance(t, Con):
            if isinstance(expected, Mu):
                return self.check(ctx, t, unroll_mu(expected))
            if t.con == "unit":
                if not isinstance(expected, Unit):
                    _fail(TYPE_MISMATCH, f"unit against type {_show(expected)}", t.pos)
                return {}
            if t.con == ",":
                if not isinstance(expected, Tensor):
                    _fail(TYPE_MISMATCH, f"pair against type {_show(expected)}", t.pos)
                u1 = self.check(ctx, t.args[0], expected.left)
                u2 = self.check(ctx, t.args[1], expected.right)
                return usage_add(u1, u2)
            if t.con in ("inl", "inr"):
                if not isinstance(expected, Sum):
                    _fail(TYPE_MISMATCH, f"{t.con} against type {_show(expected)}", t.pos)
                side = expected.left if t.con == "inl" else expected.right
                return self.check(ctx, t.args[0], side)
            _fail(TYPE_MISMATCH, f"unknown constructor {t.con!r}", t.pos)
        if isinstance(t, IntLit):
            if isinstance(expected, Mu):
                return self.check(ctx, t, unroll_mu(expected))
            if not (isinstance(expected, Base) and expected.name == "Int"):
                _fail(TYPE_MISMATCH,
                      f"integer literal against type {_show(expected)}", t.pos)
            return {}
        if isinstance(t, Case):
            scrut_ty, u_scrut = self._scrutinee(ctx, t)
            branch_usages = []
            for p, body in t.branches:
                u = self._branch(ctx, p, scrut_ty, body, expected, check_mode=True)
                branch_usages.append(u)
            merged = merge_branch_usages(branch_usages, self.sr)
            return usage_add(u_scrut, merged)
        if isinstance(t, LetRec):
            bound_ty, ctx2, var, bound, body = self._letrec_intro(ctx, t)
            u1 = self.check(ctx2, bound, bound_ty)
            u2 = self.check(ctx2, body, expected)
            usage = usage_add(u1, u2)
            usage.pop(var, None)
            return usage
        if isinstance(t, Derive):
            return self._check_derive(t, expected)
        ty, usage = self.synth(ctx, t)
        if not _types_match(ty, expected):
            _fail(TYPE_MISMATCH,
                  f"expected {_show(expected)}, found {_show(ty)}",
                  t.pos)
        return usage

    def synth(self, ctx: dict, t: Term) -> tuple[Type, UsageMap]:
        if isinstance(t, Var):
            if t.name in ctx:
                asm = ctx[t.name]
                if isinstance(asm, Linear):
                    return asm.type, {t.name: LinearUses(1)}
                if isinstance(asm, Graded):
                    return asm.type, {t.name: GradedUses(grades.one(self.sr))}
                return asm.type, {}
            if t.name in self.defs:
                return self.defs[t.name], {}
            _fail(UNKNOWN_VAR, f"unknown variable {t.name!r}", t.pos, var=t.name)
        if isinstance(t, App):
            fn_ty, u1 = self.synth(ctx, t.fn)
            if isinstance(fn_ty, Mu):
                fn_ty = unroll_mu(fn_ty)
            if not isinstance(fn_ty, Fun):
                _fail(TYPE_MISMATCH,
                      f"applying a non-function of type {_show(fn_ty)}", t.pos)
            u2 = self.check(ctx, t.arg, fn_ty.arg)
            return fn_ty.res, usage_add(u1, u2)
        if isinstance(t, IntLit):
            return Base("Int"), {}
        if isinstance(t, Con):
            if t.con == "unit":
                return Unit(), {}
            if t.con == ",":
                ty1, u1 = self.synth(ctx, t.args[0])
                ty2, u2 = self.synth(ctx, t.args[1])
                return Tensor(ty1, ty2), usage_add(u1, u2)
            _fail(NEEDS_ANNOTATION,
                  f"{t.con} needs an expected sum type", t.pos)
        if isinstance(t, Derive):
            return self._synth_derive(t)
        if isinstance(t, Case):
            scrut_ty, u_scrut = self._scrutinee(ctx, t)
            result_ty: Type | None = None
            branch_usages = []
            for p, body in t.branches:
                ty, u = self._branch(ctx, p, scrut_ty, body, None, check_mode=False)
                if result_ty is None:
                    result_ty = ty
                elif not types_equal(result_ty, ty):
                    if not _types_match(result_ty, ty):
                        _fail(TYPE_MISMATCH,
                              f"branches disagree: {_show(result_ty)} vs {_show(ty)}",
                              t.pos)
                    if isinstance(ty, Mu):
                        result_ty = ty  # prefer the rolled form
                branch_usages.append(u)
            merged = merge_branch_usages(branch_usages, self.sr)
            return result_ty, usage_add(u_scrut, merged)
        if isinstance(t, LetRec):
            bound_ty, ctx2, var, bound, body = self._letrec_intro(ctx, t)
            u1 = self.check(ctx2, bound, bound_ty)
            ty, u2 = self.synth(ctx2, body)
            usage = usage_add(u1, u2)
            usage.pop(var, None)
            return ty, usage
        if isinstance(t, Lam):
            _fail(NEEDS_ANNOTATION, "lambda needs an expected function type", t.pos)
        if isinstance(t, Promote):
            _fail(NEEDS_ANNOTATION,
                  "promotion needs an expected box type (its grade is unconstrained)",
                  t.pos)
        raise AssertionError(f"unhandled term: {t}")

    # -- shared pieces ---------------------------------------------------------

    def _scrutinee(self, ctx: dict, t: Case) -> tuple[Type, UsageMap]:
        if t.scrut_annot is not None:
            return t.scrut_annot, self.check(ctx, t.scrutinee, t.scrut_annot)
        return self.synth(ctx, t.scrutinee)

    def _branch(self, ctx, p, scrut_ty, body, expected, check_mode):
        binders = self.check_pattern(None, p, scrut_ty)
        ctx2 = dict(ctx)
        renames: dict[str, Term] = {}
        bound = []
        for name, asm, pos in binders:
            if name in ctx2 or name in self.defs:
                new = fresh_name(name, set(ctx2) | set(self.defs) | free_vars(body))
                renames[name] = Var(new)
                name = new
            ctx2[name] = asm
            bound.append((name, asm, pos))
        if renames:
            body = subst_term(body, renames)
        if check_mode:
            usage = self.check(ctx2, body, expected)
        else:
            ty, usage = self.synth(ctx2, body)
        for name, asm, pos in bound:
            self._exit_binder(usage, name, asm, pos)
        return usage if check_mode else (ty, usage)

    def _letrec_intro(self, ctx: dict, t: LetRec):
        bound_ty = t.annot
        if bound_ty is None:
            try:
                bound_ty, _ = self.synth(ctx, t.bound)
            except CheckError as e:
                if e.diag.code == UNKNOWN_VAR and e.diag.var == t.var:
                    _fail(NEEDS_ANNOTATION,
                          f"recursive binding {t.var!r} needs a type annotation",
                          t.pos)
                raise
        var, bound = t.var, t.bound
        body = t.body
        if var in ctx or var in self.defs:
            new = fresh_name(var, set(ctx) | set(self.defs)
                             | free_vars(bound) | free_vars(body))
            ren = {var: Var(new)}
            bound = subst_term(bound, ren)
            body = subst_term(body, ren)
            var = new
        ctx2 = {**ctx, var: RecRef(bound_ty)}
        return bound_ty, ctx2, var, bound, body

    # -- derive nodes ----------------------------------------------------------

    def _synth_derive(self, t: Derive) -> tuple[Type, UsageMap]:
        from . import deriving
        if t.kind == "drop":
            if isinstance(t.at, Base):
                # built-in weakening for weakenable base types
                if t.at.name not in syntax.WEAKENABLE_BASES:
                    _fail(NOT_DROPPABLE,
                          f"{t.at.name} is a linear-only base type", t.pos)
                return Fun(t.at, Unit()), {}
            comb = self._run_derive(lambda: deriving.derive_drop(t.at, self.sr), t.pos)
            return comb.type, {}
        if t.kind == "copyShape":
            comb = self._run_derive(lambda: deriving.derive_copyshape(t.at, self.sr), t.pos)
            return comb.type, {}
        _fail(NEEDS_ANNOTATION,
              f"{t.kind} @T needs an expected type to determine its grades", t.pos)

    def _check_derive(self, t: Derive, expected: Type) -> UsageMap:
        from . import deriving
        if t.kind in ("drop", "copyShape"):
            ty, usage = self._synth_derive(t)
            if not types_equal(ty, expected):
                _fail(TYPE_MISMATCH,
                      f"{t.kind} @{_show(t.at)} has type {_show(ty)}, "
                      f"expected {_show(expected)}", t.pos)
            return usage
        if t.kind == "push":
            if not (isinstance(expected, Fun) and isinstance(expected.arg, Box)
                    and types_equal(expected.arg.body, t.at)):
                _fail(TYPE_MISMATCH,
                      f"push @{_show(t.at)} must be used at a type of shape "
                      f"({_show(t.at)}) [r] -o ...", t.pos)
            r = expected.arg.grade
            self._grade_semiring(r, t.pos)
            comb = self._run_derive(lambda: deriving.derive_push(t.at, r), t.pos)
            if not types_equal(comb.type, expected):
                _fail(TYPE_MISMATCH,
                      f"push @{_show(t.at)} has type {_show(comb.type)}, "
                      f"expected {_show(expected)}", t.pos)
            return {}
        if t.kind == "pull":
            if not (isinstance(expected, Fun) and isinstance(expected.res, Box)
                    and types_equal(expected.res.body, t.at)):
                _fail(TYPE_MISMATCH,
                      f"pull @{_show(t.at)} must be used at a type of shape "
                      f"... -o ({_show(t.at)}) [r]", t.pos)
            rs = self._extract_pull_grades(t.at, expected.arg, t.pos)
            for g in rs.values():
                self._grade_semiring(g, t.pos)
            result_grade = expected.res.grade
            self._grade_semiring(result_grade, t.pos)
            comb = self._run_derive(
                lambda: deriving.derive_pull(t.at, rs, self.sr, default_grade=result_grade),
                t.pos)
            if not types_equal(comb.type, expected):
                _fail(TYPE_MISMATCH,
                      f"pull @{_show(t.at)} has type {_show(comb.type)}, "
                      f"expected {_show(expected)}", t.pos)
            return {}
        if t.kind == "fmap":
            shape = (isinstance(expected, Fun) and isinstance(expected.arg, Box)
                     and isinstance(expected.arg.body, Fun)
                     and isinstance(expected.arg.body.arg, TyVar)
                     and isinstance(expected.res, Fun)
                     and types_equal(expected.res.arg, t.at))
            if not shape:
                _fail(TYPE_MISMATCH,
                      f"fmap @{_show(t.at)} must be used at a type of shape "
                      f"(a -o b) [g] -o ({_show(t.at)}) -o ...", t.pos)
            alpha = expected.arg.body.arg.name
            g = expected.arg.grade
            self._grade_semiring(g, t.pos)
            comb = self._run_derive(
                lambda: deriving.derive_fmap(t.at, alpha, g, self.sr), t.pos)
            # beta may be instantiated at any type; re-check the instantiated term.
            beta = comb.type.arg.body.res.name
            term = syntax.subst_tyvars_in_term(comb.term, {beta: expected.arg.body.res})
            sub = Checker(self.sr, self.defs)
            return sub.check({}, term, expected)
        raise AssertionError(f"unhandled derive kind: {t.kind}")

    def _grade_semiring(self, g: Grade, pos: Pos | None) -> None:
        if g.semiring != self.sr:
            _fail(MIXED_SEMIRING,
                  f"grade {g} is from {g.semiring}, program uses {self.sr}",
                  pos, gs=(g,))

    def _extract_pull_grades(self, subject: Type, arg: Type, pos: Pos | None
                             ) -> dict[str, Grade]:
        rs: dict[str, Grade] = {}

        def go(s: Type, a: Type) -> bool:
            if isinstance(s, TyVar):
                if not (isinstance(a, Box) and isinstance(a.body, TyVar)
                        and a.body.name == s.name):
                    return False
                if s.name in rs and rs[s.name] != a.grade:
                    _fail(TYPE_MISMATCH,
                          f"variable {s.name!r} is boxed at both {rs[s.name]} "
                          f"and {a.grade}", pos, gs=(rs[s.name], a.grade))
                rs[s.name] = a.grade
                return True
            if type(s) is not type(a):
                return False
            if isinstance(s, (Unit,)):
                return True
            if isinstance(s, Base):
                return s.name == a.name
            if isinstance(s, (Tensor, Sum)):
                return go(s.left, a.left) and go(s.right, a.right)
            if isinstance(s, Mu):
                return s.var == a.var and go(s.body, a.body)
            if isinstance(s, RecVar):
                return s.name == a.name
            return False

        if not go(subject, arg):
            _fail(TYPE_MISMATCH,
                  f"pull @{_show(subject)} argument type does not match the subject "
                  f"with boxed variables", pos)
        return rs

    def _run_derive(self, thunk, pos: Pos | None):
        from .deriving import DeriveError
        try:
            return thunk()
        except DeriveError as e:
            raise CheckError(Diagnostic(e.code, e.message, pos, e.grades)) from e


def _types_match(a: Type, b: Type) -> bool:
    """Equality up to one unrolling of a recursive type on either side
    (values cross the mu boundary freely)."""
    if types_equal(a, b):
        return True
    if isinstance(a, Mu) and types_equal(unroll_mu(a), b):
        return True
    return isinstance(b, Mu) and types_equal(a, unroll_mu(b))


def _show(ty: Type) -> str:
    from .parser import pretty_type
    return pretty_type(ty)


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def check_term(ctx: dict, t: Term, expected: Type, semiring: str,
               defs: dict[str, Type] | None = None) -> UsageMap:
    """Check ``t`` against ``expected``; returns per-variable usages or raises
    CheckError."""
    return Checker(semiring, defs).check(ctx, t, expected)


def synth_term(ctx: dict, t: Term, semiring: str,
               defs: dict[str, Type] | None = None) -> tuple[Type, UsageMap]:
    return Checker(semiring, defs).synth(ctx, t)


def check_pattern(enc: Grade | None, p: Pattern, ty: Type, semiring: str):
    return Checker(semiring).check_pattern(enc, p, ty)


def check_program(prog: SourceProgram, record: bool = False
                  ) -> list[Diagnostic] | tuple[list[Diagnostic], list[BinderRecord]]:
    """Check every declaration against its signature. Empty list = accepted."""
    diags: list[Diagnostic] = []
    defs: dict[str, Type] = {}
    for d in prog.decls:
        if d.name in defs:
            diags.append(Diagnostic(DUPLICATE_DEF,
                                    f"{d.name!r} is defined more than once", d.pos))
            continue
        defs[d.name] = d.signature
    records: list[BinderRecord] = []
    for d in prog.decls:
        checker = Checker(prog.semiring, defs, record=record)
        try:
            _scan_type_semiring(d.signature, prog.semiring, d.pos)
            checker.check({}, d.body, d.signature)
        except CheckError as e:
            diag = e.diag
            if diag.pos is None:
                diag = Diagnostic(diag.code, diag.message, d.pos, diag.grades, diag.var)
            diags.append(diag)
        records.extend(checker.records)
    if record:
        return diags, records
    return diags
