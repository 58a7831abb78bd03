"""Datatype-generic derivation of the distributive and structural combinators.

``push`` distributes a graded box over a type constructor, ``pull`` is its
dual (concluding at the meet of the component grades), ``drop`` derives
weakening for closed weakenable types, ``copyShape`` produces a unit-spine
copy alongside the original value, and ``fmap`` is the covariant morphism
mapping with its function argument boxed at a caller-chosen grade.

Every elaborated term is type-checked against its concluded scheme before
being returned, and results are memoized per (kind, type, semiring, grades).
Elaborated case expressions carry scrutinee-type annotations so they check
without any constraint solving.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from . import grades, syntax
from .grades import Grade
from .syntax import (
    App, Base, Box, Case, Con, Derive, Fun, Lam, LetRec, Mu, PBox, PCon,
    Promote, PVar, RecVar, Sum, Tensor, Term, TyVar, Type, Unit, Var,
    contains_box, contains_fun, contains_base, contains_res, contains_tyvar,
    free_tyvars, free_recvars, multi_constructor, subst_tyvars, pair,
)

# Error codes mirror the checker's stable diagnostic strings.
BOX_IN_SUBJECT = "BOX_IN_SUBJECT"
FUN_IN_SUBJECT = "FUN_IN_SUBJECT"
BASE_IN_SUBJECT = "BASE_IN_SUBJECT"
SIDE_CONDITION = "SIDE_CONDITION"
MEET_UNDEFINED = "MEET_UNDEFINED"
POLYMORPHIC_DROP = "POLYMORPHIC_DROP"
NOT_DROPPABLE = "NOT_DROPPABLE"
NEEDS_ANNOTATION = "NEEDS_ANNOTATION"
MIXED_SEMIRING = "MIXED_SEMIRING"


class DeriveError(Exception):
    def __init__(self, code: str, message: str, gs: tuple[Grade, ...] = ()):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.grades = gs


@dataclass(frozen=True)
class DerivedCombinator:
    kind: str
    subject: Type
    semiring: str
    grades: tuple
    term: Term
    type: Type
    side_conditions: tuple[str, ...]
    trace: tuple[str, ...]

    def key_str(self) -> str:
        from .parser import pretty_type
        gs = ",".join(f"{k}={v}" for k, v in self.grades) if self.grades else "-"
        return f"{self.kind}@{pretty_type(self.subject)}@{self.semiring}@{gs}"


_memo: dict = {}
_memo_lock = threading.Lock()


def clear_memo() -> None:
    with _memo_lock:
        _memo.clear()


def _memoized(key, build):
    with _memo_lock:
        hit = _memo.get(key)
    if hit is not None:
        return hit
    result = build()
    with _memo_lock:
        return _memo.setdefault(key, result)


def _show(ty: Type) -> str:
    from .parser import pretty_type
    return pretty_type(ty)


class _Namer:
    def __init__(self):
        self.n = 0

    def fresh(self, base: str) -> str:
        self.n += 1
        return f"{base}{self.n}"


def _assert_checks(term: Term, ty: Type, semiring: str, what: str) -> None:
    from .typecheck import Checker, CheckError
    try:
        Checker(semiring).check({}, term, ty)
    except CheckError as e:
        raise RuntimeError(
            f"internal: derived {what} fails to check at {_show(ty)}: "
            f"{e.diag.render()}") from e


# ---------------------------------------------------------------------------
# push
# ---------------------------------------------------------------------------

class _Push:
    def __init__(self, r: Grade, namer: _Namer, trace: list[str]):
        self.r = r
        self.namer = namer
        self.trace = trace
        self.env: dict[str, str] = {}          # recvar -> function variable
        self.mu_env: dict[str, Type] = {}      # recvar -> its mu type

    def annot(self, s: Type) -> Type:
        out = s
        for name, mu in self.mu_env.items():
            out = syntax.subst_recvar(out, name, mu)
        return out

    def boxed(self, s: Type) -> Type:
        closed = self.annot(s)
        return subst_tyvars(closed, {a: Box(self.r, TyVar(a)) for a in free_tyvars(closed)})

    def body(self, s: Type, subj: Term, subj_ty: Type) -> Term:
        self.trace.append(f"push @ {_show(s)}")
        if isinstance(s, Unit):
            return Case(subj, ((PBox(PCon("unit", ())), Con("unit", ())),),
                        scrut_annot=subj_ty)
        if isinstance(s, TyVar):
            return subj
        if isinstance(s, Base):
            x = self.namer.fresh("x")
            return Case(subj, ((PBox(PVar(x)), Var(x)),), scrut_annot=subj_ty)
        if isinstance(s, RecVar):
            return App(Var(self.env[s.name]), subj)
        if isinstance(s, Sum):
            x, y = self.namer.fresh("x"), self.namer.fresh("y")
            left = Con("inl", (self.body(s.left, Promote(Var(x)),
                                         Box(self.r, self.annot(s.left))),))
            right = Con("inr", (self.body(s.right, Promote(Var(y)),
                                          Box(self.r, self.annot(s.right))),))
            return Case(subj, (
                (PBox(PCon("inl", (PVar(x),))), left),
                (PBox(PCon("inr", (PVar(y),))), right),
            ), scrut_annot=subj_ty)
        if isinstance(s, Tensor):
            x, y = self.namer.fresh("x"), self.namer.fresh("y")
            result = pair(
                self.body(s.left, Promote(Var(x)), Box(self.r, self.annot(s.left))),
                self.body(s.right, Promote(Var(y)), Box(self.r, self.annot(s.right))))
            return Case(subj, ((PBox(PCon(",", (PVar(x), PVar(y)))), result),),
                        scrut_annot=subj_ty)
        if isinstance(s, Fun):
            if free_recvars(s.arg):
                raise DeriveError(
                    SIDE_CONDITION,
                    "recursion variables under a function argument are not supported")
            y, f, u = self.namer.fresh("y"), self.namer.fresh("f"), self.namer.fresh("u")
            rs = {a: self.r for a in free_tyvars(self.annot(s.arg))}
            puller = _Pull(rs, self.r.semiring, self.namer, self.trace)
            pull_of_arg = puller.body(self.annot(s.arg), Var(y), self.r)
            inner = Case(pull_of_arg,
                         ((PBox(PVar(u)),
                           self.body(s.res, Promote(App(Var(f), Var(u))),
                                     Box(self.r, self.annot(s.res)))),),
                         scrut_annot=Box(self.r, self.annot(s.arg)))
            return Lam(y, Case(subj, ((PBox(PVar(f)), inner),), scrut_annot=subj_ty))
        if isinstance(s, Mu):
            if isinstance(s.body, (TyVar, RecVar)):
                raise DeriveError(
                    SIDE_CONDITION,
                    f"degenerate recursive type {_show(s)} has no constructor structure")
            f, w = self.namer.fresh("f"), self.namer.fresh("w")
            mu_closed = self.annot(s)
            ftype = Fun(Box(self.r, mu_closed), self.boxed(s))
            self.env[s.var] = f
            self.mu_env[s.var] = mu_closed
            inner = self.body(s.body, Var(w), Box(self.r, mu_closed))
            del self.env[s.var]
            del self.mu_env[s.var]
            return LetRec(f, Lam(w, inner), App(Var(f), subj), annot=ftype)
        if isinstance(s, Box):
            raise DeriveError(BOX_IN_SUBJECT,
                              "no derivation for types which are themselves graded modalities")
        raise AssertionError(f"unhandled type: {s}")


def derive_push(subject: Type, r: Grade) -> DerivedCombinator:
    """Elaborate the box-over-constructor distributive law at the subject type:
    (T) [r] -o T with every type variable boxed at r."""
    semiring = r.semiring
    key = ("push", subject, semiring, r)
    return _memoized(key, lambda: _build_push(subject, r, semiring))


def _build_push(subject: Type, r: Grade, semiring: str) -> DerivedCombinator:
    syntax.check_wellformed(subject)
    if contains_box(subject):
        raise DeriveError(BOX_IN_SUBJECT,
                          "no derivation for types which are themselves graded modalities")
    side: list[str] = []
    if multi_constructor(subject) or contains_base(subject):
        one = grades.one(semiring)
        if not grades.sr_leq(one, r):
            raise DeriveError(
                SIDE_CONDITION,
                f"matching under the box consumes a use, so 1 must be approximated "
                f"by the grade: {one} is not approximated by {r}",
                (one, r))
        side.append(f"1 <= {r}")
    namer = _Namer()
    trace: list[str] = []
    push = _Push(r, namer, trace)
    z = namer.fresh("z")
    term = Lam(z, push.body(subject, Var(z), Box(r, subject)))
    concluded = Fun(Box(r, subject), push.boxed(subject))
    _assert_checks(term, concluded, semiring, "push")
    return DerivedCombinator("push", subject, semiring, (("r", r),), term,
                             concluded, tuple(side), tuple(trace))


# ---------------------------------------------------------------------------
# pull
# ---------------------------------------------------------------------------

class _Pull:
    def __init__(self, rs: dict[str, Grade], semiring: str, namer: _Namer,
                 trace: list[str]):
        self.rs = rs
        self.sr = semiring
        self.namer = namer
        self.trace = trace
        self.env: dict[str, tuple[str, Grade]] = {}  # recvar -> (fn var, grade)
        self.mu_env: dict[str, Type] = {}

    def annot(self, s: Type) -> Type:
        out = s
        for name, mu in self.mu_env.items():
            out = syntax.subst_recvar(out, name, mu)
        return out

    def boxed(self, s: Type) -> Type:
        closed = self.annot(s)
        return subst_tyvars(closed,
                            {a: Box(self.rs[a], TyVar(a)) for a in free_tyvars(closed)})

    def conclude(self, s: Type, tgt: Grade | None) -> Grade:
        parts = [self.rs[a] for a in sorted(free_tyvars(s))]
        parts += [self.env[x][1] for x in sorted(free_recvars(s))]
        if not parts:
            if tgt is None:
                raise DeriveError(
                    NEEDS_ANNOTATION,
                    f"pull @{_show(s)} has no type variables; its grade must be "
                    f"given explicitly")
            return tgt
        acc = parts[0]
        for g in parts[1:]:
            met = grades.sr_meet(acc, g)
            if met is None:
                raise DeriveError(
                    MEET_UNDEFINED,
                    f"grades {acc} and {g} have no greatest-lower bound",
                    (acc, g))
            acc = met
        return acc

    def body(self, s: Type, subj: Term, tgt: Grade | None) -> Term:
        self.trace.append(f"pull @ {_show(s)}")
        if isinstance(s, Unit):
            return Case(subj, ((PCon("unit", ()), Promote(Con("unit", ()))),),
                        scrut_annot=self.annot(s))
        if isinstance(s, TyVar):
            return subj
        if isinstance(s, RecVar):
            return App(Var(self.env[s.name][0]), subj)
        if isinstance(s, Base):
            raise DeriveError(
                BASE_IN_SUBJECT,
                f"cannot pull at {_show(s)}: a bare base value cannot be re-boxed "
                f"(promotion requires a graded context)")
        if isinstance(s, Sum):
            c = self.conclude(s, tgt)
            x, y = self.namer.fresh("x"), self.namer.fresh("y")
            u, v = self.namer.fresh("u"), self.namer.fresh("v")
            ca, cb = self.conclude(s.left, c), self.conclude(s.right, c)
            left = Case(self.body(s.left, Var(x), c),
                        ((PBox(PVar(u)), Promote(Con("inl", (Var(u),)))),),
                        scrut_annot=Box(ca, self.annot(s.left)))
            right = Case(self.body(s.right, Var(y), c),
                         ((PBox(PVar(v)), Promote(Con("inr", (Var(v),)))),),
                         scrut_annot=Box(cb, self.annot(s.right)))
            return Case(subj, (
                (PCon("inl", (PVar(x),)), left),
                (PCon("inr", (PVar(y),)), right),
            ), scrut_annot=self.boxed(s))
        if isinstance(s, Tensor):
            c = self.conclude(s, tgt)
            x, y = self.namer.fresh("x"), self.namer.fresh("y")
            u, v = self.namer.fresh("u"), self.namer.fresh("v")
            ca, cb = self.conclude(s.left, c), self.conclude(s.right, c)
            scrut = pair(self.body(s.left, Var(x), c), self.body(s.right, Var(y), c))
            inner = Case(scrut,
                         ((PCon(",", (PBox(PVar(u)), PBox(PVar(v)))),
                           Promote(pair(Var(u), Var(v)))),),
                         scrut_annot=Tensor(Box(ca, self.annot(s.left)),
                                            Box(cb, self.annot(s.right))))
            return Case(subj, ((PCon(",", (PVar(x), PVar(y))), inner),),
                        scrut_annot=self.boxed(s))
        if isinstance(s, Mu):
            if isinstance(s.body, (TyVar, RecVar)):
                raise DeriveError(
                    SIDE_CONDITION,
                    f"degenerate recursive type {_show(s)} has no constructor structure")
            c = self.conclude(s, tgt)
            f, w = self.namer.fresh("f"), self.namer.fresh("w")
            mu_closed = self.annot(s)
            ftype = Fun(self.boxed(s), Box(c, mu_closed))
            self.env[s.var] = (f, c)
            self.mu_env[s.var] = mu_closed
            inner = self.body(s.body, Var(w), c)
            del self.env[s.var]
            del self.mu_env[s.var]
            return LetRec(f, Lam(w, inner), App(Var(f), subj), annot=ftype)
        if isinstance(s, Fun):
            raise DeriveError(FUN_IN_SUBJECT,
                              "cannot pull at function types: the concluding box "
                              "would have to promote the incoming function")
        if isinstance(s, Box):
            raise DeriveError(BOX_IN_SUBJECT,
                              "no derivation for types which are themselves graded modalities")
        raise AssertionError(f"unhandled type: {s}")


def derive_pull(subject: Type, rs: dict[str, Grade], semiring: str,
                default_grade: Grade | None = None) -> DerivedCombinator:
    """Elaborate the constructor-over-box distributive law: the subject with
    each variable boxed at its grade, concluding at the meet of the grades
    of the variables that occur (or at ``default_grade`` if none do)."""
    key = ("pull", subject, semiring,
           tuple(sorted(rs.items())), default_grade)
    return _memoized(key, lambda: _build_pull(subject, rs, semiring, default_grade))


def _build_pull(subject, rs, semiring, default_grade) -> DerivedCombinator:
    syntax.check_wellformed(subject)
    if contains_box(subject):
        raise DeriveError(BOX_IN_SUBJECT,
                          "no derivation for types which are themselves graded modalities")
    if contains_fun(subject):
        raise DeriveError(FUN_IN_SUBJECT,
                          "cannot pull at function types: the concluding box "
                          "would have to promote the incoming function")
    if contains_base(subject):
        raise DeriveError(
            BASE_IN_SUBJECT,
            f"cannot pull at {_show(subject)}: a bare base value cannot be "
            f"re-boxed (promotion requires a graded context)")
    occurring = free_tyvars(subject)
    if set(rs) != occurring:
        raise DeriveError(
            SIDE_CONDITION,
            f"grades must cover exactly the type variables of the subject "
            f"(given {sorted(rs)}, subject has {sorted(occurring)})")
    for name, g in rs.items():
        if g.semiring != semiring:
            raise DeriveError(MIXED_SEMIRING,
                              f"grade for {name!r} is from {g.semiring}, "
                              f"expected {semiring}", (g,))
    if default_grade is not None and default_grade.semiring != semiring:
        raise DeriveError(MIXED_SEMIRING,
                          f"result grade is from {default_grade.semiring}, "
                          f"expected {semiring}", (default_grade,))
    namer = _Namer()
    trace: list[str] = []
    pull = _Pull(rs, semiring, namer, trace)
    result_grade = pull.conclude(subject, default_grade)
    z = namer.fresh("z")
    term = Lam(z, pull.body(subject, Var(z), default_grade))
    concluded = Fun(pull.boxed(subject), Box(result_grade, subject))
    _assert_checks(term, concluded, semiring, "pull")
    gs = tuple(sorted(rs.items())) + ((("result", result_grade),) if not occurring else ())
    return DerivedCombinator("pull", subject, semiring, gs, term, concluded,
                             (), tuple(trace))


# ---------------------------------------------------------------------------
# drop
# ---------------------------------------------------------------------------

class _Drop:
    def __init__(self, namer: _Namer, trace: list[str]):
        self.namer = namer
        self.trace = trace
        self.env: dict[str, str] = {}
        self.mu_env: dict[str, Type] = {}

    def annot(self, s: Type) -> Type:
        out = s
        for name, mu in self.mu_env.items():
            out = syntax.subst_recvar(out, name, mu)
        return out

    def body(self, s: Type, subj: Term) -> Term:
        self.trace.append(f"drop @ {_show(s)}")
        if isinstance(s, Base):
            return App(Derive("drop", s), subj)  # built-in weakening
        if isinstance(s, Unit):
            return Case(subj, ((PCon("unit", ()), Con("unit", ())),),
                        scrut_annot=self.annot(s))
        if isinstance(s, RecVar):
            return App(Var(self.env[s.name]), subj)
        if isinstance(s, Sum):
            x, y = self.namer.fresh("x"), self.namer.fresh("y")
            return Case(subj, (
                (PCon("inl", (PVar(x),)), self.body(s.left, Var(x))),
                (PCon("inr", (PVar(y),)), self.body(s.right, Var(y))),
            ), scrut_annot=self.annot(s))
        if isinstance(s, Tensor):
            x, y = self.namer.fresh("x"), self.namer.fresh("y")
            inner = Case(self.body(s.left, Var(x)),
                         ((PCon("unit", ()),
                           Case(self.body(s.right, Var(y)),
                                ((PCon("unit", ()), Con("unit", ())),),
                                scrut_annot=Unit())),),
                         scrut_annot=Unit())
            return Case(subj, ((PCon(",", (PVar(x), PVar(y))), inner),),
                        scrut_annot=self.annot(s))
        if isinstance(s, Mu):
            if isinstance(s.body, (TyVar, RecVar)):
                raise DeriveError(
                    SIDE_CONDITION,
                    f"degenerate recursive type {_show(s)} has no constructor structure")
            f, w = self.namer.fresh("f"), self.namer.fresh("w")
            mu_closed = self.annot(s)
            ftype = Fun(mu_closed, Unit())
            self.env[s.var] = f
            self.mu_env[s.var] = mu_closed
            inner = self.body(s.body, Var(w))
            del self.env[s.var]
            del self.mu_env[s.var]
            return LetRec(f, Lam(w, inner), App(Var(f), subj), annot=ftype)
        raise AssertionError(f"unhandled type: {s}")


def derive_drop(subject: Type, semiring: str = grades.NAT_EXACT) -> DerivedCombinator:
    """Elaborate structural weakening at a closed weakenable type: T -o Unit."""
    key = ("drop", subject, semiring)
    return _memoized(key, lambda: _build_drop(subject, semiring))


def _build_drop(subject: Type, semiring: str) -> DerivedCombinator:
    syntax.check_wellformed(subject)
    if contains_tyvar(subject):
        raise DeriveError(
            POLYMORPHIC_DROP,
            "cannot derive drop in a polymorphic context: type variables range "
            "over undroppable types")
    if contains_res(subject):
        raise DeriveError(NOT_DROPPABLE, "the subject contains the linear-only "
                                         "base type Res")
    if contains_fun(subject):
        raise DeriveError(NOT_DROPPABLE, "the subject contains a function type")
    if contains_box(subject):
        raise DeriveError(NOT_DROPPABLE, "the subject contains a graded modality")
    namer = _Namer()
    trace: list[str] = []
    if isinstance(subject, Base):
        # drop at a weakenable base type is the built-in primitive itself
        term: Term = Derive("drop", subject)
    else:
        drop = _Drop(namer, trace)
        z = namer.fresh("z")
        term = Lam(z, drop.body(subject, Var(z)))
    concluded = Fun(subject, Unit())
    _assert_checks(term, concluded, semiring, "drop")
    return DerivedCombinator("drop", subject, semiring, (), term, concluded,
                             (), tuple(trace))


# ---------------------------------------------------------------------------
# copyShape
# ---------------------------------------------------------------------------

def shape_type(s: Type) -> Type:
    """The spine type: element, base and unit positions become Unit."""
    if isinstance(s, (Unit, TyVar, Base)):
        return Unit()
    if isinstance(s, Tensor):
        return Tensor(shape_type(s.left), shape_type(s.right))
    if isinstance(s, Sum):
        return Sum(shape_type(s.left), shape_type(s.right))
    if isinstance(s, Mu):
        return Mu(s.var, shape_type(s.body))
    if isinstance(s, RecVar):
        return s
    raise AssertionError(f"no shape for type: {s}")


class _CopyShape:
    def __init__(self, namer: _Namer, trace: list[str]):
        self.namer = namer
        self.trace = trace
        self.env: dict[str, str] = {}
        self.mu_env: dict[str, Type] = {}

    def annot(self, s: Type) -> Type:
        out = s
        for name, mu in self.mu_env.items():
            out = syntax.subst_recvar(out, name, mu)
        return out

    def result_ty(self, s: Type) -> Type:
        closed = self.annot(s)
        return Tensor(shape_type(closed), closed)

    def body(self, s: Type, subj: Term) -> Term:
        self.trace.append(f"copyShape @ {_show(s)}")
        if isinstance(s, (TyVar, Base)):
            return pair(Con("unit", ()), subj)
        if isinstance(s, Unit):
            return Case(subj, ((PCon("unit", ()), pair(Con("unit", ()), Con("unit", ()))),),
                        scrut_annot=self.annot(s))
        if isinstance(s, RecVar):
            return App(Var(self.env[s.name]), subj)
        if isinstance(s, Sum):
            x, y = self.namer.fresh("x"), self.namer.fresh("y")
            sl, xl = self.namer.fresh("s"), self.namer.fresh("x")
            sr_, yr = self.namer.fresh("s"), self.namer.fresh("y")
            left = Case(self.body(s.left, Var(x)),
                        ((PCon(",", (PVar(sl), PVar(xl))),
                          pair(Con("inl", (Var(sl),)), Con("inl", (Var(xl),)))),),
                        scrut_annot=self.result_ty(s.left))
            right = Case(self.body(s.right, Var(y)),
                         ((PCon(",", (PVar(sr_), PVar(yr))),
                           pair(Con("inr", (Var(sr_),)), Con("inr", (Var(yr),)))),),
                         scrut_annot=self.result_ty(s.right))
            return Case(subj, (
                (PCon("inl", (PVar(x),)), left),
                (PCon("inr", (PVar(y),)), right),
            ), scrut_annot=self.annot(s))
        if isinstance(s, Tensor):
            x, y = self.namer.fresh("x"), self.namer.fresh("y")
            s1, x1 = self.namer.fresh("s"), self.namer.fresh("x")
            s2, y2 = self.namer.fresh("s"), self.namer.fresh("y")
            inner2 = Case(self.body(s.right, Var(y)),
                          ((PCon(",", (PVar(s2), PVar(y2))),
                            pair(pair(Var(s1), Var(s2)), pair(Var(x1), Var(y2)))),),
                          scrut_annot=self.result_ty(s.right))
            inner1 = Case(self.body(s.left, Var(x)),
                          ((PCon(",", (PVar(s1), PVar(x1))), inner2),),
                          scrut_annot=self.result_ty(s.left))
            return Case(subj, ((PCon(",", (PVar(x), PVar(y))), inner1),),
                        scrut_annot=self.annot(s))
        if isinstance(s, Mu):
            if isinstance(s.body, (TyVar, RecVar)):
                raise DeriveError(
                    SIDE_CONDITION,
                    f"degenerate recursive type {_show(s)} has no constructor structure")
            f, w = self.namer.fresh("f"), self.namer.fresh("w")
            mu_closed = self.annot(s)
            ftype = Fun(mu_closed, Tensor(shape_type(mu_closed), mu_closed))
            self.env[s.var] = f
            self.mu_env[s.var] = mu_closed
            inner = self.body(s.body, Var(w))
            del self.env[s.var]
            del self.mu_env[s.var]
            return LetRec(f, Lam(w, inner), App(Var(f), subj), annot=ftype)
        raise AssertionError(f"unhandled type: {s}")


def derive_copyshape(subject: Type, semiring: str = grades.NAT_EXACT) -> DerivedCombinator:
    """Elaborate the shape-copying combinator: T -o (spine of T * T)."""
    key = ("copyShape", subject, semiring)
    return _memoized(key, lambda: _build_copyshape(subject, semiring))


def _build_copyshape(subject: Type, semiring: str) -> DerivedCombinator:
    syntax.check_wellformed(subject)
    if contains_fun(subject):
        raise DeriveError(FUN_IN_SUBJECT, "cannot copy the shape of a function")
    if contains_box(subject):
        raise DeriveError(BOX_IN_SUBJECT,
                          "no derivation for types which are themselves graded modalities")
    namer = _Namer()
    trace: list[str] = []
    cs = _CopyShape(namer, trace)
    z = namer.fresh("z")
    term = Lam(z, cs.body(subject, Var(z)))
    concluded = Fun(subject, Tensor(shape_type(subject), subject))
    _assert_checks(term, concluded, semiring, "copyShape")
    return DerivedCombinator("copyShape", subject, semiring, (), term, concluded,
                             (), tuple(trace))


# ---------------------------------------------------------------------------
# fmap
# ---------------------------------------------------------------------------

class _Fmap:
    def __init__(self, alpha: str, beta: str, g: Grade, namer: _Namer,
                 trace: list[str]):
        self.alpha = alpha
        self.beta = beta
        self.g = g
        self.namer = namer
        self.trace = trace
        self.env: dict[str, str] = {}
        self.mu_env: dict[str, Type] = {}

    def annot(self, s: Type) -> Type:
        out = s
        for name, mu in self.mu_env.items():
            out = syntax.subst_recvar(out, name, mu)
        return out

    def mapped(self, s: Type) -> Type:
        return subst_tyvars(self.annot(s), {self.alpha: TyVar(self.beta)})

    def fn_box_ty(self) -> Type:
        return Box(self.g, Fun(TyVar(self.alpha), TyVar(self.beta)))

    def body(self, s: Type, subj: Term, fvar: str) -> Term:
        self.trace.append(f"fmap @ {_show(s)}")
        if isinstance(s, TyVar):
            if s.name == self.alpha:
                return App(Var(fvar), subj)
            return subj
        if isinstance(s, (Unit, Base)):
            return subj
        if isinstance(s, RecVar):
            return App(App(Var(self.env[s.name]), Promote(Var(fvar))), subj)
        if isinstance(s, Sum):
            x, y = self.namer.fresh("x"), self.namer.fresh("y")
            return Case(subj, (
                (PCon("inl", (PVar(x),)), Con("inl", (self.body(s.left, Var(x), fvar),))),
                (PCon("inr", (PVar(y),)), Con("inr", (self.body(s.right, Var(y), fvar),))),
            ), scrut_annot=self.annot(s))
        if isinstance(s, Tensor):
            x, y = self.namer.fresh("x"), self.namer.fresh("y")
            return Case(subj, ((PCon(",", (PVar(x), PVar(y))),
                                pair(self.body(s.left, Var(x), fvar),
                                     self.body(s.right, Var(y), fvar))),),
                        scrut_annot=self.annot(s))
        if isinstance(s, Mu):
            if isinstance(s.body, (TyVar, RecVar)):
                raise DeriveError(
                    SIDE_CONDITION,
                    f"degenerate recursive type {_show(s)} has no constructor structure")
            h = self.namer.fresh("h")
            bf, w, f2 = self.namer.fresh("bf"), self.namer.fresh("w"), self.namer.fresh("f")
            mu_closed = self.annot(s)
            htype = Fun(self.fn_box_ty(), Fun(mu_closed, self.mapped(s)))
            self.env[s.var] = h
            self.mu_env[s.var] = mu_closed
            inner = Case(Var(bf), ((PBox(PVar(f2)), self.body(s.body, Var(w), f2)),),
                         scrut_annot=self.fn_box_ty())
            del self.env[s.var]
            del self.mu_env[s.var]
            bound = Lam(bf, Lam(w, inner))
            return LetRec(h, bound, App(App(Var(h), Promote(Var(fvar))), subj),
                          annot=htype)
        raise AssertionError(f"unhandled type: {s}")


def derive_fmap(subject: Type, alpha: str, g: Grade,
                semiring: str | None = None) -> DerivedCombinator:
    """Elaborate the covariant morphism mapping over the ``alpha`` positions,
    with the mapped function boxed at grade ``g``: the grade must cover the
    number of uses along every control path."""
    semiring = semiring or g.semiring
    key = ("fmap", subject, semiring, alpha, g)
    return _memoized(key, lambda: _build_fmap(subject, alpha, g, semiring))


def _build_fmap(subject: Type, alpha: str, g: Grade, semiring: str) -> DerivedCombinator:
    syntax.check_wellformed(subject)
    if contains_box(subject):
        raise DeriveError(BOX_IN_SUBJECT,
                          "no derivation for types which are themselves graded modalities")
    if contains_fun(subject):
        raise DeriveError(FUN_IN_SUBJECT, "fmap subjects must not contain functions")
    if g.semiring != semiring:
        raise DeriveError(MIXED_SEMIRING,
                          f"grade {g} is from {g.semiring}, expected {semiring}", (g,))
    beta = _fresh_tyvar(subject, alpha)
    namer = _Namer()
    trace: list[str] = []
    fm = _Fmap(alpha, beta, g, namer, trace)
    bf, z, f = namer.fresh("bf"), namer.fresh("z"), namer.fresh("f")
    term = Lam(bf, Lam(z, Case(Var(bf),
                               ((PBox(PVar(f)), fm.body(subject, Var(z), f)),),
                               scrut_annot=fm.fn_box_ty())))
    concluded = Fun(fm.fn_box_ty(), Fun(subject, fm.mapped(subject)))
    from .typecheck import Checker, CheckError, GRADE_EXCEEDED, NO_UPPER_BOUND
    try:
        Checker(semiring).check({}, term, concluded)
    except CheckError as e:
        if e.diag.code in (GRADE_EXCEEDED, NO_UPPER_BOUND):
            raise DeriveError(
                SIDE_CONDITION,
                f"grade {g} cannot cover the usage count of the mapped function: "
                f"{e.diag.message}", (g,)) from e
        raise RuntimeError(
            f"internal: derived fmap fails to check: {e.diag.render()}") from e
    return DerivedCombinator("fmap", subject, semiring,
                             (("var", alpha), ("g", g)), term, concluded,
                             (), tuple(trace))


def _fresh_tyvar(subject: Type, alpha: str) -> str:
    used = free_tyvars(subject) | {alpha}
    for c in "abcdefghijklmnopq":
        if c not in used:
            return c
    i = 0
    while f"b{i}" in used:
        i += 1
    return f"b{i}"


# ---------------------------------------------------------------------------
# graded comonad witnesses
# ---------------------------------------------------------------------------

def comonad_eps(a: Type, semiring: str) -> Term:
    """The counit: (A) [1] -o A."""
    term = Lam("x", Case(Var("x"), ((PBox(PVar("z")), Var("z")),)))
    _assert_checks(term, Fun(Box(grades.one(semiring), a), a), semiring, "eps")
    return term


def eps_type(a: Type, semiring: str) -> Type:
    return Fun(Box(grades.one(semiring), a), a)


def comonad_delta(a: Type, r: Grade, s: Grade) -> Term:
    """Comultiplication: (A) [r * s] -o ((A) [s]) [r]."""
    if r.semiring != s.semiring:
        raise DeriveError(MIXED_SEMIRING,
                          f"delta grades mix {r.semiring} and {s.semiring}", (r, s))
    inner = Case(Var("x"), ((PBox(PVar("z")), Promote(Promote(Var("z")))),))
    term = Lam("x", inner)
    _assert_checks(term, delta_type(a, r, s), r.semiring, "delta")
    return term


def delta_type(a: Type, r: Grade, s: Grade) -> Type:
    return Fun(Box(grades.sr_mul(r, s), a), Box(r, Box(s, a)))


# ---------------------------------------------------------------------------
# evaluation support
# ---------------------------------------------------------------------------

def elaborate_untyped(kind: str, subject: Type) -> Term:
    """The elaborated term for a derive node reached during evaluation.

    Terms are grade-independent, so placeholder grades are used for the
    (runtime-irrelevant) annotations. drop at a base type stays primitive.
    Underivable subjects (possible only in unchecked terms) surface as
    stuck terms.
    """
    from .evaluator import StuckTerm
    try:
        return _elaborate_untyped(kind, subject)
    except DeriveError as e:
        raise StuckTerm(f"{kind} @{_show(subject)} is not derivable: {e.message}") from e


def _elaborate_untyped(kind: str, subject: Type) -> Term:
    one = grades.one(grades.NAT_LE)
    if contains_box(subject):
        raise DeriveError(BOX_IN_SUBJECT,
                          "no derivation for types which are themselves graded modalities")
    if kind == "push":
        namer = _Namer()
        push = _Push(one, namer, [])
        z = namer.fresh("z")
        return Lam(z, push.body(subject, Var(z), Box(one, subject)))
    if kind == "pull":
        if contains_fun(subject):
            raise DeriveError(FUN_IN_SUBJECT, "cannot pull at function types")
        namer = _Namer()
        rs = {a: one for a in free_tyvars(subject)}
        pull = _Pull(rs, grades.NAT_LE, namer, [])
        z = namer.fresh("z")
        return Lam(z, pull.body(subject, Var(z), one))
    if kind == "drop":
        if contains_tyvar(subject):
            raise DeriveError(POLYMORPHIC_DROP, "drop at a polymorphic type")
        if contains_res(subject) or contains_fun(subject):
            raise DeriveError(NOT_DROPPABLE, "the subject cannot be dropped")
        if isinstance(subject, Base):
            return Derive("drop", subject)
        namer = _Namer()
        drop = _Drop(namer, [])
        z = namer.fresh("z")
        return Lam(z, drop.body(subject, Var(z)))
    if kind == "copyShape":
        if contains_fun(subject):
            raise DeriveError(FUN_IN_SUBJECT, "cannot copy the shape of a function")
        namer = _Namer()
        cs = _CopyShape(namer, [])
        z = namer.fresh("z")
        return Lam(z, cs.body(subject, Var(z)))
    if kind == "fmap":
        if contains_fun(subject):
            raise DeriveError(FUN_IN_SUBJECT, "fmap subjects must not contain functions")
        alphas = _memo_fmap_alphas(subject) or sorted(free_tyvars(subject))
        if not alphas:
            alpha = "a"  # no variable positions; the function goes unused
        elif len(set(alphas)) == 1:
            alpha = alphas[0]
        else:
            from .evaluator import StuckTerm
            raise StuckTerm(f"ambiguous fmap @{_show(subject)}: cannot determine "
                            f"the mapped variable at run time")
        namer = _Namer()
        fm = _Fmap(alpha, _fresh_tyvar(subject, alpha), one, namer, [])
        bf, z, f = namer.fresh("bf"), namer.fresh("z"), namer.fresh("f")
        return Lam(bf, Lam(z, Case(Var(bf),
                                   ((PBox(PVar(f)), fm.body(subject, Var(z), f)),),
                                   scrut_annot=fm.fn_box_ty())))
    raise AssertionError(f"unhandled derive kind: {kind}")


def _memo_fmap_alphas(subject: Type) -> list[str]:
    with _memo_lock:
        return [key[3] for key in _memo
                if key[0] == "fmap" and key[1] == subject]
