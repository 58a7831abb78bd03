"""Abstract syntax for types, terms and patterns, plus type-level utilities.

Types and terms are immutable dataclasses. Source positions and the
internal annotations planted by the deriving engine are excluded from
equality, so ``==`` stays structural and ``alpha_eq`` compares binding
structure only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .grades import Grade


@dataclass(frozen=True)
class Pos:
    file: str
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

class Type:
    pass


@dataclass(frozen=True)
class Fun(Type):
    arg: Type
    res: Type


@dataclass(frozen=True)
class Tensor(Type):
    left: Type
    right: Type


@dataclass(frozen=True)
class Sum(Type):
    left: Type
    right: Type


@dataclass(frozen=True)
class Unit(Type):
    pass


@dataclass(frozen=True)
class Box(Type):
    grade: Grade
    body: Type


@dataclass(frozen=True)
class TyVar(Type):
    name: str


@dataclass(frozen=True)
class RecVar(Type):
    name: str


@dataclass(frozen=True)
class Mu(Type):
    var: str
    body: Type


@dataclass(frozen=True)
class Base(Type):
    name: str  # "Int" or "Res"


UNIT = Unit()
INT = Base("Int")
RES = Base("Res")

# Base-type classification: Int is weakenable (droppable), Res is linear-only.
WEAKENABLE_BASES = frozenset({"Int"})


class IllFormedType(Exception):
    pass


def check_wellformed(t: Type) -> None:
    """Every recursion variable must be bound by an enclosing mu binder."""
    def go(t: Type, bound: frozenset[str]) -> None:
        if isinstance(t, RecVar):
            if t.name not in bound:
                raise IllFormedType(f"unbound recursion variable {t.name}")
        elif isinstance(t, Mu):
            go(t.body, bound | {t.var})
        elif isinstance(t, (Fun,)):
            go(t.arg, bound)
            go(t.res, bound)
        elif isinstance(t, (Tensor, Sum)):
            go(t.left, bound)
            go(t.right, bound)
        elif isinstance(t, Box):
            go(t.body, bound)
    go(t, frozenset())


def free_tyvars(t: Type) -> set[str]:
    if isinstance(t, TyVar):
        return {t.name}
    if isinstance(t, Fun):
        return free_tyvars(t.arg) | free_tyvars(t.res)
    if isinstance(t, (Tensor, Sum)):
        return free_tyvars(t.left) | free_tyvars(t.right)
    if isinstance(t, (Box, Mu)):
        return free_tyvars(t.body)
    return set()


def free_recvars(t: Type) -> set[str]:
    if isinstance(t, RecVar):
        return {t.name}
    if isinstance(t, Fun):
        return free_recvars(t.arg) | free_recvars(t.res)
    if isinstance(t, (Tensor, Sum)):
        return free_recvars(t.left) | free_recvars(t.right)
    if isinstance(t, Box):
        return free_recvars(t.body)
    if isinstance(t, Mu):
        return free_recvars(t.body) - {t.var}
    return set()


def contains(t: Type, pred) -> bool:
    if pred(t):
        return True
    if isinstance(t, Fun):
        return contains(t.arg, pred) or contains(t.res, pred)
    if isinstance(t, (Tensor, Sum)):
        return contains(t.left, pred) or contains(t.right, pred)
    if isinstance(t, (Box, Mu)):
        return contains(t.body, pred)
    return False


def contains_box(t: Type) -> bool:
    return contains(t, lambda s: isinstance(s, Box))


def contains_fun(t: Type) -> bool:
    return contains(t, lambda s: isinstance(s, Fun))


def contains_base(t: Type) -> bool:
    return contains(t, lambda s: isinstance(s, Base))


def contains_tyvar(t: Type) -> bool:
    return contains(t, lambda s: isinstance(s, TyVar))


def contains_res(t: Type) -> bool:
    return contains(t, lambda s: isinstance(s, Base) and s.name not in WEAKENABLE_BASES)


def subst_tyvars(t: Type, sub: dict[str, Type]) -> Type:
    """Replace free type variables; tyvars have no binders so no capture."""
    if isinstance(t, TyVar):
        return sub.get(t.name, t)
    if isinstance(t, Fun):
        return Fun(subst_tyvars(t.arg, sub), subst_tyvars(t.res, sub))
    if isinstance(t, Tensor):
        return Tensor(subst_tyvars(t.left, sub), subst_tyvars(t.right, sub))
    if isinstance(t, Sum):
        return Sum(subst_tyvars(t.left, sub), subst_tyvars(t.right, sub))
    if isinstance(t, Box):
        return Box(t.grade, subst_tyvars(t.body, sub))
    if isinstance(t, Mu):
        return Mu(t.var, subst_tyvars(t.body, sub))
    return t


def subst_recvar(t: Type, name: str, value: Type) -> Type:
    """Capture-avoiding substitution of a recursion variable."""
    if isinstance(t, RecVar):
        return value if t.name == name else t
    if isinstance(t, Fun):
        return Fun(subst_recvar(t.arg, name, value), subst_recvar(t.res, name, value))
    if isinstance(t, Tensor):
        return Tensor(subst_recvar(t.left, name, value), subst_recvar(t.right, name, value))
    if isinstance(t, Sum):
        return Sum(subst_recvar(t.left, name, value), subst_recvar(t.right, name, value))
    if isinstance(t, Box):
        return Box(t.grade, subst_recvar(t.body, name, value))
    if isinstance(t, Mu):
        if t.var == name:
            return t
        if t.var in free_recvars(value):
            fresh = _fresh_recvar(t.var, free_recvars(value) | free_recvars(t.body))
            body = subst_recvar(t.body, t.var, RecVar(fresh))
            return Mu(fresh, subst_recvar(body, name, value))
        return Mu(t.var, subst_recvar(t.body, name, value))
    return t


def _fresh_recvar(base: str, avoid: set[str]) -> str:
    for i in itertools.count(1):
        cand = f"{base}{i}"
        if cand not in avoid:
            return cand
    raise AssertionError


class NotAMu(Exception):
    pass


def unroll_mu(t: Type) -> Type:
    """One unrolling of a recursive type: mu X. A becomes A[mu X. A / X]."""
    if not isinstance(t, Mu):
        raise NotAMu(f"not a recursive type: {t}")
    return subst_recvar(t.body, t.var, t)


def multi_constructor(t: Type) -> bool:
    """Decide whether the type has more than one data constructor.

    Computed as a least fixed point of the constructor-count equations with
    counts saturated at 2 and recursion variables starting from 0, which is
    the terminating reading of the unrolling equation for mu types.
    """
    return _count(t, {}) > 1


def _count(t: Type, env: dict[str, int]) -> int:
    if isinstance(t, (Unit, Fun)):
        return 1
    if isinstance(t, TyVar):
        return 1
    if isinstance(t, RecVar):
        return env.get(t.name, 0)
    if isinstance(t, Base):
        # Int literals are distinguishable by matching; Res is abstract.
        return 2 if t.name in WEAKENABLE_BASES else 1
    if isinstance(t, Box):
        return _count(t.body, env)
    if isinstance(t, Sum):
        return min(2, 2 * (_count(t.left, env) + _count(t.right, env)))
    if isinstance(t, Tensor):
        return min(2, _count(t.left, env) * _count(t.right, env))
    if isinstance(t, Mu):
        c = 0
        while True:
            c2 = _count(t.body, {**env, t.var: c})
            if c2 == c:
                return c
            c = c2
    raise AssertionError(f"unhandled type: {t}")


def types_equal(a: Type, b: Type) -> bool:
    """Structural equality up to renaming of mu binders."""
    def go(a: Type, b: Type, env: dict[str, str]) -> bool:
        if isinstance(a, RecVar) and isinstance(b, RecVar):
            return env.get(a.name, a.name) == b.name
        if type(a) is not type(b):
            return False
        if isinstance(a, (Unit,)):
            return True
        if isinstance(a, (TyVar, Base)):
            return a.name == b.name
        if isinstance(a, Fun):
            return go(a.arg, b.arg, env) and go(a.res, b.res, env)
        if isinstance(a, (Tensor, Sum)):
            return go(a.left, b.left, env) and go(a.right, b.right, env)
        if isinstance(a, Box):
            return a.grade == b.grade and go(a.body, b.body, env)
        if isinstance(a, Mu):
            return go(a.body, b.body, {**env, a.var: b.var})
        raise AssertionError(f"unhandled type: {a}")
    return go(a, b, {})


# ---------------------------------------------------------------------------
# Patterns
# ---------------------------------------------------------------------------

class Pattern:
    pass


@dataclass(frozen=True)
class PVar(Pattern):
    name: str
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class PWild(Pattern):
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class PBox(Pattern):
    pat: Pattern
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class PCon(Pattern):
    con: str
    args: tuple[Pattern, ...]
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class PInt(Pattern):
    value: int
    pos: Pos | None = field(default=None, compare=False, repr=False)


def pattern_vars(p: Pattern) -> list[str]:
    if isinstance(p, PVar):
        return [p.name]
    if isinstance(p, PBox):
        return pattern_vars(p.pat)
    if isinstance(p, PCon):
        out: list[str] = []
        for sub in p.args:
            out.extend(pattern_vars(sub))
        return out
    return []


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

# Fixed constructor table: name -> arity. Result types are structural
# (unit : 1, (,) : A -o B -o A*B, inl : A -o A+B, inr : B -o A+B).
CONSTRUCTORS = {"unit": 0, ",": 2, "inl": 1, "inr": 1}

DERIVE_KINDS = ("push", "pull", "drop", "copyShape", "fmap")


class Term:
    pass


@dataclass(frozen=True)
class Var(Term):
    name: str
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class App(Term):
    fn: Term
    arg: Term
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Lam(Term):
    var: str
    body: Term
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Promote(Term):
    body: Term
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Con(Term):
    con: str
    args: tuple[Term, ...]
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Case(Term):
    scrutinee: Term
    branches: tuple[tuple[Pattern, Term], ...]
    pos: Pos | None = field(default=None, compare=False, repr=False)
    # Scrutinee type planted by the deriving engine so elaborated terms
    # synthesize without a constraint solver; never set by the parser.
    scrut_annot: Type | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class LetRec(Term):
    var: str
    bound: Term
    body: Term
    pos: Pos | None = field(default=None, compare=False, repr=False)
    # Type of the recursive binder, planted by the deriving engine.
    annot: Type | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Derive(Term):
    kind: str  # one of DERIVE_KINDS
    at: Type
    pos: Pos | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class IntLit(Term):
    value: int
    pos: Pos | None = field(default=None, compare=False, repr=False)


UNIT_TERM = Con("unit", ())


def pair(a: Term, b: Term) -> Term:
    return Con(",", (a, b))


def free_vars(t: Term) -> set[str]:
    if isinstance(t, Var):
        return {t.name}
    if isinstance(t, App):
        return free_vars(t.fn) | free_vars(t.arg)
    if isinstance(t, Lam):
        return free_vars(t.body) - {t.var}
    if isinstance(t, Promote):
        return free_vars(t.body)
    if isinstance(t, Con):
        out: set[str] = set()
        for a in t.args:
            out |= free_vars(a)
        return out
    if isinstance(t, Case):
        out = free_vars(t.scrutinee)
        for p, b in t.branches:
            out |= free_vars(b) - set(pattern_vars(p))
        return out
    if isinstance(t, LetRec):
        return (free_vars(t.bound) | free_vars(t.body)) - {t.var}
    return set()


_fresh_counter = itertools.count()


def fresh_name(base: str, avoid: set[str]) -> str:
    if base not in avoid:
        return base
    for i in itertools.count(1):
        cand = f"{base}_{i}"
        if cand not in avoid:
            return cand
    raise AssertionError


def _rename_pattern(p: Pattern, mapping: dict[str, str]) -> Pattern:
    if isinstance(p, PVar):
        return PVar(mapping.get(p.name, p.name), p.pos)
    if isinstance(p, PBox):
        return PBox(_rename_pattern(p.pat, mapping), p.pos)
    if isinstance(p, PCon):
        return PCon(p.con, tuple(_rename_pattern(a, mapping) for a in p.args), p.pos)
    return p


def subst_term(t: Term, sub: dict[str, Term]) -> Term:
    """Simultaneous capture-avoiding substitution."""
    if not sub:
        return t
    if isinstance(t, Var):
        return sub.get(t.name, t)
    if isinstance(t, App):
        return App(subst_term(t.fn, sub), subst_term(t.arg, sub), t.pos)
    if isinstance(t, Promote):
        return Promote(subst_term(t.body, sub), t.pos)
    if isinstance(t, Con):
        return Con(t.con, tuple(subst_term(a, sub) for a in t.args), t.pos)
    if isinstance(t, IntLit) or isinstance(t, Derive):
        return t
    if isinstance(t, Lam):
        body, var = _subst_under_binders(t.body, [t.var], sub)
        return Lam(var[0], body, t.pos)
    if isinstance(t, LetRec):
        inner = {k: v for k, v in sub.items() if k != t.var}
        free_in_values = set()
        for v in inner.values():
            free_in_values |= free_vars(v)
        var = t.var
        bound, body = t.bound, t.body
        if inner and var in free_in_values:
            new = fresh_name(var, free_in_values | free_vars(bound) | free_vars(body) | set(inner))
            ren = {var: Var(new)}
            bound, body, var = subst_term(bound, ren), subst_term(body, ren), new
        if inner:
            bound, body = subst_term(bound, inner), subst_term(body, inner)
        return LetRec(var, bound, body, t.pos, t.annot)
    if isinstance(t, Case):
        scrut = subst_term(t.scrutinee, sub)
        branches = []
        for p, b in t.branches:
            bound = pattern_vars(p)
            inner = {k: v for k, v in sub.items() if k not in bound}
            if not inner:
                branches.append((p, b))
                continue
            free_in_values = set()
            for v in inner.values():
                free_in_values |= free_vars(v)
            clash = [x for x in bound if x in free_in_values]
            if clash:
                avoid = free_in_values | free_vars(b) | set(bound) | set(inner)
                mapping = {}
                for x in clash:
                    mapping[x] = fresh_name(x, avoid)
                    avoid.add(mapping[x])
                p = _rename_pattern(p, mapping)
                b = subst_term(b, {x: Var(y) for x, y in mapping.items()})
            branches.append((p, subst_term(b, inner)))
        return Case(scrut, tuple(branches), t.pos, t.scrut_annot)
    raise AssertionError(f"unhandled term: {t}")


def _subst_under_binders(body: Term, binders: list[str], sub: dict[str, Term]):
    inner = {k: v for k, v in sub.items() if k not in binders}
    if not inner:
        return body, binders
    free_in_values = set()
    for v in inner.values():
        free_in_values |= free_vars(v)
    new_binders = []
    ren: dict[str, Term] = {}
    avoid = free_in_values | free_vars(body) | set(inner)
    for x in binders:
        if x in free_in_values:
            y = fresh_name(x, avoid)
            avoid.add(y)
            ren[x] = Var(y)
            new_binders.append(y)
        else:
            new_binders.append(x)
    if ren:
        body = subst_term(body, ren)
    return subst_term(body, inner), new_binders


def subst_tyvars_in_term(t: Term, sub: dict[str, Type]) -> Term:
    """Apply a type-variable substitution to the types embedded in a term
    (derive subjects and internal annotations)."""
    if isinstance(t, (Var, IntLit)):
        return t
    if isinstance(t, Derive):
        return Derive(t.kind, subst_tyvars(t.at, sub), t.pos)
    if isinstance(t, App):
        return App(subst_tyvars_in_term(t.fn, sub), subst_tyvars_in_term(t.arg, sub), t.pos)
    if isinstance(t, Lam):
        return Lam(t.var, subst_tyvars_in_term(t.body, sub), t.pos)
    if isinstance(t, Promote):
        return Promote(subst_tyvars_in_term(t.body, sub), t.pos)
    if isinstance(t, Con):
        return Con(t.con, tuple(subst_tyvars_in_term(a, sub) for a in t.args), t.pos)
    if isinstance(t, Case):
        annot = subst_tyvars(t.scrut_annot, sub) if t.scrut_annot is not None else None
        return Case(subst_tyvars_in_term(t.scrutinee, sub),
                    tuple((p, subst_tyvars_in_term(b, sub)) for p, b in t.branches),
                    t.pos, annot)
    if isinstance(t, LetRec):
        annot = subst_tyvars(t.annot, sub) if t.annot is not None else None
        return LetRec(t.var, subst_tyvars_in_term(t.bound, sub),
                      subst_tyvars_in_term(t.body, sub), t.pos, annot)
    raise AssertionError(f"unhandled term: {t}")


def alpha_eq(t1: Term, t2: Term) -> bool:
    """Equality up to consistent renaming of bound term variables."""
    return _alpha(t1, t2, {}, {})


def _alpha(t1: Term, t2: Term, env1: dict[str, int], env2: dict[str, int]) -> bool:
    if type(t1) is not type(t2):
        return False
    if isinstance(t1, Var):
        k1 = env1.get(t1.name, ("free", t1.name))
        k2 = env2.get(t2.name, ("free", t2.name))
        return k1 == k2
    if isinstance(t1, App):
        return _alpha(t1.fn, t2.fn, env1, env2) and _alpha(t1.arg, t2.arg, env1, env2)
    if isinstance(t1, Lam):
        lvl = len(env1)
        return _alpha(t1.body, t2.body, {**env1, t1.var: lvl}, {**env2, t2.var: lvl})
    if isinstance(t1, Promote):
        return _alpha(t1.body, t2.body, env1, env2)
    if isinstance(t1, Con):
        return t1.con == t2.con and len(t1.args) == len(t2.args) and all(
            _alpha(a, b, env1, env2) for a, b in zip(t1.args, t2.args)
        )
    if isinstance(t1, IntLit):
        return t1.value == t2.value
    if isinstance(t1, Derive):
        return t1.kind == t2.kind and types_equal(t1.at, t2.at)
    if isinstance(t1, LetRec):
        lvl = len(env1)
        e1 = {**env1, t1.var: lvl}
        e2 = {**env2, t2.var: lvl}
        return _alpha(t1.bound, t2.bound, e1, e2) and _alpha(t1.body, t2.body, e1, e2)
    if isinstance(t1, Case):
        if not _alpha(t1.scrutinee, t2.scrutinee, env1, env2):
            return False
        if len(t1.branches) != len(t2.branches):
            return False
        for (p1, b1), (p2, b2) in zip(t1.branches, t2.branches):
            binders = _pattern_pair(p1, p2)
            if binders is None:
                return False
            lvl = len(env1)
            e1, e2 = dict(env1), dict(env2)
            for i, (x1, x2) in enumerate(binders):
                e1[x1] = lvl + i
                e2[x2] = lvl + i
            if not _alpha(b1, b2, e1, e2):
                return False
        return True
    raise AssertionError(f"unhandled term: {t1}")


def _pattern_pair(p1: Pattern, p2: Pattern) -> list[tuple[str, str]] | None:
    """Pair up binders of two patterns if they have the same shape."""
    if type(p1) is not type(p2):
        return None
    if isinstance(p1, PVar):
        return [(p1.name, p2.name)]
    if isinstance(p1, PWild):
        return []
    if isinstance(p1, PInt):
        return [] if p1.value == p2.value else None
    if isinstance(p1, PBox):
        return _pattern_pair(p1.pat, p2.pat)
    if isinstance(p1, PCon):
        if p1.con != p2.con or len(p1.args) != len(p2.args):
            return None
        out: list[tuple[str, str]] = []
        for a, b in zip(p1.args, p2.args):
            sub = _pattern_pair(a, b)
            if sub is None:
                return None
            out.extend(sub)
        return out
    raise AssertionError(f"unhandled pattern: {p1}")
