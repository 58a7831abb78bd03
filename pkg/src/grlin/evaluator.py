"""Operational semantics: a fuelled normal-order normalizer.

Reduction is leftmost-outermost over the beta rules (function application,
first-matching-branch case elimination, unroll-on-demand letrec); boxes
suspend their payload until a deep normal form is requested. The remaining
equations of the theory are not rewrite rules here; the law harness
validates them extensionally by comparing normal forms.
"""

from __future__ import annotations

import re

from . import syntax
from .parser import SourceProgram, pretty_term
from .syntax import (
    App, Base, Case, Con, Derive, IntLit, Lam, LetRec, Pattern, PBox, PCon,
    PInt, Pos, Promote, PVar, PWild, Term, Var, free_vars, pattern_vars,
    subst_term,
)

DEFAULT_FUEL = 100_000

MATCH, NOMATCH, BLOCKED = "match", "nomatch", "blocked"

_UID_ROOT = re.compile(r"^(.+?~\d+)")


class FuelExhausted(Exception):
    def __init__(self, steps: int):
        super().__init__(f"fuel exhausted after {steps} steps")
        self.steps = steps


class StuckTerm(Exception):
    """A closed well-typed term should never get stuck; this signals a
    checker or deriver bug, or a non-exhaustive match."""


class NoMain(Exception):
    pass


class Fuel:
    __slots__ = ("remaining", "spent")

    def __init__(self, remaining: int = DEFAULT_FUEL):
        self.remaining = remaining
        self.spent = 0

    def spend(self) -> None:
        if self.remaining <= 0:
            raise FuelExhausted(self.spent)
        self.remaining -= 1
        self.spent += 1


class Evaluator:
    def __init__(self, fuel: Fuel, counter: dict | None = None):
        self.fuel = fuel
        self.counter = counter

    # -- counting -------------------------------------------------------------

    def _charge(self, sub: dict[str, Term], body: Term) -> None:
        if self.counter is None:
            return
        for name in sub:
            n = _occurrences(body, name)
            key = _count_key(name)
            self.counter[key] = self.counter.get(key, 0) + n

    # -- weak head normal form ------------------------------------------------

    def whnf(self, t: Term) -> Term:
        while True:
            if isinstance(t, App):
                fn = self.whnf(t.fn)
                if isinstance(fn, Lam):
                    self.fuel.spend()
                    self._charge({fn.var: t.arg}, fn.body)
                    t = subst_term(fn.body, {fn.var: t.arg})
                    continue
                if isinstance(fn, Derive):
                    stepped = self._apply_derive(fn, t.arg)
                    if stepped is not None:
                        t = stepped
                        continue
                    return App(fn, t.arg, t.pos)
                if isinstance(fn, (Con, Promote, IntLit)):
                    raise StuckTerm(f"applying a non-function: {pretty_term(fn)}")
                return App(fn, t.arg, t.pos)  # neutral head
            if isinstance(t, LetRec):
                self.fuel.spend()
                unrolled = LetRec(t.var, t.bound, t.bound, t.pos, t.annot)
                self._charge({t.var: unrolled}, t.body)
                t = subst_term(t.body, {t.var: unrolled})
                continue
            if isinstance(t, Case):
                scrut = t.scrutinee
                blocked = False
                for pat, body in t.branches:
                    status, sub, scrut = self.match(scrut, pat)
                    if status == MATCH:
                        self.fuel.spend()
                        self._charge(sub, body)
                        t = subst_term(body, sub)
                        break
                    if status == BLOCKED:
                        blocked = True
                        break
                else:
                    raise StuckTerm(
                        f"no branch matches {pretty_term(self.whnf(scrut))}")
                if blocked:
                    return Case(scrut, t.branches, t.pos, t.scrut_annot)
                continue
            if isinstance(t, Var):
                return t  # free under a binder being normalized
            return t  # Lam, Promote, Con, IntLit, Derive

    def _apply_derive(self, fn: Derive, arg: Term) -> Term | None:
        """delta-rules for derive nodes in head position."""
        from . import deriving
        if fn.kind == "drop" and isinstance(fn.at, Base):
            v = self.whnf(arg)
            if isinstance(v, IntLit):
                self.fuel.spend()
                return syntax.UNIT_TERM
            if _is_neutral(v):
                return None
            raise StuckTerm(f"drop @{fn.at.name} applied to {pretty_term(v)}")
        self.fuel.spend()
        return App(deriving.elaborate_untyped(fn.kind, fn.at), arg)

    # -- pattern matching -----------------------------------------------------

    def match(self, t: Term, p: Pattern) -> tuple[str, dict | None, Term]:
        """Match a term against a pattern, forcing only as much of the term
        as the pattern demands. Returns (status, substitution, forced term);
        a pattern variable binds its sub-term unevaluated."""
        if isinstance(p, PWild):
            return MATCH, {}, t
        if isinstance(p, PVar):
            return MATCH, {p.name: t}, t
        v = self.whnf(t)
        if _is_neutral(v):
            return BLOCKED, None, v
        if isinstance(p, PInt):
            if isinstance(v, IntLit):
                if v.value == p.value:
                    return MATCH, {}, v
                return NOMATCH, None, v
            return NOMATCH, None, v
        if isinstance(p, PBox):
            if isinstance(v, Promote):
                status, sub, forced = self.match(v.body, p.pat)
                return status, sub, Promote(forced, v.pos)
            return NOMATCH, None, v
        if isinstance(p, PCon):
            if not (isinstance(v, Con) and v.con == p.con
                    and len(v.args) == len(p.args)):
                return NOMATCH, None, v
            subst: dict[str, Term] = {}
            args = list(v.args)
            for i, (sub_t, sub_p) in enumerate(zip(args, p.args)):
                status, s, forced = self.match(sub_t, sub_p)
                args[i] = forced
                if status != MATCH:
                    return status, None, Con(v.con, tuple(args), v.pos)
                subst.update(s)
            return MATCH, subst, Con(v.con, tuple(args), v.pos)
        raise AssertionError(f"unhandled pattern: {p}")

    # -- normal forms -----------------------------------------------------------

    def normalize(self, t: Term, deep: bool = False) -> Term:
        t = self.whnf(t)
        if isinstance(t, Con):
            return Con(t.con, tuple(self.normalize(a, deep) for a in t.args), t.pos)
        if isinstance(t, Promote):
            if deep:
                return Promote(self.normalize(t.body, deep), t.pos)
            return t
        if isinstance(t, Lam):
            return Lam(t.var, self.normalize(t.body, deep), t.pos)
        if isinstance(t, App):
            return App(self.normalize(t.fn, deep), self.normalize(t.arg, deep), t.pos)
        if isinstance(t, Case):
            scrut = self.normalize(t.scrutinee, deep)
            branches = tuple((p, self.normalize(b, deep)) for p, b in t.branches)
            return Case(scrut, branches, t.pos, t.scrut_annot)
        return t


def _is_neutral(t: Term) -> bool:
    if isinstance(t, Var):
        return True
    if isinstance(t, App):
        return _is_neutral(t.fn) or isinstance(t.fn, Derive)
    if isinstance(t, Case):
        return True  # a case surviving whnf is blocked on a neutral scrutinee
    return False


def _occurrences(t: Term, name: str) -> int:
    if isinstance(t, Var):
        return 1 if t.name == name else 0
    if isinstance(t, App):
        return _occurrences(t.fn, name) + _occurrences(t.arg, name)
    if isinstance(t, Lam):
        return 0 if t.var == name else _occurrences(t.body, name)
    if isinstance(t, Promote):
        return _occurrences(t.body, name)
    if isinstance(t, Con):
        return sum(_occurrences(a, name) for a in t.args)
    if isinstance(t, Case):
        n = _occurrences(t.scrutinee, name)
        for p, b in t.branches:
            if name not in pattern_vars(p):
                n += _occurrences(b, name)
        return n
    if isinstance(t, LetRec):
        if t.var == name:
            return 0
        return _occurrences(t.bound, name) + _occurrences(t.body, name)
    return 0


def _count_key(name: str) -> str:
    m = _UID_ROOT.match(name)
    return m.group(1) if m else name


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def match_pattern(t: Term, p: Pattern, fuel: Fuel | None = None):
    """Spec-level matcher: returns (substitution | None, forced term)."""
    ev = Evaluator(fuel or Fuel())
    status, sub, forced = ev.match(t, p)
    if status == MATCH:
        return sub, forced
    return None, forced


def normalize(t: Term, fuel: Fuel | None = None, deep: bool = False) -> Term:
    return Evaluator(fuel or Fuel()).normalize(t, deep=deep)


def deep_normalize(t: Term, fuel: Fuel | None = None) -> Term:
    return normalize(t, fuel, deep=True)


def inline_definitions(prog: SourceProgram, name: str) -> Term:
    """Substitute top-level definitions into the named definition's body.

    A definition may refer to itself (it becomes a letrec); mutual cycles
    are rejected.
    """
    sigs = {d.name: d.signature for d in prog.decls}
    bodies = {d.name: d.body for d in prog.decls}
    if name not in bodies:
        raise NoMain(f"program has no definition {name!r}")
    resolved: dict[str, Term] = {}
    visiting: list[str] = []

    def resolve(n: str) -> Term:
        if n in resolved:
            return resolved[n]
        if n in visiting:
            cycle = " -> ".join(visiting + [n])
            raise StuckTerm(
                f"mutually recursive top-level definitions (use letrec): {cycle}")
        visiting.append(n)
        body = bodies[n]
        deps = {m for m in free_vars(body) if m in bodies and m != n}
        sub = {m: resolve(m) for m in deps}
        visiting.pop()
        inlined = subst_term(body, sub)
        if n in free_vars(body):
            inlined = LetRec(n, inlined, Var(n), annot=sigs.get(n))
        resolved[n] = inlined
        return resolved[n]

    return resolve(name)


def run_main(prog: SourceProgram, fuel: Fuel | None = None) -> str:
    """Normalize ``main`` to a deep normal form and print it."""
    term = inline_definitions(prog, "main")
    nf = Evaluator(fuel or Fuel()).normalize(term, deep=True)
    return pretty_term(nf)


def tag_binders(t: Term) -> tuple[Term, dict[str, tuple[str, Pos | None]]]:
    """Rename every binder to a unique tagged name, returning the registry
    of binding sites for the instrumented evaluator."""
    registry: dict[str, tuple[str, Pos | None]] = {}
    counter = [0]

    def uid(name: str, pos: Pos | None) -> str:
        counter[0] += 1
        u = f"{name}~{counter[0]}"
        registry[u] = (name, pos)
        return u

    def go_pattern(p: Pattern, mapping: dict[str, str]) -> Pattern:
        if isinstance(p, PVar):
            u = uid(p.name, p.pos)
            mapping[p.name] = u
            return PVar(u, p.pos)
        if isinstance(p, PBox):
            return PBox(go_pattern(p.pat, mapping), p.pos)
        if isinstance(p, PCon):
            return PCon(p.con, tuple(go_pattern(a, mapping) for a in p.args), p.pos)
        return p

    def go(t: Term, env: dict[str, str]) -> Term:
        if isinstance(t, Var):
            return Var(env.get(t.name, t.name), t.pos)
        if isinstance(t, App):
            return App(go(t.fn, env), go(t.arg, env), t.pos)
        if isinstance(t, Lam):
            u = uid(t.var, t.pos)
            return Lam(u, go(t.body, {**env, t.var: u}), t.pos)
        if isinstance(t, Promote):
            return Promote(go(t.body, env), t.pos)
        if isinstance(t, Con):
            return Con(t.con, tuple(go(a, env) for a in t.args), t.pos)
        if isinstance(t, LetRec):
            u = uid(t.var, t.pos)
            env2 = {**env, t.var: u}
            return LetRec(u, go(t.bound, env2), go(t.body, env2), t.pos, t.annot)
        if isinstance(t, Case):
            scrut = go(t.scrutinee, env)
            branches = []
            for p, b in t.branches:
                mapping: dict[str, str] = {}
                p2 = go_pattern(p, mapping)
                branches.append((p2, go(b, {**env, **mapping})))
            return Case(scrut, tuple(branches), t.pos, t.scrut_annot)
        return t

    return go(t, {}), registry


def count_uses(t: Term, fuel: Fuel | None = None):
    """Count, per binding site, how many bound occurrences are consumed by
    beta steps while normalizing. Returns {(name, pos): count}."""
    tagged, registry = tag_binders(t)
    counter: dict[str, int] = {}
    ev = Evaluator(fuel or Fuel(), counter=counter)
    ev.normalize(tagged, deep=True)
    out: dict[tuple[str, Pos | None], int] = {}
    for u, (name, pos) in registry.items():
        out[(name, pos)] = counter.get(u, 0)
    return out
