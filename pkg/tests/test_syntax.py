"""Type utilities: constructor counting, unrolling, alpha-equivalence."""

import random

import pytest

from conftest import rand_term, rand_type
from grlin import grades as G
from grlin.parser import parse_term, parse_type
from grlin.syntax import (
    Base, Box, Mu, RecVar, Sum, Tensor, TyVar, Unit, alpha_eq, check_wellformed,
    free_recvars, free_tyvars, IllFormedType, multi_constructor, NotAMu,
    subst_recvar, types_equal, unroll_mu,
)


def count_oracle(t, depth=3):
    """Bounded-unrolling evaluation of the constructor-count equations with
    saturating arithmetic at 2; the independent check for multi_constructor."""
    if isinstance(t, Unit):
        return 1
    if isinstance(t, TyVar):
        return 1
    if isinstance(t, Base):
        return 2 if t.name == "Int" else 1
    if isinstance(t, RecVar):
        return 0
    if isinstance(t, Box):
        return count_oracle(t.body, depth)
    if isinstance(t, Sum):
        return min(2, 2 * (count_oracle(t.left, depth) + count_oracle(t.right, depth)))
    if isinstance(t, Tensor):
        return min(2, count_oracle(t.left, depth) * count_oracle(t.right, depth))
    if isinstance(t, Mu):
        if depth <= 0:
            return 0
        return count_oracle(unroll_mu(t), depth - 1)
    if hasattr(t, "arg"):  # Fun
        return 1
    raise AssertionError(t)


def test_multi_constructor_examples():
    a, b = TyVar("a"), TyVar("b")
    assert multi_constructor(Sum(a, b))
    assert not multi_constructor(Tensor(Unit(), Unit()))
    lists = parse_type("mu X . Unit + (a * X)")
    assert multi_constructor(lists)
    assert count_oracle(lists) > 1
    assert not multi_constructor(Tensor(a, b))
    assert multi_constructor(Base("Int"))
    assert not multi_constructor(Base("Res"))


def test_multi_constructor_agrees_with_bounded_oracle():
    rng = random.Random(11)
    for _ in range(1000):
        t = rand_type(5, G.NAT_EXACT, rng)
        assert multi_constructor(t) == (count_oracle(t) > 1), t


def test_unroll_mu_examples():
    assert unroll_mu(parse_type("mu X . Unit")) == Unit()
    lists = parse_type("mu X . Unit + (a * X)")
    assert unroll_mu(lists) == Sum(Unit(), Tensor(TyVar("a"), lists))
    fn = parse_type("mu X . X -o Unit")
    assert unroll_mu(fn) == parse_type("(mu X . X -o Unit) -o Unit")
    with pytest.raises(NotAMu):
        unroll_mu(Unit())


def test_unroll_preserves_free_variables():
    rng = random.Random(12)
    checked = 0
    while checked < 300:
        t = rand_type(4, G.NAT_LE, rng)
        if not isinstance(t, Mu):
            continue
        u = unroll_mu(t)
        assert free_tyvars(u) == free_tyvars(t)
        assert free_recvars(u) == free_recvars(t)
        checked += 1


def test_capture_avoiding_recvar_substitution():
    # substituting under a mu that binds a clashing name must rename
    outer = Mu("Y", Tensor(RecVar("X"), RecVar("Y")))
    value = RecVar("Y")
    result = subst_recvar(outer, "X", value)
    assert isinstance(result, Mu)
    assert result.var != "Y"
    assert free_recvars(result) == {"Y"}


def test_wellformedness():
    check_wellformed(parse_type("mu X . Unit + (a * X)"))
    with pytest.raises(IllFormedType):
        check_wellformed(RecVar("X"))


def test_alpha_eq_examples():
    assert alpha_eq(parse_term("\\x -> x"), parse_term("\\y -> y"))
    assert not alpha_eq(parse_term("\\x -> \\y -> x"), parse_term("\\a -> \\b -> b"))
    assert alpha_eq(parse_term("letrec f = \\x -> f x in f"),
                    parse_term("letrec g = \\z -> g z in g"))
    assert alpha_eq(parse_term("case z of [x] -> (x, x)"),
                    parse_term("case z of [w] -> (w, w)"))
    assert not alpha_eq(parse_term("case z of [x] -> (x, x)"),
                        parse_term("case z of [w] -> (w, unit)"))
    # free variables must match by name
    assert not alpha_eq(parse_term("x"), parse_term("y"))


def test_alpha_eq_is_equivalence():
    rng = random.Random(13)
    sample = [rand_term(3, rng, []) for _ in range(60)]
    for t in sample:
        assert alpha_eq(t, t)
    for t1 in sample[:20]:
        for t2 in sample[:20]:
            if alpha_eq(t1, t2):
                assert alpha_eq(t2, t1)
    for t1 in sample[:10]:
        for t2 in sample[:10]:
            for t3 in sample[:10]:
                if alpha_eq(t1, t2) and alpha_eq(t2, t3):
                    assert alpha_eq(t1, t3)


def test_types_equal_mu_binders():
    assert types_equal(parse_type("mu X . Unit + (a * X)"),
                       parse_type("mu Y . Unit + (a * Y)"))
    assert not types_equal(parse_type("mu X . Unit + (a * X)"),
                           parse_type("mu Y . Unit + (b * Y)"))
