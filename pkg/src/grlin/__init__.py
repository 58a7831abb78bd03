"""A graded linear calculus: checker, evaluator and derived combinators."""

__version__ = "0.1.0"
