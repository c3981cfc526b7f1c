"""Exact jets of graph functions given as expressions."""

from __future__ import annotations

from functools import cached_property

import numpy as np

from ..geometry import Jet2, norm_squares
from .expression import diff, evaluate, evaluate_jet, free_vars, parse
from .grid import GridField, grid_coords


def analytic_jet(exprs, x) -> Jet2:
    """Jet2 of the expressions at ``x`` (shape ``(..., m)``), exact to roundoff."""
    x = np.asarray(x, dtype=float)
    jets = [evaluate_jet(e, x) for e in exprs]
    return Jet2(
        base=x,
        value=np.stack([j.value for j in jets], axis=-1),
        grad=np.stack([j.grad for j in jets], axis=-2),
        hess=np.stack([j.hess for j in jets], axis=-3),
    )


class AnalyticGraph:
    """Graph x -> (x, u(x)) with u given by n expressions in x1..xm."""

    def __init__(self, exprs, m):
        exprs = [parse(e, m) if isinstance(e, str) else e for e in exprs]
        for e in exprs:
            if free_vars(e) and max(free_vars(e)) >= m:
                raise ValueError(f"expression uses a variable beyond x{m}")
        self.exprs = exprs
        self.m = m
        self.n = len(exprs)

    def values(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([evaluate(e, x) for e in self.exprs], axis=-1)

    def jet(self, x) -> Jet2:
        return analytic_jet(self.exprs, x)

    @cached_property
    def first_derivatives(self):
        return [[diff(e, i) for i in range(self.m)] for e in self.exprs]

    @cached_property
    def second_derivatives(self):
        return [[[diff(d, j) for j in range(self.m)] for d in row] for row in self.first_derivatives]

    def norm_square_jets(self, x):
        """Exact (value, grad, hess) jets of ||H||^2 and ||B||^2 at ``x``.

        The first and second derivatives of u are themselves differentiated
        twice by forward-mode jets, then pushed through the norm formulas.
        """
        p = [[evaluate_jet(d, x) for d in row] for row in self.first_derivatives]
        q = [[[evaluate_jet(d, x) for d in r2] for r2 in r1] for r1 in self.second_derivatives]
        return norm_squares(p, q)


class AnalyticGrid:
    """An AnalyticGraph observed at the nodes of a box grid.

    Quacks like a GridField for the diagnostics but supplies exact jets.
    """

    def __init__(self, graph: AnalyticGraph, lo, hi, shape):
        self.graph = graph
        self.lo = tuple(float(v) for v in lo)
        self.hi = tuple(float(v) for v in hi)
        self.shape = tuple(int(s) for s in shape)
        if not (len(self.lo) == len(self.hi) == len(self.shape) == graph.m):
            raise ValueError("box, grid shape and graph dimension disagree")
        if any(s < 2 for s in self.shape) or any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("need hi > lo and at least two nodes per axis")

    m = property(lambda self: self.graph.m)
    n = property(lambda self: self.graph.n)

    @property
    def spacing(self):
        return tuple((h - l) / (s - 1) for l, h, s in zip(self.lo, self.hi, self.shape))

    def coords(self):
        return grid_coords(self.lo, self.hi, self.shape)

    def jets(self) -> Jet2:
        return self.graph.jet(self.coords())

    def sample(self):
        return GridField(self.lo, self.hi, np.moveaxis(self.graph.values(self.coords()), -1, 0))
