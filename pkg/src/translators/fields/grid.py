"""Grid-sampled graph functions and second-order central-difference jets."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import BoundaryProximityError, InvalidInputError
from ..geometry import Jet2
from .expression import evaluate

MIN_POINTS = 5


@dataclass(frozen=True, eq=False)
class GridField:
    """n scalar fields sampled on the nodes of the box prod_i [lo_i, hi_i].

    ``samples`` has shape ``(n, *shape)``; node ``idx`` sits at
    ``lo + idx * spacing``.
    """

    lo: tuple
    hi: tuple
    samples: np.ndarray

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        samples = np.array(self.samples, dtype=float)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "samples", samples)
        if len(lo) != len(hi) or samples.ndim != len(lo) + 1:
            raise InvalidInputError("samples must have shape (n, *grid_shape) matching the box dimension")
        if any(h <= l for l, h in zip(lo, hi)):
            raise InvalidInputError("box must have hi > lo on every axis")
        if any(s < MIN_POINTS for s in self.shape):
            raise InvalidInputError(f"grid needs at least {MIN_POINTS} nodes per axis, got {self.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("grid samples must be finite")
        samples.setflags(write=False)

    @property
    def shape(self):
        return self.samples.shape[1:]

    @property
    def m(self):
        return len(self.lo)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def spacing(self):
        return tuple((h - l) / (s - 1) for l, h, s in zip(self.lo, self.hi, self.shape))

    def axes(self):
        return [np.linspace(l, h, s) for l, h, s in zip(self.lo, self.hi, self.shape)]

    def coords(self):
        """Node coordinates, shape ``(*shape, m)``."""
        return grid_coords(self.lo, self.hi, self.shape)

    def with_samples(self, samples):
        return GridField(self.lo, self.hi, samples)

    @classmethod
    def from_expressions(cls, exprs, lo, hi, shape):
        coords = grid_coords(lo, hi, shape)
        return cls(lo, hi, np.stack([evaluate(e, coords) for e in exprs]))


def grid_coords(lo, hi, shape):
    axes = [np.linspace(l, h, s) for l, h, s in zip(lo, hi, shape)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _shifted(arr, offset, margin):
    """View of ``arr`` (grid axes last) shifted by ``offset`` on the interior block."""
    lead = arr.ndim - len(offset)
    idx = [slice(None)] * lead
    for o, size in zip(offset, arr.shape[lead:]):
        idx.append(slice(margin + o, size - margin + o))
    return arr[tuple(idx)]


def central_derivatives(arr, spacing, margin=1):
    """Central-difference gradient and Hessian of ``arr`` on its interior block.

    ``arr`` has the grid axes last (any leading axes are carried along).
    Returns ``(value, grad, hess)`` with the derivative axes appended.
    """
    m = len(spacing)
    if margin < 1:
        raise BoundaryProximityError("central differences need a margin of at least one cell")
    zero = (0,) * m
    center = _shifted(arr, zero, margin)
    grad = []
    hess = [[None] * m for _ in range(m)]
    for i in range(m):
        e = [0] * m
        e[i] = 1
        plus = _shifted(arr, e, margin)
        minus = _shifted(arr, [-c for c in e], margin)
        grad.append((plus - minus) / (2.0 * spacing[i]))
        hess[i][i] = (plus - 2.0 * center + minus) / spacing[i] ** 2
        for j in range(i + 1, m):
            acc = 0.0
            for si, sj in itertools.product((1, -1), repeat=2):
                off = [0] * m
                off[i], off[j] = si, sj
                acc = acc + si * sj * _shifted(arr, off, margin)
            hess[i][j] = hess[j][i] = acc / (4.0 * spacing[i] * spacing[j])
    grad = np.stack(grad, axis=-1)
    hess = np.stack([np.stack(row, axis=-1) for row in hess], axis=-2)
    return center, grad, hess


def _move_grid_axes_first(arr, m):
    """(k, *grid) -> (*grid, k)."""
    return np.moveaxis(arr, 0, m)


def fd_jets(field: GridField, margin=1) -> Jet2:
    """Jets at every node at least ``margin`` cells from the boundary.

    The batch shape is the interior block ``shape - 2 * margin``.
    """
    m = field.m
    value, grad, hess = central_derivatives(field.samples, field.spacing, margin)
    coords = field.coords()[tuple(slice(margin, s - margin) for s in field.shape)]
    return Jet2(
        base=coords,
        value=_move_grid_axes_first(value, m),
        grad=_move_grid_axes_first(grad, m),
        hess=_move_grid_axes_first(hess, m),
    )


def fd_jet(field: GridField, index, margin=2) -> Jet2:
    """Central-difference jet at one node, which must be ``margin`` cells inside."""
    index = tuple(int(i) for i in index)
    if len(index) != field.m:
        raise InvalidInputError(f"index needs {field.m} entries")
    for i, s in zip(index, field.shape):
        if i < margin or i > s - 1 - margin:
            raise BoundaryProximityError(f"node {index} is within {margin} cells of the boundary")
    window = (slice(None),) + tuple(slice(i - 1, i + 2) for i in index)
    value, grad, hess = central_derivatives(field.samples[window], field.spacing, margin=1)
    sel = (slice(None),) + (0,) * field.m
    base = np.array([l + i * h for l, i, h in zip(field.lo, index, field.spacing)])
    return Jet2(base=base, value=value[sel], grad=grad[sel], hess=hess[sel])


def one_sided_gradient(field: GridField):
    """Gradient at every node: central inside, second-order one-sided on faces.

    Returns shape ``(*shape, n, m)``.
    """
    out = []
    for axis, h in enumerate(field.spacing):
        out.append(np.gradient(field.samples, h, axis=axis + 1, edge_order=2))
    grad = np.stack(out, axis=-1)  # (n, *shape, m)
    return np.moveaxis(grad, 0, field.m)


# ------------------------------------------------------------------ CSV I/O


def write_grid_csv(field: GridField, path):
    """Node-index CSV: header ``i1..im,u1..un`` plus a ``#box`` comment row."""
    m, n = field.m, field.n
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["#box"] + [f"{v:.17g}" for v in field.lo + field.hi])
        writer.writerow([f"i{k + 1}" for k in range(m)] + [f"u{a + 1}" for a in range(n)])
        for idx in np.ndindex(*field.shape):
            writer.writerow([str(i) for i in idx] + [f"{field.samples[(a,) + idx]:.17g}" for a in range(n)])


def read_grid_csv(path) -> GridField:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0][0] != "#box":
        raise InvalidInputError(f"{path}: first row must be '#box,lo...,hi...'")
    box = [float(v) for v in rows[0][1:]]
    header = rows[1]
    m = sum(1 for h in header if h.startswith("i"))
    n = len(header) - m
    if len(box) != 2 * m or m < 1 or n < 1:
        raise InvalidInputError(f"{path}: header and box row disagree on the dimension")
    data = np.array([[float(v) for v in r] for r in rows[2:]])
    idx = data[:, :m].astype(int)
    shape = tuple(int(v) + 1 for v in idx.max(axis=0))
    if len(data) != int(np.prod(shape)):
        raise InvalidInputError(f"{path}: expected {int(np.prod(shape))} nodes, found {len(data)}")
    samples = np.full((n,) + shape, np.nan)
    for a in range(n):
        samples[(a,) + tuple(idx.T)] = data[:, m + a]
    return GridField(tuple(box[:m]), tuple(box[m:]), samples)
