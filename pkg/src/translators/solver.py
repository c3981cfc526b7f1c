"""Damped Newton solver for the translator system on a Dirichlet box.

The unknowns are the n graph functions at interior grid nodes.  At every
interior node the discrete residual is

    r^a = g^ij(Du) u^a_ij + a^i u^a_i - b^a,

with all derivatives replaced by second-order central differences.  The
boundary values are fixed by the problem's boundary expressions; this
truncation of an entire graph to a box is a modelling device and is noted in
every report.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .errors import DegenerateSolutionError, InvalidInputError, NotSpacelikeError
from .fields.analytic import AnalyticGraph
from .fields.expression import evaluate, parse
from .fields.grid import GridField, central_derivatives, fd_jets, grid_coords
from .geometry import DELTA_SPACE, TranslatorSpec, induced_metric, spacelike_margin
from . import geometry

log = logging.getLogger(__name__)

MIN_SOLVER_POINTS = 9
TRUNCATION_NOTE = "Dirichlet truncation of an entire graph to a bounded box"


@dataclass(frozen=True)
class TranslatorProblem:
    T: TranslatorSpec
    lo: tuple
    hi: tuple
    shape: tuple
    boundary: tuple  # n expressions (text or parsed)
    initial_guess: object = "affine-fit"  # "affine-fit" | "zero" | "random" | n expressions
    residual_tol: float = 1e-8
    max_iter: int = 50
    max_halvings: int = 40
    delta_space: float = DELTA_SPACE
    seed: int | None = None
    random_amplitude: float = 0.05

    def __post_init__(self):
        m, n = len(self.T.a), len(self.T.b)
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        shape = tuple(int(s) for s in np.atleast_1d(self.shape))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "shape", shape)
        if not (len(lo) == len(hi) == len(shape) == m):
            raise InvalidInputError(f"box and grid shape must have {m} axes")
        if any(s < MIN_SOLVER_POINTS for s in shape):
            raise InvalidInputError(f"solver grid needs at least {MIN_SOLVER_POINTS} nodes per axis")
        if any(h <= l for l, h in zip(lo, hi)):
            raise InvalidInputError("box must have hi > lo on every axis")
        boundary = tuple(parse(b, m) if isinstance(b, str) else b for b in self.boundary)
        if len(boundary) != n:
            raise InvalidInputError(f"need {n} boundary functions, got {len(boundary)}")
        object.__setattr__(self, "boundary", boundary)
        guess = self.initial_guess
        if not isinstance(guess, str):
            guess = tuple(parse(g, m) if isinstance(g, str) else g for g in guess)
            if len(guess) != n:
                raise InvalidInputError(f"need {n} initial-guess functions")
            object.__setattr__(self, "initial_guess", guess)
        elif guess not in ("affine-fit", "zero", "random"):
            raise InvalidInputError(f"unknown initial guess {guess!r}")

    @property
    def m(self):
        return len(self.T.a)

    @property
    def n(self):
        return len(self.T.b)

    @property
    def spacing(self):
        return tuple((h - l) / (s - 1) for l, h, s in zip(self.lo, self.hi, self.shape))

    def with_box(self, lo, hi):
        """Same problem on another box at (as nearly as possible) the same spacing."""
        spacing = self.spacing
        shape = tuple(int(round((b - a) / h)) + 1 for a, b, h in zip(lo, hi, spacing))
        return replace(self, lo=tuple(lo), hi=tuple(hi), shape=shape)


@dataclass(frozen=True, eq=False)
class SolveReport:
    converged: bool
    iterations: int
    residual_history: tuple
    final_residual_inf: float
    spacelike_min_eig: float
    solution: GridField
    message: str = ""
    note: str = TRUNCATION_NOTE


# ------------------------------------------------------------ discretisation


def _boundary_mask(shape):
    mask = np.zeros(shape, dtype=bool)
    for axis, s in enumerate(shape):
        idx = [slice(None)] * len(shape)
        idx[axis] = 0
        mask[tuple(idx)] = True
        idx[axis] = s - 1
        mask[tuple(idx)] = True
    return mask


def _interior(shape):
    return tuple(slice(1, s - 1) for s in shape)


def interior_metric_margin(state: GridField):
    """lambda_min of the induced metric at interior nodes, shape ``shape - 2``."""
    return spacelike_margin(fd_jets(state, margin=1))


def assemble_residual(state: GridField, T: TranslatorSpec, delta_space=DELTA_SPACE):
    """Residual at interior nodes, shape ``(n, *interior_shape)``.

    Raises :class:`NotSpacelikeError` carrying the worst full-grid node.
    """
    jets = fd_jets(state, margin=1)
    try:
        metric = induced_metric(jets, delta_space)
    except NotSpacelikeError as exc:
        node = tuple(int(i) + 1 for i in exc.location) if exc.location is not None else None
        raise NotSpacelikeError(exc.lambda_min, node) from None
    r = geometry.translator_residual(jets, T, metric)
    return np.moveaxis(r, -1, 0)


def _stencil_coefficients(state: GridField, T: TranslatorSpec):
    """Map stencil offset -> coefficient array (n, n, *interior) of dr^a/du^b."""
    m, n = state.m, state.n
    h = state.spacing
    jets = fd_jets(state, margin=1)
    g_inv = np.linalg.inv(np.eye(m) - np.einsum("...ai,...aj->...ij", jets.grad, jets.grad))
    a = np.asarray(T.a)
    # d r^a / d u^b_k = 2 (g^-1 U^a g^-1 Du^b)_k + delta_ab a^k
    w = np.einsum("...jl,...bl->...bj", g_inv, jets.grad)
    c = 2.0 * np.einsum("...ki,...aij,...bj->...abk", g_inv, jets.hess, w)
    c = c + np.eye(n)[:, :, None] * a
    diag_nn = np.eye(n).reshape((n, n) + (1,) * m)

    def to_front(arr):  # (*interior, a, b) -> (a, b, *interior)
        return np.moveaxis(np.moveaxis(arr, -2, 0), -1, 1)

    coeffs = {}

    def add(offset, arr):
        offset = tuple(offset)
        coeffs[offset] = coeffs.get(offset, 0.0) + arr

    for k in range(m):
        e = [0] * m
        e[k] = 1
        first = to_front(c[..., k]) / (2.0 * h[k])
        second = diag_nn * (g_inv[..., k, k] / h[k] ** 2)
        add(e, first + second)
        add([-v for v in e], -first + second)
        add([0] * m, -2.0 * second)
        for j in range(k + 1, m):
            mixed = diag_nn * (2.0 * g_inv[..., k, j] / (4.0 * h[k] * h[j]))
            for sk, sj in itertools.product((1, -1), repeat=2):
                off = [0] * m
                off[k], off[j] = sk, sj
                add(off, sk * sj * mixed)
    return coeffs


def assemble_jacobian(state: GridField, T: TranslatorSpec):
    """Sparse Jacobian of the stacked interior residual (rows/cols: a * N + node)."""
    m, n = state.m, state.n
    ishape = tuple(s - 2 for s in state.shape)
    N = int(np.prod(ishape))
    flat = np.arange(N).reshape(ishape)
    grids = np.meshgrid(*[np.arange(s) for s in ishape], indexing="ij")
    rows, cols, vals = [], [], []
    for offset, coef in _stencil_coefficients(state, T).items():
        coef = np.broadcast_to(coef, (n, n) + ishape)
        nb = [g + o for g, o in zip(grids, offset)]
        valid = np.ones(ishape, dtype=bool)
        for v, s in zip(nb, ishape):
            valid &= (v >= 0) & (v < s)
        src = flat[valid]
        dst = np.ravel_multi_index(tuple(v[valid] for v in nb), ishape)
        for a in range(n):
            for b in range(n):
                vals.append(coef[a, b][valid])
                rows.append(a * N + src)
                cols.append(b * N + dst)
    J = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * N, n * N))
    return J.tocsc()


# ------------------------------------------------------------ initial state


def harmonic_fill(values, known, spacing):
    """Replace unknown entries of ``values`` (n, *shape) by the discrete harmonic fill.

    ``known`` is a boolean grid mask that must contain the whole boundary.
    """
    shape = known.shape
    m = len(shape)
    unknown = ~known
    U = int(unknown.sum())
    out = np.array(values, dtype=float)
    if U == 0:
        return out
    ids = -np.ones(shape, dtype=int)
    ids[unknown] = np.arange(U)
    pts = np.argwhere(unknown)
    rows, cols, vals = [], [], []
    rhs = np.zeros((out.shape[0], U))
    diag = np.zeros(U)
    for k in range(m):
        w = 1.0 / spacing[k] ** 2
        diag -= 2.0 * w
        for s in (1, -1):
            nb = pts.copy()
            nb[:, k] += s
            nb_t = tuple(nb.T)
            nb_ids = ids[nb_t]
            is_unknown = nb_ids >= 0
            rows.append(np.arange(U)[is_unknown])
            cols.append(nb_ids[is_unknown])
            vals.append(np.full(int(is_unknown.sum()), w))
            kn = ~is_unknown
            rhs[:, kn] -= w * out[(slice(None),) + tuple(nb[kn].T)]
    rows.append(np.arange(U))
    cols.append(np.arange(U))
    vals.append(diag)
    L = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(U, U)).tocsc()
    lu = spla.splu(L, permc_spec="MMD_AT_PLUS_A")
    for a in range(out.shape[0]):
        out[(a,) + tuple(pts.T)] = lu.solve(rhs[a])
    return out


def transfinite_fill(values):
    """Gordon-Hall transfinite interpolant of the boundary entries of ``values`` (n, *shape).

    Boolean sum of the linear blends between opposite faces; it reproduces
    multilinear data and any function of a single coordinate exactly.
    Interior entries of ``values`` are ignored.
    """
    values = np.asarray(values, dtype=float)
    m = values.ndim - 1
    out = np.zeros_like(values)
    for r in range(1, m + 1):
        for axes in itertools.combinations(range(m), r):
            term = values
            for k in axes:
                size = values.shape[1 + k]
                t = np.linspace(0.0, 1.0, size).reshape((size,) + (1,) * (m - 1 - k))
                first = np.take(term, [0], axis=1 + k)
                last = np.take(term, [-1], axis=1 + k)
                term = (1.0 - t) * first + t * last
            out += (-1.0) ** (r + 1) * term
    return out


def affine_fit(coords, values):
    """Least-squares affine fit of values (n, ...) at coords (..., m); coefficients (n, m+1)."""
    X = np.concatenate([np.ones(coords.shape[:-1] + (1,)), coords], axis=-1).reshape(-1, coords.shape[-1] + 1)
    Y = values.reshape(values.shape[0], -1).T
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    return coef.T


def _affine_values(coef, coords):
    return coef[:, 0][:, None] + coef[:, 1:] @ coords.reshape(-1, coords.shape[-1]).T


def boundary_values(p: TranslatorProblem, coords=None):
    if coords is None:
        coords = grid_coords(p.lo, p.hi, p.shape)
    return np.stack([evaluate(e, coords) for e in p.boundary])


def _guess_values(p: TranslatorProblem, coords, bvals, bmask):
    shape = coords.shape[:-1]
    if p.initial_guess == "zero":
        return np.zeros((p.n,) + shape)
    if isinstance(p.initial_guess, tuple):
        return np.stack([evaluate(e, coords) for e in p.initial_guess])
    coef = affine_fit(coords[bmask], bvals[:, bmask])
    guess = _affine_values(coef, coords).reshape((p.n,) + shape)
    if p.initial_guess == "random":
        rng = np.random.default_rng(p.seed)
        bump = np.ones(shape)
        for k, (l, h) in enumerate(zip(p.lo, p.hi)):
            bump = bump * np.sin(np.pi * (coords[..., k] - l) / (h - l))
        width = min(h - l for l, h in zip(p.lo, p.hi))
        guess = guess + p.random_amplitude * width * rng.standard_normal(p.n).reshape((p.n,) + (1,) * len(shape)) * bump
    return guess


def initial_state(p: TranslatorProblem) -> GridField:
    """Initial guess corrected by the harmonic lift of its boundary mismatch."""
    coords = grid_coords(p.lo, p.hi, p.shape)
    bmask = _boundary_mask(p.shape)
    bvals = boundary_values(p, coords)
    guess = _guess_values(p, coords, bvals, bmask)
    mismatch = np.where(bmask, bvals - guess, 0.0)
    lift = harmonic_fill(mismatch, bmask, p.spacing)
    u0 = guess + lift
    u0[:, bmask] = bvals[:, bmask]
    return GridField(p.lo, p.hi, u0)


def check_boundary_spacelike(p: TranslatorProblem):
    """lambda_min of the metric induced by the boundary functions on the faces."""
    coords = grid_coords(p.lo, p.hi, p.shape)[_boundary_mask(p.shape)]
    lam = spacelike_margin(AnalyticGraph(list(p.boundary), p.m).jet(coords))
    worst = int(np.argmin(lam))
    if not lam[worst] > p.delta_space:
        raise NotSpacelikeError(lam[worst], tuple(coords[worst]), "boundary data is not spacelike-compatible: "
                                f"lambda_min={lam[worst]:.6g} at x={tuple(np.round(coords[worst], 12))}")
    return float(lam[worst])


# ------------------------------------------------------------------ Newton


def _safe_residual(state, T, threshold):
    jets = fd_jets(state, margin=1)
    lam = spacelike_margin(jets)
    if not np.all(lam > threshold):
        return None, float(np.nan_to_num(lam, nan=-np.inf).min())
    metric = induced_metric(jets, 0.0)
    r = np.moveaxis(geometry.translator_residual(jets, T, metric), -1, 0)
    return r, float(lam.min())


def _newton(state: GridField, p: TranslatorProblem):
    """Newton iteration on the interior of ``state``; its boundary samples are the Dirichlet data."""
    threshold = 10.0 * p.delta_space
    r, lam = _safe_residual(state, p.T, threshold)
    if r is None:
        raise DegenerateSolutionError(f"initial state is not spacelike (lambda_min={lam:.6g})")
    interior = (slice(None),) + _interior(state.shape)
    norm = float(np.abs(r).max())
    history = [norm]
    iterations = 0
    message = ""
    while norm > p.residual_tol:
        if iterations >= p.max_iter:
            message = f"maximum of {p.max_iter} iterations reached"
            break
        J = assemble_jacobian(state, p.T)
        step = spla.splu(J, permc_spec="MMD_AT_PLUS_A").solve(-r.reshape(-1)).reshape(r.shape)
        t = 1.0
        accepted = False
        saw_spacelike = False
        for _ in range(p.max_halvings + 1):
            trial = np.array(state.samples)
            trial[interior] += t * step
            trial_state = state.with_samples(trial)
            r_trial, lam_trial = _safe_residual(trial_state, p.T, threshold)
            if r_trial is not None:
                saw_spacelike = True
                trial_norm = float(np.abs(r_trial).max())
                if trial_norm < norm:
                    accepted = True
                    break
            t *= 0.5
        iterations += 1
        if not accepted:
            if not saw_spacelike:
                raise DegenerateSolutionError(
                    f"spacelike safeguard exhausted at iteration {iterations} (step underflow)")
            message = f"line search stalled at iteration {iterations}"
            break
        state, r, lam, norm = trial_state, r_trial, lam_trial, trial_norm
        history.append(norm)
        log.debug("newton %d: |r|=%.3e step=%.3g lambda_min=%.3e", iterations, norm, t, lam)
    converged = norm <= p.residual_tol
    if converged:
        message = "converged"
    return SolveReport(
        converged=converged,
        iterations=iterations,
        residual_history=tuple(history),
        final_residual_inf=norm,
        spacelike_min_eig=lam,
        solution=state,
        message=message,
    )


def _is_spacelike(state, p):
    return bool(np.all(interior_metric_margin(state) > 10.0 * p.delta_space))


def _boundary_homotopy(p: TranslatorProblem) -> SolveReport:
    """Deform affine-fit boundary data into the true data in adaptive steps.

    Each stage is seeded by the previous solution plus the harmonic lift of
    the boundary increment.
    """
    coords = grid_coords(p.lo, p.hi, p.shape)
    bmask = _boundary_mask(p.shape)
    target = boundary_values(p, coords)
    coef = affine_fit(coords[bmask], target[:, bmask])
    start = _affine_values(coef, coords).reshape(target.shape)
    state = GridField(p.lo, p.hi, start)
    if not _is_spacelike(state, p):
        raise DegenerateSolutionError("affine fit of the boundary data is not spacelike")
    report = _newton(state, p)
    if not report.converged:
        raise DegenerateSolutionError(f"homotopy start failed: {report.message}")
    t, dt, stages = 0.0, 0.25, 1
    while t < 1.0:
        t_new = min(1.0, t + dt)
        increment = np.where(bmask, (t_new - t) * (target - start), 0.0)
        seed = report.solution.samples + harmonic_fill(increment, bmask, p.spacing)
        seed_state = GridField(p.lo, p.hi, seed)
        trial = None
        if _is_spacelike(seed_state, p):
            try:
                trial = _newton(seed_state, p)
            except DegenerateSolutionError:
                trial = None
        if trial is not None and trial.converged:
            report, t, stages = trial, t_new, stages + 1
            dt = min(2.0 * dt, 1.0)
        else:
            dt *= 0.5
            if dt < 1.0 / 1024:
                raise DegenerateSolutionError(f"boundary homotopy stalled at t={t:.4g}")
    return replace(report, message=f"{report.message} (boundary homotopy, {stages} stages)")


def transfinite_state(p: TranslatorProblem) -> GridField:
    """Transfinite interpolant of the boundary data, used as a fallback start."""
    return GridField(p.lo, p.hi, transfinite_fill(boundary_values(p)))


def newton_solve(p: TranslatorProblem, initial: GridField | None = None) -> SolveReport:
    """Damped Newton iteration from ``initial`` (default: :func:`initial_state`).

    Without an explicit start, a default start that violates the spacelike
    safeguard or fails to converge is retried from the transfinite
    interpolant of the boundary data, and then by a homotopy in the
    boundary data.
    """
    check_boundary_spacelike(p)
    if initial is not None:
        return _newton(initial, p)
    first = None
    for label, make in (("", initial_state), ("transfinite start", transfinite_state)):
        state = make(p)
        if not _is_spacelike(state, p):
            log.info("%s not spacelike", label or "initial state")
            continue
        try:
            report = _newton(state, p)
        except DegenerateSolutionError:
            continue
        if report.converged:
            return replace(report, message=f"{report.message} ({label})") if label else report
        first = first or report
    log.info("falling back to boundary homotopy")
    try:
        return _boundary_homotopy(p)
    except DegenerateSolutionError:
        if first is not None:
            return first
        raise


# ------------------------------------------------------------ continuation


@dataclass(frozen=True, eq=False)
class SweepResult:
    reports: tuple
    boxes: tuple
    series: dict = field(default_factory=dict)
    failure: str = ""


def _extend(prev: GridField, p: TranslatorProblem):
    """Seed for a larger box.

    The transfinite interpolant of the new boundary data, corrected inside
    the old box towards the previous solution; the correction is filled
    harmonically in between and vanishes on the new boundary.
    """
    coords = grid_coords(p.lo, p.hi, p.shape)
    bmask = _boundary_mask(p.shape)
    base = transfinite_fill(boundary_values(p, coords))
    tol = 1e-9 * max(p.spacing)
    inside = np.ones(p.shape, dtype=bool)
    for k, (l, h) in enumerate(zip(prev.lo, prev.hi)):
        inside &= (coords[..., k] > l + tol) & (coords[..., k] < h - tol)
    inside &= ~bmask
    correction = np.zeros_like(base)
    for a in range(p.n):
        interp = RegularGridInterpolator(prev.axes(), prev.samples[a])
        correction[a][inside] = interp(coords[inside]) - base[a][inside]
    return GridField(p.lo, p.hi, base + harmonic_fill(correction, bmask | inside, p.spacing))


def field_summary(state: GridField, T: TranslatorSpec):
    """sup ||H||, sup ||B||, min lambda_min(g), min det g over interior nodes."""
    jets = fd_jets(state, margin=1)
    metric = induced_metric(jets, 0.0)
    extr = geometry.second_fundamental_form(jets, metric)
    return {
        "sup_H": float(np.sqrt(np.maximum(extr.H_norm2, 0.0)).max()),
        "sup_B": float(np.sqrt(np.maximum(extr.B_norm2, 0.0)).max()),
        "min_lambda": float(metric.lambda_min.min()),
        "min_det": float(metric.det_g.min()),
    }


def continuation_sweep(p: TranslatorProblem, boxes) -> SweepResult:
    """Solve on each box in turn, seeding from the previous solution.

    Stops at the first box that raises or fails to converge; that box's
    outcome is included in the partial series.
    """
    reports, done = [], []
    series = {k: [] for k in ("radius", "converged", "iterations", "sup_H", "sup_B", "min_lambda", "min_det")}
    failure = ""
    prev = None
    for lo, hi in boxes:
        prob = p.with_box(lo, hi)
        radius = float(max(max(abs(v) for v in lo), max(abs(v) for v in hi)))
        try:
            report = None
            if prev is not None:
                seed = _extend(prev, prob)
                if _is_spacelike(seed, prob):
                    check_boundary_spacelike(prob)
                    report = _newton(seed, prob)
                    if not report.converged:
                        report = None
            if report is None:
                report = newton_solve(prob)
        except (DegenerateSolutionError, NotSpacelikeError) as exc:
            failure = f"box {lo}..{hi}: {exc}"
            series["radius"].append(radius)
            series["converged"].append(False)
            series["iterations"].append(0)
            for key in ("sup_H", "sup_B", "min_lambda", "min_det"):
                series[key].append(float("nan"))
            done.append((tuple(lo), tuple(hi)))
            break
        reports.append(report)
        done.append((tuple(lo), tuple(hi)))
        summary = field_summary(report.solution, p.T)
        series["radius"].append(radius)
        series["converged"].append(report.converged)
        series["iterations"].append(report.iterations)
        for key, val in summary.items():
            series[key].append(val)
        if not report.converged:
            failure = f"box {lo}..{hi}: {report.message}"
            break
        prev = report.solution
    return SweepResult(reports=tuple(reports), boxes=tuple(done), series=series, failure=failure)
