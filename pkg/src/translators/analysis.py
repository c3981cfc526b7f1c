"""Diagnostics on translator solutions.

Each check returns a :class:`DiagnosticsReport` carrying the grid spacing,
the tolerance it was judged against and the sampled series behind the
verdict.  Differential inequalities are compared at the margin
``LHS - RHS``; metric probes report the probed quantity itself against the
threshold ``eps_probe``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NotSpacelikeError
from .fields.analytic import AnalyticGrid
from .fields.grid import GridField, central_derivatives, fd_jets, one_sided_gradient
from .geometry import (
    DELTA_SPACE,
    Jet2,
    SPACELIKE,
    TranslatorSpec,
    induced_metric,
    laplace_beltrami,
    pseudo_distance_jet,
    second_fundamental_form,
    translator_residual,
)
from .solver import SweepResult, affine_fit

BOUNDARY_EXCLUSION = 3
TOL_FLOOR = 1e-10
RICHARDSON_SAFETY = 2.0
ANALYTIC_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Series:
    """One sampled quantity: ``values[k]`` at coordinates ``coords[k]``."""

    columns: tuple
    coords: np.ndarray
    quantity: str
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class DiagnosticsReport:
    name: str
    h: float | None
    tolerance: float | None
    worst_margin: float
    worst_location: tuple | None
    passed: bool | None  # None: informational
    mode: str = "grid"
    series: tuple = ()
    details: dict = field(default_factory=dict)

    def result(self):
        """JSON-ready summary row."""
        return {
            "check": self.name,
            "mode": self.mode,
            "h": jsonable(self.h),
            "tolerance": jsonable(self.tolerance),
            "worst_margin": jsonable(self.worst_margin),
            "worst_location": None if self.worst_location is None else [jsonable(v) for v in self.worst_location],
            "pass": self.passed,
            "details": {k: jsonable(v) for k, v in sorted(self.details.items())},
        }

    def write_csv(self, path):
        """Long-format CSV: coordinate columns, quantity, value."""
        if not self.series:
            raise InvalidInputError(f"{self.name} has no series to export")
        columns = self.series[0].columns
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(list(columns) + ["quantity", "value"])
            for s in self.series:
                for c, v in zip(s.coords, s.values):
                    writer.writerow([f"{x:.17g}" for x in c] + [s.quantity, f"{v:.17g}"])


def jsonable(v):
    """Plain JSON types; non-finite floats become None."""
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _coord_columns(m):
    return tuple(f"x{i + 1}" for i in range(m))


def _series(coords, quantity, values):
    coords = np.asarray(coords, dtype=float)
    m = coords.shape[-1]
    return Series(_coord_columns(m), coords.reshape(-1, m), quantity, np.asarray(values, dtype=float).reshape(-1))


def extremum(values, coords, largest=False):
    flat = np.asarray(values, dtype=float).reshape(-1)
    if flat.size == 0:
        raise InvalidInputError("no qualifying nodes for this check")
    filled = np.where(np.isnan(flat), np.inf if not largest else -np.inf, flat)
    k = int(np.argmax(filled) if largest else np.argmin(filled))
    return float(flat[k]), tuple(float(c) for c in np.asarray(coords).reshape(-1, coords.shape[-1])[k])


def _h(sol):
    return float(max(sol.spacing))


# ------------------------------------------------------- curvature margins


def _tangent_T(jets: Jet2, metric, T: TranslatorSpec):
    """Components V^i = g^ij <T, e_j> of the tangential part of T."""
    pair = np.asarray(T.a) - np.einsum("a,...aj->...j", np.asarray(T.b), jets.grad)
    return np.einsum("...ij,...j->...i", metric.g_inv, pair)


def _require_translator(jets, metric, T, tol):
    if len(T.a) != jets.m or len(T.b) != jets.n:
        raise InvalidInputError("translating vector does not match the solution's signature")
    r = float(np.abs(translator_residual(jets, T, metric)).max())
    if not r <= tol:
        raise InvalidInputError(f"input is not a translator: sup residual {r:.3g} exceeds {tol:.3g}")
    return r


def _coefficient(which, m, n):
    return 2.0 / m if which == "H" else 2.0 / n


def _grid_margins(field: GridField, T: TranslatorSpec, which, residual_tol):
    """LHS, RHS and flipped-drift RHS at nodes at least three cells inside."""
    m = field.m
    if any(s < 2 * BOUNDARY_EXCLUSION + 1 for s in field.shape):
        raise InvalidInputError(f"grid too small: need at least {2 * BOUNDARY_EXCLUSION + 1} nodes per axis")
    jets = fd_jets(field, margin=1)
    metric = induced_metric(jets)
    _require_translator(jets, metric, T, residual_tol)
    extr = second_fundamental_form(jets, metric)
    f = extr.H_norm2 if which == "H" else extr.B_norm2
    # f lives one cell in; its central derivatives two cells in; trim one more
    value, grad, hess = central_derivatives(f, field.spacing, margin=1)
    trim = (slice(1, -1),) * m
    value, grad, hess = value[trim], grad[trim], hess[trim]
    sub = jets[(slice(2, -2),) * m]
    msub = induced_metric(sub)
    lhs = laplace_beltrami((value, grad, hess), msub)
    drift = np.einsum("...i,...i->...", _tangent_T(sub, msub, T), grad)
    quad = _coefficient(which, field.m, field.n) * value**2
    return sub.base, lhs, quad - drift, quad + drift


def _coarsened(field: GridField):
    if any((s - 1) % 2 for s in field.shape):
        return None
    coarse_shape = tuple((s + 1) // 2 for s in field.shape)
    if any(s < 2 * BOUNDARY_EXCLUSION + 1 for s in coarse_shape):
        return None
    return field.with_samples(field.samples[(slice(None),) + (slice(None, None, 2),) * field.m])


def _richardson_tolerance(field, T, which, residual_tol, margin):
    """tol_disc(h) = safety * kappa * h^2 with kappa from the h / 2h margin gap."""
    coarse = _coarsened(field)
    h = _h(field)
    if coarse is None:
        return TOL_FLOOR, float("nan")
    _, lhs_c, rhs_c, _ = _grid_margins(coarse, T, which, 4.0 * residual_tol)  # truncation residual scales with h^2
    count = lhs_c.shape
    # fine block index 2c - 3 matches coarse qualifying node c
    common = tuple(slice(BOUNDARY_EXCLUSION, BOUNDARY_EXCLUSION + 2 * c, 2) for c in count)
    gap = np.abs(margin[common] - (lhs_c - rhs_c))
    kappa = float(gap.max()) / (3.0 * h * h) if gap.size else float("nan")
    if not math.isfinite(kappa):
        return TOL_FLOOR, kappa
    return max(RICHARDSON_SAFETY * kappa * h * h, TOL_FLOOR), kappa


def _analytic_margins(sol: AnalyticGrid, T, which, residual_tol):
    x = sol.coords()
    jets = sol.jets()
    metric = induced_metric(jets)
    _require_translator(jets, metric, T, residual_tol)
    jet_H, jet_B = sol.graph.norm_square_jets(x)
    f = jet_H if which == "H" else jet_B
    lhs = laplace_beltrami(f, metric)
    drift = np.einsum("...i,...i->...", _tangent_T(jets, metric, T), f.grad)
    quad = _coefficient(which, sol.m, sol.n) * f.value**2
    return x, lhs, quad - drift, quad + drift


def _curvature_check(name, which, solution, T, residual_tol):
    if isinstance(solution, AnalyticGrid):
        tol_res = 1e-8 if residual_tol is None else residual_tol
        coords, lhs, rhs, alt = _analytic_margins(solution, T, which, tol_res)
        tol, mode, details = ANALYTIC_TOL, "analytic", {}
    else:
        h = _h(solution)
        tol_res = 1e-8 + 10.0 * h * h if residual_tol is None else residual_tol
        coords, lhs, rhs, alt = _grid_margins(solution, T, which, tol_res)
        tol, kappa = _richardson_tolerance(solution, T, which, tol_res, lhs - rhs)
        mode, details = "grid", {"kappa": kappa, "boundary_exclusion": BOUNDARY_EXCLUSION}
    margin = lhs - rhs
    worst, where = extremum(margin, coords)
    passed = bool(worst >= -tol)
    details["residual_tol"] = tol_res
    if not passed:
        # the drift term's sign differs between two printed forms; report both
        details["flipped_drift_worst_margin"] = extremum(lhs - alt, coords)[0]
    series = (_series(coords, "margin", margin), _series(coords, "lhs", lhs), _series(coords, "rhs", rhs))
    return DiagnosticsReport(name, _h(solution), tol, worst, where, passed, mode, series, details)


def prop31_check(solution, T: TranslatorSpec, residual_tol=None) -> DiagnosticsReport:
    """Delta ||H||^2 >= (2/m) ||H||^4 - V^i (||H||^2)_i at every qualifying node.

    ``solution`` is a GridField (central differences, Richardson tolerance)
    or an AnalyticGrid (exact jets, roundoff tolerance).
    """
    return _curvature_check("prop31", "H", solution, T, residual_tol)


def prop32_check(solution, T: TranslatorSpec, residual_tol=None) -> DiagnosticsReport:
    """Delta ||B||^2 >= (2/n) ||B||^4 - V^i (||B||^2)_i; see :func:`prop31_check`."""
    return _curvature_check("prop32", "B", solution, T, residual_tol)


# ------------------------------------------------------------ metric probes


def node_jets(solution) -> Jet2:
    """First-order jets at every node (Hessians are zero for grid input)."""
    if isinstance(solution, AnalyticGrid):
        return solution.jets()
    grad = one_sided_gradient(solution)
    value = np.moveaxis(solution.samples, 0, -1)
    hess = np.zeros(grad.shape + (solution.m,))
    return Jet2(solution.coords(), value, grad, hess)


def _metric_fields(solution):
    jets = node_jets(solution)
    g = np.eye(jets.m) - np.einsum("...ai,...aj->...ij", jets.grad, jets.grad)
    lam = np.linalg.eigvalsh(g)[..., 0]
    if not np.all(lam > DELTA_SPACE):
        flat = np.nan_to_num(lam, nan=-np.inf)
        k = np.unravel_index(int(np.argmin(flat)), lam.shape)
        raise NotSpacelikeError(lam[k], tuple(float(c) for c in jets.base[k]))
    return jets, g, lam, np.linalg.det(g)


def _shell_mask(shape):
    mask = np.zeros(shape, dtype=bool)
    for axis in range(len(shape)):
        idx = [slice(None)] * len(shape)
        for end in (0, -1):
            idx[axis] = end
            mask[tuple(idx)] = True
    return mask


def _ray_mask(coords, spacing):
    """Nodes on the coordinate axes through the origin."""
    near = np.abs(coords) <= 1e-9 * max(spacing)
    m = coords.shape[-1]
    return near.sum(axis=-1) >= m - 1


def _check_refinement(fine, coarse):
    if coarse.lo != fine.lo or coarse.hi != fine.hi or any(
            f != 2 * c - 1 for f, c in zip(fine.shape, coarse.shape)):
        raise InvalidInputError("coarse companion must cover the same box with every other node")


def _probe(solution, quantity, coarse=None):
    """Full-grid values of ``quantity(coords, g, lam, det)``.

    With a coarse companion run, returns the Richardson-extrapolated values
    ``(4 q_h - q_2h) / 3`` on the coarse nodes instead.
    """
    jets, g, lam, det = _metric_fields(solution)
    fine = quantity(jets.base, g, lam, det)
    if coarse is None:
        return jets.base, fine, None
    _check_refinement(solution, coarse)
    cj, cg, clam, cdet = _metric_fields(coarse)
    raw = fine[(slice(None, None, 2),) * solution.m]
    return cj.base, (4.0 * raw - quantity(cj.base, cg, clam, cdet)) / 3.0, raw


def _default_r0(solution):
    return 0.5 * min(max(abs(l), abs(h)) for l, h in zip(solution.lo, solution.hi))


def decay_check(solution, eps_probe, R0=None, coarse=None) -> DiagnosticsReport:
    """s(x) = |x| lambda_min(g(x)) on the coordinate rays and the boundary shell.

    Passes iff min s over samples with |x| >= R0 is at least ``eps_probe``.
    ``coarse`` is an optional run on the same box at twice the spacing; the
    verdict then uses Richardson-extrapolated values.
    """
    R0 = _default_r0(solution) if R0 is None else float(R0)

    def s_of(x, g, lam, det):
        return np.linalg.norm(x, axis=-1) * lam

    coords, values, raw = _probe(solution, s_of, coarse)
    spacing = solution.spacing if coarse is None else coarse.spacing
    radius = np.linalg.norm(coords, axis=-1)
    sample = (_ray_mask(coords, spacing) | _shell_mask(coords.shape[:-1])) & (radius > 0)
    keep = sample & (radius >= R0)
    worst, where = extremum(values[keep], coords[keep])
    details = {"R0": R0, "richardson": coarse is not None}
    series = [_series(coords[sample], "s_extrapolated" if coarse is not None else "s", values[sample])]
    if raw is not None:
        details["unextrapolated_worst"] = float(raw[keep].min())
        series.append(_series(coords[sample], "s", raw[sample]))
    return DiagnosticsReport("decay", _h(solution), float(eps_probe), worst, where, bool(worst >= eps_probe),
                             "analytic" if isinstance(solution, AnalyticGrid) else "grid", tuple(series), details)


def gauss_image_check(solution, eps_probe, coarse=None) -> DiagnosticsReport:
    """inf det g over the box and min |x| det g over the boundary shell.

    Bounded-away-from-zero det g stands in for a bounded Gauss image.  Both
    probes must reach ``eps_probe`` to pass.
    """
    coords, det, raw = _probe(solution, lambda x, g, lam, d: d, coarse)
    worst, where = extremum(det, coords)
    shell = _shell_mask(coords.shape[:-1]) & (np.linalg.norm(coords, axis=-1) > 0)
    weighted = np.linalg.norm(coords, axis=-1) * det
    shell_worst, shell_where = extremum(weighted[shell], coords[shell])
    details = {
        "inf_det_g_pass": bool(worst >= eps_probe),
        "shell_min_x_det_g": shell_worst,
        "shell_location": list(shell_where),
        "shell_pass": bool(shell_worst >= eps_probe),
        "richardson": coarse is not None,
    }
    passed = details["inf_det_g_pass"] and details["shell_pass"]
    series = (_series(coords, "det_g", det), _series(coords[shell], "x_det_g", weighted[shell]))
    return DiagnosticsReport("gauss_image", _h(solution), float(eps_probe), worst, where, passed,
                             "analytic" if isinstance(solution, AnalyticGrid) else "grid", series, details)


def gradient_estimate_check(solution) -> DiagnosticsReport:
    """rho = |grad z| / (|z| + 1) for z = <X, X>; informational only."""
    jets, g, lam, det = _metric_fields(solution)
    z, zi, _ = pseudo_distance_jet(jets)
    g_inv = np.linalg.inv(g)
    grad_norm = np.sqrt(np.maximum(np.einsum("...ij,...i,...j->...", g_inv, zi, zi), 0.0))
    rho = grad_norm / (np.abs(z) + 1.0)
    worst, where = extremum(rho, jets.base, largest=True)
    series = (_series(jets.base, "rho", rho), _series(jets.base, "z", z))
    return DiagnosticsReport("gradient_estimate", _h(solution), None, worst, where, None,
                             "analytic" if isinstance(solution, AnalyticGrid) else "grid", series,
                             {"max_abs_z": float(np.abs(z).max())})


# ---------------------------------------------------------------- rigidity


def affine_deviation(solution: GridField):
    """Sup-norm distance from the least-squares affine fit over all nodes."""
    coords = solution.coords().reshape(-1, solution.m)
    values = solution.samples.reshape(solution.n, -1)
    coef = affine_fit(coords, values)
    fitted = coef[:, :1] + coef[:, 1:] @ coords.T
    return float(np.abs(values - fitted).max())


def rigidity_sweep(sweep: SweepResult, T: TranslatorSpec, eps_probe=0.5, coarse_sweep: SweepResult | None = None,
                   plane_tol=1e-8, flat_tol=1e-6) -> DiagnosticsReport:
    """Per-box affine deviation, curvature and decay, judged for consistency.

    A box is plane-like when it converged, stayed spacelike and has
    sup ||H|| <= ``flat_tol``.  For a non-spacelike T no box may be
    plane-like.  For a spacelike T no converged box may combine a passing
    decay probe with deviation above ``plane_tol``.
    """
    klass = T.causal_class
    rows = {k: [] for k in ("deviation", "sup_B", "sup_H", "min_lambda", "decay_min", "converged")}
    radii, plane_like, decay_pass, violations = [], [], [], []
    for k, report in enumerate(sweep.reports):
        sol = report.solution
        coarse = None
        if coarse_sweep is not None and k < len(coarse_sweep.reports):
            coarse = coarse_sweep.reports[k].solution
        try:
            decay = decay_check(sol, eps_probe, coarse=coarse)
            decay_min, decay_ok = decay.worst_margin, bool(decay.passed)
        except NotSpacelikeError:
            decay_min, decay_ok = float("nan"), False
        dev = affine_deviation(sol)
        sup_H, sup_B = sweep.series["sup_H"][k], sweep.series["sup_B"][k]
        lam = sweep.series["min_lambda"][k]
        flat = bool(report.converged and lam > DELTA_SPACE and sup_H <= flat_tol)
        radii.append(sweep.series["radius"][k])
        for key, val in (("deviation", dev), ("sup_B", sup_B), ("sup_H", sup_H), ("min_lambda", lam),
                         ("decay_min", decay_min), ("converged", float(report.converged))):
            rows[key].append(val)
        plane_like.append(flat)
        decay_pass.append(decay_ok)
        if klass == SPACELIKE and report.converged and decay_ok and dev > plane_tol:
            violations.append(k)
    if klass != SPACELIKE:
        violations = [k for k, flat in enumerate(plane_like) if flat]
    devs = np.array(rows["deviation"]) if rows["deviation"] else np.array([np.nan])
    coords = np.array(radii, dtype=float).reshape(-1, 1)
    series = tuple(Series(("radius",), coords, key, np.array(vals, dtype=float)) for key, vals in rows.items())
    details = {
        "causal_class": klass,
        "boxes": len(sweep.reports),
        "sweep_failure": sweep.failure,
        "max_deviation": float(np.nanmax(devs)) if np.any(np.isfinite(devs)) else float("nan"),
        "min_deviation": float(np.nanmin(devs)) if np.any(np.isfinite(devs)) else float("nan"),
        "plane_like_boxes": [k for k, flat in enumerate(plane_like) if flat],
        "decay_failed_boxes": [k for k, ok in enumerate(decay_pass) if not ok],
        "inconsistent_boxes": violations,
    }
    worst = details["max_deviation"]
    where = (float(radii[int(np.nanargmax(devs))]),) if np.any(np.isfinite(devs)) else None
    h = _h(sweep.reports[0].solution) if sweep.reports else None
    return DiagnosticsReport("rigidity_sweep", h, plane_tol, worst, where, not violations, "grid", series, details)


def observed_order(err_coarse, err_fine, ratio=2.0):
    """Convergence order from errors at spacings h*ratio and h."""
    return math.log(err_coarse / err_fine) / math.log(ratio)
