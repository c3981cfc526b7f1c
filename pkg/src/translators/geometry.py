"""Pointwise tensor kernel for spacelike graphs in R^{m+n}_n.

Every function accepts a :class:`Jet2` whose arrays may carry leading batch
dimensions; the geometry is then evaluated at all points at once.  Ambient
vectors are plain numpy arrays whose last axis has length ``m + n``: the first
``m`` coordinates are spacelike (+) and the last ``n`` timelike (-).

Index conventions for returned arrays (batch axes omitted):

* ``frame[i, A]``          tangent vector e_i
* ``christoffel[k, i, j]`` Gamma^k_ij
* ``B[i, j, A]``           second fundamental form B_ij
* ``h[alpha, i, j]``       <B_ij, nu_alpha> against an orthonormal normal frame
* ``riemann[i, j, k, l]``  R_ijkl, with R_ijij the sectional curvature times area
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidInputError, NotSpacelikeError

DELTA_SPACE = 1e-9
DELTA_LIGHT = 1e-9

SPACELIKE, LIGHTLIKE, TIMELIKE = "spacelike", "lightlike", "timelike"


@dataclass(frozen=True)
class SpaceSignature:
    m: int
    n: int

    def __post_init__(self):
        if int(self.m) != self.m or int(self.n) != self.n or self.m < 1 or self.n < 1:
            raise InvalidInputError(f"signature needs m >= 1 and n >= 1, got ({self.m}, {self.n})")

    @property
    def dim(self):
        return self.m + self.n

    @property
    def eta(self):
        return np.concatenate([np.ones(self.m), -np.ones(self.n)])


@dataclass(frozen=True, eq=False)
class Jet2:
    """Values, gradients and Hessians of the n graph functions.

    Shapes: ``base (..., m)``, ``value (..., n)``, ``grad (..., n, m)`` with
    ``grad[a, i] = du^a/dx_i`` and ``hess (..., n, m, m)``.
    """

    base: np.ndarray
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray

    def __post_init__(self):
        for name in ("base", "value", "grad", "hess"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        m = self.base.shape[-1] if self.base.ndim else 0
        n = self.value.shape[-1] if self.value.ndim else 0
        batch = self.base.shape[:-1]
        if m < 1 or n < 1:
            raise InvalidInputError("jet needs at least one coordinate and one graph function")
        expected = {
            "value": batch + (n,),
            "grad": batch + (n, m),
            "hess": batch + (n, m, m),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise InvalidInputError(f"jet field {name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def m(self):
        return self.base.shape[-1]

    @property
    def n(self):
        return self.value.shape[-1]

    @property
    def batch_shape(self):
        return self.base.shape[:-1]

    @property
    def signature(self):
        return SpaceSignature(self.m, self.n)

    def position(self):
        """Ambient position X = (x, u(x))."""
        return np.concatenate([self.base, self.value], axis=-1)

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet2(self.base[idx], self.value[idx], self.grad[idx], self.hess[idx])

    def is_symmetric(self, tol=1e-12):
        return bool(np.all(np.abs(self.hess - np.swapaxes(self.hess, -1, -2)) <= tol))


@dataclass(frozen=True, eq=False)
class MetricData:
    g: np.ndarray
    g_inv: np.ndarray
    det_g: np.ndarray
    christoffel: np.ndarray
    lambda_min: np.ndarray


@dataclass(frozen=True, eq=False)
class ExtrinsicData:
    B: np.ndarray
    H: np.ndarray
    H_norm2: np.ndarray
    B_norm2: np.ndarray
    H_alpha: np.ndarray  # <H, e_alpha> against the unnormalised-then-unit graph normals


@dataclass(frozen=True, eq=False)
class CurvatureData:
    riemann: np.ndarray
    ricci: np.ndarray


@dataclass(frozen=True)
class TranslatorSpec:
    """Translating vector T = a^i E_i + b^alpha E_{m+alpha}."""

    a: tuple
    b: tuple
    delta_light: float = DELTA_LIGHT

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.a))
        b = tuple(float(v) for v in np.atleast_1d(self.b))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if not all(np.isfinite(a + b)):
            raise InvalidInputError("translating vector must be finite")
        if not any(a + b):
            raise InvalidInputError("translating vector must be non-zero")

    @classmethod
    def from_vector(cls, T, sig: SpaceSignature, delta_light=DELTA_LIGHT):
        T = np.asarray(T, dtype=float)
        if T.shape != (sig.dim,):
            raise InvalidInputError(f"translating vector needs {sig.dim} components, got {T.shape}")
        return cls(tuple(T[: sig.m]), tuple(T[sig.m :]), delta_light)

    @property
    def vector(self):
        return np.array(self.a + self.b)

    @property
    def signature(self):
        return SpaceSignature(len(self.a), len(self.b))

    @property
    def C0(self):
        return float(sum(x * x for x in self.a) - sum(x * x for x in self.b))

    @property
    def causal_class(self):
        return causal_class(self.vector, self.signature, self.delta_light)


# ------------------------------------------------------------ ambient algebra


def _check_len(v, dim):
    if np.shape(v)[-1:] != (dim,):
        raise InvalidInputError(f"ambient vector needs {dim} components, got shape {np.shape(v)}")


def inner(v, w, sig: SpaceSignature):
    """Signature-(m, n) inner product, batched over leading axes."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_len(v, sig.dim)
    _check_len(w, sig.dim)
    return _inner(v, w, sig.m)


def _inner(v, w, m):
    return np.sum(v[..., :m] * w[..., :m], axis=-1) - np.sum(v[..., m:] * w[..., m:], axis=-1)


def causal_class(v, sig: SpaceSignature, delta_light=DELTA_LIGHT):
    v = np.asarray(v, dtype=float)
    _check_len(v, sig.dim)
    if not np.any(v):
        raise InvalidInputError("causal class of the zero vector is undefined")
    c = float(inner(v, v, sig))
    if c > delta_light:
        return SPACELIKE
    if abs(c) <= delta_light:
        return LIGHTLIKE
    return TIMELIKE


# ------------------------------------------------------------- intrinsic


def tangent_frame(jet: Jet2):
    """Coordinate frame e_i = E_i + sum_a u^a_i E_{m+a}."""
    m = jet.m
    eye = np.broadcast_to(np.eye(m), jet.batch_shape + (m, m))
    return np.concatenate([eye, np.swapaxes(jet.grad, -1, -2)], axis=-1)


def _metric_only(jet: Jet2):
    return np.eye(jet.m) - np.einsum("...ai,...aj->...ij", jet.grad, jet.grad)


def spacelike_margin(jet: Jet2):
    """Smallest eigenvalue of the induced metric at every point."""
    return np.linalg.eigvalsh(_metric_only(jet))[..., 0]


def induced_metric(jet: Jet2, delta_space=DELTA_SPACE) -> MetricData:
    g = _metric_only(jet)
    lam = np.linalg.eigvalsh(g)[..., 0]
    if np.any(~(lam > delta_space)):
        flat = np.nan_to_num(np.atleast_1d(lam), nan=-np.inf).ravel()
        worst = int(np.argmin(flat))
        loc = np.unravel_index(worst, jet.batch_shape) if jet.batch_shape else None
        raise NotSpacelikeError(flat[worst], loc)
    g_inv = np.linalg.inv(g)
    det = np.linalg.det(g)
    gamma = -np.einsum("...kl,...aij,...al->...kij", g_inv, jet.hess, jet.grad)
    return MetricData(g=g, g_inv=g_inv, det_g=det, christoffel=gamma, lambda_min=lam)


def laplace_beltrami(field_jet, metric: MetricData):
    """Scalar Laplacian g^ij (f_ij - Gamma^k_ij f_k).

    ``field_jet`` is ``(f, f_i, f_ij)`` or anything with ``grad``/``hess``.
    """
    if hasattr(field_jet, "grad"):
        grad, hess = field_jet.grad, field_jet.hess
    else:
        _, grad, hess = field_jet
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    covariant = hess - np.einsum("...kij,...k->...ij", metric.christoffel, grad)
    return np.einsum("...ij,...ij->...", metric.g_inv, covariant)


# ------------------------------------------------------------- extrinsic


def graph_normals(jet: Jet2):
    """Unit normals (sum_i u^a_i E_i + E_{m+a}) / (1 - |Du^a|^2)^{1/2}.

    These are normal and unit timelike but not mutually orthogonal.
    """
    raw = _raw_normals(jet)
    norm2 = 1.0 - np.sum(jet.grad**2, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return raw / np.sqrt(norm2)[..., None]


def _raw_normals(jet):
    n = jet.n
    eye = np.broadcast_to(np.eye(n), jet.batch_shape + (n, n))
    return np.concatenate([jet.grad, eye], axis=-1)


def orthonormal_normal_frame(jet: Jet2):
    """Gram-Schmidt of the graph normals: <nu_a, nu_b> = -delta_ab."""
    m = jet.m
    raw = _raw_normals(jet)
    frame = []
    for a in range(jet.n):
        v = raw[..., a, :].copy()
        for nu in frame:
            # <nu, nu> = -1
            v = v + _inner(v, nu, m)[..., None] * nu
        norm2 = -_inner(v, v, m)
        frame.append(v / np.sqrt(norm2)[..., None])
    return np.stack(frame, axis=-2)


def _ambient_second_derivatives(jet):
    m = jet.m
    X2 = np.zeros(jet.batch_shape + (m, m, m + jet.n))
    X2[..., m:] = np.moveaxis(jet.hess, -3, -1)
    return X2


def tangential_part(v, jet: Jet2, metric: MetricData):
    frame = tangent_frame(jet)
    pairing = _inner(np.asarray(v, dtype=float)[..., None, :], frame, jet.m)
    coeff = np.einsum("...ij,...j->...i", metric.g_inv, pairing)
    return np.einsum("...i,...iA->...A", coeff, frame)


def second_fundamental_form(jet: Jet2, metric: MetricData | None = None, delta_space=DELTA_SPACE) -> ExtrinsicData:
    if metric is None:
        metric = induced_metric(jet, delta_space)
    m = jet.m
    frame = tangent_frame(jet)
    X2 = _ambient_second_derivatives(jet)
    # <X_ij, e_l>, then subtract the tangential part g^kl <X_ij, e_l> e_k
    pairing = _inner(X2[..., None, :], frame[..., None, None, :, :], m)
    coeff = np.einsum("...kl,...ijl->...ijk", metric.g_inv, pairing)
    B = X2 - np.einsum("...ijk,...kA->...ijA", coeff, frame)
    H = np.einsum("...ij,...ijA->...A", metric.g_inv, B)
    H_norm2 = -_inner(H, H, m)
    BB = _inner(B[..., :, :, None, None, :], B[..., None, None, :, :, :], m)
    B_norm2 = -np.einsum("...ik,...jl,...ijkl->...", metric.g_inv, metric.g_inv, BB)
    H_alpha = _inner(H[..., None, :], graph_normals(jet), m)
    return ExtrinsicData(B=B, H=H, H_norm2=H_norm2, B_norm2=B_norm2, H_alpha=H_alpha)


def tangential_normal_split(v, jet: Jet2, delta_space=DELTA_SPACE):
    metric = induced_metric(jet, delta_space)
    v = np.asarray(v, dtype=float)
    _check_len(v, jet.m + jet.n)
    tangent = tangential_part(v, jet, metric)
    return tangent, v - tangent


def translator_residual(jet: Jet2, T: TranslatorSpec, metric: MetricData | None = None, delta_space=DELTA_SPACE):
    """r^a = g^ij u^a_ij + a^i u^a_i - b^a; zero exactly where H = T^perp."""
    if len(T.a) != jet.m or len(T.b) != jet.n:
        raise InvalidInputError("translating vector does not match the jet's signature")
    if metric is None:
        metric = induced_metric(jet, delta_space)
    trace = np.einsum("...ij,...aij->...a", metric.g_inv, jet.hess)
    return trace + jet.grad @ np.asarray(T.a) - np.asarray(T.b)


def normal_components(extr: ExtrinsicData, normal_frame, m):
    """h^a_ij = <B_ij, nu_a>."""
    return _inner(extr.B[..., None, :, :, :], normal_frame[..., :, None, None, :], m)


def curvature(jet: Jet2, metric: MetricData | None = None, extr: ExtrinsicData | None = None,
              normal_frame=None, delta_space=DELTA_SPACE) -> CurvatureData:
    """Riemann and Ricci tensors from the Gauss equation.

    ``normal_frame`` (shape ``(..., n, m+n)``) must be orthonormal with
    <nu_a, nu_b> = -delta_ab; by default the Gram-Schmidt graph frame is used.
    """
    if metric is None:
        metric = induced_metric(jet, delta_space)
    if extr is None:
        extr = second_fundamental_form(jet, metric)
    if normal_frame is None:
        normal_frame = orthonormal_normal_frame(jet)
    h = normal_components(extr, normal_frame, jet.m)
    riemann = -(np.einsum("...aik,...ajl->...ijkl", h, h) - np.einsum("...ail,...ajk->...ijkl", h, h))
    # coordinate form of the traced Gauss equation
    trace_h = np.einsum("...kl,...akl->...a", metric.g_inv, h)
    ricci = -(
        np.einsum("...a,...aij->...ij", trace_h, h)
        - np.einsum("...kl,...aki,...alj->...ij", metric.g_inv, h, h)
    )
    return CurvatureData(riemann=riemann, ricci=ricci)


class PseudoDistance(NamedTuple):
    z: np.ndarray
    grad_z: np.ndarray
    lap_z: np.ndarray
    hess_z: np.ndarray


def pseudo_distance(jet: Jet2, extr: ExtrinsicData | None = None, metric: MetricData | None = None,
                    delta_space=DELTA_SPACE) -> PseudoDistance:
    """z = <X, X> with its gradient, covariant Hessian and Laplacian.

    In coordinates the Hessian is 2 (g_ij + <X, B_ij>), whose trace gives
    Delta z = 2m + 2 <X, H>.
    """
    if metric is None:
        metric = induced_metric(jet, delta_space)
    if extr is None:
        extr = second_fundamental_form(jet, metric)
    m = jet.m
    X = jet.position()
    frame = tangent_frame(jet)
    z = _inner(X, X, m)
    grad_z = 2.0 * _inner(X[..., None, :], frame, m)
    hess_z = 2.0 * (metric.g + _inner(X[..., None, None, :], extr.B, m))
    lap_z = 2.0 * m + 2.0 * _inner(X, extr.H, m)
    return PseudoDistance(z=z, grad_z=grad_z, lap_z=lap_z, hess_z=hess_z)


def pseudo_distance_jet(jet: Jet2):
    """Coordinate jet (z, z_i, z_ij) of z = |x|^2 - |u|^2, by the chain rule."""
    x, u, p, q = jet.base, jet.value, jet.grad, jet.hess
    z = np.sum(x * x, axis=-1) - np.sum(u * u, axis=-1)
    zi = 2.0 * x - 2.0 * np.einsum("...a,...ai->...i", u, p)
    zij = 2.0 * np.eye(jet.m) - 2.0 * (np.einsum("...ai,...aj->...ij", p, p) + np.einsum("...a,...aij->...ij", u, q))
    return z, zi, zij


# ------------------------------------------------ scalar-generic norm squares


def _generic_inverse(mat):
    """Gauss-Jordan inverse of a small SPD matrix of arithmetic objects."""
    size = len(mat)
    a = [list(row) for row in mat]
    inv = [[1.0 if i == j else 0.0 for j in range(size)] for i in range(size)]
    for col in range(size):
        pivot = a[col][col]
        for j in range(size):
            a[col][j] = a[col][j] / pivot
            inv[col][j] = inv[col][j] / pivot
        for row in range(size):
            if row == col:
                continue
            factor = a[row][col]
            for j in range(size):
                a[row][j] = a[row][j] - factor * a[col][j]
                inv[row][j] = inv[row][j] - factor * inv[col][j]
    return inv


def norm_squares(p, q):
    """||H||^2 and ||B||^2 from first/second derivatives of the graph functions.

    ``p[a][i]`` and ``q[a][i][j]`` may be floats, arrays or ``Taylor2`` jets;
    only ring operations and division are used, so passing jets of the
    derivatives yields exact jets of the two scalar fields.
    """
    n, m = len(p), len(p[0])
    g = [[(1.0 if i == j else 0.0) - sum(p[a][i] * p[a][j] for a in range(n)) for j in range(m)] for i in range(m)]
    gi = _generic_inverse(g)
    # <X_ij, e_l> and <X_ij, X_kl> for X_ij = sum_a u^a_ij E_{m+a}
    w = [[[-sum(q[a][i][j] * p[a][l] for a in range(n)) for l in range(m)] for j in range(m)] for i in range(m)]
    pairs = [(i, j) for i in range(m) for j in range(m)]
    BB = {}
    for i, j in pairs:
        for k, l in pairs:
            if (k, l, i, j) in BB:
                BB[i, j, k, l] = BB[k, l, i, j]
                continue
            xx = -sum(q[a][i][j] * q[a][k][l] for a in range(n))
            tang = sum(gi[s][t] * w[i][j][s] * w[k][l][t] for s in range(m) for t in range(m))
            BB[i, j, k, l] = xx - tang
    HH = sum(gi[i][j] * gi[k][l] * BB[i, j, k, l] for i, j in pairs for k, l in pairs)
    Bsq = sum(gi[i][k] * gi[j][l] * BB[i, j, k, l] for i, j in pairs for k, l in pairs)
    return -HH, -Bsq
