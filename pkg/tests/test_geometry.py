import math

import numpy as np
import pytest

from translators import geometry as geo
from translators.errors import InvalidInputError, NotSpacelikeError
from translators.fields import AnalyticGraph
from translators.geometry import Jet2, SpaceSignature, TranslatorSpec

from conftest import random_cubic
from oracles import graph_metric, intrinsic_riemann

SIG = SpaceSignature(2, 2)
ORIGIN = np.array([0.0, 0.0])


def jet_at(graph, x):
    return graph.jet(np.asarray(x, dtype=float))


# ---------------------------------------------------------------- algebra


@pytest.mark.parametrize("v, expected", [((1, 0, 0, 0), 1.0), ((0, 0, 1, 0), -1.0), ((0, 1, 1, 0.5), -0.25)])
def test_inner_examples(v, expected):
    assert geo.inner(v, v, SIG) == pytest.approx(expected, abs=1e-15)


def test_inner_rejects_wrong_length():
    with pytest.raises(InvalidInputError):
        geo.inner((1, 0, 0), (1, 0, 0), SIG)


def test_inner_bilinear_symmetric():
    rng = np.random.default_rng(0)
    u, v, w = rng.normal(size=(3, 4))
    assert geo.inner(u, v, SIG) == pytest.approx(geo.inner(v, u, SIG))
    assert geo.inner(2 * u + w, v, SIG) == pytest.approx(2 * geo.inner(u, v, SIG) + geo.inner(w, v, SIG))


@pytest.mark.parametrize("v, klass", [
    ((1, 0, 0.5, 0), geo.SPACELIKE), ((0, 1, 1, 0), geo.LIGHTLIKE), ((0, 1, 1, 0.5), geo.TIMELIKE),
])
def test_causal_class(v, klass):
    assert geo.causal_class(v, SIG) == klass


def test_causal_class_zero_vector():
    with pytest.raises(InvalidInputError):
        geo.causal_class((0, 0, 0, 0), SIG)
    with pytest.raises(InvalidInputError):
        TranslatorSpec((0, 0), (0, 0))


def test_translator_spec():
    T = TranslatorSpec.from_vector((0, 1, 1, 0.5), SIG)
    assert T.C0 == pytest.approx(-0.25)
    assert T.causal_class == geo.TIMELIKE
    assert TranslatorSpec((1, 0), (0.5, 0)).C0 == pytest.approx(0.75)


# ---------------------------------------------------------------- frames


def test_tangent_frames(plane, soliton):
    e = geo.tangent_frame(jet_at(plane, (0.3, -2.0)))
    assert np.allclose(e, [[1, 0, 0.5, 0], [0, 1, 0, 0.3]])
    e = geo.tangent_frame(jet_at(soliton, ORIGIN))
    assert np.allclose(e, [[1, 0, 0, 0], [0, 1, 0, 0.5]], atol=1e-15)
    flat = AnalyticGraph(["2", "-1"], 2)
    assert np.allclose(geo.tangent_frame(jet_at(flat, (1, 1))), np.eye(2, 4))


def test_metric_examples(plane, soliton):
    md = geo.induced_metric(jet_at(plane, (1.0, 2.0)))
    assert np.allclose(md.g, np.diag([0.75, 0.91]), atol=1e-15)
    assert np.all(md.christoffel == 0.0)
    md = geo.induced_metric(jet_at(soliton, ORIGIN))
    assert np.allclose(md.g, np.diag([1.0, 0.75]), atol=1e-15)
    assert md.det_g == pytest.approx(0.75)
    assert md.christoffel[0, 0, 0] == pytest.approx(0.0, abs=1e-15)
    x = 0.7
    md = geo.induced_metric(jet_at(soliton, (x, 0.0)))
    assert md.christoffel[0, 0, 0] == pytest.approx(-math.tanh(x), rel=1e-12)


def test_lightlike_direction_is_rejected():
    with pytest.raises(NotSpacelikeError) as info:
        geo.induced_metric(jet_at(AnalyticGraph(["x1", "0"], 2), (0.2, 0.1)))
    assert info.value.lambda_min <= 1e-9


def test_not_spacelike_reports_location():
    graph = AnalyticGraph(["x1^2", "0"], 2)
    x = np.array([[0.0, 0.0], [0.1, 0.0], [0.9, 0.0]])
    with pytest.raises(NotSpacelikeError) as info:
        geo.induced_metric(graph.jet(x))
    assert info.value.location == (2,)


def test_metric_invariants_random(soliton):
    rng = np.random.default_rng(3)
    graph = AnalyticGraph(random_cubic(rng), 2)
    x = rng.uniform(-1, 1, (200, 2))
    jet = graph.jet(x)
    md = geo.induced_metric(jet)
    e = geo.tangent_frame(jet)
    pair = geo.inner(e[:, :, None, :], e[:, None, :, :], SIG)
    assert np.allclose(pair, md.g, rtol=1e-12, atol=1e-14)
    assert np.allclose(md.g @ md.g_inv, np.eye(2), atol=1e-12)
    assert np.all((md.det_g > 0) & (md.det_g <= 1 + 1e-15))
    assert np.allclose(md.christoffel, np.swapaxes(md.christoffel, -1, -2), atol=1e-15)


# --------------------------------------------------------------- extrinsic


def test_plane_is_totally_geodesic(plane):
    ex = geo.second_fundamental_form(jet_at(plane, (0.4, 0.1)))
    assert np.all(ex.B == 0) and np.all(ex.H == 0)
    assert ex.H_norm2 == 0 and ex.B_norm2 == 0


def test_soliton_second_fundamental_form_at_origin(soliton):
    ex = geo.second_fundamental_form(jet_at(soliton, ORIGIN))
    assert np.allclose(ex.B[0, 0], [0, 0, 1, 0], atol=1e-15)
    assert np.allclose(ex.H, [0, 0, 1, 0], atol=1e-15)
    assert ex.H_norm2 == pytest.approx(1.0)
    assert ex.B_norm2 == pytest.approx(1.0)
    assert ex.B_norm2 - ex.H_norm2 / 2 == pytest.approx(0.5)


@pytest.mark.parametrize("x1", [-1.5, 0.3, 1.0, 2.2])
def test_soliton_norms_closed_form(soliton, x1):
    ex = geo.second_fundamental_form(jet_at(soliton, (x1, 0.4)))
    assert ex.H_norm2 == pytest.approx(math.cosh(x1) ** 2, rel=1e-12)
    assert ex.B_norm2 == pytest.approx(math.cosh(x1) ** 2, rel=1e-12)


def _random_jets(seed, count=100):
    rng = np.random.default_rng(seed)
    graph = AnalyticGraph(random_cubic(rng), 2)
    return graph.jet(rng.uniform(-1, 1, (count, 2)))


def test_normality_and_symmetry():
    jet = _random_jets(4)
    ex = geo.second_fundamental_form(jet)
    e = geo.tangent_frame(jet)
    pair = geo.inner(ex.B[:, :, :, None, :], e[:, None, None, :, :], SIG)
    assert np.abs(pair).max() < 1e-10
    assert np.allclose(ex.B, np.swapaxes(ex.B, 1, 2), atol=1e-15)
    md = geo.induced_metric(jet)
    assert np.allclose(ex.H, np.einsum("pij,pijA->pA", md.g_inv, ex.B), atol=1e-14)


def test_mean_curvature_against_unit_normals():
    jet = _random_jets(5)
    md = geo.induced_metric(jet)
    ex = geo.second_fundamental_form(jet, md)
    normals = geo.graph_normals(jet)
    lhs = geo.inner(ex.H[:, None, :], normals, SIG)
    trace = np.einsum("pij,paij->pa", md.g_inv, jet.hess)
    rhs = -trace / np.sqrt(1 - np.sum(jet.grad**2, axis=-1))
    assert np.allclose(lhs, rhs, atol=1e-10)
    assert np.allclose(ex.H_alpha, lhs, atol=1e-14)


def test_schwarz_and_signs():
    for seed in range(6):
        jet = _random_jets(10 + seed, 300)
        ex = geo.second_fundamental_form(jet)
        assert np.all(ex.H_norm2 >= -1e-12) and np.all(ex.B_norm2 >= -1e-12)
        assert np.all(ex.B_norm2 - ex.H_norm2 / 2 >= -1e-12)


def test_orthonormal_normal_frame():
    jet = _random_jets(6)
    nu = geo.orthonormal_normal_frame(jet)
    gram = geo.inner(nu[:, :, None, :], nu[:, None, :, :], SIG)
    assert np.allclose(gram, -np.eye(2), atol=1e-12)
    e = geo.tangent_frame(jet)
    assert np.abs(geo.inner(nu[:, :, None, :], e[:, None, :, :], SIG)).max() < 1e-12


def test_splits(plane, soliton):
    jet = jet_at(plane, (0.2, 0.9))
    tan, nor = geo.tangential_normal_split((1, 0, 0.5, 0), jet)
    assert np.allclose(tan, (1, 0, 0.5, 0), atol=1e-15) and np.allclose(nor, 0, atol=1e-15)
    # (0, 0, 1, 0) pairs to -0.5 with e_1 here; the genuine normals are the graph normals
    for v in geo.graph_normals(jet):
        tan, nor = geo.tangential_normal_split(v, jet)
        assert np.abs(tan).max() < 1e-12
    assert np.abs(geo.tangential_normal_split((0, 0, 1, 0), jet)[0]).max() > 0.1
    jet = jet_at(soliton, ORIGIN)
    tan, nor = geo.tangential_normal_split((0, 1, 1, 0.5), jet)
    assert np.allclose(nor, (0, 0, 1, 0), atol=1e-15)
    ex = geo.second_fundamental_form(jet)
    assert np.allclose(nor, ex.H, atol=1e-15)
    e = geo.tangent_frame(jet)
    assert np.abs(geo.inner(nor, e, SIG)).max() < 1e-15


# -------------------------------------------------------------- translator


def test_translator_residual_examples(plane, soliton, T_plane, T_soliton):
    x = np.random.default_rng(7).uniform(-3, 3, (50, 2))
    assert np.abs(geo.translator_residual(soliton.jet(x), T_soliton)).max() <= 1e-12
    assert np.allclose(geo.translator_residual(plane.jet(x), T_plane), 0.0, atol=1e-15)
    # r = g^ij u_ij + a^i u_i - b: the plane's slope 0.5 is left unbalanced by b
    r = geo.translator_residual(plane.jet(x), TranslatorSpec((1, 0), (0, 0)))
    assert np.allclose(r, [0.5, 0.0], atol=1e-15)


@pytest.mark.parametrize("mu", [0.0, 0.25, 0.5, 0.9])
def test_translator_equivalence(mu):
    """Residual zero exactly where T - H has no normal component."""
    graph = AnalyticGraph(["ln(1+exp(2*x1))-x1", f"{mu}*x2"], 2)
    x = np.random.default_rng(8).uniform(-2, 2, (40, 2))
    jet = graph.jet(x)
    for T, zero in [(TranslatorSpec((0, 1), (1, mu)), True), (TranslatorSpec((0, 1), (1, mu + 0.3)), False)]:
        ex = geo.second_fundamental_form(jet)
        normals = geo.graph_normals(jet)
        gap = geo.inner((T.vector - ex.H)[:, None, :], normals, SIG)
        r = geo.translator_residual(jet, T)
        assert (np.abs(r).max() < 1e-10) == zero
        assert (np.abs(gap).max() < 1e-10) == zero


# --------------------------------------------------------------- curvature


def test_plane_and_soliton_curvature(plane, soliton):
    assert np.all(geo.curvature(jet_at(plane, (1, 1))).riemann == 0)
    R = geo.curvature(jet_at(soliton, ORIGIN)).riemann
    assert abs(R[0, 1, 0, 1]) < 1e-15


def test_hyperboloid_has_curvature_minus_one():
    graph = AnalyticGraph(["sqrt(1 + x1^2 + x2^2)"], 2)
    x = np.random.default_rng(9).uniform(-2, 2, (30, 2))
    jet = graph.jet(x)
    md = geo.induced_metric(jet)
    cd = geo.curvature(jet, md)
    assert np.allclose(cd.riemann[:, 0, 1, 0, 1] / md.det_g, -1.0, rtol=1e-10)
    assert np.allclose(cd.ricci, -md.g, atol=1e-10)


def test_curvature_symmetries():
    jet = _random_jets(11, 20)
    cd = geo.curvature(jet)
    R = cd.riemann
    assert np.allclose(R, -np.swapaxes(R, 1, 2), atol=1e-14)
    assert np.allclose(R, -np.swapaxes(R, 3, 4), atol=1e-14)
    assert np.allclose(R, np.transpose(R, (0, 3, 4, 1, 2)), atol=1e-14)
    assert np.allclose(cd.ricci, np.swapaxes(cd.ricci, 1, 2), atol=1e-14)
    md = geo.induced_metric(jet)
    assert np.allclose(cd.ricci, np.einsum("pkl,pkilj->pij", md.g_inv, R), atol=1e-12)


def test_gauss_equation_against_intrinsic_oracle():
    rng = np.random.default_rng(12)
    graph = AnalyticGraph(random_cubic(rng), 2)
    x = np.array([0.2, -0.3])
    ext = geo.curvature(graph.jet(x)).riemann
    metric = graph_metric(lambda y: graph.jet(y).grad)
    errs = [np.abs(intrinsic_riemann(metric, x, h) - ext).max() for h in (0.02, 0.01)]
    assert errs[1] < 1e-5
    assert math.log2(errs[0] / errs[1]) > 1.9


def test_frame_choice_independence():
    jet = _random_jets(13, 25)
    md = geo.induced_metric(jet)
    ex = geo.second_fundamental_form(jet, md)
    nu = geo.orthonormal_normal_frame(jet)
    theta = 0.7
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    mixed = np.einsum("ab,pbA->paA", rot, nu)
    R0 = geo.curvature(jet, md, ex).riemann
    R1 = geo.curvature(jet, md, ex, normal_frame=mixed).riemann
    assert np.allclose(R0, R1, atol=1e-10)
    # norm squares and H agree with their expansion in the remixed frame
    h = geo.normal_components(ex, mixed, 2)
    Hc = np.einsum("pij,paij->pa", md.g_inv, h)
    assert np.allclose(ex.H_norm2, np.sum(Hc**2, axis=-1), atol=1e-10)
    B2 = np.einsum("pik,pjl,paij,pakl->p", md.g_inv, md.g_inv, h, h)
    assert np.allclose(ex.B_norm2, B2, atol=1e-10)
    assert np.allclose(ex.H, -np.einsum("pa,paA->pA", Hc, mixed), atol=1e-10)


def test_one_dimensional_cases():
    graph = AnalyticGraph(["0.3*x1^2"], 1)
    cd = geo.curvature(graph.jet(np.array([[0.5], [0.1]])))
    assert cd.riemann.shape == (2, 1, 1, 1, 1) and np.all(cd.riemann == 0)
    ex = geo.second_fundamental_form(graph.jet(np.array([0.5])))
    assert ex.B_norm2 == pytest.approx(ex.H_norm2)


# --------------------------------------------------------- pseudo-distance


def test_pseudo_distance_examples(plane, soliton):
    pd = geo.pseudo_distance(jet_at(soliton, ORIGIN))
    assert pd.z == pytest.approx(-math.log(2) ** 2, abs=1e-15)
    assert pd.lap_z == pytest.approx(4 - 2 * math.log(2), abs=1e-12)
    pd = geo.pseudo_distance(jet_at(plane, (1.0, 0.0)))
    assert pd.z == pytest.approx(0.75)
    assert np.allclose(pd.grad_z, [1.5, 0.0])
    assert pd.lap_z == pytest.approx(4.0)
    pd = geo.pseudo_distance(jet_at(AnalyticGraph(["sinh(x1)*x2", "x1^2"], 2), ORIGIN))
    assert pd.z == 0 and np.all(pd.grad_z == 0)


def test_pseudo_distance_laplacian_consistency():
    for graph in (AnalyticGraph(["ln(1+exp(2*x1))-x1", "0.5*x2"], 2), AnalyticGraph(["0.5*x1", "0.3*x2"], 2),
                  AnalyticGraph(random_cubic(np.random.default_rng(14)), 2)):
        jet = graph.jet(np.random.default_rng(15).uniform(-1, 1, (40, 2)))
        md = geo.induced_metric(jet)
        pd = geo.pseudo_distance(jet, metric=md)
        assert np.allclose(geo.laplace_beltrami(geo.pseudo_distance_jet(jet), md), pd.lap_z, atol=1e-10)
        # covariant Hessian of z agrees with the coordinate chain rule
        z, zi, zij = geo.pseudo_distance_jet(jet)
        cov = zij - np.einsum("pkij,pk->pij", md.christoffel, zi)
        assert np.allclose(cov, pd.hess_z, atol=1e-10)
        assert np.allclose(zi, pd.grad_z, atol=1e-12)


def test_laplace_beltrami_examples(plane, soliton):
    md = geo.induced_metric(jet_at(soliton, ORIGIN))
    assert geo.laplace_beltrami((3.0, np.zeros(2), np.zeros((2, 2))), md) == 0.0
    jet = jet_at(plane, (1.0, 0.0))
    assert geo.laplace_beltrami(geo.pseudo_distance_jet(jet), geo.induced_metric(jet)) == pytest.approx(4.0)
    f_H, _ = soliton.norm_square_jets(ORIGIN)
    assert geo.laplace_beltrami(f_H, md) == pytest.approx(2.0, abs=1e-12)


def test_jet_validation():
    with pytest.raises(InvalidInputError):
        Jet2(np.zeros(2), np.zeros(2), np.zeros((2, 3)), np.zeros((2, 2, 2)))
