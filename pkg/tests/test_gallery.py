import numpy as np
import pytest

from vnmix import gallery
from vnmix.algebra import absolute, l1_norm, make_algebra, random_element, random_hermitian, random_positive, \
    random_unitary, trace
from vnmix.dynamics import classify_mixing, rho_bar
from vnmix.errors import BadProbability, DimensionTooSmall, NotUnitary, ValidationError
from vnmix.superop import Kraus, check_abs_domination, check_l1_contraction, iterate, positive_fixed_point, spectrum


def test_shift_n2_matrix_units():
    alg, T = gallery.truncated_shift(2)
    assert T(alg.unit(0, 0, 0)).allclose(alg.unit(0, 1, 1))
    assert T(alg.unit(0, 1, 1)).allclose(alg.zero())
    assert T(alg.unit(0, 0, 1)).allclose(alg.zero())
    assert isinstance(T.certificate, Kraus)


def test_shift_too_small():
    with pytest.raises(DimensionTooSmall):
        gallery.truncated_shift(1)


def test_shift_sub_tracial(rng):
    alg, T = gallery.truncated_shift(5)
    for _ in range(10):
        x = random_positive(alg, rng)
        assert trace(T(x)).real <= trace(x).real + 1e-12
    # strict on mass sitting in the last slot
    assert trace(T(alg.unit(0, 4, 4))).real == 0.0


@pytest.mark.parametrize("n", range(2, 13))
def test_shift_family(n):
    alg, T = gallery.truncated_shift(n)
    assert spectrum(T).spectral_radius == 0.0
    assert positive_fixed_point(T, alg.identity()) is None
    norms = iterate(T, alg.unit(0, 0, 0), n_max=2 * n).norms
    assert np.all(norms[:n] == 1.0) and np.all(norms[n:] == 0.0)


def test_pinching_properties(rng):
    E = gallery.diagonal_expectation(4)
    assert np.max(np.abs(E.matrix @ E.matrix - E.matrix)) <= 1e-12
    for _ in range(10):
        x = random_element(E.algebra, rng)
        assert trace(E(x)) == pytest.approx(trace(x), abs=1e-12)
    assert check_abs_domination(E).ok


def test_jordan_identity_and_transpose(rng):
    alg = make_algebra([3], [1])
    T = gallery.jordan_automorphism(alg.identity())
    assert np.allclose(T.matrix, np.eye(alg.coord_dim))
    Tt = gallery.jordan_automorphism(alg.identity(), transpose=True)
    for _ in range(10):
        x = random_hermitian(alg, rng)
        assert l1_norm(Tt(x)) == pytest.approx(l1_norm(x), rel=1e-10)


def test_jordan_rejects_non_unitary():
    alg = make_algebra([2], [1])
    with pytest.raises(NotUnitary):
        gallery.jordan_automorphism(2 * alg.identity())


@pytest.mark.parametrize("transpose", [False, True])
def test_jordan_isometric_not_mixing(rng, transpose):
    alg = make_algebra([2, 2], [0.5, 1.0])
    u = random_unitary(alg, rng)
    T = gallery.jordan_automorphism(u, transpose)
    for _ in range(10):
        x = random_hermitian(alg, rng)
        assert l1_norm(T(x)) == pytest.approx(l1_norm(x), rel=1e-10)
        assert (absolute(T(x)) - T(absolute(x))).max_abs() <= 1e-9
    assert not classify_mixing(T).mixing
    assert rho_bar(T) == pytest.approx(1.0, abs=1e-6)


def test_depolarizing_endpoints(rng):
    alg = make_algebra([3], [0.5])
    assert np.allclose(gallery.depolarizing(alg, 0.0).matrix, np.eye(9))
    T = gallery.depolarizing(alg, 1.0)
    x = random_element(alg, rng)
    assert T(x).allclose(alg.identity() * (trace(x) / alg.tau_one), atol=1e-12)
    assert np.linalg.matrix_rank(T.matrix) == 1


def test_depolarizing_errors():
    with pytest.raises(BadProbability):
        gallery.depolarizing(make_algebra([2], [1]), 1.5)
    with pytest.raises(ValidationError):
        gallery.depolarizing(make_algebra([2, 2], [1, 1]), 0.5)


def test_depolarizing_mixing_fixed_point():
    alg = make_algebra([2], [1])
    T = gallery.depolarizing(alg, 0.3)
    r = classify_mixing(T)
    assert r.mixing
    z = positive_fixed_point(T, alg.identity() / alg.tau_one)
    assert z.allclose(alg.identity() / alg.tau_one, atol=1e-10)


def test_random_contraction_normalization():
    alg = make_algebra([2, 3], [0.5, 1.5])
    for coupled in (False, True):
        T = gallery.random_positive_contraction(alg, 11, kraus_count=3, coupled=coupled)
        v = check_l1_contraction(T)
        assert v.ok
        assert T.adjoint(alg.identity()).allclose(alg.identity(), atol=1e-10)


def test_random_contraction_leak_decay(rng):
    alg = make_algebra([3], [1])
    T = gallery.random_positive_contraction(alg, 5, leak=0.2)
    norms = iterate(T, random_positive(alg, rng), n_max=30, stop_tol=0).norms
    assert np.all(norms[1:] <= (0.8 + 1e-10) * norms[:-1])


def test_random_contraction_deterministic():
    alg = make_algebra([2, 2], [1, 1])
    a = gallery.random_positive_contraction(alg, 77, coupled=True)
    b = gallery.random_positive_contraction(alg, 77, coupled=True)
    assert np.array_equal(a.matrix, b.matrix)


def test_registry_build_and_validation():
    T = gallery.build(gallery.GallerySpec("truncated_shift", {"n": 4}))
    assert T.algebra.dims == (4,)
    alg = make_algebra([2], [1])
    assert gallery.build(gallery.GallerySpec("depolarizing", {"p": 0.5, "scale": 0.5}), alg).contraction_bound \
        == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        gallery.build(gallery.GallerySpec("nope", {}))
    with pytest.raises(ValidationError):
        gallery.build(gallery.GallerySpec("depolarizing", {"q": 1}), alg)
    with pytest.raises(ValidationError):
        gallery.build(gallery.GallerySpec("random_positive_contraction", {}), alg)
