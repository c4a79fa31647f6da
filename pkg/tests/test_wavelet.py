import numpy as np
import pytest

from mncastle import wavelet as wv


def brute_autocorr(psi, lag):
    total = 0.0
    for k in range(len(psi)):
        km = k - lag
        if 0 <= km < len(psi):
            total += psi[k] * psi[km]
    return total


def brute_ndwt(x, psi, t):
    T = len(x)
    return sum(x[u] * psi[(u - t) % T] for u in range(T) if (u - t) % T < len(psi))


# ---------------------------------------------------------------------------
# build_system


def test_haar_scale1():
    sys1 = wv.build_system("haar", 1)
    assert np.allclose(sys1.filters[0], [1 / np.sqrt(2), -1 / np.sqrt(2)])


def test_haar_scale2_refinement():
    sys2 = wv.build_system("haar", 2)
    psi1, psi2 = sys2.filters
    assert np.allclose(psi2, [0.5, 0.5, -0.5, -0.5])
    assert abs(np.dot(psi2, psi2) - 1.0) < 1e-12
    # orthogonal to the scale-1 filter at shifts by 2
    for shift in (0, 2):
        assert abs(np.dot(psi2[shift:shift + 2], psi1)) < 1e-12


def test_haar_general_scale_shape():
    sysj = wv.build_system("haar", 4)
    for j in range(1, 5):
        psi = sysj.filters[j - 1]
        half = 2 ** (j - 1)
        assert len(psi) == 2 ** j
        assert np.allclose(psi[:half], 2 ** (-j / 2))
        assert np.allclose(psi[half:], -(2 ** (-j / 2)))


def test_d8_identities():
    sysd = wv.build_system("d8", 2)
    psi1 = sysd.filters[0]
    assert len(psi1) == 8
    assert abs(np.sum(psi1 ** 2) - 1.0) < 1e-12
    assert abs(np.sum(psi1)) < 1e-12
    for p in (1, 2, 3):
        assert abs(np.sum(np.arange(8) ** p * psi1)) < 1e-9


def test_unit_norm_and_zero_sum_all_families():
    for fam in ("haar", "d4", "d6", "d8"):
        system = wv.build_system(fam, 4)
        for j, psi in enumerate(system.filters, start=1):
            F = system.filter_length
            assert len(psi) == (2 ** j - 1) * (F - 1) + 1
            assert abs(np.linalg.norm(psi) - 1.0) < 1e-12
            assert abs(np.sum(psi)) < 1e-10


def test_unsupported_family():
    with pytest.raises(wv.UnsupportedFamily):
        wv.build_system("meyer", 2)


# ---------------------------------------------------------------------------
# autocorr


def test_autocorr_haar_scale1():
    ac = wv.autocorr(wv.build_system("haar", 1))
    assert abs(ac.value(1, 0) - 1.0) < 1e-12
    assert abs(ac.value(1, 1) + 0.5) < 1e-12
    assert abs(ac.value(1, -1) + 0.5) < 1e-12


def test_autocorr_outside_support_is_zero():
    ac = wv.autocorr(wv.build_system("d4", 2))
    assert ac.value(1, 100) == 0.0
    assert ac.value(2, -100) == 0.0


def test_autocorr_haar_scale2_lag2():
    ac = wv.autocorr(wv.build_system("haar", 2))
    assert abs(ac.value(2, 2) + 0.5) < 1e-12


def test_autocorr_matches_bruteforce():
    for fam in ("haar", "d8"):
        system = wv.build_system(fam, 4)
        ac = wv.autocorr(system)
        for j, psi in enumerate(system.filters, start=1):
            assert abs(ac.value(j, 0) - 1.0) < 1e-12
            for lag in range(-len(psi), len(psi) + 1):
                assert abs(ac.value(j, lag) - brute_autocorr(psi, lag)) < 1e-12
                assert abs(ac.value(j, lag) - ac.value(j, -lag)) < 1e-12


# ---------------------------------------------------------------------------
# inner_product_matrix


def test_ipm_haar_j1():
    ac = wv.autocorr(wv.build_system("haar", 1))
    ipm = wv.inner_product_matrix(ac, 1)
    assert np.allclose(ipm.matrix, [[1.5]])


def test_ipm_haar_j2_bruteforce():
    system = wv.build_system("haar", 2)
    ac = wv.autocorr(system)
    ipm = wv.inner_product_matrix(ac, 2)
    assert abs(ipm.matrix[0, 0] - 1.5) < 1e-12
    assert np.allclose(ipm.matrix, ipm.matrix.T)
    # brute-force lag sums over a wide window
    A = np.zeros((2, 2))
    for j in range(2):
        for k in range(2):
            A[j, k] = sum(ac.value(j + 1, l) * ac.value(k + 1, l)
                          for l in range(-16, 17))
    assert np.allclose(ipm.matrix, A, atol=1e-12)


def test_ipm_inverse_identity():
    ac = wv.autocorr(wv.build_system("haar", 1))
    ipm = wv.inner_product_matrix(ac, 1)
    assert np.allclose(ipm.inverse @ ipm.matrix, np.eye(1), atol=1e-12)


def test_ipm_brute_matches_up_to_j4():
    for fam in ("haar", "d8"):
        system = wv.build_system(fam, 4)
        ac = wv.autocorr(system)
        ipm = wv.inner_product_matrix(ac, 4)
        width = max(len(s) for s in ac.sequences)
        for j in range(4):
            for k in range(4):
                brute = sum(ac.value(j + 1, l) * ac.value(k + 1, l)
                            for l in range(-width, width + 1))
                assert abs(ipm.matrix[j, k] - brute) < 1e-10


# ---------------------------------------------------------------------------
# ndwt


def test_ndwt_constant_series_zero():
    system = wv.build_system("haar", 3)
    x = np.full((2, 64), 3.7)
    d = wv.ndwt(x, system)
    assert np.max(np.abs(d)) < 1e-12


def test_ndwt_impulse_haar():
    system = wv.build_system("haar", 1)
    T = 32
    t0 = 11
    x = np.zeros((1, T))
    x[0, t0] = 1.0
    d = wv.ndwt(x, system)
    got = d[0, :, 0]
    expect = np.zeros(T)
    expect[t0] = 1 / np.sqrt(2)
    expect[(t0 - 1) % T] = -1 / np.sqrt(2)
    assert np.allclose(got, expect, atol=1e-12)


def test_ndwt_matches_bruteforce():
    rng = np.random.default_rng(7)
    system = wv.build_system("d4", 3)
    T = 32
    x = rng.standard_normal((1, T))
    d = wv.ndwt(x, system)
    for j in range(3):
        psi = system.filters[j]
        for t in range(0, T, 5):
            assert abs(d[j, t, 0] - brute_ndwt(x[0], psi, t)) < 1e-10


def test_ndwt_shift_equivariance():
    rng = np.random.default_rng(8)
    system = wv.build_system("haar", 3)
    x = rng.standard_normal((2, 64))
    s = 9
    d0 = wv.ndwt(x, system)
    d1 = wv.ndwt(np.roll(x, s, axis=1), system)
    assert np.allclose(d1, np.roll(d0, s, axis=1), atol=1e-10)


def test_ndwt_linearity():
    rng = np.random.default_rng(9)
    system = wv.build_system("d8", 3)
    x = rng.standard_normal((2, 128))
    y = rng.standard_normal((2, 128))
    a, b = 0.3, -1.7
    lhs = wv.ndwt(a * x + b * y, system)
    rhs = a * wv.ndwt(x, system) + b * wv.ndwt(y, system)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_ndwt_bad_length():
    system = wv.build_system("haar", 2)
    with pytest.raises(wv.BadLength):
        wv.ndwt(np.zeros((1, 100)), system)
