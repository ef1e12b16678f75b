"""Special functions and constants against mpmath / closed forms."""
import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate

from logsob_lab import special as sp
from logsob_lab.errors import DomainError

mp.mp.dps = 40
XS = [1e-3, 0.1, 0.5, 1.0, 1.5, 2.5, 7.3, 20.0, 171.0, 1e4]


@pytest.mark.parametrize("x", XS)
def test_log_gamma_digamma_trigamma_match_mpmath(x):
    assert sp.log_gamma(x) == pytest.approx(float(mp.loggamma(x)), rel=1e-13, abs=1e-14)
    assert sp.digamma(x) == pytest.approx(float(mp.digamma(x)), rel=1e-13, abs=1e-14)
    assert sp.trigamma(x) == pytest.approx(float(mp.polygamma(1, x)), rel=1e-13)


@pytest.mark.parametrize("x", [0.3, 1.0, 4.5, 12.0, 150.0])
def test_gamma_matches_mpmath(x):
    assert sp.gamma(x) == pytest.approx(float(mp.gamma(x)), rel=1e-13)


def test_vectorized_input_returns_array():
    out = sp.digamma(np.array([1.0, 2.0]))
    assert out.shape == (2,)
    assert out[0] == pytest.approx(-sp.EULER_GAMMA, rel=1e-15)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
def test_nonpositive_arguments_rejected(bad):
    with pytest.raises(DomainError):
        sp.log_gamma(bad)


def test_unit_ball_volumes():
    assert sp.unit_ball_volume(1) == pytest.approx(2.0, rel=1e-15)
    assert sp.unit_ball_volume(2) == pytest.approx(math.pi, rel=1e-15)
    assert sp.unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0, rel=1e-15)
    assert sp.unit_ball_volume(4) == pytest.approx(math.pi ** 2 / 2.0, rel=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 7, 50])
def test_p2_sharp_constant_is_two_over_pi_e_n(n):
    assert sp.sharp_lsi_constant(2.0, n) == pytest.approx(2.0 / (math.pi * math.e * n), rel=1e-14)


@pytest.mark.parametrize("p,n", [(2.5, 2), (3.0, 3), (4.0, 5)])
def test_sharp_constant_against_mpmath(p, n):
    q = mp.mpf(p) / (p - 1)
    wn = mp.pi ** (mp.mpf(n) / 2) / mp.gamma(mp.mpf(n) / 2 + 1)
    ref = (mp.mpf(p) / n) * ((p - 1) / mp.e) ** (p - 1) * (wn * mp.gamma(n / q + 1)) ** (-mp.mpf(p) / n)
    assert sp.sharp_lsi_constant(p, n) == pytest.approx(float(ref), rel=1e-13)


@pytest.mark.parametrize("alpha,q", [(1.0, 2.0), (0.5, 1.5), (2.0, 1.25)])
def test_gaussian_integral_by_quadrature(alpha, q):
    one = 2.0 * integrate.quad(lambda r: math.exp(-alpha * r ** q), 0, np.inf)[0]
    two = 2.0 * math.pi * integrate.quad(lambda r: r * math.exp(-alpha * r ** q), 0, np.inf)[0]
    assert sp.gaussian_integral(alpha, 1, q) == pytest.approx(one, rel=1e-10)
    assert sp.gaussian_integral(alpha, 2, q) == pytest.approx(two, rel=1e-10)


def test_k_sequence_approaches_its_limit():
    assert sp.k_sequence(7, 3, 2.0) == pytest.approx(sp.k_limit(3, 2.0), rel=1e-14)
    for n, q in [(2, 1.25), (3, 1.5), (5, 4.0 / 3.0)]:
        lim = sp.k_limit(n, q)
        errs = [abs(sp.k_sequence(m, n, q) / lim - 1.0) for m in (10, 100, 1000, 10000)]
        assert errs == sorted(errs, reverse=True)
        assert errs[-1] < 1e-3


def test_k_sequence_against_mpmath():
    m, n, q = 3, 2, 1.5
    w = lambda k: mp.pi ** (mp.mpf(k) / 2) / mp.gamma(mp.mpf(k) / 2 + 1)
    s = m + n
    ref = (w(m) * mp.gamma(m / mp.mpf(q) + 1) / (w(s) * mp.gamma(s / mp.mpf(q) + 1))
           * (mp.mpf(m) ** m * mp.mpf(n) ** n / mp.mpf(s) ** s) ** (mp.mpf(1) / 2 - 1 / mp.mpf(q)))
    assert sp.k_sequence(m, n, q) == pytest.approx(float(ref), rel=1e-13)


def test_general_constants_at_p2():
    for n in (2, 3, 6):
        A, B = sp.general_constants(n, 2.0)
        assert A == pytest.approx(2.0 / (math.pi * math.e * n), rel=1e-14)
        assert B == pytest.approx(1.0 / (2.0 * math.e * math.pi * n), rel=1e-14)


def test_general_constants_domain():
    with pytest.raises(DomainError):
        sp.general_constants(1, 2.0)
    with pytest.raises(DomainError):
        sp.general_constants(3, 1.5)


def test_constant_chain_passes_and_collapses_at_p2():
    assert sp.constant_chain_check().passed
    for n in (2, 3, 6):
        for m in (1, 5, 20):
            assert sp.constant_chain_spread(n, m) < 1e-14


def test_digamma_root_against_mpmath():
    ref = mp.findroot(lambda x: mp.digamma(x) + x * mp.polygamma(1, x), 0.2)
    assert sp.digamma_root() == pytest.approx(float(ref), abs=1e-9)
    assert sp.psi_plus_x_trigamma(0.5) > 0


def test_monotonicity_scans_pass():
    assert sp.scan_gamma_ratio().passed
    assert sp.scan_gamma_dilation().passed


def test_parallelogram_is_identity_at_q2():
    rng = np.random.default_rng(1)
    v, w = rng.standard_normal((2, 100, 4))
    assert np.max(np.abs(sp.parallelogram_check(2.0, v, w))) < 1e-12


def test_parallelogram_scan_and_domain():
    assert sp.scan_parallelogram(20_000, seed=3).passed
    with pytest.raises(DomainError):
        sp.parallelogram_check(2.5, [1.0], [1.0])
    assert sp.parallelogram_check(1.5, [1.0, 0.0], [0.0, 0.0]) == pytest.approx(0.5, rel=1e-15)


def test_conjugate_exponent():
    assert sp.conjugate(2.0) == 2.0
    assert sp.conjugate(3.0) == pytest.approx(1.5)
    with pytest.raises(DomainError):
        sp.conjugate(1.0)
