import numpy as np
import pytest
from hypothesis import given, strategies as st

from pimhe import polyring as pr
from pimhe.errors import ContractError, ParameterError
from pimhe.limbint import InstrCounter
from pimhe.polyring import Polynomial, RingParams

RINGS = [RingParams(4, 17, 1), RingParams(8, 97, 1), RingParams(16, 134215681, 1),
         RingParams(8, (1 << 60) - 93, 2), RingParams(4, (1 << 100) + 277, 4)]


def brute(a, b, q):
    n = len(a)
    c = [0] * n
    for i in range(n):
        for j in range(n):
            if i + j < n:
                c[i + j] += a[i] * b[j]
            else:
                c[i + j - n] -= a[i] * b[j]
    return [v % q for v in c]


@st.composite
def polys(draw, k=2):
    ring = draw(st.sampled_from(RINGS))
    vals = [draw(st.lists(st.integers(0, ring.q - 1), min_size=ring.n, max_size=ring.n)) for _ in range(k)]
    return ring, vals


def test_ring_validation():
    with pytest.raises(ParameterError):
        RingParams(12, 17, 1)
    with pytest.raises(ParameterError):
        RingParams(8, 1, 1)
    with pytest.raises(ParameterError):
        RingParams(8, 1 << 31, 1)
    assert RingParams(8, 97, 2).ext_width == 5


def test_polynomial_construction():
    ring = RingParams(8, 97, 1)
    p = Polynomial.from_ints(ring, [1, 2, 3])
    assert p.to_ints() == [1, 2, 3, 0, 0, 0, 0, 0]
    assert Polynomial.from_ints(ring, [100, -1], reduce=True).to_ints()[:2] == [3, 96]
    assert Polynomial.monomial(ring, 3, 5).to_ints()[3] == 5
    assert Polynomial.constant(ring, 9) == Polynomial.from_ints(ring, [9])
    with pytest.raises(ContractError):
        Polynomial.from_ints(ring, [97])
    with pytest.raises(ParameterError):
        Polynomial.from_ints(ring, [0] * 9)
    with pytest.raises(ValueError):
        p.coeffs[0, 0] = 5


@given(polys(2))
def test_add_sub_negate(case):
    ring, (a, b) = case
    P, R = Polynomial.from_ints(ring, a), Polynomial.from_ints(ring, b)
    assert pr.poly_add(P, R).to_ints() == [(x + y) % ring.q for x, y in zip(a, b)]
    assert pr.poly_sub(P, R).to_ints() == [(x - y) % ring.q for x, y in zip(a, b)]
    assert pr.poly_add(P, pr.poly_negate(P)) == Polynomial.zero(ring)
    assert pr.poly_add(pr.poly_sub(P, R), R) == P


@given(polys(2))
def test_negacyclic_mul_matches_brute_force(case):
    ring, (a, b) = case
    P, R = Polynomial.from_ints(ring, a), Polynomial.from_ints(ring, b)
    assert pr.poly_negacyclic_mul(P, R).to_ints() == brute(a, b, ring.q)
    assert list(pr.mulmod_int(a, b, ring.q)) == brute(a, b, ring.q)


@given(polys(3))
def test_ring_laws(case):
    ring, (a, b, c) = case
    A, B, C = (Polynomial.from_ints(ring, v) for v in (a, b, c))
    mul, add = pr.poly_negacyclic_mul, pr.poly_add
    assert mul(A, B) == mul(B, A)
    assert mul(A, add(B, C)) == add(mul(A, B), mul(A, C))


@pytest.mark.parametrize("ring", RINGS[:3], ids=str)
def test_x_to_the_n_is_minus_one(ring):
    half = Polynomial.monomial(ring, ring.n // 2)
    assert pr.poly_negacyclic_mul(half, half) == Polynomial.constant(ring, ring.q - 1)


@given(polys(1), st.integers(0, 2 ** 40))
def test_scalar_mul(case, s):
    ring, (a,) = case
    s %= ring.q
    out = pr.poly_scalar_mul(Polynomial.from_ints(ring, a), s)
    assert out.to_ints() == [v * s % ring.q for v in a]


def test_scalar_contract():
    ring = RingParams(4, 17, 1)
    with pytest.raises(ContractError):
        pr.poly_scalar_mul(Polynomial.zero(ring), 17)


def test_mixed_rings_rejected():
    with pytest.raises(ParameterError):
        pr.poly_add(Polynomial.zero(RINGS[0]), Polynomial.zero(RINGS[1]))


@given(st.integers(1, 6).flatmap(lambda k: st.tuples(
    st.lists(st.integers(-(1 << 120), 1 << 120), min_size=2 ** k, max_size=2 ** k),
    st.lists(st.integers(-(1 << 70), 1 << 70), min_size=2 ** k, max_size=2 ** k))))
def test_kronecker_route_is_exact_for_signed_inputs(case):
    a, b = case
    n = len(a)
    expect = [0] * n
    for i in range(n):
        for j in range(n):
            k = i + j
            expect[k % n] += a[i] * b[j] * (1 if k < n else -1)
    assert list(pr.negacyclic_convolve_int(np.array(a, dtype=object), np.array(b, dtype=object))) == expect


@given(polys(2))
def test_signed_limb_convolution_matches_host(case):
    ring, (a, b) = case
    A = np.array(a, dtype=object)
    B = np.array(b, dtype=object)
    ca = np.where(A > ring.q // 2, A - ring.q, A)
    cb = np.where(B > ring.q // 2, B - ring.q, B)
    ma, na = pr.center(Polynomial.from_ints(ring, a).coeffs, ring)
    mb, nb = pr.center(Polynomial.from_ints(ring, b).coeffs, ring)
    acc = pr.negacyclic_convolve(ma, mb, ring.ext_width, None, na, nb)
    width = 32 * ring.ext_width
    got = [v - (1 << width) if v >> (width - 1) else v for v in pr.li.limbs_to_ints(acc)]
    assert got == list(pr.negacyclic_convolve_int(ca, cb))


def test_mul_counts_frozen():
    # n**2 single-limb products, then per coefficient a 3->1 limb Barrett
    # reduction made of two 3-limb Karatsuba products (9 multiplies each)
    ring = RingParams(16, 97, 1)
    c = InstrCounter()
    pr.poly_negacyclic_mul(Polynomial.from_ints(ring, [1] * 16), Polynomial.from_ints(ring, [2] * 16), c)
    assert c.muls32 == 16 * 16 + 18 * 16
