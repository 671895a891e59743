from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from pimhe import bfv
from pimhe.bfv import Ciphertext, HeParams, Sampler
from pimhe.errors import ContractError, DepthError, ParameterError
from pimhe.polyring import Polynomial, RingParams


def largest_ntt_prime(bits, n):
    k = ((1 << bits) - 2) // (2 * n)
    while not sympy.isprime(k * 2 * n + 1):
        k -= 1
    return k * 2 * n + 1


@pytest.mark.parametrize("label", [27, 54, 109])
def test_standard_moduli_recomputed(label):
    row = bfv.PARAMETER_TABLE[label]
    assert row["q"] == largest_ntt_prime(label, row["n"])
    assert row["q"].bit_length() == label
    assert row["q"] < 1 << (32 * row["coeff_width"] - 1)


def test_standard_params():
    assert bfv.standard_params(27).t == 7
    assert bfv.standard_params(109).t == 257
    assert bfv.standard_params(54, t=65537 - 1).t == 65536
    assert bfv.standard_params(109).delta == bfv.PARAMETER_TABLE[109]["q"] // 257
    with pytest.raises(ParameterError):
        bfv.standard_params(64)
    with pytest.raises(ParameterError):
        bfv.standard_params(27, t=1)
    with pytest.raises(ParameterError):
        bfv.standard_params(27, t=(1 << 16) + 1)


def test_sampler_is_deterministic_and_split():
    s = Sampler(5, ("a",))
    assert np.array_equal(s.ternary(64), Sampler(5, ("a",)).ternary(64))
    assert not np.array_equal(s.child("x").ternary(64), s.child("y").ternary(64))
    assert s.child("x").lineage == "5/a/x"
    assert set(np.unique(s.ternary(500))) == {-1, 0, 1}
    e = s.noise(2000, 6)
    assert e.min() == -6 and e.max() == 6


@pytest.mark.parametrize("q", [97, (1 << 62) + 135, (1 << 109) - 1])
def test_uniform_residues_in_range(q):
    u = Sampler(1).uniform(4096, q)
    assert all(0 <= int(v) < q for v in u)
    assert max(int(v) for v in u) > q // 2


def test_keygen_deterministic(small_params):
    sk1, pk1 = bfv.keygen(small_params, 3)
    sk2, pk2 = bfv.keygen(small_params, 3)
    _, pk3 = bfv.keygen(small_params, 4)
    assert pk1 == pk2 and sk1 == sk2
    assert pk1 != pk3
    assert set(int(v) for v in sk1.signed) <= {-1, 0, 1}


def vec(params):
    return st.lists(st.integers(0, params.t - 1), min_size=params.n, max_size=params.n)


SMALL = HeParams(RingParams(16, bfv.PARAMETER_TABLE[27]["q"], 1), 7)


@given(vec(SMALL), st.integers(0, 2 ** 32))
def test_roundtrip(small_keys, values, seed):
    sk, pk = small_keys
    pt = bfv.encode_vector(SMALL, values)
    ct = bfv.encrypt(pk, pt, seed)
    assert bfv.decrypt(sk, ct) == pt
    assert bfv.noise_budget(sk, ct) > 0


@given(vec(SMALL), vec(SMALL))
def test_additive_homomorphism(small_keys, a, b):
    sk, pk = small_keys
    ca = bfv.encrypt(pk, bfv.encode_vector(SMALL, a), 1)
    cb = bfv.encrypt(pk, bfv.encode_vector(SMALL, b), 2)
    got = bfv.decode_vector(bfv.decrypt(sk, bfv.he_add(ca, cb)))
    assert got == [(x + y) % SMALL.t for x, y in zip(a, b)]


@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 1000))
def test_multiplicative_homomorphism(small_keys, a, b, seed):
    sk, pk = small_keys
    ca = bfv.encrypt(pk, bfv.encode_scalar(SMALL, a), seed)
    cb = bfv.encrypt(pk, bfv.encode_scalar(SMALL, b), seed + 1)
    prod = bfv.he_mul(ca, cb)
    assert len(prod) == 3 and prod.mul_depth == 1
    assert bfv.decode_scalar(bfv.decrypt(sk, prod)) == a * b % 7
    assert bfv.noise_budget(sk, prod) > 0


def test_depth_limit(small_keys):
    sk, pk = small_keys
    c = bfv.encrypt(pk, bfv.encode_scalar(SMALL, 2), 0)
    p = bfv.he_mul(c, c)
    with pytest.raises(DepthError):
        bfv.he_mul(p, c)
    mixed = bfv.he_add(p, c)
    assert len(mixed) == 3
    assert bfv.decode_scalar(bfv.decrypt(sk, mixed)) == 6


@given(vec(SMALL), st.integers(0, 6))
def test_plaintext_multiplication(small_keys, values, k):
    sk, pk = small_keys
    ct = bfv.encrypt(pk, bfv.encode_vector(SMALL, values), 9)
    out = bfv.he_mul_plain(ct, bfv.encode_scalar(SMALL, k))
    assert bfv.decode_vector(bfv.decrypt(sk, out)) == [v * k % 7 for v in values]


def test_noise_budget_of_noiseless_ciphertext():
    # phase equals delta*m exactly, so r clamps to 1:
    # floor(log2(134215681 / 14)) = floor(log2(9586834.36)) = 23
    params = bfv.standard_params(27)
    sk, _ = bfv.keygen(params, 0)
    c0 = Polynomial.constant(params.ring, 3 * params.delta)
    ct = Ciphertext(params, (c0, Polynomial.zero(params.ring)))
    assert bfv.decode_scalar(bfv.decrypt(sk, ct)) == 3
    assert bfv.noise_budget(sk, ct) == 23


def test_noise_budget_clamps_at_zero(small_keys):
    sk, _ = small_keys
    rng = np.random.default_rng(0)
    junk = [Polynomial.from_ints(SMALL.ring, [int(v) for v in rng.integers(0, SMALL.q, 16)]) for _ in range(2)]
    assert bfv.noise_budget(sk, Ciphertext(SMALL, tuple(junk))) == 0


def test_noise_budget_shrinks_under_operations(keys27):
    params, sk, pk = keys27
    c = bfv.encrypt(pk, bfv.encode_scalar(params, 3), 5)
    fresh = bfv.noise_budget(sk, c)
    acc = c
    for i in range(8):
        acc = bfv.he_add(acc, bfv.encrypt(pk, bfv.encode_scalar(params, 0), 100 + i))
    assert bfv.noise_budget(sk, acc) <= fresh
    assert bfv.noise_budget(sk, bfv.he_mul(c, c)) < fresh


@given(st.integers(-(1 << 80), 1 << 80))
def test_scale_round_is_symmetric_rounding(d):
    q, t = 134215681, 7
    exact = Fraction(t * d, q)
    mag = int(abs(exact) + Fraction(1, 2))
    expect = (mag if d >= 0 else -mag) % q
    assert int(bfv.scale_round(np.array([d], dtype=object), q, t)[0]) == expect


def test_tensor_mod_q_is_raw_product(small_keys):
    sk, pk = small_keys
    a = bfv.encrypt(pk, bfv.encode_scalar(SMALL, 2), 1)
    b = bfv.encrypt(pk, bfv.encode_scalar(SMALL, 3), 2)
    raw = bfv.tensor_mod_q(a, b)
    q = SMALL.q
    d1 = (bfv._mul_mod(a.components[0].to_object(), b.components[1].to_object(), q)
          + bfv._mul_mod(a.components[1].to_object(), b.components[0].to_object(), q)) % q
    assert raw.components[1].to_ints() == [int(v) for v in d1]


def test_encoding_contracts():
    with pytest.raises(ContractError):
        bfv.encode_scalar(SMALL, 7)
    with pytest.raises(ParameterError):
        bfv.encode_vector(SMALL, [0] * 17)
    assert bfv.decode_vector(bfv.encode_vector(SMALL, [1, 2]), 3) == [1, 2, 0]


def test_mixed_parameters_rejected(small_keys):
    _, pk = small_keys
    other = bfv.standard_params(27)
    with pytest.raises(ParameterError):
        bfv.encrypt(pk, bfv.encode_scalar(other, 1), 0)
    c = bfv.encrypt(pk, bfv.encode_scalar(SMALL, 1), 0)
    _, pk2 = bfv.keygen(HeParams(SMALL.ring, 5), 0)
    with pytest.raises(ParameterError):
        bfv.he_add(c, bfv.encrypt(pk2, bfv.encode_scalar(pk2.params, 1), 0))


def test_serialization(small_keys):
    sk, pk = small_keys
    c = bfv.encrypt(pk, bfv.encode_scalar(SMALL, 4), 0)
    p = bfv.he_mul(c, c)
    for ct in (c, p):
        data = bfv.to_bytes(ct)
        assert data[:6] == b"PIMHE1"
        assert len(data) == bfv.serialized_size(SMALL, len(ct)) == 16 + len(ct) * (4 + 4 * 16)
        assert bfv.ciphertext_from_bytes(data, SMALL) == ct
    assert bfv.public_key_from_bytes(bfv.to_bytes(pk), SMALL) == pk
    assert bfv.secret_key_from_bytes(bfv.to_bytes(sk), SMALL).s == sk.s
    data = bfv.to_bytes(c)
    with pytest.raises(ParameterError, match="hash"):
        bfv.ciphertext_from_bytes(data, HeParams(SMALL.ring, 5))
    with pytest.raises(ParameterError):
        bfv.ciphertext_from_bytes(data[:-4], SMALL)
    with pytest.raises(ParameterError):
        bfv.ciphertext_from_bytes(b"XXXXXX" + data[6:], SMALL)


def test_serialization_is_coefficient_major():
    params = HeParams(RingParams(4, (1 << 60) - 93, 2), 7)
    p = Polynomial.from_ints(params.ring, [1 | (2 << 32), 3, 0, 0])
    data = bfv.to_bytes(Ciphertext(params, (p, p)))
    body = np.frombuffer(data, dtype="<u4", offset=20, count=8)
    assert list(body[:4]) == [1, 2, 3, 0]
