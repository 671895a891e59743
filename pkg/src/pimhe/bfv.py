"""Textbook BFV over R_q = Z_q[x]/(x^n+1), evaluated on the host.

All host arithmetic is exact integer arithmetic (see
:func:`pimhe.polyring.negacyclic_convolve_int`); ciphertext components are
still stored as limb-encoded :class:`~pimhe.polyring.Polynomial` values so the
same objects feed the simulated PIM kernels.

Ciphertexts grow from two to three components after one multiplication and
are never relinearized, so the scheme supports multiplicative depth one.
"""
from __future__ import annotations

import functools
import hashlib
import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, DepthError, ParameterError
from .limbint import limbs_from_ints
from .polyring import Polynomial, RingParams, negacyclic_convolve_int

MAGIC = b"PIMHE1"
HEADER = struct.Struct("<6s8sH")

# Largest primes below 2**27, 2**54 and 2**109 with q = 1 (mod 2n).
PARAMETER_TABLE = {
    27: dict(n=1024, q=134215681, coeff_width=1, t=7),
    54: dict(n=2048, q=18014398509404161, coeff_width=2, t=257),
    109: dict(n=4096, q=649037107316853453566312040923137, coeff_width=4, t=257),
}
NOISE_BOUND = 6


@dataclass(frozen=True)
class HeParams:
    ring: RingParams
    t: int
    noise_bound: int = NOISE_BOUND
    security_label: Optional[int] = None

    def __post_init__(self):
        if not 2 <= self.t <= 1 << 16:
            raise ParameterError(f"plaintext modulus t={self.t} outside [2, 2**16]")
        if self.t >= self.ring.q:
            raise ParameterError("t must be smaller than q")
        if self.noise_bound < 0:
            raise ParameterError("noise bound must be non-negative")

    @property
    def n(self) -> int:
        return self.ring.n

    @property
    def q(self) -> int:
        return self.ring.q

    @property
    def delta(self) -> int:
        return self.ring.q // self.t

    def as_dict(self) -> dict:
        return {
            "n": self.ring.n,
            "q": str(self.ring.q),
            "coeff_width": self.ring.coeff_width,
            "t": self.t,
            "noise_bound": self.noise_bound,
            "security_label": self.security_label,
        }

    def digest(self) -> bytes:
        text = "{n}:{q}:{coeff_width}:{t}:{noise_bound}".format(**self.as_dict())
        return hashlib.sha256(text.encode()).digest()[:8]


def standard_params(security: int, t: Optional[int] = None) -> HeParams:
    """One of the three standard sets, keyed by coefficient bit budget."""
    try:
        row = PARAMETER_TABLE[security]
    except KeyError:
        raise ParameterError(f"unknown security label {security}; expected one of 27, 54, 109") from None
    ring = RingParams(row["n"], row["q"], row["coeff_width"])
    return HeParams(ring, row["t"] if t is None else t, NOISE_BOUND, security)


class Sampler:
    """Seeded, splittable randomness; each child is addressed by a name path."""

    def __init__(self, seed: int, path: tuple[str, ...] = ()):
        self.seed = int(seed) & ((1 << 64) - 1)
        self.path = path

    def child(self, name: str) -> "Sampler":
        return Sampler(self.seed, self.path + (name,))

    @property
    def lineage(self) -> str:
        return "/".join((str(self.seed),) + self.path)

    def rng(self) -> np.random.Generator:
        key = tuple(zlib.crc32(p.encode()) for p in self.path)
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))

    def ternary(self, n: int) -> np.ndarray:
        return self.rng().integers(-1, 2, size=n)

    def noise(self, n: int, bound: int) -> np.ndarray:
        return self.rng().integers(-bound, bound + 1, size=n)

    def uniform(self, n: int, q: int) -> np.ndarray:
        """Uniform residues in [0, q) by rejection on ``q.bit_length()``-bit draws."""
        rng = self.rng()
        if q < 1 << 62:
            return rng.integers(0, q, size=n).astype(object)
        bits = q.bit_length()
        limbs = (bits + 31) // 32
        out = np.zeros(n, dtype=object)
        todo = np.arange(n)
        while todo.size:
            raw = rng.integers(0, 1 << 32, size=(limbs, todo.size), dtype=np.uint64)
            vals = np.zeros(todo.size, dtype=object)
            for l in range(limbs - 1, -1, -1):
                vals = (vals << 32) + raw[l].astype(object)
            vals = vals & ((1 << bits) - 1)
            ok = vals < q
            out[todo[ok]] = vals[ok]
            todo = todo[~ok]
        return out


@dataclass(frozen=True, eq=False)
class Plaintext:
    params: HeParams
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.int64)
        if c.shape != (self.params.n,):
            raise ParameterError(f"plaintext must have {self.params.n} coefficients")
        if np.any(c < 0) or np.any(c >= self.params.t):
            raise ContractError("plaintext coefficient outside [0, t)")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Plaintext):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.coeffs, other.coeffs)


@dataclass(frozen=True)
class SecretKey:
    params: HeParams
    s: Polynomial
    lineage: str = field(default="", compare=False)

    @functools.cached_property
    def signed(self) -> np.ndarray:
        return _centered(self.s.to_object(), self.params.q)

    @functools.cached_property
    def squared(self) -> np.ndarray:
        return negacyclic_convolve_int(self.signed, self.signed)


@dataclass(frozen=True)
class PublicKey:
    params: HeParams
    p0: Polynomial
    p1: Polynomial
    lineage: str = field(default="", compare=False)


@dataclass(frozen=True, eq=False)
class Ciphertext:
    params: HeParams
    components: tuple[Polynomial, ...]
    mul_depth: int = 0
    lineage: str = field(default="", compare=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) < 2:
            raise ParameterError("a ciphertext needs at least two components")
        if any(c.ring != self.params.ring for c in comps):
            raise ParameterError("component ring differs from parameter ring")
        object.__setattr__(self, "components", comps)

    def __len__(self) -> int:
        return len(self.components)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Ciphertext):
            return NotImplemented
        return (self.params == other.params and self.mul_depth == other.mul_depth
                and self.components == other.components)


# ---------------------------------------------------------------------------
# host helpers

def _centered(vals: np.ndarray, q: int) -> np.ndarray:
    vals = np.asarray(vals, dtype=object) % q
    return np.where(vals > q // 2, vals - q, vals)


def _poly(params: HeParams, vals) -> Polynomial:
    return Polynomial(params.ring, limbs_from_ints(np.asarray(vals, dtype=object), params.ring.coeff_width))


def _mul_mod(a, b, q: int) -> np.ndarray:
    return negacyclic_convolve_int(a, b) % q


def _check_same(a: Ciphertext, b: Ciphertext) -> None:
    if a.params != b.params:
        raise ParameterError("ciphertexts use different parameters")


# ---------------------------------------------------------------------------
# scheme

def keygen(params: HeParams, seed: int) -> tuple[SecretKey, PublicKey]:
    root = Sampler(seed, ("keygen",))
    n, q = params.n, params.q
    s = root.child("s").ternary(n).astype(object)
    a = root.child("a").uniform(n, q)
    e = root.child("e").noise(n, params.noise_bound).astype(object)
    p0 = (-(negacyclic_convolve_int(a, s) + e)) % q
    sk = SecretKey(params, _poly(params, s % q), root.lineage)
    pk = PublicKey(params, _poly(params, p0), _poly(params, a), root.lineage)
    return sk, pk


def encrypt(pk: PublicKey, m: Plaintext, seed: int) -> Ciphertext:
    params = pk.params
    if m.params != params:
        raise ParameterError("plaintext uses different parameters")
    root = Sampler(seed, ("encrypt",))
    n, q = params.n, params.q
    u = root.child("u").ternary(n).astype(object)
    e1 = root.child("e1").noise(n, params.noise_bound).astype(object)
    e2 = root.child("e2").noise(n, params.noise_bound).astype(object)
    scaled = m.coeffs.astype(object) * params.delta
    c0 = (negacyclic_convolve_int(pk.p0.to_object(), u) + e1 + scaled) % q
    c1 = (negacyclic_convolve_int(pk.p1.to_object(), u) + e2) % q
    return Ciphertext(params, (_poly(params, c0), _poly(params, c1)), 0, root.lineage)


def _phase(sk: SecretKey, ct: Ciphertext) -> np.ndarray:
    """Sum of c_i * s**i in R_q, as residues."""
    params = ct.params
    if sk.params != params:
        raise ParameterError("key and ciphertext use different parameters")
    q = params.q
    acc = ct.components[0].to_object()
    power = None
    for i, c in enumerate(ct.components[1:], start=1):
        if i == 1:
            power = sk.signed
        elif i == 2:
            power = sk.squared
        else:
            power = negacyclic_convolve_int(power, sk.signed)
        acc = acc + negacyclic_convolve_int(c.to_object(), power)
    return acc % q


def _round_to_t(v: np.ndarray, q: int, t: int) -> np.ndarray:
    return ((2 * t * v + q) // (2 * q)) % t


def decrypt(sk: SecretKey, ct: Ciphertext) -> Plaintext:
    v = _phase(sk, ct)
    m = _round_to_t(v, ct.params.q, ct.params.t)
    return Plaintext(ct.params, np.array([int(x) for x in m], dtype=np.int64))


def noise_budget(sk: SecretKey, ct: Ciphertext) -> int:
    """Bits left before the worst coefficient's noise breaks decryption.

    Computed as ``floor(log2(q / (2*r*t)))`` with ``r`` the largest centered
    residual ``|phase - delta*m|``, clamped at zero.  A noiseless ciphertext
    is treated as ``r = 1``.
    """
    params = ct.params
    q, t = params.q, params.t
    v = _phase(sk, ct)
    m = _round_to_t(v, q, t)
    resid = _centered(v - params.delta * m, q)
    r = max(1, max(abs(int(x)) for x in resid))
    ratio = q // (2 * r * t)
    return max(0, ratio.bit_length() - 1) if ratio else 0


def he_add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Component-wise sum; the shorter ciphertext is zero-padded."""
    _check_same(a, b)
    q = a.params.q
    k = max(len(a), len(b))
    comps = []
    for i in range(k):
        if i < len(a) and i < len(b):
            comps.append(_poly(a.params, (a.components[i].to_object() + b.components[i].to_object()) % q))
        else:
            comps.append((a.components + b.components[len(a):])[i] if i >= len(b) else b.components[i])
    return Ciphertext(a.params, tuple(comps), max(a.mul_depth, b.mul_depth))


def check_mul_operands(a: Ciphertext, b: Ciphertext) -> None:
    _check_same(a, b)
    if len(a) != 2 or len(b) != 2 or a.mul_depth or b.mul_depth:
        raise DepthError("only fresh two-component ciphertexts can be multiplied (depth 1 maximum)")


def scale_round(d: np.ndarray, q: int, t: int) -> np.ndarray:
    """Map exact tensor coefficients to ``round(t*d/q) mod q``, ties away from zero."""
    d = np.asarray(d, dtype=object)
    mag = (2 * t * np.abs(d) + q) // (2 * q)
    return np.where(d < 0, (-mag) % q, mag % q)


def he_mul(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Tensor product with centered lifts, then scale by t/q and round."""
    check_mul_operands(a, b)
    params = a.params
    q, t = params.q, params.t
    a0, a1 = (_centered(c.to_object(), q) for c in a.components)
    b0, b1 = (_centered(c.to_object(), q) for c in b.components)
    d0 = negacyclic_convolve_int(a0, b0)
    d1 = negacyclic_convolve_int(a0, b1) + negacyclic_convolve_int(a1, b0)
    d2 = negacyclic_convolve_int(a1, b1)
    comps = tuple(_poly(params, scale_round(d, q, t)) for d in (d0, d1, d2))
    return Ciphertext(params, comps, 1)


def tensor_mod_q(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Raw polynomial tensor product of two ciphertexts in R_q (no rescaling).

    This is the plain "polynomial multiplication and addition" workload; its
    result is not a valid encryption of the product.
    """
    check_mul_operands(a, b)
    params = a.params
    q = params.q
    a0, a1 = (c.to_object() for c in a.components)
    b0, b1 = (c.to_object() for c in b.components)
    d0 = _mul_mod(a0, b0, q)
    d1 = (_mul_mod(a0, b1, q) + _mul_mod(a1, b0, q)) % q
    d2 = _mul_mod(a1, b1, q)
    return Ciphertext(params, tuple(_poly(params, d) for d in (d0, d1, d2)), 1)


def plaintext_polynomial(pt: Plaintext) -> Polynomial:
    """Embed a plaintext in R_q through its centered lift modulo t."""
    params = pt.params
    vals = pt.coeffs.astype(object)
    vals = np.where(vals > params.t // 2, vals - params.t, vals) % params.q
    return _poly(params, vals)


def he_mul_plain(ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    """Ciphertext times plaintext: every component multiplied in R_q."""
    if pt.params != ct.params:
        raise ParameterError("plaintext uses different parameters")
    q = ct.params.q
    w = plaintext_polynomial(pt).to_object()
    comps = tuple(_poly(ct.params, _mul_mod(c.to_object(), w, q)) for c in ct.components)
    return Ciphertext(ct.params, comps, ct.mul_depth)


# ---------------------------------------------------------------------------
# encoding

def encode_scalar(params: HeParams, v: int) -> Plaintext:
    if not 0 <= v < params.t:
        raise ContractError(f"value {v} outside [0, {params.t})")
    c = np.zeros(params.n, dtype=np.int64)
    c[0] = v
    return Plaintext(params, c)


def decode_scalar(pt: Plaintext) -> int:
    return int(pt.coeffs[0])


def encode_vector(params: HeParams, values: Sequence[int]) -> Plaintext:
    """Value i goes to coefficient i.  Sums are slot-wise, products are not."""
    vals = list(values)
    if len(vals) > params.n:
        raise ParameterError(f"{len(vals)} values exceed n={params.n} slots")
    c = np.zeros(params.n, dtype=np.int64)
    c[: len(vals)] = vals
    return Plaintext(params, c)


def decode_vector(pt: Plaintext, length: Optional[int] = None) -> list[int]:
    vals = [int(v) for v in pt.coeffs]
    return vals if length is None else vals[:length]


# ---------------------------------------------------------------------------
# serialization

def serialized_size(params: HeParams, components: int) -> int:
    return HEADER.size + components * (4 + 4 * params.n * params.ring.coeff_width)


def _dump(params: HeParams, polys: Sequence[Polynomial]) -> bytes:
    out = [HEADER.pack(MAGIC, params.digest(), len(polys))]
    for p in polys:
        body = p.coeffs.T.astype("<u4").tobytes()
        out.append(struct.pack("<I", len(body) // 4))
        out.append(body)
    return b"".join(out)


def _load(data: bytes, params: HeParams) -> list[Polynomial]:
    if len(data) < HEADER.size:
        raise ParameterError("truncated header")
    magic, digest, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParameterError("bad magic")
    if digest != params.digest():
        raise ParameterError("parameter hash does not match")
    w, n = params.ring.coeff_width, params.n
    off = HEADER.size
    polys = []
    for _ in range(count):
        if off + 4 > len(data):
            raise ParameterError("truncated component header")
        (length,) = struct.unpack_from("<I", data, off)
        off += 4
        if length != n * w:
            raise ParameterError(f"component has {length} limbs, expected {n * w}")
        if off + 4 * length > len(data):
            raise ParameterError("truncated component body")
        limbs = np.frombuffer(data, dtype="<u4", count=length, offset=off).reshape(n, w)
        off += 4 * length
        polys.append(Polynomial(params.ring, limbs.T.astype(np.uint64)))
    if off != len(data):
        raise ParameterError("trailing bytes after last component")
    return polys


def to_bytes(obj) -> bytes:
    if isinstance(obj, Ciphertext):
        return _dump(obj.params, obj.components)
    if isinstance(obj, PublicKey):
        return _dump(obj.params, (obj.p0, obj.p1))
    if isinstance(obj, SecretKey):
        return _dump(obj.params, (obj.s,))
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def ciphertext_from_bytes(data: bytes, params: HeParams) -> Ciphertext:
    polys = _load(data, params)
    return Ciphertext(params, tuple(polys), len(polys) - 2)


def public_key_from_bytes(data: bytes, params: HeParams) -> PublicKey:
    polys = _load(data, params)
    if len(polys) != 2:
        raise ParameterError("a public key has two components")
    return PublicKey(params, polys[0], polys[1])


def secret_key_from_bytes(data: bytes, params: HeParams) -> SecretKey:
    polys = _load(data, params)
    if len(polys) != 1:
        raise ParameterError("a secret key has one component")
    return SecretKey(params, polys[0])
