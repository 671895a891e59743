"""The quotient ring Z_q[x]/(x^n + 1) over limb-encoded coefficients.

Two multiplication routes live here and are kept independent on purpose:

* the limb route (:func:`negacyclic_convolve`, :func:`poly_negacyclic_mul`)
  is the schoolbook double loop a PIM core runs, built from the counted
  primitives in :mod:`pimhe.limbint`;
* the host route (:func:`negacyclic_convolve_int`) packs whole polynomials
  into big integers (Kronecker substitution) and multiplies them with GMP.

The host route backs the BFV reference; the limb route backs the simulated
kernels.  Agreement between them is what the simulator tests check.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional, Sequence

import gmpy2
import numpy as np

from . import limbint as li
from .errors import ContractError, ParameterError
from .limbint import InstrCounter, WideInt

# Lanes processed per numpy call in the schoolbook loop; bounds peak memory.
_CHUNK_LANES = 1 << 20


@dataclass(frozen=True)
class RingParams:
    n: int
    q: int
    coeff_width: int

    def __post_init__(self):
        if self.n < 1 or self.n & (self.n - 1):
            raise ParameterError(f"n={self.n} is not a power of two")
        if self.coeff_width < 1:
            raise ParameterError("coeff_width must be positive")
        if not 2 <= self.q < 1 << (li.LIMB_BITS * self.coeff_width - 1):
            # one bit of headroom keeps a + b < 2**(32w) for residues
            raise ParameterError(f"q={self.q} does not fit {self.coeff_width} limbs with headroom")

    @property
    def ext_width(self) -> int:
        """Limbs of a signed accumulator holding n products of centered residues."""
        return 2 * self.coeff_width + 1

    @property
    def q_wide(self) -> WideInt:
        return WideInt.from_int(self.q, self.coeff_width)

    def q_limbs(self, ndim: int = 1) -> np.ndarray:
        return li._const(self.q, self.coeff_width, ndim)

    def half_limbs(self, ndim: int = 1) -> np.ndarray:
        return li._const(self.q // 2, self.coeff_width, ndim)


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Immutable element of R_q; ``coeffs`` has shape ``(coeff_width, n)``."""

    ring: RingParams
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(self.coeffs, dtype=np.uint64)
        if c.shape != (self.ring.coeff_width, self.ring.n):
            raise ParameterError(f"coefficient array has shape {c.shape}")
        _, below = li.sub_limbs(c, self.ring.q_limbs())
        if not np.all(below):
            raise ContractError("coefficient not reduced modulo q")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_ints(cls, ring: RingParams, values: Sequence[int], reduce: bool = False) -> "Polynomial":
        vals = list(values)
        if len(vals) > ring.n:
            raise ParameterError(f"{len(vals)} coefficients for n={ring.n}")
        vals += [0] * (ring.n - len(vals))
        if reduce:
            vals = [v % ring.q for v in vals]
        return cls(ring, li.limbs_from_ints(vals, ring.coeff_width))

    @classmethod
    def zero(cls, ring: RingParams) -> "Polynomial":
        return cls(ring, np.zeros((ring.coeff_width, ring.n), dtype=np.uint64))

    @classmethod
    def constant(cls, ring: RingParams, value: int) -> "Polynomial":
        return cls.from_ints(ring, [value % ring.q])

    @classmethod
    def monomial(cls, ring: RingParams, degree: int, value: int = 1) -> "Polynomial":
        vals = [0] * ring.n
        vals[degree] = value % ring.q
        return cls.from_ints(ring, vals)

    def to_ints(self) -> list[int]:
        return [int(v) for v in li.limbs_to_ints(self.coeffs)]

    def to_object(self) -> np.ndarray:
        return li.limbs_to_ints(self.coeffs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.ring == other.ring and np.array_equal(self.coeffs, other.coeffs)

    def __repr__(self) -> str:
        head = self.to_ints()[:4]
        return f"Polynomial(n={self.ring.n}, q={self.ring.q}, coeffs={head}...)"


def _same_ring(p: Polynomial, r: Polynomial) -> None:
    if p.ring != r.ring:
        raise ParameterError("polynomials belong to different rings")


# ---------------------------------------------------------------------------
# limb route: coefficient-wise operations

def add_mod(a: np.ndarray, b: np.ndarray, ring: RingParams,
            counter: Optional[InstrCounter] = None) -> np.ndarray:
    return li.mod_add_limbs(a, b, ring.q_limbs(a.ndim - 1), counter)


def sub_mod(a: np.ndarray, b: np.ndarray, ring: RingParams,
            counter: Optional[InstrCounter] = None) -> np.ndarray:
    return li.mod_sub_limbs(a, b, ring.q_limbs(a.ndim - 1), counter)


def center(a: np.ndarray, ring: RingParams, counter: Optional[InstrCounter] = None):
    """Sign-magnitude form of the centered lift of residues: ``c`` or ``c - q``."""
    nd = a.ndim - 1
    _, neg = li.sub_limbs(ring.half_limbs(nd), a, counter)
    flipped, _ = li.sub_limbs(ring.q_limbs(nd), a, counter)
    return li.select_limbs(neg, flipped, a, counter), neg


def signed_to_residue(acc: np.ndarray, ring: RingParams,
                      counter: Optional[InstrCounter] = None) -> np.ndarray:
    """Reduce a two's-complement accumulator to a residue in [0, q)."""
    sign = li.is_negative(acc)
    mag = li.negate_if(acc, sign, counter)
    r = li.barrett(ring.q, acc.shape[0], ring.coeff_width).reduce(mag, counter)
    neg_r = sub_mod(np.zeros_like(r), r, ring, counter)
    return li.select_limbs(sign, neg_r, r, counter)


@functools.lru_cache(maxsize=8)
def _skew(n: int) -> tuple[np.ndarray, np.ndarray]:
    i = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    return (k - i) % n, k < i


def _normalize(cols: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros((width,) + cols.shape[1:], dtype=np.uint64)
    carry = np.zeros(cols.shape[1:], dtype=np.uint64)
    for l in range(width):
        v = carry + (cols[l] if l < cols.shape[0] else 0)
        out[l] = v & li._MASK
        carry = v >> li._SHIFT
    if np.any(carry):
        raise ParameterError(f"accumulator overflows {width} limbs")
    return out


def negacyclic_convolve(a: np.ndarray, b: np.ndarray, out_width: int,
                        counter: Optional[InstrCounter] = None,
                        a_neg: Optional[np.ndarray] = None,
                        b_neg: Optional[np.ndarray] = None) -> np.ndarray:
    """Exact negacyclic product over the integers, schoolbook order.

    ``a`` and ``b`` are magnitudes of shape ``(w, n)``; optional sign vectors
    make them signed.  Output coefficient ``k`` collects ``a_i * b_j`` for
    ``i + j = k`` added and ``i + j = k + n`` subtracted, returned as
    ``out_width`` two's-complement limbs.

    Each of the n**2 products is charged as one multi-limb multiply plus an
    ``out_width``-limb accumulate.  The simulator itself sums limb columns
    with delayed carries, which yields the same integers.
    """
    w, n = a.shape
    if b.shape != (w, n):
        raise ParameterError(f"operand shapes differ: {a.shape} vs {b.shape}")
    signed = a_neg is not None
    idx, wrap = _skew(n)
    pos = np.zeros((2 * w, n), dtype=np.uint64)
    negs = np.zeros((2 * w, n), dtype=np.uint64)
    rows = max(1, _CHUNK_LANES // n)
    for start in range(0, n, rows):
        sl = slice(start, min(n, start + rows))
        ii = idx[sl]
        B = b[:, ii]
        A = np.broadcast_to(a[:, sl, None], B.shape)
        prod = li.karatsuba_limbs(A, B, counter)
        sign = wrap[sl]
        if signed:
            sign = sign ^ a_neg[sl, None].astype(bool) ^ b_neg[ii].astype(bool)
        s = sign.astype(np.uint64)
        for l in range(2 * w):
            total = prod[l].sum(axis=0)
            m = (prod[l] * s).sum(axis=0)
            pos[l] += total - m
            negs[l] += m
    if counter is not None:
        counter.charge(n * n, adds=2 if signed else 1, addcs=out_width - 1)
    diff, _ = li.sub_limbs(_normalize(pos, out_width), _normalize(negs, out_width))
    return diff


def mulmod_negacyclic(a: np.ndarray, b: np.ndarray, ring: RingParams,
                      counter: Optional[InstrCounter] = None) -> np.ndarray:
    acc = negacyclic_convolve(a, b, ring.ext_width, counter)
    return signed_to_residue(acc, ring, counter)


# ---------------------------------------------------------------------------
# Polynomial API

def poly_add(p: Polynomial, r: Polynomial, counter: Optional[InstrCounter] = None) -> Polynomial:
    _same_ring(p, r)
    return Polynomial(p.ring, add_mod(p.coeffs, r.coeffs, p.ring, counter))


def poly_sub(p: Polynomial, r: Polynomial, counter: Optional[InstrCounter] = None) -> Polynomial:
    _same_ring(p, r)
    return Polynomial(p.ring, sub_mod(p.coeffs, r.coeffs, p.ring, counter))


def poly_negate(p: Polynomial, counter: Optional[InstrCounter] = None) -> Polynomial:
    return Polynomial(p.ring, sub_mod(np.zeros_like(p.coeffs), p.coeffs, p.ring, counter))


def poly_scalar_mul(p: Polynomial, s, counter: Optional[InstrCounter] = None) -> Polynomial:
    s = int(s)
    if not 0 <= s < p.ring.q:
        raise ContractError(f"scalar {s} is not reduced modulo q")
    ring = p.ring
    sv = np.broadcast_to(li._const(s, ring.coeff_width, 1), p.coeffs.shape)
    return Polynomial(ring, li.mod_mul_limbs(p.coeffs, sv, ring.q, counter))


def poly_negacyclic_mul(p: Polynomial, r: Polynomial,
                        counter: Optional[InstrCounter] = None) -> Polynomial:
    _same_ring(p, r)
    return Polynomial(p.ring, mulmod_negacyclic(p.coeffs, r.coeffs, p.ring, counter))


# ---------------------------------------------------------------------------
# host route

def _magnitude_bytes(values: np.ndarray, kb: int) -> tuple[np.ndarray, np.ndarray]:
    """Little-endian ``kb``-byte rows of ``|v|`` and the sign mask."""
    n = values.shape[0]
    if values.dtype != object:
        v = values.astype(np.int64)
        neg = v < 0
        rows = np.abs(v).astype("<u8").view(np.uint8).reshape(n, 8)
    else:
        neg = values < 0
        mag = np.where(neg, -values, values)
        words = []
        for _ in range(-(-kb // 8)):
            words.append((mag & 0xFFFFFFFFFFFFFFFF).astype(np.uint64))
            mag = mag >> 64
        rows = np.stack(words, axis=1).astype("<u8").view(np.uint8).reshape(n, -1)
    out = np.zeros((n, kb), dtype=np.uint8)
    m = min(kb, rows.shape[1])
    out[:, :m] = rows[:, :m]
    return out, neg.astype(bool)


def _pack(values: np.ndarray, kb: int) -> gmpy2.mpz:
    rows, neg = _magnitude_bytes(values, kb)
    pos = np.where(neg[:, None], 0, rows).tobytes()
    negs = np.where(neg[:, None], rows, 0).tobytes()
    return gmpy2.mpz(int.from_bytes(pos, "little")) - gmpy2.mpz(int.from_bytes(negs, "little"))


def _unpack(raw: bytes, slots: int, kb: int) -> np.ndarray:
    """Split ``slots`` biased ``kb``-byte fields and remove the bias."""
    k = 8 * kb
    words = -(-kb // 8)
    grid = np.zeros((slots, 8 * words), dtype=np.uint8)
    grid[:, :kb] = np.frombuffer(raw, dtype=np.uint8).reshape(slots, kb)
    limbs = grid.view("<u8").reshape(slots, words)
    if words == 1:
        # subtracting the bias wraps into two's complement
        return (limbs[:, 0] - np.uint64(1 << (k - 1))).view(np.int64).astype(object)
    acc = limbs[:, -1].astype(object)
    for i in range(words - 2, -1, -1):
        acc = (acc << 64) | limbs[:, i].astype(object)
    return acc - (1 << (k - 1))


@functools.lru_cache(maxsize=32)
def _bias(slots: int, k: int) -> int:
    return int.from_bytes((1 << (k - 1)).to_bytes(k // 8, "little") * slots, "little")


def negacyclic_convolve_int(a: Sequence[int], b: Sequence[int]) -> np.ndarray:
    """Exact negacyclic product of signed integer vectors via one big multiply.

    Each vector is packed into one integer with ``kb``-byte slots wide
    enough for any product coefficient; a per-slot bias keeps the unpacked
    fields non-negative.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    n = a.shape[0]
    if b.shape[0] != n:
        raise ParameterError("operand lengths differ")
    ma = int(np.abs(a).max()) if n else 0
    mb = int(np.abs(b).max()) if n else 0
    if ma == 0 or mb == 0:
        return np.zeros(n, dtype=object)
    bound = n * ma * mb
    kb = (bound.bit_length() + 2 + 7) // 8
    k = 8 * kb
    prod = int(_pack(a, kb) * _pack(b, kb)) + _bias(2 * n, k)
    c = _unpack(prod.to_bytes(2 * n * kb, "little"), 2 * n, kb)
    return c[:n] - c[n:]


def mulmod_int(a: Sequence[int], b: Sequence[int], q: int) -> np.ndarray:
    return negacyclic_convolve_int(a, b) % q
