"""Fixed-width multi-limb integers built only from 32-bit device primitives.

Every value is a stack of little-endian 32-bit limbs held in ``uint64`` numpy
arrays with shape ``(width, *lanes)``.  The leading axis is the limb index and
the remaining axes are independent lanes, so one call processes a whole batch
of coefficients exactly the way a PIM core would process them one after the
other.  Each routine charges an :class:`InstrCounter` with the instructions a
device without a hardware multiplier would retire, multiplied by the lane
count.  The counts never depend on the data (all selects are branch-free), so
they can be reproduced in closed form.

The scalar :class:`WideInt` API is a thin wrapper around the same engine with
a single lane.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, fields
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError, ParameterError

LIMB_BITS = 32
LIMB_MASK = 0xFFFFFFFF
_MASK = np.uint64(LIMB_MASK)
_SHIFT = np.uint64(LIMB_BITS)

# Default charge for one 32x32->64 multiply done with the compiler's
# shift-and-add loop: 32 iterations of test-bit, conditional add, shift.
SHIFT_ADD_CYCLES = 96


@dataclass
class InstrCounter:
    """Retired-instruction tally by instruction class.

    ``adds`` covers every single-cycle ALU operation that is not a carry-chain
    continuation: add, sub, xor, compare and select.  ``addcs`` covers
    add-with-carry and sub-with-borrow.  ``muls32`` counts 32-bit multiply
    invocations; their cycle cost is set by the cost table, not here.
    """

    adds: int = 0
    addcs: int = 0
    muls32: int = 0
    loads: int = 0
    stores: int = 0
    loop_overhead: int = 0

    def charge(self, lanes: int = 1, **counts: int) -> None:
        for name, value in counts.items():
            setattr(self, name, getattr(self, name) + value * lanes)

    def __add__(self, other: "InstrCounter") -> "InstrCounter":
        return InstrCounter(**{f: getattr(self, f) + getattr(other, f) for f in self.field_names()})

    def __iadd__(self, other: "InstrCounter") -> "InstrCounter":
        for f in self.field_names():
            setattr(self, f, getattr(self, f) + getattr(other, f))
        return self

    def scaled(self, k: int) -> "InstrCounter":
        return InstrCounter(**{f: getattr(self, f) * k for f in self.field_names()})

    def divided(self, k: int) -> "InstrCounter":
        """Exact per-item share of a batch tally; raises if not divisible."""
        out = {}
        for f in self.field_names():
            v = getattr(self, f)
            if v % k:
                raise ValueError(f"{f}={v} is not divisible by {k}")
            out[f] = v // k
        return InstrCounter(**out)

    def weighted(self, cost_table: dict) -> int:
        """Total cycles when every class is charged at its table cost."""
        return (
            self.adds * cost_table["add"]
            + self.addcs * cost_table["addc"]
            + self.muls32 * cost_table["mul32"]
            + self.loads * cost_table["load"]
            + self.stores * cost_table["store"]
            + self.loop_overhead * cost_table["loop_overhead"]
        )

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.field_names()}

    @staticmethod
    def field_names() -> tuple[str, ...]:
        return tuple(f.name for f in fields(InstrCounter))


def _charge(counter: Optional[InstrCounter], lanes: int, **counts: int) -> None:
    if counter is not None:
        counter.charge(lanes, **counts)


def _lanes(shape: Sequence[int]) -> int:
    return int(np.prod(shape[1:], dtype=np.int64))


# ---------------------------------------------------------------------------
# conversions

def limbs_from_ints(values: Iterable[int], width: int) -> np.ndarray:
    """Pack non-negative Python ints into a ``(width, len)`` limb array."""
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=object)
    out = np.empty((width,) + arr.shape, dtype=np.uint64)
    if arr.size and np.any(arr < 0):
        raise ParameterError("negative value cannot be stored in limbs")
    rest = arr
    for l in range(width):
        out[l] = (rest & LIMB_MASK).astype(np.uint64)
        rest = rest >> LIMB_BITS
    if arr.size and np.any(rest != 0):
        raise ParameterError(f"value does not fit in {width} limbs")
    return out


def limbs_to_ints(limbs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`limbs_from_ints`; returns an object array of ints."""
    acc = np.zeros(limbs.shape[1:], dtype=object)
    for l in range(limbs.shape[0] - 1, -1, -1):
        acc = (acc << LIMB_BITS) + limbs[l].astype(object)
    return acc


def extend(x: np.ndarray, width: int) -> np.ndarray:
    """Zero-extend (or truncate) a limb stack to ``width`` limbs."""
    w = x.shape[0]
    if w == width:
        return x
    if w > width:
        return x[:width]
    pad = np.zeros((width - w,) + x.shape[1:], dtype=np.uint64)
    return np.concatenate([x, pad], axis=0)


def _const(value: int, width: int, ndim: int) -> np.ndarray:
    """A constant limb stack shaped to broadcast against ``ndim``-lane data."""
    return limbs_from_ints([value], width).reshape((width,) + (1,) * ndim)


# ---------------------------------------------------------------------------
# carry chains

def add_limbs(a: np.ndarray, b: np.ndarray, counter: Optional[InstrCounter] = None,
              cin=None) -> tuple[np.ndarray, np.ndarray]:
    """Ripple-carry addition: one ``add`` then ``addc`` per remaining limb.

    With ``cin`` the first limb is also an ``addc``.  Returns the sum modulo
    ``2**(32*width)`` and the final carry (0/1 per lane).
    """
    w = a.shape[0]
    if b.shape[0] != w:
        raise ParameterError(f"width mismatch: {w} vs {b.shape[0]}")
    shape = np.broadcast_shapes(a.shape, b.shape)
    out = np.empty(shape, dtype=np.uint64)
    carry = np.uint64(0) if cin is None else cin
    for l in range(w):
        s = a[l] + b[l] + carry
        out[l] = s & _MASK
        carry = s >> _SHIFT
    if cin is None:
        _charge(counter, _lanes(shape), adds=1, addcs=w - 1)
    else:
        _charge(counter, _lanes(shape), addcs=w)
    return out, np.broadcast_to(carry, shape[1:])


def sub_limbs(a: np.ndarray, b: np.ndarray,
              counter: Optional[InstrCounter] = None) -> tuple[np.ndarray, np.ndarray]:
    """Borrow-chain subtraction; borrow is 1 exactly when ``a < b``."""
    w = a.shape[0]
    if b.shape[0] != w:
        raise ParameterError(f"width mismatch: {w} vs {b.shape[0]}")
    shape = np.broadcast_shapes(a.shape, b.shape)
    out = np.empty(shape, dtype=np.uint64)
    carry = np.uint64(1)
    for l in range(w):
        s = a[l] + (b[l] ^ _MASK) + carry
        out[l] = s & _MASK
        carry = s >> _SHIFT
    _charge(counter, _lanes(shape), adds=1, addcs=w - 1)
    return out, np.broadcast_to(np.uint64(1) - carry, shape[1:])


def select_limbs(cond, x: np.ndarray, y: np.ndarray,
                 counter: Optional[InstrCounter] = None) -> np.ndarray:
    """Branch-free per-lane choice: ``x`` where ``cond`` else ``y``."""
    out = np.where(np.asarray(cond, dtype=bool), x, y)
    _charge(counter, _lanes(out.shape), adds=out.shape[0])
    return out


def negate_if(x: np.ndarray, neg, counter: Optional[InstrCounter] = None) -> np.ndarray:
    """Two's-complement negation of the lanes where ``neg`` is 1."""
    w = x.shape[0]
    neg = np.asarray(neg, dtype=np.uint64)
    flip = neg * _MASK
    shape = np.broadcast_shapes(x.shape, (1,) + neg.shape)
    out = np.empty(shape, dtype=np.uint64)
    carry = neg
    for l in range(w):
        s = (x[l] ^ flip) + carry
        out[l] = s & _MASK
        carry = s >> _SHIFT
    _charge(counter, _lanes(shape), adds=w + 1, addcs=w - 1)
    return out


def is_negative(x: np.ndarray) -> np.ndarray:
    """Sign bit of a two's-complement limb stack."""
    return (x[-1] >> np.uint64(LIMB_BITS - 1)).astype(np.uint64)


# ---------------------------------------------------------------------------
# multiplication

def mul32_limbs(a: np.ndarray, b: np.ndarray,
                counter: Optional[InstrCounter] = None) -> tuple[np.ndarray, np.ndarray]:
    """32x32->64 product of single limbs, charged as one shift-and-add call.

    The simulator computes the product directly; the device cost of the
    32-iteration loop is applied through the cost table.
    """
    p = a * b
    _charge(counter, int(np.prod(p.shape, dtype=np.int64)), muls32=1)
    return p & _MASK, p >> _SHIFT


def karatsuba_limbs(a: np.ndarray, b: np.ndarray,
                    counter: Optional[InstrCounter] = None) -> np.ndarray:
    """Exact ``2*width``-limb product by Karatsuba recursion down to 32 bits.

    The middle term uses the subtractive form ``(a0-a1)(b1-b0)`` with the
    differences held in sign-magnitude, so no operand grows past its half
    width.  Odd widths are handled by zero-padding the high half.
    """
    w = a.shape[0]
    if b.shape[0] != w:
        raise ParameterError(f"width mismatch: {w} vs {b.shape[0]}")
    if w == 1:
        lo, hi = mul32_limbs(a[0], b[0], counter)
        return np.stack([lo, hi])
    h = (w + 1) // 2
    a0, a1 = a[:h], extend(a[h:], h)
    b0, b1 = b[:h], extend(b[h:], h)
    z0 = karatsuba_limbs(a0, b0, counter)
    z2 = karatsuba_limbs(a1, b1, counter)
    da, sa = sub_limbs(a0, a1, counter)
    da = negate_if(da, sa, counter)
    db, sb = sub_limbs(b1, b0, counter)
    db = negate_if(db, sb, counter)
    m = karatsuba_limbs(da, db, counter)
    neg = sa ^ sb
    shape = np.broadcast_shapes(z0.shape, m.shape)
    _charge(counter, _lanes(shape), adds=1)
    s, c = add_limbs(z0, z2, counter)
    s = np.concatenate([s, c[None]], axis=0)
    z1, _ = add_limbs(s, negate_if(extend(m, 2 * h + 1), neg, counter), counter)
    r = np.concatenate([np.broadcast_to(z0, shape), np.broadcast_to(z2, shape)], axis=0)
    upper, _ = add_limbs(r[h:], extend(z1, 3 * h), counter)
    r = np.concatenate([r[:h], upper], axis=0)
    return r[: 2 * w]


def schoolbook_limbs(a: np.ndarray, b: np.ndarray,
                     counter: Optional[InstrCounter] = None) -> np.ndarray:
    """Quadratic limb-product grid with row-wise carry propagation."""
    w = a.shape[0]
    if b.shape[0] != w:
        raise ParameterError(f"width mismatch: {w} vs {b.shape[0]}")
    shape = np.broadcast_shapes(a.shape, b.shape)
    acc = np.zeros((2 * w,) + shape[1:], dtype=np.uint64)
    for i in range(w):
        carry = np.uint64(0)
        for j in range(w):
            # acc + a_i*b_j + carry <= 2**64 - 1, so uint64 never wraps here
            t = acc[i + j] + a[i] * b[j] + carry
            acc[i + j] = t & _MASK
            carry = t >> _SHIFT
        acc[i + w] = carry
    _charge(counter, _lanes(shape), muls32=w * w, adds=w * w, addcs=w * w)
    return acc


def mul_small_limbs(x: np.ndarray, s: int, counter: Optional[InstrCounter] = None) -> np.ndarray:
    """Multiply a limb stack by a single-limb constant; result is one limb wider."""
    if not 0 <= s <= LIMB_MASK:
        raise ParameterError("multiplier must fit in one limb")
    w = x.shape[0]
    s = np.uint64(s)
    out = np.empty((w + 1,) + x.shape[1:], dtype=np.uint64)
    carry = np.uint64(0)
    for l in range(w):
        t = x[l] * s + carry
        out[l] = t & _MASK
        carry = t >> _SHIFT
    out[w] = carry
    _charge(counter, _lanes(x.shape), muls32=w, adds=w)
    return out


# ---------------------------------------------------------------------------
# modular arithmetic

class BarrettReducer:
    """Reduction by a fixed modulus using a precomputed reciprocal.

    With ``M = 32*in_width`` and ``mu = floor(2**M / q)``, the estimate
    ``floor(x*mu / 2**M)`` undershoots ``floor(x/q)`` by at most one for every
    ``x < 2**M``, so a single conditional subtraction finishes the job.  No
    division instruction is needed at run time.
    """

    def __init__(self, q: int, in_width: int, out_width: int):
        if q <= 0:
            raise ParameterError("modulus must be positive")
        if q == 1:
            raise ParameterError("modulus 1 has no Barrett reciprocal")
        if q >= 1 << (LIMB_BITS * out_width) or 2 * q >= 1 << (LIMB_BITS * in_width):
            raise ParameterError(f"modulus {q} does not fit the declared widths")
        self.q = q
        self.in_width = in_width
        self.out_width = out_width
        self.mu = (1 << (LIMB_BITS * in_width)) // q
        self._mu = limbs_from_ints([self.mu], in_width)
        self._q = limbs_from_ints([q], in_width)

    def _shape(self, limbs: np.ndarray, ndim: int) -> np.ndarray:
        return limbs.reshape((self.in_width,) + (1,) * ndim)

    def _estimate(self, x: np.ndarray, counter):
        if x.shape[0] != self.in_width:
            raise ParameterError(f"expected {self.in_width} limbs, got {x.shape[0]}")
        ndim = x.ndim - 1
        mu = np.broadcast_to(self._shape(self._mu, ndim), x.shape)
        q = np.broadcast_to(self._shape(self._q, ndim), x.shape)
        X = self.in_width
        qhat = karatsuba_limbs(x, mu, counter)[X: 2 * X]
        r, _ = sub_limbs(x, karatsuba_limbs(qhat, q, counter)[:X], counter)
        r2, borrow = sub_limbs(r, q, counter)
        return qhat, r, r2, borrow

    def reduce(self, x: np.ndarray, counter: Optional[InstrCounter] = None) -> np.ndarray:
        _, r, r2, borrow = self._estimate(x, counter)
        return select_limbs(borrow, r, r2, counter)[: self.out_width]

    def divmod(self, x: np.ndarray, counter: Optional[InstrCounter] = None):
        qhat, r, r2, borrow = self._estimate(x, counter)
        quotient, _ = add_limbs(qhat, np.zeros_like(qhat), counter, cin=np.uint64(1) - borrow)
        return quotient, select_limbs(borrow, r, r2, counter)[: self.out_width]


@functools.lru_cache(maxsize=256)
def barrett(q: int, in_width: int, out_width: int) -> BarrettReducer:
    return BarrettReducer(q, in_width, out_width)


def mod_add_limbs(a: np.ndarray, b: np.ndarray, q: np.ndarray,
                  counter: Optional[InstrCounter] = None) -> np.ndarray:
    """(a + b) mod q for residues; relies on q < 2**(32*width - 1)."""
    s, _ = add_limbs(a, b, counter)
    d, borrow = sub_limbs(s, q, counter)
    return select_limbs(borrow, s, d, counter)


def mod_sub_limbs(a: np.ndarray, b: np.ndarray, q: np.ndarray,
                  counter: Optional[InstrCounter] = None) -> np.ndarray:
    d, borrow = sub_limbs(a, b, counter)
    e, _ = add_limbs(d, q, counter)
    return select_limbs(borrow, e, d, counter)


def mod_mul_limbs(a: np.ndarray, b: np.ndarray, q: int,
                  counter: Optional[InstrCounter] = None) -> np.ndarray:
    w = a.shape[0]
    return barrett(q, 2 * w, w).reduce(karatsuba_limbs(a, b, counter), counter)


# ---------------------------------------------------------------------------
# scalar API

@dataclass(frozen=True)
class WideInt:
    """Unsigned integer of ``width`` little-endian 32-bit limbs."""

    limbs: tuple[int, ...]

    def __post_init__(self):
        if not self.limbs:
            raise ParameterError("a WideInt needs at least one limb")
        if any(not 0 <= l <= LIMB_MASK for l in self.limbs):
            raise ParameterError("limb out of 32-bit range")

    @classmethod
    def from_int(cls, value: int, width: int) -> "WideInt":
        if not 0 <= value < 1 << (LIMB_BITS * width):
            raise ParameterError(f"{value} does not fit in {width} limbs")
        return cls(tuple((value >> (LIMB_BITS * i)) & LIMB_MASK for i in range(width)))

    @classmethod
    def _from_array(cls, arr: np.ndarray) -> "WideInt":
        return cls(tuple(int(v) for v in arr))

    @property
    def width(self) -> int:
        return len(self.limbs)

    @property
    def value(self) -> int:
        return sum(l << (LIMB_BITS * i) for i, l in enumerate(self.limbs))

    def array(self) -> np.ndarray:
        return np.array(self.limbs, dtype=np.uint64)

    def __int__(self) -> int:
        return self.value


def _same_width(a: WideInt, b: WideInt) -> None:
    if a.width != b.width:
        raise ParameterError(f"width mismatch: {a.width} vs {b.width}")


def add_carry(a: int, b: int, cin: int, counter: Optional[InstrCounter] = None) -> tuple[int, int]:
    if cin not in (0, 1):
        raise ParameterError("carry-in must be 0 or 1")
    s = a + b + cin
    _charge(counter, 1, addcs=1)
    return s & LIMB_MASK, s >> LIMB_BITS


def wide_add(a: WideInt, b: WideInt, counter: Optional[InstrCounter] = None) -> tuple[WideInt, int]:
    _same_width(a, b)
    s, c = add_limbs(a.array(), b.array(), counter)
    return WideInt._from_array(s), int(c)


def wide_sub(a: WideInt, b: WideInt, counter: Optional[InstrCounter] = None) -> tuple[WideInt, int]:
    _same_width(a, b)
    d, borrow = sub_limbs(a.array(), b.array(), counter)
    return WideInt._from_array(d), int(borrow)


def mul32_shift_add(a: int, b: int, counter: Optional[InstrCounter] = None) -> tuple[int, int]:
    """The compiler's software multiply, one bit of ``b`` per iteration."""
    acc = 0
    addend = a
    for _ in range(LIMB_BITS):
        if b & 1:
            acc += addend
        addend <<= 1
        b >>= 1
    _charge(counter, 1, muls32=1)
    return acc & LIMB_MASK, acc >> LIMB_BITS


def schoolbook_mul(a: WideInt, b: WideInt, counter: Optional[InstrCounter] = None) -> WideInt:
    _same_width(a, b)
    return WideInt._from_array(schoolbook_limbs(a.array(), b.array(), counter))


def karatsuba_mul(a: WideInt, b: WideInt, counter: Optional[InstrCounter] = None) -> WideInt:
    _same_width(a, b)
    if a.width == 1:
        lo, hi = mul32_shift_add(a.limbs[0], b.limbs[0], counter)
        return WideInt((lo, hi))
    return WideInt._from_array(karatsuba_limbs(a.array(), b.array(), counter))


def mod_reduce(a: WideInt, q: WideInt, counter: Optional[InstrCounter] = None) -> WideInt:
    """``a mod q`` by Barrett reduction; ``a`` may be any width >= q's."""
    if q.value == 0:
        raise ParameterError("modulus must be non-zero")
    if a.width < q.width:
        raise ParameterError("input narrower than modulus")
    if q.value == 1:
        return WideInt.from_int(0, q.width)
    x = a.array()
    if 2 * q.value >= 1 << (LIMB_BITS * a.width):
        x = extend(x, a.width + 1)
    red = barrett(q.value, x.shape[0], q.width)
    return WideInt._from_array(red.reduce(x, counter))


def _check_residue(x: WideInt, q: WideInt) -> None:
    if x.value >= q.value:
        raise ContractError(f"operand {x.value} is not reduced modulo {q.value}")


def mod_add(a: WideInt, b: WideInt, q: WideInt, counter: Optional[InstrCounter] = None) -> WideInt:
    _same_width(a, b)
    _same_width(a, q)
    if q.value >= 1 << (LIMB_BITS * q.width - 1):
        raise ParameterError("modulus needs one bit of headroom for mod_add")
    _check_residue(a, q)
    _check_residue(b, q)
    return WideInt._from_array(mod_add_limbs(a.array(), b.array(), q.array(), counter))


def mod_mul(a: WideInt, b: WideInt, q: WideInt, counter: Optional[InstrCounter] = None) -> WideInt:
    _same_width(a, b)
    _same_width(a, q)
    _check_residue(a, q)
    _check_residue(b, q)
    if q.value == 1:
        return WideInt.from_int(0, q.width)
    return WideInt._from_array(mod_mul_limbs(a.array(), b.array(), q.value, counter))
