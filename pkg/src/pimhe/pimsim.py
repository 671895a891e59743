"""Functional simulator and analytic cost model of a many-core PIM system.

Each work item (one ciphertext pair) is assigned to a core round-robin.  The
limb engine runs the item through the counted primitives in
:mod:`pimhe.limbint`, which yields the exact result and the retired
instruction mix; because those counts never depend on data, the same mix is
also available in closed form (:func:`item_cost`), which is what
:func:`cost_only_estimate` uses for sweeps too large to materialize.

Timing model: a core's weighted instruction total ``I`` takes
``I * sat / min(tasklets, sat)`` cycles, i.e. the pipeline only retires one
instruction per cycle once ``sat`` tasklets are interleaved.  All cores run in
parallel, so kernel time is set by the busiest core.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bfv
from . import limbint as li
from .bfv import Ciphertext, HeParams, Plaintext
from .errors import ParameterError
from .limbint import InstrCounter
from .polyring import Polynomial, RingParams, center, negacyclic_convolve, signed_to_residue, sub_mod

REPORT_SCHEMA = "report_v1"
KERNEL_KINDS = ("add", "mul", "mul_raw", "mul_plain")
MUL_MODES = {"he": "mul", "raw": "mul_raw", "plain": "mul_plain"}


def default_cost_table() -> dict:
    return {"add": 1, "addc": 1, "load": 1, "store": 1, "mul32": li.SHIFT_ADD_CYCLES, "loop_overhead": 2}


@dataclass(frozen=True)
class PimConfig:
    num_cores: int = 2524
    clock_mhz: float = 425.0
    tasklets: int = 16
    saturation_threads: int = 11
    cost_table: dict = field(default_factory=default_cost_table)
    per_core_mem_bytes: int = 64 << 20
    host_link_gbps: float = 8.0

    def __post_init__(self):
        for name in ("num_cores", "tasklets", "saturation_threads", "per_core_mem_bytes"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ParameterError(f"{name} must be a positive integer, got {v!r}")
        for name in ("clock_mhz", "host_link_gbps"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        table = default_cost_table()
        unknown = set(self.cost_table) - set(table)
        if unknown:
            raise ParameterError(f"unknown cost table classes: {sorted(unknown)}")
        table.update(self.cost_table)
        if any(not isinstance(v, int) or v <= 0 for v in table.values()):
            raise ParameterError("cost table entries must be positive integers")
        object.__setattr__(self, "cost_table", table)

    @property
    def total_mem_bytes(self) -> int:
        return self.num_cores * self.per_core_mem_bytes

    def replace(self, **changes) -> "PimConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PimConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "PimConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ParameterError("config file must hold a JSON object")
        return cls.from_dict(data)


@dataclass(frozen=True)
class Partition:
    """Round-robin mapping of work items onto cores."""

    assignments: tuple[int, ...]
    cores_used: int

    def items_per_core(self) -> list[int]:
        counts = [0] * self.cores_used
        for c in self.assignments:
            counts[c] += 1
        return counts

    @property
    def max_load(self) -> int:
        n = len(self.assignments)
        return -(-n // self.cores_used) if n else 0

    def core_order(self) -> list[int]:
        """Item indices in core-major execution order."""
        return sorted(range(len(self.assignments)), key=lambda i: (self.assignments[i], i))


def partition(num_items: int, cfg: PimConfig) -> Partition:
    if num_items < 0:
        raise ParameterError("num_items must be non-negative")
    cores = min(num_items, cfg.num_cores)
    return Partition(tuple(i % cores for i in range(num_items)) if cores else (), cores)


def estimate_cycles(instr: InstrCounter, tasklets: int, cfg: PimConfig) -> int:
    """Cycles for one core to retire ``instr`` with ``tasklets`` threads."""
    if tasklets < 1:
        raise ParameterError("tasklets must be >= 1")
    total = instr.weighted(cfg.cost_table)
    sat = cfg.saturation_threads
    return -(-total * sat // min(tasklets, sat))


def transfer_time(num_bytes: int, cfg: PimConfig) -> float:
    if num_bytes < 0:
        raise ParameterError("byte count must be non-negative")
    return num_bytes / (cfg.host_link_gbps * 1e9 / 8) * 1e3


@dataclass
class KernelReport:
    instr: InstrCounter = field(default_factory=InstrCounter)
    cycles_per_core: int = 0
    elapsed_ms: float = 0.0
    bytes_to_pim: int = 0
    bytes_from_pim: int = 0
    transfer_ms: float = 0.0
    cores_used: int = 0
    tasklets_used: int = 0

    def __add__(self, other: "KernelReport") -> "KernelReport":
        # stages run back to back: costs add, occupancy is the peak
        return KernelReport(
            self.instr + other.instr,
            self.cycles_per_core + other.cycles_per_core,
            self.elapsed_ms + other.elapsed_ms,
            self.bytes_to_pim + other.bytes_to_pim,
            self.bytes_from_pim + other.bytes_from_pim,
            self.transfer_ms + other.transfer_ms,
            max(self.cores_used, other.cores_used),
            max(self.tasklets_used, other.tasklets_used),
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["instr"] = self.instr.as_dict()
        return {"schema": REPORT_SCHEMA, **d}

    @classmethod
    def from_dict(cls, data: dict) -> "KernelReport":
        data = dict(data)
        if data.pop("schema", REPORT_SCHEMA) != REPORT_SCHEMA:
            raise ParameterError("unsupported report schema")
        data["instr"] = InstrCounter(**data["instr"])
        return cls(**data)


def sum_reports(reports: Sequence[KernelReport]) -> KernelReport:
    total = KernelReport()
    for r in reports:
        total = total + r
    return total


# ---------------------------------------------------------------------------
# closed-form instruction counts (per lane)

def _ic(**kw) -> InstrCounter:
    return InstrCounter(**kw)


def _add(w: int) -> InstrCounter:
    return _ic(adds=1, addcs=w - 1)


def _negate(w: int) -> InstrCounter:
    return _ic(adds=w + 1, addcs=w - 1)


def _select(w: int) -> InstrCounter:
    return _ic(adds=w)


def _karatsuba(w: int) -> InstrCounter:
    if w == 1:
        return _ic(muls32=1)
    h = (w + 1) // 2
    return (_karatsuba(h).scaled(3) + (_add(h) + _negate(h)).scaled(2) + _ic(adds=1)
            + _add(2 * h) + _negate(2 * h + 1) + _add(2 * h + 1) + _add(3 * h))


def _barrett_reduce(x: int) -> InstrCounter:
    return _karatsuba(x).scaled(2) + _add(x).scaled(2) + _select(x)


def _barrett_divmod(x: int) -> InstrCounter:
    return _barrett_reduce(x) + _ic(addcs=x)


def _mod_add(w: int) -> InstrCounter:
    return _add(w).scaled(2) + _select(w)


def _center(w: int) -> InstrCounter:
    return _add(w).scaled(2) + _select(w)


def _to_residue(big: int, w: int) -> InstrCounter:
    return _negate(big) + _barrett_reduce(big) + _mod_add(w) + _select(w)


def _product(w: int, big: int, signed: bool) -> InstrCounter:
    return _karatsuba(w) + _ic(adds=2 if signed else 1, addcs=big - 1) + _ic(loads=w + big, stores=big, loop_overhead=1)


def _scale(w: int, big: int) -> InstrCounter:
    return (_negate(big) + _ic(muls32=big, adds=big) + _add(big + 1) + _barrett_divmod(big + 1)
            + _barrett_reduce(big + 1) + _mod_add(w) + _select(w))


def item_cost(kind: str, ring: RingParams, components: int = 2) -> InstrCounter:
    """Closed-form instruction mix of one work item of a kernel.

    ``components`` is the ciphertext length for ``add`` and ``mul_plain``;
    the multiplying kernels take two-component operands.
    """
    n, w, big = ring.n, ring.coeff_width, ring.ext_width
    io = _ic(loads=w, stores=w, loop_overhead=1)
    if kind == "add":
        per = _mod_add(w) + _ic(loads=2 * w, stores=w, loop_overhead=1)
        return per.scaled(components * n)
    if kind == "mul":
        return ((_center(w) + io).scaled(4 * n)
                + _product(w, big, True).scaled(4 * n * n)
                + (_add(big) + _ic(loads=2 * big, stores=big, loop_overhead=1)).scaled(n)
                + (_scale(w, big) + _ic(loads=big, stores=w, loop_overhead=1)).scaled(3 * n))
    if kind == "mul_raw":
        return (_product(w, big, False).scaled(4 * n * n)
                + (_add(big) + _ic(loads=2 * big, stores=big, loop_overhead=1)).scaled(n)
                + (_to_residue(big, w) + _ic(loads=big, stores=w, loop_overhead=1)).scaled(3 * n))
    if kind == "mul_plain":
        return (_product(w, big, False).scaled(components * n * n)
                + (_to_residue(big, w) + _ic(loads=big, stores=w, loop_overhead=1)).scaled(components * n))
    raise ParameterError(f"unknown kernel kind {kind!r}; expected one of {KERNEL_KINDS}")


def _output_components(kind: str, components: int) -> int:
    return 3 if kind in ("mul", "mul_raw") else components


def _report(per_item: InstrCounter, num_items: int, bytes_in: int, bytes_out: int,
            cfg: PimConfig, tasklets: Optional[int]) -> KernelReport:
    if num_items == 0:
        return KernelReport()
    tasklets = cfg.tasklets if tasklets is None else tasklets
    part = partition(num_items, cfg)
    cycles = estimate_cycles(per_item.scaled(part.max_load), tasklets, cfg)
    return KernelReport(
        instr=per_item.scaled(num_items),
        cycles_per_core=cycles,
        elapsed_ms=cycles / (cfg.clock_mhz * 1e3),
        bytes_to_pim=bytes_in,
        bytes_from_pim=bytes_out,
        transfer_ms=transfer_time(bytes_in + bytes_out, cfg),
        cores_used=part.cores_used,
        tasklets_used=tasklets,
    )


def cost_only_estimate(kind: str, num_items: int, params: HeParams, cfg: PimConfig,
                       tasklets: Optional[int] = None, components: int = 2,
                       rhs_components: Optional[int] = None) -> KernelReport:
    """Analytic kernel report; no ciphertexts are built.

    For ``add``, ``components`` is the length of the sum and
    ``rhs_components`` the length of the right operand when it is shorter.
    """
    if num_items < 0:
        raise ParameterError("num_items must be non-negative")
    per_item = item_cost(kind, params.ring, components)
    if kind == "mul_plain":
        # the plaintext operand ships as one bare polynomial
        bytes_in = bfv.serialized_size(params, components) + bfv.serialized_size(params, 1)
    elif kind == "add":
        rhs = components if rhs_components is None else rhs_components
        bytes_in = bfv.serialized_size(params, components) + bfv.serialized_size(params, rhs)
    else:
        bytes_in = 2 * bfv.serialized_size(params, 2)
    bytes_out = bfv.serialized_size(params, _output_components(kind, components))
    return _report(per_item, num_items, bytes_in * num_items, bytes_out * num_items, cfg, tasklets)


# ---------------------------------------------------------------------------
# limb engine

def _check_pairs(lhs: Sequence, rhs: Sequence) -> Optional[HeParams]:
    if len(lhs) != len(rhs):
        raise ParameterError(f"operand lengths differ: {len(lhs)} vs {len(rhs)}")
    if not lhs:
        return None
    params = lhs[0].params
    if any(x.params != params for x in list(lhs) + list(rhs)):
        raise ParameterError("operands use mixed parameters")
    return params


def _add_batch(pairs: list[tuple[Ciphertext, Ciphertext]], k: int, counter: InstrCounter) -> list[Ciphertext]:
    """One limb-engine pass over every pair whose sum has ``k`` components."""
    ring = pairs[0][0].params.ring
    w, n = ring.coeff_width, ring.n
    zero = np.zeros((w, n), dtype=np.uint64)

    def stack(side: int) -> np.ndarray:
        blocks = []
        for pair in pairs:
            comps = pair[side].components
            blocks.extend(comps[i].coeffs if i < len(comps) else zero for i in range(k))
        return np.concatenate(blocks, axis=1)

    lanes = len(pairs) * k * n
    out = li.mod_add_limbs(stack(0), stack(1), ring.q_limbs(1), counter)
    counter.charge(lanes, loads=2 * w, stores=w, loop_overhead=1)
    results = []
    for p, (a, b) in enumerate(pairs):
        comps = tuple(Polynomial(ring, out[:, (p * k + i) * n:(p * k + i + 1) * n]) for i in range(k))
        results.append(Ciphertext(a.params, comps, max(a.mul_depth, b.mul_depth)))
    return results


def _scale_limbs(d: np.ndarray, params: HeParams, counter: InstrCounter) -> np.ndarray:
    """round(t*d/q) mod q for two's-complement accumulators."""
    ring = params.ring
    big = d.shape[0]
    neg = li.is_negative(d)
    mag = li.negate_if(d, neg, counter)
    x = li.mul_small_limbs(mag, 2 * params.t, counter)
    x, _ = li.add_limbs(x, np.broadcast_to(li._const(ring.q, big + 1, 1), x.shape), counter)
    quot, _ = li.barrett(2 * ring.q, big + 1, ring.coeff_width).divmod(x, counter)
    r = li.barrett(ring.q, big + 1, ring.coeff_width).reduce(quot, counter)
    neg_r = sub_mod(np.zeros_like(r), r, ring, counter)
    return li.select_limbs(neg, neg_r, r, counter)


def _tensor_limbs(a: Ciphertext, b: Ciphertext, signed: bool, counter: InstrCounter) -> np.ndarray:
    ring = a.params.ring
    w, n, big = ring.coeff_width, ring.n, ring.ext_width
    ops = [c.coeffs for c in a.components + b.components]
    if signed:
        centered = [center(x, ring, counter) for x in ops]
        counter.charge(4 * n, loads=w, stores=w, loop_overhead=1)
        (a0, s0), (a1, s1), (b0, t0), (b1, t1) = centered
    else:
        a0, a1, b0, b1 = ops
        s0 = s1 = t0 = t1 = None

    def conv(x, sx, y, sy):
        out = negacyclic_convolve(x, y, big, counter, sx, sy)
        counter.charge(n * n, loads=w + big, stores=big, loop_overhead=1)
        return out

    d0 = conv(a0, s0, b0, t0)
    d1, _ = li.add_limbs(conv(a0, s0, b1, t1), conv(a1, s1, b0, t0), counter)
    counter.charge(n, loads=2 * big, stores=big, loop_overhead=1)
    d2 = conv(a1, s1, b1, t1)
    return np.concatenate([d0, d1, d2], axis=1)


def _mul_item(a: Ciphertext, b: Ciphertext, kind: str, counter: InstrCounter) -> Ciphertext:
    params = a.params
    ring = params.ring
    n, w, big = ring.n, ring.coeff_width, ring.ext_width
    bfv.check_mul_operands(a, b)
    if kind == "mul":
        out = _scale_limbs(_tensor_limbs(a, b, True, counter), params, counter)
    else:
        out = signed_to_residue(_tensor_limbs(a, b, False, counter), ring, counter)
    counter.charge(3 * n, loads=big, stores=w, loop_overhead=1)
    comps = tuple(Polynomial(ring, out[:, i * n:(i + 1) * n]) for i in range(3))
    return Ciphertext(params, comps, 1)


def _mul_plain_item(ct: Ciphertext, pt: Plaintext, counter: InstrCounter) -> Ciphertext:
    ring = ct.params.ring
    n, w, big = ring.n, ring.coeff_width, ring.ext_width
    weights = bfv.plaintext_polynomial(pt).coeffs
    accs = []
    for c in ct.components:
        accs.append(negacyclic_convolve(c.coeffs, weights, big, counter))
        counter.charge(n * n, loads=w + big, stores=big, loop_overhead=1)
    out = signed_to_residue(np.concatenate(accs, axis=1), ring, counter)
    counter.charge(len(ct) * n, loads=big, stores=w, loop_overhead=1)
    comps = tuple(Polynomial(ring, out[:, i * n:(i + 1) * n]) for i in range(len(ct)))
    return Ciphertext(ct.params, comps, ct.mul_depth)


def _finish(kind: str, params: HeParams, lhs, rhs, results, counters: list[InstrCounter],
            cfg: PimConfig, tasklets: Optional[int]) -> KernelReport:
    """Aggregate per-group tallies; each group shares one per-item mix."""
    if not results:
        return KernelReport()
    tasklets = cfg.tasklets if tasklets is None else tasklets
    part = partition(len(results), cfg)
    # per-item mixes may differ between groups (component counts), so charge
    # each core the sum of its own items
    per_item = [None] * len(results)
    for idx, c in counters:
        for i in idx:
            per_item[i] = c
    core_load: dict[int, InstrCounter] = {}
    for i in part.core_order():
        core = part.assignments[i]
        core_load[core] = core_load.get(core, InstrCounter()) + per_item[i]
    cycles = max(estimate_cycles(load, tasklets, cfg) for load in core_load.values())
    total = InstrCounter()
    for c in per_item:
        total += c
    bytes_in = sum(bfv.serialized_size(params, len(x)) for x in lhs)
    if kind == "mul_plain":
        bytes_in += bfv.serialized_size(params, 1) * len(rhs)
    else:
        bytes_in += sum(bfv.serialized_size(params, len(x)) for x in rhs)
    bytes_out = sum(bfv.serialized_size(params, len(r)) for r in results)
    return KernelReport(total, cycles, cycles / (cfg.clock_mhz * 1e3), bytes_in, bytes_out,
                        transfer_time(bytes_in + bytes_out, cfg), part.cores_used, tasklets)


def _grouped(keys: Sequence) -> dict:
    groups: dict = {}
    for i, k in enumerate(keys):
        groups.setdefault(k, []).append(i)
    return groups


def run_vector_add_kernel(lhs: Sequence[Ciphertext], rhs: Sequence[Ciphertext], cfg: PimConfig,
                          tasklets: Optional[int] = None, engine: str = "limb"
                          ) -> tuple[list[Ciphertext], KernelReport]:
    """Pairwise he_add on simulated cores."""
    params = _check_pairs(lhs, rhs)
    if params is None:
        return [], KernelReport()
    results: list = [None] * len(lhs)
    counters = []
    for k, idx in sorted(_grouped([max(len(a), len(b)) for a, b in zip(lhs, rhs)]).items()):
        if engine == "limb":
            c = InstrCounter()
            out = _add_batch([(lhs[i], rhs[i]) for i in idx], k, c)
            counters.append((idx, c.divided(len(idx))))
        elif engine == "host":
            out = [bfv.he_add(lhs[i], rhs[i]) for i in idx]
            counters.append((idx, item_cost("add", params.ring, k)))
        else:
            raise ParameterError(f"unknown engine {engine!r}")
        for i, r in zip(idx, out):
            results[i] = r
    return results, _finish("add", params, lhs, rhs, results, counters, cfg, tasklets)


def run_vector_mul_kernel(lhs: Sequence[Ciphertext], rhs: Sequence, cfg: PimConfig,
                          mode: str = "he", tasklets: Optional[int] = None, engine: str = "limb"
                          ) -> tuple[list[Ciphertext], KernelReport]:
    """Pairwise multiplication on simulated cores.

    ``mode`` selects the operation: ``he`` is BFV multiplication (bit-exact
    with :func:`pimhe.bfv.he_mul`), ``raw`` is the bare tensor product in
    R_q (:func:`pimhe.bfv.tensor_mod_q`), and ``plain`` multiplies each
    ciphertext by a :class:`~pimhe.bfv.Plaintext` (:func:`pimhe.bfv.he_mul_plain`).
    """
    if mode not in MUL_MODES:
        raise ParameterError(f"unknown mul mode {mode!r}; expected one of {sorted(MUL_MODES)}")
    if engine not in ("limb", "host"):
        raise ParameterError(f"unknown engine {engine!r}")
    kind = MUL_MODES[mode]
    params = _check_pairs(lhs, rhs)
    if params is None:
        return [], KernelReport()
    results: list = [None] * len(lhs)
    counters = []
    part = partition(len(lhs), cfg)
    if kind == "mul_plain":
        groups = _grouped([len(a) for a in lhs])
    else:
        for a, b in zip(lhs, rhs):
            bfv.check_mul_operands(a, b)
        groups = {2: list(range(len(lhs)))}
    for k, idx in sorted(groups.items()):
        per_item = None
        for i in sorted(idx, key=lambda j: (part.assignments[j], j)):
            if engine == "host":
                if kind == "mul":
                    results[i] = bfv.he_mul(lhs[i], rhs[i])
                elif kind == "mul_raw":
                    results[i] = bfv.tensor_mod_q(lhs[i], rhs[i])
                else:
                    results[i] = bfv.he_mul_plain(lhs[i], rhs[i])
                continue
            c = InstrCounter()
            if kind == "mul_plain":
                results[i] = _mul_plain_item(lhs[i], rhs[i], c)
            else:
                results[i] = _mul_item(lhs[i], rhs[i], kind, c)
            if per_item is not None and c != per_item:
                raise AssertionError("instruction mix depends on data")
            per_item = c
        counters.append((idx, per_item if engine == "limb" else item_cost(kind, params.ring, k)))
    return results, _finish(kind, params, lhs, rhs, results, counters, cfg, tasklets)
