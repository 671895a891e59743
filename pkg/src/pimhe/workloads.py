"""Encrypted statistics (mean, variance, linear-regression inference).

Every pipeline follows the same shape: batched kernels on the simulated PIM
cores, then decryption and exact rational finalization on the host.  The
stage schedule is shared with the ``*_plan`` functions, which cost the same
pipeline analytically for user counts too large to encrypt.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import bfv
from .bfv import Ciphertext, HeParams, PublicKey, SecretKey
from .errors import ParameterError, PlaintextOverflowError
from .pimsim import (KernelReport, PimConfig, cost_only_estimate, run_vector_add_kernel,
                     run_vector_mul_kernel, sum_reports)

LAYOUTS = ("scalar", "packed", "samples")
REGRESSION_FEATURES = 3

Answer = Union[Fraction, list]


@dataclass(frozen=True)
class UserDataset:
    """Per-user plaintext values and their encryptions.

    ``scalar``: one value per user in one ciphertext (slot 0).
    ``packed``: a vector per user in one ciphertext, value i in coefficient i.
    ``samples``: a list of feature tuples per user; each feature is its own
    ciphertext, stored sample-major.
    """

    params: HeParams
    values: tuple
    ciphertexts: tuple
    layout: str = "scalar"
    value_bound: int = 0

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ParameterError(f"unknown layout {self.layout!r}")
        if len(self.values) != len(self.ciphertexts):
            raise ParameterError("one ciphertext list per user is required")
        if any(ct.params != self.params for cts in self.ciphertexts for ct in cts):
            raise ParameterError("dataset ciphertexts use mixed parameters")

    @property
    def users(self) -> int:
        return len(self.values)

    @property
    def features(self) -> int:
        if self.layout != "samples" or not self.values or not self.values[0]:
            return 1
        return len(self.values[0][0])


def encrypt_dataset(values: Sequence, params: HeParams, pk: PublicKey, seed: int,
                    layout: str = "scalar", value_bound: Optional[int] = None) -> UserDataset:
    """Encrypt one row per user.  Ciphertext seeds derive from ``seed`` and the coordinates."""
    rows = []
    cts = []
    flat_max = 0
    for u, row in enumerate(values):
        if layout == "scalar":
            row = (int(row),) if np.ndim(row) == 0 else tuple(int(v) for v in row)
            if len(row) != 1:
                raise ParameterError(f"user {u}: scalar layout takes one value, got {len(row)}")
            items = [bfv.encode_scalar(params, row[0])]
            flat = row
        elif layout == "packed":
            row = tuple(int(v) for v in row)
            items = [bfv.encode_vector(params, row)]
            flat = row
        elif layout == "samples":
            row = tuple(tuple(int(v) for v in sample) for sample in row)
            items = [bfv.encode_scalar(params, v) for sample in row for v in sample]
            flat = tuple(v for sample in row for v in sample)
        else:
            raise ParameterError(f"unknown layout {layout!r}")
        rows.append(row)
        cts.append(tuple(bfv.encrypt(pk, m, _seed(seed, u, j)) for j, m in enumerate(items)))
        flat_max = max([flat_max, *flat])
    bound = flat_max if value_bound is None else value_bound
    if bound < flat_max:
        raise ParameterError(f"declared value bound {bound} is below the data maximum {flat_max}")
    return UserDataset(params, tuple(rows), tuple(cts), layout, bound)


def _seed(seed: int, *coords: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=coords)
    return int(ss.generate_state(2, np.uint32).view(np.uint64)[0])


@dataclass
class PipelineResult:
    answer: Optional[Answer]
    stages: list = field(default_factory=list)
    host_ms: float = 0.0

    @property
    def reports(self) -> list[KernelReport]:
        return [r for _, r in self.stages]

    @property
    def total(self) -> KernelReport:
        return sum_reports(self.reports)

    def to_dict(self) -> dict:
        def fmt(a):
            if isinstance(a, list):
                return [fmt(x) for x in a]
            return None if a is None else str(a)

        return {
            "answer": fmt(self.answer),
            "stages": [{"name": name, **r.to_dict()} for name, r in self.stages],
            "total": self.total.to_dict(),
            "host_ms": self.host_ms,
        }


# ---------------------------------------------------------------------------
# schedules shared by functional and cost-only paths

def tree_levels(count: int) -> list[int]:
    """Pairwise adds per level of a balanced reduction of ``count`` operands."""
    levels = []
    while count > 1:
        levels.append(count // 2)
        count = count - count // 2
    return levels


def _reduce(cts: list[Ciphertext], cfg: PimConfig, name: str, stages: list, **kw) -> Ciphertext:
    level = 0
    while len(cts) > 1:
        half = len(cts) // 2
        out, rep = run_vector_add_kernel(cts[0:2 * half:2], cts[1:2 * half:2], cfg, **kw)
        stages.append((f"{name}-L{level}", rep))
        cts = out + cts[2 * half:]
        level += 1
    return cts[0]


def _reduce_plan(count: int, params: HeParams, cfg: PimConfig, name: str, components: int,
                 tasklets: Optional[int]) -> list:
    return [(f"{name}-L{i}", cost_only_estimate("add", k, params, cfg, tasklets, components))
            for i, k in enumerate(tree_levels(count))]


def _check(bound: int, t: int, what: str) -> None:
    if bound >= t:
        raise PlaintextOverflowError(f"{what}: worst case {bound} does not fit below t={t}", bound, t - 1)


def _need_users(data: UserDataset) -> None:
    if data.users < 1:
        raise ParameterError("at least one user is required")


# ---------------------------------------------------------------------------
# pipelines

def mean_pipeline(data: UserDataset, cfg: PimConfig, sk: SecretKey, tasklets: Optional[int] = None,
                  engine: str = "limb") -> PipelineResult:
    """Sum all user ciphertexts on PIM, divide by the user count on the host.

    Packed datasets return one mean per coefficient slot.
    """
    _need_users(data)
    if data.layout not in ("scalar", "packed"):
        raise ParameterError("mean takes scalar or packed data")
    _check(data.users * data.value_bound, data.params.t, "sum of values")
    stages: list = []
    total = _reduce([cts[0] for cts in data.ciphertexts], cfg, "sum", stages, tasklets=tasklets, engine=engine)
    if not stages:
        stages.append(("sum-L0", KernelReport()))
    start = time.perf_counter()
    pt = bfv.decrypt(sk, total)
    if data.layout == "scalar":
        answer: Answer = Fraction(bfv.decode_scalar(pt), data.users)
    else:
        width = max(len(v) for v in data.values)
        answer = [Fraction(s, data.users) for s in bfv.decode_vector(pt, width)]
    return PipelineResult(answer, stages, (time.perf_counter() - start) * 1e3)


def variance_pipeline(data: UserDataset, cfg: PimConfig, sk: SecretKey, tasklets: Optional[int] = None,
                      engine: str = "limb") -> PipelineResult:
    """Population variance ``E[x^2] - E[x]^2`` from encrypted sums."""
    _need_users(data)
    if data.layout != "scalar":
        raise ParameterError("variance takes scalar data")
    t = data.params.t
    _check(data.users * data.value_bound ** 2, t, "sum of squares")
    _check(data.users * data.value_bound, t, "sum of values")
    stages: list = []
    cts = [c[0] for c in data.ciphertexts]
    squares, rep = run_vector_mul_kernel(cts, cts, cfg, "he", tasklets, engine)
    stages.append(("square", rep))
    sq_total = _reduce(squares, cfg, "sum-sq", stages, tasklets=tasklets, engine=engine)
    total = _reduce(cts, cfg, "sum", stages, tasklets=tasklets, engine=engine)
    start = time.perf_counter()
    s2 = bfv.decode_scalar(bfv.decrypt(sk, sq_total))
    s1 = bfv.decode_scalar(bfv.decrypt(sk, total))
    u = data.users
    answer = Fraction(s2, u) - Fraction(s1, u) ** 2
    return PipelineResult(answer, stages, (time.perf_counter() - start) * 1e3)


@dataclass(frozen=True)
class RegressionModel:
    """Encrypted (or plaintext) weights plus bias, one scalar each."""

    weights: tuple
    bias: object
    encrypted: bool = True


def encrypt_model(weights: Sequence[int], bias: int, params: HeParams, pk: PublicKey, seed: int,
                  encrypted: bool = True) -> RegressionModel:
    pts = [bfv.encode_scalar(params, int(w)) for w in weights]
    b = bfv.encode_scalar(params, int(bias))
    if not encrypted:
        return RegressionModel(tuple(pts), b, False)
    cts = tuple(bfv.encrypt(pk, m, _seed(seed, 1 << 30, i)) for i, m in enumerate(pts))
    return RegressionModel(cts, bfv.encrypt(pk, b, _seed(seed, 1 << 30, len(pts))), True)


def linreg_pipeline(data: UserDataset, model: RegressionModel, cfg: PimConfig, sk: SecretKey,
                    tasklets: Optional[int] = None, engine: str = "limb",
                    any_features: bool = False) -> PipelineResult:
    """Predictions ``<x, w> + b mod t`` for every user sample.

    One batched multiply over all (sample, feature) pairs, then one add
    level per remaining feature and a final bias add.  The answer lists
    predictions per user, in sample order.
    """
    _need_users(data)
    if data.layout != "samples":
        raise ParameterError("linear regression takes sample data")
    f = len(model.weights)
    if data.features != f:
        raise ParameterError(f"samples have {data.features} features, model has {f}")
    if f != REGRESSION_FEATURES and not any_features:
        raise ParameterError(f"expected {REGRESSION_FEATURES} features, got {f}")
    flat = [ct for cts in data.ciphertexts for ct in cts]
    weights = [model.weights[i % f] for i in range(len(flat))]
    mode = "he" if model.encrypted else "plain"
    stages: list = []
    prods, rep = run_vector_mul_kernel(flat, weights, cfg, mode, tasklets, engine)
    stages.append(("dot-mul", rep))
    samples = len(flat) // f
    acc = prods[0::f]
    for j in range(1, f):
        acc, rep = run_vector_add_kernel(acc, prods[j::f], cfg, tasklets, engine)
        stages.append((f"dot-add{j}", rep))
    if model.encrypted:
        acc, rep = run_vector_add_kernel(acc, [model.bias] * samples, cfg, tasklets, engine)
        stages.append(("bias", rep))
    start = time.perf_counter()
    preds = [bfv.decode_scalar(bfv.decrypt(sk, c)) for c in acc]
    if not model.encrypted:
        # a plaintext bias never needs to visit the PIM side
        b = bfv.decode_scalar(model.bias)
        preds = [(p + b) % data.params.t for p in preds]
    answer, k = [], 0
    for row in data.values:
        answer.append(preds[k:k + len(row)])
        k += len(row)
    return PipelineResult(answer, stages, (time.perf_counter() - start) * 1e3)


# ---------------------------------------------------------------------------
# cost-only plans

def mean_plan(users: int, params: HeParams, cfg: PimConfig, tasklets: Optional[int] = None) -> PipelineResult:
    if users < 1:
        raise ParameterError("at least one user is required")
    return PipelineResult(None, _reduce_plan(users, params, cfg, "sum", 2, tasklets) or [("sum-L0", KernelReport())])


def variance_plan(users: int, params: HeParams, cfg: PimConfig, tasklets: Optional[int] = None) -> PipelineResult:
    if users < 1:
        raise ParameterError("at least one user is required")
    stages = [("square", cost_only_estimate("mul", users, params, cfg, tasklets))]
    stages += _reduce_plan(users, params, cfg, "sum-sq", 3, tasklets)
    stages += _reduce_plan(users, params, cfg, "sum", 2, tasklets)
    return PipelineResult(None, stages)


def linreg_plan(users: int, samples_per_user: int, params: HeParams, cfg: PimConfig,
                tasklets: Optional[int] = None, features: int = REGRESSION_FEATURES,
                encrypted_weights: bool = True) -> PipelineResult:
    if users < 1 or samples_per_user < 1:
        raise ParameterError("users and samples per user must be positive")
    samples = users * samples_per_user
    kind = "mul" if encrypted_weights else "mul_plain"
    comps = 3 if encrypted_weights else 2
    stages = [("dot-mul", cost_only_estimate(kind, samples * features, params, cfg, tasklets))]
    stages += [(f"dot-add{j}", cost_only_estimate("add", samples, params, cfg, tasklets, comps))
               for j in range(1, features)]
    if encrypted_weights:
        stages.append(("bias", cost_only_estimate("add", samples, params, cfg, tasklets, 3, 2)))
    return PipelineResult(None, stages)


# ---------------------------------------------------------------------------
# data sources

def load_csv(path) -> list[list[int]]:
    """One row per user; every cell an integer.  Blank lines are skipped."""
    rows = []
    with open(Path(path), newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row if c.strip()]
            if not cells:
                continue
            try:
                rows.append([int(c) for c in cells])
            except ValueError as exc:
                raise ParameterError(f"{path}:{lineno}: {exc}") from None
    return rows


def synthetic_values(users: int, seed: int, value_bound: int, per_user: int = 1) -> list[list[int]]:
    """Uniform integers in ``[0, value_bound]``, reproducible from ``seed``."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x5EED,)))
    return rng.integers(0, value_bound + 1, size=(users, per_user)).tolist()


def synthetic_samples(users: int, samples: int, seed: int, value_bound: int,
                      features: int = REGRESSION_FEATURES) -> list[list[list[int]]]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x5A3B,)))
    return rng.integers(0, value_bound + 1, size=(users, samples, features)).tolist()
