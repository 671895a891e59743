"""Command-line front end: microbenchmark sweeps, workload runs, reports.

    pimhe-bench --mode microbench-add --security 27 --items 1024,2048 --out add.csv
    pimhe-bench --mode microbench-mul --security 109 --cost-only --format json
    pimhe-bench --mode workload-mean --security 109 --users 640 --plain-modulus 65536

Functional runs check every kernel output against the host reference before
anything is written; a mismatch exits with status 3 and no report.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, bfv, workloads
from .errors import DepthError, OracleMismatchError, ParameterError, PlaintextOverflowError
from .pimsim import MUL_MODES, KernelReport, PimConfig, cost_only_estimate, run_vector_add_kernel, \
    run_vector_mul_kernel

log = logging.getLogger("pimhe.bench")

BENCH_SCHEMA = "bench_v1"
MODES = ("microbench-add", "microbench-mul", "workload-mean", "workload-variance", "workload-linreg")
FUNCTIONAL_ITEM_CAP = 4096
ADD_SWEEP = tuple(20480 << k for k in range(5))
MUL_SWEEP = tuple(5120 << k for k in range(5))
INSTR_COLUMNS = ("adds", "addcs", "muls32", "loads", "stores", "loop_overhead")
REPORT_COLUMNS = ("cycles", "elapsed_ms", "transfer_ms", "bytes_to_pim", "bytes_from_pim",
                  "cores_used", "tasklets") + INSTR_COLUMNS
MICRO_COLUMNS = ("items", "security", "kernel", "verified") + REPORT_COLUMNS
WORKLOAD_COLUMNS = ("stage", "items", "security", "users", "cts_per_user") + REPORT_COLUMNS

EXIT_OK, EXIT_USAGE, EXIT_MISMATCH, EXIT_OVERFLOW = 0, 2, 3, 4


@dataclass
class BenchSpec:
    mode: str
    security: int = 27
    items: tuple = ()
    users: int = 640
    cts_per_user: int = 32
    seed: int = 0
    cost_only: bool = False
    config: PimConfig = field(default_factory=PimConfig)
    out: str = "-"
    fmt: str = "csv"
    plain_modulus: Optional[int] = None
    mul_mode: str = "he"
    value_bound: Optional[int] = None
    engine: str = "limb"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode: expected one of {MODES}")
        if self.security not in bfv.PARAMETER_TABLE:
            raise ParameterError("security: expected 27, 54 or 109")
        if any(k < 1 for k in self.items):
            raise ParameterError("items: counts must be positive")
        if self.users < 1:
            raise ParameterError("users: must be positive")
        if self.cts_per_user < 1:
            raise ParameterError("cts-per-user: must be positive")
        if self.fmt not in ("csv", "json"):
            raise ParameterError("format: expected csv or json")
        if self.mul_mode not in MUL_MODES:
            raise ParameterError(f"mul-mode: expected one of {sorted(MUL_MODES)}")
        if self.engine not in ("limb", "host"):
            raise ParameterError("engine: expected limb or host")
        if self.value_bound is not None and self.value_bound < 0:
            raise ParameterError("value-bound: must be non-negative")

    @property
    def params(self) -> bfv.HeParams:
        return bfv.standard_params(self.security, self.plain_modulus)


# ---------------------------------------------------------------------------
# report emission

def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return v


def render_report(rows: Sequence[dict], fmt: str, columns: Sequence[str], meta: dict) -> str:
    """Serialize rows with their metadata; identical input gives identical text."""
    if fmt == "json":
        doc = {"schema": BENCH_SCHEMA, "meta": meta, "columns": list(columns),
               "rows": [{c: r.get(c) for c in columns} for r in rows]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt != "csv":
        raise ParameterError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    buf.write(f"# schema: {BENCH_SCHEMA}\n")
    for key in sorted(meta):
        buf.write(f"# {key}: {json.dumps(meta[key], sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def emit_report(rows: Sequence[dict], fmt: str, path, columns: Sequence[str], meta: dict) -> None:
    text = render_report(rows, fmt, columns, meta)
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ParameterError(f"out: cannot write {path}: {exc}") from exc


def _report_row(rep: KernelReport) -> dict:
    return {"cycles": rep.cycles_per_core, "elapsed_ms": rep.elapsed_ms, "transfer_ms": rep.transfer_ms,
            "bytes_to_pim": rep.bytes_to_pim, "bytes_from_pim": rep.bytes_from_pim,
            "cores_used": rep.cores_used, "tasklets": rep.tasklets_used, **rep.instr.as_dict()}


def _meta(spec: BenchSpec, **extra) -> dict:
    return {"version": __version__, "mode": spec.mode, "seed": spec.seed, "params": spec.params.as_dict(),
            "config": spec.config.as_dict(), "cost_table": spec.config.cost_table,
            "cost_only": spec.cost_only, "engine": spec.engine, **extra}


# ---------------------------------------------------------------------------
# microbenchmarks

def _random_cts(params: bfv.HeParams, pk, count: int, seed: int, tag: int) -> list:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tag,)))
    vals = rng.integers(0, params.t, size=count)
    return [bfv.encrypt(pk, bfv.encode_scalar(params, int(v)), int(s))
            for v, s in zip(vals, rng.integers(0, 1 << 62, size=count))]


def run_microbench(spec: BenchSpec) -> tuple[list[dict], dict]:
    params = spec.params
    cfg = spec.config
    is_add = spec.mode == "microbench-add"
    kind = "add" if is_add else MUL_MODES[spec.mul_mode]
    items = spec.items or (ADD_SWEEP if is_add else MUL_SWEEP)
    rows = []
    keys = None
    for count in items:
        cost_only = spec.cost_only or count > FUNCTIONAL_ITEM_CAP
        if cost_only and not spec.cost_only:
            log.warning("%d items exceeds the functional cap of %d; using the cost model", count,
                        FUNCTIONAL_ITEM_CAP)
        if cost_only:
            rep = cost_only_estimate(kind, count, params, cfg)
            verified = False
        else:
            if keys is None:
                keys = bfv.keygen(params, spec.seed)
            rep = _functional_micro(kind, count, params, keys[1], spec)
            verified = True
        rows.append({"items": count, "security": spec.security, "kernel": kind, "verified": verified,
                     **_report_row(rep)})
    return rows, _meta(spec, mul_mode=spec.mul_mode)


def _functional_micro(kind: str, count: int, params, pk, spec: BenchSpec) -> KernelReport:
    lhs = _random_cts(params, pk, count, spec.seed, 2 * count)
    if kind == "mul_plain":
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(2 * count + 1,)))
        rhs = [bfv.encode_scalar(params, int(v)) for v in rng.integers(0, params.t, size=count)]
    else:
        rhs = _random_cts(params, pk, count, spec.seed, 2 * count + 1)
    if kind == "add":
        out, rep = run_vector_add_kernel(lhs, rhs, spec.config, engine=spec.engine)
        ref = bfv.he_add
    else:
        mode = {v: k for k, v in MUL_MODES.items()}[kind]
        out, rep = run_vector_mul_kernel(lhs, rhs, spec.config, mode, engine=spec.engine)
        ref = {"mul": bfv.he_mul, "mul_raw": bfv.tensor_mod_q, "mul_plain": bfv.he_mul_plain}[kind]
    for i, (r, a, b) in enumerate(zip(out, lhs, rhs)):
        if r != ref(a, b):
            raise OracleMismatchError(f"{kind} kernel item {i} of {count} differs from the host reference")
    return rep


# ---------------------------------------------------------------------------
# workloads

def _default_bound(spec: BenchSpec, t: int) -> int:
    if spec.value_bound is not None:
        return spec.value_bound
    if spec.mode == "workload-mean":
        return (t - 1) // spec.users
    if spec.mode == "workload-variance":
        return math.isqrt((t - 1) // spec.users)
    return t - 1


def _plan(spec: BenchSpec, params) -> workloads.PipelineResult:
    if spec.mode == "workload-mean":
        return workloads.mean_plan(spec.users, params, spec.config)
    if spec.mode == "workload-variance":
        return workloads.variance_plan(spec.users, params, spec.config)
    return workloads.linreg_plan(spec.users, spec.cts_per_user, params, spec.config)


def _largest_kernel(spec: BenchSpec) -> int:
    if spec.mode == "workload-linreg":
        return spec.users * spec.cts_per_user * workloads.REGRESSION_FEATURES
    return spec.users


def run_workload(spec: BenchSpec) -> tuple[list[dict], dict]:
    params = spec.params
    t = params.t
    bound = _default_bound(spec, t)
    cost_only = spec.cost_only or _largest_kernel(spec) > FUNCTIONAL_ITEM_CAP
    if cost_only and not spec.cost_only:
        log.warning("workload exceeds the functional cap of %d kernel items; using the cost model",
                    FUNCTIONAL_ITEM_CAP)
    extra = {"users": spec.users, "cts_per_user": spec.cts_per_user, "value_bound": bound}
    if cost_only:
        result = _plan(spec, params)
        expected = None
    else:
        result, expected = _functional_workload(spec, params, bound)
        if result.answer != expected:
            raise OracleMismatchError(f"{spec.mode}: decrypted answer {result.answer} != oracle {expected}")
    rows = []
    for name, rep in result.stages + [("total", result.total)]:
        rows.append({"stage": name, "items": None, "security": spec.security, "users": spec.users,
                     "cts_per_user": spec.cts_per_user, **_report_row(rep)})
    # host_ms is wall time, so it stays out of the report to keep bytes reproducible
    meta = _meta(spec, **extra, answer=workloads.PipelineResult(result.answer).to_dict()["answer"])
    return rows, meta


def _functional_workload(spec: BenchSpec, params, bound: int):
    sk, pk = bfv.keygen(params, spec.seed)
    cfg = spec.config
    where = f"users={spec.users}, value_bound={bound}, t={params.t}"
    try:
        if spec.mode == "workload-linreg":
            samples = workloads.synthetic_samples(spec.users, spec.cts_per_user, spec.seed, bound)
            data = workloads.encrypt_dataset(samples, params, pk, spec.seed, "samples", bound)
            rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(0x3E16,)))
            w = [int(x) for x in rng.integers(0, params.t, size=workloads.REGRESSION_FEATURES)]
            b = int(rng.integers(0, params.t))
            model = workloads.encrypt_model(w, b, params, pk, spec.seed)
            result = workloads.linreg_pipeline(data, model, cfg, sk, engine=spec.engine)
            expected = [[(sum(x * y for x, y in zip(s, w)) + b) % params.t for s in user] for user in samples]
            return result, expected
        vals = workloads.synthetic_values(spec.users, spec.seed, bound)
        data = workloads.encrypt_dataset(vals, params, pk, spec.seed, "scalar", bound)
        xs = [Fraction(v[0]) for v in vals]
        mean = sum(xs) / len(xs)
        if spec.mode == "workload-mean":
            return workloads.mean_pipeline(data, cfg, sk, engine=spec.engine), mean
        var = sum((x - mean) ** 2 for x in xs) / len(xs)
        return workloads.variance_pipeline(data, cfg, sk, engine=spec.engine), var
    except PlaintextOverflowError as exc:
        raise PlaintextOverflowError(f"{where}: {exc}", exc.bound, exc.limit) from exc
    except DepthError as exc:
        raise DepthError(f"{where}: {exc}") from exc


# ---------------------------------------------------------------------------
# CLI

def _items(text: str) -> tuple:
    try:
        vals = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("item counts must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pimhe-bench", description=__doc__.split("\n")[0])
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--security", type=int, choices=sorted(bfv.PARAMETER_TABLE), default=27)
    p.add_argument("--items", type=_items, default=(), help="comma-separated item counts")
    p.add_argument("--users", type=int, default=640)
    p.add_argument("--cts-per-user", type=int, default=32, help="samples per user (linreg)")
    p.add_argument("--tasklets", type=int)
    p.add_argument("--cores", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cost-only", action="store_true")
    p.add_argument("--config", help="PimConfig JSON file (falls back to $PIMHE_CONFIG)")
    p.add_argument("--out", default="-")
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    p.add_argument("--plain-modulus", type=int, help="override the plaintext modulus t")
    p.add_argument("--mul-mode", choices=sorted(MUL_MODES), default="he")
    p.add_argument("--value-bound", type=int, help="largest synthetic value (workloads)")
    p.add_argument("--engine", choices=("limb", "host"), default="limb")
    return p


def spec_from_args(args: argparse.Namespace) -> BenchSpec:
    cfg_path = args.config or os.environ.get("PIMHE_CONFIG")
    cfg = PimConfig.from_json(cfg_path) if cfg_path else PimConfig()
    cfg = cfg.replace(tasklets=args.tasklets, num_cores=args.cores)
    return BenchSpec(mode=args.mode, security=args.security, items=args.items, users=args.users,
                     cts_per_user=args.cts_per_user, seed=args.seed, cost_only=args.cost_only, config=cfg,
                     out=args.out, fmt=args.fmt, plain_modulus=args.plain_modulus, mul_mode=args.mul_mode,
                     value_bound=args.value_bound, engine=args.engine)


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = spec_from_args(args)
    except ParameterError as exc:
        parser.print_usage(sys.stderr)
        print(f"pimhe-bench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if spec.mode.startswith("microbench"):
            rows, meta = run_microbench(spec)
            columns = MICRO_COLUMNS
        else:
            rows, meta = run_workload(spec)
            columns = WORKLOAD_COLUMNS
        emit_report(rows, spec.fmt, spec.out, columns, meta)
    except OracleMismatchError as exc:
        print(f"pimhe-bench: oracle mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (PlaintextOverflowError, DepthError) as exc:
        print(f"pimhe-bench: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except ParameterError as exc:
        print(f"pimhe-bench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
