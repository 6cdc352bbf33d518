"""Command-line front end: build descriptors, ingest streams, decode, bench.

Exit codes: 0 success, 2 parameter error, 3 format or state error,
4 guarantee failure under ``--verify --strict-check``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import struct
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import kernels
from .coding import CodeSpec, bucket_message_matrix, decode_bucket_message
from .core import (
    DimensionError,
    ParameterError,
    SketchMatrix,
    SparseVector,
    StreamFormatError,
    descriptor_bytes,
    l1_error,
    linf_error,
    read_signal,
    read_stream,
    tail_norm,
)
from .planted import planted_signal
from .recover_l1 import build_l1_scheme, l1_decode
from .recover_linf import build_combined_scheme, combined_decode_sketch
from .strict import DecodeStats, SplitTree, StrictViolationError, recursive_decode

EXIT_OK, EXIT_PARAM, EXIT_FORMAT, EXIT_VERIFY = 0, 2, 3, 4
SCHEMES = ("general_linf", "general_l1l1", "strict")
STATE_MAGIC = b"DSKSTAT1"
DESCRIPTOR_FORMAT = "detsketch-descriptor/1"

# the two-bucket, two-bit worked example; only reachable by name
EXAMPLE_BUCKETS = [[0, 2, 3, 5], [1, 4, 6, 7]]
EXAMPLE_MESSAGES = [[1, 0, 0, 0, 1, 1, 1, 1], [1, 0, 1, 1, 0, 0, 1, 0]]


class StateError(ValueError):
    """Sketch state that does not belong to the given descriptor."""


# ------------------------------------------------------------------------
# schemes


@dataclass
class Scheme:
    name: str
    n: int
    k: int
    eps: float | None
    seed: int | None
    matrix: SketchMatrix
    impl: object = None

    def decode(self, v) -> tuple[SparseVector, int | None]:
        """Recovered vector and the number of candidate evaluations (strict only)."""
        if self.name == "general_linf":
            return combined_decode_sketch(self.impl, v), None
        if self.name == "general_l1l1":
            return l1_decode(self.impl, v), None
        if self.name == "strict":
            stats = DecodeStats()
            return recursive_decode(self.impl, v, stats=stats), stats.candidate_evaluations
        raise ParameterError(f"scheme {self.name!r} has no decoder")

    def descriptor(self) -> dict:
        d = {
            "format": DESCRIPTOR_FORMAT,
            "scheme": self.name,
            "n": self.n,
            "k": self.k,
            "m": self.matrix.m,
            "matrix": self.matrix.fingerprint(),
        }
        if self.eps is not None:
            d["eps"] = self.eps
        if self.seed is not None:
            d["seed"] = self.seed
        return d


def resolve_k(k: int | None, eps: float | None) -> int:
    if (k is None) == (eps is None):
        raise ParameterError("give exactly one of --k and --eps")
    if eps is not None:
        if not 0 < eps <= 1:
            raise ParameterError(f"eps must be in (0, 1], got {eps}")
        return math.ceil(1 / eps)
    if k < 1:
        raise ParameterError("k must be at least 1")
    return int(k)


def build_scheme(name: str, n: int, k: int, seed: int | None = None, eps: float | None = None) -> Scheme:
    if n < 2:
        raise ParameterError("n must be at least 2")
    if name == "general_linf":
        impl = build_combined_scheme(n, k, _seed(seed))
        return Scheme(name, n, k, None, _seed(seed), impl.matrix, impl)
    if name == "general_l1l1":
        e = 1.0 if eps is None else float(eps)
        impl = build_l1_scheme(n, k, e, _seed(seed))
        return Scheme(name, n, k, e, _seed(seed), impl.matrix, impl)
    if name == "strict":
        impl = SplitTree(n, k)
        return Scheme(name, n, k, None, None, impl, impl)
    if name == "worked_example":
        if n != 8:
            raise ParameterError("the worked example has n = 8")
        return Scheme(name, 8, 1, None, None, bucket_message_matrix(EXAMPLE_BUCKETS, EXAMPLE_MESSAGES))
    raise ParameterError(f"unknown scheme {name!r}")


def _seed(seed):
    if seed is None:
        raise ParameterError("general schemes need --seed")
    return int(seed)


def scheme_from_descriptor(desc: dict) -> Scheme:
    if desc.get("format") != DESCRIPTOR_FORMAT:
        raise StreamFormatError("not a sketch descriptor")
    try:
        sch = build_scheme(desc["scheme"], int(desc["n"]), int(desc["k"]), desc.get("seed"), desc.get("eps"))
    except KeyError as exc:
        raise StreamFormatError(f"descriptor lacks field {exc}") from None
    if sch.matrix.m != desc.get("m") or sch.matrix.fingerprint() != desc.get("matrix"):
        raise StateError("descriptor does not match the rebuilt matrix")
    return sch


def load_descriptor(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    try:
        desc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise StreamFormatError(f"descriptor is not JSON: {exc.msg}", exc.lineno) from None
    return desc, raw


def descriptor_hash(raw: bytes) -> bytes:
    return hashlib.sha256(descriptor_bytes(json.loads(raw))).digest()


# ------------------------------------------------------------------------
# state files


def write_state(path, desc_raw: bytes, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(STATE_MAGIC)
        fh.write(descriptor_hash(desc_raw))
        fh.write(struct.pack("<Q", values.shape[0]))
        fh.write(values.tobytes())


def read_state(path, desc_raw: bytes) -> np.ndarray:
    data = Path(path).read_bytes()
    head = len(STATE_MAGIC) + 32 + 8
    if len(data) < head or data[: len(STATE_MAGIC)] != STATE_MAGIC:
        raise StateError("not a sketch state file")
    if data[len(STATE_MAGIC) : len(STATE_MAGIC) + 32] != descriptor_hash(desc_raw):
        raise StateError("state was produced from a different descriptor")
    (m,) = struct.unpack("<Q", data[head - 8 : head])
    if len(data) != head + 8 * m:
        raise StateError("state file is truncated")
    return np.frombuffer(data, dtype="<f8", offset=head).astype(np.float64)


# ------------------------------------------------------------------------
# commands


def cmd_build(args) -> int:
    k = 1 if args.scheme == "worked_example" else resolve_k(args.k, args.eps)
    eps = args.eps if args.scheme == "general_l1l1" else None
    sch = build_scheme(args.scheme, args.n, k, args.seed, eps)
    text = json.dumps(sch.descriptor(), sort_keys=True, indent=2) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_ingest(args) -> int:
    desc, raw = load_descriptor(args.descriptor)
    sch = scheme_from_descriptor(desc)
    values = read_state(args.state, raw) if args.state else np.zeros(sch.matrix.m)
    idx, deltas = [], []
    running: dict[int, float] = {}
    with _open_in(args.input) as fh:
        for lineno, u in enumerate(read_stream(fh, sch.n), start=1):
            if sch.name == "strict":
                running[u.index] = running.get(u.index, 0.0) + u.delta
                if running[u.index] < 0:
                    raise StrictViolationError(f"update {lineno} drives coordinate {u.index} negative")
            idx.append(u.index)
            deltas.append(u.delta)
    if idx:
        # coalesce repeated indices; the sketch is linear
        i_arr, inv = np.unique(np.asarray(idx, dtype=np.int64), return_inverse=True)
        coef = np.bincount(inv, weights=np.asarray(deltas), minlength=i_arr.size)
        sch.matrix.accumulate_columns(values, i_arr, coef)
    if args.out:
        write_state(args.out, raw, values)
    if args.print_values:
        print(" ".join(repr(float(v)) for v in values))
    return EXIT_OK


def cmd_decode(args) -> int:
    desc, raw = load_descriptor(args.descriptor)
    sch = scheme_from_descriptor(desc)
    v = read_state(args.state, raw)
    if sch.name == "worked_example":
        code = CodeSpec(2, 2, 1, "repetition")
        bits = [decode_bucket_message(v[4 * b : 4 * b + 4], code) for b in range(2)]
        report = {"measurements": v.tolist(), "message": [int(t) for b in bits for t in b]}
        _emit(json.dumps(report) + "\n", args.out)
        return EXIT_OK
    t0 = time.perf_counter()
    xhat, cand = sch.decode(v)
    wall = time.perf_counter() - t0
    report = {
        "scheme": sch.name,
        "recovered": [[i, val] for i, val in xhat.ranked()],
        "m_rows": sch.matrix.m,
        "decode_wall_time": wall,
        "candidate_evaluations": cand,
    }
    if args.verify:
        with open(args.verify) as fh:
            x = read_signal(fh, sch.n)
        report["verification"] = verification(sch, x, xhat)
    _emit(format_report(report, args.format), args.out)
    if args.verify and args.strict_check and not report["verification"]["guarantee_satisfied"]:
        return EXIT_VERIFY
    return EXIT_OK


def verification(sch: Scheme, x: np.ndarray, xhat: SparseVector) -> dict:
    """Oracle block; the guarantee depends on the scheme's tail parameter."""
    k = sch.k
    err = linf_error(x, xhat)
    t_k, t_k2 = tail_norm(x, min(k, sch.n)), tail_norm(x, min(k * k, sch.n))
    out = {"linf_error": float(err), "tail_norm_k": t_k, "tail_norm_k2": t_k2}
    if sch.name == "general_l1l1":
        l1 = l1_error(x, xhat)
        out["l1_error"] = float(l1)
        ok = l1 <= Fraction(1 + sch.eps) * Fraction(t_k)
    elif sch.name == "general_linf":
        ok = err * k <= Fraction(t_k2)
    else:
        ok = err * k <= Fraction(t_k)
        if (x < 0).any():
            ok = False
            out["strict_violation"] = True
    out["guarantee_satisfied"] = bool(ok)
    return out


def format_report(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "estimate"])
    for i, val in report["recovered"]:
        w.writerow([i, repr(val)])
    return buf.getvalue()


def cmd_bench(args) -> int:
    k = resolve_k(args.k, args.eps)
    t0 = time.perf_counter()
    sch = build_scheme(args.scheme, args.n, k, args.seed, args.eps if args.scheme == "general_l1l1" else None)
    build_t = time.perf_counter() - t0
    rows = []
    for t in range(args.trials):
        x = planted_signal(args.n, k, 1000 + t, nonneg=args.scheme == "strict")
        a = time.perf_counter()
        v = sch.matrix.apply(x)
        b = time.perf_counter()
        xhat, cand = sch.decode(v)
        c = time.perf_counter()
        ok = verification(sch, x, xhat)["guarantee_satisfied"]
        rows.append((b - a, c - b, ok, cand))
    result = {
        "backend": kernels.BACKEND,
        "scheme": sch.name,
        "n": sch.n,
        "k": k,
        "m_rows": sch.matrix.m,
        "build_time": build_t,
        "apply_time_mean": float(np.mean([r[0] for r in rows])) if rows else None,
        "decode_time_mean": float(np.mean([r[1] for r in rows])) if rows else None,
        "satisfied": sum(r[2] for r in rows),
        "trials": len(rows),
    }
    _emit(json.dumps(result, indent=2) + "\n", args.out)
    return EXIT_OK


# ------------------------------------------------------------------------
# plumbing


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _open_in(path):
    return sys.stdin if path in (None, "-") else open(path)


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="detsketch", description="Deterministic l1 heavy-hitter sketches.")
    sub = p.add_subparsers(dest="command", required=True)

    def sizing(sp):
        sp.add_argument("--scheme", required=True, choices=SCHEMES + ("worked_example",), help="sketch family")
        sp.add_argument("--n", type=int, required=True, help="universe size")
        sp.add_argument("--k", type=int, help="sparsity")
        sp.add_argument("--eps", type=float, help="accuracy; sets k = ceil(1/eps)")
        sp.add_argument("--seed", type=int, help="matrix seed (general schemes)")

    b = sub.add_parser("build", help="write a matrix descriptor")
    sizing(b)
    b.add_argument("--out", help="descriptor path (default stdout)")
    b.set_defaults(func=cmd_build)

    g = sub.add_parser("ingest", help="apply an update stream to a sketch state")
    g.add_argument("--descriptor", required=True)
    g.add_argument("--in", dest="input", help="stream file, '<index> <delta>' per line (default stdin)")
    g.add_argument("--state", help="existing state to add to")
    g.add_argument("--out", help="state file to write")
    g.add_argument("--print", dest="print_values", action="store_true", help="print the sketch values")
    g.set_defaults(func=cmd_ingest)

    d = sub.add_parser("decode", help="recover heavy hitters from a sketch state")
    d.add_argument("--descriptor", required=True)
    d.add_argument("--state", required=True)
    d.add_argument("--verify", help="ground-truth signal, '<index> <value>' per line")
    d.add_argument("--strict-check", action="store_true", help="exit 4 when the verified guarantee fails")
    d.add_argument("--format", choices=("json", "csv"), default="json")
    d.add_argument("--out", help="report path (default stdout)")
    d.set_defaults(func=cmd_decode)

    bn = sub.add_parser("bench", help="time apply and decode on planted signals")
    sizing(bn)
    bn.add_argument("--trials", type=int, default=5)
    bn.add_argument("--out")
    bn.set_defaults(func=cmd_bench, seed=0)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, DimensionError) as exc:
        print(f"detsketch: parameter error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except StreamFormatError as exc:
        print(f"detsketch: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (StateError, StrictViolationError, OSError) as exc:
        print(f"detsketch: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
