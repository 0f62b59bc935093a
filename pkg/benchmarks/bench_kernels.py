#!/usr/bin/env python3
"""Compare the compiled hash kernels against the pure-Python fallback.

The backend is chosen once at import time, so each backend runs in its own
child process and the parent prints a side-by-side table:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --entries 20000 --repeat 5 --json out.json
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

ROWS = (
    ("hash_leaves_ms", "hash_leaves (ms)"),
    ("merkle_root_ms", "merkle_root (ms)"),
    ("chain_ms", "hash chain (ms)"),
    ("inclusion_path_ms", "inclusion path (ms)"),
    ("append_rate", "log appends (1/s)"),
    ("integrity_ms", "integrity replay (ms)"),
)


def run_single(entries: int, repeat: int) -> dict:
    from manifestd import _kernels
    from manifestd.manifest import ManifestDigest
    from manifestd.translog import TransparencyLog, check_integrity

    # padded to roughly the size of a real log record
    records = [
        hashlib.sha256(i.to_bytes(4, "big")).digest() + bytes(180)
        for i in range(entries)
    ]
    digests = [ManifestDigest(r[:32]) for r in records]

    def best(fn) -> float:
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        return min(times)

    leaves = _kernels.hash_leaves(records)

    def chain() -> None:
        value = bytes(32)
        for leaf in leaves:
            value = _kernels.chain_update(value, leaf)

    out = {
        "backend": _kernels.BACKEND,
        "entries": entries,
        "hash_leaves_ms": best(lambda: _kernels.hash_leaves(records)) * 1e3,
        "merkle_root_ms": best(lambda: _kernels.merkle_root(leaves)) * 1e3,
        "chain_ms": best(chain) * 1e3,
        "inclusion_path_ms": best(
            lambda: _kernels.inclusion_path(leaves, entries // 2)
        ) * 1e3,
    }

    append_times = []
    integrity_times = []
    for _ in range(repeat):
        with tempfile.TemporaryDirectory(prefix="bench-log-") as tmp:
            t0 = time.perf_counter()
            with TransparencyLog(Path(tmp) / "log") as log:
                for i, dig in enumerate(digests):
                    log.append(dig, b"\x00" * 64, f"k{i % 3}", appended_at=i)
            append_times.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            report = check_integrity(Path(tmp) / "log")
            integrity_times.append(time.perf_counter() - t0)
            if not report.ok:
                raise RuntimeError(f"integrity check failed during benchmark: {report}")
    out["append_rate"] = entries / min(append_times)
    out["integrity_ms"] = min(integrity_times) * 1e3
    return out


def run_backend(pure: bool, entries: int, repeat: int) -> dict:
    env = dict(os.environ)
    if pure:
        env["MANIFESTD_PURE_PYTHON"] = "1"
    else:
        env.pop("MANIFESTD_PURE_PYTHON", None)
    proc = subprocess.run(
        [sys.executable, __file__, "--single",
         "--entries", str(entries), "--repeat", str(repeat)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(proc.stdout)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--entries", type=int, default=10_000)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--json", type=Path, help="also write results as JSON")
    parser.add_argument("--single", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args(argv)

    if args.single:
        print(json.dumps(run_single(args.entries, args.repeat)))
        return 0

    pure = run_backend(True, args.entries, args.repeat)
    compiled = run_backend(False, args.entries, args.repeat)

    print(f"kernel benchmark: {args.entries} entries, best of {args.repeat}")
    if compiled["backend"] == pure["backend"]:
        print("note: compiled extension not built; both columns ran the fallback")
    header = f"{'':24}  {pure['backend']:>14}  {compiled['backend']:>14}  {'ratio':>7}"
    print(header)
    for key, label in ROWS:
        a, b = pure[key], compiled[key]
        # rates favour large numbers, times favour small ones
        ratio = (b / a) if key == "append_rate" else (a / b)
        print(f"{label:24}  {a:14.2f}  {b:14.2f}  {ratio:6.2f}x")

    if args.json:
        args.json.write_text(
            json.dumps({"pure": pure, "compiled": compiled}, indent=2) + "\n"
        )
        print(f"wrote {args.json}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
