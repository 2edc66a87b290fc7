"""Benchmark the numba statevector kernels against the pure-numpy fallback.

Backend choice is frozen at import time, so the parent process launches one
worker subprocess per backend (QMOLGEN_NUMBA=on / off) and compares the
reported throughputs. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--scores 400] [--qubits 4 6 8]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def run_worker(qubit_sizes, scores):
    from qmolgen._kernels import backend_name
    from qmolgen.qcircuits import Mode, attention_score, random_spec
    from qmolgen.rng import rng_for

    results = {"backend": backend_name(), "rows": []}
    for working in qubit_sizes:
        reg = working // 2
        rng = rng_for(99, "bench", working)
        specs = [random_spec(rng, Mode.SEQUENCE_ONLY, reg) for _ in range(scores)]
        attention_score(specs[0])  # trigger JIT before timing
        started = time.perf_counter()
        for spec in specs:
            attention_score(spec)
        elapsed = time.perf_counter() - started
        results["rows"].append(
            {"working_qubits": working, "scores": scores, "seconds": elapsed}
        )
    json.dump(results, sys.stdout)
    sys.stdout.write("\n")


def launch(flag, argv):
    env = dict(os.environ, QMOLGEN_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--worker", *argv],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(out.stdout.splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scores", type=int, default=400,
                        help="attention scores per timing (default 400)")
    parser.add_argument("--qubits", type=int, nargs="+", default=[4, 6, 8],
                        help="working-register sizes to time (default 4 6 8)")
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        run_worker(args.qubits, args.scores)
        return

    argv = ["--scores", str(args.scores), "--qubits", *map(str, args.qubits)]
    numpy_run = launch("off", argv)
    numba_run = launch("on", argv)
    assert numpy_run["backend"] == "numpy" and numba_run["backend"] == "numba"

    print(f"{'working qubits':>14}  {'numpy scores/s':>14}  "
          f"{'numba scores/s':>14}  {'speedup':>7}")
    for base, fast in zip(numpy_run["rows"], numba_run["rows"]):
        n_rate = base["scores"] / base["seconds"]
        b_rate = fast["scores"] / fast["seconds"]
        print(f"{base['working_qubits']:>14}  {n_rate:>14.0f}  "
              f"{b_rate:>14.0f}  {b_rate / n_rate:>6.1f}x")


if __name__ == "__main__":
    main()
