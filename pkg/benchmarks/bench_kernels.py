"""Compare the compiled and numpy GRU kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints microseconds per sample for the forward pass and for loss+gradient,
plus the largest difference between the two backends' outputs.
"""

import argparse
import timeit

import numpy as np

from epicast.gru import init_params
from epicast.gru.kernels import available_backends

CASES = [  # (hidden, lookback, batch)
    (16, 14, 1),
    (16, 14, 32),
    (32, 14, 32),
    (32, 14, 256),
    (64, 19, 32),
]


def best_time(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'hidden':>6} {'L':>3} {'batch':>5} {'kernel':>8} " + " ".join(f"{b:>10}" for b in backends)
          + "   speedup  max|diff|")
    for hidden, L, B in CASES:
        t = init_params(3, hidden, 0).tensors()
        X = rng.uniform(0, 1, (B, L, 3))
        Y = rng.uniform(0, 1, (B, 3))
        number = max(1, 2000 // B)
        for kind in ("forward", "grad"):
            times, outs = {}, {}
            for name, mod in backends.items():
                if kind == "forward":
                    fn = lambda mod=mod: mod.forward_batch(t, X)
                else:
                    fn = lambda mod=mod: mod.loss_and_grad_batch(t, X, Y)
                times[name] = best_time(fn, args.repeat, number) / B * 1e6
                out = fn()
                if kind == "forward":
                    outs[name] = np.ravel(out)
                else:
                    outs[name] = np.concatenate([np.ravel(out[0])] + [np.ravel(g) for g in out[1]])
            diff = max(float(np.max(np.abs(outs[n] - outs["python"]))) for n in outs)
            speed = times["python"] / times["cython"] if "cython" in times else 1.0
            print(f"{hidden:>6} {L:>3} {B:>5} {kind:>8} " + " ".join(f"{times[n]:>8.2f}us" for n in backends)
                  + f"   {speed:>6.2f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
