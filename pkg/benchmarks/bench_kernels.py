"""Compare the numba and numpy kernel backends.

Times the forward-backward recursion behind ``bcjr_llrs`` and one sum-product
LDPC decode, after checking that both backends agree on the same input.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--n 200000]
"""

import argparse
import time

import numpy as np

from mmnoise import kernels
from mmnoise._accel import HAVE_NUMBA
from mmnoise.detect import bcjr_llrs
from mmnoise.harness import scale_profile_to_snr
from mmnoise.ldpc import peg_regular
from mmnoise.model import ev_reference_profile
from mmnoise.synth import synthesize_noise


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation for numba
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=200_000, help="samples for the BCJR benchmark")
    ap.add_argument("--codewords", type=int, default=20, help="LDPC decodes per timing")
    args = ap.parse_args()

    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    prof = scale_profile_to_snr(ev_reference_profile(), 3.0)
    rng = np.random.default_rng(0)
    y = rng.choice([-1.0, 1.0], args.n) + synthesize_noise(prof, args.n, seed=1, mode="real").samples

    code = peg_regular(1024, seed=1)
    sigma2 = 1.0 / (2 * 0.5 * 10 ** 0.25)
    llrs = [2 * (1 + np.sqrt(sigma2) * rng.standard_normal(code.n)) / sigma2 for _ in range(args.codewords)]

    def decode_all():
        return [code.decode(v, 50) for v in llrs]

    results, outputs = {}, {}
    for name in backends:
        kernels.set_backend(name)
        results[name] = (
            best_of(lambda: bcjr_llrs(y, prof), args.repeat),
            best_of(decode_all, args.repeat),
        )
        outputs[name] = (bcjr_llrs(y, prof), decode_all())

    if len(backends) == 2:
        diff = np.max(np.abs(outputs["numpy"][0] - outputs["numba"][0]))
        same = all(np.array_equal(a[0], b[0]) for a, b in zip(outputs["numpy"][1], outputs["numba"][1]))
        print(f"max LLR difference between backends: {diff:.2e}; identical decoded bits: {same}")

    print(f"{'backend':<8} {'bcjr (s)':>10} {'Msamples/s':>11} {'ldpc (s)':>10} {'codewords/s':>12}")
    for name, (t_fb, t_bp) in results.items():
        print(f"{name:<8} {t_fb:10.4f} {args.n / t_fb / 1e6:11.2f} {t_bp:10.4f} {args.codewords / t_bp:12.1f}")
    if len(backends) == 2:
        print(
            f"numba speed-up: bcjr x{results['numpy'][0] / results['numba'][0]:.1f}, "
            f"ldpc x{results['numpy'][1] / results['numba'][1]:.1f}"
        )


if __name__ == "__main__":
    main()
