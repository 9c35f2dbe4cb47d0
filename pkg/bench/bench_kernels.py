"""Time the numba kernels against their numpy twins.

    python bench/bench_kernels.py [--repeat 20]

Both paths are imported directly, so the environment flag does not matter
here.  The first numba call (compilation, or loading the cache) is excluded.
"""

import argparse
import timeit

import numpy as np

from spreadlab import _kernels as k
from spreadlab.simkit import fgn_autocovariance


def cases(rng):
    eps = rng.standard_normal(28_800)
    keep = rng.random(28_800) < 0.1
    keep[0] = True
    x = np.cumsum(eps)
    beta = rng.uniform(1e-6, 1e-4, 479)
    gamma = beta * rng.uniform(0.3, 0.9, 479)
    acov = fgn_autocovariance(np.arange(2_000), 0.7)
    z = rng.standard_normal(2_000)
    return {
        "ar1 (n=28800)": ("ar1", (0.0, 0.99, 0.14, eps)),
        "carry_forward (n=28800, pi=0.1)": ("carry_forward", (x, keep)),
        "cs_solve (479 windows)": ("cs_solve", (beta, gamma, 1e-14, 200)),
        "durbin_levinson (n=2000)": ("durbin_levinson", (acov, z)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not k.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for label, (name, a) in cases(rng).items():
        f_nb, f_np = getattr(k, name + "_nb"), getattr(k, name + "_np")
        r_nb, r_np = f_nb(*a), f_np(*a)
        if not isinstance(r_nb, tuple):
            r_nb, r_np = (r_nb,), (r_np,)
        for u, v in zip(r_nb, r_np):
            np.testing.assert_allclose(u, v, rtol=1e-9, atol=1e-12)
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat)) * 1e3
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:34s} {t_nb:10.3f} {t_np:10.3f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
