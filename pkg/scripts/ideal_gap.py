"""Bayes-ideal ceiling for the ADDLE-mean vs pooled-baseline comparison.

For each simulated rater the expected label given x has a closed form,
    E[y_r | x] = sum_k Phi((s + w_r.x - tau_k - delta_rk) / sigma_r),
so the best any pooled classifier can learn is the assignment-weighted mix of
these curves, and the best mean virtual rater is their unweighted average.
The JT gap between the two bounds what the trained comparison can show.

    python scripts/ideal_gap.py --seeds 20 --exponents 1.0 1.5 2.0
"""
import argparse
from statistics import NormalDist

import numpy as np

from addle import metrics, sim

_cdf = np.vectorize(NormalDist().cdf)


def expected_label(gt, prof):
    s = gt.severity + gt.X @ prof.w
    diff = s[:, None] - prof.perceived_thresholds(gt.thresholds)[None, :]
    if prof.noise == 0:
        return (diff > 0).sum(axis=1).astype(float)
    return _cdf(diff / prof.noise).sum(axis=1)


def one_seed(seed, exponent, N=4000, R=8, D=16, K=4):
    ds, profiles = sim.simulate(N=N, D=D, K=K, R=R, exponent=exponent, seed=seed)
    share = np.bincount(ds.raters, minlength=R) / len(ds)
    # evaluate on fresh samples, like a held-out test split
    gt = sim.gen_samples(N, D, K, seed=seed + 10_000)
    curves = np.stack([expected_label(gt, p) for p in profiles])
    pooled = share @ curves
    mean = curves.mean(axis=0)
    return metrics.jt_index(mean, gt.true_labels) - metrics.jt_index(pooled, gt.true_labels)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--exponents", type=float, nargs="+", default=[1.0, 1.5, 2.0])
    args = ap.parse_args()
    print("exponent\tmean_gap\tmin\tmax")
    for e in args.exponents:
        gaps = np.array([one_seed(s, e) for s in range(args.seeds)])
        print(f"{e}\t{gaps.mean():+.4f}\t{gaps.min():+.4f}\t{gaps.max():+.4f}")


if __name__ == "__main__":
    main()
