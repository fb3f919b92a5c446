"""Chair center from the PCA box vs the raw centroid, on self-occluded clouds.

Sweeps the viewing distance and the cloud density; prints planar MSE for both
estimators and their ratio.
"""
import argparse

import numpy as np

from homemanip.perception import estimate_chair_center
from homemanip.sim.corpus import occluded_chair


def errors(n, seed, **kw):
    box, raw = [], []
    for i in range(n):
        s = occluded_chair(seed + i, **kw)
        est = estimate_chair_center(s.cloud)
        mean = s.cloud.points.mean(axis=0)
        box.append(np.sum((est[:2] - s.true_center[:2]) ** 2))
        raw.append(np.sum((mean[:2] - s.true_center[:2]) ** 2))
    return float(np.mean(box)), float(np.mean(raw))


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--chairs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    print(f"{'distance':>8} {'points':>6} {'box MSE':>10} {'mean MSE':>10} {'ratio':>6}")
    for distance in (0.8, 1.2, 2.0):
        for n_points in (500, 2000):
            box, raw = errors(args.chairs, args.seed, distance=distance, n_points=n_points)
            print(f"{distance:8.1f} {n_points:6d} {box:10.5f} {raw:10.5f} {box / raw:6.3f}")


if __name__ == "__main__":
    main()
