"""Rim-bin selection rate on buckets with and without an over-rim handle."""
import argparse
from collections import Counter

from homemanip.errors import NoRimFound
from homemanip.geometry import Label
from homemanip.perception import estimate_bucket_rim
from homemanip.sim.corpus import bucket_with_handle


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--buckets", type=int, default=100)
    args = p.parse_args()
    for handle in (True, False):
        tally = Counter()
        for seed in range(args.buckets):
            s = bucket_with_handle(seed, handle=handle)
            try:
                rim = estimate_bucket_rim(s.cloud.select(Label.BUCKET))
            except NoRimFound:
                tally["no rim"] += 1
                continue
            tally["correct" if abs(rim.rim_height - s.spec.height) <= 0.01 else "wrong bin"] += 1
        print(f"handle={handle}: {dict(tally)}")


if __name__ == "__main__":
    main()
