"""Weekly block averages against weekly Shepard and linear interpolation.

    python3 scripts/resampling_comparison.py --seeds 10
"""

import argparse
import math
from datetime import timedelta

from wbe import metrics, series as sr
from wbe.preprocess import BiomarkerConfig, preprocess
from wbe.synthetic import Scenario, generate


def compare(s, interp):
    block = sr.block_average_downsample(s)
    monday = s.first + timedelta(days=(7 - s.first.weekday()) % 7)
    other = interp(s, 7, start=monday, end=s.last)
    ov = dict(zip(other.dates, other.values))
    pairs = [(v, ov[d]) for d, v in zip(block.dates, block.values) if d in ov and not math.isnan(v)]
    x, y = zip(*pairs)
    return metrics.pearson_r(x, y), metrics.msim(x, y)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    print(f"{'sampling':14s} {'method':8s} {'min r':>7s} {'mean r':>7s} {'mean MSIM':>9s}")
    for sampling in ("daily", "twice-weekly", "irregular"):
        for name, f in (("shepard", sr.shepard_interpolate), ("linear", sr.linear_interpolate)):
            rs, ms = [], []
            for seed in range(args.seeds):
                g = generate(Scenario(seed=seed, sampling=sampling))
                s = preprocess(g.samples, BiomarkerConfig(), g.flow_history).series()
                r, m = compare(s, f)
                rs.append(r)
                ms.append(m)
            print(f"{sampling:14s} {name:8s} {min(rs):7.4f} {sum(rs) / len(rs):7.4f} {sum(ms) / len(ms):9.4f}")


if __name__ == "__main__":
    main()
