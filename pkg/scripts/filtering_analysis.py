"""How often each (channel, kernel) entry is filtered out across trials.

Prints the channel x kernel drop counts and the per-family and per-kernel
totals, in the spirit of a filtering-probability figure.

    python scripts/filtering_analysis.py --ids 100 --trials 10 --out filter_frequency.csv
"""
import argparse

import numpy as np

from mckcca.bank import KccaConfig
from mckcca.evaluation import SplitProtocol, filtering_report
from mckcca.pipeline import run_protocol, synthetic_features
from mckcca.synth import SyntheticSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ids", type=int, default=100)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--noise", type=float, default=0.6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", help="CSV path for the count matrix")
    args = ap.parse_args()

    spec = SyntheticSpec(identity_count=args.ids, noise=args.noise, seed=args.seed)
    feats, cat = synthetic_features(spec, workers=args.workers)
    trials, _ = run_protocol(feats, cat, SplitProtocol(seed=args.seed, trial_count=args.trials),
                             KccaConfig(seed=args.seed, workers=args.workers),
                             methods=("filteredLR",))
    report = filtering_report([t.weights["filteredLR"] for t in trials], trials[0].layout)
    print(report.to_csv())

    families = {}
    for ch, total in zip(report.channels, report.channel_totals):
        families[ch.family] = families.get(ch.family, 0) + int(total)
    possible = report.trial_count * len(report.kernels) * 4
    print("drop rate by family:")
    for fam, total in families.items():
        print(f"  {fam:>4} {total / possible:.3f}")
    print("drop rate by kernel:")
    per_kernel = report.trial_count * len(report.channels)
    for k, total in zip(report.kernels, report.kernel_totals):
        print(f"  {str(k):>7} {total / per_kernel:.3f}")
    print(f"mean entries kept: {np.mean([t.weights['filteredLR'].active_mask[:-1].sum() for t in trials]):.1f}"
          f" of {report.counts.size}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_csv())


if __name__ == "__main__":
    main()
