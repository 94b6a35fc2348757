#!/usr/bin/env python3
"""Sweep the F-AP injection length and report the pooled attribution split.

This is how the shipped 19-minute default was chosen: the EC-DDoS phase stays
at 30 minutes and the injection length is the knob.

    python3 scripts/calibrate_attribution.py --minutes 10 15 19 25 30
"""

import argparse

from ecattack.campaign import EC_DDOS, F_AP, CampaignPlan, FapPlan, run_full_campaign
from ecattack.devicemodel import arduino, raspberry_pi


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--minutes", type=float, nargs="+", default=[10, 15, 19, 25, 30])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = ap.parse_args()

    print("fap_min  seed  pooled_ecddos  pooled_fap")
    for minutes in args.minutes:
        for seed in args.seeds:
            plan = CampaignPlan({"raspberry_pi": raspberry_pi(), "arduino": arduino()},
                                fap=FapPlan(minutes=minutes), seed=seed, measure_thresholds=False)
            pooled = run_full_campaign(plan).attribution["pooled"]
            print(f"{minutes:7g}  {seed:4d}  {pooled.get(EC_DDOS, 0):13.4f}  {pooled.get(F_AP, 0):10.4f}")


if __name__ == "__main__":
    main()
