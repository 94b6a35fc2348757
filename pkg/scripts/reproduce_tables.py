#!/usr/bin/env python3
"""Print the port-scan table, thresholds and survival-duration grid for the
built-in profiles."""

import argparse

from ecattack.campaign import Testbed, find_threshold_ar, measure_sd
from ecattack.devicemodel import BUILTIN_PROFILES, PayloadClass
from ecattack.netsim import Protocol


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--protocol", default="tcp", help="protocol for the threshold search")
    args = ap.parse_args()
    proto = Protocol.parse(args.protocol)

    for name, factory in BUILTIN_PROFILES.items():
        profile = factory()
        bed = Testbed({name: profile}, metered=False)
        bed.associate_all()
        print(f"== {name}")
        for p in ("tcp", "udp"):
            counts = bed.attacker.scan_ports(name, p).as_dict()["counts"]
            print(f"  scan {p}: {counts}")
        for payload in PayloadClass:
            thr = find_threshold_ar(profile, proto, payload)
            print(f"  threshold {proto.value} {payload.value}: {'unbounded' if thr is None else thr}")
        for pr in Protocol:
            sds = {pl.value: measure_sd(profile, pr, pl) for pl in PayloadClass}
            print("  sd " + pr.value + ": " + ", ".join(
                f"{k}={'none' if v is None else format(v, '.3g')}" for k, v in sds.items()))


if __name__ == "__main__":
    main()
