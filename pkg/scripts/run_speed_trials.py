#!/usr/bin/env python3
"""Crawling-speed trials per topology on the 10-degree decline."""

import argparse

from trusslink.analysis import speed_table
from trusslink.experiments import BODY_LENGTHS, run_speed_trial


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cycles", type=int, default=8)
    parser.add_argument("--slope", type=float, default=10.0)
    parser.add_argument("--out", default="speeds.tsv")
    args = parser.parse_args()

    records = []
    for topology in BODY_LENGTHS:
        record, trajectory = run_speed_trial(
            topology, n_cycles=args.cycles, slope_deg=args.slope
        )
        records.append(record)
        note = " (truncated)" if trajectory.truncated else ""
        print(f"{topology}: mean {record.mean:.4f} BL/cycle{note}")
    table = speed_table(records)
    with open(args.out, "w") as fh:
        fh.write(table)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
