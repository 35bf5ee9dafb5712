"""Catch a 150 us rollback with NTS interval consensus.

The shipped scenario pulls GNSS time 150 us behind, holds, and walks it
back. Consensus rejects once the pull leaves the NTS intervals and accepts
again as the rollback closes; Roughtime's 10 ms radius never notices.
"""

from __future__ import annotations

from pathlib import Path

from timeguard.harness import load_scenario, run_scenario

SCENARIO = Path(__file__).resolve().parents[1] / "scenarios" / "rollback_nts.yaml"


def main() -> None:
    res = run_scenario(load_scenario(SCENARIO))
    last = None
    print("    t   offset     decision   reference")
    for row, v in zip(res.timeseries, res.verdicts):
        key = (v["decision"], v["selected_reference"])
        if key != last or row["t"] % 60 == 0:
            print(f"{row['t']:5.0f} {row['true_offset'] * 1e6:8.1f} us  {v['decision']:10s} {v['selected_reference']}")
            last = key
    r = res.report
    print(f"detection latency {r.detection_latency:g} s, recovery {r.recovery_latency:g} s")
    print("first triggers:", {k: (None if f is None else f["t"]) for k, f in r.first_trigger.items()})


if __name__ == "__main__":
    main()
