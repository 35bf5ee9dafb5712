"""A ramp below the per-sample gate, caught over a longer baseline.

At 30 ns/s the Kalman innovation gate fires almost at once. At 5 ns/s each
epoch's innovation stays inside the gate, yet 100 s of accumulated drift
dwarfs what the OCXO can wander in that time.
"""

from __future__ import annotations

from pathlib import Path

from timeguard.harness import run_scenario, scenario_from_dict, set_dotted
from timeguard.harness.config import load_raw

SCENARIO = Path(__file__).resolve().parents[1] / "scenarios" / "ramp_ocxo.yaml"


def main() -> None:
    base = load_raw(SCENARIO)
    for rate in (30e-9, 5e-9):
        raw = set_dotted(base, "attack.segments", [{"duration": 700, "rate": rate}])
        raw = set_dotted(raw, "duration", 1000)
        raw = set_dotted(raw, "detectors.two_point_baselines", [100])
        rep = run_scenario(scenario_from_dict(raw)).report
        first = {k: (None if f is None else f["latency"]) for k, f in rep.first_trigger.items()}
        print(f"{rate * 1e9:4.0f} ns/s: kalman after {first['kalman']} s, two-point after {first['two_point']} s")
    print("calibrated ref adev:", rep.tuning["ref_adev"])


if __name__ == "__main__":
    main()
