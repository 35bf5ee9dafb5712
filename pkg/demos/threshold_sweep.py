"""Sweep step pushes across the Roughtime and NTS detection limits."""

from __future__ import annotations

from pathlib import Path

from timeguard.harness import sweep, sweep_csv
from timeguard.harness.config import load_raw

SCENARIO = Path(__file__).resolve().parents[1] / "scenarios" / "step_push.yaml"


def main() -> None:
    cells = sweep(load_raw(SCENARIO), {"attack.step_offset": [1e-4, 5e-4, 5e-3, 5e-2, 5e-1]}, workers=2)
    print(sweep_csv(cells), end="")


if __name__ == "__main__":
    main()
