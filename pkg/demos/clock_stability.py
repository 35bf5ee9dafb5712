"""Characterize the three oscillator tiers by their Allan deviation.

Each clock is synthesized for about four and a half days at 1 s, its
deviation computed on a 1-2-5 grid, every decade classified by slope, and
the result turned into Kalman noise parameters. The last decade straddles the turn from white
to random-walk frequency noise, so its fitted slope sits near zero.
"""

from __future__ import annotations

from timeguard.allan import allan_curve, classify_noise, decade_taus, kalman_params_from_allan
from timeguard.oscillator import TIERS, synthesize_phase
from timeguard.timebase import Rng


def main() -> None:
    for name, spec in TIERS.items():
        series = synthesize_phase(spec, 400_000, 1.0, Rng(1))
        curve = allan_curve(series, decade_taus(1.0, 0, 5))
        cls = classify_noise(curve)
        print(f"{name}")
        for tau in (1.0, 10.0, 100.0, 1000.0, 10_000.0, 100_000.0):
            print(f"  adev({tau:>7g} s) = {curve.adev_at(tau):.2e}")
        print("  regimes per decade:", ", ".join(str(r) for r in cls.regimes()))
        for a, b, tau in cls.crossovers:
            print(f"  {a} -> {b} near {tau:.0f} s")
        p = kalman_params_from_allan(cls)
        print(f"  kalman q_bias={p.q_bias:.2e} (true {spec.q_bias:.0e}) q_drift={p.q_drift:.2e}")


if __name__ == "__main__":
    main()
