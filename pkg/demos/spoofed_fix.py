"""Steer a receiver's time solution with a pseudorange ramp.

The spoofer adds the same c*a(t) to every pseudorange. The position fix
does not move, the solved clock bias follows a(t), and the reported time
falls behind truth by exactly that amount.
"""

from __future__ import annotations

import numpy as np

from timeguard.adversary import AttackProfile, RampSegment, offset_at, spoofed_pseudorange_delta
from timeguard.gnss_sim import EARTH_RADIUS, inject_spoof, make_constellation, solve_pnt4, synthesize_pseudoranges
from timeguard.timebase import Rng, TimePoint


def main() -> None:
    rx = np.array([EARTH_RADIUS, 0.0, 0.0])
    geom = make_constellation(8, Rng(3), rx)
    attack = AttackProfile(kind="ramp", start=100.0, ramp_segments=(RampSegment.from_mps(900.0, 9.0),))
    noise = Rng(4)
    print("   t      a(t)         solved bias   position error   reported lag")
    for t in (0.0, 100.0, 200.0, 500.0, 1000.0):
        now = TimePoint.from_seconds(t)
        pr = synthesize_pseudoranges(geom, rx, 0.0, noise, 0.5, epoch=now)
        pr = inject_spoof(pr, spoofed_pseudorange_delta(attack, t, len(geom)))
        sol = solve_pnt4(pr, geom, initial_pos=rx)
        a = float(offset_at(attack, t))
        lag = float(now - sol.utc_time)
        err = float(np.linalg.norm(sol.position - rx))
        print(f"{t:6.0f}  {a * 1e9:9.1f} ns  {float(sol.clock_bias) * 1e9:9.1f} ns  {err:10.2f} m  {lag * 1e9:9.1f} ns")


if __name__ == "__main__":
    main()
