"""Query the simulated Roughtime and NTS catalog, then clog the path.

Roughtime answers with a signed midpoint and a fixed radius, so congestion
only costs timeouts. NTS compensates for delay, so congestion widens its
root distance and adds jitter to the offset estimate.
"""

from __future__ import annotations

import numpy as np

from timeguard.netsources import NetworkState, QueryTimeout, default_catalog, query_nts, query_roughtime
from timeguard.timebase import Rng, TimePoint


def survey(clog: float, n: int = 500) -> None:
    rng = Rng(9)
    now = TimePoint.from_seconds(0.0)
    net = NetworkState(clog_factor=clog, drop_threshold=0.1)
    print(f"clog x{clog:g}")
    for server in default_catalog():
        ok, lost, widths, theta = 0, 0, [], []
        for _ in range(n):
            try:
                if server.kind == "roughtime":
                    widths.append(query_roughtime(server, net, now, rng).radius)
                else:
                    s = query_nts(server, net, 0.0, now, rng)
                    widths.append(s.root_distance)
                    theta.append(s.offset_theta)
                ok += 1
            except QueryTimeout:
                lost += 1
        width = f"{np.mean(widths) * 1e6:9.1f} us" if widths else "        -"
        spread = f"theta sd {np.std(theta) * 1e6:7.2f} us" if theta else ""
        print(f"  {server.id:6s} {server.kind:9s} half-width {width}  timeouts {lost:4d}/{n}  {spread}")


def main() -> None:
    survey(1.0)
    survey(20.0)


if __name__ == "__main__":
    main()
