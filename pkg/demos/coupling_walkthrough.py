"""Walk through the coupled environment on a small window.

One hashed uniform pair per edge drives every density p at once: raising p
only opens edges, so passage times can only drop. The script prints a few
edges at two densities, then checks monotonicity over the whole window and
locates a hole of the q-percolation (a site outside the proxy cluster).
"""

import numpy as np

from percofpp import (
    BoxRegion,
    CoupledEnvironment,
    EnvironmentParams,
    WeightLaw,
    box_edges,
    hole_size,
    label_clusters,
    lambda_for,
)

SEED = 20240817
LAW = WeightLaw.uniform(0.0, 1.0)
P_LOW, P_HIGH = 0.85, 0.95
P0, DELTA0 = 0.85, 0.2


def main():
    window = BoxRegion((0, 0), 24)
    env = CoupledEnvironment(window=window, seed=SEED, law=LAW)
    lam = lambda_for(LAW, P0, DELTA0, 2)
    params = EnvironmentParams(
        d=2, law=LAW, p=P_LOW, p0=P0, delta0=DELTA0, lam=lam
    )
    print(f"law {LAW.spec_string()}, lambda = {lam:.4f}, q = {params.q:.4f}")

    edges = list(box_edges(BoxRegion((0, 0), 2)))
    print("\nfirst edges of the inner box at two densities:")
    for e in edges[:6]:
        w_low = env.weight(e, P_LOW)
        w_high = env.weight(e, P_HIGH)
        print(f"  {e.x}-{e.y}  tau(p={P_LOW})={w_low:8.4f}  tau(p={P_HIGH})={w_high:8.4f}")

    violations = 0
    total = 0
    for e in box_edges(window):
        total += 1
        if env.weight(e, P_HIGH) > env.weight(e, P_LOW):
            violations += 1
    print(f"\nmonotone coupling over {total} edges: {violations} violations")

    labeling = label_clusters(env, window, params, openness="q")
    holes = []
    for x in range(-10, 11):
        for y in range(-10, 11):
            h = hole_size((x, y), labeling)
            if h > 0:
                holes.append(((x, y), h))
    if holes:
        site, h = max(holes, key=lambda t: t[1])
        print(f"holes found: {len(holes)}; largest at {site} with size {h}")
    else:
        print("no holes in the scanned block (q is high, holes are rare)")
    rng = np.random.default_rng(0)
    probe = tuple(int(v) for v in rng.integers(-20, 21, size=2))
    print(f"random probe {probe}: hole size {hole_size(probe, labeling)}")


if __name__ == "__main__":
    main()
