"""Reroute one geodesic around one of its edges.

Takes the canonical truncated geodesic across the origin, picks an edge
near the middle, resolves its effective radius by exact enumeration, and
builds the bypass: the detour must avoid the inner annulus hole, use only
q-open connector edges, and stay within the span_factor * R step budget.
"""

import math

from percofpp import (
    BoxRegion,
    CoupledEnvironment,
    EnvironmentParams,
    RadiusParams,
    WeightLaw,
    WeightView,
    build_bypass,
    effective_radius,
    lambda_for,
    passage_time_and_path,
    path_edges,
)

SEED = 424242
LAW = WeightLaw.uniform(0.0, 1.0)
P, P0, DELTA0 = 0.85, 0.85, 0.2
SPAN = 24


def main():
    lam = lambda_for(LAW, P0, DELTA0, 2)
    params = EnvironmentParams(d=2, law=LAW, p=P, p0=P0, delta0=DELTA0, lam=lam)
    rparams = RadiusParams(H=math.log(64) ** 3, nmax=32)

    window = BoxRegion((0, 0), 10 * rparams.nmax + SPAN + 4)
    env = CoupledEnvironment(window=window, seed=SEED, law=LAW)
    region = BoxRegion((0, 0), SPAN + 6)
    view = WeightView(env=env, params=params, M=rparams.H, region=region)
    t, geo = passage_time_and_path(view, (-SPAN, 0), (SPAN, 0))
    hops = len(geo.vertices) - 1
    print(f"geodesic (-{SPAN},0) -> ({SPAN},0): T = {t:.4f}, {hops} edges")

    edges = list(path_edges(list(geo.vertices)))
    e = edges[len(edges) // 2]
    print(f"perturbing the middle edge {e.x}-{e.y}")

    res = effective_radius(env, e, params, rparams, mode="exact")
    if res.censored:
        print(f"radius censored at nmax={rparams.nmax}; nothing to build")
        return
    print(f"effective radius R = {res.value} (method {res.method})")

    bp = build_bypass(geo.vertices, e, res.value, env, params, rparams)
    print(f"bypass feasible: {bp.feasible}")
    if bp.feasible:
        print(f"  detour edges |eta \\ gamma| = {bp.extra_edges}")
        print(f"  budget span_factor * R   = {rparams.span_factor * res.value}")
        print(f"  annulus avoidance + q-openness verified: {bp.ok}")
    else:
        print(f"  rejected: {bp.rejected}")


if __name__ == "__main__":
    main()
