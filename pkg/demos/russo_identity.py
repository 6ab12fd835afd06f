"""Exact derivative identity on the built-in small graphs.

E[X_p] is a polynomial in p once the per-edge states are enumerated, so its
derivative can be compared against the per-edge resampling sum with rational
arithmetic: both sides are evaluated exactly and the discrepancy must be
zero, not merely small.
"""

from percofpp import BUILTIN_RUSSO, russo_exact_check

GRID = (0.3, 0.5, 0.7)


def main():
    for name in ("single-edge", "square", "grid-2x3"):
        instance = BUILTIN_RUSSO[name]()
        report = russo_exact_check(instance, GRID)
        print(f"{name}: {len(instance.edges)} edges, {report.states} states")
        for p, lhs, rhs, disc in zip(
            report.p_grid, report.lhs, report.rhs, report.discrepancy
        ):
            print(
                f"  p = {p:.1f}  d/dp E[X] = {lhs:+.12f}"
                f"  resampling sum = {rhs:+.12f}  |diff| = {disc}"
            )
        print(f"  max discrepancy {report.max_discrepancy}")


if __name__ == "__main__":
    main()
