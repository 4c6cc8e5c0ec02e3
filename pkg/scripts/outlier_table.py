"""Print discrete interior outlier counts next to the closed-form counts."""
import argparse

from perturbiga import assemble, count_interior_outliers, flag_outliers, solve_gevp
from perturbiga.spectral import PROBLEMS


def table(elements: int):
    rows = []
    for problem, degrees, patches in (("fixed_bar", range(2, 6), (2, 3, 5)), ("ss_beam", range(3, 7), (2, 3))):
        prob = PROBLEMS[problem]
        for p in degrees:
            for npatch in patches:
                s = prob.build_space(p, npatch, elements)
                ops = assemble(s)
                found = int(flag_outliers(solve_gevp(ops.K, ops.M), ops).sum())
                rows.append((problem, p, npatch, found, count_interior_outliers(s.kind, p, npatch)))
    return rows


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--elements", type=int, default=10, help="elements per patch")
    print(f"{'problem':<10} {'p':>2} {'Np':>3} {'found':>6} {'formula':>8}")
    for r in table(ap.parse_args().elements):
        print(f"{r[0]:<10} {r[1]:>2} {r[2]:>3} {r[3]:>6} {r[4]:>8}")
