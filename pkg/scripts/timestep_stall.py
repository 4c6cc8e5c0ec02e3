"""Iteration traces of the pragmatic estimation on the 2x2 membrane, p = 2..6.

Shows where the maximum frequency stops falling for higher degrees, which is
what limits the p-independence of the improved critical time step.
"""
import argparse

from perturbiga import algorithm1_estimate, assemble
from perturbiga.dynamics import critical_timestep
from perturbiga.spectral import PROBLEMS

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--elements", type=int, default=10)
    ap.add_argument("--problem", default="fixed_membrane")
    args = ap.parse_args()
    prob = PROBLEMS[args.problem]
    for p in range(2 if prob.kind.operator_order == "second" else 3, 7):
        ops = assemble(prob.build_space(p, 2, args.elements))
        prm = algorithm1_estimate(ops)
        ws = " ".join(f"{t.omega_max:.1f}" for t in prm.trace)
        print(f"p={p}: omega_max per iteration {ws}")
        print(f"      dt_crit {critical_timestep(prm.trace[0].omega_max):.4g} -> {critical_timestep(prm.omega_max):.4g}")
