"""End-to-end acceptance checks, one test per criterion.

Each check records a PASS/FAIL line (shown in the pytest terminal summary).
The p-independence part of the critical-time-step criterion is not met by
the pragmatic estimation for p >= 4 and is marked as a strict expected failure.
"""
import numpy as np
import pytest

from perturbiga.assembly import assemble
from perturbiga.dynamics import critical_timestep
from perturbiga.eigensolve import max_eigenpair, solve_gevp
from perturbiga.experiments import ExperimentConfig, mode_errors, run_standing_wave
from perturbiga.multipatch import count_interior_outliers
from perturbiga.perturbation import PerturbationParams, algorithm1_estimate, perturb, regime_params
from perturbiga.spectral import (
    PROBLEMS,
    analytic_modes,
    convergence_order,
    flag_outliers,
    match_modes,
    normalized_frequencies,
)

from .oracles import jacobi_gevp

pytestmark = pytest.mark.slow


def build(problem, p, npatch, ne):
    prob = PROBLEMS[problem]
    s = prob.build_space(p, npatch, ne)
    return s, assemble(s), analytic_modes(prob, s)


def top(ops, params=None):
    P = perturb(ops, params or PerturbationParams())
    return solve_gevp(P.K, P.M, vectors=False).frequencies[-1]


def test_1_outlier_counts(report):
    cases = [("fixed_bar", p, n) for p in range(2, 6) for n in (2, 3, 5)]
    cases += [("ss_beam", p, n) for p in range(3, 7) for n in (2, 3)]
    bad = []
    for problem, p, npatch in cases:
        s, ops, _ = build(problem, p, npatch, 10)
        spec = solve_gevp(ops.K, ops.M)
        got = int(flag_outliers(spec, ops).sum())
        want = count_interior_outliers(s.kind, p, npatch)
        if got != want:
            bad.append((problem, p, npatch, got, want))
    report("1 outlier counts", not bad, f"{len(cases)} cases, mismatches={bad}")
    assert not bad


def test_2_regime_laws(report):
    _, ops, an = build("fixed_bar", 2, 2, 25)
    h = ops.h
    w0 = top(ops)
    wa = [top(ops, regime_params(ops, "f_zero", alpha=k / h)) for k in (1, 10, 100)]
    ok_a = wa[0] <= wa[1] <= wa[2]
    ok_b = top(ops, regime_params(ops, "f_in_0_1", f=0.5, alpha=h)) >= w0
    wc = top(ops, regime_params(ops, "f_gt_1", f=2.0, target=an.omegas[-1]))
    ok_c = wc < w0
    wd = top(ops, regime_params(ops, "mass_only", beta=h**3))
    ok_d = wd < w0
    ok = ok_a and ok_b and ok_c and ok_d
    report("2 regime laws", ok, f"(a)={ok_a} (b)={ok_b} (c)={ok_c} [{wc:.4g}<{w0:.4g}] (d)={ok_d} [{wd:.4g}]")
    assert ok


def test_3_algorithm1(report):
    s, ops, an = build("fixed_membrane", 2, 2, 15)
    prm = algorithm1_estimate(ops, f=2.0, c=0.9)
    iters = prm.trace[-1].iteration
    s0 = solve_gevp(ops.K, ops.M)
    P = perturb(ops, prm)
    s1 = solve_gevp(P.K, P.M)
    wmax = an.omegas.max()
    final = s1.frequencies[-1] / wmax
    sweep = []
    for a in np.logspace(-2, 2, 30) * prm.alpha:
        q = PerturbationParams(alpha=a, beta=2.0 * a / prm.target**2)
        sweep.append(top(ops, q) / wmax)
    best = min(sweep)
    m0 = match_modes(s0, an, s, M=ops.M)
    m1 = match_modes(s1, an, s, M=ops.M)
    # interface-dominated modes are excluded: several tensor outliers sit in the low 80%
    keep = ~(flag_outliers(s0, ops)[m0.sigma] | flag_outliers(s1, ops)[m1.sigma])
    keep[int(0.8 * len(an)) :] = False
    change = np.abs(m1.omega_h / m0.omega_h - 1.0)[keep].max()
    ok = iters <= 8 and final <= 1.1 * best and change < 5e-3
    report("3 algorithm 1", ok, f"iterations={iters} final={final:.4f} sweep_min={best:.4f} low80_change={change:.2e}")
    assert ok


CONVERGENCE = [("fixed_bar", p, 2 * p, p + 1) for p in (2, 3, 4, 5)]
CONVERGENCE += [("ss_beam", p, 2 * (p - 1), p + 1) for p in (3, 4, 5, 6)]


@pytest.mark.parametrize("problem,p,qf,ql", CONVERGENCE)
def test_4_convergence_orders(problem, p, qf, ql, report):
    levels = (64, 96, 128)
    res = {}
    for variant in ("standard", "algorithm1"):
        h, fe, le = [], [], []
        for ne in levels:
            s, ops, an = build(problem, p, 2, ne)
            prm = PerturbationParams() if variant == "standard" else algorithm1_estimate(ops, eigensolver="dense")
            f, l = mode_errors(s, ops, an, prm, 17)
            h.append(s.h)
            fe.append(f)
            le.append(l)
        res[variant] = (convergence_order(h, fe), convergence_order(h, le))
    ok = all(abs(sf - qf) <= 0.3 and abs(sl - ql) <= 0.3 for sf, sl in res.values())
    detail = " ".join(f"{v}: freq={sf:.2f}/{qf} l2={sl:.2f}/{ql}" for v, (sf, sl) in res.items())
    report(f"4 convergence {problem} p={p}", ok, detail)
    assert ok


TIMESTEP = [("fixed_membrane", range(2, 7)), ("ss_plate", range(3, 7))]


@pytest.fixture(scope="module")
def dtcrit_table():
    table = {}
    for problem, degrees in TIMESTEP:
        for ne in (5, 10):
            for p in degrees:
                _, ops, _ = build(problem, p, 2, ne)
                w0, _ = max_eigenpair(ops.K, ops.M)
                prm = algorithm1_estimate(ops, f=2.0, c=0.9)
                P = perturb(ops, prm)
                w1, _ = max_eigenpair(P.K, P.M)
                table[(problem, ne, p)] = (critical_timestep(w0), critical_timestep(w1))
    return table


def test_5a_timestep_improvement(dtcrit_table, report):
    worse = [k for k, (d0, d1) in dtcrit_table.items() if not d1 > d0]
    gain = min(d1 / d0 for d0, d1 in dtcrit_table.values())
    report("5a dt_crit improved", not worse, f"{len(dtcrit_table)} cases, smallest gain x{gain:.2f}")
    assert not worse


@pytest.mark.xfail(strict=True, reason="pragmatic estimation stalls for p >= 4; see decision ledger")
def test_5b_timestep_p_independence(dtcrit_table, report):
    ratios = {}
    for problem, degrees in TIMESTEP:
        for ne in (5, 10):
            d = [dtcrit_table[(problem, ne, p)][1] for p in degrees]
            ratios[(problem, ne)] = max(d) / min(d)
    ok = all(r <= 1.5 for r in ratios.values())
    report("5b dt_crit p-independence", ok, " ".join(f"{k[0]}/{k[1]}: {r:.2f}" for k, r in ratios.items()))
    assert ok


@pytest.mark.parametrize("p", [2, 3])
def test_6_transient_accuracy(p, report):
    cfg = ExperimentConfig(experiment="dynamics", problem="fixed_membrane", p=p, patches=2, T=float(np.sqrt(2.0)))
    slopes = {}
    for variant in ("none", "algorithm1"):
        h, e = [], []
        for ne in (4, 8, 16):
            space, _, traj = run_standing_wave(cfg, p, ne, variant)
            h.append(space.h)
            e.append(traj.observed[-1])
        slopes[variant] = convergence_order(h, e)
    ok = all(abs(q - (p + 1)) <= 0.4 for q in slopes.values())
    report(f"6 transient p={p}", ok, " ".join(f"{k}={v:.2f}/{p + 1}" for k, v in slopes.items()))
    assert ok


def test_7_eigensolver_oracle(report):
    rng = np.random.default_rng(12345)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 9))
        A, B = rng.standard_normal((n, n)), rng.standard_normal((n, n))
        K, M = A + A.T, B @ B.T + n * np.eye(n)
        ref = jacobi_gevp(K, M)
        lam = solve_gevp(K, M).eigenvalues
        worst = max(worst, float(np.abs(lam - ref).max() / np.abs(ref).max()))
    configs = [("fixed_bar", p, 2, 25) for p in (2, 3, 4, 5)] + [("ss_beam", p, 2, 25) for p in (3, 4, 5, 6)]
    configs += [("fixed_membrane", 2, 2, 15), ("ss_plate", 3, 2, 10)]
    res, orth = 0.0, 0.0
    for problem, p, npatch, ne in configs:
        _, ops, _ = build(problem, p, npatch, ne)
        for prm in (PerturbationParams(), algorithm1_estimate(ops)):
            P = perturb(ops, prm)
            spec = solve_gevp(P.K, P.M)
            res = max(res, float(spec.residuals(P.K, P.M).max()))
            orth = max(orth, spec.orthonormality_error(P.M))
    ok = worst <= 1e-10 and res <= 1e-12 and orth <= 1e-8
    report("7 eigensolver oracle", ok, f"max rel diff={worst:.1e} residual={res:.1e} M-orthonormality={orth:.1e}")
    assert ok


def test_8_single_patch_low_spectrum(report):
    s, ops, an = build("fixed_bar", 3, 1, 30)
    spec = solve_gevp(ops.K, ops.M)
    r = normalized_frequencies(match_modes(spec, an, s, M=ops.M))[: s.N // 2]
    ok = bool(np.all(r >= 1.0 - 1e-12) and np.all(r <= 1.02))
    report("8 single-patch accuracy", ok, f"ratio range [{r.min():.10f}, {r.max():.6f}] over n <= {s.N // 2}")
    assert ok
