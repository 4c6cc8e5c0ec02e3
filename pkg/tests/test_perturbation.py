import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from perturbiga.assembly import assemble
from perturbiga.eigensolve import solve_gevp
from perturbiga.errors import NoOutlierError
from perturbiga.perturbation import (
    PerturbationParams,
    active_levels,
    algorithm1_estimate,
    estimate_exact_target_1d,
    perturb,
    regime_params,
)
from perturbiga.spectral import PROBLEMS, analytic_modes, flag_outliers


def setup(problem="fixed_bar", p=2, npatch=2, ne=10):
    prob = PROBLEMS[problem]
    s = prob.build_space(p, npatch, ne)
    return s, assemble(s), analytic_modes(prob, s)


@pytest.fixture(scope="module")
def bar3():
    return setup(p=3, ne=8)


def omega_max(ops, params):
    P = perturb(ops, params)
    return solve_gevp(P.K, P.M, vectors=False).frequencies[-1]


class TestPerturb:
    def test_zero_parameters_return_identical_operators(self, bar3):
        _, ops, _ = bar3
        P = perturb(ops, PerturbationParams())
        assert P.K is ops.K and P.M is ops.M

    def test_scalar_equals_level_form(self, bar3):
        _, ops, _ = bar3
        a, b = 0.3, 1e-4
        h = ops.h
        P1 = perturb(ops, PerturbationParams(alpha=a, beta=b))
        P2 = perturb(ops, PerturbationParams(alpha_levels=(a, a * h**2), beta_levels=(b, b * h**2)))
        np.testing.assert_allclose(P1.K.toarray(), P2.K.toarray(), rtol=1e-13, atol=1e-12)
        np.testing.assert_allclose(P1.M.toarray(), P2.M.toarray(), rtol=1e-13, atol=1e-16)

    def test_per_interface_override(self):
        s = PROBLEMS["fixed_bar"].build_space(2, 3, 4)
        ops = assemble(s, split_interfaces=True)
        prm = PerturbationParams(alpha=1.0, per_interface={(1, 0): (0.0, 0.0)})
        K = perturb(ops, prm).K.toarray()
        ref = (ops.K + ops.per_interface[(1, 1)]).toarray()
        np.testing.assert_allclose(K, ref, atol=1e-12)

    def test_per_interface_needs_split(self, bar3):
        _, ops, _ = bar3
        with pytest.raises(ValueError):
            perturb(ops, PerturbationParams(per_interface={(1, 0): (1.0, 0.0)}))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            PerturbationParams(alpha=-1.0)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(1e-6, 1e3), st.floats(1.0, 10.0))
    def test_stiffness_penalty_raises_every_eigenvalue(self, a, factor):
        # Courant-Fischer: K + a G <= K + factor a G for a PSD G
        _, ops, _ = setup(p=3, ne=4)
        lo = solve_gevp(*_pair(ops, a, 0.0), vectors=False).eigenvalues
        hi = solve_gevp(*_pair(ops, factor * a, 0.0), vectors=False).eigenvalues
        assert np.all(hi >= lo - 1e-13 * hi[-1])  # eigenvalue error scales with the largest one

    @settings(max_examples=20, deadline=None)
    @given(st.floats(1e-10, 1e-2))
    def test_mass_penalty_lowers_every_eigenvalue(self, b):
        _, ops, _ = setup(p=3, ne=4)
        lo = solve_gevp(ops.K, ops.M, vectors=False).eigenvalues
        hi = solve_gevp(*_pair(ops, 0.0, b), vectors=False).eigenvalues
        assert np.all(hi <= lo * (1 + 1e-10))


def _pair(ops, a, b):
    P = perturb(ops, PerturbationParams(alpha=a, beta=b))
    return P.K, P.M


class TestRegimes:
    def test_f_zero_monotone_in_alpha(self):
        _, ops, _ = setup(ne=25)
        w = [omega_max(ops, regime_params(ops, "f_zero", alpha=k / ops.h)) for k in (1, 10, 100)]
        assert w[0] <= w[1] <= w[2]

    def test_f_gt_1_lowers_top(self):
        _, ops, an = setup(ne=25)
        w0 = omega_max(ops, PerturbationParams())
        prm = regime_params(ops, "f_gt_1", f=2.0, target=an.omegas[-1])
        assert omega_max(ops, prm) < w0
        assert prm.beta == pytest.approx(2.0 * prm.alpha / an.omegas[-1] ** 2)

    def test_unknown_regime(self, bar3):
        with pytest.raises(ValueError):
            regime_params(bar3[1], "f_negative")


class TestExactTarget:
    @pytest.mark.parametrize("problem,p", [("fixed_bar", 2), ("fixed_bar", 3), ("ss_beam", 4)])
    def test_outliers_land_on_targets(self, problem, p):
        _, ops, an = setup(problem, p)
        L = len(active_levels(ops))
        targets = an.omegas[-L:]
        prm = estimate_exact_target_1d(ops, 2.0, targets)
        P = perturb(ops, prm)
        spec = solve_gevp(P.K, P.M)
        got = np.sort(spec.frequencies[flag_outliers(spec, ops)])
        np.testing.assert_allclose(got, targets, rtol=1e-8)

    def test_beam_skips_zero_level(self):
        _, ops, _ = setup("ss_beam", 4)
        assert active_levels(ops) == [2, 3]

    def test_target_count_mismatch(self, bar3):
        _, ops, an = bar3
        with pytest.raises(ValueError):
            estimate_exact_target_1d(ops, 2.0, an.omegas[-1:])


class TestAlgorithm1:
    def test_reduces_max_frequency(self):
        _, ops, _ = setup(p=3)
        prm = algorithm1_estimate(ops)
        assert prm.alpha > 0 and prm.beta == pytest.approx(2.0 * prm.alpha / prm.target**2)
        assert omega_max(ops, prm) < prm.trace[0].omega_max
        assert [t.iteration for t in prm.trace] == list(range(len(prm.trace)))

    def test_dense_and_power_agree(self):
        _, ops, _ = setup(p=2)
        a = algorithm1_estimate(ops, eigensolver="power")
        b = algorithm1_estimate(ops, eigensolver="dense")
        assert a.alpha == pytest.approx(b.alpha, rel=1e-4)  # power vectors carry sqrt(tol) error

    def test_single_patch_has_nothing_to_do(self):
        _, ops, _ = setup(npatch=1)
        with pytest.raises(NoOutlierError):
            algorithm1_estimate(ops)

    @pytest.mark.parametrize("kw", [{"f": 1.0}, {"c": 1.0}, {"c": 0.0}])
    def test_argument_checks(self, kw):
        _, ops, _ = setup()
        with pytest.raises(ValueError):
            algorithm1_estimate(ops, **kw)
