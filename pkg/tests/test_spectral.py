import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from perturbiga.assembly import assemble
from perturbiga.eigensolve import solve_gevp
from perturbiga.errors import MatchingError
from perturbiga.multipatch import count_interior_outliers
from perturbiga.perturbation import PerturbationParams, perturb
from perturbiga.spectral import (
    PROBLEMS,
    analytic_modes,
    convergence_order,
    flag_outliers,
    function_l2_error,
    interface_fraction,
    l2_projection,
    match_modes,
    mode_l2_error,
    normalized_frequencies,
    rayleigh_frequency,
)


def matched(problem, p, npatch, ne, params=None):
    prob = PROBLEMS[problem]
    s = prob.build_space(p, npatch, ne)
    ops = assemble(s)
    P = perturb(ops, params or PerturbationParams())
    spec = solve_gevp(P.K, P.M)
    return s, ops, spec, match_modes(spec, analytic_modes(prob, s), s, M=ops.M)


class TestAnalyticModes:
    def test_bar_frequencies(self):
        s = PROBLEMS["fixed_bar"].build_space(2, 1, 4)
        a = analytic_modes("fixed_bar", s)
        np.testing.assert_allclose(a.omegas, np.pi * np.arange(1, s.N + 1))

    def test_free_bar_starts_with_rigid_mode(self):
        s = PROBLEMS["free_bar"].build_space(2, 1, 4)
        a = analytic_modes("free_bar", s)
        assert a.omegas[0] == 0.0 and a.norms[0] == 1.0

    def test_membrane_ordering(self):
        s = PROBLEMS["fixed_membrane"].build_space(2, 1, 3)
        a = analytic_modes("fixed_membrane", s)
        assert np.all(np.diff(a.omegas) >= 0)
        assert tuple(a.indices[0]) == (1, 1)
        assert {tuple(a.indices[1]), tuple(a.indices[2])} == {(1, 2), (2, 1)}

    def test_beam_frequencies_quadratic(self):
        s = PROBLEMS["ss_beam"].build_space(3, 1, 4)
        a = analytic_modes("ss_beam", s)
        np.testing.assert_allclose(a.omegas[:3], np.pi**2 * np.array([1, 4, 9]))


class TestMatching:
    def test_single_patch_low_spectrum(self):
        _, _, _, ms = matched("fixed_bar", 3, 1, 30)
        r = normalized_frequencies(ms)[: len(ms.sigma) // 2]
        assert np.all(r >= 1 - 1e-12) and np.all(r <= 1.02)

    def test_sigma_is_permutation(self):
        _, _, spec, ms = matched("fixed_bar", 3, 2, 6)
        assert sorted(ms.sigma) == list(range(len(spec)))

    def test_degenerate_groups_in_2d(self):
        _, _, _, ms = matched("fixed_membrane", 2, 2, 3)
        assert any(len(g) == 2 for g in ms.groups)
        assert len(set(ms.sigma.tolist())) == len(ms.sigma)

    def test_low_mode_errors_small(self):
        _, _, _, ms = matched("fixed_bar", 3, 2, 16)
        err = mode_l2_error(ms, [0, 1, 2])
        assert np.all(err < 1e-4)

    def test_too_many_analytic_modes(self):
        s = PROBLEMS["fixed_bar"].build_space(2, 1, 4)
        ops = assemble(s)
        spec = solve_gevp(ops.K, ops.M)
        a = analytic_modes("fixed_bar", PROBLEMS["fixed_bar"].build_space(2, 1, 6))
        with pytest.raises(MatchingError):
            match_modes(spec, a, s, M=ops.M)


class TestOutlierFlags:
    @pytest.mark.parametrize("problem,p,npatch", [("fixed_bar", 2, 3), ("fixed_bar", 4, 2), ("ss_beam", 5, 3)])
    def test_count_matches_formula(self, problem, p, npatch):
        s, ops, spec, _ = matched(problem, p, npatch, 6)
        assert flag_outliers(spec, ops).sum() == count_interior_outliers(s.kind, p, npatch)

    def test_fraction_is_a_fraction(self):
        _, ops, spec, _ = matched("fixed_bar", 3, 3, 5)
        f = interface_fraction(spec, ops)
        assert f.min() >= -1e-12 and f.max() <= 1 + 1e-10

    def test_single_patch_has_none(self):
        _, ops, spec, _ = matched("fixed_bar", 3, 1, 8)
        assert not flag_outliers(spec, ops).any()

    def test_2d_count(self):
        s, ops, spec, _ = matched("fixed_membrane", 2, 2, 4)
        n1 = count_interior_outliers(s.kind, 2, 2)
        assert flag_outliers(spec, ops).sum() == s.N - (s.x.N - n1) ** 2


class TestRayleighFrequency:
    def test_matches_eigenvalue(self):
        s, ops, spec, _ = matched("fixed_bar", 4, 2, 6)
        for k in (0, 5, len(spec) - 1):
            w = rayleigh_frequency(s, spec.eigenvectors[:, k])
            assert w == pytest.approx(spec.frequencies[k], rel=1e-10)

    def test_perturbed_quotient(self):
        prm = PerturbationParams(alpha=0.01, beta=1e-6)
        s, ops, spec, _ = matched("fixed_bar", 3, 2, 6, prm)
        a, b = prm.level_values(ops)
        v = spec.eigenvectors[:, -1]
        assert rayleigh_frequency(s, v, a, b) == pytest.approx(spec.frequencies[-1], rel=1e-10)

    def test_rejects_2d(self):
        s = PROBLEMS["fixed_membrane"].build_space(2, 1, 2)
        with pytest.raises(ValueError):
            rayleigh_frequency(s, np.ones(s.N))


class TestProjection:
    def test_reproduces_space_member(self):
        s = PROBLEMS["free_bar"].build_space(3, 2, 4, outlier_removal=False)
        c = l2_projection(s, lambda x: x**2 - x)
        assert function_l2_error(s, c, lambda x: x**2 - x) < 1e-13

    def test_2d_separable(self):
        s = PROBLEMS["fixed_membrane"].build_space(3, 2, 6)
        f = lambda x: np.sin(np.pi * x)  # noqa: E731
        assert function_l2_error(s, l2_projection(s, f, f), f, f) < 1e-3

    def test_absolute_error(self):
        s = PROBLEMS["fixed_bar"].build_space(2, 1, 4)
        c = np.zeros(s.N)
        ref = math.sqrt(0.5)
        assert function_l2_error(s, c, lambda x: np.sin(np.pi * x), relative=False) == pytest.approx(ref)


class TestConvergenceOrder:
    @given(st.floats(0.5, 12.0), st.floats(1e-3, 1e3))
    def test_recovers_power_law(self, q, C):
        h = np.array([0.1, 0.05, 0.025, 0.0125])
        assert convergence_order(h, C * h**q) == pytest.approx(q, rel=1e-9)

    @pytest.mark.parametrize("h,e", [([0.1, 0.05], [1, 2]), ([0.1, 0.05, 0.02], [1, 0, 2])])
    def test_invalid(self, h, e):
        with pytest.raises(ValueError):
            convergence_order(h, e)


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 4), st.integers(2, 3), st.integers(3, 6))
def test_flags_count_property(p, npatch, ne):
    s, ops, spec, _ = matched("fixed_bar", p, npatch, ne)
    assert flag_outliers(spec, ops).sum() == (npatch - 1) * (p - 1)
