"""Quadrature layer: certified tolerances, declared singularities, and the
nested integrals behind the flux function."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kraichnan_lab.errors import DomainError, NonFiniteIntegrand
from kraichnan_lab.quad import J_direct, QuadRequest, QuadResult, f_inner, integrate_1d
from kraichnan_lab.specfun import ModelParams, gamma_fn, sin_power_integral


class TestIntegrate1d:
    def test_semi_infinite_arctan(self):
        res = integrate_1d(QuadRequest(
            integrand=lambda t: 1.0 / (1.0 + t * t),
            interval=(0.0, math.inf), abs_tol=1e-13, rel_tol=1e-13))
        assert abs(res.value - math.pi / 2.0) < 1e-12
        assert res.evaluations > 0

    def test_endpoint_singularity(self):
        res = integrate_1d(QuadRequest(
            integrand=lambda t: t ** -0.5,
            interval=(0.0, 1.0), abs_tol=1e-12, rel_tol=1e-12,
            singular_points=(0.0,)))
        assert abs(res.value - 2.0) < 1e-10

    def test_against_beta_mellin(self):
        from kraichnan_lab.specfun import beta_mellin
        res = integrate_1d(QuadRequest(
            integrand=lambda t: t ** (0.7 - 1.0) * (1.0 + t * t) ** -1.2,
            interval=(0.0, math.inf), abs_tol=1e-13, rel_tol=1e-11))
        ref = beta_mellin(1.2, 0.7).real
        assert abs(res.value - ref) <= 1e-10 * abs(ref) + res.error_estimate

    def test_error_budget_invariant(self):
        res = integrate_1d(QuadRequest(
            integrand=lambda t: math.exp(-t), interval=(0.0, math.inf),
            abs_tol=1e-12, rel_tol=1e-10))
        assert res.error_estimate <= max(1e-12, 1e-10 * abs(res.value))

    def test_non_finite_integrand(self):
        with pytest.raises(NonFiniteIntegrand):
            integrate_1d(QuadRequest(
                integrand=lambda t: float("nan"),
                interval=(0.0, 1.0), abs_tol=1e-10, rel_tol=1e-8))

    def test_bad_interval(self):
        with pytest.raises(DomainError):
            QuadRequest(integrand=lambda t: t, interval=(1.0, 0.0))

    def test_singular_point_outside(self):
        with pytest.raises(DomainError):
            QuadRequest(integrand=lambda t: t, interval=(0.0, 1.0),
                        singular_points=(2.0,))

    def test_complex_integrand(self):
        res = integrate_1d(QuadRequest(
            integrand=lambda t: complex(math.cos(t), math.sin(t)) * math.exp(-t),
            interval=(0.0, math.inf), abs_tol=1e-12, rel_tol=1e-10))
        assert abs(res.value - (0.5 + 0.5j)) < 1e-10

    # known-antiderivative corpus: |value - exact| <= 10 * error_estimate
    @pytest.mark.parametrize("fn,lo,hi,exact", [
        (lambda t: math.cos(t), 0.0, 2.0, math.sin(2.0)),
        (lambda t: 3.0 * t * t, 0.0, 2.0, 8.0),
        (lambda t: math.exp(-t), 0.0, math.inf, 1.0),
        (lambda t: 1.0 / math.sqrt(t), 0.0, 4.0, 4.0),
    ])
    def test_error_estimate_honest(self, fn, lo, hi, exact):
        res = integrate_1d(QuadRequest(
            integrand=fn, interval=(lo, hi), abs_tol=1e-12, rel_tol=1e-10,
            singular_points=(0.0,) if lo == 0.0 else ()))
        assert abs(res.value - exact) <= 10.0 * max(res.error_estimate, 1e-15)

    @given(st.floats(0.15, 0.85))
    @settings(max_examples=30, deadline=None)
    def test_split_additivity(self, split):
        fn = lambda t: math.sin(3.0 * t) + t * t
        whole = integrate_1d(QuadRequest(
            integrand=fn, interval=(0.0, 1.0), abs_tol=1e-13, rel_tol=1e-12))
        left = integrate_1d(QuadRequest(
            integrand=fn, interval=(0.0, split), abs_tol=1e-13, rel_tol=1e-12))
        right = integrate_1d(QuadRequest(
            integrand=fn, interval=(split, 1.0), abs_tol=1e-13, rel_tol=1e-12))
        tol = whole.error_estimate + left.error_estimate + right.error_estimate
        assert abs(whole.value - (left.value + right.value)) <= tol + 1e-14


class TestFInner:
    P2 = ModelParams(d=2, alpha=0.5, s=0.5)

    def test_zero_at_origin(self):
        assert f_inner(0.0, self.P2) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            f_inner(-1.0, self.P2)

    def test_positive(self):
        for r in (0.3, 0.999, 1.0, 1.001, 5.0):
            assert f_inner(r, self.P2) > 0.0

    def test_continuous_across_one(self):
        rs = np.linspace(0.99, 1.01, 21)
        vals = [f_inner(float(r), self.P2) for r in rs]
        jumps = np.abs(np.diff(vals)) / np.max(np.abs(vals))
        assert jumps.max() < 0.01

    def test_large_r_asymptote(self):
        # f(r) / r^{d-1-2s} -> int_0^pi sin^d = sin_power_integral(d, 0)
        d, s = self.P2.d, self.P2.s
        target = sin_power_integral(float(d), 0.0)
        r = 2e3
        got = f_inner(r, self.P2) / r ** (d - 1.0 - 2.0 * s)
        assert abs(got - target) <= 2e-3 * target


class TestJDirect:
    def test_positive(self):
        p = ModelParams(d=2, alpha=0.5, s=0.5)
        for lam in (0.5, 2.0, 20.0):
            assert J_direct(lam, p) > 0.0

    def test_large_lambda_leading_term(self):
        # lam^d J(lam) -> G(d/2) G(a) / (2 G(d/2+a)) * sqrt(pi) G((d+1)/2)/G((d+2)/2)
        p = ModelParams(d=2, alpha=0.5, s=0.5)
        d, a = p.d, p.alpha
        target = (gamma_fn(d / 2.0).real * gamma_fn(a).real
                  / (2.0 * gamma_fn(d / 2.0 + a).real)
                  * math.sqrt(math.pi) * gamma_fn((d + 1.0) / 2.0).real
                  / gamma_fn((d + 2.0) / 2.0).real)
        lam = 4e3
        got = lam ** d * J_direct(lam, p, rel_tol=1e-10)
        assert abs(got - target) <= 2e-3 * target

    def test_lambda_domain(self):
        with pytest.raises(DomainError):
            J_direct(0.0, ModelParams(d=2, alpha=0.5, s=0.5))
