"""Gamma-product engine: pole bookkeeping, residues, the contour route for J,
the residue expansion, and the three-way K cross-validation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kraichnan_lab import mellin, quad
from kraichnan_lab.errors import (CaseOutOfRange, DomainError, HigherOrderPole,
                                  StripViolation)
from kraichnan_lab.mellin import (GammaProduct, d_constant, expand_J,
                                  expansion_terms, f_product, h_product,
                                  jl_product, k_constant_appendix,
                                  k_constant_gamma, k_constant_integral,
                                  k_report, parseval_contour, poles_in_strip,
                                  residue_at, riesz_constant)
from kraichnan_lab.quad import QuadRequest, integrate_1d
from kraichnan_lab.specfun import ModelParams, gamma_fn, sphere_surface

P2 = ModelParams(d=2, alpha=0.5, s=0.5)


class TestPoles:
    def test_h_poles(self):
        assert poles_in_strip(h_product(P2), 0.0, 10.0) == [
            (3.0, 1), (5.0, 1), (7.0, 1), (9.0, 1)]

    def test_f_poles(self):
        assert poles_in_strip(f_product(P2), 1.0, 5.0) == [(2.0, 1), (4.0, 1)]

    def test_cancelling_pair(self):
        expr = GammaProduct(1.0, ((1.0, 0.0, +1), (1.0, 0.0, -1)))
        assert poles_in_strip(expr, -10.0, 10.0) == []

    def test_left_ladder(self):
        # poles of M[f,1-z] descending from d-2s
        assert poles_in_strip(f_product(P2), -4.0, 1.5) == [
            (-3.0, 1), (-1.0, 1), (1.0, 1)]


class TestResidues:
    def test_gamma_at_zero(self):
        term = residue_at(GammaProduct(1.0, ((1.0, 0.0, +1),)), 0.0)
        assert term.exponent == 0.0
        assert term.coefficient == pytest.approx(-1.0, rel=1e-14)

    def test_h_residue_is_minus_one(self):
        # residue of M[h, z] at z = d + 2 alpha equals -1 exactly
        d, a = P2.d, P2.alpha
        term = residue_at(h_product(P2), d + 2.0 * a)
        assert term.coefficient == pytest.approx(1.0, rel=1e-12)  # -(-1)

    def test_f_residue_at_d(self):
        # -sqrt(pi) G((d+1)/2) / G((d+2)/2)
        for d, s in ((2, 0.5), (3, 1.2), (4, 0.7)):
            p = ModelParams(d=d, alpha=0.5, s=s)
            term = residue_at(f_product(p), float(d))
            target = -math.sqrt(math.pi) * gamma_fn((d + 1.0) / 2.0).real \
                / gamma_fn((d + 2.0) / 2.0).real
            assert -term.coefficient == pytest.approx(target, rel=1e-12)

    def test_f_residue_at_d_plus_2(self):
        # sqrt(pi) s (d-2s) G((d+1)/2) / (2 G((d+4)/2)); confirmed against the
        # lambda^{-(d+2)} remainder of J in TestExpand::test_remainder_slope
        for d, s in ((2, 0.6), (3, 0.8)):
            p = ModelParams(d=d, alpha=0.4, s=s)
            term = residue_at(f_product(p), float(d + 2))
            target = (math.sqrt(math.pi) * s * (d - 2.0 * s)
                      * gamma_fn((d + 1.0) / 2.0).real
                      / (2.0 * gamma_fn((d + 4.0) / 2.0).real))
            assert -term.coefficient == pytest.approx(target, rel=1e-12)

    def test_product_residue_at_d_2alpha(self):
        # coefficient equals M[f, 1-d-2alpha]
        from kraichnan_lab.specfun import mellin_f
        p = ModelParams(d=2, alpha=0.4, s=0.8)
        term = residue_at(jl_product(p), p.d + 2.0 * p.alpha)
        target = mellin_f(p, 1.0 * p.d + 2.0 * p.alpha).real
        assert term.coefficient == pytest.approx(target, rel=1e-12)

    def test_higher_order_rejected(self):
        expr = GammaProduct(1.0, ((1.0, 0.0, +1), (1.0, 0.0, +1)))
        with pytest.raises(HigherOrderPole):
            residue_at(expr, 0.0)

    def test_exponent_shift(self):
        term = residue_at(GammaProduct(1.0, ((1.0, 0.0, +1),)), 0.0,
                          lambda_exponent_shift=2.5)
        assert term.exponent == 2.5


class TestParseval:
    @pytest.mark.parametrize("d,a,s,lam,line", [
        (2, 0.5, 0.5, 5.0, 1.5),
        (3, 0.25, 1.0, 50.0, 2.0),
        (2, 0.75, 0.3, 2.0, 1.7),
        (3, 0.75, 1.2, 20.0, 1.4),
    ])
    def test_vs_direct_quadrature(self, d, a, s, lam, line):
        p = ModelParams(d=d, alpha=a, s=s)
        pc = parseval_contour(lam, p, line)
        jd = quad.J_direct(lam, p, rel_tol=1e-10)
        assert abs(pc - jd) <= 1e-6 * abs(jd)

    def test_line_independence(self):
        v1 = parseval_contour(5.0, P2, 1.2)
        v2 = parseval_contour(5.0, P2, 1.8)
        assert abs(v1 - v2) <= 1e-8 * abs(v1)

    def test_strip_enforced(self):
        with pytest.raises(StripViolation):
            parseval_contour(5.0, P2, 0.5)   # below d - 2s = 1
        with pytest.raises(StripViolation):
            parseval_contour(5.0, P2, 2.5)   # above d = 2

    def test_residue_shift_identity(self):
        # contour at r equals residues in (r, r') plus contour shifted past
        # the first pole ladder; checked through the expansion terms
        p = ModelParams(d=2, alpha=0.4, s=0.6)
        for lam in (5.0, 20.0):
            base = parseval_contour(lam, p, 1.5)
            terms, rp = expand_J(p, p.d + 2.0 + p.alpha)
            total = sum(t.coefficient * lam ** -t.exponent for t in terms)
            assert abs(base - total) <= max(1e-6 * abs(base),
                                            2.0 * lam ** -rp)


class TestExpand:
    def test_r_prime_window(self):
        with pytest.raises(DomainError):
            expand_J(P2, P2.d + 1.0)
        with pytest.raises(DomainError):
            expand_J(P2, P2.d + 2.0 * P2.alpha + 3.0)

    def test_term_structure(self):
        p = ModelParams(d=2, alpha=0.4, s=0.6)
        terms, rp = expand_J(p, 4.5)
        exps = [t.exponent for t in terms]
        assert exps == sorted(exps)
        assert exps == pytest.approx([2.0, 2.8, 4.0])
        # leading coefficient positive (product of positive Gammas)
        assert terms[0].coefficient > 0.0
        # the z = d+2 coefficient is positive as well
        assert terms[2].coefficient > 0.0

    def test_remainder_slope(self):
        # J minus the two leading terms scales like lambda^{-(d+2)}
        p = ModelParams(d=2, alpha=0.4, s=0.6)
        terms, _ = expand_J(p, 4.5)
        two = [t for t in terms if t.exponent < p.d + 2.0 - 1e-9]
        lams = np.array([20.0, 40.0, 80.0])
        rem = []
        for lam in lams:
            jd = quad.J_direct(float(lam), p, rel_tol=1e-11)
            rem.append(jd - sum(t.coefficient * lam ** -t.exponent for t in two))
        slope = np.polyfit(np.log(lams), np.log(np.abs(rem)), 1)[0]
        assert abs(slope + (p.d + 2.0)) < 0.15

    def test_deep_expansion_matches_direct(self):
        p = ModelParams(d=3, alpha=0.3, s=0.8)
        terms, rp = expansion_terms(p, p.d + p.alpha + 7.0)
        lam = 30.0
        total = sum(t.coefficient * lam ** -t.exponent for t in terms)
        jd = quad.J_direct(lam, p, rel_tol=1e-11)
        assert abs(total - jd) <= 1e-8 * abs(jd)


K_GRID = [(d, a, f) for d in (2, 3) for a in (0.25, 0.5, 0.75)
          for f in (0.2, 0.5, 0.8)]


class TestKConstants:
    @pytest.mark.parametrize("d,a,f", K_GRID)
    def test_gamma_positive(self, d, a, f):
        p = ModelParams(d=d, alpha=a, s=f * d / 2.0)
        assert k_constant_gamma(p) > 0.0

    @pytest.mark.parametrize("d,a,s", [(2, 0.5, 0.5), (3, 0.25, 1.0),
                                       (2, 0.75, 0.3)])
    def test_gamma_vs_integral_spot(self, d, a, s):
        p = ModelParams(d=d, alpha=a, s=s)
        kg = k_constant_gamma(p)
        ki = k_constant_integral(p)
        assert abs(ki - kg) <= 1e-6 * kg

    def test_integral_inner_vanishes_second_order_at_origin(self):
        # the odd first-order term of the angular average cancels, so
        # inner(r)/r^2 approaches a finite limit as r -> 0
        from kraichnan_lab.mellin import _angular_one_minus
        vals = [_angular_one_minus(r, 2, 0.5, 1e-11) / r ** 2
                for r in (1e-2, 1e-3)]
        assert abs(vals[1] - vals[0]) <= 1e-3 * abs(vals[0])

    def test_gamma_vs_residue_route(self):
        # K = -(2 pi)^{-d/2} omega_{d-2} * (coefficient of the lambda^{-d-2a}
        # term), including the |xi|^{d+2-2s} prefactor bookkeeping
        for d, a, s in ((2, 0.5, 0.5), (3, 0.25, 1.0), (2, 0.75, 0.3)):
            p = ModelParams(d=d, alpha=a, s=s)
            terms, _ = expand_J(p, d + 2.0 + a)
            coeff = [t.coefficient for t in terms
                     if abs(t.exponent - (d + 2.0 * a)) < 1e-9][0]
            route = -(2.0 * math.pi) ** (-d / 2.0) * sphere_surface(d - 2) * coeff
            assert route == pytest.approx(k_constant_gamma(p), rel=1e-12)

    def test_appendix_spot(self):
        p = ModelParams(d=2, alpha=0.75, s=0.75)
        kg = k_constant_gamma(p)
        ka = k_constant_appendix(p)
        assert abs(ka - kg) <= 1e-4 * kg

    def test_appendix_case_range(self):
        with pytest.raises(CaseOutOfRange):
            k_constant_appendix(ModelParams(d=2, alpha=0.4, s=0.5))

    def test_limit_consistency_near_case_boundary(self):
        # approaching s + alpha = 1 from above, the (s+alpha-1) zero of the
        # kernel coefficient is compensated by the Gamma(s+alpha-1) pole of
        # the Riesz constant, so both routes stay finite and equal
        for eps in (0.05, 0.01):
            p = ModelParams(d=2, alpha=0.6, s=0.4 + eps)
            kg = k_constant_gamma(p)
            ka = k_constant_appendix(p)
            assert abs(ka - kg) <= 1e-3 * abs(kg) + 1e-12
        # K itself is continuous across the case boundary
        below = k_constant_gamma(ModelParams(d=2, alpha=0.6, s=0.399))
        above = k_constant_gamma(ModelParams(d=2, alpha=0.6, s=0.401))
        assert abs(above - below) < 0.01 * above

    def test_report(self):
        p = ModelParams(d=2, alpha=0.75, s=0.75)
        rep = k_report(p)
        assert rep.k_appendix is not None
        assert rep.max_relative_deviation() < 1e-4
        rep2 = k_report(ModelParams(d=2, alpha=0.25, s=0.5))
        assert rep2.k_appendix is None


class TestRiesz:
    def test_exact_values(self):
        assert riesz_constant(2, 0.5) == pytest.approx(2.0 * math.pi, rel=1e-13)
        assert riesz_constant(3, 1.0) == pytest.approx(4.0 * math.pi, rel=1e-13)

    def test_domain(self):
        with pytest.raises(DomainError):
            riesz_constant(2, 1.0)

    def test_gaussian_identity(self):
        # <G^sigma * phi, phi> for the unit Gaussian in d = 2 against the
        # Fourier-side weighted integral, both by radial quadrature
        sigma = 0.7
        # physical side: phi*phi(z) = pi e^{-|z|^2/4}; kernel |z|^{2 sigma - 2}
        lhs = integrate_1d(QuadRequest(
            integrand=lambda r: (2.0 * math.pi) * r * r ** (2.0 * sigma - 2.0)
            * math.pi * math.exp(-r * r / 4.0),
            interval=(0.0, math.inf), abs_tol=1e-12, rel_tol=1e-10,
            singular_points=(0.0,))).value
        rhs = riesz_constant(2, sigma) * integrate_1d(QuadRequest(
            integrand=lambda r: (2.0 * math.pi) * r * r ** (-2.0 * sigma)
            * math.exp(-r * r),
            interval=(0.0, math.inf), abs_tol=1e-12, rel_tol=1e-10,
            singular_points=(0.0,))).value
        assert abs(lhs - rhs) <= 1e-6 * abs(rhs)


class TestDConstant:
    def test_scale_independence(self):
        a = 0.5
        vals = [d_constant(2, a, z) / z ** (2.0 * a) for z in (0.5, 1.0, 2.0)]
        for v in vals[1:]:
            assert abs(v - vals[0]) <= 1e-6 * abs(vals[0])

    def test_positive(self):
        for d, a in ((2, 0.25), (2, 0.75), (3, 0.5)):
            assert d_constant(d, a) > 0.0


class TestGammaProductProperties:
    @given(st.floats(1.1, 1.9), st.floats(0.2, 40.0))
    @settings(max_examples=60, deadline=None)
    def test_conjugate_symmetry_on_lines(self, x, y):
        prod = jl_product(P2)
        z = complex(x, y)
        assert prod(z.conjugate()) == pytest.approx(prod(z).conjugate(),
                                                    rel=1e-12)

    def test_rejects_zero_coef(self):
        with pytest.raises(DomainError):
            GammaProduct(1.0, ((0.0, 1.0, +1),))

    def test_rejects_eval_at_pole(self):
        with pytest.raises(DomainError):
            h_product(P2)(3.0)
