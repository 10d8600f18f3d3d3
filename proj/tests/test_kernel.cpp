#include "doctest.h"
#include "phi4/kernel.hpp"

#include <cmath>

using namespace phi4;

namespace {

double theta_heat(double t, double x) {
	double s = 1;
	for (int k = 1; k < 60; ++k)
		s += 2 * std::exp(-4 * M_PI * M_PI * k * k * t) * std::cos(2 * M_PI * k * x);
	return s;
}

ScaledPoint pt(double t, double x0, double x1 = 0, double x2 = 0) {
	ScaledPoint z;
	z.t = t;
	z.x = {x0, x1, x2};
	return z;
}

} // namespace

TEST_CASE("cardinal B-spline partition of unity") {
	for (double x : {0.0, 0.13, 0.5, 0.77}) {
		double s = 0;
		for (int k = -10; k <= 10; ++k)
			s += cardinal_bspline(8, x - k);
		CHECK(s == doctest::Approx(1).epsilon(1e-13));
	}
	auto m = bspline_mother();
	CHECK(m.mass(2) == doctest::Approx(1).epsilon(1e-10));
	CHECK(m(pt(m.rt * 1.01, 0), 1) == 0);
}

TEST_CASE("heat decomposition") {
	auto h = decompose_heat(1, 3, 1, 4);
	SUBCASE("level scaling") {
		for (int m = 1; m <= 3; ++m)
			for (auto z : {pt(0.01, 0.05), pt(0.03, -0.1), pt(0.1, 0.2)}) {
				double lhs = h.Pm(m, dilate(z, std::ldexp(1.0, -m)));
				CHECK(lhs == doctest::Approx(std::ldexp(1.0, m) * h.P0(z)).epsilon(1e-12));
			}
		auto h3 = decompose_heat(3, 3, 1, 4);
		auto z = pt(0.02, 0.05, -0.03, 0.1);
		CHECK(h3.Pm(2, dilate(z, 0.25)) == doctest::Approx(64 * h3.P0(z)).epsilon(1e-12));
	}
	SUBCASE("P0 annihilates polynomials of scaled degree at most 3") {
		auto q = gauss_legendre(0, 0.25, 40), r = gauss_legendre(-0.5, 0.5, 40);
		double l1 = 0;
		std::vector<double> mom(6, 0);
		const int kk[6][2] = {{0, 0}, {0, 1}, {0, 2}, {1, 0}, {0, 3}, {1, 1}};
		for (std::size_t i = 0; i < q.x.size(); ++i)
			for (std::size_t j = 0; j < r.x.size(); ++j) {
				double v = h.P0(pt(q.x[i], r.x[j])) * q.w[i] * r.w[j];
				l1 += std::abs(v);
				for (int m = 0; m < 6; ++m)
					mom[m] += v * std::pow(q.x[i], kk[m][0]) * std::pow(r.x[j], kk[m][1]);
			}
		for (double m : mom)
			CHECK(std::abs(m) < 1e-6 * l1);
	}
	SUBCASE("partial sums reproduce the periodic heat kernel") {
		for (auto z : {pt(0.1, 0.3), pt(0.02, 0.45), pt(0.3, 0.0)}) {
			double ref = theta_heat(z.t, z.x[0]);
			CHECK(h.partial_sum(z, 6) == doctest::Approx(ref).epsilon(1e-6));
		}
	}
	SUBCASE("semigroup on cos(2 pi x)") {
		double t = 0.1;
		int n = 400;
		for (double x : {0.0, 0.2, 0.7}) {
			double s = 0;
			for (int j = 0; j < n; ++j) {
				double y = (j + 0.5) / n;
				s += h.partial_sum(pt(t, x - y), 4) * std::cos(2 * M_PI * y) / n;
			}
			double ref = std::exp(-4 * M_PI * M_PI * t) * std::cos(2 * M_PI * x);
			CHECK(std::abs(s - ref) < 1e-3 * std::exp(-4 * M_PI * M_PI * t));
		}
	}
	SUBCASE("spatial transform of P_+") {
		double tau = 0.05;
		int n = 4000;
		for (int k : {0, 1, 3}) {
			double s = 0;
			for (int j = 0; j < n; ++j) {
				double x = -0.5 + (j + 0.5) / n;
				s += h.Pplus(pt(tau, x)) * std::cos(2 * M_PI * k * x) / n;
			}
			CHECK(h.Pplus_hat(tau, {k, 0, 0}) == doctest::Approx(s).epsilon(1e-8));
		}
	}
}

TEST_CASE("kernel families") {
	SUBCASE("alpha = 1 telescopes to the finest mother") {
		auto f = white_family(1, 5, false);
		auto m = bspline_mother();
		for (double w0 : {0.0, 7.0, 40.0})
			for (double w : {0.0, 3.0, 25.0})
				CHECK(f.R_hat(w0, {w, 0, 0}) == doctest::Approx(m.hat(w0 / 1024, {w / 32, 0, 0}, 1)).epsilon(1e-10));
	}
	SUBCASE("alpha_0 = 1 and zero above is the mother itself") {
		auto f = smooth_family(2);
		auto m = bspline_mother();
		auto z = pt(0.01, 0.1, -0.2);
		CHECK(f.R(z) == doctest::Approx(m(z, 2)));
		auto rep = check_assumption_R(f, 1);
		CHECK(rep.all_pass());
	}
	SUBCASE("sup norms of R_n grow like 2^{n(|s|-beta)}") {
		auto f = power_family(1, 8, 0.3);
		std::vector<double> ns, logs;
		for (int n = 2; n <= 8; ++n) {
			double sup = 0;
			for (int i = -40; i <= 40; ++i)
				for (int j = -40; j <= 40; ++j) {
					auto z = pt(i / 40.0 * 0.25 * std::ldexp(1.0, -2 * n) * 4, j / 40.0 * std::ldexp(1.0, -n));
					sup = std::max(sup, std::abs(f.level(n, z)));
				}
			ns.push_back(n);
			logs.push_back(std::log2(sup));
		}
		CHECK(fit_slope(ns, logs) == doctest::Approx(3 - 0.3).epsilon(0.1 / 2.7));
	}
	SUBCASE("assumption report") {
		auto w = white_family(1, 6, false);
		auto rep = check_assumption_R(w, 2);
		CHECK(rep.all_pass());
		for (const auto &row : rep.rows)
			if (row.n >= 1 && row.k == MultiIndex{})
				CHECK(std::abs(row.moment) < 1e-8);
		auto p = power_family(1, 6, 0.3);
		auto rp = check_assumption_R(p, 2);
		CHECK(rp.all_pass());
		// direct maximum of |R̂| on a frequency grid
		double mx = 0;
		for (int i = 0; i <= 200; ++i)
			for (int j = 0; j <= 200; ++j)
				mx = std::max(mx, std::abs(p.R_hat(i * rp.frequency_window / 200, {j * std::sqrt(rp.frequency_window) / 200, 0, 0})));
		CHECK(std::isfinite(rp.sup_R_hat));
		CHECK(rp.sup_R_hat >= mx * (1 - 1e-9));
		double bound = 0;
		for (int n = 0; n <= 6; ++n)
			bound += std::pow(2.0, -0.3 * n);
		CHECK(rp.sup_R_hat <= 2 * bound);
	}
}

TEST_CASE("roughness scores") {
	auto w = white_family(1, 6, true);
	auto rw = roughness_score(w, 2, 1, 6, 20000);
	for (double s : rw.S)
		CHECK(s == doctest::Approx(1));
	auto p = power_family(1, 8, 0.3);
	auto rp = roughness_score(p, 2, 1, 6, 20000);
	CHECK(rp.liminf_S > 0);
	for (std::size_t i = 0; i < rp.n.size(); ++i)
		CHECK((rp.S[i] > 0) == (rp.S2[i] > 0));
}

TEST_CASE("constructed mother") {
	CHECK(ideal_defect(0.3) == doctest::Approx(1).epsilon(1e-12));
	auto m = construct_mother(0.1, 0.3);
	// dense trapezoid transform of r0(u) bump(delta u), r0 the inverse transform of the cutoff
	const double delta = 0.1, L = 1 / delta;
	const int nu = 4000, nv = 400;
	std::vector<double> us(nu + 1), r0(nu + 1);
	for (int i = 0; i <= nu; ++i) {
		double u = L * i / nu, s = 0;
		for (int j = 0; j <= nv; ++j) {
			double v = 2.0 * j / nv;
			s += (j == 0 || j == nv ? 0.5 : 1.0) * ideal_cutoff_space(v) * std::cos(v * u);
		}
		us[i] = u;
		double b = std::abs(delta * u) < 1 ? std::exp(1 - 1 / (1 - delta * u * delta * u)) : 0;
		r0[i] = s * (2.0 / nv) / M_PI * b;
	}
	auto hat = [&](double w) {
		if (w > 40)
			return 0.0;
		double s = 0;
		for (int i = 0; i <= nu; ++i)
			s += (i == 0 || i == nu ? 0.5 : 1.0) * r0[i] * std::cos(w * us[i]);
		return 2 * s * L / nu;
	};
	double h0 = hat(0);
	auto eta = [&](double w) { return (hat(w) - hat(2 * w)) / h0; };
	double defect = std::abs(eta(1));
	for (int n = -40; n <= 40; ++n)
		if (n != 0)
			defect -= std::pow(2.0, -0.3 * n) * std::abs(eta(std::ldexp(1.0, -n)));
	CHECK(m.defect == doctest::Approx(defect).epsilon(1e-3));
	CHECK(m.defect > 0);
	CHECK(construct_mother(0.02, 0.3).defect > m.defect);
}
