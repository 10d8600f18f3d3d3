#include "doctest.h"
#include "phi4/model.hpp"

#include <cmath>

using namespace phi4;

namespace {

Grid grid(int d, std::size_t nx, std::size_t nt, double T) {
	Grid g;
	g.d = d;
	g.nx = nx;
	g.nt = nt;
	g.T = T;
	return g;
}

StructureParams sparams(int d) {
	StructureParams p;
	p.d = d;
	p.kappa = 0.01;
	p.gamma_max = 2;
	return p;
}

} // namespace

TEST_CASE("renormalization constants") {
	auto heat = decompose_heat(1, 3, 1, 4);
	auto rho = bspline_mother();
	Grid g = grid(1, 64, 1024, 0.25);
	auto z = renorm_constants(zero_family(1, 4), 0.125, rho, heat, g);
	CHECK(z.C1 == 0);
	CHECK(z.C2 == 0);
	CHECK(z.C3 == 0);
	for (auto f : {white_family(1, 4, true), power_family(1, 4, 0.3), smooth_family(1)}) {
		auto rc = renorm_constants(f, 0.125, rho, heat, g);
		CHECK(rc.C1 > 0);
		CHECK(std::abs(rc.C2 - rc.C3) <= 1e-6 * std::abs(rc.C2));
		CHECK(rc.pde_constant() == doctest::Approx(3 * rc.C1 - 9 * rc.C2));
	}
	SUBCASE("C1 grows as eps halves for white noise in d = 3") {
		Grid g3 = grid(3, 16, 64, 0.25);
		auto h3 = decompose_heat(3, 3, 1, 4);
		auto a = renorm_constants(white_family(3, 3, true), 0.5, rho, h3, g3);
		auto b = renorm_constants(white_family(3, 3, true), 0.25, rho, h3, g3);
		CHECK(b.C1 > a.C1);
	}
}

TEST_CASE("canonical and renormalized pairings") {
	Grid g = grid(1, 32, 1024, 1.0);
	auto heat = decompose_heat(1, 3, 1, 4);
	auto f = white_family(1, 3, true);
	auto noise = sample_noise(f, g, 1, 4.0 / 32);
	auto rc = renorm_constants(f, 4.0 / 32, bspline_mother(), heat, g);
	RenormMap M{rc.C1, rc.C2, rc.C3};
	ModelContext ctx(*noise.xi_eps, heat, build_structure(sparams(1)), M);
	auto eta = test_bank(1, 2)[0];
	ScaledPoint z;
	z.t = 0.5;
	z.x[0] = 0.5;
	double lam = 0.25;
	Patch p = rescale_test(eta, lam, z, g);
	double mass = 0;
	for (double v : p.v)
		mass += v * p.cell;

	CHECK(canonical_pair(ctx, Tree::one(), z, eta, lam) == doctest::Approx(mass).epsilon(1e-12));
	auto ann = eta.annihilated(1);
	CHECK(std::abs(canonical_pair(ctx, Tree::poly({{0, 1, 0, 0}}), z, ann, lam)) < 1e-6);
	double direct = inner(*noise.xi_eps, patch_field(p, g));
	CHECK(canonical_pair(ctx, Tree::xi(), z, eta, lam) == doctest::Approx(direct).epsilon(1e-10));
	CHECK(renormalized_pair(ctx, Tree::xi(), z, eta, lam) == canonical_pair(ctx, Tree::xi(), z, eta, lam));

	Tree ixi = Tree::I(Tree::xi());
	double c2 = canonical_pair(ctx, Tree::power(ixi, 2), z, eta, lam);
	CHECK(renormalized_pair(ctx, Tree::power(ixi, 2), z, eta, lam) == doctest::Approx(c2 - rc.C1 * mass).epsilon(1e-12));
	double c3 = canonical_pair(ctx, Tree::power(ixi, 3), z, eta, lam), c1 = canonical_pair(ctx, ixi, z, eta, lam);
	CHECK(renormalized_pair(ctx, Tree::power(ixi, 3), z, eta, lam) ==
	      doctest::Approx(c3 - 3 * rc.C1 * c1).epsilon(1e-12));

	// affine in the constants
	ModelContext ctx2(*noise.xi_eps, heat, build_structure(sparams(1)), RenormMap{2 * rc.C1, 2 * rc.C2, 2 * rc.C3});
	double r1 = renormalized_pair(ctx, Tree::power(ixi, 2), z, eta, lam);
	double r2 = renormalized_pair(ctx2, Tree::power(ixi, 2), z, eta, lam);
	CHECK(r2 - r1 == doctest::Approx(r1 - c2).epsilon(1e-10));
}

TEST_CASE("noise scaling") {
	SUBCASE("white noise in d = 3 has slope -5") {
		auto eta = test_bank(3, 2)[0];
		std::vector<double> x, y;
		for (int j = 1; j <= 4; ++j) {
			double l = std::ldexp(1.0, -j);
			x.push_back(std::log(l));
			y.push_back(std::log(xi_second_moment(white_family(3, 8, true), eta, l)));
		}
		CHECK(fit_slope(x, y) == doctest::Approx(-5).epsilon(1e-6));
	}
	SUBCASE("Fourier second moment against the lattice norm") {
		auto eta = test_bank(1, 2)[0];
		Grid g = grid(1, 256, 4096, 1);
		ScaledPoint z;
		z.t = 0.5;
		z.x[0] = 0.5;
		auto p = rescale_test(eta, 0.25, z, g);
		double s = 0;
		for (double v : p.v)
			s += v * v * p.cell;
		CHECK(xi_second_moment(white_family(1, 4, true), eta, 0.25) == doctest::Approx(s).epsilon(1e-6));
		// general family: ‖R∗η^λ‖² on the lattice
		auto f = power_family(1, 4, 0.3);
		Grid h = grid(1, 64, 4096, 1);
		ScaledPoint zc;
		zc.t = 0.5;
		zc.x[0] = 0.5;
		auto q = rescale_test(eta, 0.25, zc, h);
		auto Rq = apply_R(f, patch_field(q, h));
		CHECK(xi_second_moment(f, eta, 0.25) == doctest::Approx(inner(Rq, Rq)).epsilon(1e-2));
	}
	SUBCASE("deterministic scaling diagnostic") {
		auto eta = test_bank(1, 2)[0];
		Grid g = grid(1, 32, 256, 0.25);
		auto fit = scaling_diagnostic(Tree::xi(), {0.5, 0.25, 0.125, 0.0625}, power_family(1, 12, 0.3),
		                              decompose_heat(1, 3, 1, 4), g, 0, 1, eta, sparams(1));
		CHECK(fit.slope == doctest::Approx(-3 + 0.6).epsilon(0.15 / 2.4));
	}
}

TEST_CASE("cherry second moment") {
	Grid g = grid(1, 32, 64, 0.75);
	auto heat = decompose_heat(1, 3, 1, 4);
	auto eta = test_bank(1, 2)[0].annihilated(1);
	CHECK(cherry_second_moment(eta, 0.25, zero_family(1, 4), heat, g) == 0);
	auto c = cherry_monte_carlo(eta, 0.25, white_family(1, 4, true), heat, g, 400);
	CHECK(c.fourier > 0);
	CHECK(std::abs(c.zscore()) < 5);
}
