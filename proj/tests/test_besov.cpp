#include "doctest.h"

#include "phi4/besov.hpp"
#include "phi4/noise.hpp"
#include "weighted_oracle.hpp"

#include <cmath>

using namespace phi4;

namespace {

GridField fill(const Grid &g, double (*fn)(double, double)) {
	GridField f(g);
	for (std::size_t it = 0; it < g.nt; ++it)
		for (std::size_t s = 0; s < g.nx; ++s)
			f.at(it, s) = fn(g.time(it), static_cast<double>(s) * g.dx());
	return f;
}

double sin1(double, double x) { return std::sin(2 * M_PI * x); }
double x1(double, double x) { return x; }
double one(double, double) { return 1; }

} // namespace

TEST_CASE("lift of x on a non-periodic lattice") {
	Grid g = besov_grid(1, 4, 1);
	auto f = lift_polynomial(fill(g, x1), 1.5, false);
	REQUIRE(f.K() == 2);
	for (std::size_t p = 0; p < g.size(); p += 7) {
		CHECK(f.at(p)[0] == doctest::Approx(static_cast<double>(p % g.nx) * g.dx()).epsilon(1e-12));
		CHECK(f.at(p)[1] == doctest::Approx(1).epsilon(1e-10));
	}
	auto w = weighted_norm(f, 1.5, 2, 1);
	for (double v : w.translation)
		CHECK(v < 1e-10);
}

TEST_CASE("lift of a constant has only the unit component") {
	Grid g = besov_grid(1, 4, 1);
	auto f = lift_polynomial(fill(g, one), 2.5);
	REQUIRE(f.K() > 2);
	for (std::size_t p = 0; p < g.size(); p += 5) {
		CHECK(f.at(p)[0] == doctest::Approx(1));
		for (std::size_t j = 1; j < f.K(); ++j)
			CHECK(std::abs(f.at(p)[j]) < 1e-10);
	}
}

TEST_CASE("Taylor remainder of sin against the recentering map") {
	Grid g = besov_grid(1, 6, 1);
	auto f = lift_polynomial(fill(g, sin1), 1.5);
	std::vector<double> buf(f.K());
	double c = 4 * M_PI * M_PI / 2;
	for (const auto &o : dyadic_offsets(g)) {
		if (o.it != 0)
			continue;
		for (std::size_t s = 0; s < g.nx; s += 3) {
			std::size_t s2 = static_cast<std::size_t>(((static_cast<long>(s) + o.ix[0]) % static_cast<long>(g.nx) + static_cast<long>(g.nx)) % static_cast<long>(g.nx));
			recenter(f.ks, f.at(10 * g.nx + s), o.h, buf.data());
			double r0 = std::abs(f.at(10 * g.nx + s2)[0] - buf[0]);
			CHECK(r0 <= c * o.norm * o.norm * 1.05 + 1e-6);
			double r1 = std::abs(f.at(10 * g.nx + s2)[1] - buf[1]);
			CHECK(r1 <= 2 * c * o.norm * 1.05 + 1e-4);
		}
	}
}

TEST_CASE("weighted norm") {
	Grid g = besov_grid(1, 4, 1);
	SUBCASE("zero") {
		ModelledField f(g, 1.5);
		CHECK(weighted_norm(f, 1.5, 2, 1).total == 0);
	}
	SUBCASE("constant local term") {
		auto f = lift_polynomial(fill(g, one), 1.5);
		auto w = weighted_norm(f, 1.0, 2, 1);
		double s = 0;
		for (std::size_t it = 0; it < g.nt; ++it)
			s += g.dt() * g.dx() * static_cast<double>(g.nx) / g.time(it);
		CHECK(w.local[0] == doctest::Approx(std::sqrt(s)).epsilon(1e-12));
		CHECK(w.translation[0] < 1e-12);
	}
	SUBCASE("brute force") {
		ModelledField f(g, 1.5);
		REQUIRE(f.K() == 2);
		std::uint64_t st = 12345;
		for (double &v : f.c) {
			st = st * 6364136223846793005ull + 1442695040888963407ull;
			v = static_cast<double>(st >> 11) * 0x1.0p-53 - 0.5;
		}
		for (double p : {1.0, 2.0}) {
			double lib = weighted_norm(f, 1.5, p, 1).total;
			CHECK(lib == doctest::Approx(oracle::brute_weighted(f, 1.5, p, 1)).epsilon(1e-12));
		}
	}
	SUBCASE("eta above gamma") {
		ModelledField f(g, 1.5);
		CHECK_THROWS_AS(weighted_norm(f, 2.0, 2, 1), Error);
	}
}

TEST_CASE("distribution norm") {
	Grid g = besov_grid(1, 5, 1);
	SUBCASE("zero") { CHECK(distribution_norm(GridField(g), -1.5, 2, 1, 3).value == 0); }
	SUBCASE("bounded field with p = inf") {
		auto xi = fill(g, sin1);
		auto dn = distribution_norm(xi, -0.5, INFINITY, 1, 3);
		REQUIRE(!dn.lambdas.empty());
		double bound = 0;
		for (double lam : dn.lambdas)
			for (const auto &phi : test_bank(1, 3))
				bound = std::max(bound, patch_l1(rescale_test(phi, lam, ScaledPoint{0.5, {0.5, 0, 0}}, g)) *
				                            std::pow(lam, 0.5));
		CHECK(dn.value > 0);
		CHECK(dn.value <= bound * (1 + 1e-9));
	}
	SUBCASE("white noise sits at regularity -3/2") {
		Grid g6 = besov_grid(1, 6, 1);
		auto a = distribution_norm(white_field(g, 3), -1.6, 2, 1, 3).value;
		auto b = distribution_norm(white_field(g6, 3), -1.6, 2, 1, 3).value;
		CHECK(std::abs(b / a - 1) < 0.2);
		auto c = distribution_norm(white_field(g, 3), -1.4, 2, 1, 3).value;
		auto e = distribution_norm(white_field(g6, 3), -1.4, 2, 1, 3).value;
		CHECK(e > c);
	}
}

TEST_CASE("averages") {
	SUBCASE("constant") {
		Grid g = besov_grid(1, 5, 1);
		auto f = lift_polynomial(fill(g, one), 1.5);
		auto a = to_averages(f, 2, 4);
		for (const auto &lev : a.levels)
			for (std::size_t i = 0; i < lev.points.size(); ++i)
				CHECK(lev.c[i * a.ks.size()] == doctest::Approx(1));
		auto b = check_averages_bounds(a, 0, 2);
		CHECK(b.translation < 1e-12);
		CHECK(b.consistency < 1e-12);
	}
	SUBCASE("affine field is reproduced exactly") {
		Grid g = besov_grid(1, 5, 1);
		auto fn = lift_polynomial(fill(g, x1), 1.5, false);
		auto r2 = round_trip(fn, 2, 4, 2, 2);
		for (double e : r2.errors)
			CHECK(e < 1e-12);
		CHECK(r2.errors.size() == 3);
	}
	SUBCASE("sin converges at the first omitted degree") {
		Grid g = besov_grid(1, 7, 1);
		auto f = lift_polynomial(fill(g, sin1), 1.5);
		auto rt = round_trip(f, 2, 5, 2, 2);
		CHECK(rt.rate == doctest::Approx(2).epsilon(0.15));
	}
	SUBCASE("bounds stabilise with depth") {
		Grid g = besov_grid(1, 6, 1);
		auto f = lift_polynomial(fill(g, sin1), 1.5);
		auto b4 = check_averages_bounds(to_averages(f, 2, 4), 0.5, 2);
		auto b5 = check_averages_bounds(to_averages(f, 2, 5), 0.5, 2);
		double s4 = b4.local + b4.translation + b4.consistency, s5 = b5.local + b5.translation + b5.consistency;
		CHECK(std::abs(s5 / s4 - 1) < 0.1);
	}
	SUBCASE("zero") {
		Grid g = besov_grid(1, 5, 1);
		auto b = check_averages_bounds(to_averages(ModelledField(g, 1.5), 2, 4), 0.5, 2);
		CHECK(b.local + b.translation + b.consistency == 0);
	}
}

TEST_CASE("product") {
	Grid g = besov_grid(1, 4, 1);
	SUBCASE("unit") {
		auto u = lift_polynomial(fill(g, one), 2.5);
		auto s = lift_polynomial(fill(g, sin1), 2.5);
		auto p = product(u, s);
		for (std::size_t i = 0; i < p.c.size(); ++i)
			CHECK(p.c[i] == doctest::Approx(s.c[i]).epsilon(1e-12));
	}
	SUBCASE("x times x") {
		auto x = lift_polynomial(fill(g, x1), 2.5, false);
		auto x2 = lift_polynomial(fill(g, [](double, double v) { return v * v; }), 2.5, false);
		auto p = product(x, x);
		REQUIRE(p.K() == x2.K());
		for (std::size_t i = 0; i < p.c.size(); ++i)
			CHECK(std::abs(p.c[i] - x2.c[i]) < 1e-9);
	}
	SUBCASE("multiplicative constant does not blow up under refinement") {
		std::vector<double> K;
		for (int N : {4, 5}) {
			Grid gg = besov_grid(1, N, 1);
			auto a = lift_polynomial(random_smooth(gg, 1), 1.5);
			auto b = lift_polynomial(random_smooth(gg, 2), 1.5);
			double na = weighted_norm(a, 1.5, INFINITY, 1).total, nb = weighted_norm(b, 1.5, INFINITY, 1).total;
			K.push_back(weighted_norm(product(a, b), 1.5, INFINITY, 1).total / (na * nb));
		}
		CHECK(K[1] < 1.5 * K[0]);
	}
	SUBCASE("mismatched lattices") {
		CHECK_THROWS_AS(product(ModelledField(g, 1.5), ModelledField(besov_grid(1, 5, 1), 1.5)), Error);
	}
}

TEST_CASE("heat lift") {
	Grid g = besov_grid(1, 5, 1);
	auto h = decompose_heat(1, 3, 1, 4);
	SUBCASE("constant source") {
		auto u = heat_duhamel(fill(g, one), h);
		for (std::size_t it = 0; it < g.nt; it += 37)
			CHECK(u.at(it, 3) == doctest::Approx(g.time(it)).epsilon(1e-6));
	}
	SUBCASE("zero source") {
		auto u = heat_duhamel(GridField(g), h);
		for (double v : u.data)
			CHECK(v == 0);
	}
	SUBCASE("sin closed form") {
		auto L = convolve_heat_lift(lift_polynomial(fill(g, sin1), 1.5), h);
		CHECK(L.gamma == doctest::Approx(3.5));
		double l = 4 * M_PI * M_PI, num = 0, den = 0;
		for (std::size_t it = 0; it < g.nt; ++it)
			for (std::size_t s = 0; s < g.nx; ++s) {
				double ex = std::sin(2 * M_PI * s * g.dx()) * (1 - std::exp(-l * g.time(it))) / l;
				double v = L.at(it * g.nx + s)[0];
				num += (v - ex) * (v - ex);
				den += ex * ex;
			}
		CHECK(std::sqrt(num / den) < 1e-3);
	}
}

TEST_CASE("reconstruction defect") {
	Grid g = besov_grid(1, 5, 1);
	SUBCASE("zero") {
		CHECK(reconstruction_defect(ModelledField(g, 1.5), {0.25, 0.125}, 1.5, 2, 3).value == 0);
	}
	SUBCASE("affine field is its own reconstruction") {
		auto f = lift_polynomial(fill(g, x1), 1.5, false);
		CHECK(reconstruction_defect(f, {0.25, 0.125}, 1.5, 2, 3).value < 1e-10);
	}
	SUBCASE("smooth field stays bounded at scale lambda^gamma") {
		auto f = lift_polynomial(fill(g, sin1), 1.5);
		auto r = reconstruction_defect(f, {0.25, 0.125}, 1.5, 2, 3);
		REQUIRE(r.values.size() == 2);
		CHECK(r.values[0] > 0);
		CHECK(r.values[1] <= r.values[0] * 1.1);
	}
	SUBCASE("noise coefficient absorbs a rough field") {
		GridField P = white_field(g, 5);
		ModelledField f(g, 1.5);
		for (std::size_t p = 0; p < g.size(); ++p)
			f.at(p)[0] = P.data[p];
		GridField a(g);
		for (double &v : a.data)
			v = 1;
		CHECK(reconstruction_defect(f, {0.25, 0.125}, 1.5, 2, 3, a, P).value < 1e-10);
		CHECK(reconstruction_defect(f, {0.25, 0.125}, 1.5, 2, 3).value > 1);
	}
}
