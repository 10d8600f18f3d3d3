#include "doctest.h"
#include "phi4/pde.hpp"

#include <cmath>
#include <random>

using namespace phi4;

namespace {

Grid grid1(std::size_t nx, std::size_t nt, double T) {
	Grid g;
	g.d = 1;
	g.nx = nx;
	g.nt = nt;
	g.T = T;
	return g;
}

GridField fill(const Grid &g, const std::function<double(double, double)> &f) {
	GridField out(g);
	for (std::size_t it = 0; it < g.nt; ++it)
		for (std::size_t k = 0; k < g.nx; ++k)
			out.at(it, k) = f(g.time(it), static_cast<double>(k) * g.dx());
	return out;
}

// φ_n = a_n cos(2π m x): the exponential-integrator recursions reduce to scalars per mode
struct ModeRec {
	double E, Phi;
	ModeRec(const Grid &g, int m) {
		double lam = 4 * M_PI * M_PI * m * m, dt = g.dt();
		E = std::exp(-lam * dt);
		Phi = lam == 0 ? dt : (1 - E) / lam;
	}
};

GridField random_field(const Grid &g, unsigned seed, bool interior = false) {
	std::mt19937 rng(seed);
	std::normal_distribution<double> n;
	GridField f(g);
	for (std::size_t it = 0; it < g.nt; ++it)
		for (std::size_t k = 0; k < g.spatial(); ++k)
			f.at(it, k) = interior && (it == 0 || it + 1 == g.nt) ? 0.0 : n(rng);
	return f;
}

double max_diff(const GridField &a, const GridField &b) {
	double m = 0;
	for (std::size_t i = 0; i < a.data.size(); ++i)
		m = std::max(m, std::abs(a.data[i] - b.data[i]));
	return m;
}

} // namespace

TEST_CASE("forward solver") {
	SUBCASE("zero data stays zero") {
		Grid g = grid1(8, 16, 1.0 / 16);
		auto b = solve_forward(std::vector<double>(8, 0.0), GridField(g), 0);
		CHECK(sup_norm(b.u) == 0);
	}
	SUBCASE("spatially constant data follows the cubic ODE") {
		Grid g = grid1(4, 10000, 1);
		double c = 2;
		auto b = solve_forward(std::vector<double>(4, c), GridField(g), 0);
		double t = g.time(g.nt - 1), ref = c / std::sqrt(1 + 2 * c * c * t);
		CHECK(std::abs(b.u.at(g.nt - 1, 0) - ref) < 1e-4 * ref);
	}
	SUBCASE("linear regime matches the closed-form Duhamel integral") {
		Grid g = grid1(16, 64, 0.25);
		SolverSettings s;
		s.cubic = false;
		std::vector<double> u0(16);
		for (std::size_t k = 0; k < 16; ++k)
			u0[k] = std::cos(2 * M_PI * k / 16.0);
		auto xi = fill(g, [](double, double x) { return 0.5 + std::sin(4 * M_PI * x); });
		auto b = solve_forward(u0, xi, 0, s);
		double l1 = 4 * M_PI * M_PI, l2 = 16 * M_PI * M_PI;
		for (std::size_t it = 0; it < g.nt; ++it)
			for (std::size_t k = 0; k < 16; ++k) {
				double t = g.time(it), x = k / 16.0;
				double ref = std::exp(-l1 * t) * std::cos(2 * M_PI * x) + 0.5 * t +
				             (1 - std::exp(-l2 * t)) / l2 * std::sin(4 * M_PI * x);
				CHECK(b.u.at(it, k) == doctest::Approx(ref).epsilon(1e-12).scale(1));
			}
	}
	SUBCASE("explosion guard and non-finite values") {
		Grid g = grid1(4, 100, 1);
		SolverSettings s;
		s.cubic = false;
		s.guard = 10;
		auto b = solve_forward(std::vector<double>(4, 1.0), GridField(g), 5, s);
		CHECK(b.exploded);
		CHECK(b.blowup_time == doctest::Approx(std::log(10.0) / 5).epsilon(0.05));
		s.guard = INFINITY;
		CHECK_THROWS_AS(solve_forward(std::vector<double>(4, 1.0), GridField(g), 1e308, s), Error);
	}
	SUBCASE("explicit Euler stability is validated") {
		SolverSettings s;
		s.integrator = Integrator::ExplicitEuler;
		CHECK_THROWS_AS(s.validate(grid1(32, 16, 1)), Error);
		CHECK_NOTHROW(s.validate(grid1(8, 1024, 1.0 / 64)));
	}
}

TEST_CASE("shifted solver") {
	Grid g = grid1(8, 64, 0.25);
	auto xi = random_field(g, 1);
	auto u0 = random_initial(g, 1);
	auto base = solve_forward(u0, xi, 0.5);
	CHECK(solve_shifted(u0, xi, GridField(g), 0.5).u.data == base.u.data);
	GridField minus = xi;
	for (auto &v : minus.data)
		v = -v;
	auto ode = solve_shifted(std::vector<double>(8, 1.5), xi, minus, 0);
	auto ref = solve_forward(std::vector<double>(8, 1.5), GridField(g), 0);
	CHECK(max_diff(ode.u, ref.u) < 1e-12);
	SUBCASE("local Lipschitz constant is stable across grids") {
		std::vector<double> K;
		for (std::size_t n : {16, 32}) {
			Grid h = grid1(n, n * n / 4, 0.25);
			auto u0h = random_initial(h, 2);
			GridField zero(h);
			auto dir = fill(h, [](double t, double x) { return 1e-3 * std::cos(2 * M_PI * x) * (1 + t); });
			auto a = solve_forward(u0h, zero, 0), b = solve_shifted(u0h, zero, dir, 0);
			GridField d(h);
			for (std::size_t i = 0; i < d.data.size(); ++i)
				d.data[i] = b.u.data[i] - a.u.data[i];
			K.push_back(l2_norm(d) / l2_norm(dir));
		}
		CHECK(K[1] / K[0] == doctest::Approx(1).epsilon(0.2));
	}
}

TEST_CASE("tangent and dual solvers") {
	Grid g = grid1(16, 64, 0.25);
	GridField zero(g);
	ModeRec r1(g, 1);
	auto cosx = [](double x) { return std::cos(2 * M_PI * x); };
	SUBCASE("zero inputs") {
		auto u = solve_forward(random_initial(g, 3), random_field(g, 3), 1).u;
		CHECK(sup_norm(solve_tangent(u, zero, 1)) == 0);
		CHECK(sup_norm(solve_dual(u, zero, 1)) == 0);
	}
	SUBCASE("tangent at u = 0 is the heat Duhamel integral") {
		auto h = fill(g, [&](double t, double x) { return (1 + 3 * t) * cosx(x); });
		auto v = solve_tangent(zero, h, 0);
		double a = 0;
		for (std::size_t n = 0; n < g.nt; ++n) {
			for (std::size_t k = 0; k < 16; ++k)
				CHECK(v.at(n, k) == doctest::Approx(a * cosx(k / 16.0)).epsilon(1e-12).scale(1));
			a = r1.E * a + r1.Phi * (1 + 3 * g.time(n));
		}
	}
	SUBCASE("tangent is linear") {
		auto u = solve_forward(random_initial(g, 4), random_field(g, 4), 1).u;
		auto h1 = random_field(g, 5), h2 = random_field(g, 6), h12 = h1;
		for (std::size_t i = 0; i < h12.data.size(); ++i)
			h12.data[i] += h2.data[i];
		auto v1 = solve_tangent(u, h1, 1), v2 = solve_tangent(u, h2, 1), v12 = solve_tangent(u, h12, 1);
		for (std::size_t i = 0; i < v1.data.size(); ++i)
			v1.data[i] += v2.data[i];
		CHECK(max_diff(v1, v12) <= 1e-12 * sup_norm(v12));
	}
	SUBCASE("dual at u = 0 is the backward heat Duhamel integral") {
		auto phi = fill(g, [&](double t, double x) { return std::pow(std::sin(M_PI * t / g.time(g.nt - 1)), 2) * cosx(x); });
		for (std::size_t k = 0; k < 16; ++k)
			phi.at(0, k) = phi.at(g.nt - 1, k) = 0;
		auto w = solve_dual(zero, phi, 0);
		double a = 0;
		for (std::size_t j = g.nt; j-- > 0;) {
			for (std::size_t k = 0; k < 16; ++k)
				CHECK(w.at(j, k) == doctest::Approx(a * cosx(k / 16.0)).epsilon(1e-12).scale(1));
			a = r1.E * a + r1.Phi * phi.at(j, 0);
		}
	}
	SUBCASE("dual equals the tangent of the time-reflected problem for constant u") {
		GridField u(g);
		for (auto &v : u.data)
			v = 0.7;
		auto phi = random_field(g, 8, true);
		GridField h(g);
		for (std::size_t n = 0; n < g.nt; ++n)
			for (std::size_t k = 0; k < 16; ++k)
				h.at(n, k) = phi.at(g.nt - 1 - n, k);
		auto w = solve_dual(u, phi, 1.3), v = solve_tangent(u, h, 1.3);
		double m = 0;
		for (std::size_t n = 0; n < g.nt; ++n)
			for (std::size_t k = 0; k < 16; ++k)
				m = std::max(m, std::abs(w.at(n, k) - v.at(g.nt - 1 - n, k)));
		CHECK(m <= 1e-13 * sup_norm(w));
	}
	SUBCASE("dual support must be interior") {
		auto phi = random_field(g, 9);
		CHECK_THROWS_AS(solve_dual(zero, phi, 0), Error);
	}
}

TEST_CASE("duality") {
	Grid g = grid1(16, 8, 8.0 / 256);
	auto u = solve_forward(random_initial(g, 1), random_field(g, 1), 0.8).u;
	SUBCASE("random pairs") {
		for (unsigned s = 0; s < 5; ++s) {
			auto h = random_field(g, 10 + s), phi = random_field(g, 20 + s, true);
			auto v = solve_tangent(u, h, 0.8), w = solve_dual(u, phi, 0.8);
			CHECK(duality_residual(v, phi, h, w) < 1e-10);
		}
		GridField zero(g);
		auto phi = random_field(g, 30, true);
		CHECK(duality_residual(solve_tangent(u, zero, 0.8), phi, zero, solve_dual(u, phi, 0.8)) == 0);
	}
	SUBCASE("dual map is the transpose of the tangent map") {
		std::size_t N = g.size(), S = g.spatial();
		std::vector<double> A(N * N), B(N * N); // A[i][j] = (tangent of e_j)_i
		for (std::size_t j = 0; j < N; ++j) {
			GridField e(g);
			e.data[j] = 1;
			auto v = solve_tangent(u, e, 0.8);
			for (std::size_t i = 0; i < N; ++i)
				A[i * N + j] = v.data[i];
			if (j < S || j >= N - S)
				continue;
			auto w = solve_dual(u, e, 0.8);
			for (std::size_t i = 0; i < N; ++i)
				B[i * N + j] = w.data[i];
		}
		double m = 0, scale = 0;
		for (std::size_t i = 0; i < N; ++i)
			for (std::size_t j = S; j < N - S; ++j) {
				m = std::max(m, std::abs(B[i * N + j] - A[j * N + i]));
				scale = std::max(scale, std::abs(A[j * N + i]));
			}
		CHECK(m <= 1e-14 * scale);
	}
	SUBCASE("mis-indexed dual is first order") {
		std::vector<double> res;
		for (std::size_t nt : {64, 128, 256}) {
			Grid h = grid1(16, nt, 0.25);
			auto uh = solve_forward(random_initial(h, 2), GridField(h), 1).u;
			double tl = h.time(nt - 1);
			auto hh = fill(h, [](double t, double x) { return std::cos(2 * M_PI * x) + t; });
			auto phi = fill(h, [&](double t, double x) { return std::pow(std::sin(M_PI * t / tl), 2) * std::sin(2 * M_PI * x + 0.3); });
			for (std::size_t k = 0; k < 16; ++k)
				phi.at(0, k) = phi.at(nt - 1, k) = 0;
			auto v = solve_tangent(uh, hh, 1);
			res.push_back(duality_residual(v, phi, hh, solve_dual_naive(uh, phi, 1)));
		}
		for (std::size_t i = 0; i + 1 < res.size(); ++i) {
			CHECK(res[i] / res[i + 1] >= 1.6);
			CHECK(res[i] / res[i + 1] <= 2.4);
		}
	}
}

TEST_CASE("Gateaux derivative") {
	Grid g = grid1(16, 64, 0.25);
	auto xi = random_field(g, 3);
	auto u0 = random_initial(g, 3);
	auto h = fill(g, [](double t, double x) { return std::cos(2 * M_PI * x) * (1 + t); });
	std::vector<double> deltas{1e-2, 5e-3, 2.5e-3, 1.25e-3};
	SUBCASE("first-order remainder") {
		auto rows = gateaux_check(u0, xi, h, 1, deltas);
		for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
			double r = rows[i].error / rows[i + 1].error;
			CHECK(r >= 1.6);
			CHECK(r <= 2.4);
		}
	}
	SUBCASE("linear equation and zero direction") {
		SolverSettings s;
		s.cubic = false;
		for (const auto &r : gateaux_check(u0, xi, h, 1, deltas, s))
			CHECK(r.error < 1e-9 * l2_norm(h));
		for (const auto &r : gateaux_check(u0, xi, GridField(g), 1, deltas))
			CHECK(r.error == 0);
	}
}

TEST_CASE("Gram matrix") {
	Grid g = grid1(16, 32, 32.0 / 256);
	auto f = white_family(1, 3, true);
	auto bump = [&](int m, bool sine) {
		double tl = g.time(g.nt - 1);
		auto phi = fill(g, [&](double t, double x) {
			double s = std::pow(std::sin(M_PI * t / tl), 2);
			return s * (sine ? std::sin(2 * M_PI * m * x) : std::cos(2 * M_PI * m * x));
		});
		for (std::size_t k = 0; k < g.nx; ++k)
			phi.at(0, k) = phi.at(g.nt - 1, k) = 0;
		return phi;
	};
	SUBCASE("duplicate test function") {
		auto u = solve_forward(random_initial(g, 1), random_field(g, 1), 0.5).u;
		auto r = gram_matrix({bump(1, false), bump(1, false)}, u, 0.5, f);
		CHECK(r.lambda_min < 1e-10 * r.trace);
		CHECK(r.dependent_inputs);
		auto ok = gram_matrix({bump(1, false), bump(1, true), bump(2, false), bump(0, false)}, u, 0.5, f);
		CHECK(ok.passes(1e-6));
		CHECK_FALSE(ok.dependent_inputs);
	}
	SUBCASE("single smooth-noise entry equals the direct norm") {
		auto sm = smooth_family(1);
		auto u = solve_forward(random_initial(g, 2), sample_noise(sm, g, 2).xi, 0).u;
		auto phi = bump(1, false);
		auto r = gram_matrix({phi}, u, 0, sm);
		auto Rw = apply_R(sm, solve_dual(u, phi, 0));
		CHECK(r.lambda_min > 0);
		CHECK(r.M(0, 0) == doctest::Approx(inner(Rw, Rw)).epsilon(1e-12));
	}
	SUBCASE("u = 0 against backward heat Duhamels") {
		GridField zero(g);
		std::vector<GridField> phis{bump(1, false), bump(1, true), bump(2, false)};
		auto r = gram_matrix(phis, zero, 0, f);
		std::vector<GridField> ws;
		const int modes[3] = {1, 1, 2};
		for (int i = 0; i < 3; ++i) {
			ModeRec rec(g, modes[i]);
			GridField w(g);
			double a = 0;
			for (std::size_t j = g.nt; j-- > 0;) {
				for (std::size_t k = 0; k < g.nx; ++k) {
					double x = static_cast<double>(k) * g.dx();
					w.at(j, k) = a * (i == 1 ? std::sin(2 * M_PI * x) : std::cos(2 * M_PI * modes[i] * x));
				}
				double tl = g.time(g.nt - 1);
				double s = j == 0 || j + 1 == g.nt ? 0 : std::pow(std::sin(M_PI * g.time(j) / tl), 2);
				a = rec.E * a + rec.Phi * s;
			}
			ws.push_back(w);
		}
		for (int i = 0; i < 3; ++i)
			for (int j = 0; j < 3; ++j)
				CHECK(r.M(i, j) == doctest::Approx(inner(ws[i], ws[j])).epsilon(1e-10).scale(r.trace));
	}
}

TEST_CASE("aggregate") {
	Grid fine = grid1(16, 32, 0.25), coarse = grid1(8, 8, 0.25);
	auto f = random_field(fine, 4);
	auto c = aggregate(f, coarse);
	double sf = 0, sc = 0;
	for (double v : f.data)
		sf += v;
	for (double v : c.data)
		sc += v;
	CHECK(sc * 8 == doctest::Approx(sf));
	CHECK_THROWS_AS(aggregate(f, grid1(6, 8, 0.25)), Error);
}
