#include "doctest.h"
#include "phi4/structure.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

using namespace phi4;

namespace {

// independent string-based enumeration of the generation rules
struct STree {
	std::string key;
	double h = 0;
	std::vector<std::string> factors; // non-polynomial factors, sorted
	std::array<int, 4> poly{0, 0, 0, 0};
	bool is_poly = false;
};

std::string poly_key(const std::array<int, 4> &k) {
	return "X" + std::to_string(k[0]) + std::to_string(k[1]) + std::to_string(k[2]) + std::to_string(k[3]);
}

STree make_poly(const std::array<int, 4> &k) {
	STree t;
	t.is_poly = true;
	t.poly = k;
	t.h = 2 * k[0] + k[1] + k[2] + k[3];
	t.key = poly_key(k);
	return t;
}

STree make_atom(const std::string &key, double h) {
	STree t;
	t.key = key;
	t.h = h;
	t.factors = {key};
	return t;
}

STree multiply(const std::vector<STree> &fs) {
	STree t;
	for (const auto &f : fs) {
		t.h += f.h;
		for (int i = 0; i < 4; ++i)
			t.poly[i] += f.poly[i];
		t.factors.insert(t.factors.end(), f.factors.begin(), f.factors.end());
	}
	std::sort(t.factors.begin(), t.factors.end());
	bool has_poly = t.poly != std::array<int, 4>{0, 0, 0, 0};
	t.is_poly = t.factors.empty();
	std::vector<std::string> parts = t.factors;
	if (has_poly || parts.empty())
		parts.push_back(poly_key(t.poly));
	t.key = parts[0];
	for (std::size_t i = 1; i < parts.size(); ++i)
		t.key += "*" + parts[i];
	return t;
}

double hxi_of(int d, double beta, double kappa) { return -(2.0 + d) / 2 + beta - kappa; }

std::size_t brute_count(int d, double beta, double kappa, double gmax, bool negative_only) {
	double bound = gmax - 2 * std::min(0.0, 2 + hxi_of(d, beta, kappa)) + 0.1; // factors of a product below gmax
	double hxi = hxi_of(d, beta, kappa);
	std::map<std::string, STree> U, RU, W, RW;
	for (int a = 0; 2 * a < bound; ++a)
		for (int b = 0; b < bound; ++b)
			for (int c = 0; c < (d > 1 ? bound : 1); ++c)
				for (int e = 0; e < (d > 2 ? bound : 1); ++e)
					if (2 * a + b + c + e < bound) {
						auto p = make_poly({a, b, c, e});
						U[p.key] = RU[p.key] = W[p.key] = RW[p.key] = p;
					}
	RU["Xi"] = make_atom("Xi", hxi);
	for (int iter = 0; iter < 40; ++iter) {
		std::size_t before = U.size() + RU.size() + W.size() + RW.size();
		for (const auto &[k, t] : RU)
			if (!t.is_poly && t.h + 2 < bound)
				U.emplace("I(" + k + ")", make_atom("I(" + k + ")", t.h + 2));
		for (const auto &[k, t] : RW)
			if (!t.is_poly && t.h + 2 < bound)
				W.emplace("It(" + k + ")", make_atom("It(" + k + ")", t.h + 2));
		std::vector<STree> u;
		for (const auto &kv : U)
			u.push_back(kv.second);
		std::vector<STree> w;
		for (const auto &kv : W)
			w.push_back(kv.second);
		for (std::size_t a = 0; a < u.size(); ++a)
			for (std::size_t b = a; b < u.size(); ++b) {
				for (std::size_t c = b; c < u.size(); ++c) {
					auto t = multiply({u[a], u[b], u[c]});
					if (t.h < bound)
						RU.emplace(t.key, t);
				}
				for (const auto &r : w) {
					auto t = multiply({u[a], u[b], r});
					if (t.h < bound)
						RW.emplace(t.key, t);
				}
			}
		if (U.size() + RU.size() + W.size() + RW.size() == before)
			break;
	}
	std::set<std::string> keys;
	for (auto *m : {&U, &RU, &W, &RW})
		for (const auto &[k, t] : *m)
			if (t.h < gmax && (!negative_only || t.h < 0))
				keys.insert(k);
	return keys.size();
}

StructureParams params(int d, double beta, double kappa, double gmax) {
	StructureParams p;
	p.d = d;
	p.beta = beta;
	p.kappa = kappa;
	p.gamma_max = gmax;
	return p;
}

} // namespace

TEST_CASE("canonical trees") {
	Tree ixi = Tree::I(Tree::xi());
	CHECK(ixi * Tree::xi() == Tree::xi() * ixi);
	CHECK(Tree::power(ixi, 2) * ixi == Tree::power(ixi, 3));
	CHECK(Tree::I(Tree::one()).zero());
	CHECK(Tree::It(Tree::poly({{0, 1, 0, 0}})).zero());
	CHECK(parse_tree("I(Xi)^2*I(Xi)") == Tree::power(ixi, 3));
	auto s = build_structure(params(3, 0, 0.01, 2));
	for (const auto &t : s.all)
		CHECK(parse_tree(t.str()) == t);
}

TEST_CASE("homogeneity") {
	HomParams p{3, 0, 0.05};
	CHECK(homogeneity(Tree::xi(), p) == doctest::Approx(-2.55));
	CHECK(homogeneity(Tree::poly({{1, 0, 0, 0}}), p) == 2);
	CHECK(homogeneity(Tree::power(Tree::I(Tree::xi()), 3), {3, 0, 0}) == doctest::Approx(-1.5));
	for (double beta : {0.0, 0.3}) {
		HomParams q{3, beta, 0.05};
		double h = homogeneity(pattern(3), q);
		CHECK(h == doctest::Approx(4 * beta - 4 * 0.05));
	}
	auto s = build_structure(params(3, 0.1, 0.01, 2));
	for (const auto &t : s.all) {
		auto f = t.factors();
		double sum = 0;
		for (const auto &g : f)
			sum += s.hom(g);
		CHECK(s.hom(t) == doctest::Approx(sum).epsilon(1e-14));
	}
}

TEST_CASE("structure generation") {
	SUBCASE("only I(Xi) is negative in U") {
		CHECK_THROWS_AS(build_structure(params(3, 0, 0.05, 0)), Error);
		auto s = build_structure(params(3, 0, 0.05, 0.5));
		std::vector<Tree> neg;
		for (const auto &t : s.U)
			if (s.hom(t) < 0)
				neg.push_back(t);
		REQUIRE(neg.size() == 1);
		CHECK(neg[0] == Tree::I(Tree::xi()));
		CHECK(s.hom(neg[0]) == doctest::Approx(-0.55));
	}
	SUBCASE("counts agree with a brute-force enumeration") {
		for (int d = 1; d <= 3; ++d) {
			auto s = build_structure(params(d, 0, 0.01, 2));
			std::size_t neg = 0;
			for (const auto &t : s.all)
				neg += s.hom(t) < 0;
			CHECK(neg == brute_count(d, 0, 0.01, 2, true));
			CHECK(s.all.size() == brute_count(d, 0, 0.01, 2, false));
			CHECK(s.closed());
			for (const auto &t : s.all)
				CHECK(s.hom(t) < 2);
		}
	}
	SUBCASE("the extra tree is negative only for beta below kappa") {
		auto a = build_structure(params(3, 0, 0.01, 2)), b = build_structure(params(3, 0.1, 0.01, 2));
		CHECK(a.hom(pattern(3)) < 0);
		CHECK(b.hom(pattern(3)) > 0);
		CHECK(a.contains(pattern(3)));
	}
}

TEST_CASE("renormalization map") {
	RenormMap M{1.25, 0.5, -0.75};
	Tree xi = Tree::xi(), ixi = Tree::I(xi);
	SUBCASE("examples") {
		auto m0 = apply_renorm(M, xi);
		CHECK(m0.size() == 1);
		CHECK(m0.coeff(xi) == 1);
		auto m2 = apply_renorm(M, Tree::power(ixi, 2));
		CHECK(m2.size() == 2);
		CHECK(m2.coeff(Tree::power(ixi, 2)) == 1);
		CHECK(m2.coeff(Tree::one()) == -1.25);
		auto m3 = apply_renorm(M, Tree::power(ixi, 3));
		CHECK(m3.size() == 2);
		CHECK(m3.coeff(Tree::power(ixi, 3)) == 1);
		CHECK(m3.coeff(ixi) == -3 * 1.25);
		auto m22 = apply_renorm(M, pattern(2));
		CHECK(m22.coeff(Tree::one()) == doctest::Approx(-0.5 + 1.25 * 1.25 * 0)); // L1 never produces pattern 2
	}
	SUBCASE("group law, triangularity on the truncated structure") {
		std::mt19937 rng(11);
		std::uniform_real_distribution<double> u(-2, 2);
		for (int d : {1, 3}) {
			auto s = build_structure(params(d, 0, 0.01, 2));
			for (int rep = 0; rep < 5; ++rep) {
				RenormMap A{u(rng), u(rng), u(rng)}, B{u(rng), u(rng), u(rng)};
				RenormMap AB{A.C1 + B.C1, A.C2 + B.C2, A.C3 + B.C3};
				for (const auto &t : s.all) {
					auto lhs = apply_renorm(A, apply_renorm(B, t));
					auto rhs = apply_renorm(AB, t);
					CHECK((lhs - rhs).max_abs() < 1e-12);
					for (const auto &[tr, c] : rhs.terms())
						if (tr != t)
							CHECK(tr.node_count() < t.node_count());
					CHECK(rhs.coeff(t) == 1);
				}
			}
		}
	}
}
