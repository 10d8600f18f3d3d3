#pragma once

#include "phi4/kernel.hpp"

namespace phi4 {

// coefficients over the polynomial sector {X^k : |k|_s < γ} at every point of a lattice.
// The lattice is (0,T] sampled at dt, 2dt, ..., T (t0 = dt); space is [0,1)^d.
// With periodic = false spatial offsets that leave [0,1) are skipped (used for non-periodic polynomials).
struct ModelledField {
	Grid g;
	double gamma = 1;
	bool periodic = true;
	std::vector<MultiIndex> ks;
	std::vector<double> c; // point-major, ks.size() per point

	ModelledField() = default;
	ModelledField(const Grid &grid, double gamma, bool periodic = true);
	std::size_t K() const { return ks.size(); }
	double *at(std::size_t p) { return c.data() + p * ks.size(); }
	const double *at(std::size_t p) const { return c.data() + p * ks.size(); }
	GridField component(std::size_t j) const;
	GridField reconstruction() const { return component(0); }
	std::vector<int> levels() const; // distinct scaled degrees
};

// lattice (dt, dx) with dt = dx² on (0,T], nx = 2^N
Grid besov_grid(int d, int N, double T);

// Γ_{z+h,z} on the polynomial sector: exact Taylor re-expansion, out_l = Σ_{k≥l} C(k,l) h^{k-l} f_k
void recenter(const std::vector<MultiIndex> &ks, const double *f, const ScaledPoint &h, double *out);
// |v|_ζ: Euclidean norm of the components of scaled degree ζ
double level_norm(const std::vector<MultiIndex> &ks, const double *v, int zeta);

// coefficient at X^k is ∂^k g / k! (centered differences, fourth order in the interior)
ModelledField lift_polynomial(const GridField &g, double gamma, bool periodic = true);

// integer lattice offset (time steps, space steps) together with its real value
struct Offset {
	long it = 0;
	std::array<long, 3> ix{0, 0, 0};
	ScaledPoint h;
	double norm = 0; // scaled norm
	int level = 0;
};
// E_n = {h ∈ Λ_n : 0 < |h|_s ≤ 2^-n} for levels n in [1, n_max(g)], duplicates removed
std::vector<Offset> dyadic_offsets(const Grid &g);
// E_n of a single level
std::vector<Offset> level_offsets(const Grid &g, int n);
// finest n with Λ_n contained in the lattice of g
int max_level(const Grid &g);

struct WeightedNorm {
	std::vector<int> levels;
	std::vector<double> local, translation; // per level ζ
	double total = 0;
};
// p = 1, 2 or +inf
WeightedNorm weighted_norm(const ModelledField &f, double eta, double p, double T);

// sup_λ ‖ max_φ |⟨ξ, φ^λ_z⟩| / λ^ν ‖_{L^p(z : t ≤ T-λ²)} over the fixed bank (annihilated at order ⌊ν⌋ for ν ≥ 0)
struct DistributionNorm {
	std::vector<double> lambdas, values;
	double value = 0;
};
DistributionNorm distribution_norm(const GridField &xi, double nu, double p, double T, int r);

struct AverageLevel {
	int n = 0;
	std::vector<std::size_t> points; // indices into the base lattice
	std::vector<double> c;           // K per point
};
struct AveragesField {
	Grid g;
	double gamma = 1;
	bool periodic = true;
	std::vector<MultiIndex> ks;
	std::vector<AverageLevel> levels;
	const AverageLevel &level(int n) const;
};
// f̄_n(z) = average over B(z,2^-n)^+ of Γ_{z,z'} f(z'), z ∈ Λ̃_n = Λ_n ∩ [3·2^-2n, T - 2·2^-2n]
AveragesField to_averages(const ModelledField &f, int n_min, int n_max);
// f_n(z) = Γ_{z,z_n} f̄_n(z_n) with z_n the nearest point of Λ̃_n
ModelledField from_averages(const AveragesField &a, int n);

struct RoundTrip {
	std::vector<int> ns;
	std::vector<double> errors;
	double rate = 0; // fitted decay exponent of the errors in base 2^-n
};
// ‖(f_n)_0 - f_0‖_{L^p((3·2^{-2 n0}, T))} for n in [n_min, n_max]
RoundTrip round_trip(const ModelledField &f, int n_min, int n_max, int n0, double p);

struct AveragesBounds {
	double local = 0, translation = 0, consistency = 0;
};
AveragesBounds check_averages_bounds(const AveragesField &a, double eta, double p);

// Cauchy product truncated at min(γ1, γ2)
ModelledField product(const ModelledField &a, const ModelledField &b);

// lift of P∗g at γ+2 with g the reconstruction of f (zero before the first sample)
ModelledField convolve_heat_lift(const ModelledField &f, const HeatDecomposition &heat);
// P∗g alone; sample n carries the exact Duhamel integral up to t_n for g held on (t_n - dt, t_n]
GridField heat_duhamel(const GridField &g, const HeatDecomposition &heat);

// sup_λ ‖ max_φ |⟨Rf - Π_z f(z), φ^λ_z⟩| / (λ^γ t^{(η-γ)/2}) ‖_{L^p}, z on Λ_n for n = level.
// With a non-empty `a`, f carries the extra coefficient a(z) on I(Ξ) and `Pxi` = P_+∗ξ; Π_z I(Ξ) = Pxi - Pxi(z)
struct ReconstructionDefect {
	std::vector<double> lambdas, values;
	double value = 0;
};
ReconstructionDefect reconstruction_defect(const ModelledField &f, const std::vector<double> &lambdas, double eta,
                                           double p, int level, const GridField &a = {}, const GridField &Pxi = {});

struct EmbedRow {
	std::size_t nx = 0;
	double max_ratio = 0;
	bool finite = true;
};
struct EmbedSuite {
	double gamma = 2.5, eta = 0.5, p = 2, gamma2 = 0.9, p2 = INFINITY;
	std::vector<EmbedRow> rows;
	double spread = 0; // |r2/r1 - 1|
};
// ratios weighted_norm(γ', η+γ'-γ, p') / weighted_norm(γ, η, p) over `samples` random lifted fields on each grid
EmbedSuite embed_suite(int d, const std::vector<int> &Ns, double T, std::size_t samples, std::uint64_t seed,
                       double gamma = 2.5, double eta = 0.5, double p = 2, double gamma2 = 0.9, double p2 = INFINITY);
// random smooth field Σ_{|k|≤2} (a_k cos + b_k sin)(2πk·x) (1 + c_k t)
GridField random_smooth(const Grid &g, std::uint64_t seed);

} // namespace phi4
