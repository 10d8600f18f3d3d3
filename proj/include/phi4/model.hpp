#pragma once

#include "phi4/noise.hpp"
#include "phi4/structure.hpp"

#include <map>
#include <mutex>

namespace phi4 {

struct RenormConstants {
	double C1 = 0, C2 = 0, C3 = 0;
	double rel_diff = 0;       // |C2 - C3| / |C2|
	double truncation_loss = 0; // share of ‖K_ε‖² outside the computed window
	double pde_constant() const { return 3 * C1 - 9 * C2; }
};

// K_ε = R∗P_+∗ρ^ε on the lattice of g; C1 = ∫K², C2 = ∫P_+ G², C3 = ∫P_+(-·) G² with G the autocorrelation of K
RenormConstants renorm_constants(const KernelFamily &f, double eps, const Mother &rho, const HeatDecomposition &heat,
                                 const Grid &g);
// the kernel K_ε itself (causal part shifted by the R and mollifier extents)
GridField smoothed_kernel(const KernelFamily &f, double eps, const Mother &rho, const HeatDecomposition &heat,
                          const Grid &g);

// canonical model of a smooth noise field; fields Π_z τ are realized on the grid of xi
class ModelContext {
public:
	ModelContext(GridField xi, HeatDecomposition heat, Structure structure, RenormMap M);

	// Π_z τ as a field (polynomial recentering and Taylor subtraction at z)
	GridField local(const Tree &tau, const ScaledPoint &z) const;
	const GridField &noise() const { return xi_; }
	const Grid &grid() const { return xi_.g; }
	const HeatDecomposition &heat() const { return heat_; }
	const Structure &structure() const { return structure_; }
	const RenormMap &renorm() const { return M_; }
	// ∂^k (P_+ ∗ F) at z (k scaled); F is any field on the grid
	double heat_jet(const GridField &PF, const ScaledPoint &z, const MultiIndex &k) const;

	static constexpr std::size_t max_noises = 4;

private:
	GridField xi_;
	HeatDecomposition heat_;
	Structure structure_;
	RenormMap M_;
	mutable std::mutex mu_;
	mutable std::map<Tree, GridField, TreeLess> cache_; // z-independent realizations
	bool z_free(const Tree &t) const;
	GridField realize(const Tree &t, const ScaledPoint &z) const;
	std::size_t nearest_time(double t) const;
};

double canonical_pair(const ModelContext &ctx, const Tree &tau, const ScaledPoint &z, const TestFunction &eta,
                      double lambda);
double canonical_pair(const ModelContext &ctx, const TreeVector &v, const ScaledPoint &z, const TestFunction &eta,
                      double lambda);
double renormalized_pair(const ModelContext &ctx, const Tree &tau, const ScaledPoint &z, const TestFunction &eta,
                         double lambda);

// E⟨ξ, η^λ⟩² = ‖R∗η^λ‖² through continuous Fourier quadrature on ℝ × 2πℤ^d
double xi_second_moment(const KernelFamily &f, const TestFunction &eta, double lambda);

struct ScalingFit {
	std::vector<double> lambdas, moments, stderrs;
	double slope = 0, slope_stderr = 0;
	double expected = 0; // 2|τ|
};
// deterministic for τ = Ξ; Monte-Carlo otherwise
ScalingFit scaling_diagnostic(const Tree &tau, const std::vector<double> &lambdas, const KernelFamily &f,
                              const HeatDecomposition &heat, const Grid &g, double eps, std::size_t seeds,
                              const TestFunction &eta, const StructureParams &sp, bool renormalized = true);

// E⟨(P_+∗ζ)² - C1, P_+∗η^λ_z⟩² for white ζ on the lattice of g: the discrete counterpart of 2‖L(η^λ)‖²
struct CherryCheck {
	double fourier = 0;
	double mc_mean = 0, mc_second = 0, mc_stderr = 0;
	std::size_t seeds = 0;
	double zscore() const { return mc_stderr > 0 ? (mc_second - fourier) / mc_stderr : 0; }
};
double cherry_second_moment(const TestFunction &eta, double lambda, const KernelFamily &f,
                            const HeatDecomposition &heat, const Grid &g);
CherryCheck cherry_monte_carlo(const TestFunction &eta, double lambda, const KernelFamily &f,
                               const HeatDecomposition &heat, const Grid &g, std::size_t seeds,
                               std::uint64_t seed0 = 1);

} // namespace phi4
