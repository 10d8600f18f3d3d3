#pragma once

#include "phi4/kernel.hpp"

#include <memory>
#include <optional>

namespace phi4 {

// Philox-4x32-10 counter-based generator
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);
// standard normal attached to (seed, absolute time index, spatial index)
double cell_normal(std::uint64_t seed, long it, std::size_t ix);

// white noise on the cell basis: N(0,1)/sqrt(cell volume) per cell; cell times follow g.t0 / dt
GridField white_field(const Grid &g, std::uint64_t seed);

struct NoiseRealization {
	std::uint64_t seed = 0;
	GridField zeta;                 // white noise on the extended window feeding the convolutions
	GridField xi;                   // R∗ζ on the requested grid
	std::optional<GridField> xi_eps; // (R∗ζ)∗ρ^ε on the requested grid
	double eps = 0;
};

// ε = 0 skips the mollification
NoiseRealization sample_noise(const KernelFamily &f, const Grid &g, std::uint64_t seed, double eps = 0);

// same as sample_noise with the kernel transforms prepared once for many seeds
class NoiseSampler {
public:
	NoiseSampler(const KernelFamily &f, const Grid &g, double eps = 0);
	NoiseRealization sample(std::uint64_t seed) const;
	const Grid &grid() const { return g_; }

private:
	KernelFamily f_;
	Grid g_;
	double eps_;
	long JR_ = 0, JM_ = 0;
	std::unique_ptr<Convolver> R_, M_;
};

// ρ^ε(t,x) = ε^{-|s|} ρ(t/ε², x/ε) sampled on the lattice of g, centered, normalized to discrete mass 1
GridField mollifier_signal(const Grid &g, double eps, const Mother &rho);
void check_mollifier(const Grid &g, double eps);
// time is extended by repeating the first and last slices
GridField mollify(const GridField &xi, double eps, const Mother &rho);

// full linear convolution R∗φ (longer in time than φ); ⟨ξ,φ⟩ has variance ‖R∗φ‖²
GridField apply_R(const KernelFamily &f, const GridField &phi);

struct CmNorm {
	bool representable = true;
	double value = 0;
	double excluded_energy = 0; // fraction of ‖h‖² on frequencies with |R̂| ≤ θ
};
CmNorm cm_norm(const GridField &h, const KernelFamily &f);

} // namespace phi4
