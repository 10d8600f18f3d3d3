#pragma once

#include "phi4/lattice.hpp"

#include <optional>

namespace phi4 {

// ---------------------------------------------------------------------------
// heat kernel decomposition P = P_- + Σ_m P_m on ℝ × ℝ^d, periodized on the torus

struct HeatDecomposition {
	int d = 3;
	int r = 3;     // P_0 kills polynomials of scaled degree ≤ r
	double T = 1;  // horizon
	int M = 4;     // finest level used by partial sums

	std::vector<MultiIndex> ks;    // moment indices, scaled degree ≤ r
	std::vector<double> c;         // ∫ P χ z^k
	std::vector<double> a;         // G = b(z) Σ a_j z^j
	double residual = 0;           // max |∫ P_0 z^k| / ∫|P_0| predicted by the construction

	double P(const ScaledPoint &z) const;       // Gaussian heat kernel, zero for t ≤ 0
	double psi(const ScaledPoint &z) const;     // smooth cutoff, 1 near 0, 0 for |z|_s ≥ 1/2
	double G(const ScaledPoint &z) const;       // moment corrector supported in t ∈ (0,1/4)
	double P0(const ScaledPoint &z) const;
	double Pm(int m, const ScaledPoint &z) const;
	double Pplus(const ScaledPoint &z) const;   // Σ_{m≥0} P_m = Pψ + G
	double Pminus(const ScaledPoint &z) const;  // P(1-ψ) - G, not periodized
	// periodized P_- + Σ_{m≤M} P_m at one point (images summed until negligible)
	double partial_sum(const ScaledPoint &z, int levels) const;

	// spatial Fourier coefficient of P_+(τ,·) at integer wavevector k (exact, no aliasing)
	double Pplus_hat(double tau, const std::array<int, 3> &k) const;
	// ∫_{a}^{b} P̂_+(τ,k) dτ
	double Pplus_hat_integral(double a, double b, const std::array<int, 3> &k) const;

	// P_+ as a causal space-time signal on the lattice of g: lag j+1 carries the cell weight
	// ∫_{jΔt}^{(j+1)Δt} P_+ dτ divided by Δt, so (P_+*f)[n] = Σ_j W_j f[n-j-1]
	GridField plus_signal(const Grid &g) const;
	// full heat kernel signal over lags 1..nt (exact time integration of e^{-4π²|k|²τ})
	GridField heat_signal(const Grid &g) const;
	// P_+ ∗ f and P ∗ f on the grid of f (f vanishes before its first sample)
	GridField apply_plus(const GridField &f) const;
	GridField apply_minus(const GridField &f) const;
	GridField apply_full(const GridField &f) const;
	// backward (future) convolution with P_+(-·)
	GridField apply_plus_backward(const GridField &f) const;
};

HeatDecomposition decompose_heat(int d, int r, double T, int M, const Grid *grid = nullptr);

// sup over lattice samples of |∂^k P_m|, derivatives by central differences at relative step h
double heat_derivative_sup(const HeatDecomposition &h, int m, const MultiIndex &k, int samples = 24);

// ---------------------------------------------------------------------------
// mother functions and noise kernel families

// even separable bump ρ(t,x) = f_t(t) Π f_x(x_i); transforms are real
struct Mother {
	std::string name;
	std::function<double(double, int)> ft, fx; // value or derivative of order j
	std::function<double(double)> ft_hat, fx_hat;
	double rt = 0.25, rx = 0.5; // support half-widths
	double mass(int d) const;
	double operator()(const ScaledPoint &z, int d) const;
	double hat(double w0, const std::array<double, 3> &w, int d) const;
	double support() const { return std::max(std::sqrt(rt), rx); } // scaled radius
};

// order-8 cardinal B-splines: C^6, support scaled radius 1/2, transform sinc^8
Mother bspline_mother();
double cardinal_bspline(int order, double x, int deriv = 0);

struct KernelFamily {
	int d = 1;
	Mother mother;
	std::vector<double> alpha; // α_0..α_N
	double beta = 0;
	bool exact_white = false; // R = δ exactly: R̂ ≡ 1, sampled as the cell identity
	std::string name;
	double C = 1; // R_n supported in |z|_s ≤ C 2^{-n}

	int N() const { return static_cast<int>(alpha.size()) - 1; }
	double cm(int m) const; // α_m - α_{m+1}
	double R_hat(double w0, const std::array<double, 3> &w) const;
	double R_hat_truncated(double w0, const std::array<double, 3> &w) const;
	double level(int n, const ScaledPoint &z) const; // R_n(z) on ℝ^{1+d}
	double R(const ScaledPoint &z) const;            // Σ_n R_n
	bool zero() const;
	int finest_active() const;
	// periodized samples of R on the lattice of g, centered: t0 = -J dt
	GridField sample(const Grid &g) const;
	void check_grid(const Grid &g) const; // resolution error if 2^{-N} < 2Δx
};

KernelFamily build_R_family(const Mother &rho, const std::vector<double> &alpha, int d, double beta,
                            const std::string &name = "custom");
KernelFamily white_family(int d, int N, bool exact = true);
KernelFamily power_family(int d, int N, double beta);
KernelFamily smooth_family(int d);
KernelFamily zero_family(int d, int N);

// construction of a compactly supported mother with a positive defect
struct MotherConstruction {
	double delta = 0, beta = 0;
	std::array<double, 4> xi0{0, 1, 0, 0};
	double defect = 0;
	double eta_hat_xi0 = 0;
	std::function<double(double)> ft_hat, fx_hat; // normalized 1D transforms of ρ_δ
	Mother mother;                                // ρ_δ / ∫ρ_δ
};
MotherConstruction construct_mother(double delta, double beta = 0.3, int d = 3);
// idealized ρ_0 without truncation (dyadic Fourier cutoffs)
double ideal_defect(double beta);
double ideal_cutoff_time(double w0);
double ideal_cutoff_space(double w);

struct AssumptionRow {
	int n = 0;
	MultiIndex k;
	double sup_norm = 0, fitted_exponent = 0, expected_exponent = 0, support_radius = 0, moment = 0;
	bool pass = true;
};

struct AssumptionReport {
	std::vector<AssumptionRow> rows;
	double sup_R_hat = 0;        // max |R̂| over the sampled frequency window
	double frequency_window = 0; // scaled radius of the window
	bool bounded = true, moments_ok = true, support_ok = true, derivatives_ok = true;
	bool vanishes_on_window = false; // proxy for failure of Cameron–Martin density
	bool all_pass() const { return bounded && moments_ok && support_ok && derivatives_ok; }
};
AssumptionReport check_assumption_R(const KernelFamily &f, int k_max);

struct RoughnessReport {
	std::vector<int> n;
	std::vector<double> S, S2;
	std::vector<std::size_t> pairs; // accepted samples in B_n^C
	double liminf_S = 0;            // min over the computed range
	bool monotone_tail_warning = false;
	bool satisfied = false; // only possible when β < 1/2
};
RoughnessReport roughness_score(const KernelFamily &f, double C, int n_min, int n_max, std::size_t samples = 200000,
                                std::uint64_t seed = 7);

} // namespace phi4
