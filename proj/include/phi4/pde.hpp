#pragma once

#include "phi4/noise.hpp"

#include <Eigen/Dense>

namespace phi4 {

enum class Integrator { ExplicitEuler, Exponential };

struct SolverSettings {
	Integrator integrator = Integrator::Exponential;
	double guard = 1e6;   // ‖u‖_∞ above this sets the explosion flag
	bool cubic = true;    // false drops -u³ (linear regime)
	void validate(const Grid &g) const;
};

// the step u_{n+1} = E u_n + Φ (N(u_n) + f_n) with E = e^{Δ dt} and Φ = (1-E)/|2πk|² in Fourier;
// explicit Euler uses E = 1 - dt|2πk|², Φ = dt. The field index n carries time t0 + n dt
struct SolutionBundle {
	GridField u;
	double C = 0;
	bool exploded = false;
	double blowup_time = 0;
};

// u_0 = u0, u_{n+1} from the source slice n; the output holds u_0..u_{nt-1}
SolutionBundle solve_forward(const std::vector<double> &u0, const GridField &xi, double C,
                             const SolverSettings &s = {});
SolutionBundle solve_shifted(const std::vector<double> &u0, const GridField &xi, const GridField &h, double C,
                             const SolverSettings &s = {});
// (∂_t - Δ) v = (-3u² + C) v + h, v_0 = 0
GridField solve_tangent(const GridField &u, const GridField &h, double C, const SolverSettings &s = {});
// transpose of the tangent step map; φ must vanish on the first and last time slices
GridField solve_dual(const GridField &u, const GridField &phi, double C, const SolverSettings &s = {});
// deliberately mis-indexed backward march (coefficients at the step's own slice); duality holds to O(dt)
GridField solve_dual_naive(const GridField &u, const GridField &phi, double C, const SolverSettings &s = {});

double duality_residual(const GridField &v, const GridField &phi, const GridField &h, const GridField &w);

struct GateauxRow {
	double delta = 0, error = 0, ratio = 0; // ratio e(δ)/δ
	bool exploded = false;
};
std::vector<GateauxRow> gateaux_check(const std::vector<double> &u0, const GridField &xi, const GridField &h, double C,
                                      const std::vector<double> &deltas, const SolverSettings &s = {});

struct GramResult {
	Eigen::MatrixXd M;
	double lambda_min = 0, trace = 0;
	bool dependent_inputs = false;
	bool passes(double tol) const { return lambda_min > tol * trace / static_cast<double>(M.rows()); }
};
// M_ij = ⟨R∗w_i, R∗w_j⟩ with w_i the dual solution for φ_i
GramResult gram_matrix(const std::vector<GridField> &phis, const GridField &u, double C, const KernelFamily &f,
                       const SolverSettings &s = {});

// mean + smooth random trigonometric polynomial with modes |k|_∞ ≤ kmax
std::vector<double> random_initial(const Grid &g, std::uint64_t seed, int kmax = 2, double amp = 1, double mean = 0);

// fine white noise averaged onto a coarser lattice (both nx and nt must divide)
GridField aggregate(const GridField &fine, const Grid &coarse);

} // namespace phi4
