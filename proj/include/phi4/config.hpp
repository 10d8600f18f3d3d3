#pragma once

#include "phi4/besov.hpp"
#include "phi4/model.hpp"
#include "phi4/pde.hpp"

#include <iosfwd>

namespace phi4 {

struct ExperimentConfig {
	// [grid]
	int d = 1;
	std::size_t nx = 16, nt = 8;
	double T = 1.0 / 32;
	// [noise]
	std::string family = "white"; // white | white-truncated | power | smooth
	int levels = 4;                // N of the kernel family
	double beta = 0.3;
	double eps = 0;
	std::vector<std::uint64_t> seeds{1};
	// [structure]
	double kappa = 0.01;
	double gamma_max = 2;
	// [solver]
	SolverSettings solver;
	std::string constant = "auto"; // "auto" = 3C1 - 9C2 when eps > 0, else 0; or a number
	double u0_amplitude = 1, u0_mean = 0;
	// [experiment]
	std::string kind = "duality"; // also structure | noise | pde-run | besov-norm | gateaux
	std::vector<double> lambdas{0.5, 0.25, 0.125, 0.0625};
	std::size_t testfns = 4;
	// [besov]
	double gamma = 2.5, eta = 0.5, p = 2, gamma2 = 0.9, p2 = INFINITY;
	std::size_t samples = 200;
	std::vector<int> besov_levels{4, 5};
	// [output]
	std::string output = "phi4_out.jsonl";

	Grid grid() const;
	KernelFamily kernel() const;
	void validate() const;
	std::string canonical() const; // normalized key=value text, basis of the config hash
	std::string hash() const;
};

ExperimentConfig parse_config(const std::string &text);
ExperimentConfig load_config(const std::string &path);
ExperimentConfig preset(const std::string &name);
std::vector<std::string> preset_names();

// smooth test functions supported strictly inside (0,T), linearly independent for n ≤ 8
std::vector<GridField> pde_test_functions(const Grid &g, std::size_t n);
// smooth shift direction used by the duality and Gateaux checks
GridField pde_direction(const Grid &g, std::uint64_t seed);

double resolve_constant(const ExperimentConfig &c);

struct DualityRecord {
	std::uint64_t seed = 0;
	double residual = 0, naive_residual = 0;
};
DualityRecord duality_experiment(const ExperimentConfig &c, std::uint64_t seed);
std::vector<GateauxRow> gateaux_experiment(const ExperimentConfig &c, std::uint64_t seed,
                                           const std::vector<double> &deltas);
GramResult gram_experiment(const ExperimentConfig &c, std::uint64_t seed, bool duplicate = false);

// u_ε on the coarse grid against u_{ε/2} on the refined grid, same white noise; L² over [T/2, T]
struct RenormEffect {
	std::uint64_t seed = 0;
	double without = 0, with = 0;
	double C_coarse = 0, C_fine = 0;
};
struct RenormEffectSetup {
	int d = 2;
	std::size_t nx = 32;
	double T = 0.5, eps = 0.125, mean = 2, amplitude = 1;
};
class RenormEffectiveness {
public:
	explicit RenormEffectiveness(const RenormEffectSetup &s);
	RenormEffect run(std::uint64_t seed) const;

private:
	RenormEffectSetup s_;
	Grid coarse_, fine_;
	double Cc_ = 0, Cf_ = 0;
};

// runs the experiment, writes JSON lines to c.output and a manifest next to it; returns the exit code
int run_experiment(const ExperimentConfig &c, std::ostream &log);
// maps errors to exit codes: 2 validation-type, 3 numerical
int exit_code(const Error &e);

} // namespace phi4
