#include "phi4/config.hpp"

#include "json.hpp"

#include <fftw3.h>
#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace phi4 {

namespace {

using json = nlohmann::json;

constexpr const char *version = "0.1.0";

std::string trim(const std::string &s) {
	auto a = s.find_first_not_of(" \t\r");
	if (a == std::string::npos)
		return "";
	auto b = s.find_last_not_of(" \t\r");
	return s.substr(a, b - a + 1);
}

Error bad(const std::string &key, const std::string &msg) { return Error(ErrorKind::Validation, "cli", key, msg); }

double to_double(const std::string &key, const std::string &v) {
	if (v == "inf" || v == "infinity")
		return INFINITY;
	try {
		std::size_t used = 0;
		double x = std::stod(v, &used);
		if (used != v.size())
			throw bad(key, "trailing characters in number '" + v + "'");
		return x;
	} catch (const std::logic_error &) {
		throw bad(key, "not a number: '" + v + "'");
	}
}

long long to_int(const std::string &key, const std::string &v) {
	try {
		std::size_t used = 0;
		long long x = std::stoll(v, &used);
		if (used != v.size())
			throw bad(key, "not an integer: '" + v + "'");
		return x;
	} catch (const std::logic_error &) {
		throw bad(key, "not an integer: '" + v + "'");
	}
}

std::size_t to_size(const std::string &key, const std::string &v) {
	long long x = to_int(key, v);
	if (x < 0)
		throw bad(key, "must be non-negative");
	return static_cast<std::size_t>(x);
}

bool to_bool(const std::string &key, const std::string &v) {
	if (v == "true" || v == "1" || v == "yes")
		return true;
	if (v == "false" || v == "0" || v == "no")
		return false;
	throw bad(key, "not a boolean: '" + v + "'");
}

std::vector<std::string> split_list(const std::string &v) {
	std::vector<std::string> out;
	std::stringstream ss(v);
	std::string item;
	while (std::getline(ss, item, ','))
		if (!trim(item).empty())
			out.push_back(trim(item));
	return out;
}

// seeds: "1,2,5" or a range "1..10"
std::vector<std::uint64_t> to_seeds(const std::string &key, const std::string &v) {
	std::vector<std::uint64_t> out;
	for (const auto &item : split_list(v)) {
		auto dots = item.find("..");
		if (dots != std::string::npos) {
			std::size_t a = to_size(key, trim(item.substr(0, dots))), b = to_size(key, trim(item.substr(dots + 2)));
			if (b < a)
				throw bad(key, "empty seed range");
			for (std::size_t s = a; s <= b; ++s)
				out.push_back(s);
		} else {
			out.push_back(to_size(key, item));
		}
	}
	return out;
}

using Setter = void (*)(ExperimentConfig &, const std::string &, const std::string &);

const std::map<std::string, Setter> &setters() {
	static const std::map<std::string, Setter> m = {
	    {"grid.d", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.d = static_cast<int>(to_int(k, v)); }},
	    {"grid.nx", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.nx = to_size(k, v); }},
	    {"grid.nt", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.nt = to_size(k, v); }},
	    {"grid.T", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.T = to_double(k, v); }},
	    {"noise.family", [](ExperimentConfig &c, const std::string &, const std::string &v) { c.family = v; }},
	    {"noise.levels", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.levels = static_cast<int>(to_int(k, v)); }},
	    {"noise.beta", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.beta = to_double(k, v); }},
	    {"noise.eps", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.eps = to_double(k, v); }},
	    {"noise.seeds", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.seeds = to_seeds(k, v); }},
	    {"structure.kappa", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.kappa = to_double(k, v); }},
	    {"structure.gamma_max", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.gamma_max = to_double(k, v); }},
	    {"solver.integrator",
	     [](ExperimentConfig &c, const std::string &k, const std::string &v) {
		     if (v == "exponential")
			     c.solver.integrator = Integrator::Exponential;
		     else if (v == "euler")
			     c.solver.integrator = Integrator::ExplicitEuler;
		     else
			     throw bad(k, "integrator must be 'exponential' or 'euler'");
	     }},
	    {"solver.guard", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.solver.guard = to_double(k, v); }},
	    {"solver.cubic", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.solver.cubic = to_bool(k, v); }},
	    {"solver.constant",
	     [](ExperimentConfig &c, const std::string &k, const std::string &v) {
		     if (v != "auto")
			     to_double(k, v);
		     c.constant = v;
	     }},
	    {"solver.u0_amplitude", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.u0_amplitude = to_double(k, v); }},
	    {"solver.u0_mean", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.u0_mean = to_double(k, v); }},
	    {"experiment.kind", [](ExperimentConfig &c, const std::string &, const std::string &v) { c.kind = v; }},
	    {"experiment.lambdas",
	     [](ExperimentConfig &c, const std::string &k, const std::string &v) {
		     c.lambdas.clear();
		     for (const auto &s : split_list(v))
			     c.lambdas.push_back(to_double(k, s));
	     }},
	    {"experiment.testfns", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.testfns = to_size(k, v); }},
	    {"besov.gamma", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.gamma = to_double(k, v); }},
	    {"besov.eta", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.eta = to_double(k, v); }},
	    {"besov.p", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.p = to_double(k, v); }},
	    {"besov.gamma2", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.gamma2 = to_double(k, v); }},
	    {"besov.p2", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.p2 = to_double(k, v); }},
	    {"besov.samples", [](ExperimentConfig &c, const std::string &k, const std::string &v) { c.samples = to_size(k, v); }},
	    {"besov.levels",
	     [](ExperimentConfig &c, const std::string &k, const std::string &v) {
		     c.besov_levels.clear();
		     for (const auto &s : split_list(v))
			     c.besov_levels.push_back(static_cast<int>(to_int(k, s)));
	     }},
	    {"output.path", [](ExperimentConfig &c, const std::string &, const std::string &v) { c.output = v; }},
	};
	return m;
}

std::string num(double x) {
	char buf[64];
	std::snprintf(buf, sizeof buf, "%.17g", x);
	return buf;
}

const std::set<std::string> stochastic = {"duality", "gram", "gateaux", "renorm-effectiveness", "noise", "pde-run",
                                          "besov-norm"};
const std::set<std::string> kinds = {"constants", "scaling",    "duality",      "gram",
                                     "gateaux",   "besov",      "kernel-check", "renorm-effectiveness",
                                     "structure", "noise",      "pde-run",      "besov-norm"};

HeatDecomposition heat_for(const ExperimentConfig &c) { return decompose_heat(c.d, 3, std::max(1.0, c.T), 4); }

} // namespace

Grid ExperimentConfig::grid() const {
	Grid g;
	g.d = d;
	g.nx = nx;
	g.nt = nt;
	g.T = T;
	g.t0 = 0;
	return g;
}

KernelFamily ExperimentConfig::kernel() const {
	if (family == "white")
		return white_family(d, levels, true);
	if (family == "white-truncated")
		return white_family(d, levels, false);
	if (family == "power")
		return power_family(d, levels, beta);
	if (family == "smooth")
		return smooth_family(d);
	throw bad("noise.family", "unknown family '" + family + "'");
}

void ExperimentConfig::validate() const {
	if (d < 1 || d > 3)
		throw bad("grid.d", "dimension must be 1, 2 or 3");
	grid().validate("cli");
	if (!kinds.count(kind))
		throw bad("experiment.kind", "unknown experiment '" + kind + "'");
	kernel();
	if (stochastic.count(kind) && seeds.empty())
		throw bad("noise.seeds", "stochastic experiment needs at least one seed");
	if (eps < 0)
		throw bad("noise.eps", "eps must be non-negative");
	if (kind == "constants" && !(eps > 0))
		throw bad("noise.eps", "constants need eps > 0");
	if (kind == "gram" && (testfns == 0 || testfns > 8))
		throw bad("experiment.testfns", "between 1 and 8 test functions");
	if (kind == "scaling" && lambdas.size() < 3)
		throw bad("experiment.lambdas", "at least 3 scales");
	if (output.empty())
		throw bad("output.path", "output path is empty");
	solver.validate(grid());
}

std::string ExperimentConfig::canonical() const {
	std::ostringstream o;
	o << "grid.d=" << d << "\ngrid.nx=" << nx << "\ngrid.nt=" << nt << "\ngrid.T=" << num(T) << "\n";
	o << "noise.family=" << family << "\nnoise.levels=" << levels << "\nnoise.beta=" << num(beta)
	  << "\nnoise.eps=" << num(eps) << "\nnoise.seeds=";
	for (std::size_t i = 0; i < seeds.size(); ++i)
		o << (i ? "," : "") << seeds[i];
	o << "\nstructure.kappa=" << num(kappa) << "\nstructure.gamma_max=" << num(gamma_max) << "\n";
	o << "solver.integrator=" << (solver.integrator == Integrator::Exponential ? "exponential" : "euler")
	  << "\nsolver.guard=" << num(solver.guard) << "\nsolver.cubic=" << (solver.cubic ? "true" : "false")
	  << "\nsolver.constant=" << constant << "\nsolver.u0_amplitude=" << num(u0_amplitude)
	  << "\nsolver.u0_mean=" << num(u0_mean) << "\n";
	o << "experiment.kind=" << kind << "\nexperiment.lambdas=";
	for (std::size_t i = 0; i < lambdas.size(); ++i)
		o << (i ? "," : "") << num(lambdas[i]);
	o << "\nexperiment.testfns=" << testfns << "\n";
	o << "besov.gamma=" << num(gamma) << "\nbesov.eta=" << num(eta) << "\nbesov.p=" << num(p)
	  << "\nbesov.gamma2=" << num(gamma2) << "\nbesov.p2=" << num(p2) << "\nbesov.samples=" << samples
	  << "\nbesov.levels=";
	for (std::size_t i = 0; i < besov_levels.size(); ++i)
		o << (i ? "," : "") << besov_levels[i];
	o << "\n";
	return o.str();
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a(canonical())); }

std::vector<std::string> preset_names() { return {"white-noise-d1", "white-noise-d2", "degenerate-beta03-d3"}; }

ExperimentConfig preset(const std::string &name) {
	ExperimentConfig c;
	if (name == "white-noise-d1") {
		c.d = 1;
		c.nx = 16;
		c.nt = 8;
		c.T = 8.0 / 256;
		c.family = "white";
		c.levels = 3;
	} else if (name == "white-noise-d2") {
		c.d = 2;
		c.nx = 32;
		c.nt = 128;
		c.T = 128.0 / 1024;
		c.family = "white";
		c.levels = 4;
	} else if (name == "degenerate-beta03-d3") {
		c.d = 3;
		c.nx = 16;
		c.nt = 64;
		c.T = 64.0 / 256;
		c.family = "power";
		c.beta = 0.3;
		c.levels = 3;
	} else {
		throw bad("preset", "unknown preset '" + name + "'");
	}
	return c;
}

ExperimentConfig parse_config(const std::string &text) {
	std::vector<std::pair<std::string, std::string>> entries;
	std::string section, presetname;
	std::istringstream in(text);
	std::string line;
	int lineno = 0;
	while (std::getline(in, line)) {
		++lineno;
		auto hash = line.find('#');
		if (hash != std::string::npos)
			line = line.substr(0, hash);
		line = trim(line);
		if (line.empty())
			continue;
		if (line.front() == '[') {
			if (line.back() != ']')
				throw bad("line " + std::to_string(lineno), "unterminated section header");
			section = trim(line.substr(1, line.size() - 2));
			continue;
		}
		auto eq = line.find('=');
		if (eq == std::string::npos)
			throw bad("line " + std::to_string(lineno), "expected key = value");
		std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
		if (key == "preset" && (section.empty() || section == "experiment")) {
			presetname = value;
			continue;
		}
		std::string full = section.empty() ? key : section + "." + key;
		if (!setters().count(full))
			throw bad(full, "unknown key");
		entries.emplace_back(full, value);
	}
	ExperimentConfig c = presetname.empty() ? ExperimentConfig{} : preset(presetname);
	for (const auto &[k, v] : entries)
		setters().at(k)(c, k, v);
	return c;
}

ExperimentConfig load_config(const std::string &path) {
	std::ifstream f(path);
	if (!f)
		throw Error(ErrorKind::Io, "cli", "config", "cannot read '" + path + "'");
	std::stringstream ss;
	ss << f.rdbuf();
	return parse_config(ss.str());
}

std::vector<GridField> pde_test_functions(const Grid &g, std::size_t n) {
	if (n == 0 || n > 8)
		throw Error(ErrorKind::Validation, "pde", "testfns", "between 1 and 8 test functions");
	if (g.nt < 3)
		throw Error(ErrorKind::Resolution, "pde", "nt", "at least 3 time slices are needed for interior support");
	std::vector<GridField> out;
	std::size_t S = g.spatial();
	double a = g.time(0), b = g.time(g.nt - 1);
	for (std::size_t i = 0; i < n; ++i) {
		GridField phi(g);
		int k = static_cast<int>((i + 1) / 2);
		for (std::size_t it = 1; it + 1 < g.nt; ++it) {
			double s = std::sin(M_PI * (g.time(it) - a) / (b - a));
			s *= s;
			for (std::size_t q = 0; q < S; ++q) {
				double x = static_cast<double>(spatial_coords(g, q)[0]) * g.dx();
				double m = i == 0 ? 1.0 : (i % 2 ? std::cos(2 * M_PI * k * x) : std::sin(2 * M_PI * k * x));
				phi.at(it, q) = s * m;
			}
		}
		out.push_back(std::move(phi));
	}
	return out;
}

GridField pde_direction(const Grid &g, std::uint64_t seed) {
	GridField h(g);
	double ph = 2 * M_PI * cell_normal(seed, -3, 0);
	for (std::size_t it = 0; it < g.nt; ++it)
		for (std::size_t q = 0; q < g.spatial(); ++q) {
			double x = static_cast<double>(spatial_coords(g, q)[0]) * g.dx();
			h.at(it, q) = std::cos(2 * M_PI * x + ph) * (1 + g.time(it));
		}
	return h;
}

double resolve_constant(const ExperimentConfig &c) {
	if (c.constant != "auto")
		return to_double("solver.constant", c.constant);
	if (!(c.eps > 0))
		return 0;
	return renorm_constants(c.kernel(), c.eps, bspline_mother(), heat_for(c), c.grid()).pde_constant();
}

namespace {

struct Prepared {
	GridField xi;
	std::vector<double> u0;
	SolutionBundle sol;
};

Prepared prepare(const ExperimentConfig &c, std::uint64_t seed, double C) {
	Prepared p;
	Grid g = c.grid();
	auto r = sample_noise(c.kernel(), g, seed, c.eps);
	p.xi = c.eps > 0 ? *r.xi_eps : r.xi;
	p.u0 = random_initial(g, seed, 2, c.u0_amplitude, c.u0_mean);
	p.sol = solve_forward(p.u0, p.xi, C, c.solver);
	if (p.sol.exploded)
		throw Error(ErrorKind::Numerical, "pde", "u",
		            "solution exceeded the guard at t=" + std::to_string(p.sol.blowup_time));
	return p;
}

} // namespace

DualityRecord duality_experiment(const ExperimentConfig &c, std::uint64_t seed) {
	double C = resolve_constant(c);
	Prepared p = prepare(c, seed, C);
	Grid g = c.grid();
	DualityRecord rec;
	rec.seed = seed;
	// random pair
	GridField h = white_field(g, seed + 1000003);
	GridField phi = white_field(g, seed + 2000003);
	for (std::size_t q = 0; q < g.spatial(); ++q)
		phi.at(0, q) = phi.at(g.nt - 1, q) = 0;
	GridField v = solve_tangent(p.sol.u, h, C, c.solver);
	GridField w = solve_dual(p.sol.u, phi, C, c.solver);
	rec.residual = duality_residual(v, phi, h, w);
	// smooth pair for the mis-indexed march
	GridField hs = pde_direction(g, seed), ps = pde_test_functions(g, 2)[1];
	GridField vs = solve_tangent(p.sol.u, hs, C, c.solver);
	rec.naive_residual = duality_residual(vs, ps, hs, solve_dual_naive(p.sol.u, ps, C, c.solver));
	return rec;
}

std::vector<GateauxRow> gateaux_experiment(const ExperimentConfig &c, std::uint64_t seed,
                                           const std::vector<double> &deltas) {
	double C = resolve_constant(c);
	Grid g = c.grid();
	auto r = sample_noise(c.kernel(), g, seed, c.eps);
	const GridField &xi = c.eps > 0 ? *r.xi_eps : r.xi;
	auto u0 = random_initial(g, seed, 2, c.u0_amplitude, c.u0_mean);
	return gateaux_check(u0, xi, pde_direction(g, seed), C, deltas, c.solver);
}

GramResult gram_experiment(const ExperimentConfig &c, std::uint64_t seed, bool duplicate) {
	double C = resolve_constant(c);
	Prepared p = prepare(c, seed, C);
	auto phis = pde_test_functions(c.grid(), c.testfns);
	if (duplicate) {
		if (phis.size() < 2)
			throw bad("experiment.testfns", "duplication needs at least 2 test functions");
		phis.back() = phis.front();
	}
	return gram_matrix(phis, p.sol.u, C, c.kernel(), c.solver);
}

RenormEffectiveness::RenormEffectiveness(const RenormEffectSetup &s) : s_(s) {
	coarse_.d = s.d;
	coarse_.nx = s.nx;
	coarse_.nt = static_cast<std::size_t>(std::llround(s.T * static_cast<double>(s.nx * s.nx)));
	coarse_.T = s.T;
	coarse_.t0 = 0;
	coarse_.validate("pde");
	fine_ = coarse_;
	fine_.nx = 2 * s.nx;
	fine_.nt = 4 * coarse_.nt;
	int N = static_cast<int>(std::lround(std::log2(static_cast<double>(s.nx)))) - 1;
	auto heat = decompose_heat(s.d, 3, std::max(1.0, s.T), 4);
	auto rho = bspline_mother();
	Cc_ = renorm_constants(white_family(s.d, N, true), s.eps, rho, heat, coarse_).pde_constant();
	Cf_ = renorm_constants(white_family(s.d, N + 1, true), s.eps / 2, rho, heat, fine_).pde_constant();
}

RenormEffect RenormEffectiveness::run(std::uint64_t seed) const {
	RenormEffect r;
	r.seed = seed;
	r.C_coarse = Cc_;
	r.C_fine = Cf_;
	auto rho = bspline_mother();
	GridField zf = white_field(fine_, seed);
	GridField xc = mollify(aggregate(zf, coarse_), s_.eps, rho), xf = mollify(zf, s_.eps / 2, rho);
	auto u0c = random_initial(coarse_, seed, 2, s_.amplitude, s_.mean);
	auto u0f = random_initial(fine_, seed, 2, s_.amplitude, s_.mean);
	std::size_t S = coarse_.spatial();
	for (int with = 0; with < 2; ++with) {
		auto uc = solve_forward(u0c, xc, with ? Cc_ : 0);
		auto uf = solve_forward(u0f, xf, with ? Cf_ : 0);
		if (uc.exploded || uf.exploded)
			throw Error(ErrorKind::Numerical, "pde", "u", "solution exceeded the guard");
		double acc = 0;
		for (std::size_t it = coarse_.nt / 2; it < coarse_.nt; ++it)
			for (std::size_t q = 0; q < S; ++q) {
				auto c = spatial_coords(coarse_, q);
				for (int a = 0; a < s_.d; ++a)
					c[a] *= 2;
				double diff = uc.u.at(it, q) - uf.u.at(4 * it, spatial_index(fine_, c));
				acc += diff * diff;
			}
		(with ? r.with : r.without) = std::sqrt(acc * coarse_.cell_volume());
	}
	return r;
}

int exit_code(const Error &e) { return e.kind() == ErrorKind::Numerical ? 3 : 2; }

int run_experiment(const ExperimentConfig &c, std::ostream &log) {
	auto start = std::chrono::steady_clock::now();
	std::string tmp = c.output + ".tmp", manifest = c.output + ".manifest.json";
	try {
		c.validate();
		std::vector<json> records;
		Grid g = c.grid();
		if (c.kind == "constants") {
			auto rc = renorm_constants(c.kernel(), c.eps, bspline_mother(), heat_for(c), g);
			records.push_back({{"experiment", c.kind}, {"C1", rc.C1}, {"C2", rc.C2}, {"C3", rc.C3},
			                   {"rel_diff", rc.rel_diff}, {"pde_constant", rc.pde_constant()}});
		} else if (c.kind == "scaling") {
			StructureParams sp;
			sp.d = c.d;
			sp.beta = c.kernel().exact_white ? 0 : c.beta;
			sp.kappa = c.kappa;
			auto fit = scaling_diagnostic(Tree::xi(), c.lambdas, c.kernel(), heat_for(c), g, c.eps, c.seeds.size(),
			                              test_bank(c.d, 3)[0], sp);
			records.push_back({{"experiment", c.kind}, {"tree", "Xi"}, {"lambdas", fit.lambdas},
			                   {"moments", fit.moments}, {"slope", fit.slope}, {"expected", fit.expected}});
		} else if (c.kind == "duality") {
			for (auto s : c.seeds) {
				auto r = duality_experiment(c, s);
				records.push_back({{"experiment", c.kind}, {"seed", s}, {"residual", r.residual},
				                   {"naive_residual", r.naive_residual}});
			}
		} else if (c.kind == "gateaux") {
			std::vector<double> deltas;
			for (double dl = 1e-2; dl >= 1e-4 * (1 - 1e-9); dl /= 2)
				deltas.push_back(dl);
			for (auto s : c.seeds) {
				auto rows = gateaux_experiment(c, s, deltas);
				std::vector<double> ratios;
				for (std::size_t i = 0; i + 1 < rows.size(); ++i)
					if (!rows[i].exploded && !rows[i + 1].exploded && rows[i + 1].error > 0)
						ratios.push_back(rows[i].error / rows[i + 1].error);
				records.push_back({{"experiment", c.kind}, {"seed", s}, {"ratios", ratios}});
			}
		} else if (c.kind == "gram") {
			for (auto s : c.seeds) {
				auto r = gram_experiment(c, s);
				records.push_back({{"experiment", c.kind}, {"seed", s}, {"lambda_min", r.lambda_min},
				                   {"trace", r.trace}, {"passes", r.passes(1e-6)}});
			}
		} else if (c.kind == "besov") {
			auto e = embed_suite(c.d, c.besov_levels, std::max(1.0, c.T), c.samples, c.seeds.empty() ? 1 : c.seeds[0],
			                     c.gamma, c.eta, c.p, c.gamma2, c.p2);
			for (auto &row : e.rows)
				records.push_back({{"experiment", c.kind}, {"nx", row.nx}, {"max_ratio", row.max_ratio},
				                   {"finite", row.finite}});
		} else if (c.kind == "kernel-check") {
			auto f = c.kernel();
			auto rep = check_assumption_R(f, 2);
			auto rough = roughness_score(f, 2, 1, std::max(1, std::min(c.levels, 6)));
			records.push_back({{"experiment", c.kind}, {"bounded", rep.bounded}, {"moments", rep.moments_ok},
			                   {"support", rep.support_ok}, {"derivatives", rep.derivatives_ok},
			                   {"S", rough.S}, {"S2", rough.S2}});
		} else if (c.kind == "structure") {
			StructureParams sp;
			sp.d = c.d;
			sp.beta = c.family == "power" ? c.beta : 0;
			sp.kappa = c.kappa;
			sp.gamma_max = c.gamma_max;
			auto S = build_structure(sp);
			for (const auto &t : S.all)
				records.push_back({{"experiment", c.kind}, {"tree", t.str(c.d)}, {"homogeneity", S.hom(t)},
				                   {"lists", S.labels(t)}});
		} else if (c.kind == "noise") {
			NoiseSampler ns(c.kernel(), g, c.eps);
			for (auto s : c.seeds) {
				auto r = ns.sample(s);
				const GridField &x = c.eps > 0 ? *r.xi_eps : r.xi;
				records.push_back({{"experiment", c.kind}, {"seed", s}, {"nx", g.nx}, {"nt", g.nt},
				                   {"values", x.data}});
			}
		} else if (c.kind == "pde-run") {
			double C = resolve_constant(c);
			for (auto s : c.seeds) {
				auto r = sample_noise(c.kernel(), g, s, c.eps);
				auto u0 = random_initial(g, s, 2, c.u0_amplitude, c.u0_mean);
				auto sol = solve_forward(u0, c.eps > 0 ? *r.xi_eps : r.xi, C, c.solver);
				std::vector<double> last(sol.u.slice(g.nt - 1), sol.u.slice(g.nt - 1) + g.spatial());
				records.push_back({{"experiment", c.kind}, {"seed", s}, {"C", C}, {"exploded", sol.exploded},
				                   {"blowup_time", sol.blowup_time}, {"l2", l2_norm(sol.u)}, {"final", last}});
			}
		} else if (c.kind == "besov-norm") {
			if (c.besov_levels.empty())
				throw bad("besov.levels", "need a grid level");
			Grid bg = besov_grid(c.d, c.besov_levels.front(), std::max(1.0, c.T));
			for (auto s : c.seeds) {
				auto f = lift_polynomial(random_smooth(bg, s), c.gamma);
				auto w = weighted_norm(f, c.eta, c.p, bg.T);
				records.push_back({{"experiment", c.kind}, {"seed", s}, {"levels", w.levels}, {"local", w.local},
				                   {"translation", w.translation}, {"total", w.total}});
			}
		} else if (c.kind == "renorm-effectiveness") {
			RenormEffectSetup st;
			st.d = c.d;
			st.nx = c.nx;
			st.T = c.T;
			if (c.eps > 0)
				st.eps = c.eps;
			st.mean = c.u0_mean;
			st.amplitude = c.u0_amplitude;
			RenormEffectiveness re(st);
			for (auto s : c.seeds) {
				auto r = re.run(s);
				records.push_back({{"experiment", c.kind}, {"seed", s}, {"without", r.without}, {"with", r.with},
				                   {"improved", r.with < r.without}});
			}
		}
		std::string body;
		for (auto &r : records)
			body += r.dump() + "\n";
		{
			std::ofstream out(tmp, std::ios::binary);
			if (!out)
				throw Error(ErrorKind::Io, "cli", "output.path", "cannot write '" + tmp + "'");
			out << body;
			if (!out)
				throw Error(ErrorKind::Io, "cli", "output.path", "write failed for '" + tmp + "'");
		}
		std::filesystem::rename(tmp, c.output);
		double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
		json man = {{"config_hash", c.hash()},
		            {"output_hash", hex64(fnv1a(body))},
		            {"records", records.size()},
		            {"version", version},
		            {"fftw", std::string(fftw_version)},
		            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
		                          std::to_string(EIGEN_MINOR_VERSION)},
		            {"wall_time_s", wall}};
		std::string mtmp = manifest + ".tmp";
		{
			std::ofstream out(mtmp, std::ios::binary);
			out << man.dump(2) << "\n";
		}
		std::filesystem::rename(mtmp, manifest);
		log << "wrote " << records.size() << " records to " << c.output << "\n";
		return 0;
	} catch (const Error &e) {
		std::error_code ec;
		std::filesystem::remove(tmp, ec);
		std::filesystem::remove(manifest + ".tmp", ec);
		log << "error: " << e.what() << "\n";
		return exit_code(e);
	}
}

} // namespace phi4
