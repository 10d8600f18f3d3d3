#include "phi4/config.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

using namespace phi4;

namespace {

struct Common {
	std::string config, preset, out;
	std::vector<std::string> sets;
	std::vector<std::string> seeds;
};

void add_common(CLI::App *app, Common &c) {
	app->add_option("-c,--config", c.config, "config file (key = value with [sections])");
	app->add_option("-p,--preset", c.preset, "start from a shipped preset");
	app->add_option("-s,--set", c.sets, "override, e.g. grid.nx=32")->take_all();
	app->add_option("--seeds", c.seeds, "seed list or range, e.g. 1..10")->delimiter(',');
	app->add_option("-o,--out", c.out, "output JSON-lines path");
}

// preset, then file, then --set, then --seeds and --out
ExperimentConfig assemble(const Common &c, const std::string &kind) {
	std::ostringstream text;
	if (!c.preset.empty())
		text << "preset = " << c.preset << "\n";
	if (!c.config.empty()) {
		std::ifstream f(c.config);
		if (!f)
			throw Error(ErrorKind::Io, "cli", "config", "cannot read '" + c.config + "'");
		text << f.rdbuf() << "\n";
	}
	text << "[experiment]\nkind = " << kind << "\n";
	for (const auto &s : c.sets) {
		auto eq = s.find('='), dot = s.find('.');
		if (eq == std::string::npos || dot == std::string::npos || dot > eq)
			throw Error(ErrorKind::Validation, "cli", s, "expected section.key=value");
		text << "[" << s.substr(0, dot) << "]\n" << s.substr(dot + 1, eq - dot - 1) << " = " << s.substr(eq + 1) << "\n";
	}
	if (!c.seeds.empty()) {
		text << "[noise]\nseeds = ";
		for (std::size_t i = 0; i < c.seeds.size(); ++i)
			text << (i ? "," : "") << c.seeds[i];
		text << "\n";
	}
	if (!c.out.empty())
		text << "[output]\npath = " << c.out << "\n";
	return parse_config(text.str());
}

} // namespace

int main(int argc, char **argv) {
	CLI::App app{"phi4: regularity-structure experiments for the dynamic phi^4 model"};
	app.require_subcommand(1);

	struct Cmd {
		std::string group, name, kind, help;
	};
	const std::vector<Cmd> cmds = {
	    {"structure", "list", "structure", "list trees below gamma_max with homogeneities"},
	    {"kernel", "check", "kernel-check", "moment, support, derivative and roughness checks"},
	    {"noise", "sample", "noise", "sample the (mollified) noise on the grid"},
	    {"model", "constants", "constants", "renormalization constants C1, C2, C3"},
	    {"model", "scaling", "scaling", "second-moment scaling of the noise pairing"},
	    {"model", "effectiveness", "renorm-effectiveness", "u_eps vs u_eps/2 with and without renormalization"},
	    {"pde", "run", "pde-run", "solve the renormalized equation"},
	    {"pde", "duality", "duality", "tangent/dual duality residual"},
	    {"pde", "gateaux", "gateaux", "finite-difference Gateaux derivative ratios"},
	    {"pde", "gram", "gram", "Malliavin Gram matrix of test-function pairings"},
	    {"besov", "norm", "besov-norm", "weighted norm of a lifted random smooth field"},
	    {"besov", "embed-suite", "besov", "embedding ratio suite over grids"},
	};

	std::map<std::string, CLI::App *> groups;
	std::vector<Common> opts(cmds.size());
	std::vector<CLI::App *> leaves;
	for (std::size_t i = 0; i < cmds.size(); ++i) {
		auto &g = groups[cmds[i].group];
		if (!g) {
			g = app.add_subcommand(cmds[i].group);
			g->require_subcommand(1);
		}
		auto *leaf = g->add_subcommand(cmds[i].name, cmds[i].help);
		add_common(leaf, opts[i]);
		leaves.push_back(leaf);
	}
	auto *presets = app.add_subcommand("presets", "print the shipped presets");

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError &e) {
		int rc = app.exit(e);
		return rc == 0 ? 0 : 2;
	}

	try {
		if (presets->parsed()) {
			for (const auto &n : preset_names())
				std::cout << "# " << n << "\n" << preset(n).canonical() << "\n";
			return 0;
		}
		for (std::size_t i = 0; i < cmds.size(); ++i)
			if (leaves[i]->parsed())
				return run_experiment(assemble(opts[i], cmds[i].kind), std::cerr);
	} catch (const Error &e) {
		std::cerr << "error: " << e.what() << "\n";
		return exit_code(e);
	}
	return 2;
}
