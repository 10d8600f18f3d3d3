#include "doctest.h"

#include "phi4/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace phi4;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path &p) {
	std::ifstream f(p);
	std::stringstream ss;
	ss << f.rdbuf();
	return ss.str();
}

fs::path scratch(const std::string &name) {
	auto dir = fs::temp_directory_path() / "phi4_test_config";
	fs::create_directories(dir);
	return dir / name;
}

} // namespace

TEST_CASE("parse") {
	auto c = parse_config("# comment\n[grid]\nd = 2\nnx = 32\nnt = 128\nT = 0.125\n[noise]\nseeds = 3..5, 9\n");
	CHECK(c.d == 2);
	CHECK(c.nx == 32);
	CHECK(c.nt == 128);
	CHECK(c.T == doctest::Approx(0.125));
	CHECK(c.seeds == std::vector<std::uint64_t>{3, 4, 5, 9});
	CHECK(c.grid().dt() == doctest::Approx(0.125 / 128));
}

TEST_CASE("invalid input") {
	CHECK_THROWS_AS(parse_config("[grid]\nbogus = 1\n"), Error);
	CHECK_THROWS_AS(parse_config("[experiment]\nkind = duality\n[noise]\nseeds =\n").validate(), Error);
	CHECK_THROWS_AS(parse_config("preset = nope\n"), Error);
	CHECK_THROWS_AS(parse_config("[grid]\nnx = abc\n"), Error);
	try {
		parse_config("[grid]\nbogus = 1\n");
	} catch (const Error &e) {
		CHECK(exit_code(e) == 2);
	}
}

TEST_CASE("presets") {
	auto names = preset_names();
	REQUIRE(names.size() == 3);
	for (const auto &n : names) {
		auto c = preset(n);
		CHECK_NOTHROW(c.validate());
		CHECK(c.hash() == preset(n).hash());
		CHECK(parse_config(c.canonical()).hash() == c.hash());
		CHECK(c.grid().parabolic());
	}
	CHECK(preset("white-noise-d1").hash() != preset("white-noise-d2").hash());
	auto c = parse_config("preset = white-noise-d1\n[grid]\nnx = 32\n");
	CHECK(c.nx == 32);
	CHECK(c.d == 1);
}

TEST_CASE("test functions are supported inside the window") {
	auto c = preset("white-noise-d1");
	auto fs = pde_test_functions(c.grid(), 4);
	REQUIRE(fs.size() == 4);
	for (const auto &f : fs) {
		std::size_t S = f.g.spatial();
		for (std::size_t s = 0; s < S; ++s) {
			CHECK(f.at(0, s) == 0);
			CHECK(f.at(f.g.nt - 1, s) == 0);
		}
	}
}

TEST_CASE("duality holds on the d = 1 preset") {
	auto c = preset("white-noise-d1");
	for (std::uint64_t seed : {1, 2, 3}) {
		auto r = duality_experiment(c, seed);
		CHECK(r.residual < 1e-10);
		CHECK(r.naive_residual > r.residual);
	}
}

TEST_CASE("run_experiment output") {
	auto out = scratch("dual.jsonl");
	fs::remove(out);
	auto c = parse_config("preset = white-noise-d1\n[experiment]\nkind = duality\n[noise]\nseeds = 1..3\n[output]\npath = " +
	                      out.string() + "\n");
	std::ostringstream log;
	REQUIRE(run_experiment(c, log) == 0);
	auto first = slurp(out);
	CHECK(std::count(first.begin(), first.end(), '\n') == 3);
	fs::path manifest = out.string() + ".manifest.json";
	REQUIRE(fs::exists(manifest));
	auto man = slurp(manifest);
	CHECK(man.find(c.hash()) != std::string::npos);
	CHECK(man.find("\"records\"") != std::string::npos);
	for (const auto &e : fs::directory_iterator(out.parent_path()))
		CHECK(e.path().filename().string().find(".tmp") == std::string::npos);
	REQUIRE(run_experiment(c, log) == 0);
	CHECK(slurp(out) == first);
}

TEST_CASE("failed run leaves no output") {
	auto out = scratch("bad.jsonl");
	fs::remove(out);
	auto c = parse_config("preset = white-noise-d1\n[experiment]\nkind = duality\n[output]\npath = " + out.string() + "\n");
	c.nx = 0;
	std::ostringstream log;
	CHECK(run_experiment(c, log) == 2);
	CHECK(!fs::exists(out));
	CHECK(log.str().find("error: ") != std::string::npos);
}
