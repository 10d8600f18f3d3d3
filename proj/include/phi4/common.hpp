#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace phi4 {

using cplx = std::complex<double>;

enum class ErrorKind { Validation, Resolution, Precondition, Numerical, Unsupported, Io };

// every module error carries the module name and the offending parameter
class Error : public std::runtime_error {
public:
	Error(ErrorKind kind, std::string module, std::string param, const std::string &msg)
	    : std::runtime_error(module + ": " + param + ": " + msg), kind_(kind), module_(std::move(module)),
	      param_(std::move(param)) {}
	ErrorKind kind() const { return kind_; }
	const std::string &module() const { return module_; }
	const std::string &param() const { return param_; }

private:
	ErrorKind kind_;
	std::string module_, param_;
};

// multi-index over (t, x1, x2, x3); the scaled degree counts time twice
struct MultiIndex {
	std::array<int, 4> k{0, 0, 0, 0};
	int scaled_degree() const { return 2 * k[0] + k[1] + k[2] + k[3]; }
	int total() const { return k[0] + k[1] + k[2] + k[3]; }
	bool operator==(const MultiIndex &o) const = default;
	auto operator<=>(const MultiIndex &o) const = default;
};

// all multi-indices in dimension d with scaled degree < bound (strict) sorted by (degree, lex)
std::vector<MultiIndex> multi_indices_below(int d, double bound);
// same with scaled degree <= n
std::vector<MultiIndex> multi_indices_upto(int d, int n);
double factorial(int n);
double multi_factorial(const MultiIndex &k);
double binomial(int n, int k);

// PHI4_THREADS caps the worker count; 0 or unset means hardware concurrency
int thread_count();
// runs f(i) for i in [0,n) on the pool; f must only write to slot i of its outputs
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &f);

// 64-bit FNV-1a, used for config hashes and output fingerprints
std::uint64_t fnv1a(const std::string &s, std::uint64_t h = 14695981039346656037ull);
std::string hex64(std::uint64_t v);

// least squares slope of y against x
double fit_slope(const std::vector<double> &x, const std::vector<double> &y);

} // namespace phi4
