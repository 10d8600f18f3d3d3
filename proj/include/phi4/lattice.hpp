#pragma once

#include "phi4/common.hpp"

#include <memory>

namespace phi4 {

struct ScaledPoint {
	double t = 0;
	std::array<double, 3> x{0, 0, 0};
};

double scaled_norm(const ScaledPoint &z, int d);
// parabolic dilation λ·z = (λ²t, λx)
ScaledPoint dilate(const ScaledPoint &z, double lam);
ScaledPoint operator+(const ScaledPoint &a, const ScaledPoint &b);
ScaledPoint operator-(const ScaledPoint &a, const ScaledPoint &b);

// uniform space-time lattice: times t0 + i*dt for i < nt, space the unit torus with nx points per axis
struct Grid {
	int d = 1;
	std::size_t nt = 1, nx = 1;
	double T = 1;  // window length, dt = T/nt
	double t0 = 0; // time of the first sample
	double dt() const { return T / static_cast<double>(nt); }
	double dx() const { return 1.0 / static_cast<double>(nx); }
	std::size_t spatial() const;
	std::size_t size() const { return nt * spatial(); }
	double cell_volume() const;
	double time(std::size_t it) const { return t0 + static_cast<double>(it) * dt(); }
	bool parabolic() const { return dt() <= dx() * dx() * (1 + 1e-12); }
	bool operator==(const Grid &o) const = default;
	void validate(const std::string &module) const;
};

struct GridField {
	Grid g;
	std::vector<double> data;

	GridField() = default;
	explicit GridField(const Grid &grid) : g(grid), data(grid.size(), 0.0) {}
	double *slice(std::size_t it) { return data.data() + it * g.spatial(); }
	const double *slice(std::size_t it) const { return data.data() + it * g.spatial(); }
	double &at(std::size_t it, std::size_t ix) { return data[it * g.spatial() + ix]; }
	double at(std::size_t it, std::size_t ix) const { return data[it * g.spatial() + ix]; }
	ScaledPoint point(std::size_t it, std::size_t ix) const;
	bool finite() const;
};

// flat spatial index <-> per-axis indices (x1 slowest)
std::size_t spatial_index(const Grid &g, const std::array<long, 3> &ix);
std::array<long, 3> spatial_coords(const Grid &g, std::size_t flat);

double inner(const GridField &a, const GridField &b);
double l2_norm(const GridField &a);
double sup_norm(const GridField &a);

void save_field(const std::string &path, const GridField &f);
GridField load_field(const std::string &path);

// FFT plans are cached and shared; execution is thread safe
class SpatialFft {
public:
	SpatialFft(int d, std::size_t n);
	void forward(cplx *data) const; // in place, unnormalized
	void inverse(cplx *data) const; // in place, divides by n^d
	std::size_t size() const { return size_; }

private:
	void *fwd_ = nullptr, *inv_ = nullptr;
	std::size_t size_;
};

// batched 1D transform of length L applied to `howmany` interleaved sequences with stride `howmany`
class TimeFft {
public:
	TimeFft(std::size_t L, std::size_t howmany);
	void forward(cplx *data) const;
	void inverse(cplx *data) const; // unnormalized
	std::size_t length() const { return L_; }

private:
	void *fwd_ = nullptr, *inv_ = nullptr;
	std::size_t L_;
};

int wavenumber(std::size_t i, std::size_t n);
// squared Euclidean wavevector |2πk|² of flat spatial mode index
double mode_norm2(const Grid &g, std::size_t flat);

// spatial transform of every time slice: nt blocks of nx^d coefficients
std::vector<cplx> spatial_transform(const GridField &f);
void spatial_inverse(std::vector<cplx> &c, GridField &out);

// space-time transform with the time axis zero padded to length L ≥ nt;
// f̂(ξ) = dt dx^d Σ f e^{-i(ξ0 t + 2πk·x)} and the m̂ quadrature weight is 1/(L dt)
struct Spectrum {
	Grid g;
	std::size_t L;
	std::vector<cplx> data; // index j*spatial + k
	double measure() const { return 1.0 / (static_cast<double>(L) * g.dt()); }
	double xi0(std::size_t j) const;
};
Spectrum spacetime_transform(const GridField &f, std::size_t L);
GridField spacetime_inverse(const Spectrum &s);

// linear convolution in time, circular in space, scaled by the cell volume:
// (a*b)[n] = w Σ_m a[m] b[n-m]; the result starts at a.t0 + b.t0
GridField convolve(const GridField &a, const GridField &b);

// convolution against a fixed kernel, reusing its transform for many signals of length nt
class Convolver {
public:
	Convolver(const GridField &kernel, std::size_t nt);
	GridField apply(const GridField &f) const;
	const Grid &kernel_grid() const { return k_; }

private:
	Grid k_;
	std::size_t nt_, L_;
	std::vector<cplx> khat_;
};

// samples of f at the times of `target` (zero outside f's time range); space grids must agree
GridField restrict_to(const GridField &f, const Grid &target);

struct TimeWindow {
	double a = 0, b = 1;
	bool open_a = false, open_b = false;
	bool contains(double t) const;
};
std::vector<ScaledPoint> dyadic_grid(int n, const TimeWindow &w, int d);

// samples of g on [t0,t0+T] × [-m, K-m)^d with m = K/2 (integer division), nx points per unit length
struct BoxSample {
	int d = 1;
	std::size_t nt = 1, nx = 1;
	double T = 1, t0 = 0;
	int periods = 1;
	std::vector<double> data;
};
GridField periodize(const BoxSample &g);

// 1D profile on [-1,1] with compact support inside
using Profile = std::function<double(double)>;
Profile bump_profile(double centre = 0, double width = 1);

// φ(y) = Σ_m c_m y^{k_m} Π b_i(y_i): a polynomial times a tensor bump on the scaled unit ball
class TestFunction {
public:
	struct Term {
		double c;
		MultiIndex k;
	};
	TestFunction() = default;
	TestFunction(int d, Profile time_profile, std::array<Profile, 3> space_profiles, int r, std::string name);

	double operator()(const ScaledPoint &y) const;
	double bump(const ScaledPoint &y) const;
	int dim() const { return d_; }
	int regularity() const { return r_; }
	int order() const { return order_; } // moment annihilation order, -1 if none
	const std::string &name() const { return name_; }
	const std::vector<Term> &terms() const { return terms_; }
	// continuous projection removing moments of scaled degree ≤ n, then C^r re-normalization
	TestFunction annihilated(int n) const;
	// ∫ e^{-i ξ·y} φ(y) dy at the unscaled frequency ξ (separable evaluation)
	cplx fourier(double w0, const std::array<double, 3> &w) const;
	// ∫ y^k φ(y) dy by tensor Gauss quadrature
	double moment(const MultiIndex &k) const;
	double l1_norm() const;
	// ∫ e^{-iwu} u^power b_axis(u) du; fourier() is Σ_m scale·c_m Π of these
	cplx factor_fourier(int axis, int power, double w) const;
	double scale() const { return scale_; }

private:
	int d_ = 1, r_ = 0, order_ = -1;
	std::string name_;
	std::array<Profile, 4> prof_; // 0: time, 1..3: space
	std::vector<Term> terms_;
	double scale_ = 1;
	void normalize();
};

// eight fixed shapes standing in for the unit ball of C^r test functions
std::vector<TestFunction> test_bank(int d, int r);

// φ^λ_z sampled on grid points: patch of indices (it0.., ix0..) with periodic wrap in space
struct Patch {
	int d = 1;
	long it0 = 0;
	std::size_t nt = 0;
	std::array<long, 3> ix0{0, 0, 0};
	std::array<std::size_t, 3> nx{1, 1, 1};
	std::vector<double> v;
	double cell = 1; // cell volume of the sampling grid
	std::size_t spatial() const { return nx[0] * nx[1] * nx[2]; }
};
Patch rescale_test(const TestFunction &phi, double lam, const ScaledPoint &z, const Grid &g);
double pair(const GridField &f, const Patch &p);
double patch_l1(const Patch &p);
// Σ (y-z)^k φ^λ_z(y) cell, local coordinates unwrapped
double patch_moment(const Patch &p, const Grid &g, const ScaledPoint &z, const MultiIndex &k);
// dense field holding the patch (zero elsewhere)
GridField patch_field(const Patch &p, const Grid &g);

// composite Gauss-Legendre rule on [a,b]
struct Quadrature {
	std::vector<double> x, w;
};
Quadrature gauss_legendre(double a, double b, int panels);

} // namespace phi4
