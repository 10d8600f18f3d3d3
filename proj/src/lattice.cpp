#include "phi4/lattice.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <tuple>

namespace phi4 {

namespace {

std::mutex &plan_mutex() {
	static std::mutex m;
	return m;
}

long wrap(long i, long n) {
	long r = i % n;
	return r < 0 ? r + n : r;
}

} // namespace

double scaled_norm(const ScaledPoint &z, int d) {
	double r = std::sqrt(std::abs(z.t));
	for (int i = 0; i < d; ++i)
		r = std::max(r, std::abs(z.x[i]));
	return r;
}

ScaledPoint dilate(const ScaledPoint &z, double lam) {
	return {lam * lam * z.t, {lam * z.x[0], lam * z.x[1], lam * z.x[2]}};
}

ScaledPoint operator+(const ScaledPoint &a, const ScaledPoint &b) {
	return {a.t + b.t, {a.x[0] + b.x[0], a.x[1] + b.x[1], a.x[2] + b.x[2]}};
}

ScaledPoint operator-(const ScaledPoint &a, const ScaledPoint &b) {
	return {a.t - b.t, {a.x[0] - b.x[0], a.x[1] - b.x[1], a.x[2] - b.x[2]}};
}

std::size_t Grid::spatial() const {
	std::size_t s = 1;
	for (int i = 0; i < d; ++i)
		s *= nx;
	return s;
}

double Grid::cell_volume() const { return dt() * std::pow(dx(), d); }

void Grid::validate(const std::string &module) const {
	if (d < 1 || d > 3)
		throw Error(ErrorKind::Validation, module, "d", "spatial dimension must be 1, 2 or 3");
	if (nt < 1 || nx < 1)
		throw Error(ErrorKind::Validation, module, "N", "grid counts must be positive");
	if (!(T > 0) || !std::isfinite(T))
		throw Error(ErrorKind::Validation, module, "T", "horizon must be positive");
}

ScaledPoint GridField::point(std::size_t it, std::size_t ix) const {
	auto c = spatial_coords(g, ix);
	ScaledPoint z;
	z.t = g.time(it);
	for (int i = 0; i < g.d; ++i)
		z.x[i] = c[i] * g.dx();
	return z;
}

bool GridField::finite() const {
	return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::size_t spatial_index(const Grid &g, const std::array<long, 3> &ix) {
	std::size_t f = 0;
	long n = static_cast<long>(g.nx);
	for (int i = 0; i < g.d; ++i)
		f = f * g.nx + static_cast<std::size_t>(wrap(ix[i], n));
	return f;
}

std::array<long, 3> spatial_coords(const Grid &g, std::size_t flat) {
	std::array<long, 3> c{0, 0, 0};
	for (int i = g.d - 1; i >= 0; --i) {
		c[i] = static_cast<long>(flat % g.nx);
		flat /= g.nx;
	}
	return c;
}

double inner(const GridField &a, const GridField &b) {
	if (!(a.g == b.g))
		throw Error(ErrorKind::Validation, "lattice", "grid", "inner product of fields on different grids");
	double s = 0;
	for (std::size_t i = 0; i < a.data.size(); ++i)
		s += a.data[i] * b.data[i];
	return s * a.g.cell_volume();
}

double l2_norm(const GridField &a) { return std::sqrt(inner(a, a)); }

double sup_norm(const GridField &a) {
	double m = 0;
	for (double v : a.data)
		m = std::max(m, std::abs(v));
	return m;
}

void save_field(const std::string &path, const GridField &f) {
	std::ofstream out(path, std::ios::binary);
	if (!out)
		throw Error(ErrorKind::Io, "lattice", "path", "cannot open " + path);
	out.write("PHI4", 4);
	std::uint32_t version = 2;
	std::uint8_t d = static_cast<std::uint8_t>(f.g.d);
	std::uint64_t nt = f.g.nt, nx = f.g.nx;
	double T = f.g.T, t0 = f.g.t0;
	out.write(reinterpret_cast<const char *>(&version), 4);
	out.write(reinterpret_cast<const char *>(&d), 1);
	out.write(reinterpret_cast<const char *>(&nt), 8);
	out.write(reinterpret_cast<const char *>(&nx), 8);
	out.write(reinterpret_cast<const char *>(&T), 8);
	out.write(reinterpret_cast<const char *>(&t0), 8);
	out.write(reinterpret_cast<const char *>(f.data.data()), static_cast<std::streamsize>(f.data.size() * 8));
	if (!out)
		throw Error(ErrorKind::Io, "lattice", "path", "write failed for " + path);
}

GridField load_field(const std::string &path) {
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw Error(ErrorKind::Io, "lattice", "path", "cannot open " + path);
	char magic[4];
	in.read(magic, 4);
	if (!in || std::memcmp(magic, "PHI4", 4) != 0)
		throw Error(ErrorKind::Validation, "lattice", "path", "bad magic in " + path);
	std::uint32_t version = 0;
	std::uint8_t d = 0;
	std::uint64_t nt = 0, nx = 0;
	double T = 0, t0 = 0;
	in.read(reinterpret_cast<char *>(&version), 4);
	in.read(reinterpret_cast<char *>(&d), 1);
	in.read(reinterpret_cast<char *>(&nt), 8);
	in.read(reinterpret_cast<char *>(&nx), 8);
	in.read(reinterpret_cast<char *>(&T), 8);
	in.read(reinterpret_cast<char *>(&t0), 8);
	if (!in || version != 2)
		throw Error(ErrorKind::Validation, "lattice", "path", "unsupported header in " + path);
	Grid g{d, nt, nx, T, t0};
	g.validate("lattice");
	GridField f(g);
	in.read(reinterpret_cast<char *>(f.data.data()), static_cast<std::streamsize>(f.data.size() * 8));
	if (!in)
		throw Error(ErrorKind::Validation, "lattice", "path", "truncated sample block in " + path);
	return f;
}

SpatialFft::SpatialFft(int d, std::size_t n) : size_(1) {
	static std::map<std::pair<int, std::size_t>, std::pair<fftw_plan, fftw_plan>> cache;
	for (int i = 0; i < d; ++i)
		size_ *= n;
	std::lock_guard<std::mutex> lock(plan_mutex());
	auto key = std::make_pair(d, n);
	auto it = cache.find(key);
	if (it == cache.end()) {
		int dims[3] = {static_cast<int>(n), static_cast<int>(n), static_cast<int>(n)};
		auto *buf = fftw_alloc_complex(size_);
		fftw_plan f = fftw_plan_dft(d, dims, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
		fftw_plan b = fftw_plan_dft(d, dims, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
		fftw_free(buf);
		it = cache.emplace(key, std::make_pair(f, b)).first;
	}
	fwd_ = it->second.first;
	inv_ = it->second.second;
}

void SpatialFft::forward(cplx *data) const {
	auto *p = reinterpret_cast<fftw_complex *>(data);
	fftw_execute_dft(static_cast<fftw_plan>(fwd_), p, p);
}

void SpatialFft::inverse(cplx *data) const {
	auto *p = reinterpret_cast<fftw_complex *>(data);
	fftw_execute_dft(static_cast<fftw_plan>(inv_), p, p);
	double s = 1.0 / static_cast<double>(size_);
	for (std::size_t i = 0; i < size_; ++i)
		data[i] *= s;
}

TimeFft::TimeFft(std::size_t L, std::size_t howmany) : L_(L) {
	static std::map<std::pair<std::size_t, std::size_t>, std::pair<fftw_plan, fftw_plan>> cache;
	std::lock_guard<std::mutex> lock(plan_mutex());
	auto key = std::make_pair(L, howmany);
	auto it = cache.find(key);
	if (it == cache.end()) {
		int n = static_cast<int>(L);
		int h = static_cast<int>(howmany);
		auto *buf = fftw_alloc_complex(L * howmany);
		fftw_plan f = fftw_plan_many_dft(1, &n, h, buf, nullptr, h, 1, buf, nullptr, h, 1, FFTW_FORWARD,
		                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
		fftw_plan b = fftw_plan_many_dft(1, &n, h, buf, nullptr, h, 1, buf, nullptr, h, 1, FFTW_BACKWARD,
		                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
		fftw_free(buf);
		it = cache.emplace(key, std::make_pair(f, b)).first;
	}
	fwd_ = it->second.first;
	inv_ = it->second.second;
}

void TimeFft::forward(cplx *data) const {
	auto *p = reinterpret_cast<fftw_complex *>(data);
	fftw_execute_dft(static_cast<fftw_plan>(fwd_), p, p);
}

void TimeFft::inverse(cplx *data) const {
	auto *p = reinterpret_cast<fftw_complex *>(data);
	fftw_execute_dft(static_cast<fftw_plan>(inv_), p, p);
}

int wavenumber(std::size_t i, std::size_t n) {
	return i <= n / 2 ? static_cast<int>(i) : static_cast<int>(i) - static_cast<int>(n);
}

double mode_norm2(const Grid &g, std::size_t flat) {
	auto c = spatial_coords(g, flat);
	double s = 0;
	for (int i = 0; i < g.d; ++i) {
		double k = 2 * M_PI * wavenumber(static_cast<std::size_t>(c[i]), g.nx);
		s += k * k;
	}
	return s;
}

std::vector<cplx> spatial_transform(const GridField &f) {
	std::size_t S = f.g.spatial();
	std::vector<cplx> c(f.data.size());
	for (std::size_t i = 0; i < c.size(); ++i)
		c[i] = f.data[i];
	SpatialFft fft(f.g.d, f.g.nx);
	for (std::size_t it = 0; it < f.g.nt; ++it)
		fft.forward(c.data() + it * S);
	return c;
}

void spatial_inverse(std::vector<cplx> &c, GridField &out) {
	std::size_t S = out.g.spatial();
	SpatialFft fft(out.g.d, out.g.nx);
	for (std::size_t it = 0; it < out.g.nt; ++it) {
		fft.inverse(c.data() + it * S);
		for (std::size_t k = 0; k < S; ++k)
			out.data[it * S + k] = c[it * S + k].real();
	}
}

double Spectrum::xi0(std::size_t j) const {
	return 2 * M_PI * wavenumber(j, L) / (static_cast<double>(L) * g.dt());
}

Spectrum spacetime_transform(const GridField &f, std::size_t L) {
	if (L < f.g.nt)
		throw Error(ErrorKind::Validation, "lattice", "L", "padded length shorter than the field");
	std::size_t S = f.g.spatial();
	Spectrum s{f.g, L, std::vector<cplx>(L * S, 0.0)};
	for (std::size_t i = 0; i < f.data.size(); ++i)
		s.data[i] = f.data[i];
	SpatialFft fft(f.g.d, f.g.nx);
	for (std::size_t it = 0; it < f.g.nt; ++it)
		fft.forward(s.data.data() + it * S);
	TimeFft(L, S).forward(s.data.data());
	double w = f.g.cell_volume();
	for (std::size_t j = 0; j < L; ++j) {
		cplx ph = std::polar(w, -s.xi0(j) * f.g.t0);
		for (std::size_t k = 0; k < S; ++k)
			s.data[j * S + k] *= ph;
	}
	return s;
}

GridField spacetime_inverse(const Spectrum &s) {
	std::size_t S = s.g.spatial();
	std::vector<cplx> c = s.data;
	double w = s.g.cell_volume();
	for (std::size_t j = 0; j < s.L; ++j) {
		cplx ph = std::polar(1.0 / (w * static_cast<double>(s.L)), s.xi0(j) * s.g.t0);
		for (std::size_t k = 0; k < S; ++k)
			c[j * S + k] *= ph;
	}
	TimeFft(s.L, S).inverse(c.data());
	GridField out(s.g);
	SpatialFft fft(s.g.d, s.g.nx);
	for (std::size_t it = 0; it < s.g.nt; ++it) {
		fft.inverse(c.data() + it * S);
		for (std::size_t k = 0; k < S; ++k)
			out.data[it * S + k] = c[it * S + k].real();
	}
	return out;
}

namespace {

std::size_t good_length(std::size_t n) {
	std::size_t L = 1;
	while (L < n)
		L *= 2;
	// 3·2^k is often shorter and still fast
	if (L >= 4 && 3 * (L / 4) >= n)
		return 3 * (L / 4);
	return L;
}

void check_compatible(const Grid &a, const Grid &b) {
	if (a.d != b.d || a.nx != b.nx || std::abs(a.dt() - b.dt()) > 1e-12 * a.dt())
		throw Error(ErrorKind::Validation, "lattice", "grid", "convolution operands must share d, N_x and dt");
}

std::vector<cplx> padded_transform(const GridField &f, std::size_t L) {
	std::size_t S = f.g.spatial();
	std::vector<cplx> c(L * S, 0.0);
	for (std::size_t i = 0; i < f.data.size(); ++i)
		c[i] = f.data[i];
	SpatialFft fft(f.g.d, f.g.nx);
	for (std::size_t it = 0; it < f.g.nt; ++it)
		fft.forward(c.data() + it * S);
	TimeFft(L, S).forward(c.data());
	return c;
}

GridField padded_inverse(std::vector<cplx> &c, const Grid &out_grid, std::size_t L, double scale) {
	std::size_t S = out_grid.spatial();
	TimeFft(L, S).inverse(c.data());
	GridField out(out_grid);
	SpatialFft fft(out_grid.d, out_grid.nx);
	double s = scale / static_cast<double>(L);
	for (std::size_t it = 0; it < out_grid.nt; ++it) {
		fft.inverse(c.data() + it * S);
		for (std::size_t k = 0; k < S; ++k)
			out.data[it * S + k] = c[it * S + k].real() * s;
	}
	return out;
}

} // namespace

GridField convolve(const GridField &a, const GridField &b) {
	check_compatible(a.g, b.g);
	Grid g = a.g;
	g.nt = a.g.nt + b.g.nt - 1;
	g.T = static_cast<double>(g.nt) * a.g.dt();
	g.t0 = a.g.t0 + b.g.t0;
	std::size_t L = good_length(g.nt);
	auto ca = padded_transform(a, L);
	auto cb = padded_transform(b, L);
	for (std::size_t i = 0; i < ca.size(); ++i)
		ca[i] *= cb[i];
	return padded_inverse(ca, g, L, a.g.cell_volume());
}

Convolver::Convolver(const GridField &kernel, std::size_t nt) : k_(kernel.g), nt_(nt) {
	L_ = good_length(nt + k_.nt - 1);
	khat_ = padded_transform(kernel, L_);
}

GridField Convolver::apply(const GridField &f) const {
	check_compatible(k_, f.g);
	if (f.g.nt != nt_)
		throw Error(ErrorKind::Validation, "lattice", "nt", "signal length differs from the planned length");
	Grid g = f.g;
	g.nt = nt_ + k_.nt - 1;
	g.T = static_cast<double>(g.nt) * f.g.dt();
	g.t0 = f.g.t0 + k_.t0;
	auto c = padded_transform(f, L_);
	for (std::size_t i = 0; i < c.size(); ++i)
		c[i] *= khat_[i];
	return padded_inverse(c, g, L_, f.g.cell_volume());
}

GridField restrict_to(const GridField &f, const Grid &target) {
	check_compatible(f.g, target);
	double off = (target.t0 - f.g.t0) / f.g.dt();
	long shift = std::lround(off);
	if (std::abs(off - static_cast<double>(shift)) > 1e-6)
		throw Error(ErrorKind::Validation, "lattice", "t0", "target times are not on the source lattice");
	GridField out(target);
	std::size_t S = target.spatial();
	for (std::size_t it = 0; it < target.nt; ++it) {
		long src = shift + static_cast<long>(it);
		if (src < 0 || src >= static_cast<long>(f.g.nt))
			continue;
		std::copy_n(f.slice(static_cast<std::size_t>(src)), S, out.slice(it));
	}
	return out;
}

bool TimeWindow::contains(double t) const {
	const double tol = 1e-12;
	if (open_a ? t <= a + tol : t < a - tol)
		return false;
	if (open_b ? t >= b - tol : t > b + tol)
		return false;
	return true;
}

std::vector<ScaledPoint> dyadic_grid(int n, const TimeWindow &w, int d) {
	if (n < 0)
		throw Error(ErrorKind::Validation, "lattice", "n", "dyadic level must be non-negative");
	std::vector<ScaledPoint> out;
	if (w.b < w.a)
		return out;
	double ht = std::ldexp(1.0, -2 * n), hx = std::ldexp(1.0, -n);
	long per = 1L << n;
	long k0 = static_cast<long>(std::floor(w.a / ht)) - 1, k1 = static_cast<long>(std::ceil(w.b / ht)) + 1;
	long spatial = 1;
	for (int i = 0; i < d; ++i)
		spatial *= per;
	for (long k = k0; k <= k1; ++k) {
		double t = k * ht;
		if (!w.contains(t))
			continue;
		for (long s = 0; s < spatial; ++s) {
			ScaledPoint z;
			z.t = t;
			long r = s;
			for (int i = d - 1; i >= 0; --i) {
				z.x[i] = (r % per) * hx;
				r /= per;
			}
			out.push_back(z);
		}
	}
	return out;
}

GridField periodize(const BoxSample &g) {
	long K = g.periods;
	if (K < 1)
		throw Error(ErrorKind::Validation, "lattice", "periods", "box must span at least one period");
	long n = static_cast<long>(g.nx);
	long nb = K * n;
	std::size_t Sb = 1;
	for (int i = 0; i < g.d; ++i)
		Sb *= static_cast<std::size_t>(nb);
	if (g.data.size() != g.nt * Sb)
		throw Error(ErrorKind::Validation, "lattice", "data", "box sample size mismatch");
	double gmax = 0, edge = 0;
	for (std::size_t it = 0; it < g.nt; ++it)
		for (std::size_t s = 0; s < Sb; ++s) {
			double v = std::abs(g.data[it * Sb + s]);
			gmax = std::max(gmax, v);
			std::size_t r = s;
			bool boundary = false;
			for (int i = 0; i < g.d; ++i) {
				long c = static_cast<long>(r % nb);
				r /= nb;
				if (c == 0 || c == nb - 1)
					boundary = true;
			}
			if (boundary)
				edge = std::max(edge, v);
		}
	if (edge > 1e-12 * std::max(gmax, 1e-300))
		throw Error(ErrorKind::Precondition, "lattice", "box",
		            "insufficient decay at the box boundary, truncation error " + std::to_string(edge));
	Grid grid{g.d, g.nt, g.nx, g.T, g.t0};
	GridField out(grid);
	std::size_t S = grid.spatial();
	for (std::size_t it = 0; it < g.nt; ++it)
		for (std::size_t s = 0; s < Sb; ++s) {
			std::size_t r = s, flat = 0, mul = 1;
			for (int i = 0; i < g.d; ++i) {
				long c = static_cast<long>(r % nb);
				r /= nb;
				flat += static_cast<std::size_t>(wrap(c, n)) * mul;
				mul *= g.nx;
			}
			out.data[it * S + flat] += g.data[it * Sb + s];
		}
	return out;
}

Quadrature gauss_legendre(double a, double b, int panels) {
	using G = boost::math::quadrature::gauss<double, 10>;
	const auto &xs = G::abscissa();
	const auto &ws = G::weights();
	Quadrature q;
	double h = (b - a) / panels;
	for (int p = 0; p < panels; ++p) {
		double c = a + (p + 0.5) * h;
		for (std::size_t i = 0; i < xs.size(); ++i) {
			q.x.push_back(c - 0.5 * h * xs[i]);
			q.w.push_back(0.5 * h * ws[i]);
			q.x.push_back(c + 0.5 * h * xs[i]);
			q.w.push_back(0.5 * h * ws[i]);
		}
	}
	return q;
}

Profile bump_profile(double centre, double width) {
	return [centre, width](double u) {
		double s = (u - centre) / width;
		if (std::abs(s) >= 1)
			return 0.0;
		return std::exp(1.0 - 1.0 / (1.0 - s * s));
	};
}

namespace {

const Quadrature &unit_rule() {
	static const Quadrature q = gauss_legendre(-1, 1, 64);
	return q;
}

// sup over u of |d^j/du^j (u^p b(u))| by repeated central differences
double derivative_sup(const Profile &b, int p, int j) {
	const int n = 4001;
	const double h = 2.0 / (n - 1);
	std::vector<double> v(n);
	for (int i = 0; i < n; ++i) {
		double u = -1 + i * h;
		v[i] = std::pow(u, p) * b(u);
	}
	for (int r = 0; r < j; ++r) {
		std::vector<double> w(n, 0.0);
		for (int i = 1; i + 1 < n; ++i)
			w[i] = (v[i + 1] - v[i - 1]) / (2 * h);
		v.swap(w);
	}
	double m = 0;
	for (double x : v)
		m = std::max(m, std::abs(x));
	return m;
}

} // namespace

TestFunction::TestFunction(int d, Profile time_profile, std::array<Profile, 3> space_profiles, int r, std::string name)
    : d_(d), r_(r), name_(std::move(name)) {
	prof_[0] = std::move(time_profile);
	for (int i = 0; i < 3; ++i)
		prof_[i + 1] = space_profiles[i] ? std::move(space_profiles[i]) : bump_profile();
	terms_.push_back({1.0, MultiIndex{}});
	normalize();
}

double TestFunction::bump(const ScaledPoint &y) const {
	if (std::abs(y.t) >= 1)
		return 0;
	double v = prof_[0](y.t);
	for (int i = 0; i < d_ && v != 0; ++i) {
		if (std::abs(y.x[i]) >= 1)
			return 0;
		v *= prof_[i + 1](y.x[i]);
	}
	return v;
}

double TestFunction::operator()(const ScaledPoint &y) const {
	double b = bump(y);
	if (b == 0)
		return 0;
	double s = 0;
	for (const auto &tm : terms_) {
		double m = tm.c * std::pow(y.t, tm.k.k[0]);
		for (int i = 0; i < d_; ++i)
			m *= std::pow(y.x[i], tm.k.k[i + 1]);
		s += m;
	}
	return scale_ * s * b;
}

void TestFunction::normalize() {
	scale_ = 1;
	double U = 0;
	for (const auto &k : multi_indices_upto(d_, r_)) {
		double bound = 0;
		for (const auto &tm : terms_) {
			double p = std::abs(tm.c);
			for (int a = 0; a <= d_; ++a)
				p *= derivative_sup(prof_[a], tm.k.k[a], k.k[a]);
			bound += p;
		}
		U = std::max(U, bound);
	}
	scale_ = 1.0 / U;
}

double TestFunction::moment(const MultiIndex &k) const {
	const auto &q = unit_rule();
	double s = 0;
	for (const auto &tm : terms_) {
		double p = tm.c;
		for (int a = 0; a <= d_; ++a) {
			int pw = tm.k.k[a] + k.k[a];
			double I = 0;
			for (std::size_t i = 0; i < q.x.size(); ++i)
				I += q.w[i] * std::pow(q.x[i], pw) * prof_[a](q.x[i]);
			p *= I;
		}
		s += p;
	}
	return scale_ * s;
}

double TestFunction::l1_norm() const {
	// tensor quadrature of |φ| on a product rule; the bank is only used for d ≤ 3
	const auto q = gauss_legendre(-1, 1, d_ == 3 ? 4 : (d_ == 2 ? 8 : 16));
	std::size_t n = q.x.size();
	std::size_t total = n;
	for (int i = 0; i < d_; ++i)
		total *= n;
	double s = 0;
	for (std::size_t idx = 0; idx < total; ++idx) {
		std::size_t r = idx;
		ScaledPoint y;
		double w = 1;
		std::size_t j = r % n;
		r /= n;
		y.t = q.x[j];
		w *= q.w[j];
		for (int i = 0; i < d_; ++i) {
			j = r % n;
			r /= n;
			y.x[i] = q.x[j];
			w *= q.w[j];
		}
		s += w * std::abs((*this)(y));
	}
	return s;
}

TestFunction TestFunction::annihilated(int n) const {
	TestFunction out = *this;
	if (n < 0)
		return out;
	auto ks = multi_indices_upto(d_, n);
	std::size_t m = ks.size();
	Eigen::MatrixXd G(m, m);
	Eigen::VectorXd rhs(m);
	TestFunction plain = *this;
	plain.terms_ = {{1.0, MultiIndex{}}};
	plain.scale_ = 1;
	for (std::size_t i = 0; i < m; ++i) {
		rhs(i) = moment(ks[i]);
		for (std::size_t j = 0; j < m; ++j) {
			MultiIndex s;
			for (int a = 0; a < 4; ++a)
				s.k[a] = ks[i].k[a] + ks[j].k[a];
			G(i, j) = plain.moment(s);
		}
	}
	Eigen::VectorXd a = G.colPivHouseholderQr().solve(rhs);
	out.terms_.clear();
	for (const auto &tm : terms_)
		out.terms_.push_back({tm.c * scale_, tm.k});
	// a shape inside the annihilated span would project to zero; tilt it by x1^{n+1} first
	bool inside = std::all_of(terms_.begin(), terms_.end(), [&](const Term &t) { return t.k.scaled_degree() <= n; });
	if (inside) {
		MultiIndex e;
		e.k[1] = n + 1;
		out.terms_.push_back({scale_, e});
		for (std::size_t i = 0; i < m; ++i) {
			MultiIndex s = ks[i];
			s.k[1] += n + 1;
			rhs(i) += scale_ * plain.moment(s);
		}
		a = G.colPivHouseholderQr().solve(rhs);
	}
	for (std::size_t i = 0; i < m; ++i)
		out.terms_.push_back({-a(i), ks[i]});
	out.order_ = n;
	out.name_ = name_ + "/n" + std::to_string(n);
	out.normalize();
	return out;
}

cplx TestFunction::factor_fourier(int axis, int power, double w) const {
	const auto &q = unit_rule();
	cplx s = 0;
	for (std::size_t i = 0; i < q.x.size(); ++i) {
		double u = q.x[i];
		double v = q.w[i] * std::pow(u, power) * prof_[axis](u);
		if (v != 0)
			s += v * std::polar(1.0, -w * u);
	}
	return s;
}

cplx TestFunction::fourier(double w0, const std::array<double, 3> &w) const {
	cplx s = 0;
	for (const auto &tm : terms_) {
		cplx p = tm.c * factor_fourier(0, tm.k.k[0], w0);
		for (int i = 0; i < d_; ++i)
			p *= factor_fourier(i + 1, tm.k.k[i + 1], w[i]);
		s += p;
	}
	return scale_ * s;
}

std::vector<TestFunction> test_bank(int d, int r) {
	auto B = [](double c = 0, double w = 1) { return bump_profile(c, w); };
	auto mod = [](Profile p, std::function<double(double)> m) { return Profile([p, m](double u) { return p(u) * m(u); }); };
	std::vector<TestFunction> bank;
	bank.emplace_back(d, B(), std::array<Profile, 3>{B(), B(), B()}, r, "bump");
	bank.emplace_back(d, B(0, 0.6), std::array<Profile, 3>{B(0, 0.6), B(0, 0.6), B(0, 0.6)}, r, "narrow");
	bank.emplace_back(d, B(), std::array<Profile, 3>{mod(B(), [](double u) { return std::cos(M_PI * u); }), B(), B()}, r,
	                  "cos1");
	bank.emplace_back(d, B(), std::array<Profile, 3>{mod(B(), [](double u) { return u; }), B(), B()}, r, "odd-x");
	bank.emplace_back(d, mod(B(), [](double u) { return u; }), std::array<Profile, 3>{B(), B(), B()}, r, "odd-t");
	bank.emplace_back(d, B(), std::array<Profile, 3>{mod(B(), [](double u) { return std::cos(3 * M_PI * u); }), B(), B()},
	                  r, "cos3");
	bank.emplace_back(d, B(0.3, 0.7), std::array<Profile, 3>{B(0.3, 0.7), B(-0.2, 0.7), B(0.1, 0.8)}, r, "shifted");
	bank.emplace_back(d, B(), std::array<Profile, 3>{mod(B(), [](double u) { return std::sin(2 * M_PI * u); }), B(), B()},
	                  r, "sin2");
	return bank;
}

Patch rescale_test(const TestFunction &phi, double lam, const ScaledPoint &z, const Grid &g) {
	if (!(lam > 0) || lam > 1)
		throw Error(ErrorKind::Validation, "lattice", "lambda", "scale must lie in (0,1]");
	int d = g.d;
	double dt = g.dt(), dx = g.dx();
	Patch p;
	p.d = d;
	p.cell = g.cell_volume();
	double l2 = lam * lam;
	long a = static_cast<long>(std::floor((z.t - l2 - g.t0) / dt)) + 1;
	long b = static_cast<long>(std::ceil((z.t + l2 - g.t0) / dt)) - 1;
	if (b - a + 1 < 4)
		throw Error(ErrorKind::Resolution, "lattice", "lambda", "fewer than 4 time samples inside the rescaled support");
	p.it0 = a;
	p.nt = static_cast<std::size_t>(b - a + 1);
	for (int i = 0; i < d; ++i) {
		long c0 = static_cast<long>(std::floor((z.x[i] - lam) / dx)) + 1;
		long c1 = static_cast<long>(std::ceil((z.x[i] + lam) / dx)) - 1;
		if (c1 - c0 + 1 < 4)
			throw Error(ErrorKind::Resolution, "lattice", "lambda",
			            "fewer than 4 spatial samples inside the rescaled support");
		p.ix0[i] = c0;
		p.nx[i] = static_cast<std::size_t>(c1 - c0 + 1);
	}
	std::size_t S = p.spatial();
	p.v.assign(p.nt * S, 0.0);
	double amp = std::pow(lam, -(2.0 + d));
	std::vector<double> bumpv(p.v.size());
	std::vector<ScaledPoint> local(p.v.size());
	for (std::size_t it = 0; it < p.nt; ++it)
		for (std::size_t s = 0; s < S; ++s) {
			ScaledPoint u;
			u.t = (g.t0 + (p.it0 + static_cast<long>(it)) * dt - z.t) / l2;
			std::size_t r = s;
			for (int i = d - 1; i >= 0; --i) {
				long c = p.ix0[i] + static_cast<long>(r % p.nx[i]);
				r /= p.nx[i];
				u.x[i] = (c * dx - z.x[i]) / lam;
			}
			std::size_t idx = it * S + s;
			local[idx] = u;
			p.v[idx] = amp * phi(u);
			bumpv[idx] = phi.bump(u);
		}
	if (phi.order() >= 0) {
		// discrete re-projection so that grid moments vanish exactly
		auto ks = multi_indices_upto(d, phi.order());
		std::size_t m = ks.size();
		auto mono = [&](const ScaledPoint &u, const MultiIndex &k) {
			double v = std::pow(u.t, k.k[0]);
			for (int i = 0; i < d; ++i)
				v *= std::pow(u.x[i], k.k[i + 1]);
			return v;
		};
		Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, m);
		Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
		std::vector<double> mv(m);
		for (std::size_t idx = 0; idx < p.v.size(); ++idx) {
			if (bumpv[idx] == 0)
				continue;
			for (std::size_t i = 0; i < m; ++i)
				mv[i] = mono(local[idx], ks[i]);
			for (std::size_t i = 0; i < m; ++i) {
				rhs(i) += p.v[idx] * mv[i];
				for (std::size_t j = 0; j < m; ++j)
					G(i, j) += bumpv[idx] * mv[i] * mv[j];
			}
		}
		Eigen::VectorXd c = G.colPivHouseholderQr().solve(rhs);
		for (std::size_t idx = 0; idx < p.v.size(); ++idx) {
			if (bumpv[idx] == 0)
				continue;
			double corr = 0;
			for (std::size_t i = 0; i < m; ++i)
				corr += c(i) * mono(local[idx], ks[i]);
			p.v[idx] -= bumpv[idx] * corr;
		}
	}
	return p;
}

double pair(const GridField &f, const Patch &p) {
	const Grid &g = f.g;
	std::size_t S = p.spatial();
	double s = 0;
	for (std::size_t it = 0; it < p.nt; ++it) {
		long ti = p.it0 + static_cast<long>(it);
		if (ti < 0 || ti >= static_cast<long>(g.nt))
			continue;
		const double *row = f.slice(static_cast<std::size_t>(ti));
		for (std::size_t sp = 0; sp < S; ++sp) {
			double v = p.v[it * S + sp];
			if (v == 0)
				continue;
			std::array<long, 3> c{0, 0, 0};
			std::size_t r = sp;
			for (int i = g.d - 1; i >= 0; --i) {
				c[i] = p.ix0[i] + static_cast<long>(r % p.nx[i]);
				r /= p.nx[i];
			}
			s += v * row[spatial_index(g, c)];
		}
	}
	return s * p.cell;
}

double patch_l1(const Patch &p) {
	double s = 0;
	for (double v : p.v)
		s += std::abs(v);
	return s * p.cell;
}

double patch_moment(const Patch &p, const Grid &g, const ScaledPoint &z, const MultiIndex &k) {
	std::size_t S = p.spatial();
	double s = 0;
	for (std::size_t it = 0; it < p.nt; ++it) {
		double t = g.t0 + (p.it0 + static_cast<long>(it)) * g.dt() - z.t;
		for (std::size_t sp = 0; sp < S; ++sp) {
			double m = std::pow(t, k.k[0]);
			std::size_t r = sp;
			for (int i = g.d - 1; i >= 0; --i) {
				long c = p.ix0[i] + static_cast<long>(r % p.nx[i]);
				r /= p.nx[i];
				m *= std::pow(c * g.dx() - z.x[i], k.k[i + 1]);
			}
			s += m * p.v[it * S + sp];
		}
	}
	return s * p.cell;
}

GridField patch_field(const Patch &p, const Grid &g) {
	GridField f(g);
	std::size_t S = p.spatial();
	for (std::size_t it = 0; it < p.nt; ++it) {
		long ti = p.it0 + static_cast<long>(it);
		if (ti < 0 || ti >= static_cast<long>(g.nt))
			continue;
		for (std::size_t sp = 0; sp < S; ++sp) {
			std::array<long, 3> c{0, 0, 0};
			std::size_t r = sp;
			for (int i = g.d - 1; i >= 0; --i) {
				c[i] = p.ix0[i] + static_cast<long>(r % p.nx[i]);
				r /= p.nx[i];
			}
			f.at(static_cast<std::size_t>(ti), spatial_index(g, c)) += p.v[it * S + sp];
		}
	}
	return f;
}

} // namespace phi4
