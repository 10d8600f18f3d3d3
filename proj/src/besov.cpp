#include "phi4/besov.hpp"
#include "phi4/noise.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace phi4 {

namespace {

constexpr double tol = 1e-9;

bool is_inf(double p) { return std::isinf(p); }

void check_p(double p, const char *module) {
	if (!(p == 1 || p == 2 || is_inf(p)))
		throw Error(ErrorKind::Validation, module, "p", "p must be 1, 2 or inf");
}

// L^p accumulator with quadrature weights
struct LpSum {
	double p, acc = 0;
	explicit LpSum(double p_) : p(p_) {}
	void add(double w, double v) {
		if (is_inf(p))
			acc = std::max(acc, std::abs(v));
		else
			acc += w * std::pow(std::abs(v), p);
	}
	double value() const { return is_inf(p) ? acc : std::pow(acc, 1 / p); }
};

long wrap(long i, long n) {
	i %= n;
	return i < 0 ? i + n : i;
}

std::array<long, 3> coords_of(const Grid &g, std::size_t s) { return spatial_coords(g, s); }

// spatial index after shifting by `o`; false if it leaves [0,nx) in non-periodic mode
bool shifted(const Grid &g, std::size_t s, const std::array<long, 3> &o, bool periodic, std::size_t &out) {
	auto c = coords_of(g, s);
	long n = static_cast<long>(g.nx);
	for (int i = 0; i < g.d; ++i) {
		long v = c[i] + o[i];
		if (!periodic && (v < 0 || v >= n))
			return false;
		c[i] = wrap(v, n);
	}
	out = spatial_index(g, c);
	return true;
}

struct RecenterPlan {
	struct Entry {
		std::size_t l, k;
		double coef;
		std::array<int, 4> e;
	};
	std::vector<Entry> entries;
	int maxe = 0;
	explicit RecenterPlan(const std::vector<MultiIndex> &ks) {
		for (std::size_t l = 0; l < ks.size(); ++l)
			for (std::size_t k = 0; k < ks.size(); ++k) {
				bool ge = true;
				for (int a = 0; a < 4; ++a)
					ge = ge && ks[k].k[a] >= ks[l].k[a];
				if (!ge)
					continue;
				Entry en{l, k, 1, {}};
				for (int a = 0; a < 4; ++a) {
					en.e[a] = ks[k].k[a] - ks[l].k[a];
					en.coef *= binomial(ks[k].k[a], ks[l].k[a]);
					maxe = std::max(maxe, en.e[a]);
				}
				entries.push_back(en);
			}
	}
	void apply(const double *f, const ScaledPoint &h, double *out, std::size_t K) const {
		double pw[4][8];
		double hv[4] = {h.t, h.x[0], h.x[1], h.x[2]};
		for (int a = 0; a < 4; ++a) {
			pw[a][0] = 1;
			for (int e = 1; e <= std::min(maxe, 7); ++e)
				pw[a][e] = pw[a][e - 1] * hv[a];
		}
		std::fill(out, out + K, 0.0);
		for (const auto &en : entries) {
			double m = en.coef;
			for (int a = 0; a < 4; ++a)
				m *= en.e[a] <= 7 ? pw[a][en.e[a]] : std::pow(hv[a], en.e[a]);
			out[en.l] += m * f[en.k];
		}
	}
};

std::vector<int> distinct_levels(const std::vector<MultiIndex> &ks) {
	std::vector<int> out;
	for (auto &k : ks)
		if (std::find(out.begin(), out.end(), k.scaled_degree()) == out.end())
			out.push_back(k.scaled_degree());
	return out;
}

void require_lattice(const Grid &g, const char *module) {
	g.validate(module);
	if (std::abs(g.t0 - g.dt()) > tol * g.dt())
		throw Error(ErrorKind::Validation, module, "t0", "modelled fields live on (0,T] with first sample at dt");
}

} // namespace

ModelledField::ModelledField(const Grid &grid, double gamma_, bool periodic_)
    : g(grid), gamma(gamma_), periodic(periodic_), ks(multi_indices_below(grid.d, gamma_)) {
	if (!(gamma_ > 0))
		throw Error(ErrorKind::Validation, "besov", "gamma", "gamma must be positive");
	c.assign(g.size() * ks.size(), 0.0);
}

GridField ModelledField::component(std::size_t j) const {
	GridField out(g);
	std::size_t K = ks.size();
	for (std::size_t p = 0; p < g.size(); ++p)
		out.data[p] = c[p * K + j];
	return out;
}

std::vector<int> ModelledField::levels() const { return distinct_levels(ks); }

Grid besov_grid(int d, int N, double T) {
	if (N < 1 || N > 12)
		throw Error(ErrorKind::Validation, "besov", "N", "level must lie in [1,12]");
	Grid g;
	g.d = d;
	g.nx = std::size_t{1} << N;
	double dt = g.dx() * g.dx();
	double steps = T / dt;
	if (!(T > 0) || std::abs(steps - std::round(steps)) > 1e-6)
		throw Error(ErrorKind::Validation, "besov", "T", "T must be a multiple of dx²");
	g.nt = static_cast<std::size_t>(std::llround(steps));
	g.T = T;
	g.t0 = dt;
	g.validate("besov");
	return g;
}

void recenter(const std::vector<MultiIndex> &ks, const double *f, const ScaledPoint &h, double *out) {
	RecenterPlan(ks).apply(f, h, out, ks.size());
}

double level_norm(const std::vector<MultiIndex> &ks, const double *v, int zeta) {
	double s = 0;
	for (std::size_t j = 0; j < ks.size(); ++j)
		if (ks[j].scaled_degree() == zeta)
			s += v[j] * v[j];
	return std::sqrt(s);
}

namespace {

// first derivative along one axis (0 = time); interior fourth order, edges second order one-sided
std::vector<double> derivative(const Grid &g, const std::vector<double> &f, int axis, bool periodic) {
	std::size_t S = g.spatial();
	std::size_t n = axis == 0 ? g.nt : g.nx;
	double h = axis == 0 ? g.dt() : g.dx();
	if (n < 5)
		throw Error(ErrorKind::Resolution, "besov", "grid", "fewer than 5 samples along a differentiated axis");
	bool per = axis != 0 && periodic;
	std::vector<double> out(f.size());
	for (std::size_t idx = 0; idx < f.size(); ++idx) {
		std::size_t it = idx / S, s = idx % S;
		auto c = spatial_coords(g, s);
		long i = axis == 0 ? static_cast<long>(it) : c[axis - 1];
		long N = static_cast<long>(n);
		auto val = [&](long j) {
			if (axis == 0)
				return f[static_cast<std::size_t>(j) * S + s];
			auto cc = c;
			cc[axis - 1] = wrap(j, N);
			return f[it * S + spatial_index(g, cc)];
		};
		double d;
		if (per || (i >= 2 && i + 2 < N))
			d = (-val(i + 2) + 8 * val(i + 1) - 8 * val(i - 1) + val(i - 2)) / (12 * h);
		else if (i == 0)
			d = (-3 * val(0) + 4 * val(1) - val(2)) / (2 * h);
		else if (i == N - 1)
			d = (3 * val(N - 1) - 4 * val(N - 2) + val(N - 3)) / (2 * h);
		else
			d = (val(i + 1) - val(i - 1)) / (2 * h);
		out[idx] = d;
	}
	return out;
}

} // namespace

ModelledField lift_polynomial(const GridField &g, double gamma, bool periodic) {
	require_lattice(g.g, "besov");
	ModelledField f(g.g, gamma, periodic);
	std::map<MultiIndex, std::vector<double>> D;
	D[MultiIndex{}] = g.data;
	for (const auto &k : f.ks) {
		if (D.count(k))
			continue;
		int axis = 0;
		while (k.k[axis] == 0)
			++axis;
		MultiIndex prev = k;
		--prev.k[axis];
		D[k] = derivative(g.g, D.at(prev), axis, periodic);
	}
	std::size_t K = f.K();
	for (std::size_t j = 0; j < K; ++j) {
		const auto &v = D.at(f.ks[j]);
		double inv = 1 / multi_factorial(f.ks[j]);
		for (std::size_t p = 0; p < g.g.size(); ++p)
			f.c[p * K + j] = v[p] * inv;
	}
	return f;
}

int max_level(const Grid &g) {
	int best = 0;
	for (int n = 1; n <= 30; ++n) {
		double sx = std::ldexp(1.0, -n) / g.dx(), st = std::ldexp(1.0, -2 * n) / g.dt();
		if (sx < 1 - tol || st < 1 - tol)
			break;
		if (std::abs(sx - std::round(sx)) > tol * sx || std::abs(st - std::round(st)) > tol * st)
			continue;
		best = n;
	}
	return best;
}

std::vector<Offset> level_offsets(const Grid &g, int n) {
	std::vector<Offset> out;
	long st = std::lround(std::ldexp(1.0, -2 * n) / g.dt()), sx = std::lround(std::ldexp(1.0, -n) / g.dx());
	int d = g.d;
	int count = 1;
	for (int i = 0; i <= d; ++i)
		count *= 3;
	for (int m = 0; m < count; ++m) {
		int q = m;
		std::array<int, 4> a{0, 0, 0, 0};
		bool zero = true;
		for (int i = 0; i <= d; ++i) {
			a[i] = q % 3 - 1;
			q /= 3;
			zero = zero && a[i] == 0;
		}
		if (zero)
			continue;
		Offset o;
		o.level = n;
		o.it = a[0] * st;
		o.h.t = static_cast<double>(o.it) * g.dt();
		for (int i = 0; i < d; ++i) {
			o.ix[i] = a[i + 1] * sx;
			o.h.x[i] = static_cast<double>(o.ix[i]) * g.dx();
		}
		o.norm = scaled_norm(o.h, d);
		out.push_back(o);
	}
	return out;
}

std::vector<Offset> dyadic_offsets(const Grid &g) {
	int nmax = max_level(g);
	if (nmax < 1)
		throw Error(ErrorKind::Resolution, "besov", "grid", "lattice does not contain any dyadic level");
	std::vector<Offset> out;
	for (int n = 1; n <= nmax; ++n)
		for (auto &o : level_offsets(g, n))
			out.push_back(o);
	return out;
}

WeightedNorm weighted_norm(const ModelledField &f, double eta, double p, double T) {
	check_p(p, "besov");
	const Grid &g = f.g;
	require_lattice(g, "besov");
	if (eta > f.gamma)
		throw Error(ErrorKind::Validation, "besov", "eta", "eta must not exceed gamma");
	WeightedNorm out;
	out.levels = f.levels();
	std::size_t L = out.levels.size(), K = f.K(), S = g.spatial();
	double w = g.cell_volume();
	std::size_t nt = 0;
	while (nt < g.nt && g.time(nt) <= T * (1 + tol))
		++nt;
	for (int zeta : out.levels) {
		LpSum acc(p);
		for (std::size_t it = 0; it < nt; ++it) {
			double wt = std::pow(g.time(it), (eta - zeta) / 2);
			for (std::size_t s = 0; s < S; ++s)
				acc.add(w, level_norm(f.ks, f.at(it * S + s), zeta) / wt);
		}
		out.local.push_back(acc.value());
	}
	auto offs = dyadic_offsets(g);
	std::vector<std::vector<double>> per(offs.size(), std::vector<double>(L, 0.0));
	RecenterPlan plan(f.ks);
	parallel_for(offs.size(), [&](std::size_t oi) {
		const Offset &o = offs[oi];
		double h2 = o.norm * o.norm;
		std::vector<LpSum> acc(L, LpSum(p));
		std::vector<double> buf(K), diff(K);
		for (std::size_t it = 0; it < nt; ++it) {
			double t = g.time(it);
			if (t < 3 * h2 * (1 - tol) || t > (T - h2) * (1 + tol))
				continue;
			long jt = static_cast<long>(it) + o.it;
			if (jt < 0 || jt >= static_cast<long>(g.nt))
				continue;
			for (std::size_t s = 0; s < S; ++s) {
				std::size_t s2;
				if (!shifted(g, s, o.ix, f.periodic, s2))
					continue;
				plan.apply(f.at(it * S + s), o.h, buf.data(), K);
				const double *fz = f.at(static_cast<std::size_t>(jt) * S + s2);
				for (std::size_t j = 0; j < K; ++j)
					diff[j] = fz[j] - buf[j];
				for (std::size_t l = 0; l < L; ++l) {
					int zeta = out.levels[l];
					double den = std::pow(o.norm, f.gamma - zeta) * std::pow(t, (eta - f.gamma) / 2);
					acc[l].add(w, level_norm(f.ks, diff.data(), zeta) / den);
				}
			}
		}
		for (std::size_t l = 0; l < L; ++l)
			per[oi][l] = acc[l].value();
	});
	out.translation.assign(L, 0.0);
	for (auto &row : per)
		for (std::size_t l = 0; l < L; ++l)
			out.translation[l] = std::max(out.translation[l], row[l]);
	for (std::size_t l = 0; l < L; ++l)
		out.total += out.local[l] + out.translation[l];
	return out;
}

namespace {

// K(ℓ) = φ^λ_0(-ℓ) on lags; with the time lag of the first row
GridField reflected_kernel(const TestFunction &phi, double lam, const Grid &g, long &first_patch_row) {
	Grid g0 = g;
	g0.t0 = 0;
	ScaledPoint z0;
	Patch pt = rescale_test(phi, lam, z0, g0);
	Grid kg = g;
	kg.nt = pt.nt;
	kg.T = static_cast<double>(pt.nt) * g.dt();
	long last = pt.it0 + static_cast<long>(pt.nt) - 1;
	kg.t0 = -static_cast<double>(last) * g.dt();
	GridField K(kg);
	std::size_t PS = pt.spatial();
	long n = static_cast<long>(g.nx);
	for (std::size_t r = 0; r < pt.nt; ++r)
		for (std::size_t s = 0; s < PS; ++s) {
			std::array<long, 3> c{0, 0, 0};
			std::size_t q = s;
			for (int i = g.d - 1; i >= 0; --i) {
				c[i] = wrap(-(pt.ix0[i] + static_cast<long>(q % pt.nx[i])), n);
				q /= pt.nx[i];
			}
			K.at(pt.nt - 1 - r, spatial_index(g, c)) += pt.v[r * PS + s];
		}
	first_patch_row = pt.it0;
	return K;
}

} // namespace

DistributionNorm distribution_norm(const GridField &xi, double nu, double p, double T, int r) {
	check_p(p, "besov");
	const Grid &g = xi.g;
	g.validate("besov");
	auto bank = test_bank(g.d, r);
	if (nu >= 0)
		for (auto &phi : bank)
			phi = phi.annihilated(static_cast<int>(std::floor(nu)));
	DistributionNorm out;
	std::size_t S = g.spatial();
	double w = g.cell_volume();
	for (int j = 1; j <= 30; ++j) {
		double lam = std::ldexp(1.0, -j);
		if (2 * lam * lam >= static_cast<double>(g.nt) * g.dt())
			continue;
		std::vector<double> best(g.size(), 0.0);
		std::vector<char> valid(g.nt, 0);
		bool resolved = true;
		for (const auto &phi : bank) {
			long row0;
			GridField K;
			try {
				K = reflected_kernel(phi, lam, g, row0);
			} catch (const Error &e) {
				if (e.kind() != ErrorKind::Resolution)
					throw;
				resolved = false;
				break;
			}
			GridField pr = convolve(K, xi);
			long shift = static_cast<long>(K.g.nt) - 1 + row0; // result row of z index 0
			for (std::size_t it = 0; it < g.nt; ++it) {
				long lo = static_cast<long>(it) + row0, hi = lo + static_cast<long>(K.g.nt) - 1;
				if (lo < 0 || hi >= static_cast<long>(g.nt) || g.time(it) > (T - lam * lam) * (1 + tol))
					continue;
				valid[it] = 1;
				std::size_t m = static_cast<std::size_t>(static_cast<long>(it) + shift);
				for (std::size_t s = 0; s < S; ++s)
					best[it * S + s] = std::max(best[it * S + s], std::abs(pr.at(m, s)));
			}
		}
		if (!resolved)
			break;
		LpSum acc(p);
		bool any = false;
		for (std::size_t it = 0; it < g.nt; ++it) {
			if (!valid[it])
				continue;
			any = true;
			for (std::size_t s = 0; s < S; ++s)
				acc.add(w, best[it * S + s] / std::pow(lam, nu));
		}
		if (!any)
			continue;
		out.lambdas.push_back(lam);
		out.values.push_back(acc.value());
		out.value = std::max(out.value, acc.value());
	}
	if (out.lambdas.empty())
		throw Error(ErrorKind::Resolution, "besov", "lambda", "no dyadic scale is resolved by the grid");
	return out;
}

const AverageLevel &AveragesField::level(int n) const {
	for (const auto &l : levels)
		if (l.n == n)
			return l;
	throw Error(ErrorKind::Validation, "besov", "n", "level " + std::to_string(n) + " not present");
}

namespace {

struct LevelGeometry {
	long st, sx;     // base steps per Λ_n step
	long k0min, k0max;
	long side;       // 2^n
	std::size_t spatial = 1;
	std::size_t count() const { return static_cast<std::size_t>(k0max - k0min + 1) * spatial; }
};

LevelGeometry geometry(const Grid &g, int n) {
	if (n < 1 || n > max_level(g))
		throw Error(ErrorKind::Resolution, "besov", "n", "level " + std::to_string(n) + " is not resolved by the lattice");
	LevelGeometry L;
	L.st = std::lround(std::ldexp(1.0, -2 * n) / g.dt());
	L.sx = std::lround(std::ldexp(1.0, -n) / g.dx());
	L.side = 1L << n;
	double q = std::ldexp(1.0, 2 * n);
	double T = g.time(g.nt - 1);
	L.k0min = 3;
	L.k0max = static_cast<long>(std::floor(T * q - 2 + tol));
	for (int i = 0; i < g.d; ++i)
		L.spatial *= static_cast<std::size_t>(L.side);
	return L;
}

// base lattice index of the i-th point of Λ̃_n
std::size_t level_point(const Grid &g, const LevelGeometry &L, std::size_t i, long &k0, std::array<long, 3> &k) {
	k0 = L.k0min + static_cast<long>(i / L.spatial);
	std::size_t q = i % L.spatial;
	k = {0, 0, 0};
	for (int a = g.d - 1; a >= 0; --a) {
		k[a] = static_cast<long>(q % static_cast<std::size_t>(L.side));
		q /= static_cast<std::size_t>(L.side);
	}
	std::array<long, 3> c{0, 0, 0};
	for (int a = 0; a < g.d; ++a)
		c[a] = k[a] * L.sx;
	return static_cast<std::size_t>(k0 * L.st - 1) * g.spatial() + spatial_index(g, c);
}

std::size_t level_index(const Grid &g, const LevelGeometry &L, long k0, const std::array<long, 3> &k) {
	std::size_t q = 0;
	for (int a = 0; a < g.d; ++a)
		q = q * static_cast<std::size_t>(L.side) + static_cast<std::size_t>(k[a]);
	return static_cast<std::size_t>(k0 - L.k0min) * L.spatial + q;
}

} // namespace

AveragesField to_averages(const ModelledField &f, int n_min, int n_max) {
	const Grid &g = f.g;
	require_lattice(g, "besov");
	if (n_min > n_max)
		throw Error(ErrorKind::Validation, "besov", "n", "empty level range");
	AveragesField a;
	a.g = g;
	a.gamma = f.gamma;
	a.periodic = f.periodic;
	a.ks = f.ks;
	std::size_t K = f.K(), S = g.spatial();
	RecenterPlan plan(f.ks);
	for (int n = n_min; n <= n_max; ++n) {
		LevelGeometry L = geometry(g, n);
		AverageLevel lev;
		lev.n = n;
		if (L.k0max < L.k0min) {
			a.levels.push_back(lev);
			continue;
		}
		std::size_t cnt = L.count();
		lev.points.resize(cnt);
		lev.c.assign(cnt * K, 0.0);
		// trapezoid weights over the half box
		std::vector<double> wt(static_cast<std::size_t>(L.st + 1), 1.0), wx(static_cast<std::size_t>(2 * L.sx + 1), 1.0);
		wt.front() = wt.back() = 0.5;
		wx.front() = wx.back() = 0.5;
		std::size_t box = 1;
		for (int i = 0; i < g.d; ++i)
			box *= wx.size();
		parallel_for(cnt, [&](std::size_t i) {
			long k0;
			std::array<long, 3> k;
			std::size_t base = level_point(g, L, i, k0, k);
			lev.points[i] = base;
			std::size_t it = base / S, s = base % S;
			double *out = lev.c.data() + i * K;
			std::vector<double> buf(K);
			double wsum = 0;
			for (long j = 0; j <= L.st; ++j) {
				std::size_t jt = it + static_cast<std::size_t>(j);
				for (std::size_t b = 0; b < box; ++b) {
					std::array<long, 3> o{0, 0, 0};
					std::size_t q = b;
					double wgt = wt[static_cast<std::size_t>(j)];
					for (int ax = g.d - 1; ax >= 0; --ax) {
						std::size_t r = q % wx.size();
						q /= wx.size();
						o[ax] = static_cast<long>(r) - L.sx;
						wgt *= wx[r];
					}
					std::size_t s2;
					if (!shifted(g, s, o, f.periodic, s2))
						continue;
					ScaledPoint h; // z - z'
					h.t = -static_cast<double>(j) * g.dt();
					for (int ax = 0; ax < g.d; ++ax)
						h.x[ax] = -static_cast<double>(o[ax]) * g.dx();
					plan.apply(f.at(jt * S + s2), h, buf.data(), K);
					for (std::size_t m = 0; m < K; ++m)
						out[m] += wgt * buf[m];
					wsum += wgt;
				}
			}
			for (std::size_t m = 0; m < K; ++m)
				out[m] /= wsum;
		});
		a.levels.push_back(std::move(lev));
	}
	return a;
}

ModelledField from_averages(const AveragesField &a, int n) {
	const Grid &g = a.g;
	const AverageLevel &lev = a.level(n);
	LevelGeometry L = geometry(g, n);
	if (lev.points.empty())
		throw Error(ErrorKind::Resolution, "besov", "n", "restricted grid of this level is empty");
	ModelledField f(g, a.gamma, a.periodic);
	std::size_t K = f.K(), S = g.spatial();
	RecenterPlan plan(a.ks);
	double ht = std::ldexp(1.0, -2 * n), hx = std::ldexp(1.0, -n);
	parallel_for(g.nt, [&](std::size_t it) {
		double t = g.time(it);
		long k0 = std::clamp(std::lround(t / ht), L.k0min, L.k0max);
		for (std::size_t s = 0; s < S; ++s) {
			auto c = spatial_coords(g, s);
			std::array<long, 3> k{0, 0, 0};
			ScaledPoint h;
			h.t = t - static_cast<double>(k0) * ht;
			for (int ax = 0; ax < g.d; ++ax) {
				double x = static_cast<double>(c[ax]) * g.dx();
				long kk = std::lround(x / hx);
				if (!a.periodic)
					kk = std::min(kk, L.side - 1);
				h.x[ax] = x - static_cast<double>(kk) * hx;
				k[ax] = wrap(kk, L.side);
			}
			std::size_t idx = level_index(g, L, k0, k);
			plan.apply(lev.c.data() + idx * K, h, f.at(it * S + s), K);
		}
	});
	return f;
}

RoundTrip round_trip(const ModelledField &f, int n_min, int n_max, int n0, double p) {
	check_p(p, "besov");
	AveragesField a = to_averages(f, n_min, n_max);
	RoundTrip rt;
	const Grid &g = f.g;
	std::size_t S = g.spatial(), K = f.K();
	double tmin = 3 * std::ldexp(1.0, -2 * n0);
	std::vector<double> xs, ys;
	for (int n = n_min; n <= n_max; ++n) {
		ModelledField fn = from_averages(a, n);
		LpSum acc(p);
		for (std::size_t it = 0; it < g.nt; ++it) {
			if (g.time(it) <= tmin)
				continue;
			for (std::size_t s = 0; s < S; ++s) {
				std::size_t q = (it * S + s) * K;
				acc.add(g.cell_volume(), fn.c[q] - f.c[q]);
			}
		}
		rt.ns.push_back(n);
		rt.errors.push_back(acc.value());
		if (acc.value() > 0) {
			xs.push_back(n);
			ys.push_back(std::log2(acc.value()));
		}
	}
	rt.rate = xs.size() >= 2 ? -fit_slope(xs, ys) : 0;
	return rt;
}

AveragesBounds check_averages_bounds(const AveragesField &a, double eta, double p) {
	check_p(p, "besov");
	const Grid &g = a.g;
	auto zs = distinct_levels(a.ks);
	std::size_t K = a.ks.size();
	int ss = 2 + g.d;
	RecenterPlan plan(a.ks);
	AveragesBounds out;
	for (int zeta : zs) {
		LpSum local(p);
		double trans = 0, cons = 0;
		for (const auto &lev : a.levels) {
			if (lev.points.empty())
				continue;
			int n = lev.n;
			LevelGeometry L = geometry(g, n);
			double wn = std::ldexp(1.0, -n * ss), ht = std::ldexp(1.0, -2 * n);
			double scale = std::ldexp(1.0, -n);
			std::size_t cnt = lev.points.size();
			auto time_of = [&](std::size_t i) { return static_cast<double>(L.k0min + static_cast<long>(i / L.spatial)) * ht; };
			for (std::size_t i = 0; i < cnt; ++i) {
				double t = time_of(i);
				if (t <= 3 * 4 * ht * (1 + tol))
					local.add(wn, level_norm(a.ks, lev.c.data() + i * K, zeta) / std::pow(t, (eta - zeta) / 2));
			}
			double den_h = std::pow(scale, a.gamma - zeta);
			// translation over E_n in units of the level lattice
			int count = 1;
			for (int ax = 0; ax <= g.d; ++ax)
				count *= 3;
			std::vector<double> buf(K), diff(K);
			for (int m = 0; m < count; ++m) {
				std::array<int, 4> o{0, 0, 0, 0};
				int q = m;
				bool zero = true;
				for (int ax = 0; ax <= g.d; ++ax) {
					o[ax] = q % 3 - 1;
					q /= 3;
					zero = zero && o[ax] == 0;
				}
				if (zero)
					continue;
				ScaledPoint h;
				h.t = o[0] * ht;
				for (int ax = 0; ax < g.d; ++ax)
					h.x[ax] = o[ax + 1] * scale;
				LpSum acc(p);
				for (std::size_t i = 0; i < cnt; ++i) {
					long k0;
					std::array<long, 3> k;
					level_point(g, L, i, k0, k);
					long k0b = k0 + o[0];
					if (k0b < L.k0min || k0b > L.k0max)
						continue;
					std::array<long, 3> kb = k;
					bool inside = true;
					for (int ax = 0; ax < g.d; ++ax) {
						long v = k[ax] + o[ax + 1];
						if (!a.periodic && (v < 0 || v >= L.side))
							inside = false;
						kb[ax] = wrap(v, L.side);
					}
					if (!inside)
						continue;
					plan.apply(lev.c.data() + i * K, h, buf.data(), K);
					const double *fb = lev.c.data() + level_index(g, L, k0b, kb) * K;
					for (std::size_t j = 0; j < K; ++j)
						diff[j] = fb[j] - buf[j];
					double t = static_cast<double>(k0) * ht;
					acc.add(wn, level_norm(a.ks, diff.data(), zeta) / (den_h * std::pow(t, (eta - a.gamma) / 2)));
				}
				trans = std::max(trans, acc.value());
			}
			// consistency against level n+1
			const AverageLevel *next = nullptr;
			for (const auto &l2 : a.levels)
				if (l2.n == n + 1 && !l2.points.empty())
					next = &l2;
			if (next) {
				LevelGeometry L2 = geometry(g, n + 1);
				LpSum acc(p);
				for (std::size_t i = 0; i < cnt; ++i) {
					long k0;
					std::array<long, 3> k;
					level_point(g, L, i, k0, k);
					std::array<long, 3> k2{2 * k[0], 2 * k[1], 2 * k[2]};
					long k02 = 4 * k0;
					if (k02 < L2.k0min || k02 > L2.k0max)
						continue;
					const double *fa = lev.c.data() + i * K;
					const double *fb = next->c.data() + level_index(g, L2, k02, k2) * K;
					for (std::size_t j = 0; j < K; ++j)
						diff[j] = fa[j] - fb[j];
					double t = static_cast<double>(k0) * ht;
					acc.add(wn, level_norm(a.ks, diff.data(), zeta) / (den_h * std::pow(t, (eta - a.gamma) / 2)));
				}
				cons = std::max(cons, acc.value());
			}
		}
		out.local += local.value();
		out.translation += trans;
		out.consistency += cons;
	}
	return out;
}

ModelledField product(const ModelledField &a, const ModelledField &b) {
	if (!(a.g == b.g) || a.periodic != b.periodic)
		throw Error(ErrorKind::Validation, "besov", "grid", "factors must share one lattice");
	ModelledField out(a.g, std::min(a.gamma, b.gamma), a.periodic);
	struct Triple {
		std::size_t i, j, m;
	};
	std::vector<Triple> tr;
	for (std::size_t i = 0; i < a.K(); ++i)
		for (std::size_t j = 0; j < b.K(); ++j) {
			MultiIndex s;
			for (int q = 0; q < 4; ++q)
				s.k[q] = a.ks[i].k[q] + b.ks[j].k[q];
			auto it = std::find(out.ks.begin(), out.ks.end(), s);
			if (it != out.ks.end())
				tr.push_back({i, j, static_cast<std::size_t>(it - out.ks.begin())});
		}
	for (std::size_t p = 0; p < a.g.size(); ++p) {
		const double *fa = a.at(p), *fb = b.at(p);
		double *o = out.at(p);
		for (const auto &t : tr)
			o[t.m] += fa[t.i] * fb[t.j];
	}
	return out;
}

GridField heat_duhamel(const GridField &g, const HeatDecomposition &heat) {
	if (heat.T < g.g.time(g.g.nt - 1) * (1 - tol))
		throw Error(ErrorKind::Validation, "besov", "T", "heat decomposition horizon is shorter than the field window");
	GridField shifted_g = g;
	shifted_g.g.t0 = g.g.t0 - g.g.dt();
	return restrict_to(convolve(heat.heat_signal(shifted_g.g), shifted_g), g.g);
}

ModelledField convolve_heat_lift(const ModelledField &f, const HeatDecomposition &heat) {
	if (heat.d != f.g.d)
		throw Error(ErrorKind::Validation, "besov", "d", "heat decomposition dimension differs from the field");
	return lift_polynomial(heat_duhamel(f.reconstruction(), heat), f.gamma + 2, f.periodic);
}

ReconstructionDefect reconstruction_defect(const ModelledField &f, const std::vector<double> &lambdas, double eta,
                                           double p, int level, const GridField &a, const GridField &Pxi) {
	check_p(p, "besov");
	const Grid &g = f.g;
	require_lattice(g, "besov");
	bool noise = !a.data.empty();
	if (noise && (!(a.g == g) || !(Pxi.g == g)))
		throw Error(ErrorKind::Validation, "besov", "a", "noise coefficient fields must share the lattice");
	if (lambdas.empty())
		throw Error(ErrorKind::Validation, "besov", "lambda", "empty scale range");
	LevelGeometry L = geometry(g, level);
	auto bank = test_bank(g.d, 3);
	std::size_t K = f.K(), S = g.spatial();
	double wn = std::ldexp(1.0, -level * (2 + g.d)), ht = std::ldexp(1.0, -2 * level);
	double Tend = g.time(g.nt - 1);
	ReconstructionDefect out;
	std::size_t cnt = static_cast<std::size_t>(std::floor(Tend / ht + tol)) * L.spatial;
	for (double lam : lambdas) {
		std::vector<double> vals(cnt, -1.0);
		parallel_for(cnt, [&](std::size_t i) {
			long k0 = 1 + static_cast<long>(i / L.spatial);
			std::size_t q = i % L.spatial;
			std::array<long, 3> c{0, 0, 0};
			for (int ax = g.d - 1; ax >= 0; --ax) {
				c[ax] = static_cast<long>(q % static_cast<std::size_t>(L.side)) * L.sx;
				q /= static_cast<std::size_t>(L.side);
			}
			std::size_t it = static_cast<std::size_t>(k0 * L.st - 1);
			ScaledPoint z;
			z.t = g.time(it);
			for (int ax = 0; ax < g.d; ++ax)
				z.x[ax] = static_cast<double>(c[ax]) * g.dx();
			if (z.t > Tend - lam * lam)
				return;
			std::size_t zi = it * S + spatial_index(g, c);
			const double *fz = f.at(zi);
			double best = 0;
			for (const auto &phi : bank) {
				Patch pt = rescale_test(phi, lam, z, g);
				if (pt.it0 < 0 || pt.it0 + static_cast<long>(pt.nt) > static_cast<long>(g.nt))
					return;
				std::size_t PS = pt.spatial();
				double acc = 0;
				for (std::size_t r = 0; r < pt.nt; ++r)
					for (std::size_t s = 0; s < PS; ++s) {
						double v = pt.v[r * PS + s];
						if (v == 0)
							continue;
						std::array<long, 3> y{0, 0, 0};
						ScaledPoint dy;
						std::size_t qq = s;
						bool inside = true;
						for (int ax = g.d - 1; ax >= 0; --ax) {
							long raw = pt.ix0[ax] + static_cast<long>(qq % pt.nx[ax]);
							qq /= pt.nx[ax];
							if (!f.periodic && (raw < 0 || raw >= static_cast<long>(g.nx)))
								inside = false;
							y[ax] = wrap(raw, static_cast<long>(g.nx));
							dy.x[ax] = static_cast<double>(raw) * g.dx() - z.x[ax];
						}
						if (!inside)
							return;
						std::size_t yt = static_cast<std::size_t>(pt.it0) + r;
						dy.t = g.time(yt) - z.t;
						std::size_t yi = yt * S + spatial_index(g, y);
						double pz = 0;
						for (std::size_t j = 0; j < K; ++j) {
							double m = fz[j];
							for (int ax = 0; ax < 4; ++ax)
								for (int e = 0; e < f.ks[j].k[ax]; ++e)
									m *= ax == 0 ? dy.t : dy.x[ax - 1];
							pz += m;
						}
						if (noise)
							pz += a.data[zi] * (Pxi.data[yi] - Pxi.data[zi]);
						acc += v * (f.c[yi * K] - pz);
					}
				best = std::max(best, std::abs(acc * pt.cell));
			}
			vals[i] = best / (std::pow(lam, f.gamma) * std::pow(z.t, (eta - f.gamma) / 2));
		});
		LpSum acc(p);
		bool any = false;
		for (double v : vals)
			if (v >= 0) {
				acc.add(wn, v);
				any = true;
			}
		if (!any)
			continue;
		out.lambdas.push_back(lam);
		out.values.push_back(acc.value());
		out.value = std::max(out.value, acc.value());
	}
	if (out.lambdas.empty())
		throw Error(ErrorKind::Resolution, "besov", "lambda", "no scale leaves room for a test function in the window");
	return out;
}

GridField random_smooth(const Grid &g, std::uint64_t seed) {
	GridField out(g);
	std::size_t S = g.spatial();
	int side = 5, modes = 1;
	for (int i = 0; i < g.d; ++i)
		modes *= side;
	std::vector<double> sp(S);
	for (int m = 0; m < modes; ++m) {
		std::array<int, 3> k{0, 0, 0};
		int q = m;
		for (int i = 0; i < g.d; ++i) {
			k[i] = q % side - 2;
			q /= side;
		}
		double a = cell_normal(seed, -2, static_cast<std::size_t>(3 * m));
		double b = cell_normal(seed, -2, static_cast<std::size_t>(3 * m + 1));
		double c = cell_normal(seed, -2, static_cast<std::size_t>(3 * m + 2));
		for (std::size_t s = 0; s < S; ++s) {
			auto x = spatial_coords(g, s);
			double ph = 0;
			for (int i = 0; i < g.d; ++i)
				ph += 2 * M_PI * k[i] * static_cast<double>(x[i]) * g.dx();
			sp[s] = a * std::cos(ph) + b * std::sin(ph);
		}
		for (std::size_t it = 0; it < g.nt; ++it) {
			double tf = 1 + c * g.time(it);
			double *row = out.slice(it);
			for (std::size_t s = 0; s < S; ++s)
				row[s] += sp[s] * tf;
		}
	}
	return out;
}

EmbedSuite embed_suite(int d, const std::vector<int> &Ns, double T, std::size_t samples, std::uint64_t seed,
                       double gamma, double eta, double p, double gamma2, double p2) {
	check_p(p, "besov");
	check_p(p2, "besov");
	double ss = 2 + d;
	double ip = 1 / p, ip2 = is_inf(p2) ? 0 : 1 / p2;
	if (!(p2 > p) || !(gamma2 < gamma - ss * (ip - ip2)) || !(gamma2 > 0))
		throw Error(ErrorKind::Validation, "besov", "gamma2", "need p' > p and 0 < γ' < γ - |s|(1/p - 1/p')");
	if (samples == 0)
		throw Error(ErrorKind::Validation, "besov", "samples", "at least one sample is required");
	EmbedSuite out;
	out.gamma = gamma;
	out.eta = eta;
	out.p = p;
	out.gamma2 = gamma2;
	out.p2 = p2;
	double eta2 = eta + gamma2 - gamma;
	for (int N : Ns) {
		Grid g = besov_grid(d, N, T);
		EmbedRow row;
		row.nx = g.nx;
		for (std::size_t i = 0; i < samples; ++i) {
			GridField r = random_smooth(g, seed + i);
			double lo = weighted_norm(lift_polynomial(r, gamma), eta, p, T).total;
			double hi = weighted_norm(lift_polynomial(r, gamma2), eta2, p2, T).total;
			double ratio = hi / lo;
			if (!std::isfinite(ratio))
				row.finite = false;
			else
				row.max_ratio = std::max(row.max_ratio, ratio);
		}
		out.rows.push_back(row);
	}
	if (out.rows.size() >= 2 && out.rows[0].max_ratio > 0)
		out.spread = std::abs(out.rows.back().max_ratio / out.rows.front().max_ratio - 1);
	return out;
}

} // namespace phi4
