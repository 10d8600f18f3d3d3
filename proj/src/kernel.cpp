#include "phi4/kernel.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace phi4 {

namespace {

// C^∞ step: 1 for u ≤ a, 0 for u ≥ b
double smooth_step(double u, double a, double b) {
	if (u <= a)
		return 1;
	if (u >= b)
		return 0;
	double s = (u - a) / (b - a);
	auto f = [](double v) { return v > 0 ? std::exp(-1.0 / v) : 0.0; };
	double p = f(1 - s), q = f(s);
	return p / (p + q);
}

double S(double u) { return smooth_step(std::abs(u), 0.25, 0.5); }

double bump(double u) {
	if (std::abs(u) >= 1)
		return 0;
	return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

double p1(double t, double x) { return std::exp(-x * x / (4 * t)) / std::sqrt(4 * M_PI * t); }

// periodized 1D heat kernel on the unit circle
double p1_per(double t, double x) {
	if (t <= 0)
		return 0;
	double s = 0;
	int reach = 1 + static_cast<int>(std::ceil(12 * std::sqrt(2 * t)));
	double x0 = x - std::round(x);
	for (int n = -reach; n <= reach; ++n)
		s += p1(t, x0 - n);
	return s;
}

double bt(double t) { return bump((t - 0.125) / 0.125); }
double bx(double x) { return bump(x / 0.5); }

double gauss_moment(int p, double t) {
	if (p % 2)
		return 0;
	double v = 1;
	for (int i = p - 1; i > 0; i -= 2)
		v *= i;
	return v * std::pow(2 * t, p / 2);
}

double integrate(const std::function<double(double)> &f, double a, double b, int panels) {
	auto q = gauss_legendre(a, b, panels);
	double s = 0;
	for (std::size_t i = 0; i < q.x.size(); ++i)
		s += q.w[i] * f(q.x[i]);
	return s;
}

// ∫_0^∞ ... over the time axis, geometric panels accumulating towards 0
double integrate_time(const std::function<double(double)> &f, double top) {
	double s = 0, b = top;
	for (int i = 0; i < 96; ++i) {
		double a = b * std::pow(2.0, -0.25);
		s += integrate(f, a, b, 1);
		b = a;
	}
	return s;
}

// A_p(t) = ∫ p1(t,x) S(c|x|) x^p dx for even p, written as Gaussian moment minus a tail
double cut_moment(double t, int p, double c) {
	if (p % 2)
		return 0;
	double lo = 0.25 / c, hi = 0.5 / c + 12 * std::sqrt(2 * t);
	double tail = integrate([&](double x) { return p1(t, x) * (1 - S(c * x)) * std::pow(x, p); }, lo, hi, 24);
	return gauss_moment(p, t) - 2 * tail;
}

using Gauss7 = boost::math::quadrature::gauss<double, 7>;

template <class F> double gauss7(F f, double a, double b) {
	const auto &xs = Gauss7::abscissa();
	const auto &ws = Gauss7::weights();
	double c = 0.5 * (a + b), h = 0.5 * (b - a), s = 0;
	for (std::size_t i = 0; i < xs.size(); ++i) {
		if (xs[i] == 0) {
			s += ws[i] * f(c);
			continue;
		}
		s += ws[i] * (f(c - h * xs[i]) + f(c + h * xs[i]));
	}
	return s * h;
}

// cos transforms κ = 0..K of an even function supported in [-b,b] (integrand given on [0,b])
std::vector<double> cos_table(const std::function<double(double)> &f, double a, double b, int K, int base_panels) {
	int panels = base_panels + static_cast<int>(std::ceil(2 * (b - a) * K));
	auto q = gauss_legendre(a, b, panels);
	std::vector<double> out(K + 1, 0.0);
	for (std::size_t i = 0; i < q.x.size(); ++i) {
		double v = q.w[i] * f(q.x[i]);
		if (v == 0)
			continue;
		double th = 2 * M_PI * q.x[i];
		cplx step = std::polar(1.0, th), z = 1;
		for (int k = 0; k <= K; ++k) {
			out[k] += 2 * v * z.real();
			z *= step;
		}
	}
	return out;
}

int kappa_abs(std::size_t i, std::size_t n) { return std::abs(wavenumber(i, n)); }

} // namespace

// ---------------------------------------------------------------------------

double HeatDecomposition::P(const ScaledPoint &z) const {
	if (z.t <= 0)
		return 0;
	double v = 1;
	for (int i = 0; i < d; ++i)
		v *= p1(z.t, z.x[i]);
	return v;
}

double HeatDecomposition::psi(const ScaledPoint &z) const {
	double v = S(std::sqrt(std::abs(z.t)));
	for (int i = 0; i < d && v != 0; ++i)
		v *= S(z.x[i]);
	return v;
}

double HeatDecomposition::G(const ScaledPoint &z) const {
	double b = bt(z.t);
	for (int i = 0; i < d && b != 0; ++i)
		b *= bx(z.x[i]);
	if (b == 0)
		return 0;
	double s = 0;
	for (std::size_t j = 0; j < ks.size(); ++j) {
		if (a[j] == 0)
			continue;
		double m = a[j] * std::pow(z.t, ks[j].k[0]);
		for (int i = 0; i < d; ++i)
			m *= std::pow(z.x[i], ks[j].k[i + 1]);
		s += m;
	}
	return b * s;
}

double HeatDecomposition::P0(const ScaledPoint &z) const {
	if (z.t <= 0)
		return 0;
	ScaledPoint z2 = dilate(z, 2);
	double chi = psi(z) - psi(z2);
	return P(z) * chi + G(z) - std::pow(2.0, d) * G(z2);
}

double HeatDecomposition::Pm(int m, const ScaledPoint &z) const {
	return std::pow(2.0, m * d) * P0(dilate(z, std::ldexp(1.0, m)));
}

double HeatDecomposition::Pplus(const ScaledPoint &z) const { return P(z) * psi(z) + G(z); }

double HeatDecomposition::Pminus(const ScaledPoint &z) const { return P(z) * (1 - psi(z)) - G(z); }

double HeatDecomposition::partial_sum(const ScaledPoint &z, int levels) const {
	if (z.t <= 0)
		return 0;
	ScaledPoint w = z;
	for (int i = 0; i < d; ++i)
		w.x[i] = z.x[i] - std::round(z.x[i]);
	double per = 1;
	for (int i = 0; i < d; ++i)
		per *= p1_per(w.t, w.x[i]);
	double s = per - P(w) * psi(w) - G(w);
	for (int m = 0; m <= levels; ++m)
		s += Pm(m, w);
	return s;
}

namespace {

// spatial coefficient tables for one time node: D1[κ] = e^{-4π²κ²τ} - ∫ p1 S cos(2πκx)
std::vector<double> heat_defect(double tau, int K) {
	const double tau_c = 1.0 / 800;
	std::vector<double> D(K + 1);
	if (tau < tau_c) {
		double hi = 0.5 + 12 * std::sqrt(2 * tau);
		auto tab = cos_table([&](double x) { return p1(tau, x) * (1 - S(x)); }, 0.25, hi, K, 8);
		for (int k = 0; k <= K; ++k)
			D[k] = tab[k];
	} else {
		auto tab = cos_table([&](double x) { return p1(tau, x) * S(x); }, 0.0, 0.5, K, 16);
		for (int k = 0; k <= K; ++k)
			D[k] = std::exp(-4 * M_PI * M_PI * k * k * tau) - tab[k];
	}
	return D;
}

} // namespace

double HeatDecomposition::Pplus_hat(double tau, const std::array<int, 3> &k) const {
	if (tau <= 0 || tau >= 0.25)
		return 0;
	int K = 0;
	for (int i = 0; i < d; ++i)
		K = std::max(K, std::abs(k[i]));
	auto D = heat_defect(tau, K);
	double prod = S(std::sqrt(tau));
	for (int i = 0; i < d; ++i) {
		int q = std::abs(k[i]);
		prod *= std::exp(-4 * M_PI * M_PI * q * q * tau) - D[q];
	}
	double g = 0;
	double b = bt(tau);
	if (b != 0)
		for (std::size_t j = 0; j < ks.size(); ++j) {
			if (a[j] == 0)
				continue;
			double m = a[j] * b * std::pow(tau, ks[j].k[0]);
			for (int i = 0; i < d; ++i) {
				int p = ks[j].k[i + 1];
				auto tab = cos_table([&](double x) { return bx(x) * std::pow(x, p); }, 0, 0.5, std::abs(k[i]), 16);
				m *= tab[std::abs(k[i])];
			}
			g += m;
		}
	return prod + g;
}

double HeatDecomposition::Pplus_hat_integral(double a0, double b0, const std::array<int, 3> &k) const {
	double a1 = std::max(a0, 0.0), b1 = std::min(b0, 0.25);
	if (b1 <= a1)
		return 0;
	double lam = 0;
	for (int i = 0; i < d; ++i)
		lam += 4 * M_PI * M_PI * k[i] * k[i];
	double e = lam == 0 ? b1 - a1 : (std::exp(-lam * a1) - std::exp(-lam * b1)) / lam;
	double q = gauss7([&](double t) { return std::exp(-lam * t) - Pplus_hat(t, k); }, a1, b1);
	return e - q;
}

GridField HeatDecomposition::plus_signal(const Grid &g) const {
	g.validate("kernel");
	if (g.d != d)
		throw Error(ErrorKind::Validation, "kernel", "d", "grid dimension differs from the decomposition");
	double dt = g.dt();
	std::size_t J = static_cast<std::size_t>(std::ceil(0.25 / dt - 1e-9));
	int K = static_cast<int>(g.nx / 2);
	std::size_t S_ = g.spatial();
	std::vector<std::vector<double>> Bx(r + 1);
	for (int p = 0; p <= r; ++p)
		Bx[p] = cos_table([&](double x) { return bx(x) * std::pow(x, p); }, 0, 0.5, K, 16);
	std::vector<std::array<int, 3>> modes(S_);
	std::vector<double> lam(S_);
	for (std::size_t f = 0; f < S_; ++f) {
		auto c = spatial_coords(g, f);
		std::array<int, 3> k{0, 0, 0};
		for (int i = 0; i < d; ++i) {
			k[i] = kappa_abs(static_cast<std::size_t>(c[i]), g.nx);
			lam[f] += 4 * M_PI * M_PI * k[i] * k[i];
		}
		modes[f] = k;
	}
	Grid out_g = g;
	out_g.nt = J;
	out_g.T = static_cast<double>(J) * dt;
	out_g.t0 = dt;
	GridField out(out_g);
	const auto &xs = Gauss7::abscissa();
	const auto &ws = Gauss7::weights();
	parallel_for(J, [&](std::size_t j) {
		double a0 = static_cast<double>(j) * dt, b0 = std::min(a0 + dt, 0.25);
		std::vector<double> W(S_, 0.0);
		for (std::size_t f = 0; f < S_; ++f)
			W[f] = lam[f] == 0 ? b0 - a0 : (std::exp(-lam[f] * a0) - std::exp(-lam[f] * b0)) / lam[f];
		double c = 0.5 * (a0 + b0), h = 0.5 * (b0 - a0);
		std::vector<std::pair<double, double>> nodes;
		for (std::size_t i = 0; i < xs.size(); ++i) {
			nodes.push_back({c - h * xs[i], h * ws[i]});
			if (xs[i] != 0)
				nodes.push_back({c + h * xs[i], h * ws[i]});
		}
		for (auto [tau, w] : nodes) {
			auto D = heat_defect(tau, K);
			std::vector<double> Ek(K + 1), Fk(K + 1);
			for (int k = 0; k <= K; ++k) {
				Ek[k] = std::exp(-4 * M_PI * M_PI * k * k * tau);
				Fk[k] = Ek[k] - D[k];
			}
			double st = S(std::sqrt(tau)), btau = bt(tau);
			for (std::size_t f = 0; f < S_; ++f) {
				const auto &k = modes[f];
				double e = 1, pp = st;
				for (int i = 0; i < d; ++i) {
					e *= Ek[k[i]];
					pp *= Fk[k[i]];
				}
				double gh = 0;
				if (btau != 0)
					for (std::size_t jj = 0; jj < ks.size(); ++jj) {
						if (a[jj] == 0)
							continue;
						double m = a[jj] * std::pow(tau, ks[jj].k[0]);
						for (int i = 0; i < d; ++i)
							m *= Bx[ks[jj].k[i + 1]][k[i]];
						gh += m;
					}
				// subtract ∫ Q̂ where Q̂ = e - P̂_+ is smooth in τ
				W[f] -= w * (e - pp - btau * gh);
			}
		}
		std::vector<cplx> buf(S_);
		for (std::size_t f = 0; f < S_; ++f)
			buf[f] = W[f] / dt;
		SpatialFft fft(d, g.nx);
		fft.inverse(buf.data());
		double* row = out.slice(j);
		for (std::size_t f = 0; f < S_; ++f)
			row[f] = buf[f].real() * static_cast<double>(S_);
	});
	return out;
}

GridField HeatDecomposition::heat_signal(const Grid &g) const {
	g.validate("kernel");
	double dt = g.dt();
	std::size_t S_ = g.spatial();
	Grid out_g = g;
	out_g.t0 = dt;
	GridField out(out_g);
	std::vector<double> lam(S_);
	for (std::size_t f = 0; f < S_; ++f)
		lam[f] = mode_norm2(g, f);
	SpatialFft fft(g.d, g.nx);
	std::vector<cplx> buf(S_);
	for (std::size_t j = 0; j < g.nt; ++j) {
		double a0 = static_cast<double>(j) * dt, b0 = a0 + dt;
		for (std::size_t f = 0; f < S_; ++f)
			buf[f] = (lam[f] == 0 ? dt : (std::exp(-lam[f] * a0) - std::exp(-lam[f] * b0)) / lam[f]) / dt;
		fft.inverse(buf.data());
		for (std::size_t f = 0; f < S_; ++f)
			out.at(j, f) = buf[f].real() * static_cast<double>(S_);
	}
	return out;
}

GridField HeatDecomposition::apply_plus(const GridField &f) const {
	return restrict_to(convolve(plus_signal(f.g), f), f.g);
}

GridField HeatDecomposition::apply_full(const GridField &f) const {
	return restrict_to(convolve(heat_signal(f.g), f), f.g);
}

GridField HeatDecomposition::apply_minus(const GridField &f) const {
	GridField full = apply_full(f), plus = apply_plus(f);
	for (std::size_t i = 0; i < full.data.size(); ++i)
		full.data[i] -= plus.data[i];
	return full;
}

GridField HeatDecomposition::apply_plus_backward(const GridField &f) const {
	GridField k = plus_signal(f.g);
	GridField rev(k.g);
	rev.g.t0 = -static_cast<double>(k.g.nt) * k.g.dt();
	std::size_t S_ = k.g.spatial();
	for (std::size_t j = 0; j < k.g.nt; ++j)
		for (std::size_t s = 0; s < S_; ++s) {
			// reflect space as well: P_+(-t,-x)
			auto c = spatial_coords(k.g, s);
			for (int i = 0; i < k.g.d; ++i)
				c[i] = -c[i];
			rev.at(k.g.nt - 1 - j, spatial_index(k.g, c)) = k.at(j, s);
		}
	return restrict_to(convolve(rev, f), f.g);
}

HeatDecomposition decompose_heat(int d, int r, double T, int M, const Grid *grid) {
	if (d < 1 || d > 3)
		throw Error(ErrorKind::Validation, "kernel", "d", "spatial dimension must be 1, 2 or 3");
	if (r < 3)
		throw Error(ErrorKind::Validation, "kernel", "r", "annihilation order must be at least 3");
	if (!(T > 0))
		throw Error(ErrorKind::Validation, "kernel", "T", "horizon must be positive");
	if (M < 0)
		throw Error(ErrorKind::Validation, "kernel", "M", "level must be non-negative");
	if (grid && std::ldexp(1.0, -M) < 2 * grid->dx() * (1 - 1e-12))
		throw Error(ErrorKind::Resolution, "kernel", "M", "scale 2^-M is below two grid spacings");
	HeatDecomposition h;
	h.d = d;
	h.r = r;
	h.T = T;
	h.M = M;
	h.ks = multi_indices_upto(d, r);
	std::size_t n = h.ks.size();
	// moments of P χ with χ(z) = ψ(z) - ψ(2·z); odd spatial powers vanish by symmetry
	int pmax = r;
	h.c.assign(n, 0.0);
	for (std::size_t j = 0; j < n; ++j) {
		const auto &k = h.ks[j];
		bool odd = false;
		for (int i = 1; i <= d; ++i)
			odd = odd || (k.k[i] % 2);
		if (odd)
			continue;
		h.c[j] = integrate_time(
		    [&](double t) {
			    double a1 = S(std::sqrt(t)), a2 = S(2 * std::sqrt(t));
			    for (int i = 1; i <= d; ++i) {
				    a1 *= cut_moment(t, k.k[i], 1);
				    a2 *= cut_moment(t, k.k[i], 2);
			    }
			    return std::pow(t, k.k[0]) * (a1 - a2);
		    },
		    0.25);
	}
	(void)pmax;
	// ∫ b z^m for the corrector basis
	auto bt_mom = [](int p) { return integrate([&](double t) { return bt(t) * std::pow(t, p); }, 0, 0.25, 16); };
	auto bx_mom = [](int p) {
		if (p % 2)
			return 0.0;
		return integrate([&](double x) { return bx(x) * std::pow(x, p); }, -0.5, 0.5, 32);
	};
	Eigen::MatrixXd A(n, n);
	Eigen::VectorXd rhs(n);
	for (std::size_t i = 0; i < n; ++i) {
		double lvl = 2.0 + h.ks[i].scaled_degree();
		rhs(i) = -h.c[i] / (1 - std::pow(2.0, -lvl));
		for (std::size_t j = 0; j < n; ++j) {
			double v = bt_mom(h.ks[i].k[0] + h.ks[j].k[0]);
			for (int a = 1; a <= d; ++a)
				v *= bx_mom(h.ks[i].k[a] + h.ks[j].k[a]);
			A(i, j) = v;
		}
	}
	Eigen::VectorXd sol = A.colPivHouseholderQr().solve(rhs);
	h.a.assign(n, 0.0);
	for (std::size_t j = 0; j < n; ++j) {
		bool odd = false;
		for (int i = 1; i <= d; ++i)
			odd = odd || (h.ks[j].k[i] % 2);
		h.a[j] = odd ? 0.0 : sol(j);
	}
	Eigen::VectorXd av(n);
	for (std::size_t j = 0; j < n; ++j)
		av(j) = h.a[j];
	Eigen::VectorXd gk = A * av;
	double res = 0;
	for (std::size_t i = 0; i < n; ++i) {
		double lvl = 2.0 + h.ks[i].scaled_degree();
		res = std::max(res, std::abs(h.c[i] + (1 - std::pow(2.0, -lvl)) * gk(i)));
	}
	h.residual = res / std::abs(h.c[0]);
	return h;
}

double heat_derivative_sup(const HeatDecomposition &h, int m, const MultiIndex &k, int samples) {
	int d = h.d;
	double rt = std::pow(4.0, -m) * 0.25, rx = std::ldexp(0.5, -m);
	double ht = rt * 1e-3, hx = rx * 1e-3;
	std::size_t total = static_cast<std::size_t>(samples);
	for (int i = 0; i < d; ++i)
		total *= static_cast<std::size_t>(samples);
	// nested central differences
	std::function<double(ScaledPoint, int)> deriv = [&](ScaledPoint z, int axis) -> double {
		while (axis <= d && k.k[axis] == 0)
			++axis;
		if (axis > d)
			return h.Pm(m, z);
		// differentiate k.k[axis] times along axis via the binomial stencil
		int order = k.k[axis];
		double step = axis == 0 ? ht : hx;
		double s = 0;
		for (int j = 0; j <= order; ++j) {
			ScaledPoint y = z;
			double off = (0.5 * order - j) * step;
			if (axis == 0)
				y.t += off;
			else
				y.x[axis - 1] += off;
			s += ((j % 2) ? -1.0 : 1.0) * binomial(order, j) * deriv(y, axis + 1);
		}
		return s / std::pow(step, order);
	};
	double best = 0;
	for (std::size_t idx = 0; idx < total; ++idx) {
		std::size_t q = idx;
		ScaledPoint z;
		z.t = rt * (static_cast<double>(q % samples) + 0.5) / samples;
		q /= samples;
		for (int i = 0; i < d; ++i) {
			z.x[i] = rx * (2 * (static_cast<double>(q % samples) + 0.5) / samples - 1);
			q /= samples;
		}
		best = std::max(best, std::abs(deriv(z, 0)));
	}
	return best;
}

// ---------------------------------------------------------------------------

double cardinal_bspline(int order, double x, int deriv) {
	if (deriv > order - 2 || deriv < 0)
		throw Error(ErrorKind::Validation, "kernel", "deriv", "derivative order exceeds the spline smoothness");
	double half = 0.5 * order;
	if (std::abs(x) >= half)
		return 0;
	double sign = (x > 0 && deriv % 2) ? -1.0 : 1.0;
	double y = -std::abs(x);
	int p = order - 1 - deriv;
	double s = 0;
	for (int k = 0; k <= order; ++k) {
		double u = y + half - k;
		if (u <= 0)
			break;
		s += ((k % 2) ? -1.0 : 1.0) * binomial(order, k) * std::pow(u, p);
	}
	return sign * s / factorial(p);
}

namespace {

double sinc(double y) { return std::abs(y) < 1e-8 ? 1 - y * y / 6 : std::sin(y) / y; }

} // namespace

Mother bspline_mother() {
	Mother m;
	m.name = "bspline8";
	m.ft = [](double t, int j) { return 16 * std::pow(16.0, j) * cardinal_bspline(8, 16 * t, j); };
	m.fx = [](double x, int j) { return 8 * std::pow(8.0, j) * cardinal_bspline(8, 8 * x, j); };
	m.ft_hat = [](double w) { return std::pow(sinc(w / 32), 8); };
	m.fx_hat = [](double w) { return std::pow(sinc(w / 16), 8); };
	m.rt = 0.25;
	m.rx = 0.5;
	return m;
}

double Mother::mass(int d) const {
	double It = integrate([&](double t) { return ft(t, 0); }, -rt, rt, 32);
	double Ix = integrate([&](double x) { return fx(x, 0); }, -rx, rx, 32);
	return It * std::pow(Ix, d);
}

double Mother::operator()(const ScaledPoint &z, int d) const {
	if (std::abs(z.t) >= rt)
		return 0;
	double v = ft(z.t, 0);
	for (int i = 0; i < d && v != 0; ++i) {
		if (std::abs(z.x[i]) >= rx)
			return 0;
		v *= fx(z.x[i], 0);
	}
	return v;
}

double Mother::hat(double w0, const std::array<double, 3> &w, int d) const {
	double v = ft_hat(w0);
	for (int i = 0; i < d; ++i)
		v *= fx_hat(w[i]);
	return v;
}

double KernelFamily::cm(int m) const {
	if (m < 0 || m > N())
		return 0;
	return alpha[m] - (m + 1 <= N() ? alpha[m + 1] : 0.0);
}

double KernelFamily::R_hat_truncated(double w0, const std::array<double, 3> &w) const {
	double s = 0;
	for (int m = 0; m <= N(); ++m) {
		double c = cm(m);
		if (c == 0)
			continue;
		double sc = std::ldexp(1.0, -m);
		s += c * mother.hat(w0 * sc * sc, {w[0] * sc, w[1] * sc, w[2] * sc}, d);
	}
	return s;
}

double KernelFamily::R_hat(double w0, const std::array<double, 3> &w) const {
	return exact_white ? 1.0 : R_hat_truncated(w0, w);
}

namespace {

double rho_level(const Mother &m, int lvl, const ScaledPoint &z, int d) {
	double s = std::ldexp(1.0, lvl);
	return std::pow(s, 2 + d) * m(dilate(z, s), d);
}

} // namespace

double KernelFamily::level(int n, const ScaledPoint &z) const {
	if (n < 0 || n > N())
		return 0;
	if (n == 0)
		return alpha[0] * rho_level(mother, 0, z, d);
	return alpha[n] * (rho_level(mother, n, z, d) - rho_level(mother, n - 1, z, d));
}

double KernelFamily::R(const ScaledPoint &z) const {
	double s = 0;
	for (int m = 0; m <= N(); ++m)
		if (cm(m) != 0)
			s += cm(m) * rho_level(mother, m, z, d);
	return s;
}

bool KernelFamily::zero() const {
	if (exact_white)
		return false;
	return std::all_of(alpha.begin(), alpha.end(), [](double a) { return a == 0; });
}

int KernelFamily::finest_active() const {
	for (int m = N(); m >= 0; --m)
		if (cm(m) != 0)
			return m;
	return -1;
}

void KernelFamily::check_grid(const Grid &g) const {
	if (g.d != d)
		throw Error(ErrorKind::Validation, "kernel", "d", "grid dimension differs from the kernel family");
	if (exact_white)
		return;
	int m = finest_active();
	if (m < 0)
		return;
	if (std::ldexp(1.0, -m) < 2 * g.dx() * (1 - 1e-12))
		throw Error(ErrorKind::Resolution, "kernel", "N",
		            "finest active level 2^-" + std::to_string(m) + " is below two grid spacings");
}

GridField KernelFamily::sample(const Grid &g) const {
	check_grid(g);
	double dt = g.dt(), dx = g.dx();
	Grid kg = g;
	if (exact_white || zero()) {
		kg.nt = 1;
		kg.T = dt;
		kg.t0 = 0;
		GridField out(kg);
		if (exact_white)
			out.data[0] = 1.0 / g.cell_volume();
		return out;
	}
	double reach = 0;
	for (int m = 0; m <= N(); ++m)
		if (cm(m) != 0)
			reach = std::max(reach, mother.rt * std::pow(4.0, -m));
	long J = static_cast<long>(std::floor(reach / dt));
	kg.nt = static_cast<std::size_t>(2 * J + 1);
	kg.T = static_cast<double>(kg.nt) * dt;
	kg.t0 = -static_cast<double>(J) * dt;
	GridField out(kg);
	std::size_t n = g.nx;
	std::size_t S_ = g.spatial();
	for (int m = 0; m <= N(); ++m) {
		double c = cm(m);
		if (c == 0)
			continue;
		double s = std::ldexp(1.0, m);
		std::vector<double> tx(n, 0.0);
		for (std::size_t i = 0; i < n; ++i) {
			double x = static_cast<double>(i) * dx;
			x -= std::round(x);
			for (int img = -1; img <= 1; ++img) {
				double y = (x - img) * s;
				if (std::abs(y) < mother.rx)
					tx[i] += s * mother.fx(y, 0);
			}
		}
		for (long j = -J; j <= J; ++j) {
			double t = static_cast<double>(j) * dt * s * s;
			if (std::abs(t) >= mother.rt)
				continue;
			double vt = c * s * s * mother.ft(t, 0);
			double *row = out.slice(static_cast<std::size_t>(j + J));
			for (std::size_t f = 0; f < S_; ++f) {
				auto cc = spatial_coords(g, f);
				double v = vt;
				for (int i = 0; i < d; ++i)
					v *= tx[static_cast<std::size_t>(cc[i])];
				row[f] += v;
			}
		}
	}
	return out;
}

KernelFamily build_R_family(const Mother &rho, const std::vector<double> &alpha, int d, double beta,
                            const std::string &name) {
	if (d < 1 || d > 3)
		throw Error(ErrorKind::Validation, "kernel", "d", "spatial dimension must be 1, 2 or 3");
	if (alpha.empty())
		throw Error(ErrorKind::Validation, "kernel", "alpha", "coefficient sequence is empty");
	for (double a : alpha)
		if (!std::isfinite(a))
			throw Error(ErrorKind::Validation, "kernel", "alpha", "coefficients must be finite");
	double mass = rho.mass(d);
	if (std::abs(mass - 1) > 1e-8)
		throw Error(ErrorKind::Validation, "kernel", "rho", "mother mass is " + std::to_string(mass) + ", expected 1");
	KernelFamily f;
	f.d = d;
	f.mother = rho;
	f.alpha = alpha;
	f.beta = beta;
	f.name = name;
	f.C = 2 * rho.support();
	return f;
}

KernelFamily white_family(int d, int N, bool exact) {
	auto f = build_R_family(bspline_mother(), std::vector<double>(N + 1, 1.0), d, 0, exact ? "white" : "white-trunc");
	f.exact_white = exact;
	return f;
}

KernelFamily power_family(int d, int N, double beta) {
	std::vector<double> a(N + 1);
	for (int n = 0; n <= N; ++n)
		a[n] = std::pow(2.0, -n * beta);
	return build_R_family(bspline_mother(), a, d, beta, "power");
}

KernelFamily smooth_family(int d) { return build_R_family(bspline_mother(), {1.0}, d, 0, "smooth"); }

KernelFamily zero_family(int d, int N) {
	return build_R_family(bspline_mother(), std::vector<double>(N + 1, 0.0), d, 0, "zero");
}

// ---------------------------------------------------------------------------

double ideal_cutoff_time(double w0) { return smooth_step(std::abs(w0), 1, 4); }
double ideal_cutoff_space(double w) { return smooth_step(std::abs(w), 1, 2); }

namespace {

double defect_from(const std::function<double(double)> &h, double beta) {
	auto eta = [&](double w) { return h(w) - h(2 * w); };
	double s = std::abs(eta(1));
	for (int n = -40; n <= 40; ++n) {
		if (n == 0)
			continue;
		s -= std::pow(2.0, -n * beta) * std::abs(eta(std::ldexp(1.0, -n)));
	}
	return s;
}

} // namespace

double ideal_defect(double beta) { return defect_from(ideal_cutoff_space, beta); }

MotherConstruction construct_mother(double delta, double beta, int d) {
	if (!(delta > 0) || delta > 1)
		throw Error(ErrorKind::Validation, "kernel", "delta", "truncation scale must lie in (0,1]");
	// inverse transforms of the dyadic cutoffs
	auto inv = [](const std::function<double(double)> &c, double W) {
		auto q = gauss_legendre(0, W, 32);
		return [q, c](double u) {
			double s = 0;
			for (std::size_t i = 0; i < q.x.size(); ++i)
				s += q.w[i] * c(q.x[i]) * std::cos(q.x[i] * u);
			return s / M_PI;
		};
	};
	auto r0t = inv(ideal_cutoff_time, 4);
	auto r0x = inv(ideal_cutoff_space, 2);
	double L = 1 / delta;
	// beyond wc the transform is below e^{-60} relative, and the quadrature resolves cos(wu) up to wc
	double wc = 4 + 2000 * delta;
	int panels = 8 + static_cast<int>(std::ceil(L * (wc + 8) / 4));
	auto qu = gauss_legendre(0, L, panels);
	std::vector<double> vt(qu.x.size()), vx(qu.x.size());
	for (std::size_t i = 0; i < qu.x.size(); ++i) {
		double phi = bump(delta * qu.x[i]);
		vt[i] = r0t(qu.x[i]) * phi;
		vx[i] = r0x(qu.x[i]) * phi;
	}
	auto transform = [qu, wc](const std::vector<double> &v) {
		return [qu, v, wc](double w) {
			if (std::abs(w) > wc)
				return 0.0;
			double s = 0;
			for (std::size_t i = 0; i < qu.x.size(); ++i)
				s += qu.w[i] * v[i] * std::cos(w * qu.x[i]);
			return 2 * s;
		};
	};
	auto ft = transform(vt), fx = transform(vx);
	double nt = ft(0), nx = fx(0);
	MotherConstruction out;
	out.delta = delta;
	out.beta = beta;
	out.ft_hat = [ft, nt](double w) { return ft(w) / nt; };
	out.fx_hat = [fx, nx](double w) { return fx(w) / nx; };
	out.eta_hat_xi0 = out.fx_hat(1) - out.fx_hat(2);
	out.defect = defect_from(out.fx_hat, beta);
	Mother m;
	m.name = "constructed";
	m.rt = L;
	m.rx = L;
	m.ft = [r0t, delta, nt](double u, int j) {
		if (j != 0)
			throw Error(ErrorKind::Unsupported, "kernel", "deriv", "constructed mother has no closed-form derivatives");
		return r0t(u) * bump(delta * u) / nt;
	};
	m.fx = [r0x, delta, nx](double u, int j) {
		if (j != 0)
			throw Error(ErrorKind::Unsupported, "kernel", "deriv", "constructed mother has no closed-form derivatives");
		return r0x(u) * bump(delta * u) / nx;
	};
	m.ft_hat = out.ft_hat;
	m.fx_hat = out.fx_hat;
	out.mother = m;
	if (!(out.defect > 0))
		throw Error(ErrorKind::Numerical, "kernel", "delta",
		            "defect " + std::to_string(out.defect) + " is not positive; retry with a smaller delta");
	(void)d;
	return out;
}

// ---------------------------------------------------------------------------

AssumptionReport check_assumption_R(const KernelFamily &f, int k_max) {
	AssumptionReport rep;
	int d = f.d;
	const double s_abs = 2.0 + d;
	const int nodes = d == 3 ? 33 : (d == 2 ? 49 : 129);
	// relative lattice on the support of η: |u_t| ≤ 1, |u_x| ≤ 1
	std::vector<double> u(nodes);
	for (int i = 0; i < nodes; ++i)
		u[i] = -1 + 2.0 * i / (nodes - 1);
	auto ks = multi_indices_upto(d, k_max);
	std::vector<double> axis_mass_t(2), axis_mass_x(2);
	for (const auto &k : ks) {
		bool ok_k = true;
		for (int a = 0; a <= d; ++a)
			ok_k = ok_k && k.k[a] <= 6;
		if (!ok_k)
			continue;
		// tables: level-n piece (ρ(u)) and level-(n-1) piece (2^{-|s|} ρ(u/2)) in relative coordinates
		std::vector<std::vector<double>> T1(d + 1, std::vector<double>(nodes)), T2 = T1;
		for (int a = 0; a <= d; ++a)
			for (int i = 0; i < nodes; ++i) {
				double x = a == 0 ? u[i] : u[i];
				const auto &fn = a == 0 ? f.mother.ft : f.mother.fx;
				double r = a == 0 ? f.mother.rt : f.mother.rx;
				double sc = a == 0 ? 4.0 : 2.0;
				// time coordinates live on [-1,1] for η while ρ has half-width rt
				double xt = a == 0 ? x * f.mother.rt * 4 : x * f.mother.rx * 2;
				T1[a][i] = std::abs(xt) < r ? fn(xt, k.k[a]) : 0.0;
				T2[a][i] = std::abs(xt / sc) < r ? fn(xt / sc, k.k[a]) * std::pow(sc, -k.k[a]) / sc : 0.0;
			}
		// sup of |∂^k ρ| and |∂^k η| on the lattice, plus the support radius of η
		std::size_t total = 1;
		for (int a = 0; a <= d; ++a)
			total *= static_cast<std::size_t>(nodes);
		double sup_rho = 0, sup_eta = 0, rad = 0;
		std::vector<double> etav(total);
		for (std::size_t idx = 0; idx < total; ++idx) {
			std::size_t q = idx;
			double p1v = 1, p2v = 1;
			for (int a = 0; a <= d; ++a) {
				std::size_t i = q % nodes;
				q /= nodes;
				p1v *= T1[a][i];
				p2v *= T2[a][i];
			}
			sup_rho = std::max(sup_rho, std::abs(p1v));
			etav[idx] = p1v - p2v;
			sup_eta = std::max(sup_eta, std::abs(etav[idx]));
		}
		for (std::size_t idx = 0; idx < total; ++idx) {
			if (std::abs(etav[idx]) <= 1e-12 * sup_eta)
				continue;
			std::size_t q = idx;
			double ut = u[q % nodes] * f.mother.rt * 4;
			q /= nodes;
			double r = std::sqrt(std::abs(ut));
			for (int a = 1; a <= d; ++a) {
				r = std::max(r, std::abs(u[q % nodes] * f.mother.rx * 2));
				q /= nodes;
			}
			rad = std::max(rad, r);
		}
		double kdeg = k.scaled_degree();
		double expected = s_abs + kdeg - f.beta;
		std::vector<double> xs, ys;
		std::vector<AssumptionRow> rows;
		for (int n = 0; n <= f.N(); ++n) {
			AssumptionRow row;
			row.n = n;
			row.k = k;
			double scale = std::pow(2.0, n * (s_abs + kdeg));
			if (n == 0) {
				row.sup_norm = std::abs(f.alpha[0]) * sup_rho;
				row.support_radius = f.mother.support();
			} else {
				row.sup_norm = std::abs(f.alpha[n]) * scale * sup_eta;
				row.support_radius = std::ldexp(rad, -n);
			}
			if (k == MultiIndex{}) {
				double I1 = integrate([&](double t) { return f.mother.ft(t, 0); }, -f.mother.rt, f.mother.rt, 32);
				double X1 = integrate([&](double x) { return f.mother.fx(x, 0); }, -f.mother.rx, f.mother.rx, 32);
				double I2 = integrate([&](double t) { return f.mother.ft(t / 4, 0) / 4; }, -4 * f.mother.rt,
				                      4 * f.mother.rt, 32);
				double X2 = integrate([&](double x) { return f.mother.fx(x / 2, 0) / 2; }, -2 * f.mother.rx,
				                      2 * f.mother.rx, 32);
				double m1 = I1 * std::pow(X1, d), m2 = I2 * std::pow(X2, d);
				row.moment = n == 0 ? f.alpha[0] * m1 : f.alpha[n] * (m1 - m2);
				if (n >= 1 && std::abs(row.moment) > 1e-8 * std::max(1.0, std::abs(f.alpha[n])))
					rep.moments_ok = false;
			}
			if (row.support_radius > f.C * std::ldexp(1.0, -n) * (1 + 1e-9))
				rep.support_ok = false;
			if (n >= 1 && row.sup_norm > 0) {
				xs.push_back(n);
				ys.push_back(std::log2(row.sup_norm));
			}
			row.expected_exponent = expected;
			rows.push_back(row);
		}
		double fitted = xs.size() >= 2 ? fit_slope(xs, ys) : 0.0;
		bool pass = fitted <= expected + 0.1;
		if (!pass)
			rep.derivatives_ok = false;
		for (auto &row : rows) {
			row.fitted_exponent = fitted;
			row.pass = pass && rep.support_ok;
			rep.rows.push_back(row);
		}
		(void)axis_mass_t;
		(void)axis_mass_x;
	}
	// sup |R̂| on a tensor frequency window of scaled radius 2^{N+2}
	double Wr = std::ldexp(1.0, f.N() + 2);
	rep.frequency_window = Wr;
	const int fn = d == 3 ? 41 : 129;
	std::vector<double> w0(fn), wx(fn);
	for (int i = 0; i < fn; ++i) {
		double s = -1 + 2.0 * i / (fn - 1);
		w0[i] = s * Wr * Wr;
		wx[i] = 2 * M_PI * std::round(s * Wr / (2 * M_PI));
	}
	if (f.exact_white) {
		rep.sup_R_hat = 1;
	} else {
		std::vector<std::vector<double>> tab0(f.N() + 1, std::vector<double>(fn)), tabx = tab0;
		for (int m = 0; m <= f.N(); ++m) {
			double sc = std::ldexp(1.0, -m);
			for (int i = 0; i < fn; ++i) {
				tab0[m][i] = f.mother.ft_hat(w0[i] * sc * sc);
				tabx[m][i] = f.mother.fx_hat(wx[i] * sc);
			}
		}
		std::size_t total = static_cast<std::size_t>(fn);
		for (int a = 0; a < d; ++a)
			total *= static_cast<std::size_t>(fn);
		double best = 0;
		std::size_t tiny = 0;
		for (std::size_t idx = 0; idx < total; ++idx) {
			double s = 0;
			for (int m = 0; m <= f.N(); ++m) {
				double c = f.cm(m);
				if (c == 0)
					continue;
				std::size_t q = idx;
				double v = c * tab0[m][q % fn];
				q /= fn;
				for (int a = 0; a < d; ++a) {
					v *= tabx[m][q % fn];
					q /= fn;
				}
				s += v;
			}
			best = std::max(best, std::abs(s));
			if (std::abs(s) < 1e-300)
				++tiny;
		}
		rep.sup_R_hat = best;
		rep.vanishes_on_window = best == 0 || tiny > 0;
	}
	rep.bounded = std::isfinite(rep.sup_R_hat);
	return rep;
}

RoughnessReport roughness_score(const KernelFamily &f, double C, int n_min, int n_max, std::size_t samples,
                                std::uint64_t seed) {
	if (C < 1)
		throw Error(ErrorKind::Validation, "kernel", "C", "annulus constant must be at least 1");
	if (n_min < 0 || n_max < n_min)
		throw Error(ErrorKind::Validation, "kernel", "n_range", "empty or negative level range");
	if (!f.exact_white && f.N() < n_max + static_cast<int>(std::ceil(std::log2(C))))
		throw Error(ErrorKind::Resolution, "kernel", "n_range",
		            "family truncated at N=" + std::to_string(f.N()) + " does not cover C 2^n_max");
	RoughnessReport rep;
	int d = f.d;
	double s_abs = 2.0 + d;
	std::mt19937_64 rng(seed);
	auto in_annulus = [&](double w0, const std::array<double, 3> &w, double lo, double hi) {
		double r = std::sqrt(std::abs(w0));
		for (int i = 0; i < d; ++i)
			r = std::max(r, std::abs(w[i]));
		return r >= lo && r <= hi;
	};
	for (int n = n_min; n <= n_max; ++n) {
		double lo = std::ldexp(1.0, n) / C, hi = C * std::ldexp(1.0, n);
		long K = static_cast<long>(std::floor(hi / (2 * M_PI)));
		std::uniform_real_distribution<double> U0(-hi * hi, hi * hi);
		std::uniform_int_distribution<long> UK(-K, K);
		double best = 0, acc = 0;
		std::size_t hits = 0;
		for (std::size_t s = 0; s < samples; ++s) {
			double a0 = U0(rng), b0 = U0(rng);
			std::array<double, 3> a{0, 0, 0}, b{0, 0, 0}, c{0, 0, 0};
			for (int i = 0; i < d; ++i) {
				a[i] = 2 * M_PI * static_cast<double>(UK(rng));
				b[i] = 2 * M_PI * static_cast<double>(UK(rng));
				c[i] = a[i] + b[i];
			}
			if (!in_annulus(a0, a, lo, hi) || !in_annulus(b0, b, lo, hi) || !in_annulus(a0 + b0, c, lo, hi))
				continue;
			double v = std::abs(f.R_hat(a0, a) * f.R_hat(b0, b) * f.R_hat(a0 + b0, c));
			best = std::max(best, v);
			acc += v * v;
			++hits;
		}
		double box = std::pow(2 * hi * hi, 2) * std::pow(2.0 * K + 1, 2 * d) / (4 * M_PI * M_PI);
		double integral = samples ? box * acc / static_cast<double>(samples) : 0;
		rep.n.push_back(n);
		rep.S.push_back(std::pow(2.0, 3 * n * f.beta) * best);
		rep.S2.push_back(std::pow(2.0, 2 * n * (3 * f.beta - s_abs)) * integral);
		rep.pairs.push_back(hits);
	}
	rep.liminf_S = *std::min_element(rep.S.begin(), rep.S.end());
	std::size_t m = rep.S.size();
	if (m >= 3 && rep.S[m - 1] < rep.S[m - 2] && rep.S[m - 2] < rep.S[m - 3])
		rep.monotone_tail_warning = true;
	rep.satisfied = f.beta < 0.5 && rep.liminf_S > 1e-12;
	return rep;
}

} // namespace phi4
