#include "phi4/pde.hpp"

#include <algorithm>
#include <cmath>

namespace phi4 {

void SolverSettings::validate(const Grid &g) const {
	if (!(guard > 0))
		throw Error(ErrorKind::Validation, "pde", "guard", "blow-up threshold must be positive");
	if (integrator == Integrator::ExplicitEuler) {
		double lam = g.d * M_PI * M_PI * static_cast<double>(g.nx * g.nx);
		if (g.dt() * lam > 2)
			throw Error(ErrorKind::Validation, "pde", "dt", "explicit Euler needs dt |2πk|²_max ≤ 2");
	}
}

namespace {

struct Stepper {
	const Grid &g;
	std::vector<double> E, Phi;
	SpatialFft fft;
	std::size_t S;
	Stepper(const Grid &grid, const SolverSettings &s) : g(grid), fft(grid.d, grid.nx), S(grid.spatial()) {
		s.validate(grid);
		E.resize(S);
		Phi.resize(S);
		double dt = g.dt();
		for (std::size_t k = 0; k < S; ++k) {
			double lam = mode_norm2(g, k);
			if (s.integrator == Integrator::ExplicitEuler) {
				E[k] = 1 - dt * lam;
				Phi[k] = dt;
			} else {
				E[k] = std::exp(-lam * dt);
				Phi[k] = lam == 0 ? dt : -std::expm1(-lam * dt) / lam;
			}
		}
	}
	// out = E a + Φ b
	void step(const double *a, const double *b, double *out) const {
		std::vector<cplx> ca(a, a + S), cb(b, b + S);
		fft.forward(ca.data());
		fft.forward(cb.data());
		for (std::size_t k = 0; k < S; ++k)
			ca[k] = E[k] * ca[k] + Phi[k] * cb[k];
		fft.inverse(ca.data());
		for (std::size_t k = 0; k < S; ++k)
			out[k] = ca[k].real();
	}
};

void same_grid(const Grid &a, const Grid &b, const char *param) {
	if (!(a == b))
		throw Error(ErrorKind::Validation, "pde", param, "fields must share one grid");
}

} // namespace

SolutionBundle solve_shifted(const std::vector<double> &u0, const GridField &xi, const GridField &h, double C,
                             const SolverSettings &s) {
	const Grid &g = xi.g;
	g.validate("pde");
	if (!h.data.empty())
		same_grid(g, h.g, "h");
	std::size_t S = g.spatial();
	if (u0.size() != S)
		throw Error(ErrorKind::Validation, "pde", "u0", "initial condition size differs from the spatial grid");
	Stepper st(g, s);
	SolutionBundle b;
	b.C = C;
	b.u = GridField(g);
	std::copy(u0.begin(), u0.end(), b.u.slice(0));
	std::vector<double> src(S);
	for (std::size_t n = 0; n + 1 < g.nt; ++n) {
		const double *u = b.u.slice(n);
		for (std::size_t k = 0; k < S; ++k) {
			double nl = C * u[k] + xi.at(n, k);
			if (s.cubic)
				nl -= u[k] * u[k] * u[k];
			if (!h.data.empty())
				nl += h.at(n, k);
			src[k] = nl;
		}
		double *next = b.u.slice(n + 1);
		st.step(u, src.data(), next);
		double m = 0;
		for (std::size_t k = 0; k < S; ++k) {
			if (!std::isfinite(next[k]))
				throw Error(ErrorKind::Numerical, "pde", "step",
				            "non-finite value at step " + std::to_string(n + 1) + " (t=" + std::to_string(g.time(n + 1)) + ")");
			m = std::max(m, std::abs(next[k]));
		}
		if (m > s.guard) {
			b.exploded = true;
			b.blowup_time = g.time(n + 1);
			break;
		}
	}
	return b;
}

SolutionBundle solve_forward(const std::vector<double> &u0, const GridField &xi, double C, const SolverSettings &s) {
	return solve_shifted(u0, xi, GridField(), C, s);
}

GridField solve_tangent(const GridField &u, const GridField &h, double C, const SolverSettings &s) {
	const Grid &g = u.g;
	same_grid(g, h.g, "h");
	Stepper st(g, s);
	std::size_t S = g.spatial();
	GridField v(g);
	std::vector<double> src(S);
	for (std::size_t n = 0; n + 1 < g.nt; ++n) {
		const double *vn = v.slice(n), *un = u.slice(n);
		for (std::size_t k = 0; k < S; ++k) {
			double D = s.cubic ? C - 3 * un[k] * un[k] : C;
			src[k] = D * vn[k] + h.at(n, k);
		}
		st.step(vn, src.data(), v.slice(n + 1));
	}
	return v;
}

namespace {

void check_dual_support(const GridField &phi) {
	std::size_t S = phi.g.spatial(), last = phi.g.nt - 1;
	for (std::size_t k = 0; k < S; ++k)
		if (phi.at(0, k) != 0 || phi.at(last, k) != 0)
			throw Error(ErrorKind::Precondition, "pde", "phi", "test function support must lie strictly inside (0,T)");
}

GridField dual_march(const GridField &u, const GridField &phi, double C, const SolverSettings &s, bool naive) {
	const Grid &g = u.g;
	same_grid(g, phi.g, "phi");
	check_dual_support(phi);
	Stepper st(g, s);
	std::size_t S = g.spatial();
	GridField w(g);
	std::vector<double> src(S);
	for (std::size_t j = g.nt - 1; j-- > 0;) {
		std::size_t c = naive ? j : j + 1;
		const double *wn = w.slice(j + 1), *uc = u.slice(c);
		for (std::size_t k = 0; k < S; ++k) {
			double D = s.cubic ? C - 3 * uc[k] * uc[k] : C;
			src[k] = D * wn[k] + phi.at(c, k);
		}
		st.step(wn, src.data(), w.slice(j));
	}
	return w;
}

} // namespace

GridField solve_dual(const GridField &u, const GridField &phi, double C, const SolverSettings &s) {
	return dual_march(u, phi, C, s, false);
}

GridField solve_dual_naive(const GridField &u, const GridField &phi, double C, const SolverSettings &s) {
	return dual_march(u, phi, C, s, true);
}

double duality_residual(const GridField &v, const GridField &phi, const GridField &h, const GridField &w) {
	same_grid(v.g, phi.g, "phi");
	same_grid(v.g, h.g, "h");
	same_grid(v.g, w.g, "w");
	double a = inner(v, phi), b = inner(h, w);
	double scale = std::max({std::abs(a), l2_norm(h) * l2_norm(w), std::numeric_limits<double>::epsilon()});
	return std::abs(a - b) / scale;
}

std::vector<GateauxRow> gateaux_check(const std::vector<double> &u0, const GridField &xi, const GridField &h, double C,
                                      const std::vector<double> &deltas, const SolverSettings &s) {
	SolutionBundle base = solve_forward(u0, xi, C, s);
	if (base.exploded)
		throw Error(ErrorKind::Numerical, "pde", "u", "unshifted solution exploded");
	GridField v = solve_tangent(base.u, h, C, s);
	std::vector<GateauxRow> rows;
	for (double d : deltas) {
		GateauxRow r;
		r.delta = d;
		GridField dh = h;
		for (double &x : dh.data)
			x *= d;
		SolutionBundle sh = solve_shifted(u0, xi, dh, C, s);
		if (sh.exploded) {
			r.exploded = true;
			rows.push_back(r);
			continue;
		}
		GridField diff(xi.g);
		for (std::size_t i = 0; i < diff.data.size(); ++i)
			diff.data[i] = (sh.u.data[i] - base.u.data[i]) / d - v.data[i];
		r.error = l2_norm(diff);
		r.ratio = r.error / d;
		rows.push_back(r);
	}
	return rows;
}

GramResult gram_matrix(const std::vector<GridField> &phis, const GridField &u, double C, const KernelFamily &f,
                       const SolverSettings &s) {
	std::size_t n = phis.size();
	if (n == 0 || n > 16)
		throw Error(ErrorKind::Validation, "pde", "phis", "between 1 and 16 test functions are supported");
	std::vector<GridField> ws(n);
	for (std::size_t i = 0; i < n; ++i) {
		ws[i] = solve_dual(u, phis[i], C, s);
		if (!f.exact_white)
			ws[i] = apply_R(f, ws[i]);
	}
	GramResult r;
	r.M.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
	Eigen::MatrixXd P(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
	for (std::size_t i = 0; i < n; ++i)
		for (std::size_t j = 0; j <= i; ++j) {
			auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
			r.M(a, b) = r.M(b, a) = inner(ws[i], ws[j]);
			P(a, b) = P(b, a) = inner(phis[i], phis[j]);
		}
	Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.M, Eigen::EigenvaluesOnly);
	r.lambda_min = es.eigenvalues()(0);
	r.trace = r.M.trace();
	Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(P, Eigen::EigenvaluesOnly);
	r.dependent_inputs = ep.eigenvalues()(0) <= 1e-12 * P.trace();
	return r;
}

std::vector<double> random_initial(const Grid &g, std::uint64_t seed, int kmax, double amp, double mean) {
	std::size_t S = g.spatial();
	std::vector<double> u(S, mean);
	int d = g.d;
	int side = 2 * kmax + 1;
	int modes = 1;
	for (int i = 0; i < d; ++i)
		modes *= side;
	double norm = amp / std::sqrt(static_cast<double>(modes));
	for (int m = 0; m < modes; ++m) {
		std::array<int, 3> k{0, 0, 0};
		int q = m;
		for (int i = 0; i < d; ++i) {
			k[i] = q % side - kmax;
			q /= side;
		}
		double a = cell_normal(seed, -1, static_cast<std::size_t>(2 * m));
		double b = cell_normal(seed, -1, static_cast<std::size_t>(2 * m + 1));
		for (std::size_t f = 0; f < S; ++f) {
			auto c = spatial_coords(g, f);
			double ph = 0;
			for (int i = 0; i < d; ++i)
				ph += 2 * M_PI * k[i] * static_cast<double>(c[i]) * g.dx();
			u[f] += norm * (a * std::cos(ph) + b * std::sin(ph));
		}
	}
	return u;
}

GridField aggregate(const GridField &fine, const Grid &coarse) {
	const Grid &f = fine.g;
	if (f.d != coarse.d || f.nx % coarse.nx || f.nt % coarse.nt || std::abs(f.T - coarse.T) > 1e-12 ||
	    std::abs(f.t0 - coarse.t0) > 1e-12)
		throw Error(ErrorKind::Validation, "pde", "grid", "coarse grid must divide the fine grid");
	std::size_t rx = f.nx / coarse.nx, rt = f.nt / coarse.nt;
	GridField out(coarse);
	std::size_t Sf = f.spatial();
	double cnt = static_cast<double>(rt) * std::pow(static_cast<double>(rx), f.d);
	for (std::size_t it = 0; it < f.nt; ++it)
		for (std::size_t s = 0; s < Sf; ++s) {
			auto c = spatial_coords(f, s);
			for (int i = 0; i < f.d; ++i)
				c[i] /= static_cast<long>(rx);
			out.at(it / rt, spatial_index(coarse, c)) += fine.at(it, s) / cnt;
		}
	return out;
}

} // namespace phi4
