#include "phi4/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace phi4 {

namespace {

GridField reflect(const GridField &k) {
	GridField r(k.g);
	std::size_t nt = k.g.nt, S = k.g.spatial();
	r.g.t0 = -(k.g.t0 + static_cast<double>(nt - 1) * k.g.dt());
	for (std::size_t j = 0; j < nt; ++j)
		for (std::size_t s = 0; s < S; ++s) {
			auto c = spatial_coords(k.g, s);
			for (int i = 0; i < k.g.d; ++i)
				c[i] = -c[i];
			r.at(nt - 1 - j, spatial_index(k.g, c)) = k.at(j, s);
		}
	return r;
}

long lag_index(const GridField &f, double t) { return std::lround((t - f.g.t0) / f.g.dt()); }

} // namespace

GridField smoothed_kernel(const KernelFamily &f, double eps, const Mother &rho, const HeatDecomposition &heat,
                          const Grid &g) {
	f.check_grid(g);
	GridField K = heat.plus_signal(g);
	if (!f.exact_white)
		K = convolve(f.sample(g), K);
	if (eps > 0)
		K = convolve(mollifier_signal(g, eps, rho), K);
	return K;
}

RenormConstants renorm_constants(const KernelFamily &f, double eps, const Mother &rho, const HeatDecomposition &heat,
                                 const Grid &g) {
	g.validate("model");
	RenormConstants rc;
	if (f.zero())
		return rc;
	GridField K = smoothed_kernel(f, eps, rho, heat, g);
	GridField P = heat.plus_signal(g);
	double w = g.cell_volume();
	double ss = 0;
	for (double v : K.data)
		ss += v * v;
	rc.C1 = w * ss;
	if (rc.C1 == 0)
		return rc;
	// G(z) = ∫ K(u) K(u+z) du as a centered field
	GridField G = convolve(reflect(K), K);
	std::size_t S = g.spatial();
	double c2 = 0, c3 = 0;
	for (std::size_t j = 0; j < P.g.nt; ++j) {
		double t = P.g.time(j);
		long ip = lag_index(G, t), im = lag_index(G, -t);
		if (ip < 0 || ip >= static_cast<long>(G.g.nt) || im < 0 || im >= static_cast<long>(G.g.nt))
			continue;
		for (std::size_t s = 0; s < S; ++s) {
			auto c = spatial_coords(g, s);
			for (int i = 0; i < g.d; ++i)
				c[i] = -c[i];
			double gp = G.at(static_cast<std::size_t>(ip), s);
			double gm = G.at(static_cast<std::size_t>(im), spatial_index(g, c));
			c2 += P.at(j, s) * gp * gp;
			c3 += P.at(j, s) * gm * gm;
		}
	}
	rc.C2 = w * c2;
	rc.C3 = w * c3;
	rc.rel_diff = rc.C2 != 0 ? std::abs(rc.C2 - rc.C3) / std::abs(rc.C2) : 0;
	rc.truncation_loss = 0; // the convolutions are linear over the full causal support
	return rc;
}

// ---------------------------------------------------------------------------

ModelContext::ModelContext(GridField xi, HeatDecomposition heat, Structure structure, RenormMap M)
    : xi_(std::move(xi)), heat_(std::move(heat)), structure_(std::move(structure)), M_(M) {
	if (xi_.g.d != heat_.d || xi_.g.d != structure_.p.d)
		throw Error(ErrorKind::Validation, "model", "d", "noise, heat kernel and structure disagree on d");
}

std::size_t ModelContext::nearest_time(double t) const {
	long i = std::lround((t - xi_.g.t0) / xi_.g.dt());
	if (i < 0 || i >= static_cast<long>(xi_.g.nt))
		throw Error(ErrorKind::Validation, "model", "z", "base point outside the time window");
	return static_cast<std::size_t>(i);
}

bool ModelContext::z_free(const Tree &t) const {
	switch (t.kind()) {
	case Kind::Poly:
		return t.is_one();
	case Kind::Noise:
		return true;
	case Kind::Prod:
		for (const auto &f : t.factors())
			if (!z_free(f))
				return false;
		return true;
	case Kind::I:
	case Kind::It:
		return z_free(t.child()) && structure_.hom(t.child()) + 2 <= 0;
	}
	return false;
}

double ModelContext::heat_jet(const GridField &PF, const ScaledPoint &z, const MultiIndex &k) const {
	const Grid &g = PF.g;
	std::size_t it = nearest_time(z.t);
	std::size_t S = g.spatial();
	double dt = g.dt();
	// time derivative weights (central, one-sided at the window edges)
	std::vector<std::pair<long, double>> st;
	long n = static_cast<long>(g.nt), i = static_cast<long>(it);
	if (k.k[0] == 0)
		st = {{i, 1.0}};
	else if (k.k[0] == 1) {
		if (i > 0 && i + 1 < n)
			st = {{i - 1, -0.5 / dt}, {i + 1, 0.5 / dt}};
		else if (i + 1 < n)
			st = {{i, -1 / dt}, {i + 1, 1 / dt}};
		else
			st = {{i - 1, -1 / dt}, {i, 1 / dt}};
	} else if (k.k[0] == 2) {
		long c = std::clamp(i, 1L, n - 2);
		st = {{c - 1, 1 / (dt * dt)}, {c, -2 / (dt * dt)}, {c + 1, 1 / (dt * dt)}};
	} else
		throw Error(ErrorKind::Unsupported, "model", "k", "time derivatives above order 2");
	SpatialFft fft(g.d, g.nx);
	double out = 0;
	for (auto [row, wgt] : st) {
		std::vector<cplx> c(PF.slice(static_cast<std::size_t>(row)), PF.slice(static_cast<std::size_t>(row)) + S);
		fft.forward(c.data());
		cplx acc = 0;
		for (std::size_t f = 0; f < S; ++f) {
			auto cc = spatial_coords(g, f);
			cplx m = c[f];
			double ph = 0;
			for (int a = 0; a < g.d; ++a) {
				double kap = wavenumber(static_cast<std::size_t>(cc[a]), g.nx);
				// the Nyquist mode has no well-defined derivative; drop it for odd orders
				if (2 * std::abs(static_cast<long>(kap)) == static_cast<long>(g.nx) && k.k[a + 1] % 2)
					m = 0;
				m *= std::pow(cplx(0, 2 * M_PI * kap), k.k[a + 1]);
				ph += 2 * M_PI * kap * z.x[a];
			}
			acc += m * std::polar(1.0, ph);
		}
		out += wgt * acc.real() / static_cast<double>(S);
	}
	return out;
}

GridField ModelContext::realize(const Tree &t, const ScaledPoint &z) const {
	const Grid &g = xi_.g;
	std::size_t S = g.spatial();
	switch (t.kind()) {
	case Kind::Poly: {
		const auto &k = t.multi_index();
		GridField f(g);
		for (std::size_t it = 0; it < g.nt; ++it)
			for (std::size_t s = 0; s < S; ++s) {
				ScaledPoint y = f.point(it, s);
				double v = std::pow(y.t - z.t, k.k[0]);
				for (int a = 0; a < g.d; ++a) {
					double dx = y.x[a] - z.x[a];
					dx -= std::round(dx);
					v *= std::pow(dx, k.k[a + 1]);
				}
				f.at(it, s) = v;
			}
		return f;
	}
	case Kind::Noise:
		return xi_;
	case Kind::Prod: {
		auto fs = t.factors();
		GridField f = local(fs[0], z);
		for (std::size_t i = 1; i < fs.size(); ++i) {
			GridField h = local(fs[i], z);
			for (std::size_t j = 0; j < f.data.size(); ++j)
				f.data[j] *= h.data[j];
		}
		return f;
	}
	case Kind::I:
	case Kind::It: {
		GridField F = local(t.child(), z);
		GridField PF = t.kind() == Kind::I ? heat_.apply_plus(F) : heat_.apply_plus_backward(F);
		double bound = structure_.hom(t.child()) + 2;
		for (const auto &k : multi_indices_below(g.d, bound)) {
			double c = heat_jet(PF, z, k) / multi_factorial(k);
			GridField mono = realize(Tree::poly(k), z);
			for (std::size_t j = 0; j < PF.data.size(); ++j)
				PF.data[j] -= c * mono.data[j];
		}
		return PF;
	}
	}
	throw Error(ErrorKind::Unsupported, "model", "tree", "unknown node kind");
}

GridField ModelContext::local(const Tree &t, const ScaledPoint &z) const {
	if (t.zero())
		return GridField(xi_.g);
	if (t.noise_count() > max_noises)
		throw Error(ErrorKind::Unsupported, "model", "tree", t.str(xi_.g.d) + " is beyond the cached depth");
	if (!z_free(t))
		return realize(t, z);
	{
		std::lock_guard<std::mutex> lock(mu_);
		auto it = cache_.find(t);
		if (it != cache_.end())
			return it->second;
	}
	GridField f = realize(t, z);
	std::lock_guard<std::mutex> lock(mu_);
	cache_.emplace(t, f);
	return f;
}

double canonical_pair(const ModelContext &ctx, const Tree &tau, const ScaledPoint &z, const TestFunction &eta,
                      double lambda) {
	if (!tau.zero() && !tau.is_poly() && !ctx.structure().contains(tau))
		throw Error(ErrorKind::Unsupported, "model", "tree", tau.str(ctx.grid().d) + " is not in the structure");
	Patch p = rescale_test(eta, lambda, z, ctx.grid());
	return pair(ctx.local(tau, z), p);
}

double canonical_pair(const ModelContext &ctx, const TreeVector &v, const ScaledPoint &z, const TestFunction &eta,
                      double lambda) {
	double s = 0;
	for (const auto &[t, c] : v.terms())
		s += c * canonical_pair(ctx, t, z, eta, lambda);
	return s;
}

double renormalized_pair(const ModelContext &ctx, const Tree &tau, const ScaledPoint &z, const TestFunction &eta,
                         double lambda) {
	return canonical_pair(ctx, apply_renorm(ctx.renorm(), tau), z, eta, lambda);
}

// ---------------------------------------------------------------------------

double xi_second_moment(const KernelFamily &f, const TestFunction &eta, double lambda) {
	if (!(lambda > 0) || lambda > 0.5)
		throw Error(ErrorKind::Validation, "model", "lambda", "scale must lie in (0,1/2]");
	int d = f.d;
	if (eta.dim() != d)
		throw Error(ErrorKind::Validation, "model", "eta", "test function dimension differs from the family");
	if (f.zero())
		return 0;
	// index p = (level m, term a); A = Σ_p coef_p Π_axis g_{p,axis}
	std::vector<int> levels;
	if (f.exact_white)
		levels = {-1};
	else
		for (int m = 0; m <= f.N(); ++m)
			if (f.cm(m) != 0)
				levels.push_back(m);
	const auto &terms = eta.terms();
	std::size_t P = levels.size() * terms.size();
	std::vector<double> coef(P);
	for (std::size_t i = 0; i < levels.size(); ++i)
		for (std::size_t a = 0; a < terms.size(); ++a)
			coef[i * terms.size() + a] = (levels[i] < 0 ? 1.0 : f.cm(levels[i])) * terms[a].c * eta.scale();
	const double W = 60.0;
	// time axis: (1/2π) ∫ dw over |λ² w| ≤ W
	auto qt = gauss_legendre(-W / (lambda * lambda), W / (lambda * lambda), 240);
	long K = static_cast<long>(std::ceil(W / (2 * M_PI * lambda)));
	Eigen::MatrixXcd total = Eigen::MatrixXcd::Ones(P, P);
	for (int axis = 0; axis <= d; ++axis) {
		std::size_t nodes = axis == 0 ? qt.x.size() : static_cast<std::size_t>(2 * K + 1);
		Eigen::MatrixXcd V(P, nodes);
		for (std::size_t n = 0; n < nodes; ++n) {
			double w = axis == 0 ? qt.x[n] : 2 * M_PI * static_cast<double>(static_cast<long>(n) - K);
			double wt = axis == 0 ? qt.w[n] / (2 * M_PI) : 1.0;
			double arg = axis == 0 ? lambda * lambda * w : lambda * w;
			for (std::size_t i = 0; i < levels.size(); ++i) {
				double rh = 1;
				if (levels[i] >= 0) {
					double sc = std::ldexp(1.0, -levels[i]);
					rh = axis == 0 ? f.mother.ft_hat(w * sc * sc) : f.mother.fx_hat(w * sc);
				}
				for (std::size_t a = 0; a < terms.size(); ++a)
					V(i * terms.size() + a, n) =
					    std::sqrt(wt) * rh * eta.factor_fourier(axis, terms[a].k.k[axis], arg);
			}
		}
		Eigen::MatrixXcd Gm = V * V.adjoint();
		total = total.cwiseProduct(Gm);
	}
	Eigen::VectorXcd c(P);
	for (std::size_t i = 0; i < P; ++i)
		c(static_cast<Eigen::Index>(i)) = coef[i];
	return (c.transpose() * total * c)(0, 0).real();
}

ScalingFit scaling_diagnostic(const Tree &tau, const std::vector<double> &lambdas, const KernelFamily &f,
                              const HeatDecomposition &heat, const Grid &g, double eps, std::size_t seeds,
                              const TestFunction &eta, const StructureParams &sp, bool renormalized) {
	if (lambdas.size() < 3)
		throw Error(ErrorKind::Validation, "model", "lambdas", "at least 3 scales are needed for a fit");
	ScalingFit fit;
	fit.lambdas = lambdas;
	fit.expected = 2 * homogeneity(tau, {sp.d, sp.beta, sp.kappa});
	if (tau == Tree::xi()) {
		for (double l : lambdas) {
			fit.moments.push_back(xi_second_moment(f, eta, l));
			fit.stderrs.push_back(0);
		}
	} else {
		if (seeds < 2)
			throw Error(ErrorKind::Validation, "model", "seeds", "stochastic trees need at least 2 seeds");
		Structure st = build_structure(sp);
		RenormConstants rc = renorm_constants(f, eps, f.mother, heat, g);
		RenormMap M{rc.C1, rc.C2, rc.C3};
		NoiseSampler sampler(f, g, eps);
		ScaledPoint z;
		z.t = g.time(g.nt / 2);
		for (int a = 0; a < g.d; ++a)
			z.x[a] = 0.5;
		std::size_t L = lambdas.size();
		std::vector<std::vector<double>> vals(seeds, std::vector<double>(L));
		parallel_for(seeds, [&](std::size_t s) {
			auto r = sampler.sample(s + 1);
			ModelContext ctx(eps > 0 ? *r.xi_eps : r.xi, heat, st, M);
			for (std::size_t i = 0; i < L; ++i)
				vals[s][i] = renormalized ? renormalized_pair(ctx, tau, z, eta, lambdas[i])
				                          : canonical_pair(ctx, tau, z, eta, lambdas[i]);
		});
		for (std::size_t i = 0; i < L; ++i) {
			double m = 0, m2 = 0;
			for (std::size_t s = 0; s < seeds; ++s) {
				double v = vals[s][i] * vals[s][i];
				m += v;
				m2 += v * v;
			}
			m /= static_cast<double>(seeds);
			m2 /= static_cast<double>(seeds);
			fit.moments.push_back(m);
			fit.stderrs.push_back(std::sqrt(std::max(0.0, m2 - m * m) / static_cast<double>(seeds)));
		}
	}
	std::vector<double> x, y;
	for (std::size_t i = 0; i < lambdas.size(); ++i) {
		if (!(fit.moments[i] > 0))
			throw Error(ErrorKind::Numerical, "model", "moment", "non-positive second moment at a scale");
		x.push_back(std::log(lambdas[i]));
		y.push_back(std::log(fit.moments[i]));
	}
	fit.slope = fit_slope(x, y);
	// delta-method band from the per-scale relative errors
	double xm = 0;
	for (double v : x)
		xm += v / static_cast<double>(x.size());
	double sxx = 0, var = 0;
	for (std::size_t i = 0; i < x.size(); ++i)
		sxx += (x[i] - xm) * (x[i] - xm);
	for (std::size_t i = 0; i < x.size(); ++i) {
		double rel = fit.stderrs[i] / fit.moments[i];
		var += std::pow((x[i] - xm) / sxx, 2) * rel * rel;
	}
	fit.slope_stderr = std::sqrt(var);
	return fit;
}

namespace {

struct CherrySetup {
	GridField K;   // P_+ (or R∗P_+) causal signal
	GridField gz;  // P_+ ∗ η^λ_z on its own window
	double C1 = 0;
};

CherrySetup cherry_setup(const TestFunction &eta, double lambda, const KernelFamily &f, const HeatDecomposition &heat,
                         const Grid &g) {
	if (eta.order() < 1)
		throw Error(ErrorKind::Precondition, "model", "eta", "test function must annihilate moments up to order one");
	CherrySetup cs;
	cs.K = heat.plus_signal(g);
	if (!f.exact_white)
		cs.K = convolve(f.sample(g), cs.K);
	double ss = 0;
	for (double v : cs.K.data)
		ss += v * v;
	cs.C1 = g.cell_volume() * ss;
	// base point: the test support [z-λ², z+λ²] and the forward tail of P_+ fit inside the window
	double span = 2 * lambda * lambda + 0.25;
	if (span > g.T)
		throw Error(ErrorKind::Resolution, "model", "T", "window too short for P_+ ∗ η^λ");
	ScaledPoint z;
	z.t = g.time(static_cast<std::size_t>(std::lround((g.T - span) / 2 / g.dt() + lambda * lambda / g.dt())));
	for (int a = 0; a < g.d; ++a)
		z.x[a] = 0.5;
	Patch p = rescale_test(eta, lambda, z, g);
	GridField phi = patch_field(p, g);
	cs.gz = convolve(heat.plus_signal(g), phi);
	return cs;
}

} // namespace

double cherry_second_moment(const TestFunction &eta, double lambda, const KernelFamily &f,
                            const HeatDecomposition &heat, const Grid &g) {
	CherrySetup cs = cherry_setup(eta, lambda, f, heat, g);
	if (cs.C1 == 0)
		return 0;
	// covariance of Ψ = K∗ζ and its square, as centered fields
	GridField cov = convolve(reflect(cs.K), cs.K);
	for (double &v : cov.data)
		v *= v;
	std::size_t L = 1;
	while (L < cs.gz.g.nt + cov.g.nt)
		L *= 2;
	Spectrum gs = spacetime_transform(cs.gz, L), ss = spacetime_transform(cov, L);
	double acc = 0;
	for (std::size_t i = 0; i < gs.data.size(); ++i)
		acc += std::norm(gs.data[i]) * ss.data[i].real();
	return 2 * gs.measure() * acc;
}

CherryCheck cherry_monte_carlo(const TestFunction &eta, double lambda, const KernelFamily &f,
                               const HeatDecomposition &heat, const Grid &g, std::size_t seeds, std::uint64_t seed0) {
	CherrySetup cs = cherry_setup(eta, lambda, f, heat, g);
	CherryCheck out;
	out.seeds = seeds;
	out.fourier = cherry_second_moment(eta, lambda, f, heat, g);
	if (seeds < 2)
		throw Error(ErrorKind::Validation, "model", "seeds", "at least 2 seeds are needed");
	// white noise only where it reaches the support of g
	Grid zg = cs.gz.g;
	std::size_t JK = cs.K.g.nt;
	long lead = std::lround(cs.K.g.t0 / g.dt());
	zg.nt = cs.gz.g.nt + JK - 1;
	zg.T = static_cast<double>(zg.nt) * g.dt();
	zg.t0 = cs.gz.g.t0 - static_cast<double>(lead + static_cast<long>(JK) - 1) * g.dt();
	Convolver conv(cs.K, zg.nt);
	std::vector<double> xs(seeds);
	parallel_for(seeds, [&](std::size_t s) {
		GridField zeta = white_field(zg, seed0 + s);
		GridField psi = restrict_to(conv.apply(zeta), cs.gz.g);
		double acc = 0;
		for (std::size_t i = 0; i < psi.data.size(); ++i)
			acc += (psi.data[i] * psi.data[i] - cs.C1) * cs.gz.data[i];
		xs[s] = acc * g.cell_volume();
	});
	double m = 0, m2 = 0, m4 = 0;
	for (double x : xs) {
		m += x;
		m2 += x * x;
		m4 += x * x * x * x;
	}
	double n = static_cast<double>(seeds);
	out.mc_mean = m / n;
	out.mc_second = m2 / n;
	out.mc_stderr = std::sqrt(std::max(0.0, m4 / n - out.mc_second * out.mc_second) / n);
	return out;
}

} // namespace phi4
