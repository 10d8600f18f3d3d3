#include "phi4/noise.hpp"

#include <algorithm>
#include <cmath>

namespace phi4 {

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c, std::array<std::uint32_t, 2> k) {
	constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
	constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
	for (int round = 0; round < 10; ++round) {
		std::uint64_t p0 = static_cast<std::uint64_t>(M0) * c[0];
		std::uint64_t p1 = static_cast<std::uint64_t>(M1) * c[2];
		std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
		std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
		c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
		k[0] += W0;
		k[1] += W1;
	}
	return c;
}

namespace {

// two normals from one Philox block, for the spatial pair (2m, 2m+1)
std::pair<double, double> normal_pair(std::uint64_t seed, long it, std::size_t m) {
	auto ut = static_cast<std::uint64_t>(it);
	auto r = philox4x32({static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(m >> 32),
	                     static_cast<std::uint32_t>(ut), static_cast<std::uint32_t>(ut >> 32)},
	                    {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
	auto unit = [](std::uint32_t a, std::uint32_t b) {
		std::uint64_t v = (static_cast<std::uint64_t>(a) << 21) ^ b;
		return (static_cast<double>(v & ((1ull << 53) - 1)) + 0.5) * 0x1p-53;
	};
	double rad = std::sqrt(-2 * std::log(unit(r[0], r[1])));
	double th = 2 * M_PI * unit(r[2], r[3]);
	return {rad * std::cos(th), rad * std::sin(th)};
}

} // namespace

double cell_normal(std::uint64_t seed, long it, std::size_t ix) {
	auto p = normal_pair(seed, it, ix / 2);
	return ix % 2 ? p.second : p.first;
}

GridField white_field(const Grid &g, std::uint64_t seed) {
	g.validate("noise");
	GridField z(g);
	double s = 1 / std::sqrt(g.cell_volume());
	long base = std::lround(g.t0 / g.dt());
	std::size_t S = g.spatial();
	parallel_for(g.nt, [&](std::size_t it) {
		double *row = z.slice(it);
		for (std::size_t ix = 0; ix < S; ix += 2) {
			auto p = normal_pair(seed, base + static_cast<long>(it), ix / 2);
			row[ix] = s * p.first;
			if (ix + 1 < S)
				row[ix + 1] = s * p.second;
		}
	});
	return z;
}

void check_mollifier(const Grid &g, double eps) {
	if (!(eps >= 2 * std::max(g.dx(), std::sqrt(g.dt())) * (1 - 1e-12)))
		throw Error(ErrorKind::Resolution, "noise", "eps", "mollifier scale below 2 max(dx, sqrt(dt))");
}

GridField mollifier_signal(const Grid &g, double eps, const Mother &rho) {
	check_mollifier(g, eps);
	double dt = g.dt(), dx = g.dx();
	long J = static_cast<long>(std::floor(rho.rt * eps * eps / dt * (1 + 1e-12)));
	Grid kg = g;
	kg.nt = static_cast<std::size_t>(2 * J + 1);
	kg.T = static_cast<double>(kg.nt) * dt;
	kg.t0 = -static_cast<double>(J) * dt;
	GridField out(kg);
	std::size_t n = g.nx;
	std::vector<double> tx(n, 0.0);
	for (std::size_t i = 0; i < n; ++i) {
		double x = static_cast<double>(i) * dx;
		x -= std::round(x);
		for (int img = -1; img <= 1; ++img) {
			double y = (x - img) / eps;
			if (std::abs(y) < rho.rx)
				tx[i] += rho.fx(y, 0);
		}
	}
	double mass = 0;
	for (long j = -J; j <= J; ++j) {
		double t = static_cast<double>(j) * dt / (eps * eps);
		double vt = std::abs(t) < rho.rt ? rho.ft(t, 0) : 0.0;
		double *row = out.slice(static_cast<std::size_t>(j + J));
		for (std::size_t f = 0; f < kg.spatial(); ++f) {
			auto c = spatial_coords(kg, f);
			double v = vt;
			for (int a = 0; a < g.d; ++a)
				v *= tx[static_cast<std::size_t>(c[a])];
			row[f] = v;
			mass += v;
		}
	}
	if (!(mass > 0))
		throw Error(ErrorKind::Numerical, "noise", "eps", "sampled mollifier has no mass");
	double s = 1 / (mass * g.cell_volume());
	for (double &v : out.data)
		v *= s;
	return out;
}

GridField mollify(const GridField &xi, double eps, const Mother &rho) {
	GridField m = mollifier_signal(xi.g, eps, rho);
	std::size_t J = (m.g.nt - 1) / 2, S = xi.g.spatial();
	Grid eg = xi.g;
	eg.nt = xi.g.nt + 2 * J;
	eg.T = static_cast<double>(eg.nt) * xi.g.dt();
	eg.t0 = xi.g.t0 - static_cast<double>(J) * xi.g.dt();
	GridField ext(eg);
	for (std::size_t it = 0; it < eg.nt; ++it) {
		long src = static_cast<long>(it) - static_cast<long>(J);
		src = std::clamp(src, 0L, static_cast<long>(xi.g.nt) - 1);
		std::copy_n(xi.slice(static_cast<std::size_t>(src)), S, ext.slice(it));
	}
	return restrict_to(convolve(m, ext), xi.g);
}

namespace {

Grid extended(const Grid &g, long before, long after) {
	Grid e = g;
	e.nt = g.nt + static_cast<std::size_t>(before + after);
	e.T = static_cast<double>(e.nt) * g.dt();
	e.t0 = g.t0 - static_cast<double>(before) * g.dt();
	return e;
}

} // namespace

NoiseSampler::NoiseSampler(const KernelFamily &f, const Grid &g, double eps) : f_(f), g_(g), eps_(eps) {
	g.validate("noise");
	f.check_grid(g);
	GridField moll;
	if (eps > 0) {
		moll = mollifier_signal(g, eps, f.mother);
		JM_ = static_cast<long>((moll.g.nt - 1) / 2);
	}
	if (!f.exact_white) {
		GridField R = f.sample(g);
		JR_ = static_cast<long>((R.g.nt - 1) / 2);
		R_ = std::make_unique<Convolver>(R, g.nt + static_cast<std::size_t>(2 * (JR_ + JM_)));
	}
	if (eps > 0)
		M_ = std::make_unique<Convolver>(moll, g.nt + static_cast<std::size_t>(2 * JM_));
}

NoiseRealization NoiseSampler::sample(std::uint64_t seed) const {
	NoiseRealization r;
	r.seed = seed;
	r.eps = eps_;
	long margin = JR_ + JM_;
	r.zeta = white_field(extended(g_, margin, margin), seed);
	GridField xi_ext = R_ ? restrict_to(R_->apply(r.zeta), extended(g_, JM_, JM_)) : r.zeta;
	r.xi = restrict_to(xi_ext, g_);
	if (M_)
		r.xi_eps = restrict_to(M_->apply(xi_ext), g_);
	return r;
}

NoiseRealization sample_noise(const KernelFamily &f, const Grid &g, std::uint64_t seed, double eps) {
	return NoiseSampler(f, g, eps).sample(seed);
}

GridField apply_R(const KernelFamily &f, const GridField &phi) {
	if (f.exact_white)
		return phi;
	f.check_grid(phi.g);
	return convolve(f.sample(phi.g), phi);
}

CmNorm cm_norm(const GridField &h, const KernelFamily &f) {
	CmNorm out;
	if (f.exact_white) {
		out.value = l2_norm(h);
		return out;
	}
	GridField R = f.sample(h.g);
	std::size_t L = 1;
	while (L < 2 * std::max(h.g.nt, R.g.nt))
		L *= 2;
	Spectrum sh = spacetime_transform(h, L), sr = spacetime_transform(R, L);
	double sup = 0;
	for (const auto &c : sr.data)
		sup = std::max(sup, std::abs(c));
	double theta = 1e-8 * sup;
	double total = 0, lost = 0, acc = 0;
	for (std::size_t i = 0; i < sh.data.size(); ++i) {
		double e = std::norm(sh.data[i]);
		total += e;
		double r = std::abs(sr.data[i]);
		if (r <= theta)
			lost += e;
		else
			acc += e / (r * r);
	}
	out.excluded_energy = total > 0 ? lost / total : 0;
	if (out.excluded_energy > 1e-6) {
		out.representable = false;
		return out;
	}
	out.value = std::sqrt(acc * sh.measure());
	return out;
}

} // namespace phi4
