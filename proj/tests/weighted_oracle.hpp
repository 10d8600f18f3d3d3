#pragma once

#include "phi4/besov.hpp"

#include <cmath>

namespace phi4::oracle {

// direct evaluation of the weighted norm for d = 1, ks = {1, X}
inline double brute_weighted(const ModelledField &f, double eta, double p, double T) {
	const Grid &g = f.g;
	long nx = static_cast<long>(g.nx);
	double w = g.dt() * g.dx(), gam = f.gamma;
	double total = 0;
	for (int zeta = 0; zeta <= 1; ++zeta) {
		double s = 0;
		for (std::size_t it = 0; it < g.nt; ++it) {
			double t = g.time(it);
			if (t > T + 1e-12)
				continue;
			for (long i = 0; i < nx; ++i)
				s += w * std::pow(std::abs(f.at(it * g.nx + i)[zeta]) / std::pow(t, (eta - zeta) / 2), p);
		}
		total += std::pow(s, 1 / p);
		double best = 0;
		for (int n = 1;; ++n) {
			double hx = std::ldexp(1.0, -n), ht = hx * hx;
			if (hx < g.dx() * 0.999 || ht < g.dt() * 0.999)
				break;
			long sx = std::lround(hx / g.dx()), st = std::lround(ht / g.dt());
			for (int a = -1; a <= 1; ++a)
				for (int b = -1; b <= 1; ++b) {
					if (a == 0 && b == 0)
						continue;
					double htt = a * ht, hxx = b * hx;
					double nrm = std::max(std::sqrt(std::abs(htt)), std::abs(hxx));
					double acc = 0;
					for (std::size_t it = 0; it < g.nt; ++it) {
						double t = g.time(it);
						if (t < 3 * nrm * nrm - 1e-12 || t > T - nrm * nrm + 1e-12)
							continue;
						long jt = static_cast<long>(it) + a * st;
						if (jt < 0 || jt >= static_cast<long>(g.nt))
							continue;
						for (long i = 0; i < nx; ++i) {
							long j = ((i + b * sx) % nx + nx) % nx;
							const double *fz = f.at(it * g.nx + i);
							const double *fy = f.at(static_cast<std::size_t>(jt) * g.nx + j);
							double gam0 = fz[0] + hxx * fz[1], gam1 = fz[1];
							double diff = zeta == 0 ? fy[0] - gam0 : fy[1] - gam1;
							double den = std::pow(nrm, gam - zeta) * std::pow(t, (eta - gam) / 2);
							acc += w * std::pow(std::abs(diff) / den, p);
						}
					}
					best = std::max(best, std::pow(acc, 1 / p));
				}
		}
		total += best;
	}
	return total;
}

} // namespace phi4::oracle
