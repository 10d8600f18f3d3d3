#include "phi4/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>

namespace phi4 {

std::vector<MultiIndex> multi_indices_upto(int d, int n) {
	std::vector<MultiIndex> out;
	for (int k0 = 0; 2 * k0 <= n; ++k0)
		for (int k1 = 0; k1 <= (d >= 1 ? n : 0); ++k1)
			for (int k2 = 0; k2 <= (d >= 2 ? n : 0); ++k2)
				for (int k3 = 0; k3 <= (d >= 3 ? n : 0); ++k3) {
					MultiIndex m{{k0, k1, k2, k3}};
					if (m.scaled_degree() <= n)
						out.push_back(m);
				}
	std::sort(out.begin(), out.end(), [](const MultiIndex &a, const MultiIndex &b) {
		if (a.scaled_degree() != b.scaled_degree())
			return a.scaled_degree() < b.scaled_degree();
		return a.k > b.k;
	});
	return out;
}

std::vector<MultiIndex> multi_indices_below(int d, double bound) {
	if (bound <= 0)
		return {};
	int n = static_cast<int>(std::ceil(bound)) - 1;
	auto all = multi_indices_upto(d, n);
	std::vector<MultiIndex> out;
	for (auto &m : all)
		if (m.scaled_degree() < bound)
			out.push_back(m);
	return out;
}

double factorial(int n) {
	double r = 1;
	for (int i = 2; i <= n; ++i)
		r *= i;
	return r;
}

double multi_factorial(const MultiIndex &k) {
	return factorial(k.k[0]) * factorial(k.k[1]) * factorial(k.k[2]) * factorial(k.k[3]);
}

double binomial(int n, int k) {
	if (k < 0 || k > n)
		return 0;
	return factorial(n) / (factorial(k) * factorial(n - k));
}

int thread_count() {
	int hw = static_cast<int>(std::thread::hardware_concurrency());
	if (hw <= 0)
		hw = 1;
	if (const char *env = std::getenv("PHI4_THREADS")) {
		int v = std::atoi(env);
		if (v > 0)
			return v;
	}
	return hw;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)> &f) {
	int nt = std::min<std::size_t>(thread_count(), n);
	if (nt <= 1) {
		for (std::size_t i = 0; i < n; ++i)
			f(i);
		return;
	}
	std::atomic<std::size_t> next{0};
	std::vector<std::thread> pool;
	std::exception_ptr err;
	std::atomic<bool> failed{false};
	for (int w = 0; w < nt; ++w)
		pool.emplace_back([&] {
			for (;;) {
				std::size_t i = next.fetch_add(1);
				if (i >= n || failed)
					return;
				try {
					f(i);
				} catch (...) {
					if (!failed.exchange(true))
						err = std::current_exception();
				}
			}
		});
	for (auto &t : pool)
		t.join();
	if (err)
		std::rethrow_exception(err);
}

std::uint64_t fnv1a(const std::string &s, std::uint64_t h) {
	for (unsigned char c : s) {
		h ^= c;
		h *= 1099511628211ull;
	}
	return h;
}

std::string hex64(std::uint64_t v) {
	char buf[17];
	std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
	return buf;
}

double fit_slope(const std::vector<double> &x, const std::vector<double> &y) {
	std::size_t n = x.size();
	double mx = 0, my = 0;
	for (std::size_t i = 0; i < n; ++i) {
		mx += x[i];
		my += y[i];
	}
	mx /= n;
	my /= n;
	double sxy = 0, sxx = 0;
	for (std::size_t i = 0; i < n; ++i) {
		sxy += (x[i] - mx) * (y[i] - my);
		sxx += (x[i] - mx) * (x[i] - mx);
	}
	return sxy / sxx;
}

} // namespace phi4
