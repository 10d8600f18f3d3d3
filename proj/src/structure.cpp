#include "phi4/structure.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <mutex>
#include <set>
#include <sstream>

namespace phi4 {

struct Node {
	Kind kind;
	MultiIndex k;
	std::vector<Tree> children;
	std::size_t count = 1, noises = 0;
};

namespace {

using Key = std::tuple<int, std::array<int, 4>, std::vector<const Node *>>;

struct Table {
	std::mutex m;
	std::map<Key, const Node *> index;
	std::deque<Node> nodes;
};

Table &table() {
	static Table t;
	return t;
}

int kind_tag(Kind k) { return static_cast<int>(k); }

} // namespace

Tree intern(Kind kind, const MultiIndex &k, std::vector<Tree> children) {
	std::vector<const Node *> ptrs;
	for (const auto &c : children)
		ptrs.push_back(c.node());
	Key key{kind_tag(kind), k.k, ptrs};
	auto &tb = table();
	std::lock_guard<std::mutex> lock(tb.m);
	auto it = tb.index.find(key);
	if (it != tb.index.end())
		return Tree(it->second);
	Node n{kind, k, std::move(children)};
	if (kind == Kind::Noise)
		n.noises = 1;
	for (const auto &c : n.children) {
		n.count += c.node_count();
		n.noises += c.noise_count();
	}
	tb.nodes.push_back(std::move(n));
	const Node *p = &tb.nodes.back();
	tb.index.emplace(std::move(key), p);
	return Tree(p);
}

Tree Tree::one() { return poly(MultiIndex{}); }
Tree Tree::poly(const MultiIndex &k) { return intern(Kind::Poly, k, {}); }
Tree Tree::xi() { return intern(Kind::Noise, MultiIndex{}, {}); }

Tree Tree::I(const Tree &t) {
	if (t.zero() || t.is_poly())
		return Tree();
	return intern(Kind::I, MultiIndex{}, {t});
}

Tree Tree::It(const Tree &t) {
	if (t.zero() || t.is_poly())
		return Tree();
	return intern(Kind::It, MultiIndex{}, {t});
}

Tree Tree::product(const std::vector<Tree> &factors) {
	MultiIndex k;
	std::vector<Tree> rest;
	for (const auto &f : factors) {
		if (f.zero())
			return Tree();
		for (const auto &g : f.factors()) {
			if (g.kind() == Kind::Poly)
				for (int a = 0; a < 4; ++a)
					k.k[a] += g.multi_index().k[a];
			else
				rest.push_back(g);
		}
	}
	if (k != MultiIndex{})
		rest.push_back(poly(k));
	if (rest.empty())
		return one();
	if (rest.size() == 1)
		return rest[0];
	std::sort(rest.begin(), rest.end(), tree_less);
	return intern(Kind::Prod, MultiIndex{}, std::move(rest));
}

Tree Tree::power(const Tree &t, int n) {
	return product(std::vector<Tree>(static_cast<std::size_t>(std::max(n, 0)), t));
}

Kind Tree::kind() const { return n_->kind; }
bool Tree::is_one() const { return is_poly() && n_->k == MultiIndex{}; }
const MultiIndex &Tree::multi_index() const { return n_->k; }

Tree Tree::child() const {
	if (zero() || (kind() != Kind::I && kind() != Kind::It))
		throw Error(ErrorKind::Validation, "structure", "tree", "child() on a tree without an integration root");
	return n_->children[0];
}

std::vector<Tree> Tree::factors() const {
	if (!zero() && kind() == Kind::Prod)
		return n_->children;
	return {*this};
}

std::size_t Tree::node_count() const { return zero() ? 0 : n_->count; }
std::size_t Tree::noise_count() const { return zero() ? 0 : n_->noises; }

std::string Tree::str(int d) const {
	if (zero())
		return "0";
	switch (kind()) {
	case Kind::Poly: {
		if (is_one())
			return "1";
		std::string s = "X^(";
		for (int a = 0; a <= d; ++a)
			s += (a ? "," : "") + std::to_string(n_->k.k[a]);
		return s + ")";
	}
	case Kind::Noise:
		return "Xi";
	case Kind::I:
		return "I(" + n_->children[0].str(d) + ")";
	case Kind::It:
		return "It(" + n_->children[0].str(d) + ")";
	case Kind::Prod: {
		std::string s;
		const auto &c = n_->children;
		for (std::size_t i = 0; i < c.size();) {
			std::size_t j = i;
			while (j < c.size() && c[j] == c[i])
				++j;
			if (!s.empty())
				s += "*";
			s += c[i].str(d);
			if (j - i > 1)
				s += "^" + std::to_string(j - i);
			i = j;
		}
		return s;
	}
	}
	return "?";
}

bool tree_less(const Tree &a, const Tree &b) {
	if (a == b)
		return false;
	if (a.zero() || b.zero())
		return a.zero();
	if (a.node_count() != b.node_count())
		return a.node_count() < b.node_count();
	if (a.kind() != b.kind())
		return kind_tag(a.kind()) < kind_tag(b.kind());
	switch (a.kind()) {
	case Kind::Poly:
		return a.multi_index() < b.multi_index();
	case Kind::Noise:
		return false;
	case Kind::I:
	case Kind::It:
		return tree_less(a.child(), b.child());
	case Kind::Prod: {
		auto fa = a.factors(), fb = b.factors();
		if (fa.size() != fb.size())
			return fa.size() < fb.size();
		for (std::size_t i = 0; i < fa.size(); ++i)
			if (fa[i] != fb[i])
				return tree_less(fa[i], fb[i]);
		return false;
	}
	}
	return false;
}

Tree operator*(const Tree &a, const Tree &b) { return Tree::product({a, b}); }

namespace {

struct Parser {
	std::string s;
	std::size_t i = 0;

	[[noreturn]] void fail(const std::string &what) const {
		throw Error(ErrorKind::Validation, "structure", "tree",
		            "cannot parse '" + s + "' at offset " + std::to_string(i) + ": " + what);
	}
	void skip() {
		while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i])))
			++i;
	}
	bool eat(const std::string &tok) {
		skip();
		if (s.compare(i, tok.size(), tok) == 0) {
			i += tok.size();
			return true;
		}
		return false;
	}
	int integer() {
		skip();
		std::size_t j = i;
		while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j])))
			++j;
		if (j == i)
			fail("expected an integer");
		int v = std::stoi(s.substr(i, j - i));
		i = j;
		return v;
	}
	Tree atom() {
		if (eat("It(")) {
			Tree t = expr();
			if (!eat(")"))
				fail("expected ')'");
			return Tree::It(t);
		}
		if (eat("I(")) {
			Tree t = expr();
			if (!eat(")"))
				fail("expected ')'");
			return Tree::I(t);
		}
		if (eat("Xi"))
			return Tree::xi();
		if (eat("X^(")) {
			MultiIndex k;
			int a = 0;
			do {
				if (a > 3)
					fail("too many multi-index entries");
				k.k[a++] = integer();
			} while (eat(","));
			if (!eat(")"))
				fail("expected ')'");
			return Tree::poly(k);
		}
		if (eat("(")) {
			Tree t = expr();
			if (!eat(")"))
				fail("expected ')'");
			return t;
		}
		if (eat("1"))
			return Tree::one();
		if (eat("0"))
			return Tree();
		fail("unexpected token");
	}
	Tree factor() {
		Tree t = atom();
		if (eat("^"))
			t = Tree::power(t, integer());
		return t;
	}
	Tree expr() {
		std::vector<Tree> f{factor()};
		while (eat("*"))
			f.push_back(factor());
		return f.size() == 1 ? f[0] : Tree::product(f);
	}
};

} // namespace

Tree parse_tree(const std::string &s) {
	Parser p{s};
	Tree t = p.expr();
	p.skip();
	if (p.i != s.size())
		p.fail("trailing characters");
	return t;
}

double homogeneity(const Tree &t, const HomParams &p) {
	if (t.zero())
		throw Error(ErrorKind::Validation, "structure", "tree", "the zero tree has no homogeneity");
	switch (t.kind()) {
	case Kind::Poly:
		return t.multi_index().scaled_degree();
	case Kind::Noise:
		return -(2.0 + p.d) / 2 + p.beta - p.kappa;
	case Kind::I:
	case Kind::It:
		return homogeneity(t.child(), p) + 2;
	case Kind::Prod: {
		double h = 0;
		for (const auto &f : t.factors())
			h += homogeneity(f, p);
		return h;
	}
	}
	return 0;
}

void TreeVector::add(const Tree &t, double c) {
	if (t.zero() || c == 0)
		return;
	auto it = c_.find(t);
	if (it == c_.end()) {
		c_.emplace(t, c);
		return;
	}
	it->second += c;
	if (it->second == 0)
		c_.erase(it);
}

TreeVector &TreeVector::operator+=(const TreeVector &o) {
	for (const auto &[t, c] : o.c_)
		add(t, c);
	return *this;
}

TreeVector TreeVector::operator*(double s) const {
	TreeVector r;
	for (const auto &[t, c] : c_)
		r.add(t, c * s);
	return r;
}

TreeVector TreeVector::operator+(const TreeVector &o) const {
	TreeVector r = *this;
	r += o;
	return r;
}

TreeVector TreeVector::operator-(const TreeVector &o) const { return *this + o * -1.0; }

double TreeVector::coeff(const Tree &t) const {
	auto it = c_.find(t);
	return it == c_.end() ? 0.0 : it->second;
}

double TreeVector::max_abs() const {
	double m = 0;
	for (const auto &kv : c_)
		m = std::max(m, std::abs(kv.second));
	return m;
}

std::string TreeVector::str(int d) const {
	if (c_.empty())
		return "0";
	std::ostringstream os;
	os.precision(12);
	bool first = true;
	for (const auto &[t, c] : c_) {
		if (!first)
			os << (c < 0 ? " - " : " + ");
		else if (c < 0)
			os << "-";
		first = false;
		os << std::abs(c) << "*" << t.str(d);
	}
	return os.str();
}

namespace {

using TreeSet = std::set<Tree, TreeLess>;

struct Sectors {
	TreeSet U, RU, W, RW;
};

// one application of the generation rules to the given lists, keeping trees below `bound`
Sectors apply_rules(const Sectors &s, const StructureParams &p, double bound) {
	HomParams hp{p.d, p.beta, p.kappa};
	auto h = [&](const Tree &t) { return homogeneity(t, hp); };
	Sectors out;
	for (const auto &k : multi_indices_below(p.d, bound)) {
		Tree x = Tree::poly(k);
		out.U.insert(x);
		out.RU.insert(x);
		out.W.insert(x);
		out.RW.insert(x);
	}
	Tree xi = Tree::xi();
	if (h(xi) < bound)
		out.RU.insert(xi);
	for (const auto &t : s.RU) {
		Tree it = Tree::I(t);
		if (!it.zero() && h(it) < bound)
			out.U.insert(it);
	}
	for (const auto &t : s.RW) {
		Tree it = Tree::It(t);
		if (!it.zero() && h(it) < bound)
			out.W.insert(it);
	}
	std::vector<Tree> u(s.U.begin(), s.U.end());
	for (std::size_t a = 0; a < u.size(); ++a)
		for (std::size_t b = a; b < u.size(); ++b) {
			double hab = h(u[a]) + h(u[b]);
			for (std::size_t c = b; c < u.size(); ++c)
				if (hab + h(u[c]) < bound)
					out.RU.insert(Tree::product({u[a], u[b], u[c]}));
			for (const auto &r : s.W)
				if (hab + h(r) < bound)
					out.RW.insert(Tree::product({u[a], u[b], r}));
		}
	return out;
}

bool same(const Sectors &a, const Sectors &b) { return a.U == b.U && a.RU == b.RU && a.W == b.W && a.RW == b.RW; }

} // namespace

Structure build_structure(const StructureParams &p) {
	if (p.d < 1 || p.d > 3)
		throw Error(ErrorKind::Validation, "structure", "d", "spatial dimension must be 1, 2 or 3");
	if (!(p.gamma_max > 0) || !std::isfinite(p.gamma_max))
		throw Error(ErrorKind::Validation, "structure", "gamma_max", "must be a positive finite number");
	if (!(p.beta >= 0))
		throw Error(ErrorKind::Validation, "structure", "beta", "must be non-negative");
	if (!(p.kappa > 0))
		throw Error(ErrorKind::Validation, "structure", "kappa", "must be positive");
	HomParams hp{p.d, p.beta, p.kappa};
	double xi = homogeneity(Tree::xi(), hp);
	double mU = xi + 2; // lowest homogeneity in U
	if (mU < -1)
		throw Error(ErrorKind::Unsupported, "structure", "beta",
		            "noise too rough: the rules would generate infinitely many trees below gamma_max");
	// every tree below gamma_max is built from factors below this bound (W never goes negative when mU >= -1)
	double bound = p.gamma_max - 2 * std::min(0.0, mU);
	Sectors s;
	for (int iter = 0;; ++iter) {
		Sectors n = apply_rules(s, p, bound);
		if (same(n, s))
			break;
		s = std::move(n);
		if (iter > 64)
			throw Error(ErrorKind::Numerical, "structure", "gamma_max", "generation did not reach a fixed point");
	}
	Structure out;
	out.p = p;
	auto keep = [&](const TreeSet &in, std::vector<Tree> &dst) {
		for (const auto &t : in)
			if (homogeneity(t, hp) < p.gamma_max)
				dst.push_back(t);
	};
	keep(s.U, out.U);
	keep(s.RU, out.RU);
	keep(s.W, out.W);
	keep(s.RW, out.RW);
	TreeSet all;
	for (auto *v : {&out.U, &out.RU, &out.W, &out.RW})
		all.insert(v->begin(), v->end());
	out.all.assign(all.begin(), all.end());
	std::stable_sort(out.all.begin(), out.all.end(),
	                 [&](const Tree &a, const Tree &b) { return homogeneity(a, hp) < homogeneity(b, hp); });
	for (const auto &t : out.all) {
		if (t.noise_count() == 0)
			continue;
		double h = homogeneity(t, hp);
		if (std::abs(h - std::round(h)) < 1e-9) {
			std::string msg = "tree " + t.str(p.d) + " has integer homogeneity " + std::to_string(std::lround(h));
			if (p.strict)
				throw Error(ErrorKind::Validation, "structure", "kappa", msg + "; choose another kappa or beta");
			out.diagnostics.push_back(msg);
		}
	}
	return out;
}

std::string Structure::labels(const Tree &t) const {
	std::string s;
	auto mark = [&](const std::vector<Tree> &v, const char *name) {
		if (std::binary_search(v.begin(), v.end(), t, tree_less))
			s += (s.empty() ? "" : ",") + std::string(name);
	};
	mark(U, "U");
	mark(RU, "RU");
	mark(W, "W");
	mark(RW, "RW");
	return s;
}

bool Structure::contains(const Tree &t) const { return !labels(t).empty(); }

bool Structure::closed(std::string *witness) const {
	Sectors s;
	s.U.insert(U.begin(), U.end());
	s.RU.insert(RU.begin(), RU.end());
	s.W.insert(W.begin(), W.end());
	s.RW.insert(RW.begin(), RW.end());
	Sectors n = apply_rules(s, p, p.gamma_max);
	auto check = [&](const TreeSet &got, const TreeSet &have, const char *name) {
		for (const auto &t : got)
			if (!have.count(t)) {
				if (witness)
					*witness = t.str(p.d) + " missing from " + name;
				return false;
			}
		return true;
	};
	return check(n.U, s.U, "U") && check(n.RU, s.RU, "RU") && check(n.W, s.W, "W") && check(n.RW, s.RW, "RW");
}

Tree pattern(int which) {
	Tree ixi = Tree::I(Tree::xi());
	Tree cherry = Tree::power(ixi, 2);
	switch (which) {
	case 1:
		return cherry;
	case 2:
		return Tree::product({Tree::I(cherry), cherry});
	case 3:
		return Tree::product({Tree::It(cherry), cherry});
	}
	throw Error(ErrorKind::Validation, "structure", "pattern", "pattern index must be 1, 2 or 3");
}

TreeVector apply_L(int which, const Tree &t) {
	TreeVector out;
	if (t.zero())
		return out;
	Tree pat = pattern(which);
	switch (t.kind()) {
	case Kind::Poly:
	case Kind::Noise:
		return out;
	case Kind::I:
	case Kind::It: {
		TreeVector inner = apply_L(which, t.child());
		for (const auto &[c, coef] : inner.terms())
			out.add(t.kind() == Kind::I ? Tree::I(c) : Tree::It(c), coef);
		return out;
	}
	case Kind::Prod:
		break;
	}
	auto f = t.factors();
	if (which == 1) {
		Tree ixi = Tree::I(Tree::xi());
		long m = std::count(f.begin(), f.end(), ixi);
		if (m >= 2) {
			std::vector<Tree> rest;
			long skipped = 0;
			for (const auto &g : f)
				if (g == ixi && skipped < 2)
					++skipped;
				else
					rest.push_back(g);
			out.add(Tree::product(rest), binomial(static_cast<int>(m), 2));
		}
	} else if (t == pat) {
		out.add(Tree::one(), 1);
	}
	// occurrences inside each factor, one per copy
	for (std::size_t i = 0; i < f.size();) {
		std::size_t j = i;
		while (j < f.size() && f[j] == f[i])
			++j;
		TreeVector inner = apply_L(which, f[i]);
		if (!inner.empty()) {
			std::vector<Tree> rest(f.begin(), f.end());
			rest.erase(rest.begin() + static_cast<long>(i));
			for (const auto &[c, coef] : inner.terms()) {
				auto g = rest;
				g.push_back(c);
				out.add(Tree::product(g), coef * static_cast<double>(j - i));
			}
		}
		i = j;
	}
	return out;
}

TreeVector apply_L(int which, const TreeVector &v) {
	TreeVector out;
	for (const auto &[t, c] : v.terms())
		out += apply_L(which, t) * c;
	return out;
}

TreeVector apply_renorm(const RenormMap &M, const TreeVector &v) {
	TreeVector out = v, term = v;
	for (int n = 1; !term.empty(); ++n) {
		if (n > 64)
			throw Error(ErrorKind::Numerical, "structure", "tree", "renormalization series did not terminate");
		TreeVector next = apply_L(1, term) * M.C1 + apply_L(2, term) * M.C2 + apply_L(3, term) * M.C3;
		term = next * (-1.0 / n);
		out += term;
	}
	return out;
}

TreeVector apply_renorm(const RenormMap &M, const Tree &t) { return apply_renorm(M, TreeVector(t)); }

} // namespace phi4
