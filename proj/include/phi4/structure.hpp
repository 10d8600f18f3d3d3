#pragma once

#include "phi4/common.hpp"

#include <map>

namespace phi4 {

enum class Kind : std::uint8_t { Poly = 0, Noise = 1, I = 2, It = 3, Prod = 4 };

struct Node;

// handle to an interned canonical tree; a null handle is the zero tree
class Tree {
public:
	Tree() = default;
	static Tree one();
	static Tree poly(const MultiIndex &k);
	static Tree xi();
	static Tree I(const Tree &t);
	static Tree It(const Tree &t);
	static Tree product(const std::vector<Tree> &factors);
	static Tree power(const Tree &t, int n);

	bool zero() const { return n_ == nullptr; }
	Kind kind() const;
	bool is_one() const;
	bool is_poly() const { return !zero() && kind() == Kind::Poly; }
	const MultiIndex &multi_index() const;
	Tree child() const;                  // for I, It
	std::vector<Tree> factors() const;   // for Prod (sorted, with repetition); otherwise {*this}
	std::size_t node_count() const;
	std::size_t noise_count() const;
	std::string str(int d = 3) const;

	bool operator==(const Tree &o) const { return n_ == o.n_; }
	bool operator!=(const Tree &o) const { return n_ != o.n_; }
	const Node *node() const { return n_; }

private:
	explicit Tree(const Node *n) : n_(n) {}
	const Node *n_ = nullptr;
	friend Tree intern(Kind, const MultiIndex &, std::vector<Tree>);
};

// total order: node count, kind tag, then recursive
bool tree_less(const Tree &a, const Tree &b);
struct TreeLess {
	bool operator()(const Tree &a, const Tree &b) const { return tree_less(a, b); }
};

Tree operator*(const Tree &a, const Tree &b);
// grammar: 1 | Xi | X^(k0,..,kd) | I(p) | It(p) | (p) with factors joined by '*' and optional ^n
Tree parse_tree(const std::string &s);

struct HomParams {
	int d = 3;
	double beta = 0, kappa = 0.01;
};
double homogeneity(const Tree &t, const HomParams &p);

class TreeVector {
public:
	TreeVector() = default;
	TreeVector(const Tree &t, double c = 1) { add(t, c); }
	void add(const Tree &t, double c);
	TreeVector &operator+=(const TreeVector &o);
	TreeVector operator*(double s) const;
	TreeVector operator+(const TreeVector &o) const;
	TreeVector operator-(const TreeVector &o) const;
	double coeff(const Tree &t) const;
	const std::map<Tree, double, TreeLess> &terms() const { return c_; }
	bool empty() const { return c_.empty(); }
	std::size_t size() const { return c_.size(); }
	double max_abs() const;
	std::string str(int d = 3) const;

private:
	std::map<Tree, double, TreeLess> c_;
};

struct StructureParams {
	int d = 3;
	double beta = 0, kappa = 0.01, gamma_max = 2;
	bool strict = true; // integer homogeneity collisions raise instead of being listed
};

struct Structure {
	StructureParams p;
	std::vector<Tree> U, RU, W, RW; // truncated to homogeneity < gamma_max, canonical order
	std::vector<Tree> all;          // union, ordered by homogeneity then tree order
	std::vector<std::string> diagnostics;
	double hom(const Tree &t) const { return homogeneity(t, {p.d, p.beta, p.kappa}); }
	std::string labels(const Tree &t) const;
	bool contains(const Tree &t) const;
	// applying the generation rules once to the lists adds nothing of homogeneity < gamma_max
	bool closed(std::string *witness = nullptr) const;
};

Structure build_structure(const StructureParams &p);

struct RenormMap {
	double C1 = 0, C2 = 0, C3 = 0;
};

// patterns: L1 removes a sub-multiset I(Ξ)²; L2, L3 replace the exact subtrees
// I(I(Ξ)²)I(Ξ)² and Ĩ(I(Ξ)²)I(Ξ)² by 𝟙; each sums over all distinct extractions
Tree pattern(int which);
TreeVector apply_L(int which, const Tree &t);
TreeVector apply_L(int which, const TreeVector &v);
TreeVector apply_renorm(const RenormMap &M, const Tree &t);
TreeVector apply_renorm(const RenormMap &M, const TreeVector &v);

} // namespace phi4
