#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ibhc/constraints.hpp"
#include "ibhc/tree_metrics.hpp"
#include "test_support.hpp"

using namespace ibhc;
using namespace testsupport;

namespace {

std::vector<std::vector<int>> Comps(const TripletSet& c, std::vector<int> s) {
  return AhoGraph(c, s).components();
}

}  // namespace

TEST_CASE("aho graph components") {
  std::vector<int> s{1, 2, 3, 4, 5};
  CHECK(Comps({}, s).size() == 5);
  CHECK(Comps({Triplet(1, 2, 3)}, {1, 2, 3}) == std::vector<std::vector<int>>{{1, 2}, {3}});
  CHECK(Comps({Triplet(1, 2, 3), Triplet(3, 4, 5)}, s) ==
        std::vector<std::vector<int>>{{1, 2}, {3, 4}, {5}});
  // A triplet reaching outside the vertex set adds no edge.
  AhoGraph outside({Triplet(1, 2, 9)}, std::vector<int>{1, 2, 3});
  CHECK(outside.edge_count() == 0);
  CHECK(outside.components().size() == 3);
  CHECK(std::vector<int>(outside.labels().begin(), outside.labels().end()) ==
        std::vector<int>{0, 1, 2});
}

TEST_CASE("build") {
  std::vector<int> s{1, 2, 3};
  // No constraints: the smallest index splits off first.
  Tree free = Build({}, s, 4);
  CHECK(SameTopology(free, Nwk("(1,(2,3));")));
  free.Validate(true);

  TripletSet one{Triplet(1, 2, 3)};
  Tree t = Build(one, s, 4);
  CHECK(CheckSatisfies(t, one));
  CHECK(SameTopology(t, Nwk("((1,2),3);")));

  TripletSet bad{Triplet(1, 2, 3), Triplet(1, 3, 2)};
  CHECK_THROWS_AS(Build(bad, s, 4), UnrealizableError);

  // Times are spaced by recursion depth (leaves count as the deepest level).
  Tree deep = Build({}, std::vector<int>{0, 1, 2, 3}, 4);
  CHECK(deep.time(deep.root()) == doctest::Approx(0.2));
  CHECK(deep.time(deep.Lca(2, 3)) == doctest::Approx(0.6));
  Tree single = Build({}, std::vector<int>{2}, 4);
  CHECK(single.LeafCount() == 1);
}

TEST_CASE("satisfaction checks") {
  Tree t = Nwk("((1,2),3);");
  CHECK(CheckSatisfies(t, {}));
  TripletSet c{Triplet(1, 2, 3)};
  CHECK(CheckSatisfies(t, c));
  Tree u = Nwk("((1,3),2);");
  CHECK_FALSE(CheckSatisfies(u, c));
  CHECK(FirstViolation(u, c) == Triplet(1, 2, 3));
  CHECK_THROWS(CheckSatisfies(t, {Triplet(1, 2, 7)}));
}

TEST_CASE("build satisfies random realizable sets and never fails on them") {
  std::mt19937_64 g(21);
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 3 + static_cast<int>(g() % 8);
    TripletSet c = RandomRealizable(n, g() % 40, g);
    std::vector<int> leaves(n);
    for (int i = 0; i < n; ++i) leaves[i] = i;
    Tree t = Build(c, leaves, n);
    t.Validate(true);
    CHECK(CheckSatisfies(t, c));
    CHECK(TopologyKey(Build(c, leaves, n)) == TopologyKey(t));
  }
}

TEST_CASE("build over a subset only sees triplets inside it") {
  TripletSet c{Triplet(0, 1, 2), Triplet(2, 3, 0), Triplet(0, 4, 1)};
  Tree t = Build(c, std::vector<int>{0, 1, 2}, 5);
  CHECK(t.LeafCount() == 3);
  CHECK(Satisfies(t, Triplet(0, 1, 2)));
}

TEST_CASE("incorporating a triplet") {
  for (SplicePolicy policy : {SplicePolicy::kFollowTree, SplicePolicy::kMinimumIndex}) {
    Tree t = Nwk("((1,2),3);");
    const std::string before = TopologyKey(t);
    CHECK_FALSE(IncorporateTriplet(t, {}, Triplet(1, 2, 3), policy).valid());
    CHECK(TopologyKey(t) == before);

    Tree u = Nwk("((1,3),2);");
    CHECK(IncorporateTriplet(u, {}, Triplet(1, 2, 3), policy).valid());
    u.Validate(true);
    CHECK(SameTopology(u, Nwk("((1,2),3);")));

    Tree w = Nwk("(((1,3),2),4);");
    const NodeId z = w.Lca(1, 2);
    const NodeId four = w.LeafNode(4);
    const double z_parent_time = w.time(w.parent(z));
    NodeId fresh = IncorporateTriplet(w, {}, Triplet(1, 2, 3), policy);
    w.Validate(true);
    CHECK(Satisfies(w, Triplet(1, 2, 3)));
    // Leaf 4 still hangs off the same node, next to the rebuilt clade.
    CHECK(w.Sibling(four) == fresh);
    CHECK(w.time(w.parent(four)) == z_parent_time);
    CHECK(w.time(fresh) > z_parent_time);
  }
}

TEST_CASE("incorporating keeps everything outside the rebuilt clade") {
  std::mt19937_64 g(22);
  for (SplicePolicy policy : {SplicePolicy::kFollowTree, SplicePolicy::kMinimumIndex}) {
    for (int rep = 0; rep < 200; ++rep) {
      const int n = 4 + static_cast<int>(g() % 9);
      Tree source = RandomBinaryTree(n, g);
      const auto embodied = BruteTriplets(source);
      std::vector<Trip> pool(embodied.begin(), embodied.end());
      std::shuffle(pool.begin(), pool.end(), g);
      Tree t = RandomTimedTree(n, g, 2);
      TripletSet c;
      for (std::size_t k = 0; k < std::min<std::size_t>(pool.size(), 12); ++k) {
        auto [a, b, x] = pool[k];
        Triplet added(a, b, x);
        const bool held = Satisfies(t, added);
        LeafSet zmask = t.leaf_set(t.Lca(a, b));
        std::set<Cluster> outside;
        for (const auto& cl : Clusters(t)) {
          bool disjoint = true, covers = true;
          for (int leaf : cl) disjoint &= !zmask.test(leaf);
          for (auto i = zmask.find_first(); i != LeafSet::npos; i = zmask.find_next(i))
            covers &= std::binary_search(cl.begin(), cl.end(), static_cast<int>(i));
          if (disjoint || covers) outside.insert(cl);
        }
        NodeId fresh = IncorporateTriplet(t, c, added, policy);
        CHECK(fresh.valid() == !held);
        c.Insert(added);
        t.Validate(true);
        CHECK(t.LeafCount() == static_cast<std::size_t>(n));
        CHECK(CheckSatisfies(t, c));
        auto after = Clusters(t);
        for (const auto& cl : outside) CHECK(after.count(cl) == 1);
        for (NodeId v : t.InternalNodes()) CHECK(t.time(v) < 1.0);
      }
    }
  }
}

TEST_CASE("incorporating a contradiction leaves the tree alone") {
  Tree t = Nwk("((1,2),3);");
  TripletSet c{Triplet(1, 2, 3)};
  const std::string before = TopologyKey(t);
  CHECK_THROWS_AS(IncorporateTriplet(t, c, Triplet(1, 3, 2)), UnrealizableError);
  CHECK(TopologyKey(t) == before);
}
