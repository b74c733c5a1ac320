#include <random>

#include "doctest.h"
#include "genparse/transition.hpp"
#include "test_util.hpp"

using namespace genparse;
using testutil::prison_ops;
using testutil::prison_tree;

TEST_CASE("oracle reproduces the worked example sequence") {
  CHECK(format_ops(oracle(prison_tree())) == prison_ops());
}

TEST_CASE("execute reproduces the worked example arcs") {
  const DependencyTree t = execute(parse_ops(prison_ops()));
  CHECK(t == prison_tree());

  StackState s;
  for (const auto& op : parse_ops(prison_ops())) s = apply_op(s, op);
  const std::vector<Arc> expected{{2, 1}, {3, 2}, {5, 4}, {3, 5}, {0, 3}};
  CHECK(s.arcs() == expected);
}

TEST_CASE("stack contents along the worked example") {
  // Stack sizes including the root node before each op and at the end.
  const std::vector<std::size_t> depth{1, 2, 3, 2, 3, 2, 3, 4, 3, 2, 1};
  StackState s;
  const auto ops = parse_ops(prison_ops());
  for (std::size_t i = 0; i < ops.size(); ++i) {
    CHECK(s.depth() == depth[i]);
    s = apply_op(s, ops[i]);
  }
  CHECK(s.depth() == depth.back());
  CHECK(s.terminal());
}

TEST_CASE("validity masks") {
  StackState s;
  ValidOps v = valid_ops(s);
  CHECK(v.gen);
  CHECK_FALSE(v.reduce_l);
  CHECK_FALSE(v.reduce_r);
  CHECK_FALSE(v.complete);

  s = apply_op(s, ParserOp::gen("x"));
  v = valid_ops(s);
  CHECK(v.gen);
  CHECK_FALSE(v.reduce_l);  // the root cannot become a dependent
  CHECK(v.reduce_r);

  s = apply_op(s, ParserOp::gen("y"));
  v = valid_ops(s);
  CHECK(v.reduce_l);
  CHECK(v.reduce_r);

  CHECK_FALSE(valid_ops(s, 2).gen);
  CHECK_THROWS_WITH_AS(apply_op(s, ParserOp::gen("z"), 2), doctest::Contains("word limit"),
                       Error);
}

TEST_CASE("invalid ops are rejected with the violated constraint") {
  CHECK_THROWS_WITH_AS(apply_op(StackState{}, ParserOp::reduce_l()),
                       doctest::Contains("REDUCE_L"), Error);
  CHECK_THROWS_WITH_AS(apply_op(StackState{}, ParserOp::reduce_r()),
                       doctest::Contains("REDUCE_R"), Error);
  const StackState one = apply_op(StackState{}, ParserOp::gen("x"));
  CHECK_THROWS_AS(apply_op(one, ParserOp::reduce_l()), Error);
  const StackState done = apply_op(one, ParserOp::reduce_r());
  CHECK(done.terminal());
  CHECK_THROWS_WITH_AS(apply_op(done, ParserOp::gen("y")), doctest::Contains("terminal"), Error);
}

TEST_CASE("execute reports the failing op index") {
  try {
    execute(parse_ops("GEN(a) RL RR"));
    FAIL("expected an error");
  } catch (const SequenceError& e) {
    CHECK(e.index() == 1);
  }
  try {
    execute(parse_ops("GEN(a) GEN(b) RL"));
    FAIL("expected an error");
  } catch (const SequenceError& e) {
    CHECK(e.index() == -1);
  }
  CHECK_THROWS_AS(execute({}), SequenceError);
}

TEST_CASE("small cases") {
  CHECK(format_ops(oracle({{"x"}, {0}})) == "GEN(x) RR");
  const DependencyTree t = execute(parse_ops("GEN(x) RR"));
  CHECK(t.words == std::vector<std::string>{"x"});
  CHECK(t.heads == std::vector<int>{0});
  CHECK(extract_summary(parse_ops(prison_ops())) ==
        std::vector<std::string>{"a", "man", "escaped", "from", "prison"});
}

TEST_CASE("oracle rejects trees outside the reachable class") {
  CHECK_THROWS_WITH_AS(oracle({{"a", "b"}, {0, 0}}), doctest::Contains("multi-root"), Error);
  // 1->3 crosses 2->4.
  CHECK_THROWS_WITH_AS(oracle({{"a", "b", "c", "d"}, {3, 4, 0, 3}}),
                       doctest::Contains("non-projective"), Error);
  CHECK_THROWS_AS(oracle({{"a", "b"}, {2, 1}}), Error);  // cycle
}

TEST_CASE("op text round trip") {
  const auto ops = parse_ops(prison_ops());
  CHECK(parse_ops(format_ops(ops)) == ops);
  CHECK_THROWS_AS(parse_ops("GEN() RL"), Error);
  CHECK_THROWS_AS(parse_ops("SHIFT"), Error);
}

TEST_CASE("projectivity agrees with the pairwise crossing test") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 8)(rng);
    DependencyTree t;
    for (int i = 1; i <= n; ++i) {
      t.words.push_back("w");
      int h;
      do {
        h = std::uniform_int_distribution<int>(0, n)(rng);
      } while (h == i);
      t.heads.push_back(h);
    }
    try {
      check_well_formed(t);
    } catch (const Error&) {
      continue;
    }
    CHECK(is_projective(t) == testutil::no_crossing_arcs(t));
  }
}

TEST_CASE("round trip and derivation properties on random trees") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 9)(rng);
    const DependencyTree t = testutil::random_projective_tree(rng, n);
    REQUIRE(testutil::no_crossing_arcs(t));
    const TargetSequence ops = oracle(t);
    CHECK(ops.size() == 2 * t.size());
    CHECK(execute(ops) == t);
    // Every prefix is valid and only the full sequence is terminal.
    StackState s;
    for (std::size_t i = 0; i < ops.size(); ++i) {
      CHECK_FALSE(s.terminal());
      CHECK(valid_ops(s).allows(ops[i].kind));
      s = apply_op(s, ops[i]);
    }
    CHECK(s.terminal());
  }
}
