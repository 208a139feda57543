#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "chad/grad.hpp"
#include "chad/oracle.hpp"
#include "chad/parse.hpp"
#include "chad/pretty.hpp"

#include "corpus_util.hpp"

using namespace chad;

namespace {

std::vector<double> dense_grad(PipeMode mode, const corpus::Entry& e,
                               const std::vector<Value>& pt) {
  auto env = grad(mode, e.prog.args, e.prog.body, pt, c_r(1.0));
  return densify_env(e.prog.args, pt, env);
}

} // namespace

TEST_CASE("primal and cotangent type maps") {
  REQUIRE(d2_type(ty_prod(ty_real(), ty_real())) == ty_lprod(ty_lreal(), ty_lreal()));
  REQUIRE(d2_type(ty_array(ty_real())) == ty_bag(ty_prod(ty_int(), ty_lreal())));
  REQUIRE(d1_type(ty_sum(ty_unit(), ty_unit())) == ty_sum(ty_unit(), ty_unit()));
  REQUIRE(d2_type(ty_int()) == ty_lunit());
  REQUIRE(d1_type(ty_array(ty_prod(ty_real(), ty_int()))) ==
          ty_array(ty_prod(ty_real(), ty_int())));
}

TEST_CASE("textbook gradients come out right") {
  Program mul = parse_program("(program (args (x Real) (y Real)) (op mul x y))");
  for (PipeMode m : {PipeMode::Monadic, PipeMode::NaiveDense, PipeMode::NaiveTreeMap}) {
    auto env = grad(m, mul.args, mul.body, {v_real(3), v_real(2)}, c_r(1.0));
    auto d = densify_env(mul.args, {v_real(3), v_real(2)}, env);
    REQUIRE(d == std::vector<double>{2.0, 3.0});
  }

  Program letp = parse_program("(program (args (x Real)) (let (z Real) (op add x x) z))");
  auto env = grad(PipeMode::Monadic, letp.args, letp.body, {v_real(5)}, c_r(1.0));
  REQUIRE(densify_env(letp.args, {v_real(5)}, env) == std::vector<double>{2.0});

  // fst of a pair: a one-hot flows to x, y gets a structural zero
  Program fstp = parse_program("(program (args (x Real) (y Real)) (fst (pair x y)))");
  auto env2 = grad(PipeMode::Monadic, fstp.args, fstp.body, {v_real(1), v_real(2)}, c_r(4.0));
  REQUIRE(env2[0]->r == 4.0);
  REQUIRE(cot_eq(env2[1], cot_zero(ty_lreal())));

  // fold of a build: all-ones through the sum
  Program fb = parse_program(
      "(program (args (xs (Array Real))) (fold (p (op add (fst p) (snd p))) xs))");
  std::vector<Value> pt{v_arr({v_real(1), v_real(2), v_real(3), v_real(4), v_real(5)})};
  auto env3 = grad(PipeMode::Monadic, fb.args, fb.body, pt, c_r(1.0));
  REQUIRE(densify_env(fb.args, pt, env3) == std::vector<double>{1, 1, 1, 1, 1});
}

TEST_CASE("every transform output typechecks at the stated result type") {
  auto entries = corpus::load();
  for (const auto& e : entries) {
    std::vector<PipeMode> modes;
    if (e.ho) {
      modes = {PipeMode::NaiveHO, PipeMode::Defunctionalise, PipeMode::ClosedChad};
    } else if (e.arrays) {
      modes = {PipeMode::Monadic};
    } else {
      modes = {PipeMode::Monadic, PipeMode::NaiveDense, PipeMode::NaiveTreeMap};
    }
    for (PipeMode m : modes) {
      INFO(e.file << " under " << pipe_mode_name(m));
      Program p = e.prog;
      if (m == PipeMode::Defunctionalise) p = defunctionalise(closure_convert(p));
      if (m == PipeMode::ClosedChad) p = closure_convert(p);
      TransformConfig cfg{chad_mode_of(m), true};
      TermPtr d = chad_transform(cfg, p.args, p.body);
      Ty got = typecheck(d1_context(p.args), d);
      Ty want = chad_result_type(cfg, p.args, typecheck(p));
      REQUIRE(got == want);
    }
  }
}

TEST_CASE("primal preservation is exact") {
  auto entries = corpus::load();
  std::mt19937_64 rng(301);
  for (const auto& e : entries) {
    std::vector<PipeMode> modes;
    if (e.ho) {
      modes = {PipeMode::NaiveHO, PipeMode::Defunctionalise, PipeMode::ClosedChad};
    } else if (e.arrays) {
      modes = {PipeMode::Monadic};
    } else {
      modes = {PipeMode::Monadic, PipeMode::NaiveDense, PipeMode::NaiveTreeMap};
    }
    for (PipeMode m : modes) {
      Pipeline pl = prepare_pipeline(m, e.prog.args, e.prog.body);
      for (int k = 0; k < 3; ++k) {
        auto pt = corpus::sample_point(e, rng);
        auto [v0, c0] = eval_source(e.prog.args, e.prog.body, pt);
        auto [v1, c1] = eval_primal_half(pl, pt);
        INFO(e.file << " under " << pipe_mode_name(m));
        REQUIRE(value_eq(v0, v1));
      }
    }
  }
}

TEST_CASE("the three first-order strategies give the same gradients") {
  auto entries = corpus::load();
  std::mt19937_64 rng(303);
  for (const auto& e : entries) {
    if (e.ho || e.arrays) continue;
    for (int k = 0; k < 4; ++k) {
      auto pt = corpus::sample_point(e, rng);
      auto a = dense_grad(PipeMode::Monadic, e, pt);
      auto b = dense_grad(PipeMode::NaiveDense, e, pt);
      auto c = dense_grad(PipeMode::NaiveTreeMap, e, pt);
      INFO(e.file);
      REQUIRE(max_rel_err(a, b) <= 1e-12);
      REQUIRE(max_rel_err(a, c) <= 1e-12);
    }
  }
}

TEST_CASE("gradients agree with both oracles") {
  auto entries = corpus::load();
  std::mt19937_64 rng(305);
  for (const auto& e : entries) {
    PipeMode m = e.ho ? PipeMode::Defunctionalise : PipeMode::Monadic;
    for (int k = 0; k < 3; ++k) {
      auto pt = corpus::sample_point(e, rng);
      auto mine = dense_grad(m, e, pt);
      auto fw = grad_forward(e.prog.args, e.prog.body, pt);
      auto fd = grad_fd(e.prog.args, e.prog.body, pt);
      INFO(e.file);
      REQUIRE(max_rel_err(mine, fw) <= 1e-10);
      REQUIRE(max_rel_err(mine, fd) <= 1e-5);
    }
  }
}

namespace {

void collect_prov(const TermPtr& t, std::multiset<int>& out) {
  if (t->prov >= 0) out.insert(t->prov);
  for (const auto& k : t->kids) collect_prov(k, out);
}

int count_nodes(const TermPtr& t) {
  int n = 1;
  for (const auto& k : t->kids) n += count_nodes(k);
  return n;
}

} // namespace

TEST_CASE("the monadic transform is compositional: one derivative per subterm") {
  auto entries = corpus::load();
  for (const auto& e : entries) {
    if (e.ho) continue;
    TransformConfig cfg{Mode::Monadic, true};
    TermPtr d = chad_transform(cfg, e.prog.args, e.prog.body);
    std::multiset<int> tags;
    collect_prov(d, tags);
    int nodes = count_nodes(e.prog.body);
    INFO(e.file);
    REQUIRE((int)tags.size() == nodes);
    for (int i = 0; i < nodes; ++i) REQUIRE(tags.count(i) == 1);
  }
}

TEST_CASE("the pair rule sequences; only binders scope") {
  Program p = parse_program("(program (args (x Real) (y Real)) (pair x y))");
  TransformConfig cfg{Mode::Monadic, true};
  TermPtr d = chad_transform(cfg, p.args, p.body);
  std::string printed = pretty_term(d1_context(p.args), d);
  REQUIRE(printed.find("evm-scope") == std::string::npos);
  REQUIRE(printed.find("evm-bind") != std::string::npos);

  Program q = parse_program("(program (args (x Real)) (let (z Real) x z))");
  TermPtr dq = chad_transform(cfg, q.args, q.body);
  REQUIRE(pretty_term(d1_context(q.args), dq).find("evm-scope") != std::string::npos);
}

TEST_CASE("mode restrictions are explicit errors") {
  Program arr = parse_program(
      "(program (args (xs (Array Real))) (fold (p (op add (fst p) (snd p))) xs))");
  for (Mode m : {Mode::NaiveDense, Mode::NaiveTreeMap}) {
    TransformConfig cfg{m, true};
    REQUIRE_THROWS_AS(chad_transform(cfg, arr.args, arr.body), TransformError);
  }
  Program lam = parse_program("(program (args (x Real)) (app (lam (y Real) y) x))");
  TransformConfig mono{Mode::Monadic, true};
  REQUIRE_THROWS_AS(chad_transform(mono, lam.args, lam.body), TransformError);
  TransformConfig noarr{Mode::Monadic, false};
  REQUIRE_THROWS_AS(chad_transform(noarr, arr.args, arr.body), TransformError);
}

TEST_CASE("transformation is deterministic byte for byte") {
  auto entries = corpus::load();
  for (const auto& e : entries) {
    if (e.ho) continue;
    TransformConfig cfg{Mode::Monadic, true};
    TermPtr d1v = chad_transform(cfg, e.prog.args, e.prog.body);
    TermPtr d2v = chad_transform(cfg, e.prog.args, e.prog.body);
    REQUIRE(pretty_term(d1_context(e.prog.args), d1v) ==
            pretty_term(d1_context(e.prog.args), d2v));
  }
}

TEST_CASE("array edge cases: singleton folds and empty builds") {
  // fold of a one-element array records a bare leaf
  Program p = parse_program(
      "(program (args (xs (Array Real))) (fold (p (op mul (fst p) (snd p))) xs))");
  std::vector<Value> one{v_arr({v_real(3.0)})};
  auto env = grad(PipeMode::Monadic, p.args, p.body, one, c_r(1.0));
  REQUIRE(densify_env(p.args, one, env) == std::vector<double>{1.0});

  // a zero-length build contributes nothing and breaks nothing
  Program q = parse_program(
      "(program (args (x Real)) (let (a (Array Real)) (build 0i (i 1.0)) (op mul x x)))");
  auto env2 = grad(PipeMode::Monadic, q.args, q.body, {v_real(4)}, c_r(1.0));
  REQUIRE(env2[0]->r == 8.0);
}

TEST_CASE("structured seeds flow through projections and arrays") {
  // seed a pair-valued program and check the split
  Program p = parse_program("(program (args (x Real) (y Real)) (pair (op mul x y) x))");
  std::vector<Value> pt{v_real(3), v_real(2)};
  auto env = grad(PipeMode::Monadic, p.args, p.body, pt, c_pair(c_r(1.0), c_r(0.0)));
  auto d = densify_env(p.args, pt, env);
  REQUIRE(d == std::vector<double>{2.0, 3.0});
  auto env2 = grad(PipeMode::Monadic, p.args, p.body, pt, c_pair(c_r(0.0), c_r(1.0)));
  auto d2v = densify_env(p.args, pt, env2);
  REQUIRE(d2v == std::vector<double>{1.0, 0.0});

  // array-valued result seeded with a one-hot bag
  Program q = parse_program(
      "(program (args (xs (Array Real))) (build (length xs) (i (op mul (index xs i) "
      "(index xs i)))))");
  std::vector<Value> qt{v_arr({v_real(1), v_real(2), v_real(3)})};
  auto env3 = grad(PipeMode::Monadic, q.args, q.body, qt, c_bag_one(1, c_r(1.0)));
  auto d3 = densify_env(q.args, qt, env3);
  REQUIRE(d3 == std::vector<double>{0.0, 4.0, 0.0});
}
