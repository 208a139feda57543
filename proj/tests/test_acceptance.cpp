// Acceptance suite: one test per criterion, each printing a pass/fail line.
// Tolerances and thresholds are pinned here, in code.

#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <iostream>
#include <random>

#include "chad/bench.hpp"
#include "chad/oracle.hpp"
#include "chad/parse.hpp"

#include "corpus_util.hpp"

using namespace chad;

namespace {

struct Banner {
  std::string label;
  bool ok = false;
  ~Banner() {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << label << std::endl;
  }
};

// pinned constant for criterion 3: primal-of-derivative / original cost
constexpr double kPrimalOverheadBound = 24.0;

} // namespace

TEST_CASE("criterion 1: gradient correctness against both oracles") {
  Banner banner{"criterion 1: gradients match grad_forward (1e-10) and grad_fd (1e-5)"};
  auto entries = corpus::load();
  REQUIRE(entries.size() >= 30);
  std::mt19937_64 rng(1001);
  for (const auto& e : entries) {
    PipeMode m = e.ho ? PipeMode::Defunctionalise : PipeMode::Monadic;
    Pipeline pl = prepare_pipeline(m, e.prog.args, e.prog.body);
    for (int k = 0; k < 10; ++k) {
      auto pt = corpus::sample_point(e, rng);
      GradOutcome g = run_pipeline(pl, pt, c_r(1.0));
      for (size_t i = 0; i < g.env.size(); ++i)
        REQUIRE(cot_shape_valid(d2_type(pl.run_ctx[i].ty), g.env[i]));
      auto mine = densify_env(e.prog.args, pt, g.env);
      auto fw = grad_forward(e.prog.args, e.prog.body, pt);
      auto fd = grad_fd(e.prog.args, e.prog.body, pt);
      INFO(e.file << " point " << k);
      REQUIRE(max_rel_err(mine, fw) <= 1e-10);
      REQUIRE(max_rel_err(mine, fd) <= 1e-5);
    }
  }
  banner.ok = true;
}

TEST_CASE("criterion 2: the three first-order strategies agree") {
  Banner banner{"criterion 2: naive-dense = naive-treemap = monadic (1e-12)"};
  auto entries = corpus::load();
  std::mt19937_64 rng(1002);
  for (const auto& e : entries) {
    if (e.ho || e.arrays) continue;
    Pipeline pm = prepare_pipeline(PipeMode::Monadic, e.prog.args, e.prog.body);
    Pipeline pd = prepare_pipeline(PipeMode::NaiveDense, e.prog.args, e.prog.body);
    Pipeline pt_ = prepare_pipeline(PipeMode::NaiveTreeMap, e.prog.args, e.prog.body);
    for (int k = 0; k < 5; ++k) {
      auto pt = corpus::sample_point(e, rng);
      auto a = densify_env(e.prog.args, pt, run_pipeline(pm, pt, c_r(1.0)).env);
      auto b = densify_env(e.prog.args, pt, run_pipeline(pd, pt, c_r(1.0)).env);
      auto c = densify_env(e.prog.args, pt, run_pipeline(pt_, pt, c_r(1.0)).env);
      INFO(e.file);
      REQUIRE(max_rel_err(a, b) <= 1e-12);
      REQUIRE(max_rel_err(a, c) <= 1e-12);
    }
  }
  banner.ok = true;
}

TEST_CASE("criterion 3: primal preservation with pinned overhead") {
  Banner banner{"criterion 3: eval(fst D[t]) = eval(t), cost ratio <= 24, stable in size"};
  auto entries = corpus::load();
  std::mt19937_64 rng(1003);
  double worst = 0;
  for (const auto& e : entries) {
    PipeMode m = e.ho ? PipeMode::Defunctionalise : PipeMode::Monadic;
    Pipeline pl = prepare_pipeline(m, e.prog.args, e.prog.body);
    auto pt = corpus::sample_point(e, rng);
    auto [v0, c0] = eval_source(e.prog.args, e.prog.body, pt);
    auto [v1, c1] = eval_primal_half(pl, pt);
    INFO(e.file);
    REQUIRE(value_eq(v0, v1));
    worst = std::max(worst, (double)c1 / (double)c0);
  }
  std::cout << "  max primal-of-derivative overhead on the corpus: " << worst << "\n";
  REQUIRE(worst <= kPrimalOverheadBound);

  // within a family, the ratio may not drift with size by more than 10%
  for (Family f : {Family::DeepLet, Family::Fanout, Family::CaseLadder, Family::TMagic,
                   Family::ArrayBuildFold}) {
    std::vector<double> ratios;
    for (long long n : {256, 4096}) {
      FamilyProgram fp = gen_family(f, n);
      auto pt = family_point(f, n);
      auto [v0, c0] = eval_source(fp.ctx, fp.term, pt);
      Pipeline pl = prepare_pipeline(PipeMode::Monadic, fp.ctx, fp.term);
      auto [v1, c1] = eval_primal_half(pl, pt);
      REQUIRE(value_eq(v0, v1));
      ratios.push_back((double)c1 / (double)c0);
    }
    INFO(family_name(f));
    REQUIRE(std::fabs(ratios[1] / ratios[0] - 1.0) <= 0.10);
  }
  banner.ok = true;
}

TEST_CASE("criterion 4: flat adjusted ratios under the monadic strategy") {
  Banner banner{"criterion 4: adjusted ratio at 2^14 <= 1.2 x ratio at 2^6 (monadic)"};
  std::vector<long long> sizes;
  for (long long n = 64; n <= 16384; n *= 2) sizes.push_back(n);
  for (Family f : {Family::DeepLet, Family::Fanout, Family::TMagic, Family::CaseLadder}) {
    BenchReport rep = regression_check(f, PipeMode::Monadic, sizes, Rule::FlatRatio);
    std::cout << "  " << family_name(f) << ": adjusted " << adjusted_ratio(rep.rows.front())
              << " -> " << adjusted_ratio(rep.rows.back()) << "\n";
    INFO(family_name(f));
    REQUIRE(rep.pass);
  }
  // arrays to 1e5 elements
  std::vector<long long> asz;
  for (long long n = 64; n <= 16384; n *= 2) asz.push_back(n);
  asz.push_back(100000);
  BenchReport arep = regression_check(Family::ArrayBuildFold, PipeMode::Monadic, asz,
                                      Rule::FlatRatio);
  std::cout << "  array-buildfold: adjusted " << adjusted_ratio(arep.rows.front()) << " -> "
            << adjusted_ratio(arep.rows.back()) << "\n";
  REQUIRE(arep.pass);
  banner.ok = true;
}

TEST_CASE("criterion 5a: the tree-map environment grows on the add-tree") {
  Banner banner{"criterion 5a: t_magic under naive-treemap grows >= 1.5x from 2^6 to 2^14"};
  std::vector<long long> sizes;
  for (long long n = 64; n <= 16384; n *= 2) sizes.push_back(n);
  BenchReport rep = regression_check(Family::TMagic, PipeMode::NaiveTreeMap, sizes, Rule::Growth);
  std::cout << "  adjusted " << adjusted_ratio(rep.rows.front()) << " -> "
            << adjusted_ratio(rep.rows.back()) << "\n";
  REQUIRE(rep.pass);
  banner.ok = true;
}

TEST_CASE("criterion 5b: naive higher-order cost doubles per nesting level") {
  Banner banner{"criterion 5b: t_n naive-ho doubling ratio in [1.8, 2.2] for n = 8..12"};
  BenchReport rep = regression_check(Family::TN, PipeMode::NaiveHO, {8, 9, 10, 11, 12},
                                     Rule::Doubling);
  for (size_t i = 1; i < rep.rows.size(); ++i)
    std::cout << "  n=" << rep.rows[i].n << " ratio "
              << (double)rep.rows[i].cost_derivative / (double)rep.rows[i - 1].cost_derivative
              << "\n";
  REQUIRE(rep.pass);
  banner.ok = true;
}

TEST_CASE("criterion 5c: conversion repairs the blowup") {
  Banner banner{"criterion 5c: t_n cost(2n)/cost(n) <= 2.3 after defunctionalise/closure-chad"};
  std::vector<long long> sizes{64, 128, 256, 512, 1024};
  for (PipeMode m : {PipeMode::Defunctionalise, PipeMode::ClosedChad}) {
    BenchReport rep = regression_check(Family::TN, m, sizes, Rule::Linear);
    std::cout << "  " << pipe_mode_name(m) << ": cost(1024)/cost(512) = "
              << (double)rep.rows.back().cost_derivative /
                     (double)rep.rows[rep.rows.size() - 2].cost_derivative
              << "\n";
    INFO(pipe_mode_name(m));
    REQUIRE(rep.pass);
  }
  banner.ok = true;
}

namespace {

Ty gen_shape_ty(std::mt19937_64& rng, int depth) {
  auto pick = [&](int n) { return (int)(rng() % (uint64_t)n); };
  if (depth <= 0 || pick(3) == 0) return pick(3) ? ty_lreal() : ty_lunit();
  if (pick(2)) return ty_lprod(gen_shape_ty(rng, depth - 1), gen_shape_ty(rng, depth - 1));
  return ty_lsum(gen_shape_ty(rng, depth - 1), gen_shape_ty(rng, depth - 1));
}

Cot gen_cot(const Ty& ty, std::mt19937_64& rng, uint64_t branch_seed, int path = 0) {
  auto sparse = [&] { return rng() % 4 == 0; };
  switch (ty.k) {
    case TyKind::LReal: return c_r(((double)(rng() % 2000) - 1000.0) / 64.0);
    case TyKind::LUnit: return c_unit();
    case TyKind::LProd:
      if (sparse()) return c_pzero();
      return c_pair(gen_cot(ty.a[0], rng, branch_seed, path * 2 + 1),
                    gen_cot(ty.a[1], rng, branch_seed, path * 2 + 2));
    default: {
      if (sparse()) return c_szero();
      bool left = ((branch_seed >> (path % 61)) & 1) != 0;
      return left ? c_inl(gen_cot(ty.a[0], rng, branch_seed, path * 2 + 1))
                  : c_inr(gen_cot(ty.a[1], rng, branch_seed, path * 2 + 2));
    }
  }
}

} // namespace

TEST_CASE("criterion 6: the amortised plus law, ten thousand trials") {
  Banner banner{"criterion 6: lplus cost <= c_phi * potential destroyed, 10^4 trials"};
  std::mt19937_64 rng(1006);
  for (int trial = 0; trial < 10000; ++trial) {
    Ty ty = gen_shape_ty(rng, 1 + (int)(rng() % 8));
    uint64_t branches = rng();
    Cot a = gen_cot(ty, rng, branches);
    Cot b = gen_cot(ty, rng, branches);
    long long cost = 0;
    Cot s = cot_plus(a, b, cost);
    INFO("trial " << trial);
    REQUIRE(cost <= c_phi * (cot_size(a) + cot_size(b) - cot_size(s)));
  }
  banner.ok = true;
}

TEST_CASE("criterion 7: constant-time slot operations, exact handler cost") {
  Banner banner{"criterion 7: one/scope/push/pop flat across depths; run = 1 + 2n + inner"};
  auto one_cost = [](size_t depth) {
    auto n = std::make_shared<ActionNode>();
    n->k = ActionNode::One;
    n->level = 0;
    n->d = c_r(1.0);
    Evaluator ev;
    EvmState st;
    for (size_t i = 0; i < depth; ++i) st.slots.emplace_back(ty_lreal(), c_r(0));
    ev.exec(st, n);
    long long plus_part = 1; // adding CR to CR zips one node
    return ev.cost.steps - plus_part;
  };
  auto scope_cost = [](size_t depth) {
    auto ret = std::make_shared<ActionNode>();
    ret->k = ActionNode::Ret;
    ret->v = v_unit();
    auto sc = std::make_shared<ActionNode>();
    sc->k = ActionNode::Scope;
    sc->ty = ty_lreal();
    sc->m = ret;
    Evaluator ev;
    EvmState st;
    for (size_t i = 0; i < depth; ++i) st.slots.emplace_back(ty_lreal(), c_r(0));
    ev.exec(st, sc);
    return ev.cost.steps - 1; // minus the body
  };
  auto push_cost = [](size_t depth) {
    CostCounter c;
    EvmState st;
    for (size_t i = 0; i < depth; ++i) st.slots.emplace_back(ty_lreal(), c_r(0));
    evm_push(st, ty_lreal(), c);
    return c.steps;
  };
  auto pop_cost = [](size_t depth) {
    CostCounter c;
    EvmState st;
    for (size_t i = 0; i < depth + 1; ++i) st.slots.emplace_back(ty_lreal(), c_r(0));
    evm_pop(st, c);
    return c.steps;
  };
  for (size_t depth : {16u, 256u, 4096u}) {
    REQUIRE(one_cost(depth) == one_cost(1));
    REQUIRE(scope_cost(depth) == scope_cost(1));
    REQUIRE(push_cost(depth) == push_cost(1));
    REQUIRE(pop_cost(depth) == pop_cost(1));
  }
  for (size_t n : {0u, 1u, 16u, 256u, 4096u}) {
    auto ret = std::make_shared<ActionNode>();
    ret->k = ActionNode::Ret;
    ret->v = v_unit();
    Evaluator ev;
    std::vector<Ty> tys(n, ty_lreal());
    std::vector<Cot> zeros;
    for (size_t i = 0; i < n; ++i) zeros.push_back(c_r(0));
    ev.run(ret, tys, std::move(zeros));
    long long inner = 1;
    REQUIRE(ev.cost.steps == 1 + 2 * (long long)n + inner);
  }
  banner.ok = true;
}

TEST_CASE("criterion 8: monoid laws at scale; bag combination is one step") {
  Banner banner{"criterion 8: zero identity, commutativity, associativity on 10^4 pairs"};
  std::mt19937_64 rng(1008);
  auto dense_of = [&](const Ty& ty, const Cot& c) {
    std::function<size_t(const Ty&)> width = [&](const Ty& t) -> size_t {
      if (t.k == TyKind::LReal) return 1;
      if (t.k == TyKind::LUnit) return 0;
      return width(t.a[0]) + width(t.a[1]);
    };
    std::function<void(const Ty&, const Cot&, double*)> go = [&](const Ty& t, const Cot& x,
                                                                 double* out) {
      if (cot_is_zero_node(x)) return;
      switch (t.k) {
        case TyKind::LReal: out[0] += x->r; return;
        case TyKind::LUnit: return;
        case TyKind::LProd:
          go(t.a[0], x->a, out);
          go(t.a[1], x->b, out + width(t.a[0]));
          return;
        default:
          if (x->k == CotKind::CInl) go(t.a[0], x->a, out);
          else go(t.a[1], x->a, out + width(t.a[0]));
          return;
      }
    };
    std::vector<double> out(width(ty), 0.0);
    go(ty, c, out.data());
    return out;
  };
  for (int trial = 0; trial < 10000; ++trial) {
    Ty ty = gen_shape_ty(rng, 1 + (int)(rng() % 6));
    uint64_t branches = rng();
    Cot a = gen_cot(ty, rng, branches);
    Cot b = gen_cot(ty, rng, branches);
    Cot c = gen_cot(ty, rng, branches);
    long long cost = 0;
    REQUIRE(cot_eq(cot_plus(a, cot_zero(ty), cost), a));
    REQUIRE(cot_eq(cot_plus(cot_zero(ty), a, cost), a));
    auto ab = dense_of(ty, cot_plus(a, b, cost));
    auto ba = dense_of(ty, cot_plus(b, a, cost));
    REQUIRE(ab == ba);
    auto l = dense_of(ty, cot_plus(cot_plus(a, b, cost), c, cost));
    auto r = dense_of(ty, cot_plus(a, cot_plus(b, c, cost), cost));
    for (size_t i = 0; i < l.size(); ++i) {
      double scale = std::max({std::fabs(l[i]), std::fabs(r[i]), 1.0});
      REQUIRE(std::fabs(l[i] - r[i]) <= 1e-12 * scale);
    }
  }
  // bag plus is one step regardless of operand sizes
  std::mt19937_64 rng2(10088);
  Cot bag = c_bag_empty();
  for (int i = 0; i < 1000; ++i) {
    Cot one = c_bag_one((long long)(rng2() % 64), c_r(1.0));
    long long cost = 0;
    Cot combined = cot_plus(bag, one, cost);
    REQUIRE(cost == 1);
    bag = combined;
  }
  banner.ok = true;
}

TEST_CASE("criterion 9: closure conversion preserves semantics on 100 points") {
  Banner banner{"criterion 9: converted programs agree with the originals exactly"};
  auto entries = corpus::load();
  std::mt19937_64 rng(1009);
  for (const auto& e : entries) {
    if (!e.ho) continue;
    Program cc = closure_convert(e.prog);
    for (int k = 0; k < 100; ++k) {
      auto pt = corpus::sample_point(e, rng);
      auto [v0, c0] = eval_source(e.prog.args, e.prog.body, pt);
      auto [v1, c1] = eval_source(cc.args, cc.body, pt);
      INFO(e.file << " point " << k);
      REQUIRE(value_eq(v0, v1));
    }
  }
  banner.ok = true;
}
