#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "chad/bench.hpp"
#include "chad/parse.hpp"
#include "chad/pretty.hpp"

using namespace chad;

TEST_CASE("family shapes match their documented forms") {
  // complete binary add-tree over four inputs
  FamilyProgram tm = gen_family(Family::TMagic, 4);
  REQUIRE(tm.ctx.size() == 4);
  Context ctx4{{"x0", ty_real()}, {"x1", ty_real()}, {"x2", ty_real()}, {"x3", ty_real()}};
  TermPtr want = parse_term_in(ctx4, "(op add (op add x0 x1) (op add x2 x3))");
  REQUIRE(term_eq(tm.term, want));

  // two nested identity applications
  FamilyProgram tn = gen_family(Family::TN, 2);
  Context cx{{"x", ty_real()}};
  TermPtr want_tn = parse_term_in(cx, "(app (lam (y2 Real) (app (lam (y1 Real) y1) y2)) x)");
  REQUIRE(term_eq(tn.term, want_tn));

  // chain of doubling lets
  FamilyProgram dl = gen_family(Family::DeepLet, 3);
  TermPtr want_dl = parse_term_in(
      cx,
      "(let (a Real) (op mul 2 x) (let (b Real) (op mul 2 a) (let (c Real) (op mul 2 b) c)))");
  REQUIRE(term_eq(dl.term, want_dl));

  REQUIRE_THROWS_AS(gen_family(Family::DeepLet, 0), TransformError);
  for (Family f : {Family::DeepLet, Family::Fanout, Family::TMagic, Family::TN,
                   Family::CaseLadder, Family::ArrayBuildFold}) {
    FamilyProgram fp = gen_family(f, 6);
    REQUIRE_NOTHROW(typecheck(fp.ctx, fp.term));
  }
}

TEST_CASE("primal cost grows linearly for the linear families") {
  for (Family f : {Family::DeepLet, Family::Fanout, Family::CaseLadder, Family::TMagic,
                   Family::ArrayBuildFold}) {
    long long prev = 0;
    for (long long n : {256, 512, 1024}) {
      FamilyProgram fp = gen_family(f, n);
      auto [v, c] = eval_source(fp.ctx, fp.term, family_point(f, n));
      if (prev) {
        double q = (double)c / (double)prev;
        INFO(family_name(f) << " at " << n);
        REQUIRE(q >= 1.8);
        REQUIRE(q <= 2.2);
      }
      prev = c;
    }
  }
}

TEST_CASE("an identity-like program has the same ratio at every size") {
  double first = 0;
  for (long long n : {64, 256, 1024}) {
    BenchRow r = measure(Family::DeepLet, PipeMode::Monadic, n);
    if (first == 0)
      first = adjusted_ratio(r);
    else
      REQUIRE(adjusted_ratio(r) == Catch::Approx(first).epsilon(0.02));
  }
}

TEST_CASE("the tree-map strategy grows on the add-tree; the monadic one does not") {
  auto flat = regression_check(Family::TMagic, PipeMode::Monadic, {64, 256, 1024, 4096},
                               Rule::FlatRatio);
  REQUIRE(flat.pass);
  auto grow = regression_check(Family::TMagic, PipeMode::NaiveTreeMap, {64, 256, 1024, 4096},
                               Rule::Growth);
  REQUIRE(grow.pass);
  // and the same rows fail the flat-ratio criterion
  REQUIRE(!rule_holds(Rule::FlatRatio, grow.rows));
}

TEST_CASE("doubling rule passes on the naive higher-order path") {
  auto rep = regression_check(Family::TN, PipeMode::NaiveHO, parse_sizes("4..12"),
                              Rule::Doubling);
  REQUIRE(rep.pass);
}

TEST_CASE("reports are deterministic and their JSON layout is stable") {
  auto a = regression_check(Family::Fanout, PipeMode::Monadic, {64, 128, 256}, Rule::FlatRatio);
  auto b = regression_check(Family::Fanout, PipeMode::Monadic, {64, 128, 256}, Rule::FlatRatio);
  REQUIRE(report_to_json(a).dump() == report_to_json(b).dump());
  std::string s = report_to_json(a).dump();
  REQUIRE(s.rfind("{\"family\":\"fanout\",\"mode\":\"monadic\",\"rows\":[{\"n\":64,"
                  "\"cost_primal\":",
                  0) == 0);
  REQUIRE(s.find("\"rule\":\"flat-ratio\",\"pass\":true}") != std::string::npos);
}

TEST_CASE("size ranges parse as documented") {
  REQUIRE(parse_sizes("64..256") == std::vector<long long>{64, 128, 256});
  REQUIRE(parse_sizes("8..12") == std::vector<long long>{8, 9, 10, 11, 12});
  REQUIRE(parse_sizes("128") == std::vector<long long>{128});
  REQUIRE_THROWS_AS(parse_sizes("16..4"), TransformError);
}

TEST_CASE("rules evaluate measured rows, not wishes") {
  std::vector<BenchRow> rows;
  for (long long n : {64, 128, 256, 512}) {
    BenchRow r;
    r.n = n;
    r.cost_primal = 10 * n;
    r.cost_derivative = 100 * n; // perfectly flat
    r.n_ctx = 1;
    r.seed_size = 1;
    rows.push_back(r);
  }
  REQUIRE(rule_holds(Rule::FlatRatio, rows));
  REQUIRE(!rule_holds(Rule::Growth, rows));
  REQUIRE(rule_holds(Rule::Linear, rows));
  rows.back().cost_derivative *= 3; // super-linear tail
  REQUIRE(!rule_holds(Rule::FlatRatio, rows));
  REQUIRE(!rule_holds(Rule::Linear, rows));
}
