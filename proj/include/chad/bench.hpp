#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "chad/grad.hpp"

// Program-family generators and the empirical complexity regressions. Costs
// are the evaluator's exact step counts; reports are deterministic, points
// come from a fixed seeded generator. The flat-ratio rule subtracts the
// handler and seed allowances (c'' per context entry for the handler plus the
// zero tuple, c_phi per seed node) before comparing ratios, since those terms
// are additive and would fake growth for wide contexts.

namespace chad {

enum class Family { DeepLet, Fanout, TMagic, TN, CaseLadder, ArrayBuildFold };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::DeepLet: return "deep-let";
    case Family::Fanout: return "fanout";
    case Family::TMagic: return "t_magic";
    case Family::TN: return "t_n";
    case Family::CaseLadder: return "case-ladder";
    case Family::ArrayBuildFold: return "array-buildfold";
  }
  return "?";
}

inline bool family_from_string(const std::string& s, Family& out) {
  for (Family f : {Family::DeepLet, Family::Fanout, Family::TMagic, Family::TN,
                   Family::CaseLadder, Family::ArrayBuildFold})
    if (s == family_name(f)) {
      out = f;
      return true;
    }
  return false;
}

struct FamilyProgram {
  Context ctx;
  TermPtr term;
};

namespace detail {

inline TermPtr tmagic_tree(long long lo, long long hi) {
  if (hi - lo == 1) return mk_var(lo, "x" + std::to_string(lo));
  long long mid = lo + (hi - lo) / 2;
  return mk_op("add", {tmagic_tree(lo, mid), tmagic_tree(mid, hi)});
}

inline TermPtr tn_chain(long long k, long long arg, long long depth) {
  if (k == 0) return mk_var(arg);
  TermPtr body = tn_chain(k - 1, depth, depth + 1);
  return mk_app(mk_lam("y" + std::to_string(k), ty_real(), std::move(body)), mk_var(arg));
}

} // namespace detail

inline FamilyProgram gen_family(Family f, long long n) {
  if (n < 1 || n > (1 << 20))
    throw TransformError("SizeOutOfRange", "family size " + std::to_string(n));
  switch (f) {
    case Family::DeepLet: {
      // let a1 = 2*x in let a2 = 2*a1 in ... a_n
      TermPtr body = mk_var(n, "a" + std::to_string(n));
      for (long long i = n; i >= 1; --i) {
        TermPtr bound = mk_op("mul", {mk_real(2.0), mk_var(i - 1)});
        body = mk_let("a" + std::to_string(i), ty_real(), std::move(bound), std::move(body));
      }
      return {{{"x", ty_real()}}, std::move(body)};
    }
    case Family::Fanout: {
      // let a1 = x + x in let a2 = a1 + a1 in ... a_n
      TermPtr body = mk_var(n, "a" + std::to_string(n));
      for (long long i = n; i >= 1; --i) {
        TermPtr bound = mk_op("add", {mk_var(i - 1), mk_var(i - 1)});
        body = mk_let("a" + std::to_string(i), ty_real(), std::move(bound), std::move(body));
      }
      return {{{"x", ty_real()}}, std::move(body)};
    }
    case Family::TMagic: {
      long long r = 0;
      while ((2ll << r) <= n) ++r; // r = floor(log2 n)
      long long m = 1ll << r;
      Context ctx;
      for (long long i = 0; i < m; ++i) ctx.push_back({"x" + std::to_string(i), ty_real()});
      return {std::move(ctx), detail::tmagic_tree(0, m)};
    }
    case Family::TN: {
      if (n > 4096) throw TransformError("SizeOutOfRange", "t_n size " + std::to_string(n));
      return {{{"x", ty_real()}}, detail::tn_chain(n, 0, 1)};
    }
    case Family::CaseLadder: {
      // a_i = case sign(a_{i-1}) of _ -> a_{i-1}+1 | _ -> a_{i-1}+2
      TermPtr body = mk_var(n, "a" + std::to_string(n));
      for (long long i = n; i >= 1; --i) {
        TermPtr lb = mk_op("add", {mk_var(i - 1), mk_real(1.0)});
        TermPtr rb = mk_op("add", {mk_var(i - 1), mk_real(2.0)});
        TermPtr scrut = mk(TermKind::Sign, {mk_var(i - 1)});
        TermPtr c = mk(TermKind::Case, {std::move(scrut), std::move(lb), std::move(rb)}, {},
                       {"u", "v"});
        body = mk_let("a" + std::to_string(i), ty_real(), std::move(c), std::move(body));
      }
      return {{{"x", ty_real()}}, std::move(body)};
    }
    case Family::ArrayBuildFold: {
      // fold (+) over build (length xs) (i -> xs[i] * xs[i])
      TermPtr sq = mk_op("mul", {mk(TermKind::Index, {mk_var(0, "xs"), mk_var(1, "i")}),
                                 mk(TermKind::Index, {mk_var(0, "xs"), mk_var(1, "i")})});
      TermPtr arr = mk(TermKind::Build, {mk(TermKind::Length, {mk_var(0, "xs")}), std::move(sq)},
                       {}, {"i"});
      TermPtr comb = mk_op("add", {mk_fst(mk_var(1, "p")), mk_snd(mk_var(1, "p"))});
      TermPtr fold = mk(TermKind::Fold, {std::move(comb), std::move(arr)}, {}, {"p"});
      return {{{"xs", ty_array(ty_real())}}, std::move(fold)};
    }
  }
  throw TransformError("SizeOutOfRange", "unknown family");
}

inline std::vector<Value> family_point(Family f, long long n) {
  std::mt19937_64 rng(0x9e3779b97f4a7c15ull ^ (uint64_t)f ^ ((uint64_t)n << 20));
  std::uniform_real_distribution<double> u(0.5, 1.5);
  switch (f) {
    case Family::TMagic: {
      long long r = 0;
      while ((2ll << r) <= n) ++r;
      long long m = 1ll << r;
      std::vector<Value> out;
      for (long long i = 0; i < m; ++i) out.push_back(v_real(u(rng)));
      return out;
    }
    case Family::ArrayBuildFold: {
      std::vector<Value> elems;
      for (long long i = 0; i < n; ++i) elems.push_back(v_real(u(rng)));
      return {v_arr(std::move(elems))};
    }
    default: return {v_real(u(rng))};
  }
}

struct BenchRow {
  long long n = 0;
  long long cost_primal = 0;
  long long cost_derivative = 0;
  double ratio = 0;
  long long n_ctx = 0;
  long long seed_size = 0;
};

enum class Rule { FlatRatio, Growth, Doubling, Linear };

inline const char* rule_name(Rule r) {
  switch (r) {
    case Rule::FlatRatio: return "flat-ratio";
    case Rule::Growth: return "growth";
    case Rule::Doubling: return "doubling";
    case Rule::Linear: return "linear";
  }
  return "?";
}

inline bool rule_from_string(const std::string& s, Rule& out) {
  for (Rule r : {Rule::FlatRatio, Rule::Growth, Rule::Doubling, Rule::Linear})
    if (s == rule_name(r)) {
      out = r;
      return true;
    }
  return false;
}

struct BenchReport {
  Family family;
  PipeMode mode;
  Rule rule;
  std::vector<BenchRow> rows;
  bool pass = false;
};

inline BenchRow measure(Family f, PipeMode mode, long long n) {
  FamilyProgram fp = gen_family(f, n);
  std::vector<Value> point = family_point(f, n);
  auto [v0, cost_p] = eval_source(fp.ctx, fp.term, point);
  Pipeline pl = prepare_pipeline(mode, fp.ctx, fp.term);
  GradOutcome g = run_pipeline(pl, point, c_r(1.0));
  BenchRow row;
  row.n = n;
  row.cost_primal = cost_p;
  row.cost_derivative = g.cost_derivative;
  row.ratio = (double)g.cost_derivative / (double)cost_p;
  row.n_ctx = (long long)pl.run_ctx.size();
  row.seed_size = g.seed_size;
  return row;
}

// Eq-3 allowances: the handler costs c_run per context entry plus two steps
// per entry for the zero tuple, and the seed brings c_phi potential per node.
inline double adjusted_ratio(const BenchRow& r) {
  double adj = (double)r.cost_derivative - (double)(c_run + 2) * (double)r.n_ctx -
               (double)c_phi * (double)r.seed_size;
  return adj / (double)r.cost_primal;
}

inline bool rule_holds(Rule rule, const std::vector<BenchRow>& rows) {
  if (rows.size() < 2) return false;
  switch (rule) {
    case Rule::FlatRatio:
      return adjusted_ratio(rows.back()) <= 1.2 * adjusted_ratio(rows.front());
    case Rule::Growth:
      return adjusted_ratio(rows.back()) >= 1.5 * adjusted_ratio(rows.front());
    case Rule::Doubling: {
      for (size_t i = 1; i < rows.size(); ++i) {
        double q = (double)rows[i].cost_derivative / (double)rows[i - 1].cost_derivative;
        if (q < 1.8 || q > 2.2) return false;
      }
      return true;
    }
    case Rule::Linear: {
      for (size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].n != 2 * rows[i - 1].n) continue;
        double q = (double)rows[i].cost_derivative / (double)rows[i - 1].cost_derivative;
        if (q > 2.3) return false;
      }
      return true;
    }
  }
  return false;
}

inline BenchReport regression_check(Family f, PipeMode mode, const std::vector<long long>& sizes,
                                    Rule rule) {
  BenchReport rep;
  rep.family = f;
  rep.mode = mode;
  rep.rule = rule;
  for (long long n : sizes) rep.rows.push_back(measure(f, mode, n));
  rep.pass = rule_holds(rule, rep.rows);
  return rep;
}

inline nlohmann::ordered_json report_to_json(const BenchReport& r) {
  nlohmann::ordered_json j;
  j["family"] = family_name(r.family);
  j["mode"] = pipe_mode_name(r.mode);
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json x;
    x["n"] = row.n;
    x["cost_primal"] = row.cost_primal;
    x["cost_derivative"] = row.cost_derivative;
    x["ratio"] = row.ratio;
    j["rows"].push_back(std::move(x));
  }
  j["rule"] = rule_name(r.rule);
  j["pass"] = r.pass;
  return j;
}

// "a..b": doubling sizes when both bounds are powers of two, else unit steps.
inline std::vector<long long> parse_sizes(const std::string& s) {
  auto dots = s.find("..");
  if (dots == std::string::npos) return {std::stoll(s)};
  long long a = std::stoll(s.substr(0, dots));
  long long b = std::stoll(s.substr(dots + 2));
  if (a <= 0 || b < a) throw TransformError("SizeOutOfRange", "bad size range " + s);
  auto pow2 = [](long long v) { return (v & (v - 1)) == 0; };
  std::vector<long long> out;
  if (pow2(a) && pow2(b) && b / a >= 2) {
    for (long long v = a; v <= b; v *= 2) out.push_back(v);
  } else {
    for (long long v = a; v <= b; ++v) out.push_back(v);
  }
  return out;
}

} // namespace chad
