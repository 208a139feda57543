#pragma once

#include <string>
#include <vector>

#include "chad/chad.hpp"
#include "chad/eval.hpp"
#include "chad/hoc.hpp"

// End-to-end derivative pipelines. A pipeline fixes how the program is
// prepared (closure conversion, defunctionalisation) and which transformation
// differentiates it; running it evaluates the derivative, feeds the seed to
// the backpropagator and extracts the per-variable environment cotangent.

namespace chad {

enum class PipeMode { NaiveDense, NaiveTreeMap, Monadic, NaiveHO, Defunctionalise, ClosedChad };

inline const char* pipe_mode_name(PipeMode m) {
  switch (m) {
    case PipeMode::NaiveDense: return "naive-dense";
    case PipeMode::NaiveTreeMap: return "naive-treemap";
    case PipeMode::Monadic: return "monadic";
    case PipeMode::NaiveHO: return "naive-ho";
    case PipeMode::Defunctionalise: return "defunctionalise";
    case PipeMode::ClosedChad: return "closure-chad";
  }
  return "?";
}

inline bool pipe_mode_from_string(const std::string& s, PipeMode& out) {
  for (PipeMode m : {PipeMode::NaiveDense, PipeMode::NaiveTreeMap, PipeMode::Monadic,
                     PipeMode::NaiveHO, PipeMode::Defunctionalise, PipeMode::ClosedChad})
    if (s == pipe_mode_name(m)) {
      out = m;
      return true;
    }
  return false;
}

inline bool pipe_runs_monadically(PipeMode m) {
  return m == PipeMode::Monadic || m == PipeMode::Defunctionalise;
}

struct Pipeline {
  PipeMode mode;
  Context src_ctx;  // the original program's context
  Context run_ctx;  // context of the differentiated program
  TermPtr deriv;    // transformed derivative term
  Ty result_ty;     // source result type of the differentiated program
};

inline Mode chad_mode_of(PipeMode m) {
  switch (m) {
    case PipeMode::NaiveDense: return Mode::NaiveDense;
    case PipeMode::NaiveTreeMap: return Mode::NaiveTreeMap;
    case PipeMode::Monadic:
    case PipeMode::Defunctionalise: return Mode::Monadic;
    case PipeMode::NaiveHO: return Mode::NaiveHO;
    case PipeMode::ClosedChad: return Mode::ClosedChad;
  }
  return Mode::Monadic;
}

inline Pipeline prepare_pipeline(PipeMode mode, const Context& ctx, const TermPtr& term) {
  Program p{ctx, term};
  if (mode == PipeMode::Defunctionalise) p = defunctionalise(closure_convert(p));
  if (mode == PipeMode::ClosedChad) p = closure_convert(p);
  Ty rty = typecheck(p);
  TransformConfig cfg{chad_mode_of(mode), true};
  Pipeline pl;
  pl.mode = mode;
  pl.src_ctx = ctx;
  pl.run_ctx = p.args;
  pl.result_ty = rty;
  pl.deriv = chad_transform(cfg, p.args, p.body);
  return pl;
}

// Split a dense (left-nested) environment cotangent into per-level entries.
inline std::vector<Cot> split_dense_env(const Cot& e, size_t n) {
  std::vector<Cot> out(n);
  if (n == 0) return out;
  Cot cur = e;
  for (size_t i = n; i-- > 1;) {
    out[i] = cot_lsnd(cur);
    cur = cot_lfst(cur);
  }
  out[0] = cur;
  return out;
}

struct GradOutcome {
  Value primal;              // primal half of the derivative pair
  std::vector<Cot> env;      // environment cotangent, one entry per input
  long long cost_derivative; // cost of the whole derivative run (handler included)
  long long seed_size;
};

inline GradOutcome run_pipeline(const Pipeline& pl, const std::vector<Value>& point,
                                const Cot& seed) {
  const size_t n = pl.run_ctx.size();
  Evaluator ev;
  std::vector<Ty> slot_tys;
  std::vector<Cot> zeros;
  if (pipe_runs_monadically(pl.mode)) {
    // building the initial tuple of zeros costs two steps per slot
    for (const auto& b : pl.run_ctx) slot_tys.push_back(d2_type(b.ty));
    for (const auto& ty : slot_tys) zeros.push_back(cot_zero(ty));
    ev.cost.steps += 2 * (long long)n;
  }
  Env env = nullptr;
  for (const auto& v : point) env = env_push(env, v);

  GradOutcome out;
  out.seed_size = cot_size(seed);
  // evaluate `snd D[t] seed`: the derivative pair, its projection, the seed
  // reference and the application each cost their usual step
  Value pr = ev.eval(env, pl.deriv);
  if (pr->k != ValKind::Pair) throw EvalError("Malformed", "derivative is not a pair");
  ev.cost.steps += 3;
  Value r = ev.apply(pr->b, v_cot(seed));
  if (pipe_runs_monadically(pl.mode)) {
    if (r->k != ValKind::ActionV) throw EvalError("Malformed", "derivative is not an action");
    auto [unit, cots] = ev.run(r->act, slot_tys, std::move(zeros));
    out.env = std::move(cots);
  } else {
    const Cot& e = value_to_cot(r);
    if (pl.mode == PipeMode::NaiveTreeMap) {
      if (e->k != CotKind::CEnvMap) throw EvalError("Malformed", "expected a map cotangent");
      out.env.reserve(n);
      for (size_t i = 0; i < n; ++i) {
        const Cot* c = pmap_get(e->env, (long long)i);
        out.env.push_back(c ? *c : cot_zero(d2_type(pl.run_ctx[i].ty)));
      }
    } else {
      out.env = split_dense_env(e, n);
    }
  }
  out.cost_derivative = ev.cost.steps;

  Evaluator evp;
  Env penv = nullptr;
  for (const auto& v : point) penv = env_push(penv, v);
  out.primal = evp.eval(penv, mk_fst(pl.deriv));
  return out;
}

// Environment cotangent of `t` at `point` for the result cotangent `seed`.
inline std::vector<Cot> grad(PipeMode mode, const Context& ctx, const TermPtr& t,
                             const std::vector<Value>& point, const Cot& seed) {
  Pipeline pl = prepare_pipeline(mode, ctx, t);
  return run_pipeline(pl, point, seed).env;
}

inline std::pair<Value, long long> eval_source(const Context& ctx, const TermPtr& t,
                                               const std::vector<Value>& point) {
  Env env = nullptr;
  for (const auto& v : point) env = env_push(env, v);
  Evaluator ev;
  Value v = ev.eval(env, t);
  (void)ctx;
  return {std::move(v), ev.cost.steps};
}

// Cost and value of evaluating only the primal half of the derivative.
inline std::pair<Value, long long> eval_primal_half(const Pipeline& pl,
                                                    const std::vector<Value>& point) {
  Env env = nullptr;
  for (const auto& v : point) env = env_push(env, v);
  Evaluator ev;
  Value v = ev.eval(env, mk_fst(pl.deriv));
  return {std::move(v), ev.cost.steps};
}

// Densified gradient over the input leaves, matching the oracles' layout.
inline std::vector<double> densify_env(const Context& ctx, const std::vector<Value>& point,
                                       const std::vector<Cot>& env) {
  std::vector<double> out;
  for (size_t i = 0; i < ctx.size(); ++i) {
    std::vector<double> part = densify(ctx[i].ty, env[i], point[i]);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

} // namespace chad
