#pragma once

#include <cmath>
#include <vector>

#include "chad/eval.hpp"

// Independent differentiation oracles for validating reverse-mode gradients:
// a dual-number forward evaluator (exact up to rounding) and central finite
// differences. Both interpret the source program directly and share nothing
// with the transformation pipeline; the dual arithmetic below is written out
// per operation on purpose.

namespace chad {

namespace detail {

struct DVN;
using DV = std::shared_ptr<const DVN>;
struct DEnvN;
using DEnv = std::shared_ptr<const DEnvN>;

struct DVN {
  ValKind k;
  double p = 0, t = 0; // primal and tangent of a real
  long long i = 0;
  DV a, b;
  std::vector<DV> elems;
  DEnv cenv;
  TermPtr lam;
};

struct DEnvN {
  DV v;
  DEnv up;
  int depth;
};

inline DEnv denv_push(const DEnv& e, DV v) {
  auto n = std::make_shared<DEnvN>();
  n->v = std::move(v);
  n->up = e;
  n->depth = (e ? e->depth : 0) + 1;
  return n;
}
inline const DV& denv_get(const DEnv& e, long long level) {
  const DEnvN* n = e.get();
  long long steps = n->depth - 1 - level;
  while (steps-- > 0) n = n->up.get();
  return n->v;
}

inline DV dv0(ValKind k) {
  auto n = std::make_shared<DVN>();
  n->k = k;
  return n;
}
inline DV dv_real(double p, double t) {
  auto n = std::make_shared<DVN>();
  n->k = ValKind::Real;
  n->p = p;
  n->t = t;
  return n;
}

struct DualEval {
  DV eval(const DEnv& env, const TermPtr& t) {
    switch (t->kind) {
      case TermKind::Var: return denv_get(env, t->ival);
      case TermKind::RealLit: return dv_real(t->fval, 0);
      case TermKind::IntLit: {
        auto n = dv0(ValKind::Int);
        const_cast<DVN*>(n.get())->i = t->ival;
        return n;
      }
      case TermKind::UnitLit: return dv0(ValKind::Unit);
      case TermKind::Let: {
        DV b = eval(env, t->kids[0]);
        return eval(denv_push(env, std::move(b)), t->kids[1]);
      }
      case TermKind::Pair: {
        auto n = dv0(ValKind::Pair);
        const_cast<DVN*>(n.get())->a = eval(env, t->kids[0]);
        const_cast<DVN*>(n.get())->b = eval(env, t->kids[1]);
        return n;
      }
      case TermKind::Fst: return eval(env, t->kids[0])->a;
      case TermKind::Snd: return eval(env, t->kids[0])->b;
      case TermKind::Inl: {
        auto n = dv0(ValKind::Inl);
        const_cast<DVN*>(n.get())->a = eval(env, t->kids[0]);
        return n;
      }
      case TermKind::Inr: {
        auto n = dv0(ValKind::Inr);
        const_cast<DVN*>(n.get())->a = eval(env, t->kids[0]);
        return n;
      }
      case TermKind::Case: {
        DV s = eval(env, t->kids[0]);
        if (s->k == ValKind::Inl) return eval(denv_push(env, s->a), t->kids[1]);
        return eval(denv_push(env, s->a), t->kids[2]);
      }
      case TermKind::Sign: {
        DV x = eval(env, t->kids[0]);
        auto n = dv0(x->p < 0 ? ValKind::Inl : ValKind::Inr);
        const_cast<DVN*>(n.get())->a = dv0(ValKind::Unit);
        return n;
      }
      case TermKind::PrimOp: return op(t, env);
      case TermKind::Lam: {
        auto n = dv0(ValKind::Closure);
        const_cast<DVN*>(n.get())->cenv = env;
        const_cast<DVN*>(n.get())->lam = t;
        return n;
      }
      case TermKind::App: {
        DV f = eval(env, t->kids[0]);
        DV a = eval(env, t->kids[1]);
        if (f->k != ValKind::Closure) partial_op("oracle: applying a non-function");
        return eval(denv_push(f->cenv, std::move(a)), f->lam->kids[0]);
      }
      case TermKind::Build: {
        DV n = eval(env, t->kids[0]);
        auto out = dv0(ValKind::Arr);
        for (long long i = 0; i < n->i; ++i) {
          auto iv = dv0(ValKind::Int);
          const_cast<DVN*>(iv.get())->i = i;
          const_cast<DVN*>(out.get())->elems.push_back(
              eval(denv_push(env, std::move(iv)), t->kids[1]));
        }
        return out;
      }
      case TermKind::Index: {
        DV a = eval(env, t->kids[0]);
        DV i = eval(env, t->kids[1]);
        if (i->i < 0 || (size_t)i->i >= a->elems.size())
          throw EvalError("IndexOutOfBounds", "oracle index");
        return a->elems[(size_t)i->i];
      }
      case TermKind::Fold: {
        DV a = eval(env, t->kids[1]);
        if (a->elems.empty()) throw EvalError("EmptyFold", "oracle fold");
        return reduce(env, t->kids[0], a->elems, 0, a->elems.size());
      }
      case TermKind::Length: {
        DV a = eval(env, t->kids[0]);
        auto n = dv0(ValKind::Int);
        const_cast<DVN*>(n.get())->i = (long long)a->elems.size();
        return n;
      }
      default: throw EvalError("Malformed", "oracle: target construct");
    }
  }

  DV reduce(const DEnv& env, const TermPtr& body, const std::vector<DV>& xs, size_t lo,
            size_t hi) {
    if (hi - lo == 1) return xs[lo];
    size_t mid = lo + (hi - lo) / 2;
    DV l = reduce(env, body, xs, lo, mid);
    DV r = reduce(env, body, xs, mid, hi);
    auto pr = dv0(ValKind::Pair);
    const_cast<DVN*>(pr.get())->a = std::move(l);
    const_cast<DVN*>(pr.get())->b = std::move(r);
    return eval(denv_push(env, std::move(pr)), body);
  }

  DV op(const TermPtr& t, const DEnv& env) {
    std::vector<DV> args;
    for (const auto& k : t->kids) args.push_back(eval(env, k));
    auto bin = [&](double p, double tan) { return dv_real(p, tan); };
    double x = args[0]->p, dx = args[0]->t;
    if (t->name == "add") return bin(x + args[1]->p, dx + args[1]->t);
    if (t->name == "sub") return bin(x - args[1]->p, dx - args[1]->t);
    if (t->name == "mul") return bin(x * args[1]->p, dx * args[1]->p + x * args[1]->t);
    if (t->name == "neg") return bin(-x, -dx);
    if (t->name == "recip") {
      if (x == 0) partial_op("recip of 0");
      return bin(1 / x, -dx / (x * x));
    }
    if (t->name == "sin") return bin(std::sin(x), dx * std::cos(x));
    if (t->name == "cos") return bin(std::cos(x), -dx * std::sin(x));
    if (t->name == "exp") return bin(std::exp(x), dx * std::exp(x));
    if (t->name == "log") {
      if (x <= 0) partial_op("log of non-positive");
      return bin(std::log(x), dx / x);
    }
    throw EvalError("Malformed", "oracle: unknown op " + t->name);
  }
};

// Build a dual input from a value and a tangent direction (leaf order).
inline DV dv_from_value(const Ty& ty, const Value& v, const double*& dir) {
  switch (ty.k) {
    case TyKind::Real: return dv_real(v->r, *dir++);
    case TyKind::Unit: return dv0(ValKind::Unit);
    case TyKind::Int: {
      auto n = dv0(ValKind::Int);
      const_cast<DVN*>(n.get())->i = v->i;
      return n;
    }
    case TyKind::Prod: {
      auto n = dv0(ValKind::Pair);
      const_cast<DVN*>(n.get())->a = dv_from_value(ty.a[0], v->a, dir);
      const_cast<DVN*>(n.get())->b = dv_from_value(ty.a[1], v->b, dir);
      return n;
    }
    case TyKind::Array: {
      auto n = dv0(ValKind::Arr);
      for (const auto& e : v->elems)
        const_cast<DVN*>(n.get())->elems.push_back(dv_from_value(ty.a[0], e, dir));
      return n;
    }
    default: throw EvalError("Shape", "oracle input type " + pretty_ty(ty));
  }
}

} // namespace detail

// Real-valued leaves of an input value, in densification order.
inline void value_leaves(const Ty& ty, const Value& v, std::vector<double>& out) {
  switch (ty.k) {
    case TyKind::Real: out.push_back(v->r); return;
    case TyKind::Unit:
    case TyKind::Int: return;
    case TyKind::Prod:
      value_leaves(ty.a[0], v->a, out);
      value_leaves(ty.a[1], v->b, out);
      return;
    case TyKind::Array:
      for (const auto& e : v->elems) value_leaves(ty.a[0], e, out);
      return;
    default: throw EvalError("Shape", "oracle input type " + pretty_ty(ty));
  }
}

inline Value value_from_leaves(const Ty& ty, const Value& shape, const double*& flat) {
  switch (ty.k) {
    case TyKind::Real: return v_real(*flat++);
    case TyKind::Unit: return v_unit();
    case TyKind::Int: return shape;
    case TyKind::Prod: {
      Value a = value_from_leaves(ty.a[0], shape->a, flat);
      Value b = value_from_leaves(ty.a[1], shape->b, flat);
      return v_pair(std::move(a), std::move(b));
    }
    case TyKind::Array: {
      std::vector<Value> elems;
      elems.reserve(shape->elems.size());
      for (const auto& e : shape->elems) elems.push_back(value_from_leaves(ty.a[0], e, flat));
      return v_arr(std::move(elems));
    }
    default: throw EvalError("Shape", "oracle input type " + pretty_ty(ty));
  }
}

inline size_t point_width(const Context& ctx, const std::vector<Value>& point) {
  size_t n = 0;
  for (size_t i = 0; i < ctx.size(); ++i) n += dense_width(ctx[i].ty, point[i]);
  return n;
}

// Directional derivative of a real-valued program via dual numbers.
inline double forward_directional(const Context& ctx, const TermPtr& t,
                                  const std::vector<Value>& point,
                                  const std::vector<double>& dir) {
  detail::DEnv env = nullptr;
  const double* d = dir.data();
  for (size_t i = 0; i < ctx.size(); ++i)
    env = detail::denv_push(env, detail::dv_from_value(ctx[i].ty, point[i], d));
  detail::DualEval de;
  detail::DV r = de.eval(env, t);
  if (r->k != ValKind::Real) throw EvalError("Shape", "oracle needs a real-valued program");
  return r->t;
}

// Dense gradient via one forward pass per input leaf.
inline std::vector<double> grad_forward(const Context& ctx, const TermPtr& t,
                                        const std::vector<Value>& point) {
  size_t n = point_width(ctx, point);
  std::vector<double> grad(n, 0.0);
  std::vector<double> dir(n, 0.0);
  for (size_t j = 0; j < n; ++j) {
    dir[j] = 1.0;
    grad[j] = forward_directional(ctx, t, point, dir);
    dir[j] = 0.0;
  }
  return grad;
}

// Central finite differences with a per-leaf relative step.
inline std::vector<double> grad_fd(const Context& ctx, const TermPtr& t,
                                   const std::vector<Value>& point) {
  std::vector<double> flat;
  for (size_t i = 0; i < ctx.size(); ++i) value_leaves(ctx[i].ty, point[i], flat);
  auto eval_at = [&](const std::vector<double>& xs) {
    const double* f = xs.data();
    Env env = nullptr;
    for (size_t i = 0; i < ctx.size(); ++i)
      env = env_push(env, value_from_leaves(ctx[i].ty, point[i], f));
    Evaluator ev;
    Value r = ev.eval(env, t);
    if (r->k != ValKind::Real) throw EvalError("Shape", "oracle needs a real-valued program");
    return r->r;
  };
  std::vector<double> grad(flat.size(), 0.0);
  std::vector<double> xs = flat;
  for (size_t j = 0; j < flat.size(); ++j) {
    double h = 1e-6 * std::max(1.0, std::fabs(flat[j]));
    xs[j] = flat[j] + h;
    double fp = eval_at(xs);
    xs[j] = flat[j] - h;
    double fm = eval_at(xs);
    xs[j] = flat[j];
    grad[j] = (fp - fm) / (2 * h);
  }
  return grad;
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double scale = std::max({std::fabs(a[i]), std::fabs(b[i]), 1.0});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
  }
  return worst;
}

} // namespace chad
