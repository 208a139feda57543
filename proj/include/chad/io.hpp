#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "chad/cotangent.hpp"
#include "chad/oracle.hpp"

// JSON encodings for the CLI: points and seeds use the densified leaf-order
// layout (scalars for Real/Int inputs, flat arrays otherwise); gradients come
// back the same way, keyed by variable name in declaration order.

namespace chad {

using ojson = nlohmann::ordered_json;

inline size_t static_width(const Ty& ty) {
  switch (ty.k) {
    case TyKind::Real: return 1;
    case TyKind::Unit:
    case TyKind::Int: return 0;
    case TyKind::Prod: return static_width(ty.a[0]) + static_width(ty.a[1]);
    default: throw EvalError("Shape", "input type " + pretty_ty(ty) + " has no static layout");
  }
}

inline Value value_from_flat(const Ty& ty, const double*& f, size_t leaves) {
  switch (ty.k) {
    case TyKind::Real: return v_real(*f++);
    case TyKind::Unit: return v_unit();
    case TyKind::Prod: {
      size_t lw = static_width(ty.a[0]);
      Value a = value_from_flat(ty.a[0], f, lw);
      Value b = value_from_flat(ty.a[1], f, leaves - lw);
      return v_pair(std::move(a), std::move(b));
    }
    case TyKind::Array: {
      size_t w = static_width(ty.a[0]);
      if (w == 0 || leaves % w != 0)
        throw EvalError("Shape", "array input length does not fit its element type");
      std::vector<Value> elems;
      for (size_t i = 0; i < leaves / w; ++i) elems.push_back(value_from_flat(ty.a[0], f, w));
      return v_arr(std::move(elems));
    }
    default: throw EvalError("Shape", "unsupported input type " + pretty_ty(ty));
  }
}

inline Value point_value_from_json(const Ty& ty, const ojson& j) {
  if (ty.k == TyKind::Real) {
    if (!j.is_number()) throw EvalError("Shape", "expected a number");
    return v_real(j.get<double>());
  }
  if (ty.k == TyKind::Int) {
    if (!j.is_number_integer()) throw EvalError("Shape", "expected an integer");
    return v_int(j.get<long long>());
  }
  if (!j.is_array()) throw EvalError("Shape", "expected a flat array of leaves");
  std::vector<double> flat = j.get<std::vector<double>>();
  const double* f = flat.data();
  Value v = value_from_flat(ty, f, flat.size());
  if (f != flat.data() + flat.size()) throw EvalError("Shape", "too many leaves for the type");
  return v;
}

inline std::vector<Value> point_from_json(const Context& ctx, const ojson& j) {
  std::vector<Value> out;
  for (const auto& b : ctx) {
    if (!j.contains(b.name)) throw EvalError("Shape", "point is missing '" + b.name + "'");
    out.push_back(point_value_from_json(b.ty, j.at(b.name)));
  }
  return out;
}

inline Cot seed_from_json(const Ty& result_ty, const Value& primal, const ojson& j) {
  if (j.is_number()) {
    if (result_ty.k != TyKind::Real)
      throw EvalError("Shape", "scalar seed for a non-real result");
    return c_r(j.get<double>());
  }
  if (!j.is_array()) throw EvalError("Shape", "seed must be a number or a flat array");
  std::vector<double> flat = j.get<std::vector<double>>();
  size_t want = dense_width(result_ty, primal);
  if (flat.size() != want)
    throw EvalError("Shape", "seed has " + std::to_string(flat.size()) + " leaves, expected " +
                                 std::to_string(want));
  const double* f = flat.data();
  return cot_from_dense(result_ty, f, primal);
}

inline ojson grad_to_json(const Context& ctx, const std::vector<Value>& point,
                          const std::vector<Cot>& env) {
  ojson out = ojson::object();
  for (size_t i = 0; i < ctx.size(); ++i) {
    std::vector<double> flat = densify(ctx[i].ty, env[i], point[i]);
    if (ctx[i].ty.k == TyKind::Real)
      out[ctx[i].name] = flat[0];
    else
      out[ctx[i].name] = flat;
  }
  return out;
}

inline ojson value_to_json(const Value& v) {
  switch (v->k) {
    case ValKind::Real: return v->r;
    case ValKind::Int: return v->i;
    case ValKind::Unit: return nullptr;
    case ValKind::Pair: return ojson::array({value_to_json(v->a), value_to_json(v->b)});
    case ValKind::Inl: return ojson{{"inl", value_to_json(v->a)}};
    case ValKind::Inr: return ojson{{"inr", value_to_json(v->a)}};
    case ValKind::Arr: {
      ojson a = ojson::array();
      for (const auto& e : v->elems) a.push_back(value_to_json(e));
      return a;
    }
    default: return "<opaque>";
  }
}

} // namespace chad
