#pragma once

#include <vector>

#include "chad/dtypes.hpp"
#include "chad/ops.hpp"
#include "chad/pretty.hpp"
#include "chad/value.hpp"

// The cotangent monoid: constant-time zeros, structural sparse addition whose
// cost is one step per traversed intersection node and one per untouched
// subtree handoff, node-count size, and the potential phi = c_phi * size.

namespace chad {

constexpr long long c_phi = 3;  // potential per cotangent node
constexpr long long c_run = 2;  // run handler steps per slot (deposit + extract)

[[noreturn]] inline void cot_mismatch(const std::string& msg) {
  throw EvalError("CotangentMismatch", msg);
}

inline Cot cot_zero(const Ty& ty) {
  switch (ty.k) {
    case TyKind::LReal: return c_r(0.0);
    case TyKind::LUnit: return c_unit();
    case TyKind::LUnitFun: return c_unitfun();
    case TyKind::LProd: return c_pzero();
    case TyKind::LSum: return c_szero();
    case TyKind::Bag: return c_bag_empty();
    case TyKind::List: return c_list({});
    case TyKind::LSigma: return c_sigma_zero();
    case TyKind::LVariant: return c_var_zero();
    case TyKind::EnvMap: return c_envmap(nullptr);
    case TyKind::Hole: return c_zero_any();
    default: cot_mismatch("zero at non-cotangent type " + pretty_ty(ty));
  }
}

inline bool cot_is_zero_node(const Cot& c) {
  switch (c->k) {
    case CotKind::CZero:
    case CotKind::CPZero:
    case CotKind::CSZero:
    case CotKind::CSigmaZero:
    case CotKind::CVarZero: return true;
    case CotKind::CBagEmpty: return true;
    case CotKind::CList: return c->log.empty();
    case CotKind::CEnvMap: return c->env == nullptr;
    default: return false;
  }
}

inline long long cot_size(const Cot& c) {
  switch (c->k) {
    case CotKind::CZero:
    case CotKind::CR:
    case CotKind::CUnit:
    case CotKind::CUnitFun:
    case CotKind::CPZero:
    case CotKind::CSZero:
    case CotKind::CBagEmpty:
    case CotKind::CSigmaZero:
    case CotKind::CVarZero: return 1;
    case CotKind::CInl:
    case CotKind::CInr: return 1 + cot_size(c->a);
    case CotKind::CSigma:
    case CotKind::CVariant: return 1 + cot_size(c->a);
    case CotKind::CPair: return 1 + cot_size(c->a) + cot_size(c->b);
    case CotKind::CBagOne: return 1 + cot_size(c->a);
    case CotKind::CBagPlus: {
      // iterative over the bag spine; spines can be very long
      long long total = 1;
      std::vector<const CotNode*> stack{c->a.get(), c->b.get()};
      while (!stack.empty()) {
        const CotNode* n = stack.back();
        stack.pop_back();
        if (n->k == CotKind::CBagPlus) {
          ++total;
          stack.push_back(n->a.get());
          stack.push_back(n->b.get());
        } else if (n->k == CotKind::CBagOne) {
          total += 1 + cot_size(n->a);
        } else {
          ++total;
        }
      }
      return total;
    }
    case CotKind::CList: {
      long long total = 1;
      for (const auto& e : c->log) total += 1 + cot_size(e.second);
      return total;
    }
    case CotKind::CEnvMap: {
      long long total = 1;
      std::vector<std::pair<long long, Cot>> es;
      pmap_entries(c->env, es);
      for (const auto& e : es) total += 1 + cot_size(e.second);
      return total;
    }
  }
  return 1;
}

inline long long cot_potential(const Cot& c) { return c_phi * cot_size(c); }

inline long long ceil_log2(long long n) {
  long long r = 0;
  long long v = 1;
  while (v < n) {
    v <<= 1;
    ++r;
  }
  return r;
}

// Sparse addition. `cost` accumulates the model cost: 1 per node of the
// traversed intersection, 1 per untouched subtree handed off. The tree-map
// union is deliberately log-time per moved entry.
inline Cot cot_plus(const Cot& x, const Cot& y, long long& cost) {
  if (cot_is_zero_node(x)) {
    cost += 1;
    return y;
  }
  if (cot_is_zero_node(y)) {
    cost += 1;
    return x;
  }
  switch (x->k) {
    case CotKind::CR:
      if (y->k != CotKind::CR) cot_mismatch("real + non-real");
      cost += 1;
      return c_r(x->r + y->r);
    case CotKind::CUnit:
      cost += 1;
      return c_unit();
    case CotKind::CUnitFun:
      cost += 1;
      return c_unitfun();
    case CotKind::CPair: {
      if (y->k != CotKind::CPair) cot_mismatch("pair + non-pair");
      cost += 1;
      Cot a = cot_plus(x->a, y->a, cost);
      Cot b = cot_plus(x->b, y->b, cost);
      return c_pair(std::move(a), std::move(b));
    }
    case CotKind::CInl:
      if (y->k != CotKind::CInl) cot_mismatch("inl + inr");
      cost += 1;
      return c_inl(cot_plus(x->a, y->a, cost));
    case CotKind::CInr:
      if (y->k != CotKind::CInr) cot_mismatch("inr + inl");
      cost += 1;
      return c_inr(cot_plus(x->a, y->a, cost));
    case CotKind::CBagOne:
    case CotKind::CBagPlus:
      if (y->k != CotKind::CBagOne && y->k != CotKind::CBagPlus)
        cot_mismatch("bag + non-bag");
      cost += 1; // constant-time free-monoid append
      return c_bag_plus(x, y);
    case CotKind::CList: {
      if (y->k != CotKind::CList) cot_mismatch("list + non-list");
      cost += 1 + (long long)x->log.size(); // cons-list concatenation
      if (y->log.empty()) return x;
      if (x->log.empty()) return y;
      std::vector<std::pair<Value, Cot>> entries = x->log;
      entries.insert(entries.end(), y->log.begin(), y->log.end());
      return c_list(std::move(entries));
    }
    case CotKind::CSigma: {
      if (y->k != CotKind::CSigma) cot_mismatch("sigma + non-sigma");
      if (!(x->tag == y->tag)) throw EvalError("TagMismatch", "adding differently-tagged cotangents");
      cost += 1;
      return c_sigma(x->tag, cot_plus(x->a, y->a, cost));
    }
    case CotKind::CVariant: {
      if (y->k != CotKind::CVariant) cot_mismatch("variant + non-variant");
      if (x->index != y->index) cot_mismatch("adding differently-tagged variants");
      cost += 1;
      return c_variant(x->index, cot_plus(x->a, y->a, cost));
    }
    case CotKind::CEnvMap: {
      if (y->k != CotKind::CEnvMap) cot_mismatch("envmap + non-envmap");
      // small-into-large merge; each moved entry costs one step plus a
      // log-sized descent, plus the entry-level addition when keys collide
      const bool xs = pmap_size(x->env) <= pmap_size(y->env);
      const PMap<Cot>& small = xs ? x->env : y->env;
      const PMap<Cot>& large = xs ? y->env : x->env;
      cost += 1;
      PMap<Cot> acc = large;
      std::vector<std::pair<long long, Cot>> es;
      pmap_entries(small, es);
      for (auto& [k, v] : es) {
        cost += 1 + ceil_log2(pmap_size(acc) + 1);
        // keep x's entry on the left of colliding adds
        acc = pmap_insert_with<Cot>(acc, k, v, [&, xsmall = xs](const Cot& oldv, const Cot& newv) {
          return xsmall ? cot_plus(newv, oldv, cost) : cot_plus(oldv, newv, cost);
        });
      }
      return c_envmap(acc);
    }
    default: cot_mismatch("malformed cotangent addition");
  }
}

// Linear-type API helpers (sparse rules).
inline Cot cot_lfst(const Cot& p) {
  if (cot_is_zero_node(p)) return c_zero_any();
  if (p->k != CotKind::CPair) cot_mismatch("lfst of non-pair");
  return p->a;
}
inline Cot cot_lsnd(const Cot& p) {
  if (cot_is_zero_node(p)) return c_zero_any();
  if (p->k != CotKind::CPair) cot_mismatch("lsnd of non-pair");
  return p->b;
}
inline Cot cot_lcastl(const Cot& s) {
  if (cot_is_zero_node(s)) return c_zero_any();
  if (s->k == CotKind::CInl) return s->a;
  if (s->k == CotKind::CInr) cot_mismatch("lcastl of a right injection");
  cot_mismatch("lcastl of non-sum");
}
inline Cot cot_lcastr(const Cot& s) {
  if (cot_is_zero_node(s)) return c_zero_any();
  if (s->k == CotKind::CInr) return s->a;
  if (s->k == CotKind::CInl) cot_mismatch("lcastr of a left injection");
  cot_mismatch("lcastr of non-sum");
}
inline Cot cot_sigma_cast(const Ty& tag, const Ty& result_ty, const Cot& s) {
  if (cot_is_zero_node(s)) return cot_zero(result_ty);
  if (s->k != CotKind::CSigma) cot_mismatch("sigma-cast of non-sigma");
  if (!(s->tag == tag)) throw EvalError("TagMismatch", "sigma-cast tag mismatch");
  return s->a;
}
inline Cot cot_variant_cast(long long tag, const Ty& result_ty, const Cot& s) {
  if (cot_is_zero_node(s)) return cot_zero(result_ty);
  if (s->k != CotKind::CVariant) cot_mismatch("variant cast of non-variant");
  if (s->index != tag) cot_mismatch("variant cast tag mismatch");
  return s->a;
}

// Shape validity of a cotangent against the cotangent type it should inhabit.
inline bool cot_shape_valid(const Ty& ty, const Cot& c) {
  if (c->k == CotKind::CZero) return ty_is_linear(ty);
  switch (ty.k) {
    case TyKind::Hole: return true;
    case TyKind::LReal: return c->k == CotKind::CR;
    case TyKind::LUnit: return c->k == CotKind::CUnit;
    case TyKind::LUnitFun: return c->k == CotKind::CUnitFun;
    case TyKind::LProd:
      if (c->k == CotKind::CPZero) return true;
      return c->k == CotKind::CPair && cot_shape_valid(ty.a[0], c->a) &&
             cot_shape_valid(ty.a[1], c->b);
    case TyKind::LSum:
      if (c->k == CotKind::CSZero) return true;
      if (c->k == CotKind::CInl) return cot_shape_valid(ty.a[0], c->a);
      if (c->k == CotKind::CInr) return cot_shape_valid(ty.a[1], c->a);
      return false;
    case TyKind::Bag: {
      if (c->k == CotKind::CBagEmpty) return true;
      if (c->k == CotKind::CBagOne)
        return ty.a[0].k == TyKind::Prod && c->index >= 0 &&
               cot_shape_valid(ty.a[0].a[1], c->a);
      if (c->k == CotKind::CBagPlus)
        return cot_shape_valid(ty, c->a) && cot_shape_valid(ty, c->b);
      return false;
    }
    case TyKind::List: {
      if (c->k != CotKind::CList) return false;
      if (ty.a[0].k != TyKind::Prod) return false;
      for (const auto& e : c->log)
        if (!cot_shape_valid(ty.a[0].a[1], e.second)) return false;
      return true;
    }
    case TyKind::LSigma:
      if (c->k == CotKind::CSigmaZero) return true;
      return c->k == CotKind::CSigma &&
             cot_shape_valid(ty_subst_hole(ty.a[0], c->tag), c->a);
    case TyKind::LVariant:
      if (c->k == CotKind::CVarZero) return true;
      return c->k == CotKind::CVariant && c->index >= 0 && (size_t)c->index < ty.a.size() &&
             cot_shape_valid(ty.a[(size_t)c->index], c->a);
    case TyKind::EnvMap: return c->k == CotKind::CEnvMap;
    default: return false;
  }
}

// --- densification ------------------------------------------------------
// Maps a cotangent at source type `ty` to the dense tangent vector, leaves in
// left-to-right order. Array widths come from the primal value's shape.

inline size_t dense_width(const Ty& ty, const Value& shape) {
  switch (ty.k) {
    case TyKind::Real: return 1;
    case TyKind::Unit:
    case TyKind::Int: return 0;
    case TyKind::Prod:
      return dense_width(ty.a[0], shape ? shape->a : nullptr) +
             dense_width(ty.a[1], shape ? shape->b : nullptr);
    case TyKind::Sum: {
      Value la = shape && shape->k == ValKind::Inl ? shape->a : nullptr;
      Value ra = shape && shape->k == ValKind::Inr ? shape->a : nullptr;
      return dense_width(ty.a[0], la) + dense_width(ty.a[1], ra);
    }
    case TyKind::Array: {
      if (!shape || shape->k != ValKind::Arr)
        throw EvalError("Shape", "array width needs the primal value");
      size_t w = 0;
      for (const auto& e : shape->elems) w += dense_width(ty.a[0], e);
      return w;
    }
    case TyKind::Variant: {
      size_t w = 0;
      for (size_t i = 0; i < ty.a.size(); ++i) {
        Value act = shape && shape->k == ValKind::VariantV && (size_t)shape->i == i ? shape->a
                                                                                    : nullptr;
        w += dense_width(ty.a[i], act);
      }
      return w;
    }
    default: return 0; // functions and discrete data carry no tangent
  }
}

inline void densify_into(const Ty& ty, const Cot& c, const Value& shape, double* out) {
  if (cot_is_zero_node(c) && c->k != CotKind::CBagEmpty && c->k != CotKind::CList) return;
  switch (ty.k) {
    case TyKind::Real:
      if (c->k != CotKind::CR) cot_mismatch("densify: real expected");
      out[0] += c->r;
      return;
    case TyKind::Unit:
    case TyKind::Int: return;
    case TyKind::Prod: {
      if (c->k != CotKind::CPair) cot_mismatch("densify: pair expected");
      size_t lw = dense_width(ty.a[0], shape ? shape->a : nullptr);
      densify_into(ty.a[0], c->a, shape ? shape->a : nullptr, out);
      densify_into(ty.a[1], c->b, shape ? shape->b : nullptr, out + lw);
      return;
    }
    case TyKind::Sum: {
      Value la = shape && shape->k == ValKind::Inl ? shape->a : nullptr;
      size_t lw = dense_width(ty.a[0], la);
      if (c->k == CotKind::CInl) {
        densify_into(ty.a[0], c->a, la, out);
      } else if (c->k == CotKind::CInr) {
        Value ra = shape && shape->k == ValKind::Inr ? shape->a : nullptr;
        densify_into(ty.a[1], c->a, ra, out + lw);
      } else {
        cot_mismatch("densify: sum expected");
      }
      return;
    }
    case TyKind::Variant: {
      if (c->k != CotKind::CVariant) cot_mismatch("densify: variant expected");
      size_t tag = (size_t)c->index;
      size_t off = 0;
      for (size_t i = 0; i < tag; ++i) {
        Value act = shape && shape->k == ValKind::VariantV && (size_t)shape->i == i ? shape->a
                                                                                    : nullptr;
        off += dense_width(ty.a[i], act);
      }
      Value act = shape && shape->k == ValKind::VariantV && (size_t)shape->i == tag ? shape->a
                                                                                    : nullptr;
      densify_into(ty.a[tag], c->a, act, out + off);
      return;
    }
    case TyKind::Array: {
      if (!shape || shape->k != ValKind::Arr)
        throw EvalError("Shape", "densify of array cotangent needs the primal");
      std::vector<size_t> offs(shape->elems.size() + 1, 0);
      for (size_t i = 0; i < shape->elems.size(); ++i)
        offs[i + 1] = offs[i] + dense_width(ty.a[0], shape->elems[i]);
      // walk the bag spine iteratively
      std::vector<const CotNode*> stack{c.get()};
      while (!stack.empty()) {
        const CotNode* n = stack.back();
        stack.pop_back();
        switch (n->k) {
          case CotKind::CZero:
          case CotKind::CBagEmpty: break;
          case CotKind::CBagPlus:
            stack.push_back(n->a.get());
            stack.push_back(n->b.get());
            break;
          case CotKind::CBagOne: {
            if (n->index < 0 || (size_t)n->index >= shape->elems.size())
              throw EvalError("IndexOutOfBounds", "bag index outside the array");
            Cot inner = n->a;
            densify_into(ty.a[0], inner, shape->elems[(size_t)n->index],
                         out + offs[(size_t)n->index]);
            break;
          }
          default: cot_mismatch("densify: bag expected");
        }
      }
      return;
    }
    default: return;
  }
}

inline std::vector<double> densify(const Ty& ty, const Cot& c, const Value& shape = nullptr) {
  std::vector<double> out(dense_width(ty, shape), 0.0);
  densify_into(ty, c, shape, out.data());
  return out;
}

// Fully dense cotangent at source type `ty` from a flat vector; sums follow
// the primal's branch, arrays become one bag entry per element.
inline Cot cot_from_dense(const Ty& ty, const double*& flat, const Value& shape) {
  switch (ty.k) {
    case TyKind::Real: return c_r(*flat++);
    case TyKind::Unit: return c_unit();
    case TyKind::Int: return c_unit();
    case TyKind::Prod: {
      Cot a = cot_from_dense(ty.a[0], flat, shape ? shape->a : nullptr);
      Cot b = cot_from_dense(ty.a[1], flat, shape ? shape->b : nullptr);
      return c_pair(std::move(a), std::move(b));
    }
    case TyKind::Sum: {
      if (!shape) throw EvalError("Shape", "sum seed needs the primal value");
      if (shape->k == ValKind::Inl) return c_inl(cot_from_dense(ty.a[0], flat, shape->a));
      return c_inr(cot_from_dense(ty.a[1], flat, shape->a));
    }
    case TyKind::Array: {
      if (!shape || shape->k != ValKind::Arr)
        throw EvalError("Shape", "array seed needs the primal value");
      Cot acc = c_bag_empty();
      for (size_t i = 0; i < shape->elems.size(); ++i) {
        Cot e = cot_from_dense(ty.a[0], flat, shape->elems[i]);
        Cot one = c_bag_one((long long)i, std::move(e));
        acc = acc->k == CotKind::CBagEmpty ? one : c_bag_plus(acc, one);
      }
      return acc;
    }
    default: throw EvalError("Shape", "cannot seed a cotangent at " + pretty_ty(ty));
  }
}

} // namespace chad
