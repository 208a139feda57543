#pragma once

#include <stdexcept>

#include "chad/ast.hpp"

// Primal (d1) and cotangent (d2) type maps. Both are total on the full type
// grammar; per-mode restrictions (e.g. no function types in the first-order
// transforms) are enforced by the transforms themselves.

namespace chad {

inline Ty d1_type(const Ty& t);
inline Ty d2_type(const Ty& t);

inline Ty d1_type(const Ty& t) {
  switch (t.k) {
    case TyKind::Real:
    case TyKind::Unit:
    case TyKind::Int:
    case TyKind::Hole:
      return t;
    case TyKind::Prod: return ty_prod(d1_type(t.a[0]), d1_type(t.a[1]));
    case TyKind::Sum: return ty_sum(d1_type(t.a[0]), d1_type(t.a[1]));
    case TyKind::Array: return ty_array(d1_type(t.a[0]));
    case TyKind::Arrow:
      // f : a -> b becomes a function returning the primal paired with a
      // per-call backpropagator from result cotangents to argument cotangents.
      return ty_arrow(d1_type(t.a[0]),
                      ty_prod(d1_type(t.a[1]), ty_arrow(d2_type(t.a[1]), d2_type(t.a[0]))));
    case TyKind::ClosedArrow:
      return ty_carrow(d1_type(t.a[0]),
                       ty_prod(d1_type(t.a[1]), ty_arrow(d2_type(t.a[1]), d2_type(t.a[0]))));
    case TyKind::Sigma: return ty_sigma(d1_type(t.a[0]));
    case TyKind::Variant: {
      std::vector<Ty> comps;
      comps.reserve(t.a.size());
      for (const auto& c : t.a) comps.push_back(d1_type(c));
      return ty_variant(std::move(comps));
    }
    default: throw std::runtime_error("d1_type: not a source type");
  }
}

inline Ty d2_type(const Ty& t) {
  switch (t.k) {
    case TyKind::Real: return ty_lreal();
    case TyKind::Unit: return ty_lunit();
    case TyKind::Int: return ty_lunit();
    case TyKind::Hole: return ty_hole();
    case TyKind::Prod: return ty_lprod(d2_type(t.a[0]), d2_type(t.a[1]));
    case TyKind::Sum: return ty_lsum(d2_type(t.a[0]), d2_type(t.a[1]));
    case TyKind::Array: return ty_bag(ty_prod(ty_int(), d2_type(t.a[0])));
    case TyKind::Arrow:
      // invocation log: one (input primal, output cotangent) entry per call
      return ty_list(ty_prod(d1_type(t.a[0]), d2_type(t.a[1])));
    case TyKind::ClosedArrow: return ty_lunitfun();
    case TyKind::Sigma: return ty_lsigma(d2_type(t.a[0]));
    case TyKind::Variant: {
      std::vector<Ty> comps;
      comps.reserve(t.a.size());
      for (const auto& c : t.a) comps.push_back(d2_type(c));
      return ty_lvariant(std::move(comps));
    }
    default: throw std::runtime_error("d2_type: not a source type");
  }
}

} // namespace chad
