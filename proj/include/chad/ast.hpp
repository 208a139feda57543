#pragma once

#include <memory>
#include <string>
#include <vector>

// Abstract syntax for the source language and the extended target language
// (linear cotangent types, the accumulation monad, bags/trees/lists, and the
// closure-conversion constructs). Variables are de Bruijn *levels*: level 0 is
// the outermost binding, so accumulation-slot indices coincide with levels.

namespace chad {

enum class TyKind {
  // source types
  Real,
  Unit,
  Int,
  Prod,
  Sum,
  Arrow,
  Array,
  // target-only types
  ClosedArrow, // functions that capture nothing
  LReal,
  LUnit,
  LUnitFun, // cotangent of a closed function
  LProd,
  LSum,
  Bag,
  List,
  Tree, // Tree(a, f): reduction shape recorded by fold's primal
  Evm,  // Evm(result): accumulation-monad action
  Sigma,
  LSigma,
  EnvMap,   // tree-map environment cotangent (opaque)
  Variant,  // n-ary tagged sum, the result of defunctionalisation
  LVariant, // its cotangent
  Hole,     // the abstract tag type inside an unpack branch
};

struct Ty {
  TyKind k = TyKind::Real;
  std::vector<Ty> a;

  bool operator==(const Ty& o) const {
    if (k != o.k || a.size() != o.a.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
      if (!(a[i] == o.a[i])) return false;
    return true;
  }
  bool operator!=(const Ty& o) const { return !(*this == o); }
};

inline Ty ty0(TyKind k) { return Ty{k, {}}; }
inline Ty ty_real() { return ty0(TyKind::Real); }
inline Ty ty_unit() { return ty0(TyKind::Unit); }
inline Ty ty_int() { return ty0(TyKind::Int); }
inline Ty ty_prod(Ty a, Ty b) { return Ty{TyKind::Prod, {std::move(a), std::move(b)}}; }
inline Ty ty_sum(Ty a, Ty b) { return Ty{TyKind::Sum, {std::move(a), std::move(b)}}; }
inline Ty ty_arrow(Ty a, Ty b) { return Ty{TyKind::Arrow, {std::move(a), std::move(b)}}; }
inline Ty ty_array(Ty a) { return Ty{TyKind::Array, {std::move(a)}}; }
inline Ty ty_carrow(Ty a, Ty b) { return Ty{TyKind::ClosedArrow, {std::move(a), std::move(b)}}; }
inline Ty ty_lreal() { return ty0(TyKind::LReal); }
inline Ty ty_lunit() { return ty0(TyKind::LUnit); }
inline Ty ty_lunitfun() { return ty0(TyKind::LUnitFun); }
inline Ty ty_lprod(Ty a, Ty b) { return Ty{TyKind::LProd, {std::move(a), std::move(b)}}; }
inline Ty ty_lsum(Ty a, Ty b) { return Ty{TyKind::LSum, {std::move(a), std::move(b)}}; }
inline Ty ty_bag(Ty a) { return Ty{TyKind::Bag, {std::move(a)}}; }
inline Ty ty_list(Ty a) { return Ty{TyKind::List, {std::move(a)}}; }
inline Ty ty_tree(Ty a, Ty f) { return Ty{TyKind::Tree, {std::move(a), std::move(f)}}; }
inline Ty ty_sigma(Ty body) { return Ty{TyKind::Sigma, {std::move(body)}}; }
inline Ty ty_lsigma(Ty body) { return Ty{TyKind::LSigma, {std::move(body)}}; }
inline Ty ty_hole() { return ty0(TyKind::Hole); }

// Action type. The accumulation-slot context is not part of the type: slot
// agreement is positional (absolute levels) and checked at execution time, so
// generated code stays linear in the context size.
inline Ty ty_evm(Ty result) { return Ty{TyKind::Evm, {std::move(result)}}; }
inline const Ty& evm_result(const Ty& e) { return e.a.back(); }

inline Ty ty_envmap() { return ty0(TyKind::EnvMap); }
inline Ty ty_variant(std::vector<Ty> comps) { return Ty{TyKind::Variant, std::move(comps)}; }
inline Ty ty_lvariant(std::vector<Ty> comps) { return Ty{TyKind::LVariant, std::move(comps)}; }

inline bool ty_is_linear(const Ty& t) {
  switch (t.k) {
    case TyKind::LReal:
    case TyKind::LUnit:
    case TyKind::LUnitFun:
    case TyKind::LProd:
    case TyKind::LSum:
    case TyKind::Bag:
    case TyKind::List:
    case TyKind::LSigma:
    case TyKind::EnvMap:
    case TyKind::LVariant:
    case TyKind::Hole:
      return true;
    default:
      return false;
  }
}

// Free holes only; a sigma binds the hole inside its body.
inline bool ty_contains_hole(const Ty& t) {
  if (t.k == TyKind::Hole) return true;
  if (t.k == TyKind::Sigma || t.k == TyKind::LSigma) return false;
  for (const auto& x : t.a)
    if (ty_contains_hole(x)) return true;
  return false;
}

inline Ty ty_subst_hole(const Ty& t, const Ty& s) {
  if (t.k == TyKind::Hole) return s;
  Ty out{t.k, {}};
  out.a.reserve(t.a.size());
  for (const auto& x : t.a) out.a.push_back(ty_subst_hole(x, s));
  return out;
}

enum class TermKind {
  // source terms
  Var,
  Let,
  UnitLit,
  Pair,
  Fst,
  Snd,
  Inl,
  Inr,
  Case,
  RealLit,
  IntLit,
  Sign,
  PrimOp,
  Lam,
  App,
  Build,
  Index,
  Fold,
  Length,
  // linear-type API
  LZero,
  LPlus,
  LPairC,
  LFst,
  LSnd,
  LInl,
  LInr,
  LCastL,
  LCastR,
  DOpT,
  // accumulation monad
  EvmReturn,
  EvmBind,
  EvmOne,
  EvmScope,
  SequenceEvm,
  // array-derivative auxiliaries
  BagEmpty,
  BagOne,
  BagPlus,
  Collect,
  Scatter,
  Unzip,
  ZipWith,
  FromList,
  MapArr,
  TreeLeaf,
  TreeNode,
  GetA,
  UnTree,
  // lists (higher-order logs, unTree results)
  ListNil,
  ListCons,
  FoldList,
  ListAppend,
  // closure conversion
  Pack,
  UnpackCase,
  SigmaCast,
  PackDyn,
  ClosedLam,
  ErrorTerm,
  // n-ary variants (defunctionalised closures)
  Inject,
  CaseN,
  LInject,
  LCastN,
  // tree-map environment cotangents
  EnvOneHot,
  EnvPop,
};

struct Term;
using TermPtr = std::shared_ptr<const Term>;

// Field conventions per kind:
//   Var:       ival = level, name = display name
//   Let:       tys[0] = bound type, binders[0], kids = {bound, body}
//   Inl/Inr:   tys[0] = type of the *other* summand, kids = {t}
//   Case:      binders = {left, right}, kids = {scrutinee, lbody, rbody}
//   PrimOp:    name = op, kids = args
//   Lam:       tys[0] = arg type, binders[0], kids = {body}
//   Build:     binders[0] = index var, kids = {len, body}
//   Fold:      binders[0] = pair var, kids = {body, arr}
//   LZero:     tys[0] = the linear type
//   LInl/LInr: tys[0] = other summand
//   DOpT:      name = op, kids = primals... then the output cotangent
//   EvmOne:    ival = slot level, tys[0] = slot type, kids = {d}
//   EvmScope:  tys[0] = pushed slot type, kids = {m}
//   BagEmpty:  tys[0] = element type
//   ZipWith:   binders = {x, y}, kids = {body, a, b}
//   MapArr:    binders = {x}, kids = {body, arr}
//   TreeLeaf:  tys[0] = backpropagator type slot of the tree, kids = {a}
//   TreeNode:  kids = {l, x, f, r}
//   UnTree:    kids = {g, d, tree}
//   ListNil:   tys[0] = element type
//   FoldList:  binders = {elem, acc}, kids = {body, init, list}
//   Pack:      tys[0] = full Sigma type, tys[1] = tag, ival = pack-site id, kids = {payload}
//   UnpackCase: binders = {z}, kids = {scrutinee, body}
//   SigmaCast: tys[0] = tag, tys[1] = result cotangent type, kids = {t}
//   PackDyn:   kids = {tag-source, cotangent}
//   ClosedLam: tys[0] = arg type, binders[0], kids = {body} (body sees only the arg)
//   ErrorTerm: tys[0] = result type, name = message
//   Inject:    tys[0] = full Variant type, ival = tag, kids = {payload}
//   CaseN:     kids = {scrutinee, branch..., default}; ivals = branch tags,
//              binders = branch names; the default binds nothing
//   LInject:   tys[0] = full LVariant type, ival = tag, kids = {d}
//   LCastN:    ival = tag, tys[0] = result cotangent type, kids = {d}
//   EnvOneHot: ival = level, kids = {d}
//   EnvPop:    ival = popped level, tys[0] = popped cotangent type, kids = {e}
struct Term {
  TermKind kind;
  std::vector<TermPtr> kids;
  double fval = 0.0;
  long long ival = 0;
  std::string name;
  std::vector<Ty> tys;
  std::vector<std::string> binders;
  std::vector<long long> ivals;
  int line = 0, col = 0;
  int prov = -1; // source-node id this node is the derivative of, if any
};

inline TermPtr mk(TermKind k, std::vector<TermPtr> kids = {}, std::vector<Ty> tys = {},
                  std::vector<std::string> binders = {}) {
  auto t = std::make_shared<Term>();
  t->kind = k;
  t->kids = std::move(kids);
  t->tys = std::move(tys);
  t->binders = std::move(binders);
  return t;
}

inline TermPtr mk_var(long long level, std::string name = "") {
  auto t = std::make_shared<Term>();
  t->kind = TermKind::Var;
  t->ival = level;
  t->name = std::move(name);
  return t;
}
inline TermPtr mk_real(double v) {
  auto t = std::make_shared<Term>();
  t->kind = TermKind::RealLit;
  t->fval = v;
  return t;
}
inline TermPtr mk_int(long long v) {
  auto t = std::make_shared<Term>();
  t->kind = TermKind::IntLit;
  t->ival = v;
  return t;
}
inline TermPtr mk_unit() { return mk(TermKind::UnitLit); }
inline TermPtr mk_let(std::string x, Ty ty, TermPtr bound, TermPtr body) {
  return mk(TermKind::Let, {std::move(bound), std::move(body)}, {std::move(ty)}, {std::move(x)});
}
inline TermPtr mk_pair(TermPtr a, TermPtr b) { return mk(TermKind::Pair, {std::move(a), std::move(b)}); }
inline TermPtr mk_fst(TermPtr a) { return mk(TermKind::Fst, {std::move(a)}); }
inline TermPtr mk_snd(TermPtr a) { return mk(TermKind::Snd, {std::move(a)}); }
inline TermPtr mk_op(std::string op, std::vector<TermPtr> args) {
  auto t = mk(TermKind::PrimOp, std::move(args));
  const_cast<Term*>(t.get())->name = std::move(op);
  return t;
}
inline TermPtr mk_lam(std::string x, Ty argTy, TermPtr body) {
  return mk(TermKind::Lam, {std::move(body)}, {std::move(argTy)}, {std::move(x)});
}
inline TermPtr mk_app(TermPtr f, TermPtr a) { return mk(TermKind::App, {std::move(f), std::move(a)}); }
inline TermPtr mk_error_term(Ty ty, std::string msg) {
  auto t = mk(TermKind::ErrorTerm, {}, {std::move(ty)});
  const_cast<Term*>(t.get())->name = std::move(msg);
  return t;
}

struct Binding {
  std::string name;
  Ty ty;
};
using Context = std::vector<Binding>;

struct Program {
  Context args;
  TermPtr body;
};

// Structural equality; names, locations, provenance tags and pack-site ids
// are metadata.
inline bool term_eq(const TermPtr& a, const TermPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->kind != b->kind) return false;
  if (a->kind != TermKind::Pack && a->ival != b->ival) return false;
  if (a->ivals != b->ivals) return false;
  if (a->fval != b->fval) return false;
  if (a->kind == TermKind::PrimOp || a->kind == TermKind::DOpT || a->kind == TermKind::ErrorTerm)
    if (a->name != b->name) return false;
  if (a->tys != b->tys) return false;
  if (a->kids.size() != b->kids.size()) return false;
  for (size_t i = 0; i < a->kids.size(); ++i)
    if (!term_eq(a->kids[i], b->kids[i])) return false;
  return true;
}

inline bool is_source_kind(TermKind k) {
  switch (k) {
    case TermKind::Var:
    case TermKind::Let:
    case TermKind::UnitLit:
    case TermKind::Pair:
    case TermKind::Fst:
    case TermKind::Snd:
    case TermKind::Inl:
    case TermKind::Inr:
    case TermKind::Case:
    case TermKind::RealLit:
    case TermKind::IntLit:
    case TermKind::Sign:
    case TermKind::PrimOp:
    case TermKind::Lam:
    case TermKind::App:
    case TermKind::Build:
    case TermKind::Index:
    case TermKind::Fold:
    case TermKind::Length:
      return true;
    default:
      return false;
  }
}

inline bool is_source_term(const TermPtr& t) {
  if (!is_source_kind(t->kind)) return false;
  for (const auto& k : t->kids)
    if (!is_source_term(k)) return false;
  return true;
}

// Free variable levels strictly below `base` (levels >= base are bound inside).
// Closed-function bodies have their own level space and are skipped.
inline void free_vars_below(const TermPtr& t, int base, std::vector<bool>& used) {
  if (t->kind == TermKind::Var) {
    if (t->ival < base) used[(size_t)t->ival] = true;
    return;
  }
  if (t->kind == TermKind::ClosedLam) return;
  for (const auto& k : t->kids) free_vars_below(k, base, used);
}

// Shift every variable level by `delta` (used when relocating closed code).
inline TermPtr shift_levels(const TermPtr& t, long long delta) {
  if (t->kind == TermKind::ClosedLam) return t;
  auto n = std::make_shared<Term>(*t);
  if (t->kind == TermKind::Var) n->ival += delta;
  for (auto& k : n->kids) k = shift_levels(k, delta);
  return n;
}

} // namespace chad
