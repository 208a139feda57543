#pragma once

#include <memory>
#include <vector>

#include "chad/ast.hpp"
#include "chad/pmap.hpp"

namespace chad {

struct ValNode;
struct CotNode;
struct EnvNode;
struct ActionNode;
struct TreeNodeV;
struct ListNodeV;
using Value = std::shared_ptr<const ValNode>;
using Cot = std::shared_ptr<const CotNode>;
using Env = std::shared_ptr<const EnvNode>;
using Action = std::shared_ptr<const ActionNode>;
using TreeV = std::shared_ptr<const TreeNodeV>;
using ListV = std::shared_ptr<const ListNodeV>;

// Sparse cotangent values. CZero is the kind-agnostic zero produced when a
// projection or cast hits a sparse zero (the component type is not known at
// runtime); it is observationally the zero of every cotangent type.
enum class CotKind {
  CZero,
  CR,
  CUnit,
  CUnitFun,
  CPZero,
  CPair,
  CSZero,
  CInl,
  CInr,
  CBagEmpty,
  CBagOne,
  CBagPlus,
  CList,
  CSigmaZero,
  CSigma,
  CVarZero,
  CVariant,
  CEnvMap,
};

struct CotNode {
  CotKind k;
  double r = 0;
  long long index = 0; // CBagOne position / CVariant tag
  Cot a, b;
  Ty tag;                                  // CSigma
  std::vector<std::pair<Value, Cot>> log;  // CList invocation log
  PMap<Cot> env;                           // CEnvMap
};

inline Cot c0(CotKind k) {
  auto n = std::make_shared<CotNode>();
  n->k = k;
  return n;
}
inline Cot c_zero_any() {
  static const Cot z = c0(CotKind::CZero);
  return z;
}
inline Cot c_r(double v) {
  auto n = std::make_shared<CotNode>();
  n->k = CotKind::CR;
  n->r = v;
  return n;
}
inline Cot c_unit() {
  static const Cot u = c0(CotKind::CUnit);
  return u;
}
inline Cot c_unitfun() {
  static const Cot u = c0(CotKind::CUnitFun);
  return u;
}
inline Cot c_pzero() {
  static const Cot z = c0(CotKind::CPZero);
  return z;
}
inline Cot c_pair(Cot a, Cot b) {
  auto n = std::make_shared<CotNode>();
  n->k = CotKind::CPair;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}
inline Cot c_szero() {
  static const Cot z = c0(CotKind::CSZero);
  return z;
}
inline Cot c_inl(Cot a) {
  auto n = std::make_shared<CotNode>();
  n->k = CotKind::CInl;
  n->a = std::move(a);
  return n;
}
inline Cot c_inr(Cot b) {
  auto n = std::make_shared<CotNode>();
  n->k = CotKind::CInr;
  n->a = std::move(b);
  return n;
}
inline Cot c_bag_empty() {
  static const Cot z = c0(CotKind::CBagEmpty);
  return z;
}
inline Cot c_bag_one(long long i, Cot d) {
  auto n = std::make_shared<CotNode>();
  n->k = CotKind::CBagOne;
  n->index = i;
  n->a = std::move(d);
  return n;
}
inline Cot c_bag_plus(Cot a, Cot b) {
  auto n = std::make_shared<CotNode>();
  n->k = CotKind::CBagPlus;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}
inline Cot c_list(std::vector<std::pair<Value, Cot>> entries) {
  auto n = std::make_shared<CotNode>();
  n->k = CotKind::CList;
  n->log = std::move(entries);
  return n;
}
inline Cot c_sigma_zero() {
  static const Cot z = c0(CotKind::CSigmaZero);
  return z;
}
inline Cot c_var_zero() {
  static const Cot z = c0(CotKind::CVarZero);
  return z;
}
inline Cot c_variant(long long tag, Cot d) {
  auto n = std::make_shared<CotNode>();
  n->k = CotKind::CVariant;
  n->index = tag;
  n->a = std::move(d);
  return n;
}
inline Cot c_sigma(Ty tag, Cot d) {
  auto n = std::make_shared<CotNode>();
  n->k = CotKind::CSigma;
  n->tag = std::move(tag);
  n->a = std::move(d);
  return n;
}
inline Cot c_envmap(PMap<Cot> m) {
  auto n = std::make_shared<CotNode>();
  n->k = CotKind::CEnvMap;
  n->env = std::move(m);
  return n;
}

enum class ValKind {
  Real,
  Unit,
  Int,
  Pair,
  Inl,
  Inr,
  Arr,
  Closure,
  ClosedFun,
  Cotan,
  ActionV,
  Tree,
  List,
  PackV,
  VariantV,
};

struct ValNode {
  ValKind k;
  double r = 0;
  long long i = 0;
  Value a, b;               // pair components / injection payload (a)
  std::vector<Value> elems; // array
  Env cenv;                 // closure environment
  TermPtr lam;              // Lam or ClosedLam node
  Cot cot;
  Action act;
  TreeV tree;
  ListV list;
  Ty tag; // pack tag
};

struct EnvNode {
  Value v;
  Env up;
  int depth; // number of bindings including this one
};

inline Env env_push(const Env& e, Value v) {
  auto n = std::make_shared<EnvNode>();
  n->v = std::move(v);
  n->up = e;
  n->depth = (e ? e->depth : 0) + 1;
  return n;
}
inline const Value& env_get(const Env& e, long long level) {
  const EnvNode* n = e.get();
  long long steps = (n ? n->depth : 0) - 1 - level;
  while (steps-- > 0) n = n->up.get();
  return n->v;
}
inline int env_depth(const Env& e) { return e ? e->depth : 0; }

struct TreeNodeV {
  bool leaf;
  Value a;
  Value f;
  TreeV l, r;
};

struct ListNodeV {
  Value head;
  ListV tail;
  long long len;
};

inline ListV list_cons(Value h, const ListV& t) {
  auto n = std::make_shared<ListNodeV>();
  n->head = std::move(h);
  n->tail = t;
  n->len = (t ? t->len : 0) + 1;
  return n;
}
inline long long list_len(const ListV& l) { return l ? l->len : 0; }

struct ActionNode {
  enum K { Ret, One, Scope, Bind, Seq, UnTreeA } k;
  Value v; // Ret: result; Bind: continuation closure; UnTreeA: node handler
  long long level = 0;
  Ty ty;  // Scope: pushed slot type
  Cot d;  // One: contribution; UnTreeA: root cotangent
  Action m;
  std::vector<Action> seq;
  TreeV tree;
};

inline Value v0(ValKind k) {
  auto n = std::make_shared<ValNode>();
  n->k = k;
  return n;
}
inline Value v_real(double r) {
  auto n = std::make_shared<ValNode>();
  n->k = ValKind::Real;
  n->r = r;
  return n;
}
inline Value v_unit() {
  static const Value u = v0(ValKind::Unit);
  return u;
}
inline Value v_int(long long i) {
  auto n = std::make_shared<ValNode>();
  n->k = ValKind::Int;
  n->i = i;
  return n;
}
inline Value v_pair(Value a, Value b) {
  auto n = std::make_shared<ValNode>();
  n->k = ValKind::Pair;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}
inline Value v_inl(Value a) {
  auto n = std::make_shared<ValNode>();
  n->k = ValKind::Inl;
  n->a = std::move(a);
  return n;
}
inline Value v_inr(Value a) {
  auto n = std::make_shared<ValNode>();
  n->k = ValKind::Inr;
  n->a = std::move(a);
  return n;
}
inline Value v_arr(std::vector<Value> elems) {
  auto n = std::make_shared<ValNode>();
  n->k = ValKind::Arr;
  n->elems = std::move(elems);
  return n;
}
inline Value v_cot(Cot c) {
  auto n = std::make_shared<ValNode>();
  n->k = ValKind::Cotan;
  n->cot = std::move(c);
  return n;
}
inline Value v_closure(Env e, TermPtr lam) {
  auto n = std::make_shared<ValNode>();
  n->k = ValKind::Closure;
  n->cenv = std::move(e);
  n->lam = std::move(lam);
  return n;
}
inline Value v_closedfun(TermPtr lam) {
  auto n = std::make_shared<ValNode>();
  n->k = ValKind::ClosedFun;
  n->lam = std::move(lam);
  return n;
}
inline Value v_action(Action a) {
  auto n = std::make_shared<ValNode>();
  n->k = ValKind::ActionV;
  n->act = std::move(a);
  return n;
}
inline Value v_tree(TreeV t) {
  auto n = std::make_shared<ValNode>();
  n->k = ValKind::Tree;
  n->tree = std::move(t);
  return n;
}
inline Value v_list(ListV l) {
  auto n = std::make_shared<ValNode>();
  n->k = ValKind::List;
  n->list = std::move(l);
  return n;
}
inline Value v_pack(Ty tag, Value payload) {
  auto n = std::make_shared<ValNode>();
  n->k = ValKind::PackV;
  n->tag = std::move(tag);
  n->a = std::move(payload);
  return n;
}
inline Value v_variant(long long tag, Value payload) {
  auto n = std::make_shared<ValNode>();
  n->k = ValKind::VariantV;
  n->i = tag;
  n->a = std::move(payload);
  return n;
}

// Structural equality on first-order values (exact float comparison); function
// values compare by identity.
inline bool value_eq(const Value& x, const Value& y);
inline bool cot_eq(const Cot& x, const Cot& y);

inline bool value_eq(const Value& x, const Value& y) {
  if (x == y) return true;
  if (!x || !y || x->k != y->k) return false;
  switch (x->k) {
    case ValKind::Real: return x->r == y->r;
    case ValKind::Unit: return true;
    case ValKind::Int: return x->i == y->i;
    case ValKind::Pair: return value_eq(x->a, y->a) && value_eq(x->b, y->b);
    case ValKind::Inl:
    case ValKind::Inr: return value_eq(x->a, y->a);
    case ValKind::Arr: {
      if (x->elems.size() != y->elems.size()) return false;
      for (size_t i = 0; i < x->elems.size(); ++i)
        if (!value_eq(x->elems[i], y->elems[i])) return false;
      return true;
    }
    case ValKind::Cotan: return cot_eq(x->cot, y->cot);
    case ValKind::PackV: return x->tag == y->tag && value_eq(x->a, y->a);
    case ValKind::VariantV: return x->i == y->i && value_eq(x->a, y->a);
    default: return false;
  }
}

inline bool cot_eq(const Cot& x, const Cot& y) {
  if (x == y) return true;
  if (!x || !y || x->k != y->k) return false;
  switch (x->k) {
    case CotKind::CZero:
    case CotKind::CUnit:
    case CotKind::CUnitFun:
    case CotKind::CPZero:
    case CotKind::CSZero:
    case CotKind::CBagEmpty:
    case CotKind::CSigmaZero:
    case CotKind::CVarZero: return true;
    case CotKind::CR: return x->r == y->r;
    case CotKind::CPair:
    case CotKind::CBagPlus: return cot_eq(x->a, y->a) && cot_eq(x->b, y->b);
    case CotKind::CInl:
    case CotKind::CInr: return cot_eq(x->a, y->a);
    case CotKind::CBagOne:
    case CotKind::CVariant: return x->index == y->index && cot_eq(x->a, y->a);
    case CotKind::CSigma: return x->tag == y->tag && cot_eq(x->a, y->a);
    case CotKind::CList: {
      if (x->log.size() != y->log.size()) return false;
      for (size_t i = 0; i < x->log.size(); ++i)
        if (!value_eq(x->log[i].first, y->log[i].first) || !cot_eq(x->log[i].second, y->log[i].second))
          return false;
      return true;
    }
    case CotKind::CEnvMap: {
      std::vector<std::pair<long long, Cot>> ex, ey;
      pmap_entries(x->env, ex);
      pmap_entries(y->env, ey);
      if (ex.size() != ey.size()) return false;
      for (size_t i = 0; i < ex.size(); ++i)
        if (ex[i].first != ey[i].first || !cot_eq(ex[i].second, ey[i].second)) return false;
      return true;
    }
  }
  return false;
}

} // namespace chad
