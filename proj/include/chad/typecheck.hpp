#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "chad/ast.hpp"
#include "chad/dtypes.hpp"
#include "chad/ops.hpp"
#include "chad/pretty.hpp"

// One-pass type synthesis for source and target terms. Monad actions carry
// only their result type; slot levels are absolute and their agreement with
// the state is enforced at execution time.

namespace chad {

struct TypeError : std::runtime_error {
  int line, col;
  TypeError(const std::string& msg, int l, int c)
      : std::runtime_error(msg + " at " + std::to_string(l) + ":" + std::to_string(c)),
        line(l),
        col(c) {}
};

namespace detail {

struct Checker {
  std::vector<Ty> ctx;

  [[noreturn]] void fail(const TermPtr& t, const std::string& msg) {
    throw TypeError(msg, t->line, t->col);
  }
  void want(const TermPtr& t, const Ty& expected, const Ty& actual, const char* what) {
    if (!(expected == actual))
      fail(t, std::string(what) + ": expected " + pretty_ty(expected) + ", got " +
                 pretty_ty(actual));
  }

  Ty synth(const TermPtr& t) {
    switch (t->kind) {
      case TermKind::Var: {
        if (t->ival < 0 || (size_t)t->ival >= ctx.size()) fail(t, "variable level out of scope");
        return ctx[(size_t)t->ival];
      }
      case TermKind::RealLit: return ty_real();
      case TermKind::IntLit: return ty_int();
      case TermKind::UnitLit: return ty_unit();
      case TermKind::Let: {
        Ty b = synth(t->kids[0]);
        if (!t->tys.empty()) want(t, t->tys[0], b, "let binding");
        ctx.push_back(std::move(b));
        Ty r = synth(t->kids[1]);
        ctx.pop_back();
        return r;
      }
      case TermKind::Pair: return ty_prod(synth(t->kids[0]), synth(t->kids[1]));
      case TermKind::Fst: {
        Ty p = synth(t->kids[0]);
        if (p.k != TyKind::Prod) fail(t, "fst of non-product " + pretty_ty(p));
        return p.a[0];
      }
      case TermKind::Snd: {
        Ty p = synth(t->kids[0]);
        if (p.k != TyKind::Prod) fail(t, "snd of non-product " + pretty_ty(p));
        return p.a[1];
      }
      case TermKind::Inl: return ty_sum(synth(t->kids[0]), t->tys[0]);
      case TermKind::Inr: return ty_sum(t->tys[0], synth(t->kids[0]));
      case TermKind::Case: {
        Ty s = synth(t->kids[0]);
        if (s.k != TyKind::Sum) fail(t, "case scrutinee is not a sum: " + pretty_ty(s));
        ctx.push_back(s.a[0]);
        Ty l = synth(t->kids[1]);
        ctx.pop_back();
        ctx.push_back(s.a[1]);
        Ty r = synth(t->kids[2]);
        ctx.pop_back();
        want(t, l, r, "case branches");
        return l;
      }
      case TermKind::Sign: {
        want(t, ty_real(), synth(t->kids[0]), "sign argument");
        return ty_sum(ty_unit(), ty_unit());
      }
      case TermKind::PrimOp: {
        const OpDef* op = find_op(t->name);
        if (!op) fail(t, "unknown operation '" + t->name + "'");
        if ((size_t)op->arity != t->kids.size())
          fail(t, "operation '" + t->name + "' expects " + std::to_string(op->arity) + " args");
        for (const auto& k : t->kids) want(t, ty_real(), synth(k), "operation argument");
        return ty_real();
      }
      case TermKind::Lam: {
        ctx.push_back(t->tys[0]);
        Ty r = synth(t->kids[0]);
        ctx.pop_back();
        return ty_arrow(t->tys[0], r);
      }
      case TermKind::ClosedLam: {
        Checker sub;
        sub.ctx.push_back(t->tys[0]);
        Ty r = sub.synth(t->kids[0]);
        return ty_carrow(t->tys[0], r);
      }
      case TermKind::App: {
        Ty f = synth(t->kids[0]);
        if (f.k != TyKind::Arrow && f.k != TyKind::ClosedArrow)
          fail(t, "applying a non-function: " + pretty_ty(f));
        want(t, f.a[0], synth(t->kids[1]), "application argument");
        return f.a[1];
      }
      case TermKind::Build: {
        want(t, ty_int(), synth(t->kids[0]), "build length");
        ctx.push_back(ty_int());
        Ty e = synth(t->kids[1]);
        ctx.pop_back();
        return ty_array(e);
      }
      case TermKind::Index: {
        Ty a = synth(t->kids[0]);
        if (a.k != TyKind::Array) fail(t, "indexing a non-array: " + pretty_ty(a));
        want(t, ty_int(), synth(t->kids[1]), "index");
        return a.a[0];
      }
      case TermKind::Fold: {
        Ty a = synth(t->kids[1]);
        if (a.k != TyKind::Array) fail(t, "fold over a non-array: " + pretty_ty(a));
        Ty e = a.a[0];
        ctx.push_back(ty_prod(e, e));
        Ty b = synth(t->kids[0]);
        ctx.pop_back();
        want(t, e, b, "fold combine body");
        return e;
      }
      case TermKind::Length: {
        Ty a = synth(t->kids[0]);
        if (a.k != TyKind::Array) fail(t, "length of a non-array: " + pretty_ty(a));
        return ty_int();
      }

      case TermKind::LZero: {
        if (!ty_is_linear(t->tys[0])) fail(t, "lzero at non-linear type " + pretty_ty(t->tys[0]));
        return t->tys[0];
      }
      case TermKind::LPlus: {
        Ty a = synth(t->kids[0]);
        Ty b = synth(t->kids[1]);
        want(t, a, b, "lplus operands");
        if (!ty_is_linear(a)) fail(t, "lplus at non-linear type " + pretty_ty(a));
        return a;
      }
      case TermKind::LPairC: return ty_lprod(synth(t->kids[0]), synth(t->kids[1]));
      case TermKind::LFst: {
        Ty p = synth(t->kids[0]);
        if (p.k != TyKind::LProd) fail(t, "lfst of " + pretty_ty(p));
        return p.a[0];
      }
      case TermKind::LSnd: {
        Ty p = synth(t->kids[0]);
        if (p.k != TyKind::LProd) fail(t, "lsnd of " + pretty_ty(p));
        return p.a[1];
      }
      case TermKind::LInl: return ty_lsum(synth(t->kids[0]), t->tys[0]);
      case TermKind::LInr: return ty_lsum(t->tys[0], synth(t->kids[0]));
      case TermKind::LCastL: {
        Ty s = synth(t->kids[0]);
        if (s.k != TyKind::LSum) fail(t, "lcastl of " + pretty_ty(s));
        return s.a[0];
      }
      case TermKind::LCastR: {
        Ty s = synth(t->kids[0]);
        if (s.k != TyKind::LSum) fail(t, "lcastr of " + pretty_ty(s));
        return s.a[1];
      }
      case TermKind::DOpT: {
        const OpDef* op = find_op(t->name);
        if (!op) fail(t, "unknown operation '" + t->name + "'");
        if (t->kids.size() != (size_t)op->arity + 1)
          fail(t, "transposed '" + t->name + "' expects " + std::to_string(op->arity) +
                     " primals and a cotangent");
        for (int i = 0; i < op->arity; ++i)
          want(t, ty_real(), synth(t->kids[(size_t)i]), "transposed-op primal");
        want(t, ty_lreal(), synth(t->kids.back()), "transposed-op cotangent");
        Ty r = ty_lreal();
        for (int i = 1; i < op->arity; ++i) r = ty_lprod(r, ty_lreal());
        return r;
      }

      case TermKind::EvmReturn: return ty_evm(synth(t->kids[0]));
      case TermKind::EvmBind: {
        Ty m = synth(t->kids[0]);
        if (m.k != TyKind::Evm) fail(t, "evm-bind of non-action " + pretty_ty(m));
        Ty k = synth(t->kids[1]);
        if (k.k != TyKind::Arrow) fail(t, "evm-bind continuation is not a function");
        want(t, evm_result(m), k.a[0], "evm-bind continuation argument");
        if (k.a[1].k != TyKind::Evm) fail(t, "evm-bind continuation must return an action");
        return k.a[1];
      }
      case TermKind::EvmOne: {
        if (t->ival < 0) fail(t, "evm-one slot level is negative");
        if (!ty_is_linear(t->tys[0])) fail(t, "evm-one slot annotation is not a cotangent type");
        want(t, t->tys[0], synth(t->kids[0]), "evm-one contribution");
        return ty_evm(ty_unit());
      }
      case TermKind::EvmScope: {
        Ty m = synth(t->kids[0]);
        if (m.k != TyKind::Evm) fail(t, "evm-scope of non-action " + pretty_ty(m));
        return ty_evm(ty_prod(evm_result(m), t->tys[0]));
      }
      case TermKind::SequenceEvm: {
        Ty a = synth(t->kids[0]);
        if (a.k != TyKind::Array || a.a[0].k != TyKind::Evm)
          fail(t, "sequence-evm of " + pretty_ty(a));
        return ty_evm(ty_array(evm_result(a.a[0])));
      }

      case TermKind::BagEmpty: return ty_bag(t->tys[0]);
      case TermKind::BagOne: {
        Ty e = synth(t->kids[0]);
        if (e.k != TyKind::Prod || e.a[0].k != TyKind::Int)
          fail(t, "bag-one expects an (index, cotangent) pair, got " + pretty_ty(e));
        return ty_bag(e);
      }
      case TermKind::BagPlus: {
        Ty a = synth(t->kids[0]);
        Ty b = synth(t->kids[1]);
        want(t, a, b, "bag-plus operands");
        if (a.k != TyKind::Bag) fail(t, "bag-plus of " + pretty_ty(a));
        return a;
      }
      case TermKind::Collect: {
        Ty b = synth(t->kids[0]);
        if (b.k != TyKind::Bag) fail(t, "collect of " + pretty_ty(b));
        return ty_array(b.a[0]);
      }
      case TermKind::Scatter: {
        Ty init = synth(t->kids[0]);
        Ty pairs = synth(t->kids[1]);
        if (init.k != TyKind::Array) fail(t, "scatter target is not an array");
        if (pairs.k != TyKind::Array || pairs.a[0].k != TyKind::Prod ||
            pairs.a[0].a[0].k != TyKind::Int)
          fail(t, "scatter source must be an array of (index, value) pairs");
        want(t, init.a[0], pairs.a[0].a[1], "scatter element");
        return init;
      }
      case TermKind::Unzip: {
        Ty a = synth(t->kids[0]);
        if (a.k != TyKind::Array || a.a[0].k != TyKind::Prod) fail(t, "unzip of " + pretty_ty(a));
        return ty_prod(ty_array(a.a[0].a[0]), ty_array(a.a[0].a[1]));
      }
      case TermKind::ZipWith: {
        Ty a = synth(t->kids[1]);
        Ty b = synth(t->kids[2]);
        if (a.k != TyKind::Array || b.k != TyKind::Array) fail(t, "zip-with of non-arrays");
        ctx.push_back(a.a[0]);
        ctx.push_back(b.a[0]);
        Ty c = synth(t->kids[0]);
        ctx.pop_back();
        ctx.pop_back();
        return ty_array(c);
      }
      case TermKind::FromList: {
        Ty l = synth(t->kids[0]);
        if (l.k != TyKind::List) fail(t, "from-list of " + pretty_ty(l));
        return ty_bag(ty_prod(ty_int(), l.a[0]));
      }
      case TermKind::MapArr: {
        Ty a = synth(t->kids[1]);
        if (a.k != TyKind::Array) fail(t, "map-arr of " + pretty_ty(a));
        ctx.push_back(a.a[0]);
        Ty b = synth(t->kids[0]);
        ctx.pop_back();
        return ty_array(b);
      }
      case TermKind::TreeLeaf: return ty_tree(synth(t->kids[0]), t->tys[0]);
      case TermKind::TreeNode: {
        Ty l = synth(t->kids[0]);
        Ty x = synth(t->kids[1]);
        Ty f = synth(t->kids[2]);
        Ty r = synth(t->kids[3]);
        if (l.k != TyKind::Tree) fail(t, "tree-node left is not a tree");
        want(t, l, r, "tree-node subtrees");
        want(t, l.a[0], x, "tree-node value");
        want(t, l.a[1], f, "tree-node function slot");
        return l;
      }
      case TermKind::GetA: {
        Ty tr = synth(t->kids[0]);
        if (tr.k != TyKind::Tree) fail(t, "get-a of " + pretty_ty(tr));
        return tr.a[0];
      }
      case TermKind::UnTree: {
        Ty g = synth(t->kids[0]);
        Ty d = synth(t->kids[1]);
        Ty tr = synth(t->kids[2]);
        if (tr.k != TyKind::Tree) fail(t, "untree of " + pretty_ty(tr));
        Ty expected = ty_arrow(d, ty_arrow(tr.a[1], ty_evm(ty_prod(d, d))));
        want(t, expected, g, "untree node handler");
        return ty_evm(ty_list(d));
      }

      case TermKind::ListNil: return ty_list(t->tys[0]);
      case TermKind::ListCons: {
        Ty h = synth(t->kids[0]);
        Ty l = synth(t->kids[1]);
        want(t, ty_list(h), l, "list-cons tail");
        return l;
      }
      case TermKind::FoldList: {
        Ty init = synth(t->kids[1]);
        Ty l = synth(t->kids[2]);
        if (l.k != TyKind::List) fail(t, "fold-list over " + pretty_ty(l));
        ctx.push_back(l.a[0]);
        ctx.push_back(init);
        Ty b = synth(t->kids[0]);
        ctx.pop_back();
        ctx.pop_back();
        want(t, init, b, "fold-list body");
        return init;
      }
      case TermKind::ListAppend: {
        Ty a = synth(t->kids[0]);
        Ty b = synth(t->kids[1]);
        want(t, a, b, "list-append operands");
        if (a.k != TyKind::List) fail(t, "list-append of " + pretty_ty(a));
        return a;
      }

      case TermKind::Pack: {
        // the hole instantiates differently in primal and cotangent positions,
        // so the payload is checked structurally modulo holes
        if (t->tys[0].k != TyKind::Sigma) fail(t, "pack annotation is not a Sigma type");
        Ty got = synth(t->kids[0]);
        if (!ty_matches_modulo_hole(t->tys[0].a[0], got))
          fail(t, "pack payload " + pretty_ty(got) + " does not fit " + pretty_ty(t->tys[0]));
        return t->tys[0];
      }
      case TermKind::UnpackCase: {
        Ty s = synth(t->kids[0]);
        if (s.k != TyKind::Sigma) fail(t, "unpack of " + pretty_ty(s));
        ctx.push_back(s.a[0]); // the hole stays abstract inside the branch
        Ty r = synth(t->kids[1]);
        ctx.pop_back();
        if (ty_contains_hole(r)) fail(t, "unpack result type leaks the abstract tag");
        return r;
      }
      case TermKind::SigmaCast: {
        // tags are runtime equality tokens; the annotated result type must be
        // an instantiation of the sigma's cotangent body
        Ty s = synth(t->kids[0]);
        if (s.k != TyKind::LSigma) fail(t, "sigma-cast of " + pretty_ty(s));
        if (!ty_matches_modulo_hole(s.a[0], t->tys[1]))
          fail(t, "sigma-cast result annotation does not match " + pretty_ty(s));
        return t->tys[1];
      }
      case TermKind::PackDyn: {
        Ty s = synth(t->kids[0]);
        if (s.k != TyKind::Sigma) fail(t, "pack-dyn tag source is not a Sigma value");
        Ty body2 = d2_type(s.a[0]);
        Ty d = synth(t->kids[1]);
        // the contribution is typed under the abstract tag; shapes are checked
        // dynamically, so holes on either side match anything
        if (!ty_matches_modulo_hole(body2, d))
          fail(t, "pack-dyn contribution: expected " + pretty_ty(body2) + ", got " + pretty_ty(d));
        return ty_lsigma(body2);
      }
      case TermKind::ErrorTerm: return t->tys[0];

      case TermKind::EnvOneHot: {
        if (t->ival < 0) fail(t, "env-one level out of range");
        Ty d = synth(t->kids[0]);
        if (!ty_is_linear(d)) fail(t, "env-one contribution is not a cotangent");
        return ty_envmap();
      }
      case TermKind::EnvPop: {
        Ty e = synth(t->kids[0]);
        if (e.k != TyKind::EnvMap) fail(t, "env-pop of " + pretty_ty(e));
        if (!ty_is_linear(t->tys[0])) fail(t, "env-pop annotation is not a cotangent type");
        return ty_prod(ty_envmap(), t->tys[0]);
      }

      case TermKind::Inject: {
        const Ty& vt = t->tys[0];
        if (vt.k != TyKind::Variant) fail(t, "inject annotation is not a variant type");
        if (t->ival < 0 || (size_t)t->ival >= vt.a.size()) fail(t, "inject tag out of range");
        want(t, vt.a[(size_t)t->ival], synth(t->kids[0]), "inject payload");
        return vt;
      }
      case TermKind::CaseN: {
        Ty s = synth(t->kids[0]);
        if (s.k != TyKind::Variant) fail(t, "case-n scrutinee is not a variant: " + pretty_ty(s));
        if (t->kids.size() != t->ivals.size() + 2) fail(t, "case-n arity mismatch");
        Ty result{};
        bool have = false;
        for (size_t j = 0; j < t->ivals.size(); ++j) {
          long long tag = t->ivals[j];
          if (tag < 0 || (size_t)tag >= s.a.size()) fail(t, "case-n branch tag out of range");
          ctx.push_back(s.a[(size_t)tag]);
          Ty b = synth(t->kids[j + 1]);
          ctx.pop_back();
          if (have) want(t, result, b, "case-n branches");
          result = std::move(b);
          have = true;
        }
        Ty dflt = synth(t->kids.back());
        if (have) want(t, result, dflt, "case-n default");
        return have ? result : dflt;
      }
      case TermKind::LInject: {
        const Ty& vt = t->tys[0];
        if (vt.k != TyKind::LVariant) fail(t, "linject annotation is not a variant cotangent");
        if (t->ival < 0 || (size_t)t->ival >= vt.a.size()) fail(t, "linject tag out of range");
        want(t, vt.a[(size_t)t->ival], synth(t->kids[0]), "linject payload");
        return vt;
      }
      case TermKind::LCastN: {
        Ty s = synth(t->kids[0]);
        if (s.k != TyKind::LVariant) fail(t, "lcastn of " + pretty_ty(s));
        if (t->ival < 0 || (size_t)t->ival >= s.a.size()) fail(t, "lcastn tag out of range");
        want(t, t->tys[0], s.a[(size_t)t->ival], "lcastn result annotation");
        return t->tys[0];
      }
    }
    fail(t, "unhandled term");
  }

  static bool ty_matches_modulo_hole(const Ty& a, const Ty& b) {
    if (a.k == TyKind::Hole || b.k == TyKind::Hole) return true;
    if (a.k != b.k || a.a.size() != b.a.size()) return false;
    for (size_t i = 0; i < a.a.size(); ++i)
      if (!ty_matches_modulo_hole(a.a[i], b.a[i])) return false;
    return true;
  }
};

} // namespace detail

inline Ty typecheck(const Context& ctx, const TermPtr& t) {
  detail::Checker c;
  for (const auto& b : ctx) c.ctx.push_back(b.ty);
  return c.synth(t);
}

inline Ty typecheck(const Program& p) { return typecheck(p.args, p.body); }

} // namespace chad
