#pragma once

#include <charconv>
#include <set>
#include <string>

#include "chad/ast.hpp"

// S-expression printer for types, terms and programs. Output is deterministic
// byte-for-byte and reparses to a structurally equal term: binder names are
// uniquified against everything in scope, and reals print in shortest
// round-trip form.

namespace chad {

inline std::string pretty_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string pretty_ty(const Ty& t) {
  auto bin = [&](const char* h) {
    return std::string("(") + h + " " + pretty_ty(t.a[0]) + " " + pretty_ty(t.a[1]) + ")";
  };
  switch (t.k) {
    case TyKind::Real: return "Real";
    case TyKind::Unit: return "Unit";
    case TyKind::Int: return "Int";
    case TyKind::Prod: return bin("Prod");
    case TyKind::Sum: return bin("Sum");
    case TyKind::Arrow: return bin("Arrow");
    case TyKind::Array: return "(Array " + pretty_ty(t.a[0]) + ")";
    case TyKind::ClosedArrow: return bin("CArrow");
    case TyKind::LReal: return "LReal";
    case TyKind::LUnit: return "LUnit";
    case TyKind::LUnitFun: return "LUnitF";
    case TyKind::LProd: return bin("LProd");
    case TyKind::LSum: return bin("LSum");
    case TyKind::Bag: return "(Bag " + pretty_ty(t.a[0]) + ")";
    case TyKind::List: return "(List " + pretty_ty(t.a[0]) + ")";
    case TyKind::Tree: return bin("Tree");
    case TyKind::Evm: return "(Evm " + pretty_ty(t.a[0]) + ")";
    case TyKind::Sigma: return "(Sigma " + pretty_ty(t.a[0]) + ")";
    case TyKind::LSigma: return "(LSigma " + pretty_ty(t.a[0]) + ")";
    case TyKind::EnvMap: return "EnvMap";
    case TyKind::Variant:
    case TyKind::LVariant: {
      std::string s = t.k == TyKind::Variant ? "(Variant" : "(LVariant";
      for (const auto& x : t.a) s += " " + pretty_ty(x);
      return s + ")";
    }
    case TyKind::Hole: return "Hole";
  }
  return "?";
}

namespace detail {

struct Printer {
  std::vector<std::string> scope; // printed name per level
  std::set<std::string> in_scope;

  std::string fresh(const std::string& want) {
    std::string base = want.empty() ? "v" : want;
    std::string name = base;
    if (in_scope.count(name)) {
      int n = (int)scope.size();
      do {
        name = base + "_" + std::to_string(n++);
      } while (in_scope.count(name));
    }
    return name;
  }

  std::string push(const std::string& want) {
    std::string name = fresh(want);
    scope.push_back(name);
    in_scope.insert(name);
    return name;
  }
  void pop() {
    in_scope.erase(scope.back());
    scope.pop_back();
  }

  std::string go(const TermPtr& t) {
    switch (t->kind) {
      case TermKind::Var: return scope.at((size_t)t->ival);
      case TermKind::RealLit: return pretty_real(t->fval);
      case TermKind::IntLit: return std::to_string(t->ival) + "i";
      case TermKind::UnitLit: return "unit";
      case TermKind::Let: {
        std::string b = go(t->kids[0]);
        std::string x = push(t->binders[0]);
        std::string body = go(t->kids[1]);
        pop();
        std::string ann = t->tys.empty() ? "" : " " + pretty_ty(t->tys[0]);
        return "(let (" + x + ann + ") " + b + " " + body + ")";
      }
      case TermKind::Pair: return two("pair", t);
      case TermKind::Fst: return one("fst", t);
      case TermKind::Snd: return one("snd", t);
      case TermKind::Inl: return "(inl " + pretty_ty(t->tys[0]) + " " + go(t->kids[0]) + ")";
      case TermKind::Inr: return "(inr " + pretty_ty(t->tys[0]) + " " + go(t->kids[0]) + ")";
      case TermKind::Case: {
        std::string s = go(t->kids[0]);
        std::string xl = push(t->binders[0]);
        std::string lb = go(t->kids[1]);
        pop();
        std::string xr = push(t->binders[1]);
        std::string rb = go(t->kids[2]);
        pop();
        return "(case " + s + " (" + xl + " " + lb + ") (" + xr + " " + rb + "))";
      }
      case TermKind::Sign: return one("sign", t);
      case TermKind::PrimOp: {
        std::string s = "(op " + t->name;
        for (const auto& k : t->kids) s += " " + go(k);
        return s + ")";
      }
      case TermKind::Lam: return lam("lam", t);
      case TermKind::ClosedLam: {
        // body lives in a fresh scope
        Printer sub;
        std::string x = sub.push(t->binders[0]);
        std::string body = sub.go(t->kids[0]);
        return "(clam (" + x + " " + pretty_ty(t->tys[0]) + ") " + body + ")";
      }
      case TermKind::App: return two("app", t);
      case TermKind::Build: {
        std::string n = go(t->kids[0]);
        std::string i = push(t->binders[0]);
        std::string b = go(t->kids[1]);
        pop();
        return "(build " + n + " (" + i + " " + b + "))";
      }
      case TermKind::Index: return two("index", t);
      case TermKind::Fold: {
        std::string p = push(t->binders[0]);
        std::string b = go(t->kids[0]);
        pop();
        std::string arr = go(t->kids[1]);
        return "(fold (" + p + " " + b + ") " + arr + ")";
      }
      case TermKind::Length: return one("length", t);
      case TermKind::LZero: return "(lzero " + pretty_ty(t->tys[0]) + ")";
      case TermKind::LPlus: return two("lplus", t);
      case TermKind::LPairC: return two("lpair", t);
      case TermKind::LFst: return one("lfst", t);
      case TermKind::LSnd: return one("lsnd", t);
      case TermKind::LInl: return "(linl " + pretty_ty(t->tys[0]) + " " + go(t->kids[0]) + ")";
      case TermKind::LInr: return "(linr " + pretty_ty(t->tys[0]) + " " + go(t->kids[0]) + ")";
      case TermKind::LCastL: return one("lcastl", t);
      case TermKind::LCastR: return one("lcastr", t);
      case TermKind::DOpT: {
        std::string s = "(dop " + t->name;
        for (const auto& k : t->kids) s += " " + go(k);
        return s + ")";
      }
      case TermKind::EvmReturn: return one("evm-return", t);
      case TermKind::EvmBind: return two("evm-bind", t);
      case TermKind::EvmOne:
        return "(evm-one " + std::to_string(t->ival) + " " + pretty_ty(t->tys[0]) + " " +
               go(t->kids[0]) + ")";
      case TermKind::EvmScope:
        return "(evm-scope " + pretty_ty(t->tys[0]) + " " + go(t->kids[0]) + ")";
      case TermKind::SequenceEvm: return one("sequence-evm", t);
      case TermKind::BagEmpty: return "(bag-empty " + pretty_ty(t->tys[0]) + ")";
      case TermKind::BagOne: return one("bag-one", t);
      case TermKind::BagPlus: return two("bag-plus", t);
      case TermKind::Collect: return one("collect", t);
      case TermKind::Scatter: return two("scatter", t);
      case TermKind::Unzip: return one("unzip", t);
      case TermKind::ZipWith: {
        std::string x = push(t->binders[0]);
        std::string y = push(t->binders[1]);
        std::string b = go(t->kids[0]);
        pop();
        pop();
        return "(zip-with (" + x + " " + y + ") " + b + " " + go(t->kids[1]) + " " +
               go(t->kids[2]) + ")";
      }
      case TermKind::FromList: return one("from-list", t);
      case TermKind::MapArr: {
        std::string x = push(t->binders[0]);
        std::string b = go(t->kids[0]);
        pop();
        return "(map-arr (" + x + ") " + b + " " + go(t->kids[1]) + ")";
      }
      case TermKind::TreeLeaf:
        return "(tree-leaf " + pretty_ty(t->tys[0]) + " " + go(t->kids[0]) + ")";
      case TermKind::TreeNode:
        return "(tree-node " + go(t->kids[0]) + " " + go(t->kids[1]) + " " + go(t->kids[2]) +
               " " + go(t->kids[3]) + ")";
      case TermKind::GetA: return one("get-a", t);
      case TermKind::UnTree:
        return "(untree " + go(t->kids[0]) + " " + go(t->kids[1]) + " " + go(t->kids[2]) + ")";
      case TermKind::ListNil: return "(list-nil " + pretty_ty(t->tys[0]) + ")";
      case TermKind::ListCons: return two("list-cons", t);
      case TermKind::FoldList: {
        std::string z = push(t->binders[0]);
        std::string acc = push(t->binders[1]);
        std::string b = go(t->kids[0]);
        pop();
        pop();
        return "(fold-list (" + z + " " + acc + ") " + b + " " + go(t->kids[1]) + " " +
               go(t->kids[2]) + ")";
      }
      case TermKind::ListAppend: return two("list-append", t);
      case TermKind::Pack:
        return "(pack " + pretty_ty(t->tys[0]) + " " + pretty_ty(t->tys[1]) + " " +
               go(t->kids[0]) + ")";
      case TermKind::UnpackCase: {
        std::string s = go(t->kids[0]);
        std::string z = push(t->binders[0]);
        std::string b = go(t->kids[1]);
        pop();
        return "(unpack " + s + " (" + z + " " + b + "))";
      }
      case TermKind::SigmaCast:
        return "(sigma-cast " + pretty_ty(t->tys[0]) + " " + pretty_ty(t->tys[1]) + " " +
               go(t->kids[0]) + ")";
      case TermKind::PackDyn: return two("pack-dyn", t);
      case TermKind::ErrorTerm:
        return "(error " + pretty_ty(t->tys[0]) + " \"" + t->name + "\")";
      case TermKind::EnvOneHot:
        return "(env-one " + std::to_string(t->ival) + " " + go(t->kids[0]) + ")";
      case TermKind::EnvPop:
        return "(env-pop " + std::to_string(t->ival) + " " + pretty_ty(t->tys[0]) + " " +
               go(t->kids[0]) + ")";
      case TermKind::Inject:
        return "(inject " + pretty_ty(t->tys[0]) + " " + std::to_string(t->ival) + " " +
               go(t->kids[0]) + ")";
      case TermKind::CaseN: {
        std::string s = "(case-n " + go(t->kids[0]);
        for (size_t j = 0; j < t->ivals.size(); ++j) {
          std::string x = push(t->binders[j]);
          s += " (" + std::to_string(t->ivals[j]) + " " + x + " " + go(t->kids[j + 1]) + ")";
          pop();
        }
        s += " (else " + go(t->kids.back()) + "))";
        return s;
      }
      case TermKind::LInject:
        return "(linject " + pretty_ty(t->tys[0]) + " " + std::to_string(t->ival) + " " +
               go(t->kids[0]) + ")";
      case TermKind::LCastN:
        return "(lcastn " + std::to_string(t->ival) + " " + pretty_ty(t->tys[0]) + " " +
               go(t->kids[0]) + ")";
    }
    return "?";
  }

  std::string one(const char* h, const TermPtr& t) {
    return std::string("(") + h + " " + go(t->kids[0]) + ")";
  }
  std::string two(const char* h, const TermPtr& t) {
    return std::string("(") + h + " " + go(t->kids[0]) + " " + go(t->kids[1]) + ")";
  }
  std::string lam(const char* h, const TermPtr& t) {
    std::string x = push(t->binders[0]);
    std::string b = go(t->kids[0]);
    pop();
    return std::string("(") + h + " (" + x + " " + pretty_ty(t->tys[0]) + ") " + b + ")";
  }
};

} // namespace detail

inline std::string pretty_term(const Context& ctx, const TermPtr& t) {
  detail::Printer p;
  for (const auto& b : ctx) p.push(b.name);
  return p.go(t);
}

inline std::string pretty_program(const Program& prog) {
  detail::Printer p;
  std::string s = "(program (args";
  for (const auto& b : prog.args) s += " (" + p.push(b.name) + " " + pretty_ty(b.ty) + ")";
  s += ") " + p.go(prog.body) + ")";
  return s;
}

} // namespace chad
