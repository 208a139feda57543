#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "chad/chad.hpp"

// Higher-order support beyond the naive invocation-log rules: typed closure
// conversion (every lambda becomes a pack of its capture tuple with a closed
// function) and defunctionalisation (each sigma type is replaced by an n-ary
// variant of the capture tuples of the packs that inhabit it, with call sites
// dispatching on the tag). Reachability of packs at unpack sites comes from a
// small whole-program flow analysis; a call site no pack can reach is an
// InventoryMismatch.

namespace chad {

struct LambdaSite {
  int id;
  Ty sigma;           // the full Sigma type of the pack
  Ty cap_ty;          // its capture-tuple type (already converted)
  TermPtr closed_fun; // the ClosedLam inside the pack payload
};
using LambdaInventory = std::vector<LambdaSite>;

namespace detail {

// ---- closure conversion -------------------------------------------------

inline Ty tcc(const Ty& t) {
  if (t.k == TyKind::Arrow) {
    Ty a = tcc(t.a[0]), b = tcc(t.a[1]);
    return ty_sigma(ty_prod(ty_hole(), ty_carrow(ty_prod(ty_hole(), a), b)));
  }
  Ty out{t.k, {}};
  out.a.reserve(t.a.size());
  for (const auto& x : t.a) out.a.push_back(tcc(x));
  return out;
}

struct CC {
  std::vector<Ty> src;    // source context types, by source level
  std::vector<int> map;   // source level -> output level (-1: unavailable)
  int depth = 0;
  int* sites;
  int fresh = 0;

  std::string fname(const char* base) { return std::string(base) + std::to_string(fresh++); }

  Ty src_type(const TermPtr& t) {
    switch (t->kind) {
      case TermKind::Var: return src.at((size_t)t->ival);
      case TermKind::RealLit: return ty_real();
      case TermKind::IntLit: return ty_int();
      case TermKind::UnitLit: return ty_unit();
      case TermKind::Let: {
        src.push_back(t->tys[0]);
        Ty r = src_type(t->kids[1]);
        src.pop_back();
        return r;
      }
      case TermKind::Pair: return ty_prod(src_type(t->kids[0]), src_type(t->kids[1]));
      case TermKind::Fst: return src_type(t->kids[0]).a[0];
      case TermKind::Snd: return src_type(t->kids[0]).a[1];
      case TermKind::Inl: return ty_sum(src_type(t->kids[0]), t->tys[0]);
      case TermKind::Inr: return ty_sum(t->tys[0], src_type(t->kids[0]));
      case TermKind::Case: {
        Ty s = src_type(t->kids[0]);
        src.push_back(s.a[0]);
        Ty r = src_type(t->kids[1]);
        src.pop_back();
        return r;
      }
      case TermKind::Sign: return ty_sum(ty_unit(), ty_unit());
      case TermKind::PrimOp: return ty_real();
      case TermKind::Lam: {
        src.push_back(t->tys[0]);
        Ty r = src_type(t->kids[0]);
        src.pop_back();
        return ty_arrow(t->tys[0], r);
      }
      case TermKind::App: return src_type(t->kids[0]).a[1];
      case TermKind::Build: {
        src.push_back(ty_int());
        Ty e = src_type(t->kids[1]);
        src.pop_back();
        return ty_array(e);
      }
      case TermKind::Index: return src_type(t->kids[0]).a[0];
      case TermKind::Fold: return src_type(t->kids[1]).a[0];
      case TermKind::Length: return ty_int();
      default: unsupported("closure conversion expects a source term");
    }
  }

  TermPtr go(const TermPtr& t) {
    switch (t->kind) {
      case TermKind::Var: {
        int out = map.at((size_t)t->ival);
        if (out < 0) unsupported("reference to a variable outside the closure");
        return mk_var(out, t->name);
      }
      case TermKind::RealLit:
      case TermKind::IntLit:
      case TermKind::UnitLit: return t;
      case TermKind::Let: {
        TermPtr bound = go(t->kids[0]);
        src.push_back(t->tys[0]);
        map.push_back(depth);
        ++depth;
        TermPtr body = go(t->kids[1]);
        --depth;
        map.pop_back();
        src.pop_back();
        return mk_let(t->binders[0], tcc(t->tys[0]), std::move(bound), std::move(body));
      }
      case TermKind::Pair:
      case TermKind::Fst:
      case TermKind::Snd:
      case TermKind::Sign:
      case TermKind::PrimOp:
      case TermKind::Index:
      case TermKind::Length: {
        auto n = std::make_shared<Term>(*t);
        for (auto& k : n->kids) k = go(k);
        return n;
      }
      case TermKind::Inl:
      case TermKind::Inr: {
        auto n = std::make_shared<Term>(*t);
        n->tys[0] = tcc(t->tys[0]);
        n->kids[0] = go(t->kids[0]);
        return n;
      }
      case TermKind::Case: {
        Ty sty = src_type(t->kids[0]);
        TermPtr s = go(t->kids[0]);
        auto branch = [&](const Ty& bty, const TermPtr& b) {
          src.push_back(bty);
          map.push_back(depth);
          ++depth;
          TermPtr r = go(b);
          --depth;
          map.pop_back();
          src.pop_back();
          return r;
        };
        TermPtr lb = branch(sty.a[0], t->kids[1]);
        TermPtr rb = branch(sty.a[1], t->kids[2]);
        return mk(TermKind::Case, {std::move(s), std::move(lb), std::move(rb)}, {}, t->binders);
      }
      case TermKind::Build: {
        TermPtr n = go(t->kids[0]);
        src.push_back(ty_int());
        map.push_back(depth);
        ++depth;
        TermPtr body = go(t->kids[1]);
        --depth;
        map.pop_back();
        src.pop_back();
        return mk(TermKind::Build, {std::move(n), std::move(body)}, {}, t->binders);
      }
      case TermKind::Fold: {
        Ty aty = src_type(t->kids[1]);
        TermPtr arr = go(t->kids[1]);
        src.push_back(ty_prod(aty.a[0], aty.a[0]));
        map.push_back(depth);
        ++depth;
        TermPtr body = go(t->kids[0]);
        --depth;
        map.pop_back();
        src.pop_back();
        return mk(TermKind::Fold, {std::move(body), std::move(arr)}, {}, t->binders);
      }
      case TermKind::Lam: return convert_lam(t);
      case TermKind::App: {
        TermPtr f = go(t->kids[0]);
        std::string zn = fname("cl");
        int zl = depth++;
        TermPtr arg = go(t->kids[1]);
        TermPtr body = mk_app(mk_snd(mk_var(zl)), mk_pair(mk_fst(mk_var(zl)), std::move(arg)));
        --depth;
        return mk(TermKind::UnpackCase, {std::move(f), std::move(body)}, {}, {zn});
      }
      default: unsupported("closure conversion expects a source term");
    }
  }

  TermPtr convert_lam(const TermPtr& t) {
    const Ty& sigma_arg = t->tys[0];
    src.push_back(sigma_arg);
    Ty rho = src_type(t->kids[0]);
    src.pop_back();

    std::vector<bool> used(src.size(), false);
    free_vars_below(t->kids[0], (int)src.size(), used);
    std::vector<int> fvs;
    for (size_t i = 0; i < used.size(); ++i)
      if (used[i]) fvs.push_back((int)i);

    Ty cap_ty = ty_unit();
    if (!fvs.empty()) {
      cap_ty = tcc(src[(size_t)fvs[0]]);
      for (size_t i = 1; i < fvs.size(); ++i)
        cap_ty = ty_prod(std::move(cap_ty), tcc(src[(size_t)fvs[i]]));
    }
    TermPtr cap_expr = mk_unit();
    if (!fvs.empty()) {
      cap_expr = mk_var(map.at((size_t)fvs[0]));
      for (size_t i = 1; i < fvs.size(); ++i)
        cap_expr = mk_pair(std::move(cap_expr), mk_var(map.at((size_t)fvs[i])));
    }

    Ty arg_cc = tcc(sigma_arg);
    Ty sigma = ty_sigma(ty_prod(ty_hole(), ty_carrow(ty_prod(ty_hole(), arg_cc), tcc(rho))));

    // closed function body: destructure the (captures, argument) pair
    CC sub;
    sub.sites = sites;
    sub.src = src;
    sub.src.push_back(sigma_arg);
    sub.map.assign(sub.src.size(), -1);
    // level 0: the pair; level 1: captures (if any); then the argument; then
    // one binding per captured variable
    TermPtr inner;
    {
      int lvl = 1;
      int cap_lvl = -1;
      if (!fvs.empty()) cap_lvl = lvl++;
      int arg_lvl = lvl++;
      std::vector<int> cap_levels;
      for (size_t i = 0; i < fvs.size(); ++i) cap_levels.push_back(lvl++);
      sub.map[src.size()] = arg_lvl;
      for (size_t i = 0; i < fvs.size(); ++i) sub.map[(size_t)fvs[i]] = cap_levels[i];
      sub.depth = lvl;
      TermPtr body = sub.go(t->kids[0]);
      // wrap destructuring lets inside-out
      for (size_t i = fvs.size(); i-- > 0;) {
        TermPtr proj = mk_var(cap_lvl);
        for (size_t k = 0; k + i + 1 < fvs.size(); ++k) proj = mk_fst(std::move(proj));
        if (i > 0) proj = mk_snd(std::move(proj));
        if (fvs.size() == 1) proj = mk_var(cap_lvl);
        body = mk_let("c" + std::to_string(i), tcc(src[(size_t)fvs[i]]), std::move(proj),
                      std::move(body));
      }
      body = mk_let(t->binders[0], arg_cc, mk_snd(mk_var(0)), std::move(body));
      if (!fvs.empty()) body = mk_let("cap", cap_ty, mk_fst(mk_var(0)), std::move(body));
      inner = mk(TermKind::ClosedLam, {std::move(body)}, {ty_prod(cap_ty, arg_cc)}, {"p"});
    }
    fresh = sub.fresh + fresh;

    auto pack = mk(TermKind::Pack, {mk_pair(std::move(cap_expr), std::move(inner))},
                   {sigma, cap_ty});
    const_cast<Term*>(pack.get())->ival = (*sites)++;
    return pack;
  }
};

// ---- flow analysis ------------------------------------------------------

struct AV;
using AVP = std::shared_ptr<AV>;
struct AV {
  std::set<int> packs;
  std::set<const Term*> clams;
  AVP a, b;   // pair components
  AVP elem;   // array element join
  AVP inl, inr;
};

inline AVP av_join(const AVP& x, const AVP& y) {
  if (!x) return y;
  if (!y) return x;
  auto r = std::make_shared<AV>();
  r->packs = x->packs;
  r->packs.insert(y->packs.begin(), y->packs.end());
  r->clams = x->clams;
  r->clams.insert(y->clams.begin(), y->clams.end());
  r->a = av_join(x->a, y->a);
  r->b = av_join(x->b, y->b);
  r->elem = av_join(x->elem, y->elem);
  r->inl = av_join(x->inl, y->inl);
  r->inr = av_join(x->inr, y->inr);
  return r;
}

inline size_t av_weight(const AVP& v) {
  if (!v) return 0;
  return v->packs.size() + v->clams.size() + av_weight(v->a) + av_weight(v->b) +
         av_weight(v->elem) + av_weight(v->inl) + av_weight(v->inr);
}

struct Flow {
  std::map<const Term*, std::set<int>> flows;   // unpack node -> reachable packs
  std::map<int, AVP> payload;                   // pack site -> payload value
  std::map<int, const Term*> pack_nodes;

  AVP eval(const TermPtr& t, std::vector<AVP>& env) {
    switch (t->kind) {
      case TermKind::Var: return env.at((size_t)t->ival);
      case TermKind::Let: {
        AVP b = eval(t->kids[0], env);
        env.push_back(std::move(b));
        AVP r = eval(t->kids[1], env);
        env.pop_back();
        return r;
      }
      case TermKind::Pair: {
        auto r = std::make_shared<AV>();
        r->a = eval(t->kids[0], env);
        r->b = eval(t->kids[1], env);
        return r;
      }
      case TermKind::Fst: {
        AVP p = eval(t->kids[0], env);
        return p ? p->a : nullptr;
      }
      case TermKind::Snd: {
        AVP p = eval(t->kids[0], env);
        return p ? p->b : nullptr;
      }
      case TermKind::Inl: {
        auto r = std::make_shared<AV>();
        r->inl = eval(t->kids[0], env);
        return r;
      }
      case TermKind::Inr: {
        auto r = std::make_shared<AV>();
        r->inr = eval(t->kids[0], env);
        return r;
      }
      case TermKind::Case: {
        AVP s = eval(t->kids[0], env);
        env.push_back(s ? s->inl : nullptr);
        AVP l = eval(t->kids[1], env);
        env.pop_back();
        env.push_back(s ? s->inr : nullptr);
        AVP r = eval(t->kids[2], env);
        env.pop_back();
        return av_join(l, r);
      }
      case TermKind::Build: {
        eval(t->kids[0], env);
        env.push_back(nullptr);
        AVP e = eval(t->kids[1], env);
        env.pop_back();
        auto r = std::make_shared<AV>();
        r->elem = std::move(e);
        return r;
      }
      case TermKind::Index: {
        AVP a = eval(t->kids[0], env);
        eval(t->kids[1], env);
        return a ? a->elem : nullptr;
      }
      case TermKind::Fold: {
        AVP a = eval(t->kids[1], env);
        AVP e = a ? a->elem : nullptr;
        // iterate once more so combine results feed back into the element
        for (int it = 0; it < 2; ++it) {
          auto pr = std::make_shared<AV>();
          pr->a = e;
          pr->b = e;
          env.push_back(pr);
          AVP c = eval(t->kids[0], env);
          env.pop_back();
          e = av_join(e, c);
        }
        return e;
      }
      case TermKind::Length: {
        eval(t->kids[0], env);
        return nullptr;
      }
      case TermKind::ClosedLam: {
        auto r = std::make_shared<AV>();
        r->clams.insert(t.get());
        return r;
      }
      case TermKind::Pack: {
        AVP p = eval(t->kids[0], env);
        int id = (int)t->ival;
        payload[id] = av_join(payload[id], p);
        pack_nodes[id] = t.get();
        auto r = std::make_shared<AV>();
        r->packs.insert(id);
        return r;
      }
      case TermKind::UnpackCase: {
        AVP s = eval(t->kids[0], env);
        AVP z = nullptr;
        if (s) {
          auto& fl = flows[t.get()];
          for (int id : s->packs) {
            fl.insert(id);
            z = av_join(z, payload[id]);
          }
        }
        env.push_back(std::move(z));
        AVP r = eval(t->kids[1], env);
        env.pop_back();
        return r;
      }
      case TermKind::App: {
        AVP f = eval(t->kids[0], env);
        AVP arg = eval(t->kids[1], env);
        AVP r = nullptr;
        if (f)
          for (const Term* cl : f->clams) {
            std::vector<AVP> sub{arg};
            r = av_join(r, eval(cl->kids[0], sub));
          }
        return r;
      }
      default: {
        for (const auto& k : t->kids) eval(k, env);
        return nullptr;
      }
    }
  }

  void analyse(const Context& ctx, const TermPtr& t) {
    size_t prev = SIZE_MAX;
    for (int pass = 0; pass < 64; ++pass) {
      std::vector<AVP> env(ctx.size(), nullptr);
      eval(t, env);
      size_t w = 0;
      for (auto& [k, v] : flows) w += v.size();
      for (auto& [k, v] : payload) w += av_weight(v);
      if (pass > 0 && w == prev) break;
      prev = w;
    }
  }
};

// ---- defunctionalisation ------------------------------------------------

struct Defunc {
  struct Group {
    Ty sigma;
    std::vector<int> sites;
  };
  std::vector<Group> groups;
  std::map<int, LambdaSite> sites;
  const std::map<const Term*, std::set<int>>* flows = nullptr;
  int fresh = 0;

  std::string fname(const char* base) { return std::string(base) + std::to_string(fresh++); }

  const Group& group_of(const Ty& sigma) {
    for (const auto& g : groups)
      if (g.sigma == sigma) return g;
    throw TransformError("InventoryMismatch", "no lambda of this closure type in the program");
  }

  void collect(const TermPtr& t) {
    if (t->kind == TermKind::Pack) {
      const TermPtr& payload = t->kids[0];
      if (payload->kind != TermKind::Pair || payload->kids[1]->kind != TermKind::ClosedLam)
        throw TransformError("UnsupportedConstruct",
                             "defunctionalisation expects closure-converted packs");
      LambdaSite s{(int)t->ival, t->tys[0], t->tys[1], payload->kids[1]};
      sites.emplace(s.id, s);
      bool found = false;
      for (auto& g : groups)
        if (g.sigma == s.sigma) {
          g.sites.push_back(s.id);
          found = true;
        }
      if (!found) groups.push_back({s.sigma, {s.id}});
    }
    for (const auto& k : t->kids) collect(k);
  }

  void finish_collect() {
    for (auto& g : groups) std::sort(g.sites.begin(), g.sites.end());
  }

  Ty fty(const Ty& t) {
    switch (t.k) {
      case TyKind::Sigma: {
        const Group& g = group_of(t);
        if (g.sites.size() == 1) return fty(sites.at(g.sites[0]).cap_ty);
        std::vector<Ty> comps;
        for (int id : g.sites) comps.push_back(fty(sites.at(id).cap_ty));
        return ty_variant(std::move(comps));
      }
      case TyKind::ClosedArrow:
      case TyKind::Arrow:
      case TyKind::Hole:
        throw TransformError("UnsupportedConstruct",
                             "function type outside a closure in defunctionalisation");
      default: {
        Ty out{t.k, {}};
        out.a.reserve(t.a.size());
        for (const auto& x : t.a) out.a.push_back(fty(x));
        return out;
      }
    }
  }

  // Current-frame rewrite. `d` is the context depth at this node.
  TermPtr go(const TermPtr& t, int d) {
    switch (t->kind) {
      case TermKind::Pack: {
        const Group& g = group_of(t->tys[0]);
        TermPtr cap = go(t->kids[0]->kids[0], d);
        if (g.sites.size() == 1) return cap;
        size_t pos = 0;
        while (g.sites[pos] != (int)t->ival) ++pos;
        std::vector<Ty> comps;
        for (int id : g.sites) comps.push_back(fty(sites.at(id).cap_ty));
        auto inj = mk(TermKind::Inject, {std::move(cap)}, {ty_variant(std::move(comps))});
        const_cast<Term*>(inj.get())->ival = (long long)pos;
        return inj;
      }
      case TermKind::UnpackCase: return rewrite_unpack(t, d);
      case TermKind::Let: {
        Ty bty = cc_type(t->kids[0]);
        TermPtr bound = go(t->kids[0], d);
        ctx_tys.push_back(std::move(bty));
        TermPtr body = go(t->kids[1], d + 1);
        ctx_tys.pop_back();
        return mk(TermKind::Let, {std::move(bound), std::move(body)},
                  t->tys.empty() ? std::vector<Ty>{} : std::vector<Ty>{fty(t->tys[0])},
                  t->binders);
      }
      case TermKind::Inl:
      case TermKind::Inr: {
        auto n = std::make_shared<Term>(*t);
        n->tys[0] = fty(t->tys[0]);
        n->kids[0] = go(t->kids[0], d);
        return n;
      }
      case TermKind::Case: {
        Ty sty = cc_type(t->kids[0]);
        TermPtr s = go(t->kids[0], d);
        ctx_tys.push_back(sty.a[0]);
        TermPtr lb = go(t->kids[1], d + 1);
        ctx_tys.pop_back();
        ctx_tys.push_back(sty.a[1]);
        TermPtr rb = go(t->kids[2], d + 1);
        ctx_tys.pop_back();
        return mk(TermKind::Case, {std::move(s), std::move(lb), std::move(rb)}, {}, t->binders);
      }
      case TermKind::Build: {
        TermPtr n = go(t->kids[0], d);
        ctx_tys.push_back(ty_int());
        TermPtr body = go(t->kids[1], d + 1);
        ctx_tys.pop_back();
        return mk(TermKind::Build, {std::move(n), std::move(body)}, {}, t->binders);
      }
      case TermKind::Fold: {
        Ty ety = cc_type(t->kids[1]).a[0];
        ctx_tys.push_back(ty_prod(ety, ety));
        TermPtr body = go(t->kids[0], d + 1);
        ctx_tys.pop_back();
        TermPtr arr = go(t->kids[1], d);
        return mk(TermKind::Fold, {std::move(body), std::move(arr)}, {}, t->binders);
      }
      case TermKind::Lam:
      case TermKind::ClosedLam:
      case TermKind::App:
        throw TransformError("UnsupportedConstruct",
                             "unexpected function construct during defunctionalisation");
      default: {
        auto n = std::make_shared<Term>(*t);
        for (auto& k : n->kids) k = go(k, d);
        return n;
      }
    }
  }

  // Ty of a CC'd term, for the error-branch annotations.
  std::vector<Ty> ctx_tys; // CC types by level (current frame)
  Ty cc_type(const TermPtr& t) {
    switch (t->kind) {
      case TermKind::Var: return ctx_tys.at((size_t)t->ival);
      case TermKind::RealLit: return ty_real();
      case TermKind::IntLit: return ty_int();
      case TermKind::UnitLit: return ty_unit();
      case TermKind::Let: {
        Ty b = cc_type(t->kids[0]);
        ctx_tys.push_back(std::move(b));
        Ty r = cc_type(t->kids[1]);
        ctx_tys.pop_back();
        return r;
      }
      case TermKind::Pair: return ty_prod(cc_type(t->kids[0]), cc_type(t->kids[1]));
      case TermKind::Fst: return cc_type(t->kids[0]).a[0];
      case TermKind::Snd: return cc_type(t->kids[0]).a[1];
      case TermKind::Inl: return ty_sum(cc_type(t->kids[0]), t->tys[0]);
      case TermKind::Inr: return ty_sum(t->tys[0], cc_type(t->kids[0]));
      case TermKind::Case: {
        Ty s = cc_type(t->kids[0]);
        ctx_tys.push_back(s.a[0]);
        Ty r = cc_type(t->kids[1]);
        ctx_tys.pop_back();
        return r;
      }
      case TermKind::Sign: return ty_sum(ty_unit(), ty_unit());
      case TermKind::PrimOp: return ty_real();
      case TermKind::ClosedLam: {
        std::vector<Ty> saved;
        saved.swap(ctx_tys);
        ctx_tys.push_back(t->tys[0]);
        Ty r = cc_type(t->kids[0]);
        ctx_tys.swap(saved);
        return ty_carrow(t->tys[0], r);
      }
      case TermKind::App: return cc_type(t->kids[0]).a[1];
      case TermKind::Build: {
        ctx_tys.push_back(ty_int());
        Ty e = cc_type(t->kids[1]);
        ctx_tys.pop_back();
        return ty_array(e);
      }
      case TermKind::Index: return cc_type(t->kids[0]).a[0];
      case TermKind::Fold: return cc_type(t->kids[1]).a[0];
      case TermKind::Length: return ty_int();
      case TermKind::Pack: return t->tys[0];
      case TermKind::UnpackCase: {
        Ty s = cc_type(t->kids[0]);
        ctx_tys.push_back(s.a[0]);
        Ty r = cc_type(t->kids[1]);
        ctx_tys.pop_back();
        return r;
      }
      default:
        throw TransformError("UnsupportedConstruct", "unexpected construct in converted code");
    }
  }

  TermPtr rewrite_unpack(const TermPtr& t, int d) {
    // canonical converted shape: unpack s as z in (snd z) (fst z, ARG)
    const TermPtr& body = t->kids[1];
    auto canonical = [&]() -> TermPtr {
      if (body->kind != TermKind::App) return nullptr;
      const TermPtr& f = body->kids[0];
      const TermPtr& pr = body->kids[1];
      if (f->kind != TermKind::Snd || f->kids[0]->kind != TermKind::Var ||
          f->kids[0]->ival != d)
        return nullptr;
      if (pr->kind != TermKind::Pair || pr->kids[0]->kind != TermKind::Fst ||
          pr->kids[0]->kids[0]->kind != TermKind::Var || pr->kids[0]->kids[0]->ival != d)
        return nullptr;
      return pr->kids[1];
    }();
    if (!canonical)
      throw TransformError("UnsupportedConstruct",
                           "defunctionalisation expects closure-converted call sites");
    auto it = flows->find(t.get());
    if (it == flows->end() || it->second.empty())
      throw TransformError("InventoryMismatch", "no lambda reaches this call site");
    Ty sig = cc_type(t->kids[0]);
    const Group& g = group_of(sig);
    Ty result = fty(cc_type(t));
    ctx_tys.push_back(sig.a[0]);
    Ty arg_cc_ty = cc_type(canonical);
    ctx_tys.pop_back();

    TermPtr scrut = go(t->kids[0], d);
    // argument of the call, rewritten in this frame at its final depth
    auto arg_at = [&](int extra) {
      ctx_tys.push_back(sig.a[0]);
      TermPtr a = go(canonical, d + 1);
      ctx_tys.pop_back();
      return shift_above(a, d, extra); // internal binders move past the added ones
    };

    auto inline_site = [&](int id, TermPtr cap_ref, int pb_depth) -> TermPtr {
      const LambdaSite& s = sites.at(id);
      // rewrite the closed body in its own frame, then relocate it wholesale
      Defunc& self = *this;
      std::vector<Ty> saved;
      saved.swap(self.ctx_tys);
      self.ctx_tys.push_back(s.closed_fun->tys[0]);
      TermPtr inlined = self.go(s.closed_fun->kids[0], 1);
      self.ctx_tys.swap(saved);
      inlined = shift_levels(inlined, pb_depth);
      TermPtr pairarg = mk_pair(std::move(cap_ref), arg_at(pb_depth - d - 1));
      return mk_let(fname("pb"), ty_prod(fty(s.cap_ty), fty(arg_cc_ty)), std::move(pairarg),
                    std::move(inlined));
    };

    if (g.sites.size() == 1) {
      // no dispatch: bind the capture tuple and inline
      int id = g.sites[0];
      TermPtr capv = std::move(scrut);
      return mk_let(fname("cv"), fty(sites.at(id).cap_ty), std::move(capv),
                    inline_site(id, mk_var(d), d + 1));
    }

    const std::set<int>& reach = it->second;
    std::vector<TermPtr> kids{std::move(scrut)};
    std::vector<long long> tags;
    std::vector<std::string> names;
    for (size_t pos = 0; pos < g.sites.size(); ++pos) {
      int id = g.sites[pos];
      if (!reach.count(id)) continue;
      tags.push_back((long long)pos);
      names.push_back(fname("cv"));
      kids.push_back(inline_site(id, mk_var(d), d + 1));
    }
    kids.push_back(mk_error_term(result, "closure tag outside the call site's flow"));
    auto cn = mk(TermKind::CaseN, std::move(kids), {}, std::move(names));
    const_cast<Term*>(cn.get())->ivals = std::move(tags);
    return cn;
  }

  static TermPtr shift_above(const TermPtr& t, long long base, long long delta) {
    if (delta == 0) return t;
    if (t->kind == TermKind::ClosedLam) return t;
    auto n = std::make_shared<Term>(*t);
    if (t->kind == TermKind::Var && t->ival >= base) n->ival += delta;
    for (auto& k : n->kids) k = shift_above(k, base, delta);
    return n;
  }
};

} // namespace detail

// Rewrite every lambda into a pack of its captures with a closed function;
// the program must have first-order-typed free variables.
inline Program closure_convert(const Program& p) {
  for (const auto& b : p.args)
    if (b.ty.k == TyKind::Arrow)
      throw TransformError("UnsupportedConstruct",
                           "closure conversion needs first-order-typed inputs");
  detail::CC cc;
  int sites = 0;
  cc.sites = &sites;
  for (size_t i = 0; i < p.args.size(); ++i) {
    cc.src.push_back(p.args[i].ty);
    cc.map.push_back((int)i);
  }
  cc.depth = (int)p.args.size();
  Program out;
  for (const auto& b : p.args) out.args.push_back({b.name, detail::tcc(b.ty)});
  out.body = cc.go(p.body);
  return out;
}

inline LambdaInventory lambda_inventory(const Program& converted) {
  detail::Defunc df;
  df.collect(converted.body);
  df.finish_collect();
  LambdaInventory inv;
  for (auto& [id, s] : df.sites) inv.push_back(s);
  std::sort(inv.begin(), inv.end(), [](const LambdaSite& a, const LambdaSite& b) {
    return a.id < b.id;
  });
  return inv;
}

// Replace each sigma type by the finite variant of its packs' capture tuples;
// call sites dispatch on the tag and inline the (rewritten) closed bodies.
inline Program defunctionalise(const Program& converted) {
  detail::Defunc df;
  df.collect(converted.body);
  df.finish_collect();
  detail::Flow flow;
  flow.analyse(converted.args, converted.body);
  df.flows = &flow.flows;
  Program out;
  for (const auto& b : converted.args) out.args.push_back({b.name, df.fty(b.ty)});
  for (const auto& b : converted.args) df.ctx_tys.push_back(b.ty);
  out.body = df.go(converted.body, (int)converted.args.size());
  return out;
}

} // namespace chad
