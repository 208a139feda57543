#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "chad/dtypes.hpp"
#include "chad/typecheck.hpp"

// The reverse-mode code transformations. Every rule rewrites a source term
// into a pair of its primal and a backpropagator from result cotangents to an
// environment-cotangent contribution:
//
//   NaiveDense    environment cotangents are nested linear pairs; sharing
//                 points sum them with lplus, scopes split with lfst/lsnd.
//   NaiveTreeMap  environment cotangents are level-keyed tree maps; sharing
//                 points union them (log-time per moved entry), scopes pop.
//   Monadic       backpropagators are accumulation-monad actions; variable
//                 references add into their slot, scopes push/pop it, and
//                 sharing points become sequencing.
//   NaiveHO       NaiveDense plus function types: a function cotangent is the
//                 log of its invocations, and each application backpropagates
//                 through the function twice (once per derivative half).
//   ClosedChad    NaiveDense plus closed functions, packs and unpacks; closed
//                 functions carry no environment cotangent.
//
// Source levels are remapped to output levels as auxiliary bindings appear;
// accumulation-slot indices stay source levels, which is why slot pushes line
// up with source binders.

namespace chad {

enum class Mode { NaiveDense, NaiveTreeMap, Monadic, NaiveHO, ClosedChad };

struct TransformConfig {
  Mode mode = Mode::Monadic;
  bool arrays_enabled = true; // arrays are a monadic-only feature
};

struct TransformError : std::runtime_error {
  std::string kind;
  TransformError(std::string k, const std::string& msg)
      : std::runtime_error(k + ": " + msg), kind(std::move(k)) {}
};

[[noreturn]] inline void unsupported(const std::string& msg) {
  throw TransformError("UnsupportedConstruct", msg);
}

namespace detail {

struct Transformer {
  Mode mode;
  bool arrays;
  std::vector<Ty> src;       // source context types, by source level
  std::vector<int> src2out;  // source level -> output level of the primal
  int depth = 0;             // output context depth
  int fresh = 0;
  const std::map<const Term*, int>* prov = nullptr;

  Transformer(Mode m, bool arr) : mode(m), arrays(arr) {}

  bool monadic() const { return mode == Mode::Monadic; }

  std::string fname(const char* base) { return std::string(base) + std::to_string(fresh++); }

  // ---- environment-cotangent strategy ----

  Ty env_ty_at(size_t k) const {
    if (mode == Mode::NaiveTreeMap) return ty_envmap();
    if (k == 0) return ty_lunit();
    Ty acc = d2_type(src[0]);
    for (size_t i = 1; i < k; ++i) acc = ty_lprod(std::move(acc), d2_type(src[i]));
    return acc;
  }

  Ty result_ty() const {
    if (monadic()) return ty_evm(ty_unit());
    return env_ty_at(src.size());
  }

  Ty rty(const Ty& t) const { return ty_prod(d1_type(t), ty_arrow(d2_type(t), result_ty())); }

  TermPtr env_zero() const { return mk(TermKind::LZero, {}, {env_ty_at(src.size())}); }

  TermPtr env_one(long long level, TermPtr d) const {
    if (mode == Mode::NaiveTreeMap) {
      auto t = mk(TermKind::EnvOneHot, {std::move(d)});
      const_cast<Term*>(t.get())->ival = level;
      return t;
    }
    TermPtr acc = (level == 0) ? std::move(d) : mk(TermKind::LZero, {}, {d2_type(src[0])});
    for (size_t i = 1; i < src.size(); ++i) {
      TermPtr comp =
          ((long long)i == level) ? std::move(d) : mk(TermKind::LZero, {}, {d2_type(src[i])});
      acc = mk(TermKind::LPairC, {std::move(acc), std::move(comp)});
    }
    return acc;
  }

  TermPtr env_plus(TermPtr a, TermPtr b) const {
    return mk(TermKind::LPlus, {std::move(a), std::move(b)});
  }

  // ---- binder helpers; they keep `depth` honest ----

  TermPtr letb(const char* base, TermPtr bound, const std::function<TermPtr(int)>& f) {
    std::string n = fname(base);
    int lvl = depth++;
    TermPtr body = f(lvl);
    --depth;
    return mk(TermKind::Let, {std::move(bound), std::move(body)}, {}, {std::move(n)});
  }

  TermPtr lamb(const char* base, Ty argTy, const std::function<TermPtr(int)>& f) {
    std::string n = fname(base);
    int lvl = depth++;
    TermPtr body = f(lvl);
    --depth;
    return mk_lam(std::move(n), std::move(argTy), std::move(body));
  }

  TermPtr caseb(TermPtr scrut, const std::function<TermPtr(int)>& fl,
                const std::function<TermPtr(int)>& fr) {
    std::string nl = fname("l"), nr = fname("r");
    int lvl = depth++;
    TermPtr lb = fl(lvl);
    --depth;
    ++depth;
    TermPtr rb = fr(lvl);
    --depth;
    return mk(TermKind::Case, {std::move(scrut), std::move(lb), std::move(rb)}, {}, {nl, nr});
  }

  // Split an environment cotangent over src plus one popped entry (bound at
  // `slvl`) into the current-context part and the popped entry. `popped_d2`
  // is the popped entry's cotangent type; src has already been restored.
  TermPtr split_env(const Ty& popped_d2, int slvl,
                    const std::function<TermPtr(TermPtr, TermPtr)>& f) {
    size_t k = src.size();
    if (mode == Mode::NaiveTreeMap) {
      auto pop = mk(TermKind::EnvPop, {mk_var(slvl)}, {popped_d2});
      const_cast<Term*>(pop.get())->ival = (long long)k;
      return letb("q", std::move(pop),
                  [&](int q) { return f(mk_fst(mk_var(q)), mk_snd(mk_var(q))); });
    }
    if (k == 0) return f(mk(TermKind::LZero, {}, {ty_lunit()}), mk_var(slvl));
    return f(mk(TermKind::LFst, {mk_var(slvl)}), mk(TermKind::LSnd, {mk_var(slvl)}));
  }

  TermPtr nil_contribution() {
    if (monadic()) return mk(TermKind::EvmReturn, {mk_unit()});
    return env_zero();
  }

  TermPtr tag(TermPtr out, const TermPtr& srcT) {
    if (prov) {
      auto it = prov->find(srcT.get());
      if (it != prov->end()) const_cast<Term*>(out.get())->prov = it->second;
    }
    return out;
  }

  struct DOut {
    TermPtr code;
    Ty ty; // source type of the transformed term
  };

  DOut go(const TermPtr& t) {
    switch (t->kind) {
      case TermKind::Var: {
        Ty ty = src.at((size_t)t->ival);
        Ty d2 = d2_type(ty);
        long long lvl = t->ival;
        TermPtr bp = lamb("d", d2, [&](int d) -> TermPtr {
          if (monadic()) {
            auto one = mk(TermKind::EvmOne, {mk_var(d)}, {d2});
            const_cast<Term*>(one.get())->ival = lvl;
            return one;
          }
          return env_one(lvl, mk_var(d));
        });
        return {tag(mk_pair(mk_var(src2out.at((size_t)t->ival), t->name), std::move(bp)), t), ty};
      }

      case TermKind::RealLit: return constant_rule(t, mk_real(t->fval), ty_real());
      case TermKind::IntLit: return constant_rule(t, mk_int(t->ival), ty_int());
      case TermKind::UnitLit: return constant_rule(t, mk_unit(), ty_unit());

      case TermKind::Sign: {
        DOut a = go(t->kids[0]);
        if (a.ty.k != TyKind::Real) unsupported("sign of a non-real");
        Ty ty = ty_sum(ty_unit(), ty_unit());
        TermPtr code = letb("z", a.code, [&](int z) {
          TermPtr bp = lamb("d", d2_type(ty), [&](int) { return nil_contribution(); });
          return tag(mk_pair(mk(TermKind::Sign, {mk_fst(mk_var(z))}), std::move(bp)), t);
        });
        return {std::move(code), ty};
      }

      case TermKind::Let: {
        DOut a1 = go(t->kids[0]);
        const Ty& tx = t->tys[0];
        Ty result{};
        TermPtr code = letb("z", a1.code, [&](int z1) {
          return letb(t->binders[0].c_str(), mk_fst(mk_var(z1)), [&](int xp) {
            src.push_back(tx);
            src2out.push_back(xp);
            DOut a2 = go(t->kids[1]);
            src.pop_back();
            src2out.pop_back();
            result = a2.ty;
            Ty d2x = d2_type(tx);
            return letb("z", a2.code, [&](int z2) {
              TermPtr bp = lamb("d", d2_type(result), [&](int d) -> TermPtr {
                if (monadic()) {
                  auto scope = mk(TermKind::EvmScope, {mk_app(mk_snd(mk_var(z2)), mk_var(d))},
                                  {d2x});
                  TermPtr k = lamb("q", ty_prod(ty_unit(), d2x), [&](int q) {
                    return mk_app(mk_snd(mk_var(z1)), mk_snd(mk_var(q)));
                  });
                  return mk(TermKind::EvmBind, {std::move(scope), std::move(k)});
                }
                return letb("s", mk_app(mk_snd(mk_var(z2)), mk_var(d)), [&](int s) {
                  return split_env(d2x, s, [&](TermPtr rest, TermPtr top) {
                    return env_plus(std::move(rest), mk_app(mk_snd(mk_var(z1)), std::move(top)));
                  });
                });
              });
              return tag(mk_pair(mk_fst(mk_var(z2)), std::move(bp)), t);
            });
          });
        });
        return {std::move(code), result};
      }

      case TermKind::Pair: {
        DOut a = go(t->kids[0]);
        Ty result{};
        TermPtr code = letb("z", a.code, [&](int z1) {
          DOut b = go(t->kids[1]);
          result = ty_prod(a.ty, b.ty);
          Ty ty = result;
          return letb("z", b.code, [&](int z2) {
            TermPtr bp = lamb("d", d2_type(ty), [&](int d) -> TermPtr {
              TermPtr ca = mk_app(mk_snd(mk_var(z1)), mk(TermKind::LFst, {mk_var(d)}));
              if (monadic()) {
                TermPtr k = lamb("u", ty_unit(), [&](int) {
                  return mk_app(mk_snd(mk_var(z2)), mk(TermKind::LSnd, {mk_var(d)}));
                });
                return mk(TermKind::EvmBind, {std::move(ca), std::move(k)});
              }
              TermPtr cb = mk_app(mk_snd(mk_var(z2)), mk(TermKind::LSnd, {mk_var(d)}));
              return env_plus(std::move(ca), std::move(cb));
            });
            return tag(mk_pair(mk_pair(mk_fst(mk_var(z1)), mk_fst(mk_var(z2))), std::move(bp)),
                       t);
          });
        });
        return {std::move(code), result};
      }

      case TermKind::Fst:
      case TermKind::Snd: {
        DOut a = go(t->kids[0]);
        if (a.ty.k != TyKind::Prod) unsupported("projection of a non-product");
        bool is_fst = t->kind == TermKind::Fst;
        Ty ty = is_fst ? a.ty.a[0] : a.ty.a[1];
        Ty other = is_fst ? a.ty.a[1] : a.ty.a[0];
        TermPtr code = letb("z", a.code, [&](int z) {
          TermPtr bp = lamb("d", d2_type(ty), [&](int d) {
            TermPtr zero = mk(TermKind::LZero, {}, {d2_type(other)});
            TermPtr hot = is_fst ? mk(TermKind::LPairC, {mk_var(d), std::move(zero)})
                                 : mk(TermKind::LPairC, {std::move(zero), mk_var(d)});
            return mk_app(mk_snd(mk_var(z)), std::move(hot));
          });
          TermPtr prim = is_fst ? mk_fst(mk_fst(mk_var(z))) : mk_snd(mk_fst(mk_var(z)));
          return tag(mk_pair(std::move(prim), std::move(bp)), t);
        });
        return {std::move(code), ty};
      }

      case TermKind::Inl:
      case TermKind::Inr: {
        DOut a = go(t->kids[0]);
        bool left = t->kind == TermKind::Inl;
        Ty ty = left ? ty_sum(a.ty, t->tys[0]) : ty_sum(t->tys[0], a.ty);
        TermPtr code = letb("z", a.code, [&](int z) {
          TermPtr bp = lamb("d", d2_type(ty), [&](int d) {
            TermPtr cast = mk(left ? TermKind::LCastL : TermKind::LCastR, {mk_var(d)});
            return mk_app(mk_snd(mk_var(z)), std::move(cast));
          });
          TermPtr prim =
              mk(left ? TermKind::Inl : TermKind::Inr, {mk_fst(mk_var(z))}, {d1_type(t->tys[0])});
          return tag(mk_pair(std::move(prim), std::move(bp)), t);
        });
        return {std::move(code), ty};
      }

      case TermKind::Case: {
        DOut s = go(t->kids[0]);
        if (s.ty.k != TyKind::Sum) unsupported("case on a non-sum");
        Ty sl = s.ty.a[0], sr = s.ty.a[1];
        Ty result{};
        TermPtr code = letb("z", s.code, [&](int z) {
          auto branch = [&](Ty bty, Ty other, bool left, TermPtr body) {
            return std::function<TermPtr(int)>([&, bty, other, left, body](int x) -> TermPtr {
              src.push_back(bty);
              src2out.push_back(x);
              DOut a = go(body);
              src.pop_back();
              src2out.pop_back();
              result = a.ty;
              Ty d2b = d2_type(bty);
              return letb("z", a.code, [&](int zb) {
                TermPtr bp = lamb("d", d2_type(a.ty), [&](int d) -> TermPtr {
                  auto inj = [&](TermPtr dz) {
                    return mk(left ? TermKind::LInl : TermKind::LInr, {std::move(dz)},
                              {d2_type(other)});
                  };
                  if (monadic()) {
                    auto scope =
                        mk(TermKind::EvmScope, {mk_app(mk_snd(mk_var(zb)), mk_var(d))}, {d2b});
                    TermPtr k = lamb("q", ty_prod(ty_unit(), d2b), [&](int q) {
                      return mk_app(mk_snd(mk_var(z)), inj(mk_snd(mk_var(q))));
                    });
                    return mk(TermKind::EvmBind, {std::move(scope), std::move(k)});
                  }
                  return letb("s", mk_app(mk_snd(mk_var(zb)), mk_var(d)), [&](int sv) {
                    return split_env(d2b, sv, [&](TermPtr rest, TermPtr top) {
                      return env_plus(std::move(rest),
                                      mk_app(mk_snd(mk_var(z)), inj(std::move(top))));
                    });
                  });
                });
                return mk_pair(mk_fst(mk_var(zb)), std::move(bp));
              });
            });
          };
          return tag(caseb(mk_fst(mk_var(z)), branch(sl, sr, true, t->kids[1]),
                           branch(sr, sl, false, t->kids[2])),
                     t);
        });
        return {std::move(code), result};
      }

      case TermKind::PrimOp: {
        const OpDef* op = find_op(t->name);
        if (!op) unsupported("unknown operation " + t->name);
        size_t n = t->kids.size();
        std::vector<int> zs(n);
        std::function<TermPtr(size_t)> chain = [&](size_t i) -> TermPtr {
          if (i == n) return op_pair(t, zs);
          DOut a = go(t->kids[i]);
          if (a.ty.k != TyKind::Real) unsupported("operation argument is not real");
          return letb("z", a.code, [&](int z) {
            zs[i] = z;
            return chain(i + 1);
          });
        };
        return {chain(0), ty_real()};
      }

      case TermKind::Lam:
        if (mode != Mode::NaiveHO) unsupported("function abstraction outside the higher-order mode");
        return lam_rule_naive_ho(t);
      case TermKind::App: return app_rule(t);
      case TermKind::ClosedLam:
        if (mode != Mode::ClosedChad) unsupported("closed function outside closed-mode");
        return closed_lam_rule(t);
      case TermKind::Pack:
        if (mode != Mode::ClosedChad) unsupported("pack outside closed-mode");
        return pack_rule(t);
      case TermKind::UnpackCase:
        if (mode != Mode::ClosedChad) unsupported("unpack outside closed-mode");
        return unpack_rule(t);

      case TermKind::Build:
      case TermKind::Index:
      case TermKind::Fold:
      case TermKind::Length: {
        if (!monadic()) unsupported("array constructs require the monadic mode");
        if (!arrays) unsupported("arrays are disabled in this configuration");
        if (t->kind == TermKind::Build) return build_rule(t);
        if (t->kind == TermKind::Index) return index_rule(t);
        if (t->kind == TermKind::Fold) return fold_rule(t);
        return length_rule(t);
      }

      case TermKind::Inject: {
        if (!monadic()) unsupported("variants require the monadic mode");
        const Ty& vt = t->tys[0];
        DOut a = go(t->kids[0]);
        long long tagv = t->ival;
        TermPtr code = letb("z", a.code, [&](int z) {
          auto prim = mk(TermKind::Inject, {mk_fst(mk_var(z))}, {d1_type(vt)});
          const_cast<Term*>(prim.get())->ival = tagv;
          TermPtr bp = lamb("d", d2_type(vt), [&](int d) {
            auto cast = mk(TermKind::LCastN, {mk_var(d)}, {d2_type(a.ty)});
            const_cast<Term*>(cast.get())->ival = tagv;
            return mk_app(mk_snd(mk_var(z)), std::move(cast));
          });
          return tag(mk_pair(std::move(prim), std::move(bp)), t);
        });
        return {std::move(code), vt};
      }
      case TermKind::CaseN: {
        if (!monadic()) unsupported("variants require the monadic mode");
        DOut s = go(t->kids[0]);
        if (s.ty.k != TyKind::Variant) unsupported("case-n on a non-variant");
        Ty d2v = d2_type(s.ty);
        Ty result{};
        TermPtr code = letb("z", s.code, [&](int z) {
          std::vector<TermPtr> kids{mk_fst(mk_var(z))};
          std::vector<std::string> names;
          for (size_t j = 0; j < t->ivals.size(); ++j) {
            long long tagv = t->ivals[j];
            Ty bty = s.ty.a[(size_t)tagv];
            Ty d2b = d2_type(bty);
            names.push_back(fname("c"));
            int x = depth++;
            src.push_back(bty);
            src2out.push_back(x);
            DOut a = go(t->kids[j + 1]);
            src.pop_back();
            src2out.pop_back();
            result = a.ty;
            TermPtr br = letb("z", a.code, [&](int zb) {
              TermPtr bp = lamb("d", d2_type(a.ty), [&](int d) {
                auto scope =
                    mk(TermKind::EvmScope, {mk_app(mk_snd(mk_var(zb)), mk_var(d))}, {d2b});
                TermPtr k = lamb("q", ty_prod(ty_unit(), d2b), [&](int q) {
                  auto inj = mk(TermKind::LInject, {mk_snd(mk_var(q))}, {d2v});
                  const_cast<Term*>(inj.get())->ival = tagv;
                  return mk_app(mk_snd(mk_var(z)), std::move(inj));
                });
                return mk(TermKind::EvmBind, {std::move(scope), std::move(k)});
              });
              return mk_pair(mk_fst(mk_var(zb)), std::move(bp));
            });
            --depth;
            kids.push_back(std::move(br));
          }
          DOut dflt = go(t->kids.back());
          if (t->ivals.empty()) result = dflt.ty;
          kids.push_back(dflt.code);
          auto cn = mk(TermKind::CaseN, std::move(kids), {}, std::move(names));
          const_cast<Term*>(cn.get())->ivals = t->ivals;
          return tag(std::move(cn), t);
        });
        return {std::move(code), result};
      }
      case TermKind::ErrorTerm:
        return {tag(mk_error_term(rty(t->tys[0]), t->name), t), t->tys[0]};

      default: unsupported("construct not covered by the transformation");
    }
  }

  DOut constant_rule(const TermPtr& t, TermPtr lit, Ty ty) {
    TermPtr bp = lamb("d", d2_type(ty), [&](int) { return nil_contribution(); });
    return {tag(mk_pair(std::move(lit), std::move(bp)), t), std::move(ty)};
  }

  // op: deliver the transposed components to the argument backpropagators
  TermPtr op_pair(const TermPtr& t, const std::vector<int>& zs) {
    size_t n = zs.size();
    std::vector<TermPtr> primals;
    for (int z : zs) primals.push_back(mk_fst(mk_var(z)));
    TermPtr prim = mk_op(t->name, std::move(primals));
    TermPtr bp = lamb("d", ty_lreal(), [&](int d) -> TermPtr {
      std::vector<TermPtr> dargs;
      for (int z : zs) dargs.push_back(mk_fst(mk_var(z)));
      dargs.push_back(mk_var(d));
      auto dop = mk(TermKind::DOpT, std::move(dargs));
      const_cast<Term*>(dop.get())->name = t->name;
      if (n == 1) return mk_app(mk_snd(mk_var(zs[0])), std::move(dop));
      return letb("dd", std::move(dop), [&](int dd) -> TermPtr {
        auto proj = [&](size_t i) {
          TermPtr e = mk_var(dd);
          for (size_t k = 0; k + i + 1 < n; ++k) e = mk(TermKind::LFst, {std::move(e)});
          if (i > 0) e = mk(TermKind::LSnd, {std::move(e)});
          return e;
        };
        if (monadic()) {
          std::function<TermPtr(size_t)> seq = [&](size_t i) -> TermPtr {
            TermPtr call = mk_app(mk_snd(mk_var(zs[i])), proj(i));
            if (i + 1 == n) return call;
            TermPtr k = lamb("u", ty_unit(), [&](int) { return seq(i + 1); });
            return mk(TermKind::EvmBind, {std::move(call), std::move(k)});
          };
          return seq(0);
        }
        TermPtr acc = mk_app(mk_snd(mk_var(zs[0])), proj(0));
        for (size_t i = 1; i < n; ++i)
          acc = env_plus(std::move(acc), mk_app(mk_snd(mk_var(zs[i])), proj(i)));
        return acc;
      });
    });
    return tag(mk_pair(std::move(prim), std::move(bp)), t);
  }

  // ---- higher-order rules (NaiveHO) ----

  DOut lam_rule_naive_ho(const TermPtr& t) {
    const Ty& sigma = t->tys[0];
    Ty rho{};
    TermPtr primal = lamb(t->binders[0].c_str(), d1_type(sigma), [&](int x) {
      src.push_back(sigma);
      src2out.push_back(x);
      DOut b = go(t->kids[0]);
      src.pop_back();
      src2out.pop_back();
      rho = b.ty;
      Ty d2s = d2_type(sigma);
      return letb("z", b.code, [&](int zb) {
        TermPtr bp = lamb("d", d2_type(rho), [&](int d) {
          return letb("s", mk_app(mk_snd(mk_var(zb)), mk_var(d)), [&](int s) {
            return split_env(d2s, s, [&](TermPtr, TermPtr top) { return top; });
          });
        });
        return mk_pair(mk_fst(mk_var(zb)), std::move(bp));
      });
    });
    // context half: fold the invocation log, re-deriving the body per entry
    Ty logent = ty_prod(d1_type(sigma), d2_type(rho));
    TermPtr ctx_half = lamb("dlog", ty_list(logent), [&](int dlog) {
      return foldlistb(
          [&](int zent, int acc) {
            return letb("xin", mk_fst(mk_var(zent)), [&](int xin) {
              src.push_back(sigma);
              src2out.push_back(xin);
              DOut b2 = go(t->kids[0]);
              src.pop_back();
              src2out.pop_back();
              Ty d2s = d2_type(sigma);
              return letb("z", b2.code, [&](int zb2) {
                return letb("s", mk_app(mk_snd(mk_var(zb2)), mk_snd(mk_var(zent))), [&](int s) {
                  return split_env(d2s, s, [&](TermPtr rest, TermPtr) {
                    return env_plus(mk_var(acc), std::move(rest));
                  });
                });
              });
            });
          },
          env_zero(), mk_var(dlog));
    });
    Ty ty = ty_arrow(sigma, rho);
    return {tag(mk_pair(std::move(primal), std::move(ctx_half)), t), ty};
  }

  TermPtr foldlistb(const std::function<TermPtr(int, int)>& f, TermPtr init, TermPtr list) {
    std::string nz = fname("e"), na = fname("acc");
    int zl = depth++;
    int al = depth++;
    TermPtr body = f(zl, al);
    depth -= 2;
    return mk(TermKind::FoldList, {std::move(body), std::move(init), std::move(list)}, {},
              {nz, na});
  }

  DOut app_rule(const TermPtr& t) {
    DOut f = go(t->kids[0]);
    if (f.ty.k != TyKind::Arrow && f.ty.k != TyKind::ClosedArrow)
      unsupported("applying a value of type " + pretty_ty(f.ty));
    bool closed = f.ty.k == TyKind::ClosedArrow;
    if (!closed && mode != Mode::NaiveHO) unsupported("application outside the higher-order mode");
    if (closed && mode != Mode::ClosedChad) unsupported("closed application outside closed-mode");
    Ty sigma = f.ty.a[0], rho = f.ty.a[1];
    TermPtr code = letb("z", f.code, [&](int z1) {
      DOut a = go(t->kids[1]);
      return letb("z", a.code, [&](int z2) {
        return letb("z", mk_app(mk_fst(mk_var(z1)), mk_fst(mk_var(z2))), [&](int z3) {
          TermPtr bp = lamb("d", d2_type(rho), [&](int d) -> TermPtr {
            TermPtr arg_path =
                mk_app(mk_snd(mk_var(z2)), mk_app(mk_snd(mk_var(z3)), mk_var(d)));
            if (closed) return arg_path;
            TermPtr entry = mk_pair(mk_fst(mk_var(z2)), mk_var(d));
            TermPtr log =
                mk(TermKind::ListCons,
                   {std::move(entry),
                    mk(TermKind::ListNil, {}, {ty_prod(d1_type(sigma), d2_type(rho))})});
            TermPtr ctx_path = mk_app(mk_snd(mk_var(z1)), std::move(log));
            return env_plus(std::move(arg_path), std::move(ctx_path));
          });
          return tag(mk_pair(mk_fst(mk_var(z3)), std::move(bp)), t);
        });
      });
    });
    return {std::move(code), rho};
  }

  // ---- closed-mode rules ----

  DOut closed_lam_rule(const TermPtr& t) {
    const Ty& sigma = t->tys[0];
    Transformer sub(mode, arrays);
    sub.prov = prov;
    sub.fresh = fresh;
    sub.src = {sigma};
    sub.src2out = {0};
    sub.depth = 1;
    DOut b = sub.go(t->kids[0]);
    fresh = sub.fresh;
    TermPtr primal = mk(TermKind::ClosedLam, {b.code}, {d1_type(sigma)}, {t->binders[0]});
    TermPtr bp = lamb("u", ty_lunitfun(), [&](int) { return env_zero(); });
    Ty ty = ty_carrow(sigma, b.ty);
    return {tag(mk_pair(std::move(primal), std::move(bp)), t), ty};
  }

  DOut pack_rule(const TermPtr& t) {
    const Ty& sig = t->tys[0];
    const Ty& tagty = t->tys[1];
    DOut a = go(t->kids[0]);
    Ty payload_d2 = d2_type(ty_subst_hole(sig.a[0], tagty));
    TermPtr code = letb("z", a.code, [&](int z) {
      auto prim = mk(TermKind::Pack, {mk_fst(mk_var(z))}, {d1_type(sig), d1_type(tagty)});
      const_cast<Term*>(prim.get())->ival = t->ival;
      TermPtr bp = lamb("v", ty_lsigma(d2_type(sig.a[0])), [&](int v) {
        auto cast = mk(TermKind::SigmaCast, {mk_var(v)}, {d1_type(tagty), payload_d2});
        return mk_app(mk_snd(mk_var(z)), std::move(cast));
      });
      return tag(mk_pair(std::move(prim), std::move(bp)), t);
    });
    return {std::move(code), sig};
  }

  DOut unpack_rule(const TermPtr& t) {
    DOut s = go(t->kids[0]);
    if (s.ty.k != TyKind::Sigma) unsupported("unpack of a non-sigma");
    Ty bodyty = s.ty.a[0];
    Ty result{};
    TermPtr code = letb("z", s.code, [&](int z1) {
      std::string zn = fname("w");
      int zl = depth++;
      src.push_back(bodyty);
      src2out.push_back(zl);
      DOut a = go(t->kids[1]);
      src.pop_back();
      src2out.pop_back();
      result = a.ty;
      Ty d2z = d2_type(bodyty);
      TermPtr inner = letb("z", a.code, [&](int zb) {
        TermPtr bp = lamb("v", d2_type(a.ty), [&](int v) {
          return letb("s", mk_app(mk_snd(mk_var(zb)), mk_var(v)), [&](int sv) {
            return split_env(d2z, sv, [&](TermPtr rest, TermPtr top) {
              TermPtr packed = mk(TermKind::PackDyn, {mk_fst(mk_var(z1)), std::move(top)});
              return env_plus(std::move(rest), mk_app(mk_snd(mk_var(z1)), std::move(packed)));
            });
          });
        });
        return tag(mk_pair(mk_fst(mk_var(zb)), std::move(bp)), t);
      });
      --depth;
      return mk(TermKind::UnpackCase, {mk_fst(mk_var(z1)), std::move(inner)}, {}, {zn});
    });
    return {std::move(code), result};
  }

  // ---- array rules (monadic) ----

  DOut build_rule(const TermPtr& t) {
    DOut zn = go(t->kids[0]);
    if (zn.ty.k != TyKind::Int) unsupported("build length is not an integer");
    Ty elem{};
    TermPtr code = letb("z", zn.code, [&](int znl) {
      return letb("n", mk_fst(mk_var(znl)), [&](int n) {
        std::string in = fname("i");
        int il = depth++;
        src.push_back(ty_int());
        src2out.push_back(il);
        DOut body = go(t->kids[1]);
        Ty fty = ty_arrow(d2_type(body.ty), result_ty()); // slots include the index entry
        src.pop_back();
        src2out.pop_back();
        --depth;
        elem = body.ty;
        Ty d2e = d2_type(elem);
        TermPtr buildT = mk(TermKind::Build, {mk_var(n), body.code}, {}, {in});
        return letb("a", std::move(buildT), [&](int a) {
          return letb(
              "uz",
              mk(TermKind::Unzip, {mk_var(a)}), [&](int uz) {
                return letb("a1", mk_fst(mk_var(uz)), [&](int a1) {
                  return letb("a2", mk_snd(mk_var(uz)), [&](int a2) {
                    TermPtr bp = lamb("d", ty_bag(ty_prod(ty_int(), d2e)), [&](int d) {
                      return letb(
                          "ps",
                          mk(TermKind::Collect, {mk_var(d)}), [&](int ps) {
                            std::string i2 = fname("i");
                            ++depth;
                            TermPtr zeros = mk(TermKind::Build,
                                               {mk_var(n), mk(TermKind::LZero, {}, {d2e})},
                                               {}, {i2});
                            --depth;
                            return letb(
                                "dz",
                                mk(TermKind::Scatter, {std::move(zeros), mk_var(ps)}),
                                [&](int dz) {
                                  std::string fn = fname("f"), dn = fname("dd");
                                  int fl = depth++;
                                  int dl = depth++;
                                  TermPtr scope =
                                      mk(TermKind::EvmScope,
                                         {mk_app(mk_var(fl), mk_var(dl))}, {ty_lunit()});
                                  TermPtr k =
                                      lamb("q", ty_prod(ty_unit(), ty_lunit()), [&](int) {
                                        return mk(TermKind::EvmReturn, {mk_unit()});
                                      });
                                  TermPtr zw_body =
                                      mk(TermKind::EvmBind, {std::move(scope), std::move(k)});
                                  depth -= 2;
                                  TermPtr acts =
                                      mk(TermKind::ZipWith,
                                         {std::move(zw_body), mk_var(a2), mk_var(dz)}, {},
                                         {fn, dn});
                                  return letb(
                                      "acts", std::move(acts), [&](int actsl) {
                                        TermPtr fin =
                                            lamb("us", ty_array(ty_unit()), [&](int) {
                                              return mk(TermKind::EvmReturn, {mk_unit()});
                                            });
                                        return mk(TermKind::EvmBind,
                                                  {mk(TermKind::SequenceEvm, {mk_var(actsl)}),
                                                   std::move(fin)});
                                      });
                                });
                          });
                    });
                    return tag(mk_pair(mk_var(a1), std::move(bp)), t);
                  });
                });
              });
        });
      });
    });
    return {std::move(code), ty_array(elem)};
  }

  DOut index_rule(const TermPtr& t) {
    DOut za = go(t->kids[0]);
    if (za.ty.k != TyKind::Array) unsupported("indexing a non-array");
    Ty elem = za.ty.a[0];
    TermPtr code = letb("z", za.code, [&](int z1) {
      DOut zi = go(t->kids[1]);
      return letb("z", zi.code, [&](int z2) {
        TermPtr bp = lamb("d", d2_type(elem), [&](int d) {
          TermPtr one = mk(TermKind::BagOne, {mk_pair(mk_fst(mk_var(z2)), mk_var(d))});
          return mk_app(mk_snd(mk_var(z1)), std::move(one));
        });
        return tag(mk_pair(mk(TermKind::Index, {mk_fst(mk_var(z1)), mk_fst(mk_var(z2))}),
                           std::move(bp)),
                   t);
      });
    });
    return {std::move(code), elem};
  }

  DOut length_rule(const TermPtr& t) {
    DOut za = go(t->kids[0]);
    if (za.ty.k != TyKind::Array) unsupported("length of a non-array");
    TermPtr code = letb("z", za.code, [&](int z) {
      TermPtr bp =
          lamb("d", ty_lunit(), [&](int) { return mk(TermKind::EvmReturn, {mk_unit()}); });
      return tag(mk_pair(mk(TermKind::Length, {mk_fst(mk_var(z))}), std::move(bp)), t);
    });
    return {std::move(code), ty_int()};
  }

  DOut fold_rule(const TermPtr& t) {
    DOut za = go(t->kids[1]);
    if (za.ty.k != TyKind::Array) unsupported("fold over a non-array");
    Ty elem = za.ty.a[0];
    Ty d2e = d2_type(elem);
    Ty d2p = ty_lprod(d2e, d2e);
    Ty fty = ty_arrow(d2e, ty_evm(ty_unit()));
    TermPtr code = letb("z", za.code, [&](int za_l) {
      std::string xn = fname("x");
      int xl = depth++;
      TermPtr leaf_body = mk(TermKind::TreeLeaf, {mk_var(xl)}, {fty});
      --depth;
      TermPtr leaves = mk(TermKind::MapArr, {std::move(leaf_body), mk_fst(mk_var(za_l))}, {}, {xn});
      return letb("lv", std::move(leaves), [&](int lv) {
        std::string pn = fname("pp");
        int pl = depth++;
        TermPtr combine = letb(
            "p",
            mk_pair(mk(TermKind::GetA, {mk_fst(mk_var(pl))}),
                    mk(TermKind::GetA, {mk_snd(mk_var(pl))})),
            [&](int p) {
              src.push_back(ty_prod(elem, elem));
              src2out.push_back(p);
              DOut b = go(t->kids[0]);
              src.pop_back();
              src2out.pop_back();
              if (!(b.ty == elem)) unsupported("fold combine type mismatch");
              return letb("z", b.code, [&](int zb) {
                return mk(TermKind::TreeNode, {mk_fst(mk_var(pl)), mk_fst(mk_var(zb)),
                                               mk_snd(mk_var(zb)), mk_snd(mk_var(pl))});
              });
            });
        --depth;
        TermPtr treefold = mk(TermKind::Fold, {std::move(combine), mk_var(lv)}, {}, {pn});
        return letb("tr", std::move(treefold), [&](int tr) {
          TermPtr bp = lamb("d", d2e, [&](int d) {
            TermPtr g = lamb("dp", d2e, [&](int dp) {
              return lamb("f", fty, [&](int fl) {
                TermPtr scope = mk(TermKind::EvmScope, {mk_app(mk_var(fl), mk_var(dp))}, {d2p});
                TermPtr k = lamb("q", ty_prod(ty_unit(), d2p), [&](int q) {
                  return mk(TermKind::EvmReturn,
                            {mk_pair(mk(TermKind::LFst, {mk_snd(mk_var(q))}),
                                     mk(TermKind::LSnd, {mk_snd(mk_var(q))}))});
                });
                return mk(TermKind::EvmBind, {std::move(scope), std::move(k)});
              });
            });
            TermPtr untree = mk(TermKind::UnTree, {std::move(g), mk_var(d), mk_var(tr)});
            TermPtr k2 = lamb("lf", ty_list(d2e), [&](int lf) {
              return mk_app(mk_snd(mk_var(za_l)), mk(TermKind::FromList, {mk_var(lf)}));
            });
            return mk(TermKind::EvmBind, {std::move(untree), std::move(k2)});
          });
          return tag(mk_pair(mk(TermKind::GetA, {mk_var(tr)}), std::move(bp)), t);
        });
      });
    });
    return {std::move(code), elem};
  }
};

} // namespace detail

inline void assign_prov(const TermPtr& t, std::map<const Term*, int>& ids) {
  ids.emplace(t.get(), (int)ids.size());
  for (const auto& k : t->kids) assign_prov(k, ids);
}

inline Context d1_context(const Context& ctx) {
  Context out;
  for (const auto& b : ctx) out.push_back({b.name, d1_type(b.ty)});
  return out;
}

inline TermPtr chad_transform(const TransformConfig& cfg, const Context& srcctx,
                              const TermPtr& t) {
  detail::Transformer tr(cfg.mode, cfg.arrays_enabled);
  std::map<const Term*, int> ids;
  assign_prov(t, ids);
  tr.prov = &ids;
  for (const auto& b : srcctx) tr.src.push_back(b.ty);
  for (size_t i = 0; i < srcctx.size(); ++i) tr.src2out.push_back((int)i);
  tr.depth = (int)srcctx.size();
  return tr.go(t).code;
}

// The type every transform output has: the primal paired with a backpropagator
// into the mode's environment-cotangent representation.
inline Ty chad_result_type(const TransformConfig& cfg, const Context& srcctx, const Ty& ty) {
  detail::Transformer tr(cfg.mode, cfg.arrays_enabled);
  for (const auto& b : srcctx) tr.src.push_back(b.ty);
  return tr.rty(ty);
}

} // namespace chad
