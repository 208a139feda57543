#pragma once

#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "chad/ast.hpp"

// Recursive-descent parser for the s-expression surface syntax. One grammar
// covers source programs and the extended target forms emitted by the
// transforms, so pretty-printed derivatives reparse.

namespace chad {

struct ParseError : std::runtime_error {
  int line, col;
  ParseError(const std::string& msg, int l, int c)
      : std::runtime_error(msg + " at " + std::to_string(l) + ":" + std::to_string(c)),
        line(l),
        col(c) {}
};

namespace detail {

struct Token {
  enum K { LP, RP, Ident, Real, Int, Str, End } k;
  std::string text;
  double fval = 0;
  long long ival = 0;
  int line = 1, col = 1;
};

struct Lexer {
  const std::string& src;
  size_t pos = 0;
  int line = 1, col = 1;
  Token cur;

  explicit Lexer(const std::string& s) : src(s) { next(); }

  void advance() {
    if (src[pos] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    ++pos;
  }

  void next() {
    while (pos < src.size() &&
           (src[pos] == ' ' || src[pos] == '\t' || src[pos] == '\n' || src[pos] == '\r'))
      advance();
    if (pos < src.size() && src[pos] == ';') { // comment to end of line
      while (pos < src.size() && src[pos] != '\n') advance();
      next();
      return;
    }
    cur = Token{Token::End, "", 0, 0, line, col};
    if (pos >= src.size()) return;
    char c = src[pos];
    if (c == '(') {
      cur.k = Token::LP;
      advance();
      return;
    }
    if (c == ')') {
      cur.k = Token::RP;
      advance();
      return;
    }
    if (c == '"') {
      advance();
      std::string s;
      while (pos < src.size() && src[pos] != '"') {
        s += src[pos];
        advance();
      }
      if (pos >= src.size()) throw ParseError("unterminated string", cur.line, cur.col);
      advance();
      cur.k = Token::Str;
      cur.text = s;
      return;
    }
    if (c == '-' || (c >= '0' && c <= '9')) {
      size_t start = pos;
      advance();
      while (pos < src.size()) {
        char d = src[pos];
        if ((d >= '0' && d <= '9') || d == '.' || d == 'e' || d == 'E' || d == '+' || d == '-')
          advance();
        else
          break;
      }
      std::string num = src.substr(start, pos - start);
      if (num == "-") throw ParseError("stray '-'", cur.line, cur.col);
      if (pos < src.size() && src[pos] == 'i') {
        advance();
        cur.k = Token::Int;
        cur.ival = std::strtoll(num.c_str(), nullptr, 10);
        return;
      }
      cur.k = Token::Real;
      cur.fval = std::strtod(num.c_str(), nullptr);
      return;
    }
    // identifier
    size_t start = pos;
    while (pos < src.size()) {
      char d = src[pos];
      if (d == '(' || d == ')' || d == ' ' || d == '\t' || d == '\n' || d == '\r' || d == '"')
        break;
      advance();
    }
    if (pos == start) throw ParseError("unexpected character", cur.line, cur.col);
    cur.k = Token::Ident;
    cur.text = src.substr(start, pos - start);
  }
};

struct Parser {
  Lexer lx;
  std::vector<std::string> scope;

  explicit Parser(const std::string& s) : lx(s) {}

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, lx.cur.line, lx.cur.col); }

  void expect_lp() {
    if (lx.cur.k != Token::LP) fail("expected '('");
    lx.next();
  }
  void expect_rp() {
    if (lx.cur.k != Token::RP) fail("expected ')'");
    lx.next();
  }
  std::string expect_ident() {
    if (lx.cur.k != Token::Ident) fail("expected identifier");
    std::string s = lx.cur.text;
    lx.next();
    return s;
  }
  long long expect_int_like() {
    if (lx.cur.k == Token::Int) {
      long long v = lx.cur.ival;
      lx.next();
      return v;
    }
    if (lx.cur.k == Token::Real && lx.cur.fval == (long long)lx.cur.fval) {
      long long v = (long long)lx.cur.fval;
      lx.next();
      return v;
    }
    fail("expected integer");
  }

  Ty parse_ty() {
    if (lx.cur.k == Token::Ident) {
      std::string s = lx.cur.text;
      lx.next();
      if (s == "Real") return ty_real();
      if (s == "Unit") return ty_unit();
      if (s == "Int") return ty_int();
      if (s == "LReal") return ty_lreal();
      if (s == "LUnit") return ty_lunit();
      if (s == "LUnitF") return ty_lunitfun();
      if (s == "EnvMap") return ty_envmap();
      if (s == "Hole") return ty_hole();
      fail("unknown type '" + s + "'");
    }
    expect_lp();
    std::string h = expect_ident();
    Ty r;
    if (h == "Prod" || h == "Sum" || h == "Arrow" || h == "LProd" || h == "LSum" ||
        h == "CArrow" || h == "Tree") {
      Ty a = parse_ty(), b = parse_ty();
      TyKind k = h == "Prod"    ? TyKind::Prod
                 : h == "Sum"   ? TyKind::Sum
                 : h == "Arrow" ? TyKind::Arrow
                 : h == "LProd" ? TyKind::LProd
                 : h == "LSum"  ? TyKind::LSum
                 : h == "Tree"  ? TyKind::Tree
                                : TyKind::ClosedArrow;
      r = Ty{k, {a, b}};
    } else if (h == "Array" || h == "Bag" || h == "List" || h == "Sigma" || h == "LSigma") {
      Ty a = parse_ty();
      TyKind k = h == "Array" ? TyKind::Array
                 : h == "Bag" ? TyKind::Bag
                 : h == "List" ? TyKind::List
                 : h == "Sigma" ? TyKind::Sigma
                                : TyKind::LSigma;
      r = Ty{k, {a}};
    } else if (h == "Evm") {
      r = ty_evm(parse_ty());
    } else if (h == "Variant" || h == "LVariant") {
      std::vector<Ty> comps;
      while (lx.cur.k != Token::RP) comps.push_back(parse_ty());
      lx.next();
      return h == "Variant" ? ty_variant(std::move(comps)) : ty_lvariant(std::move(comps));
    } else {
      fail("unknown type constructor '" + h + "'");
    }
    expect_rp();
    return r;
  }

  // "(x ty)" binder
  std::pair<std::string, Ty> parse_binder() {
    expect_lp();
    std::string x = expect_ident();
    if (lx.cur.k == Token::RP) fail("missing type annotation on binder '" + x + "'");
    Ty t = parse_ty();
    expect_rp();
    return {x, t};
  }

  // "(x ty)" or "(x)" binder; only generated lets omit the annotation
  std::pair<std::string, std::vector<Ty>> parse_let_binder() {
    expect_lp();
    std::string x = expect_ident();
    std::vector<Ty> tys;
    if (lx.cur.k != Token::RP) tys.push_back(parse_ty());
    expect_rp();
    return {x, tys};
  }

  TermPtr loc(TermPtr t, int line, int col) {
    const_cast<Term*>(t.get())->line = line;
    const_cast<Term*>(t.get())->col = col;
    return t;
  }

  TermPtr parse_term() {
    int line = lx.cur.line, col = lx.cur.col;
    if (lx.cur.k == Token::Real) {
      double v = lx.cur.fval;
      lx.next();
      return loc(mk_real(v), line, col);
    }
    if (lx.cur.k == Token::Int) {
      long long v = lx.cur.ival;
      lx.next();
      return loc(mk_int(v), line, col);
    }
    if (lx.cur.k == Token::Ident) {
      std::string s = lx.cur.text;
      lx.next();
      if (s == "unit") return loc(mk_unit(), line, col);
      for (int i = (int)scope.size() - 1; i >= 0; --i)
        if (scope[(size_t)i] == s) return loc(mk_var(i, s), line, col);
      throw ParseError("unbound variable '" + s + "'", line, col);
    }
    expect_lp();
    std::string h = expect_ident();
    TermPtr r = parse_form(h);
    expect_rp();
    return loc(std::move(r), line, col);
  }

  TermPtr with_binders(std::vector<std::string> names, const std::function<TermPtr()>& f) {
    for (auto& n : names) scope.push_back(n);
    TermPtr t = f();
    for (size_t i = 0; i < names.size(); ++i) scope.pop_back();
    return t;
  }

  TermPtr parse_form(const std::string& h) {
    auto one = [&](TermKind k) { return mk(k, {parse_term()}); };
    auto two = [&](TermKind k) {
      auto a = parse_term();
      auto b = parse_term();
      return mk(k, {std::move(a), std::move(b)});
    };
    auto ty_one = [&](TermKind k) {
      Ty t = parse_ty();
      return mk(k, {parse_term()}, {std::move(t)});
    };

    if (h == "let") {
      auto [x, tys] = parse_let_binder();
      auto bound = parse_term();
      auto body = with_binders({x}, [&] { return parse_term(); });
      return mk(TermKind::Let, {std::move(bound), std::move(body)}, std::move(tys), {x});
    }
    if (h == "pair") return two(TermKind::Pair);
    if (h == "fst") return one(TermKind::Fst);
    if (h == "snd") return one(TermKind::Snd);
    if (h == "inl") return ty_one(TermKind::Inl);
    if (h == "inr") return ty_one(TermKind::Inr);
    if (h == "case") {
      auto s = parse_term();
      expect_lp();
      std::string xl = expect_ident();
      auto lb = with_binders({xl}, [&] { return parse_term(); });
      expect_rp();
      expect_lp();
      std::string xr = expect_ident();
      auto rb = with_binders({xr}, [&] { return parse_term(); });
      expect_rp();
      return mk(TermKind::Case, {std::move(s), std::move(lb), std::move(rb)}, {}, {xl, xr});
    }
    if (h == "sign") return one(TermKind::Sign);
    if (h == "op") {
      std::string op = expect_ident();
      std::vector<TermPtr> args;
      while (lx.cur.k != Token::RP) args.push_back(parse_term());
      return mk_op(op, std::move(args));
    }
    if (h == "lam" || h == "clam") {
      auto [x, ty] = parse_binder();
      if (h == "clam") {
        // closed body: fresh scope
        std::vector<std::string> saved;
        saved.swap(scope);
        scope.push_back(x);
        auto body = parse_term();
        scope.swap(saved);
        return mk(TermKind::ClosedLam, {std::move(body)}, {ty}, {x});
      }
      auto body = with_binders({x}, [&] { return parse_term(); });
      return mk_lam(x, ty, std::move(body));
    }
    if (h == "app") return two(TermKind::App);
    if (h == "build") {
      auto n = parse_term();
      expect_lp();
      std::string i = expect_ident();
      auto body = with_binders({i}, [&] { return parse_term(); });
      expect_rp();
      return mk(TermKind::Build, {std::move(n), std::move(body)}, {}, {i});
    }
    if (h == "index") return two(TermKind::Index);
    if (h == "fold") {
      expect_lp();
      std::string p = expect_ident();
      auto body = with_binders({p}, [&] { return parse_term(); });
      expect_rp();
      auto arr = parse_term();
      return mk(TermKind::Fold, {std::move(body), std::move(arr)}, {}, {p});
    }
    if (h == "length") return one(TermKind::Length);

    if (h == "lzero") {
      Ty t = parse_ty();
      return mk(TermKind::LZero, {}, {std::move(t)});
    }
    if (h == "lplus") return two(TermKind::LPlus);
    if (h == "lpair") return two(TermKind::LPairC);
    if (h == "lfst") return one(TermKind::LFst);
    if (h == "lsnd") return one(TermKind::LSnd);
    if (h == "linl") return ty_one(TermKind::LInl);
    if (h == "linr") return ty_one(TermKind::LInr);
    if (h == "lcastl") return one(TermKind::LCastL);
    if (h == "lcastr") return one(TermKind::LCastR);
    if (h == "dop") {
      std::string op = expect_ident();
      std::vector<TermPtr> args;
      while (lx.cur.k != Token::RP) args.push_back(parse_term());
      auto t = mk(TermKind::DOpT, std::move(args));
      const_cast<Term*>(t.get())->name = op;
      return t;
    }
    if (h == "evm-return") return one(TermKind::EvmReturn);
    if (h == "evm-bind") return two(TermKind::EvmBind);
    if (h == "evm-one") {
      long long lvl = expect_int_like();
      Ty ty = parse_ty();
      auto d = parse_term();
      auto t = mk(TermKind::EvmOne, {std::move(d)}, {std::move(ty)});
      const_cast<Term*>(t.get())->ival = lvl;
      return t;
    }
    if (h == "evm-scope") return ty_one(TermKind::EvmScope);
    if (h == "sequence-evm") return one(TermKind::SequenceEvm);
    if (h == "bag-empty") {
      Ty t = parse_ty();
      return mk(TermKind::BagEmpty, {}, {std::move(t)});
    }
    if (h == "bag-one") return one(TermKind::BagOne);
    if (h == "bag-plus") return two(TermKind::BagPlus);
    if (h == "collect") return one(TermKind::Collect);
    if (h == "scatter") return two(TermKind::Scatter);
    if (h == "unzip") return one(TermKind::Unzip);
    if (h == "zip-with") {
      expect_lp();
      std::string x = expect_ident();
      std::string y = expect_ident();
      expect_rp();
      auto body = with_binders({x, y}, [&] { return parse_term(); });
      auto a = parse_term();
      auto b = parse_term();
      return mk(TermKind::ZipWith, {std::move(body), std::move(a), std::move(b)}, {}, {x, y});
    }
    if (h == "from-list") return one(TermKind::FromList);
    if (h == "map-arr") {
      expect_lp();
      std::string x = expect_ident();
      expect_rp();
      auto body = with_binders({x}, [&] { return parse_term(); });
      auto arr = parse_term();
      return mk(TermKind::MapArr, {std::move(body), std::move(arr)}, {}, {x});
    }
    if (h == "tree-leaf") return ty_one(TermKind::TreeLeaf);
    if (h == "tree-node") {
      auto l = parse_term();
      auto x = parse_term();
      auto f = parse_term();
      auto r = parse_term();
      return mk(TermKind::TreeNode, {std::move(l), std::move(x), std::move(f), std::move(r)});
    }
    if (h == "get-a") return one(TermKind::GetA);
    if (h == "untree") {
      auto g = parse_term();
      auto d = parse_term();
      auto tr = parse_term();
      return mk(TermKind::UnTree, {std::move(g), std::move(d), std::move(tr)});
    }
    if (h == "list-nil") {
      Ty t = parse_ty();
      return mk(TermKind::ListNil, {}, {std::move(t)});
    }
    if (h == "list-cons") return two(TermKind::ListCons);
    if (h == "fold-list") {
      expect_lp();
      std::string z = expect_ident();
      std::string acc = expect_ident();
      expect_rp();
      auto body = with_binders({z, acc}, [&] { return parse_term(); });
      auto init = parse_term();
      auto list = parse_term();
      return mk(TermKind::FoldList, {std::move(body), std::move(init), std::move(list)}, {},
                {z, acc});
    }
    if (h == "list-append") return two(TermKind::ListAppend);
    if (h == "pack") {
      Ty sig = parse_ty();
      Ty tag = parse_ty();
      auto payload = parse_term();
      return mk(TermKind::Pack, {std::move(payload)}, {std::move(sig), std::move(tag)});
    }
    if (h == "unpack") {
      auto s = parse_term();
      expect_lp();
      std::string z = expect_ident();
      auto body = with_binders({z}, [&] { return parse_term(); });
      expect_rp();
      return mk(TermKind::UnpackCase, {std::move(s), std::move(body)}, {}, {z});
    }
    if (h == "sigma-cast") {
      Ty tag = parse_ty();
      Ty res = parse_ty();
      auto t = parse_term();
      return mk(TermKind::SigmaCast, {std::move(t)}, {std::move(tag), std::move(res)});
    }
    if (h == "pack-dyn") return two(TermKind::PackDyn);
    if (h == "error") {
      Ty ty = parse_ty();
      if (lx.cur.k != Token::Str) fail("expected error message string");
      std::string msg = lx.cur.text;
      lx.next();
      auto t = mk(TermKind::ErrorTerm, {}, {std::move(ty)});
      const_cast<Term*>(t.get())->name = msg;
      return t;
    }
    if (h == "env-one") {
      long long lvl = expect_int_like();
      auto d = parse_term();
      auto t = mk(TermKind::EnvOneHot, {std::move(d)});
      const_cast<Term*>(t.get())->ival = lvl;
      return t;
    }
    if (h == "env-pop") {
      long long lvl = expect_int_like();
      Ty ty = parse_ty();
      auto e = parse_term();
      auto t = mk(TermKind::EnvPop, {std::move(e)}, {std::move(ty)});
      const_cast<Term*>(t.get())->ival = lvl;
      return t;
    }
    if (h == "inject" || h == "linject") {
      Ty vt = parse_ty();
      long long tag = expect_int_like();
      auto d = parse_term();
      auto t = mk(h == "inject" ? TermKind::Inject : TermKind::LInject, {std::move(d)},
                  {std::move(vt)});
      const_cast<Term*>(t.get())->ival = tag;
      return t;
    }
    if (h == "lcastn") {
      long long tag = expect_int_like();
      Ty ty = parse_ty();
      auto d = parse_term();
      auto t = mk(TermKind::LCastN, {std::move(d)}, {std::move(ty)});
      const_cast<Term*>(t.get())->ival = tag;
      return t;
    }
    if (h == "case-n") {
      auto s = parse_term();
      std::vector<TermPtr> kids{std::move(s)};
      std::vector<long long> tags;
      std::vector<std::string> names;
      TermPtr dflt;
      while (lx.cur.k == Token::LP) {
        expect_lp();
        if (lx.cur.k == Token::Ident && lx.cur.text == "else") {
          lx.next();
          dflt = parse_term();
          expect_rp();
          break;
        }
        long long tag = expect_int_like();
        std::string x = expect_ident();
        auto body = with_binders({x}, [&] { return parse_term(); });
        expect_rp();
        tags.push_back(tag);
        names.push_back(x);
        kids.push_back(std::move(body));
      }
      if (!dflt) fail("case-n requires an (else ...) branch");
      kids.push_back(std::move(dflt));
      auto t = mk(TermKind::CaseN, std::move(kids), {}, std::move(names));
      const_cast<Term*>(t.get())->ivals = std::move(tags);
      return t;
    }
    fail("unknown form '" + h + "'");
  }

  Program parse_program() {
    expect_lp();
    if (expect_ident() != "program") fail("expected 'program'");
    expect_lp();
    if (expect_ident() != "args") fail("expected 'args'");
    Program p;
    while (lx.cur.k != Token::RP) {
      auto [x, ty] = parse_binder();
      p.args.push_back({x, ty});
      scope.push_back(x);
    }
    lx.next();
    p.body = parse_term();
    expect_rp();
    if (lx.cur.k != Token::End) fail("trailing input after program");
    return p;
  }
};

} // namespace detail

// Parse a full program ("(program (args ...) body)"), extended grammar.
inline Program parse_program_ext(const std::string& text) {
  detail::Parser p(text);
  return p.parse_program();
}

namespace detail {
inline void require_annotated_lets(const TermPtr& t) {
  if (t->kind == TermKind::Let && t->tys.empty())
    throw ParseError("missing binder annotation on let '" + t->binders[0] + "'", t->line,
                     t->col);
  for (const auto& k : t->kids) require_annotated_lets(k);
}
} // namespace detail

// Parse a source program; rejects target-only constructs.
inline Program parse_program(const std::string& text) {
  Program p = parse_program_ext(text);
  if (!is_source_term(p.body))
    throw ParseError("program uses target-only constructs", p.body->line, p.body->col);
  detail::require_annotated_lets(p.body);
  return p;
}

// Parse a bare term under a given context (extended grammar), for tests.
inline TermPtr parse_term_in(const Context& ctx, const std::string& text) {
  detail::Parser p(text);
  for (const auto& b : ctx) p.scope.push_back(b.name);
  TermPtr t = p.parse_term();
  if (p.lx.cur.k != detail::Token::End) throw ParseError("trailing input", p.lx.cur.line, p.lx.cur.col);
  return t;
}

} // namespace chad
