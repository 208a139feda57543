#pragma once

#include <string>
#include <vector>

#include "chad/evm.hpp"
#include "chad/ops.hpp"
#include "chad/value.hpp"

// Big-step call-by-value evaluator with an exact integer cost model.
//
// Cost table (every constant-time construct costs one step; linear-time
// constructs cost one step per element):
//   variables, literals, lambdas, zeros          1
//   let/pair/projections/injections/sign/casts   1 + children
//   case                                         1 + scrutinee + taken branch
//   app                                          1 + function + argument + body
//   op (arity n)                                 1 + n + children
//   transposed op (arity n)                      1 + n + children
//   lplus                                        children + structural cost:
//                                                1 per intersection node,
//                                                1 per untouched handoff
//   build n                                      1 + length + n + bodies
//   index, length                                1 + children
//   fold over n                                  1 + n + array + combine bodies
//   collect                                      1 + bag nodes + child
//   scatter                                      1 + |target| + per pair (1 + plus)
//   unzip/zip-with/map-arr/from-list/sequence    1 + elements + children/bodies
//   tree constructors/get-a                      1 + children
//   untree                                       1 per tree node + handler costs
//   list nil/cons                                1; append 1 + |left|
//   env-map one-hot                              1; pop 1 + 2*ceil(lg(size+1));
//     union: 1 + per moved entry (1 + ceil(lg size) + entry plus)
// Monad actions defer their one step to execution: return 1; one 1 + plus;
// scope 1 + body; bind 1 + both halves; run 1 + c_run*|ctx| + action.

namespace chad {

inline const Cot& value_to_cot(const Value& v) {
  if (v->k != ValKind::Cotan) throw EvalError("Malformed", "expected a cotangent value");
  return v->cot;
}

inline double value_to_real(const Value& v) {
  if (v->k != ValKind::Real) throw EvalError("Malformed", "expected a real");
  return v->r;
}

inline double cot_to_real(const Cot& c) {
  if (c->k == CotKind::CR) return c->r;
  if (c->k == CotKind::CZero) return 0.0;
  throw EvalError("Malformed", "expected a real cotangent");
}

class Evaluator {
 public:
  CostCounter cost;

  Value eval(const Env& env, const TermPtr& t) {
    switch (t->kind) {
      case TermKind::Var:
        cost.steps += 1;
        return env_get(env, t->ival);
      case TermKind::RealLit:
        cost.steps += 1;
        return v_real(t->fval);
      case TermKind::IntLit:
        cost.steps += 1;
        return v_int(t->ival);
      case TermKind::UnitLit:
        cost.steps += 1;
        return v_unit();
      case TermKind::Let: {
        cost.steps += 1;
        Value b = eval(env, t->kids[0]);
        return eval(env_push(env, std::move(b)), t->kids[1]);
      }
      case TermKind::Pair: {
        cost.steps += 1;
        Value a = eval(env, t->kids[0]);
        Value b = eval(env, t->kids[1]);
        return v_pair(std::move(a), std::move(b));
      }
      case TermKind::Fst: {
        cost.steps += 1;
        Value p = eval(env, t->kids[0]);
        if (p->k != ValKind::Pair) throw EvalError("Malformed", "fst of non-pair");
        return p->a;
      }
      case TermKind::Snd: {
        cost.steps += 1;
        Value p = eval(env, t->kids[0]);
        if (p->k != ValKind::Pair) throw EvalError("Malformed", "snd of non-pair");
        return p->b;
      }
      case TermKind::Inl:
        cost.steps += 1;
        return v_inl(eval(env, t->kids[0]));
      case TermKind::Inr:
        cost.steps += 1;
        return v_inr(eval(env, t->kids[0]));
      case TermKind::Case: {
        cost.steps += 1;
        Value s = eval(env, t->kids[0]);
        if (s->k == ValKind::Inl) return eval(env_push(env, s->a), t->kids[1]);
        if (s->k == ValKind::Inr) return eval(env_push(env, s->a), t->kids[2]);
        throw EvalError("Malformed", "case scrutinee is not an injection");
      }
      case TermKind::Sign: {
        cost.steps += 1;
        double x = value_to_real(eval(env, t->kids[0]));
        return x < 0 ? v_inl(v_unit()) : v_inr(v_unit());
      }
      case TermKind::PrimOp: {
        const OpDef* op = find_op(t->name);
        if (!op) throw EvalError("Malformed", "unknown op " + t->name);
        cost.steps += 1 + op->arity;
        std::vector<double> args;
        args.reserve(t->kids.size());
        for (const auto& k : t->kids) args.push_back(value_to_real(eval(env, k)));
        return v_real(apply_op(*op, args));
      }
      case TermKind::Lam:
        cost.steps += 1;
        return v_closure(env, t);
      case TermKind::ClosedLam:
        cost.steps += 1;
        return v_closedfun(t);
      case TermKind::App: {
        cost.steps += 1;
        Value f = eval(env, t->kids[0]);
        Value a = eval(env, t->kids[1]);
        return apply(f, std::move(a));
      }
      case TermKind::Build: {
        cost.steps += 1;
        long long n = eval_int(env, t->kids[0]);
        if (n < 0) throw EvalError("Malformed", "negative build length");
        cost.steps += n;
        std::vector<Value> elems;
        elems.reserve((size_t)n);
        for (long long i = 0; i < n; ++i) elems.push_back(eval(env_push(env, v_int(i)), t->kids[1]));
        return v_arr(std::move(elems));
      }
      case TermKind::Index: {
        cost.steps += 1;
        Value a = eval(env, t->kids[0]);
        long long i = eval_int(env, t->kids[1]);
        if (a->k != ValKind::Arr) throw EvalError("Malformed", "indexing a non-array");
        if (i < 0 || (size_t)i >= a->elems.size())
          throw EvalError("IndexOutOfBounds",
                          "index " + std::to_string(i) + " of " + std::to_string(a->elems.size()));
        return a->elems[(size_t)i];
      }
      case TermKind::Fold: {
        cost.steps += 1;
        Value a = eval(env, t->kids[1]);
        if (a->k != ValKind::Arr) throw EvalError("Malformed", "fold over a non-array");
        if (a->elems.empty()) throw EvalError("EmptyFold", "fold requires a non-empty array");
        cost.steps += (long long)a->elems.size();
        return fold_reduce(env, t->kids[0], a->elems, 0, a->elems.size());
      }
      case TermKind::Length: {
        cost.steps += 1;
        Value a = eval(env, t->kids[0]);
        if (a->k != ValKind::Arr) throw EvalError("Malformed", "length of a non-array");
        return v_int((long long)a->elems.size());
      }

      case TermKind::LZero:
        cost.steps += 1;
        return v_cot(cot_zero(t->tys[0]));
      case TermKind::LPlus: {
        Value a = eval(env, t->kids[0]);
        Value b = eval(env, t->kids[1]);
        long long pc = 0;
        Cot r = cot_plus(value_to_cot(a), value_to_cot(b), pc);
        cost.steps += pc;
        return v_cot(std::move(r));
      }
      case TermKind::LPairC: {
        cost.steps += 1;
        Value a = eval(env, t->kids[0]);
        Value b = eval(env, t->kids[1]);
        return v_cot(c_pair(value_to_cot(a), value_to_cot(b)));
      }
      case TermKind::LFst:
        cost.steps += 1;
        return v_cot(cot_lfst(value_to_cot(eval(env, t->kids[0]))));
      case TermKind::LSnd:
        cost.steps += 1;
        return v_cot(cot_lsnd(value_to_cot(eval(env, t->kids[0]))));
      case TermKind::LInl:
        cost.steps += 1;
        return v_cot(c_inl(value_to_cot(eval(env, t->kids[0]))));
      case TermKind::LInr:
        cost.steps += 1;
        return v_cot(c_inr(value_to_cot(eval(env, t->kids[0]))));
      case TermKind::LCastL:
        cost.steps += 1;
        return v_cot(cot_lcastl(value_to_cot(eval(env, t->kids[0]))));
      case TermKind::LCastR:
        cost.steps += 1;
        return v_cot(cot_lcastr(value_to_cot(eval(env, t->kids[0]))));
      case TermKind::DOpT: {
        const OpDef* op = find_op(t->name);
        if (!op) throw EvalError("Malformed", "unknown op " + t->name);
        cost.steps += 1 + op->arity;
        std::vector<double> primals;
        for (int i = 0; i < op->arity; ++i)
          primals.push_back(value_to_real(eval(env, t->kids[(size_t)i])));
        double d = cot_to_real(value_to_cot(eval(env, t->kids.back())));
        std::vector<double> grads = apply_op_transpose(*op, primals, d);
        Cot acc = c_r(grads[0]);
        for (int i = 1; i < op->arity; ++i) acc = c_pair(std::move(acc), c_r(grads[(size_t)i]));
        return v_cot(std::move(acc));
      }

      case TermKind::EvmReturn: {
        Value v = eval(env, t->kids[0]);
        auto a = std::make_shared<ActionNode>();
        a->k = ActionNode::Ret;
        a->v = std::move(v);
        return v_action(std::move(a));
      }
      case TermKind::EvmBind: {
        Value m = eval(env, t->kids[0]);
        Value k = eval(env, t->kids[1]);
        if (m->k != ValKind::ActionV) throw EvalError("Malformed", "evm-bind of non-action");
        auto a = std::make_shared<ActionNode>();
        a->k = ActionNode::Bind;
        a->m = m->act;
        a->v = std::move(k);
        return v_action(std::move(a));
      }
      case TermKind::EvmOne: {
        Value d = eval(env, t->kids[0]);
        auto a = std::make_shared<ActionNode>();
        a->k = ActionNode::One;
        a->level = t->ival;
        a->d = value_to_cot(d);
        return v_action(std::move(a));
      }
      case TermKind::EvmScope: {
        Value m = eval(env, t->kids[0]);
        if (m->k != ValKind::ActionV) throw EvalError("Malformed", "evm-scope of non-action");
        auto a = std::make_shared<ActionNode>();
        a->k = ActionNode::Scope;
        a->ty = t->tys[0];
        a->m = m->act;
        return v_action(std::move(a));
      }
      case TermKind::SequenceEvm: {
        Value arr = eval(env, t->kids[0]);
        if (arr->k != ValKind::Arr) throw EvalError("Malformed", "sequence-evm of non-array");
        auto a = std::make_shared<ActionNode>();
        a->k = ActionNode::Seq;
        a->seq.reserve(arr->elems.size());
        for (const auto& e : arr->elems) {
          if (e->k != ValKind::ActionV) throw EvalError("Malformed", "sequence-evm element");
          a->seq.push_back(e->act);
        }
        return v_action(std::move(a));
      }

      case TermKind::BagEmpty:
        cost.steps += 1;
        return v_cot(c_bag_empty());
      case TermKind::BagOne: {
        cost.steps += 1;
        Value p = eval(env, t->kids[0]);
        if (p->k != ValKind::Pair || p->a->k != ValKind::Int)
          throw EvalError("Malformed", "bag-one expects an (index, cotangent) pair");
        return v_cot(c_bag_one(p->a->i, value_to_cot(p->b)));
      }
      case TermKind::BagPlus: {
        cost.steps += 1;
        Value a = eval(env, t->kids[0]);
        Value b = eval(env, t->kids[1]);
        return v_cot(c_bag_plus(value_to_cot(a), value_to_cot(b)));
      }
      case TermKind::Collect: {
        cost.steps += 1;
        Value b = eval(env, t->kids[0]);
        std::vector<Value> out;
        collect_bag(value_to_cot(b), out);
        return v_arr(std::move(out));
      }
      case TermKind::Scatter: {
        cost.steps += 1;
        Value init = eval(env, t->kids[0]);
        Value pairs = eval(env, t->kids[1]);
        if (init->k != ValKind::Arr || pairs->k != ValKind::Arr)
          throw EvalError("Malformed", "scatter expects arrays");
        cost.steps += (long long)init->elems.size();
        std::vector<Value> out = init->elems;
        for (const auto& p : pairs->elems) {
          if (p->k != ValKind::Pair || p->a->k != ValKind::Int)
            throw EvalError("Malformed", "scatter pair");
          long long i = p->a->i;
          if (i < 0 || (size_t)i >= out.size())
            throw EvalError("IndexOutOfBounds", "scatter index " + std::to_string(i));
          long long pc = 0;
          Cot sum = cot_plus(value_to_cot(out[(size_t)i]), value_to_cot(p->b), pc);
          cost.steps += 1 + pc;
          out[(size_t)i] = v_cot(std::move(sum));
        }
        return v_arr(std::move(out));
      }
      case TermKind::Unzip: {
        cost.steps += 1;
        Value a = eval(env, t->kids[0]);
        if (a->k != ValKind::Arr) throw EvalError("Malformed", "unzip of non-array");
        cost.steps += (long long)a->elems.size();
        std::vector<Value> xs, ys;
        xs.reserve(a->elems.size());
        ys.reserve(a->elems.size());
        for (const auto& e : a->elems) {
          if (e->k != ValKind::Pair) throw EvalError("Malformed", "unzip element");
          xs.push_back(e->a);
          ys.push_back(e->b);
        }
        return v_pair(v_arr(std::move(xs)), v_arr(std::move(ys)));
      }
      case TermKind::ZipWith: {
        cost.steps += 1;
        Value a = eval(env, t->kids[1]);
        Value b = eval(env, t->kids[2]);
        if (a->k != ValKind::Arr || b->k != ValKind::Arr || a->elems.size() != b->elems.size())
          throw EvalError("Malformed", "zip-with arity/length mismatch");
        cost.steps += (long long)a->elems.size();
        std::vector<Value> out;
        out.reserve(a->elems.size());
        for (size_t i = 0; i < a->elems.size(); ++i)
          out.push_back(eval(env_push(env_push(env, a->elems[i]), b->elems[i]), t->kids[0]));
        return v_arr(std::move(out));
      }
      case TermKind::FromList: {
        cost.steps += 1;
        Value l = eval(env, t->kids[0]);
        if (l->k != ValKind::List) throw EvalError("Malformed", "from-list of non-list");
        cost.steps += list_len(l->list);
        Cot acc = c_bag_empty();
        long long i = 0;
        for (const ListNodeV* n = l->list.get(); n; n = n->tail.get(), ++i) {
          Cot one = c_bag_one(i, value_to_cot(n->head));
          acc = i == 0 ? one : c_bag_plus(std::move(acc), std::move(one));
        }
        return v_cot(std::move(acc));
      }
      case TermKind::MapArr: {
        cost.steps += 1;
        Value a = eval(env, t->kids[1]);
        if (a->k != ValKind::Arr) throw EvalError("Malformed", "map-arr of non-array");
        cost.steps += (long long)a->elems.size();
        std::vector<Value> out;
        out.reserve(a->elems.size());
        for (const auto& e : a->elems) out.push_back(eval(env_push(env, e), t->kids[0]));
        return v_arr(std::move(out));
      }
      case TermKind::TreeLeaf: {
        cost.steps += 1;
        auto n = std::make_shared<TreeNodeV>();
        n->leaf = true;
        n->a = eval(env, t->kids[0]);
        return v_tree(std::move(n));
      }
      case TermKind::TreeNode: {
        cost.steps += 1;
        Value l = eval(env, t->kids[0]);
        Value x = eval(env, t->kids[1]);
        Value f = eval(env, t->kids[2]);
        Value r = eval(env, t->kids[3]);
        if (l->k != ValKind::Tree || r->k != ValKind::Tree)
          throw EvalError("Malformed", "tree-node subtrees");
        auto n = std::make_shared<TreeNodeV>();
        n->leaf = false;
        n->l = l->tree;
        n->a = std::move(x);
        n->f = std::move(f);
        n->r = r->tree;
        return v_tree(std::move(n));
      }
      case TermKind::GetA: {
        cost.steps += 1;
        Value tr = eval(env, t->kids[0]);
        if (tr->k != ValKind::Tree) throw EvalError("Malformed", "get-a of non-tree");
        return tr->tree->a;
      }
      case TermKind::UnTree: {
        Value g = eval(env, t->kids[0]);
        Value d = eval(env, t->kids[1]);
        Value tr = eval(env, t->kids[2]);
        if (tr->k != ValKind::Tree) throw EvalError("Malformed", "untree of non-tree");
        auto a = std::make_shared<ActionNode>();
        a->k = ActionNode::UnTreeA;
        a->v = std::move(g);
        a->d = value_to_cot(d);
        a->tree = tr->tree;
        return v_action(std::move(a));
      }

      case TermKind::ListNil:
        cost.steps += 1;
        return v_list(nullptr);
      case TermKind::ListCons: {
        cost.steps += 1;
        Value h = eval(env, t->kids[0]);
        Value l = eval(env, t->kids[1]);
        if (l->k != ValKind::List) throw EvalError("Malformed", "list-cons tail");
        return v_list(list_cons(std::move(h), l->list));
      }
      case TermKind::FoldList: {
        cost.steps += 1;
        Value init = eval(env, t->kids[1]);
        Value l = eval(env, t->kids[2]);
        if (l->k != ValKind::List) throw EvalError("Malformed", "fold-list of non-list");
        cost.steps += list_len(l->list);
        std::vector<Value> items;
        for (const ListNodeV* n = l->list.get(); n; n = n->tail.get()) items.push_back(n->head);
        Value acc = std::move(init);
        for (size_t i = items.size(); i-- > 0;)
          acc = eval(env_push(env_push(env, items[i]), acc), t->kids[0]);
        return acc;
      }
      case TermKind::ListAppend: {
        Value a = eval(env, t->kids[0]);
        Value b = eval(env, t->kids[1]);
        if (a->k != ValKind::List || b->k != ValKind::List)
          throw EvalError("Malformed", "list-append of non-lists");
        cost.steps += 1 + list_len(a->list);
        std::vector<Value> items;
        for (const ListNodeV* n = a->list.get(); n; n = n->tail.get()) items.push_back(n->head);
        ListV out = b->list;
        for (size_t i = items.size(); i-- > 0;) out = list_cons(items[i], out);
        return v_list(std::move(out));
      }

      case TermKind::Pack: {
        cost.steps += 1;
        return v_pack(t->tys[1], eval(env, t->kids[0]));
      }
      case TermKind::UnpackCase: {
        cost.steps += 1;
        Value s = eval(env, t->kids[0]);
        if (s->k != ValKind::PackV) throw EvalError("Malformed", "unpack of non-pack");
        return eval(env_push(env, s->a), t->kids[1]);
      }
      case TermKind::SigmaCast: {
        cost.steps += 1;
        Value v = eval(env, t->kids[0]);
        return v_cot(cot_sigma_cast(t->tys[0], t->tys[1], value_to_cot(v)));
      }
      case TermKind::PackDyn: {
        cost.steps += 1;
        Value src = eval(env, t->kids[0]);
        Value d = eval(env, t->kids[1]);
        if (src->k != ValKind::PackV) throw EvalError("Malformed", "pack-dyn tag source");
        return v_cot(c_sigma(src->tag, value_to_cot(d)));
      }
      case TermKind::ErrorTerm: throw EvalError("Error", t->name);

      case TermKind::Inject:
        cost.steps += 1;
        return v_variant(t->ival, eval(env, t->kids[0]));
      case TermKind::CaseN: {
        cost.steps += 1;
        Value s = eval(env, t->kids[0]);
        if (s->k != ValKind::VariantV) throw EvalError("Malformed", "case-n of non-variant");
        for (size_t j = 0; j < t->ivals.size(); ++j)
          if (t->ivals[j] == s->i) return eval(env_push(env, s->a), t->kids[j + 1]);
        return eval(env, t->kids.back());
      }
      case TermKind::LInject:
        cost.steps += 1;
        return v_cot(c_variant(t->ival, value_to_cot(eval(env, t->kids[0]))));
      case TermKind::LCastN: {
        cost.steps += 1;
        Value v = eval(env, t->kids[0]);
        return v_cot(cot_variant_cast(t->ival, t->tys[0], value_to_cot(v)));
      }

      case TermKind::EnvOneHot: {
        cost.steps += 1;
        Value d = eval(env, t->kids[0]);
        long long pc = 0;
        PMap<Cot> m = pmap_insert_with<Cot>(
            nullptr, t->ival, value_to_cot(d),
            [&](const Cot& a, const Cot& b) { return cot_plus(a, b, pc); });
        cost.steps += pc;
        return v_cot(c_envmap(std::move(m)));
      }
      case TermKind::EnvPop: {
        Value e = eval(env, t->kids[0]);
        const Cot& m = value_to_cot(e);
        if (m->k != CotKind::CEnvMap) throw EvalError("Malformed", "env-pop of non-envmap");
        cost.steps += 1 + 2 * ceil_log2(pmap_size(m->env) + 1);
        const Cot* top = pmap_get(m->env, t->ival);
        Cot popped = top ? *top : cot_zero(t->tys[0]);
        PMap<Cot> rest = pmap_erase(m->env, t->ival);
        return v_pair(v_cot(c_envmap(std::move(rest))), v_cot(std::move(popped)));
      }
    }
    throw EvalError("Malformed", "unhandled term kind");
  }

  // Closure application; charges the body, one step having been charged by the
  // caller (the app node or the monad's bind).
  Value apply(const Value& f, Value arg) {
    cost.closure_applies += 1;
    if (f->k == ValKind::Closure) return eval(env_push(f->cenv, std::move(arg)), f->lam->kids[0]);
    if (f->k == ValKind::ClosedFun) return eval(env_push(nullptr, std::move(arg)), f->lam->kids[0]);
    throw EvalError("Malformed", "applying a non-function value");
  }

  Value exec(EvmState& st, const Action& a) {
    switch (a->k) {
      case ActionNode::Ret:
        cost.steps += 1;
        return a->v;
      case ActionNode::One: {
        cost.steps += 1;
        long long pc = 0;
        st.add_at((size_t)a->level, a->d, pc);
        cost.steps += pc;
        return v_unit();
      }
      case ActionNode::Scope: {
        cost.steps += 1;
        st.push(a->ty);
        Value r = exec(st, a->m);
        Cot popped = st.pop();
        return v_pair(std::move(r), v_cot(std::move(popped)));
      }
      case ActionNode::Bind: {
        cost.steps += 1;
        Value v = exec(st, a->m);
        Value next = apply(a->v, std::move(v));
        if (next->k != ValKind::ActionV)
          throw EvalError("Malformed", "bind continuation must return an action");
        return exec(st, next->act);
      }
      case ActionNode::Seq: {
        cost.steps += 1 + (long long)a->seq.size();
        std::vector<Value> out;
        out.reserve(a->seq.size());
        for (const auto& m : a->seq) out.push_back(exec(st, m));
        return v_arr(std::move(out));
      }
      case ActionNode::UnTreeA: {
        ListV acc = nullptr;
        acc = untree_go(st, a->v, a->d, a->tree, acc);
        return v_list(std::move(acc));
      }
    }
    throw EvalError("Malformed", "unhandled action");
  }

  // The monad handler: deposits the initial environment cotangent, executes,
  // and extracts the final slots. Costs exactly 1 + c_run*|ctx| + action.
  std::pair<Value, std::vector<Cot>> run(const Action& a, const std::vector<Ty>& slot_tys,
                                         std::vector<Cot> env0) {
    if (slot_tys.size() != env0.size())
      throw EvalError("Malformed", "run: initial environment size mismatch");
    cost.steps += 1 + c_run * (long long)slot_tys.size();
    EvmState st;
    st.slots.reserve(slot_tys.size());
    for (size_t i = 0; i < slot_tys.size(); ++i)
      st.slots.emplace_back(slot_tys[i], std::move(env0[i]));
    Value v = exec(st, a);
    if (st.depth() != slot_tys.size()) throw EvalError("Malformed", "run: unbalanced scopes");
    std::vector<Cot> out;
    out.reserve(st.slots.size());
    for (auto& s : st.slots) out.push_back(std::move(s.second));
    return {std::move(v), std::move(out)};
  }

 private:
  long long eval_int(const Env& env, const TermPtr& t) {
    Value v = eval(env, t);
    if (v->k != ValKind::Int) throw EvalError("Malformed", "expected an integer");
    return v->i;
  }

  // Balanced reduction; the derivative's recorded tree mirrors this order.
  Value fold_reduce(const Env& env, const TermPtr& body, const std::vector<Value>& xs, size_t lo,
                    size_t hi) {
    if (hi - lo == 1) return xs[lo];
    size_t mid = lo + (hi - lo) / 2;
    Value l = fold_reduce(env, body, xs, lo, mid);
    Value r = fold_reduce(env, body, xs, mid, hi);
    return eval(env_push(env, v_pair(std::move(l), std::move(r))), body);
  }

  void collect_bag(const Cot& bag, std::vector<Value>& out) {
    cost.steps += 1;
    switch (bag->k) {
      case CotKind::CZero:
      case CotKind::CBagEmpty: return;
      case CotKind::CBagOne:
        out.push_back(v_pair(v_int(bag->index), v_cot(bag->a)));
        return;
      case CotKind::CBagPlus:
        collect_bag(bag->a, out);
        collect_bag(bag->b, out);
        return;
      default: throw EvalError("Malformed", "collect of a non-bag");
    }
  }

  ListV untree_go(EvmState& st, const Value& g, const Cot& d, const TreeV& tr, ListV acc) {
    cost.steps += 1;
    if (tr->leaf) return list_cons(v_cot(d), std::move(acc));
    Value g1 = apply(g, v_cot(d));
    Value act = apply(g1, tr->f);
    if (act->k != ValKind::ActionV) throw EvalError("Malformed", "untree handler");
    Value pr = exec(st, act->act);
    if (pr->k != ValKind::Pair) throw EvalError("Malformed", "untree handler result");
    const Cot& dl = value_to_cot(pr->a);
    const Cot& dr = value_to_cot(pr->b);
    acc = untree_go(st, g, dr, tr->r, std::move(acc));
    return untree_go(st, g, dl, tr->l, std::move(acc));
  }
};

// Convenience wrapper used throughout tests: evaluate and report (value, cost).
inline std::pair<Value, long long> eval_cost(const Context& ctx, const std::vector<Value>& point,
                                             const TermPtr& t) {
  Env env = nullptr;
  for (const auto& v : point) env = env_push(env, v);
  (void)ctx;
  Evaluator ev;
  Value v = ev.eval(env, t);
  return {std::move(v), ev.cost.steps};
}

} // namespace chad
