#pragma once

#include <vector>

#include "chad/cotangent.hpp"

// The accumulation-monad state: one growable slot per in-scope variable,
// indexed by de Bruijn level. Strictly LIFO; an executing run owns its state
// exclusively. All mutation is accumulate-by-plus, which is commutative, so a
// parallel executor may reorder contributions; this one is sequential.

namespace chad {

struct CostCounter {
  long long steps = 0;
  long long closure_applies = 0;
};

struct EvmState {
  std::vector<std::pair<Ty, Cot>> slots;

  size_t depth() const { return slots.size(); }

  void push(const Ty& ty) { slots.emplace_back(ty, cot_zero(ty)); }

  Cot pop() {
    if (slots.empty()) throw EvalError("PopOnEmpty", "pop of an empty slot array");
    Cot c = std::move(slots.back().second);
    slots.pop_back();
    return c;
  }

  void add_at(size_t level, const Cot& d, long long& plus_cost) {
    if (level >= slots.size()) throw EvalError("BadLevel", "slot level out of range");
    slots[level].second = cot_plus(slots[level].second, d, plus_cost);
  }
};

// Direct slot-array API with its per-operation charges; each operation's cost
// is a constant independent of the depth and of slot contents.
inline void evm_push(EvmState& st, const Ty& ty, CostCounter& c) {
  st.push(ty);
  c.steps += 1;
}
inline Cot evm_pop(EvmState& st, CostCounter& c) {
  c.steps += 1;
  return st.pop();
}
inline void evm_modify_plus(EvmState& st, size_t level, const Cot& d, CostCounter& c) {
  c.steps += 1;
  long long pc = 0;
  st.add_at(level, d, pc);
  c.steps += pc;
}

// General slot update: one step plus whatever the function itself charges.
template <class F>
inline void evm_modify(EvmState& st, size_t level, F&& fn, CostCounter& c) {
  if (level >= st.slots.size()) throw EvalError("BadLevel", "slot level out of range");
  c.steps += 1;
  st.slots[level].second = fn(st.slots[level].second);
}

} // namespace chad
