#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

// Persistent integer-keyed treap: immutable nodes with structure sharing.
// Priorities are a fixed hash of the key, so shapes are deterministic.

namespace chad {

inline uint64_t pmap_prio(long long key) {
  uint64_t x = (uint64_t)key + 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

template <class V>
struct PMapNode {
  long long key;
  V val;
  std::shared_ptr<const PMapNode> l, r;
  int size;
};

template <class V>
using PMap = std::shared_ptr<const PMapNode<V>>;

template <class V>
inline int pmap_size(const PMap<V>& m) {
  return m ? m->size : 0;
}

template <class V>
inline PMap<V> pmap_node(long long k, V v, PMap<V> l, PMap<V> r) {
  auto n = std::make_shared<PMapNode<V>>();
  n->key = k;
  n->val = std::move(v);
  n->size = 1 + pmap_size(l) + pmap_size(r);
  n->l = std::move(l);
  n->r = std::move(r);
  return n;
}

template <class V>
inline const V* pmap_get(const PMap<V>& m, long long k) {
  const PMapNode<V>* n = m.get();
  while (n) {
    if (k == n->key) return &n->val;
    n = k < n->key ? n->l.get() : n->r.get();
  }
  return nullptr;
}

// Insert k -> v, combining with `merge(old, v)` if the key is present.
template <class V>
inline PMap<V> pmap_insert_with(const PMap<V>& m, long long k, const V& v,
                                const std::function<V(const V&, const V&)>& merge) {
  if (!m) return pmap_node<V>(k, v, nullptr, nullptr);
  if (k == m->key) return pmap_node<V>(k, merge(m->val, v), m->l, m->r);
  if (k < m->key) {
    PMap<V> l = pmap_insert_with(m->l, k, v, merge);
    if (pmap_prio(l->key) > pmap_prio(m->key))
      return pmap_node<V>(l->key, l->val, l->l, pmap_node<V>(m->key, m->val, l->r, m->r));
    return pmap_node<V>(m->key, m->val, l, m->r);
  }
  PMap<V> r = pmap_insert_with(m->r, k, v, merge);
  if (pmap_prio(r->key) > pmap_prio(m->key))
    return pmap_node<V>(r->key, r->val, pmap_node<V>(m->key, m->val, m->l, r->l), r->r);
  return pmap_node<V>(m->key, m->val, m->l, r);
}

template <class V>
inline PMap<V> pmap_join(const PMap<V>& l, const PMap<V>& r) {
  if (!l) return r;
  if (!r) return l;
  if (pmap_prio(l->key) > pmap_prio(r->key))
    return pmap_node<V>(l->key, l->val, l->l, pmap_join(l->r, r));
  return pmap_node<V>(r->key, r->val, pmap_join(l, r->l), r->r);
}

template <class V>
inline PMap<V> pmap_erase(const PMap<V>& m, long long k) {
  if (!m) return m;
  if (k == m->key) return pmap_join(m->l, m->r);
  if (k < m->key) return pmap_node<V>(m->key, m->val, pmap_erase(m->l, k), m->r);
  return pmap_node<V>(m->key, m->val, m->l, pmap_erase(m->r, k));
}

template <class V>
inline void pmap_entries(const PMap<V>& m, std::vector<std::pair<long long, V>>& out) {
  if (!m) return;
  pmap_entries(m->l, out);
  out.emplace_back(m->key, m->val);
  pmap_entries(m->r, out);
}

} // namespace chad
