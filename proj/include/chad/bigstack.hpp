#pragma once

#include <pthread.h>

#include <functional>

// Deeply nested programs (the benchmark families reach ~16k binders) need more
// stack than the default; entry points run on a dedicated 1 GiB-stack thread.

namespace chad {

inline int run_on_big_stack(const std::function<int()>& fn) {
  struct Box {
    const std::function<int()>* fn;
    int result;
  } box{&fn, 1};
  pthread_attr_t attr;
  pthread_attr_init(&attr);
  pthread_attr_setstacksize(&attr, 1ull << 30);
  pthread_t tid;
  auto entry = [](void* p) -> void* {
    auto* b = static_cast<Box*>(p);
    b->result = (*b->fn)();
    return nullptr;
  };
  if (pthread_create(&tid, &attr, entry, &box) != 0) {
    pthread_attr_destroy(&attr);
    return fn(); // fall back to the current stack
  }
  pthread_join(tid, nullptr);
  pthread_attr_destroy(&attr);
  return box.result;
}

} // namespace chad
