#pragma once

#include <memory>
#include <mutex>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace marl::detail {

// Large kernel scratch buffers are allocated and freed once per training
// step. Keep freed heap memory mapped so the pages stay warm instead of
// being returned to the OS and faulted back in every step.
inline void tune_allocator_once() {
#if defined(__GLIBC__)
  static std::once_flag flag;
  std::call_once(flag, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, -1);
  });
#endif
}

// Uninitialized scratch storage; contents must be fully written before use.
template <typename T>
std::shared_ptr<T[]> make_scratch(size_t n) {
  tune_allocator_once();
  return std::shared_ptr<T[]>(new T[n]);
}

}  // namespace marl::detail
