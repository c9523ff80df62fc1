#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace sicl {

/// Training allocates and frees many same-sized activation buffers per step.
/// glibc's default of returning large blocks to the kernel turns each of them
/// into fresh page faults; keeping them in the heap is several times faster.
/// Call once at program start. No-op outside glibc.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 * 1024 * 1024);
#endif
}

}  // namespace sicl
