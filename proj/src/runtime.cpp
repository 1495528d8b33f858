#include "lcodom/runtime.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace lcodom {

void retain_freed_memory() {
#if defined(__GLIBC__)
  // 32 MiB is the largest mmap threshold glibc accepts; larger blocks are model weights.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace lcodom
