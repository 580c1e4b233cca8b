// SPDX-License-Identifier: Apache-2.0
#include "w1ot/runtime.hpp"

#include <cstdlib>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace w1ot {

void configure_allocator() {
#if defined(__GLIBC__)
  // Activation buffers are ~128 KiB, right at the default mmap threshold,
  // so each step otherwise maps and unmaps fresh pages.
  mallopt(M_MMAP_THRESHOLD, 16 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace w1ot
