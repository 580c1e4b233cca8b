// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace w1ot {

/// Keeps freed training buffers in the heap instead of returning them to
/// the OS after every step (glibc only; no-op elsewhere). Executables call
/// this once at startup.
void configure_allocator();

}  // namespace w1ot
