#pragma once

namespace lcodom {

/// Keeps freed activation buffers in the heap instead of returning them to the
/// kernel, so repeated forward passes reuse already-faulted pages. Process-wide;
/// call once at startup. No-op outside glibc.
void retain_freed_memory();

}  // namespace lcodom
