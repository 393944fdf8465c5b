#pragma once

namespace mixbench {

// Keeps large activation buffers on the heap between batches instead of
// returning them to the OS after every free. With glibc's defaults each
// multi-megabyte tensor is a fresh mmap whose pages fault in again on every
// step. Process-wide; call once from main(). No-op on other C libraries.
void configure_allocator();

}  // namespace mixbench
