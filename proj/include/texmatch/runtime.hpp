#pragma once

namespace texmatch {

/// Keeps freed tensor buffers in the heap instead of returning them to the OS.
/// Training allocates and frees the same large blocks every step; with glibc's
/// defaults each of those is an mmap/munmap pair plus page faults. Call once at
/// program start; a no-op on other C libraries.
void configure_allocator();

}  // namespace texmatch
