#pragma once

#include <functional>

namespace inode {

// Worker cap for intra-run parallelism: INODE_LAB_THREADS env var if set,
// otherwise hardware concurrency. Always >= 1.
int thread_cap();

// Runs fn(worker, index) for index in [0, n). Work items are claimed from a
// shared counter; outputs must be keyed by index so results do not depend on
// the claiming order. max_workers <= 0 means "use thread_cap()".
void parallel_for(int n, int max_workers, const std::function<void(int, int)>& fn);

}  // namespace inode
