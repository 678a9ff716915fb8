#pragma once

#include <cstddef>
#include <functional>

namespace sicnn {

/// Worker count used for batch-parallel kernels. 1 means fully sequential.
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Runs body(i) for i in [begin, end). Bodies must write disjoint outputs;
/// any reduction happens afterwards in index order at the call site.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& body);

}  // namespace sicnn
