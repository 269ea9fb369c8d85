#pragma once
/** @file parallel.hpp
 *  @brief Index-parallel loop with a process-wide worker count.
 *
 *  Results must be written to per-index slots so output does not depend on
 *  scheduling. The count comes from INVMAN_WORKERS unless overridden.
 */

#include <cstddef>
#include <functional>

namespace invman {

unsigned worker_count();
void set_worker_count(unsigned workers);

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace invman
