#pragma once

#include <cstddef>
#include <functional>

namespace lskde {

// Runs fn(0..count-1) on up to `threads` workers. Tasks must write only to
// their own slots; results are then independent of the schedule.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

} // namespace lskde
