#pragma once

#include <cstdint>
#include <string>

namespace ortree {

// Exact count bound on distinct depth-D tree structures over n samples and p
// features: p^(2^D - 1) * prod_{t=0}^{D-1} (floor(n / 2^t) - 1)^(2^t), as a
// decimal string (exact integer arithmetic, no overflow). Any level whose
// factor is non-positive clamps the whole count to zero.
std::string struct_count_upper_bound(std::uint64_t n, std::uint64_t p, int depth);

// The same bound restricted to the levels the solver actually branches on
// (depths 0..D-2); the deepest internal level is resolved in closed form and
// contributes no choices. Equals "1" for depth 1.
std::string branchable_struct_bound(std::uint64_t n, std::uint64_t p, int depth);

// True iff the branchable bound exceeds cap; used to gate exhaustive
// enumeration without parsing decimal strings.
bool branchable_bound_exceeds(std::uint64_t n, std::uint64_t p, int depth, std::uint64_t cap);

} // namespace ortree
