#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sse/types.hpp"

namespace sse {

/// Smallest Q with Q^num_subspaces >= vocab_size, by exact integer search.
std::int64_t minimal_table_size(std::int64_t vocab_size, std::int64_t num_subspaces);

/// Base-Q digit decomposition: codes(n, k) = floor(r / Q^k) mod Q, where r is
/// the token's rank. Reserved tokens take ranks 0..R-1 in list order, the
/// remaining tokens follow in index order. With no reserved tokens r = n.
///
/// table_size defaults to minimal_table_size. An explicit table_size with
/// Q^f < D throws CapacityError.
CodeAssignment radix_assign(std::int64_t vocab_size, std::int64_t num_subspaces,
                            std::optional<std::int64_t> table_size = std::nullopt,
                            const std::vector<Index>& reserved_tokens = {});

/// The base-Q digits of value, least significant first.
std::vector<Code> radix_digits(std::uint64_t value, std::int64_t table_size,
                               std::int64_t num_subspaces);

}  // namespace sse
