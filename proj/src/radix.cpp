#include "sse/radix.hpp"

#include <cmath>
#include <set>
#include <string>

#include "sse/codebook.hpp"

namespace sse {

std::int64_t minimal_table_size(std::int64_t vocab_size, std::int64_t num_subspaces) {
  if (vocab_size < 1 || num_subspaces < 1) {
    throw InvalidConfig("minimal_table_size: arguments must be >= 1");
  }
  // The floating-point root is only a starting point; exactness comes from
  // the integer checks on either side.
  auto q = static_cast<std::int64_t>(
      std::llround(std::pow(static_cast<double>(vocab_size), 1.0 / static_cast<double>(num_subspaces))));
  q = std::max<std::int64_t>(q, 1);
  while (!power_at_least(q, num_subspaces, vocab_size)) ++q;
  while (q > 1 && power_at_least(q - 1, num_subspaces, vocab_size)) --q;
  return q;
}

std::vector<Code> radix_digits(std::uint64_t value, std::int64_t table_size,
                               std::int64_t num_subspaces) {
  std::vector<Code> digits(static_cast<std::size_t>(num_subspaces));
  const auto base = static_cast<std::uint64_t>(table_size);
  for (auto& d : digits) {
    d = static_cast<Code>(value % base);
    value /= base;
  }
  return digits;
}

CodeAssignment radix_assign(std::int64_t vocab_size, std::int64_t num_subspaces,
                            std::optional<std::int64_t> table_size,
                            const std::vector<Index>& reserved_tokens) {
  if (vocab_size < 1 || num_subspaces < 1) {
    throw InvalidConfig("radix_assign: vocab_size and num_subspaces must be >= 1");
  }
  const std::int64_t q = table_size.value_or(minimal_table_size(vocab_size, num_subspaces));
  if (q < 1) throw InvalidConfig("radix_assign: table_size must be >= 1");
  if (!power_at_least(q, num_subspaces, vocab_size)) {
    throw CapacityError("radix_assign: " + std::to_string(q) + "^" +
                        std::to_string(num_subspaces) + " < vocab_size " +
                        std::to_string(vocab_size));
  }

  std::vector<std::uint64_t> rank(static_cast<std::size_t>(vocab_size), UINT64_MAX);
  std::uint64_t next = 0;
  for (Index r : reserved_tokens) {
    if (r < 0 || r >= vocab_size) {
      throw IndexOutOfRange("radix_assign: reserved token " + std::to_string(r) + " out of range");
    }
    if (rank[static_cast<std::size_t>(r)] != UINT64_MAX) {
      throw DataError("radix_assign: reserved token " + std::to_string(r) + " listed twice");
    }
    rank[static_cast<std::size_t>(r)] = next++;
  }
  for (auto& r : rank) {
    if (r == UINT64_MAX) r = next++;
  }

  CodeAssignment codes(vocab_size, num_subspaces);
  for (Index n = 0; n < vocab_size; ++n) {
    std::uint64_t x = rank[static_cast<std::size_t>(n)];
    for (Index k = 0; k < num_subspaces; ++k) {
      codes(n, k) = static_cast<Code>(x % static_cast<std::uint64_t>(q));
      x /= static_cast<std::uint64_t>(q);
    }
  }
  return codes;
}

}  // namespace sse
