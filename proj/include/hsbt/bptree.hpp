#pragma once

// Client-side static B+-tree: textbook insertion, creation-order node ids,
// fixed-shape padding, unchained leaves.

#include <cstdint>
#include <span>
#include <vector>

#include "hsbt/crypto.hpp"

namespace hsbt {

using SearchKey = std::uint32_t;
using NodeId = std::uint32_t;

inline constexpr SearchKey kNegInfKey = 0;            // -inf, tokens only
inline constexpr SearchKey kPosInfKey = 0xFFFFFFFFu;  // +inf, also the key pad
inline constexpr SearchKey kMinDomainKey = 1;
inline constexpr SearchKey kMaxDomainKey = 0xFFFFFFFEu;
inline constexpr std::uint32_t kDummyPointer = 0xFFFFFFFFu;

struct KeyValue {
  SearchKey key = 0;
  Bytes value;
};

/// Closed range [lo, hi] after sentinel substitution.
struct KeyRange {
  SearchKey lo = kNegInfKey;
  SearchKey hi = kPosInfKey;

  bool contains(SearchKey k) const { return lo <= k && k <= hi; }
  bool operator==(const KeyRange&) const = default;
};

/// One padded node.
///
/// Inner nodes: child i (0 <= i <= key_count) covers [keys[i-1], keys[i]);
/// `pointers[i]` holds its storage slot once the tree is placed and
/// `child_ids[i]` its node id.
///
/// Leaves: key j pairs with `pointers[j + 1]` (an index into the value
/// region) and `value_hashes[j]`; pointer slot 0 is unused.
struct PlainNode {
  NodeId id = 0;
  bool is_leaf = true;
  std::uint16_t key_count = 0;
  std::vector<SearchKey> keys;                 // b - 1, padded with +inf
  std::vector<std::uint32_t> pointers;         // b, padded with kDummyPointer
  std::vector<NodeId> child_ids;               // b, inner nodes only
  std::vector<Block> value_hashes;             // b - 1, leaves only

  bool operator==(const PlainNode&) const = default;
};

struct PlainTree {
  std::uint32_t branching = 0;
  NodeId root_id = 0;
  std::uint32_t height = 0;             // levels, a single leaf has height 1
  std::vector<PlainNode> nodes;         // indexed by id
  std::vector<std::uint32_t> value_slot;  // input pair index -> value region index

  const PlainNode& root() const { return nodes.at(root_id); }
  std::size_t node_count() const { return nodes.size(); }
};

/// Builds the tree by inserting `pairs` in order. Duplicate keys become
/// separate leaf entries and never straddle a leaf boundary; a run of equal
/// keys longer than b - 1 cannot be represented and raises DomainError.
/// `value_seed` fixes the random storage order of the values.
PlainTree build_tree(std::span<const KeyValue> pairs, std::uint32_t branching, std::uint64_t value_seed);

/// Same, with an OS-seeded value order.
PlainTree build_tree(std::span<const KeyValue> pairs, std::uint32_t branching);

/// Brute-force answer: every value whose key lies in the range, sorted.
std::vector<Bytes> scan_oracle(std::span<const KeyValue> pairs, KeyRange range);

/// Sorted indices of the pairs whose key lies in the range.
std::vector<std::size_t> scan_oracle_indices(std::span<const KeyValue> pairs, KeyRange range);

/// Checks ordering, padding, separator and depth invariants; throws
/// std::logic_error naming the first violation.
void validate_tree(const PlainTree& tree);

/// Parent id per node id; the root maps to itself.
std::vector<NodeId> parent_ids(const PlainTree& tree);

/// Depth per node id, the root has depth 0.
std::vector<std::uint32_t> node_depths(const PlainTree& tree);

void check_domain_key(SearchKey k);

}  // namespace hsbt
