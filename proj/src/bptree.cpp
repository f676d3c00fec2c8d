#include "hsbt/bptree.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>

namespace hsbt {

void check_domain_key(SearchKey k) {
  if (k < kMinDomainKey || k > kMaxDomainKey) {
    throw DomainError("search key " + std::to_string(k) + " outside [1, 2^32-2]");
  }
}

namespace {

struct WorkNode {
  bool leaf = true;
  std::vector<SearchKey> keys;
  std::vector<std::size_t> entries;  // leaves: input pair index per key
  std::vector<NodeId> children;      // inner nodes
};

struct Split {
  SearchKey separator;
  NodeId right;
};

class Builder {
 public:
  Builder(std::span<const KeyValue> pairs, std::uint32_t b) : pairs_(pairs), b_(b) {}

  void run() {
    nodes_.push_back(WorkNode{});
    root_ = 0;
    height_ = 1;
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
      if (auto split = insert(root_, pairs_[i].key, i)) {
        WorkNode root;
        root.leaf = false;
        root.keys = {split->separator};
        root.children = {root_, split->right};
        root_ = static_cast<NodeId>(nodes_.size());
        nodes_.push_back(std::move(root));
        ++height_;
      }
    }
  }

  PlainTree finish(std::vector<std::uint32_t> value_slot) const {
    PlainTree tree;
    tree.branching = b_;
    tree.root_id = root_;
    tree.height = height_;
    tree.value_slot = std::move(value_slot);
    tree.nodes.reserve(nodes_.size());
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      const WorkNode& w = nodes_[id];
      PlainNode n;
      n.id = static_cast<NodeId>(id);
      n.is_leaf = w.leaf;
      n.key_count = static_cast<std::uint16_t>(w.keys.size());
      n.keys.assign(b_ - 1, kPosInfKey);
      std::copy(w.keys.begin(), w.keys.end(), n.keys.begin());
      n.pointers.assign(b_, kDummyPointer);
      if (w.leaf) {
        n.value_hashes.assign(b_ - 1, Block{});
        for (std::size_t j = 0; j < w.entries.size(); ++j) {
          n.pointers[j + 1] = tree.value_slot[w.entries[j]];
          n.value_hashes[j] = digest128(pairs_[w.entries[j]].value);
        }
      } else {
        n.child_ids.assign(b_, kDummyPointer);
        std::copy(w.children.begin(), w.children.end(), n.child_ids.begin());
      }
      tree.nodes.push_back(std::move(n));
    }
    return tree;
  }

 private:
  std::optional<Split> insert(NodeId id, SearchKey key, std::size_t entry) {
    if (nodes_[id].leaf) {
      WorkNode& leaf = nodes_[id];
      const auto pos = std::upper_bound(leaf.keys.begin(), leaf.keys.end(), key) - leaf.keys.begin();
      leaf.keys.insert(leaf.keys.begin() + pos, key);
      leaf.entries.insert(leaf.entries.begin() + pos, entry);
      if (leaf.keys.size() <= b_ - 1) return std::nullopt;
      return split_leaf(id);
    }
    const std::size_t child_index =
        std::upper_bound(nodes_[id].keys.begin(), nodes_[id].keys.end(), key) - nodes_[id].keys.begin();
    const auto split = insert(nodes_[id].children[child_index], key, entry);
    if (!split) return std::nullopt;
    WorkNode& inner = nodes_[id];
    inner.keys.insert(inner.keys.begin() + child_index, split->separator);
    inner.children.insert(inner.children.begin() + child_index + 1, split->right);
    if (inner.keys.size() <= b_ - 1) return std::nullopt;
    return split_inner(id);
  }

  // Splits at the distinct-key boundary closest to the middle so equal keys
  // stay in one leaf.
  Split split_leaf(NodeId id) {
    const std::vector<SearchKey>& keys = nodes_[id].keys;
    const std::size_t n = keys.size();
    const std::size_t mid = n - n / 2;
    std::size_t cut = 0;
    for (std::size_t d = 0; d < n && cut == 0; ++d) {
      for (std::size_t s : {mid + d, mid - d}) {
        if (s >= 1 && s < n && keys[s - 1] < keys[s]) {
          cut = s;
          break;
        }
      }
    }
    if (cut == 0) {
      throw DomainError("more than b-1 duplicates of key " + std::to_string(keys.front()));
    }
    WorkNode right;
    right.leaf = true;
    WorkNode& left = nodes_[id];
    right.keys.assign(left.keys.begin() + cut, left.keys.end());
    right.entries.assign(left.entries.begin() + cut, left.entries.end());
    left.keys.resize(cut);
    left.entries.resize(cut);
    const SearchKey sep = right.keys.front();
    const NodeId right_id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(std::move(right));
    return {sep, right_id};
  }

  Split split_inner(NodeId id) {
    WorkNode right;
    right.leaf = false;
    WorkNode& left = nodes_[id];
    const std::size_t mid = left.keys.size() / 2;
    const SearchKey sep = left.keys[mid];
    right.keys.assign(left.keys.begin() + mid + 1, left.keys.end());
    right.children.assign(left.children.begin() + mid + 1, left.children.end());
    left.keys.resize(mid);
    left.children.resize(mid + 1);
    const NodeId right_id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(std::move(right));
    return {sep, right_id};
  }

  std::span<const KeyValue> pairs_;
  std::uint32_t b_;
  std::vector<WorkNode> nodes_;
  NodeId root_ = 0;
  std::uint32_t height_ = 0;
};

}  // namespace

PlainTree build_tree(std::span<const KeyValue> pairs, std::uint32_t branching, std::uint64_t value_seed) {
  if (branching < 3) throw DomainError("branching factor must be at least 3");
  if (branching > 0xFFFF) throw DomainError("branching factor too large");
  if (pairs.empty()) throw DomainError("at least one key-value pair is required");
  if (pairs.size() >= kDummyPointer) throw DomainError("too many key-value pairs");
  for (const KeyValue& kv : pairs) check_domain_key(kv.key);

  std::vector<std::uint32_t> value_slot(pairs.size());
  std::iota(value_slot.begin(), value_slot.end(), 0u);
  Csprng rng(value_seed);
  rng.shuffle(value_slot);

  Builder builder(pairs, branching);
  builder.run();
  return builder.finish(std::move(value_slot));
}

PlainTree build_tree(std::span<const KeyValue> pairs, std::uint32_t branching) {
  Csprng os;
  return build_tree(pairs, branching, os.next());
}

std::vector<std::size_t> scan_oracle_indices(std::span<const KeyValue> pairs, KeyRange range) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (range.contains(pairs[i].key)) out.push_back(i);
  }
  return out;
}

std::vector<Bytes> scan_oracle(std::span<const KeyValue> pairs, KeyRange range) {
  std::vector<Bytes> out;
  for (const KeyValue& kv : pairs) {
    if (range.contains(kv.key)) out.push_back(kv.value);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

[[noreturn]] void fail(NodeId id, const std::string& what) {
  throw std::logic_error("node " + std::to_string(id) + ": " + what);
}

// Returns the depth of the leaves below `id`.
std::uint32_t validate_subtree(const PlainTree& tree, NodeId id, std::uint64_t lo, std::uint64_t hi,
                               std::vector<bool>& seen) {
  if (id >= tree.nodes.size()) fail(id, "child id out of range");
  if (seen[id]) fail(id, "reachable twice");
  seen[id] = true;
  const PlainNode& n = tree.nodes[id];
  const std::uint32_t b = tree.branching;
  if (n.id != id) fail(id, "id mismatch");
  if (n.keys.size() != b - 1 || n.pointers.size() != b) fail(id, "unpadded node");
  if (n.key_count < 1 || n.key_count > b - 1) fail(id, "bad key count");
  for (std::size_t i = 0; i < n.keys.size(); ++i) {
    if (i >= n.key_count) {
      if (n.keys[i] != kPosInfKey) fail(id, "key pad is not +inf");
      continue;
    }
    if (n.keys[i] < lo || n.keys[i] >= hi) fail(id, "key outside separator interval");
    if (i > 0 && n.keys[i - 1] > n.keys[i]) fail(id, "keys decreasing");
    if (!n.is_leaf && i > 0 && n.keys[i - 1] == n.keys[i]) fail(id, "duplicate separator");
  }
  if (n.is_leaf) {
    if (n.pointers[0] != kDummyPointer) fail(id, "leaf slot 0 in use");
    for (std::size_t i = 1; i < b; ++i) {
      const bool live = i <= n.key_count;
      if (live == (n.pointers[i] == kDummyPointer)) fail(id, "leaf pointer padding");
    }
    return 1;
  }
  std::uint32_t depth = 0;
  for (std::size_t i = 0; i <= n.key_count; ++i) {
    const std::uint64_t clo = i == 0 ? lo : n.keys[i - 1];
    const std::uint64_t chi = i == n.key_count ? hi : n.keys[i];
    const std::uint32_t d = validate_subtree(tree, n.child_ids.at(i), clo, chi, seen);
    if (depth == 0) depth = d;
    if (d != depth) fail(id, "leaves at different depths");
  }
  for (std::size_t i = n.key_count + 1; i < b; ++i) {
    if (n.child_ids.at(i) != kDummyPointer) fail(id, "inner child padding");
  }
  return depth + 1;
}

}  // namespace

void validate_tree(const PlainTree& tree) {
  std::vector<bool> seen(tree.nodes.size(), false);
  const std::uint32_t h = validate_subtree(tree, tree.root_id, 0, std::uint64_t{kPosInfKey} + 1, seen);
  if (h != tree.height) throw std::logic_error("height mismatch");
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw std::logic_error("unreachable node");
}

std::vector<NodeId> parent_ids(const PlainTree& tree) {
  std::vector<NodeId> parent(tree.nodes.size(), tree.root_id);
  for (const PlainNode& n : tree.nodes) {
    if (n.is_leaf) continue;
    for (std::size_t i = 0; i <= n.key_count; ++i) parent[n.child_ids[i]] = n.id;
  }
  return parent;
}

std::vector<std::uint32_t> node_depths(const PlainTree& tree) {
  std::vector<std::uint32_t> depth(tree.nodes.size(), 0);
  std::deque<NodeId> queue{tree.root_id};
  while (!queue.empty()) {
    const PlainNode& n = tree.nodes[queue.front()];
    queue.pop_front();
    if (n.is_leaf) continue;
    for (std::size_t i = 0; i <= n.key_count; ++i) {
      depth[n.child_ids[i]] = depth[n.id] + 1;
      queue.push_back(n.child_ids[i]);
    }
  }
  return depth;
}

}  // namespace hsbt
