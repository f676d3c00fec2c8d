#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include "hsbt/bench.hpp"
#include "hsbt/enclave.hpp"
#include "hsbt/index_codec.hpp"
#include "hsbt/server.hpp"

namespace hsbt::test {

inline std::vector<KeyValue> random_pairs(std::size_t n, std::uint64_t seed, SearchKey key_space = 1u << 24) {
  Csprng rng(seed);
  std::vector<KeyValue> out;
  std::vector<bool> used(std::size_t{key_space} + 1, false);
  while (out.size() < n) {
    const auto k = static_cast<SearchKey>(1 + rng.uniform(key_space));
    if (used[k]) continue;
    used[k] = true;
    Bytes v(4 + rng.uniform(12));
    for (auto& b : v) b = static_cast<std::uint8_t>(rng.next());
    out.push_back({k, std::move(v)});
  }
  return out;
}

inline KeyRange random_range(Csprng& rng, SearchKey key_space = 1u << 24) {
  SearchKey a = static_cast<SearchKey>(1 + rng.uniform(key_space));
  SearchKey b = static_cast<SearchKey>(1 + rng.uniform(key_space));
  if (a > b) std::swap(a, b);
  return {a, b};
}

/// Pointer multiset the oracle predicts for a range.
inline std::vector<std::uint32_t> oracle_pointers(const std::vector<KeyValue>& pairs, const PlainTree& tree,
                                                  KeyRange range) {
  std::vector<std::uint32_t> out;
  for (std::size_t i : scan_oracle_indices(pairs, range)) out.push_back(tree.value_slot[i]);
  std::sort(out.begin(), out.end());
  return out;
}

struct Fixture {
  std::vector<KeyValue> pairs;
  SecretKey sk = SecretKey::generate();
  PlainTree tree;
  EncryptedIndex index;
  std::unique_ptr<Enclave> enclave;

  Fixture(std::vector<KeyValue> p, std::uint32_t b, bool integrity, EnclaveConfig cfg = {}) : pairs(std::move(p)) {
    tree = build_tree(pairs, b, 17);
    index = encrypt_index(sk, tree, pairs, integrity);
    enclave = std::make_unique<Enclave>(cfg);
    enclave->provision(kDefaultClient, sk.tree, tree.root_id);
  }

  Client client() const { return Client(sk); }
  std::vector<std::uint32_t> slot_of() const { return node_slots(sk.tree, index.header.node_count); }
};

inline std::vector<Bytes> sorted(std::vector<Bytes> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace hsbt::test
