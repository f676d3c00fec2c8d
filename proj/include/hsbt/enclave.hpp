#pragma once

// Simulated trusted component. The public member functions are the whole
// boundary: anything passed in or returned is visible to the host, and
// every host-memory access the enclave performs is reported to the
// optional AccessTrace.

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <vector>

#include "hsbt/bptree.hpp"
#include "hsbt/crypto.hpp"
#include "hsbt/index_codec.hpp"
#include "hsbt/trace.hpp"

namespace hsbt {

using Nonce = std::array<std::uint8_t, 16>;

/// Client id assumed for tokens that carry none.
inline constexpr ClientId kDefaultClient = 0;

struct ScanCounters {
  std::uint64_t key_touches = 0;
  std::uint64_t pointer_touches = 0;
};

struct SlotMatch {
  std::uint16_t slot = 0;      // pointer slot; for leaves key index = slot - 1
  std::uint32_t pointer = 0;
};

/// Reads all b-1 key slots and all b pointer slots of `node` regardless of
/// the range and selects matches with comparison masks only. Inner nodes
/// match child i when [keys[i-1], keys[i]) intersects the range; leaves
/// match key j when it lies in the range.
std::vector<SlotMatch> oblivious_node_scan(const PlainNode& node, KeyRange range, ScanCounters* counters = nullptr);

struct EnclaveConfig {
  std::size_t reserved_space = 64 * 1024;         // streaming buffer, fixes maxAmount
  std::size_t memory_budget = 96 * 1024 * 1024;   // resident tree limit
  std::size_t page_size = 4096;
};

struct BatchAnswer {
  std::vector<TaggedPointer> pointers;  // freshly shuffled
  Nonce nonce{};
};

class Enclave {
 public:
  explicit Enclave(EnclaveConfig config = {});

  /// Installs (or replaces) a client's tree key. The first client provisioned
  /// owns the index: its key decrypts node records.
  void provision(ClientId client, const Key128& tree_key, NodeId root_id);

  /// Decrypts the whole node region into enclave memory.
  void load_tree_c1(const EncryptedIndex& index);

  /// Breadth-first search over the resident tree. Returns shuffled value
  /// pointers. Page touches are reported to `os_view`.
  std::vector<std::uint32_t> search_trusted_c1(const RangeToken& token, AccessTrace* os_view = nullptr);

  /// Processes one batch of node slots read straight from the host region.
  /// Without `nonce` the first node must be the root and opens a session.
  BatchAnswer search_trusted_c2(const EncryptedIndex& host, const RangeToken& token,
                                std::span<const std::uint32_t> slots, const std::optional<Nonce>& nonce,
                                AccessTrace* os_view = nullptr);

  /// Closes a session. In integrity mode returns the MAC over the result
  /// multiset hash, or throws ProtocolViolation if requested nodes are
  /// missing or the wrong nodes were delivered.
  std::optional<Mac> finalize_session(const Nonce& nonce);

  /// Nodes per batch: reserved_space / encrypted record size.
  std::size_t max_amount(const IndexHeader& header) const;

  /// Page of a slot in the resident (Construction 1) layout.
  std::uint32_t page_of_slot(std::uint32_t slot) const;

  const EnclaveConfig& config() const { return config_; }
  std::uint64_t node_decryptions() const { return node_decryptions_.load(); }
  std::uint64_t ecalls() const { return ecalls_.load(); }
  std::size_t open_sessions() const;
  bool tree_loaded() const;

#ifdef HSBT_SEED_HOOK
  /// Makes all subsequent shuffles reproducible. Test and audit builds only.
  void set_shuffle_seed(std::uint64_t seed);
#endif

 private:
  struct ClientEntry {
    Key128 key;
    NodeId root_id = 0;
  };

  struct Session {
    ClientId client = 0;
    KeyRange range;
    bool integrity = false;
    std::int64_t expected_nodes_amount = 0;
    MultisetHash expected_nodes_hash;
    MultisetHash received_nodes_hash;
    MultisetHash result_values_hash;
  };

  struct ResidentTree {
    std::uint32_t branching = 0;
    std::uint32_t root_slot = 0;
    std::size_t plain_record_size = 0;
    std::vector<PlainNode> by_slot;
  };

  ClientEntry client_entry(ClientId client) const;
  ClientEntry owner_entry() const;
  Block next_query_seed();

  EnclaveConfig config_;

  mutable std::shared_mutex keys_mu_;
  std::map<ClientId, ClientEntry> key_table_;
  std::optional<ClientId> owner_;

  mutable std::shared_mutex tree_mu_;
  std::optional<ResidentTree> resident_;

  mutable std::mutex sessions_mu_;
  std::map<Nonce, Session> sessions_;

  std::mutex rng_mu_;
  Csprng rng_;

  std::atomic<std::uint64_t> node_decryptions_{0};
  std::atomic<std::uint64_t> ecalls_{0};
};

}  // namespace hsbt
