#pragma once

// Untrusted host drivers. They only ever handle ciphertexts, slots and
// value-region indices.

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hsbt/enclave.hpp"
#include "hsbt/index_codec.hpp"
#include "hsbt/trace.hpp"

namespace hsbt {

/// One CSV row per query:
/// construction,b,n,range_size,result_size,crossings,nodes,bytes_in,bytes_out,micros
struct QueryStats {
  int construction = 0;
  std::uint32_t branching = 0;
  std::uint32_t value_count = 0;
  std::uint64_t range_size = 0;  // hi - lo + 1 in the key domain
  std::uint64_t result_size = 0;
  std::uint64_t boundary_crossings = 0;  // enclave calls made for this query
  std::uint64_t nodes_transferred = 0;
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  std::chrono::nanoseconds wall_time{0};

  static std::string csv_header();
  std::string csv_row() const;
};

struct SearchResult {
  std::vector<Ciphertext> values;
  std::optional<Mac> mac;  // Construction 2 in integrity mode only
  QueryStats stats;
};

class UntrustedServer {
 public:
  UntrustedServer(const EncryptedIndex& index, Enclave& enclave) : index_(index), enclave_(enclave) {}

  /// Passes the token once and dereferences the returned pointers.
  /// `range_hint` only fills QueryStats::range_size.
  SearchResult search_c1(const RangeToken& token, AccessTrace* os_view = nullptr,
                         std::optional<KeyRange> range_hint = {}) const;

  /// FIFO traversal feeding up to maxAmount slots per enclave call, then
  /// finalizes the session. Any enclave error propagates and no values are
  /// returned.
  SearchResult search_c2(const RangeToken& token, AccessTrace* os_view = nullptr,
                         std::optional<KeyRange> range_hint = {}) const;

  /// Blobs in pointer order; pointers outside the value region throw.
  std::vector<Ciphertext> fetch_values(std::span<const std::uint32_t> pointers) const;

  const EncryptedIndex& index() const { return index_; }

 private:
  const EncryptedIndex& index_;
  Enclave& enclave_;
};

}  // namespace hsbt
