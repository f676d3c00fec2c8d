#pragma once

// Encrypted container: fixed-size node records at PRP-permuted slots plus a
// randomly ordered value region. Also range tokens and the client side of
// result decryption and verification.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hsbt/bptree.hpp"
#include "hsbt/crypto.hpp"

namespace hsbt {

using ClientId = std::uint32_t;

inline constexpr char kIndexMagic[5] = {'H', 'S', 'B', 'T', '1'};
inline constexpr std::uint16_t kIndexVersion = 1;
inline constexpr std::size_t kHeaderBytes = 5 + 2 + 4 + 4 + 4 + 1 + 1 + 4 + 4;

namespace node_flags {
inline constexpr std::uint8_t kLeaf = 0x01;
}

struct IndexHeader {
  std::uint16_t version = kIndexVersion;
  std::uint32_t branching = 0;
  std::uint32_t value_count = 0;
  std::uint32_t node_count = 0;
  std::uint8_t key_width = 32;
  bool integrity = false;
  std::uint32_t node_record_size = 0;  // encrypted size, constant per index
  std::uint32_t root_slot = 0;

  bool operator==(const IndexHeader&) const = default;
};

struct EncryptedIndex {
  IndexHeader header;
  Bytes node_region;               // node_count records of node_record_size bytes
  std::vector<Ciphertext> values;  // value region, index = value pointer

  ByteView node_record(std::uint32_t slot) const;
  std::span<std::uint8_t> mutable_node_record(std::uint32_t slot);

  Bytes serialize() const;
  static EncryptedIndex parse(ByteView bytes);
  void write_file(const std::filesystem::path& path) const;
  static EncryptedIndex read_file(const std::filesystem::path& path);
};

/// Plaintext node record size:
/// id(4) flags(1) key_count(2) keys(4(b-1)) pointers(4b) [integrity: 16(b-1)].
std::size_t node_plain_size(std::uint32_t branching, bool integrity);
std::size_t node_record_size(std::uint32_t branching, bool integrity);

Bytes serialize_node(const PlainNode& node, std::uint32_t branching, bool integrity);
PlainNode parse_node(ByteView bytes, std::uint32_t branching, bool integrity);

/// Associated data binding a node record to its slot.
std::array<std::uint8_t, 4> slot_aad(std::uint32_t slot);

/// Storage slot per node id under the tree key.
std::vector<std::uint32_t> node_slots(const Key128& tree_key, std::uint32_t node_count);

/// Places the nodes at PRP slots, fills inner pointers with child slots and
/// encrypts nodes under the tree key and values under the value key.
EncryptedIndex encrypt_index(const SecretKey& sk, const PlainTree& tree, std::span<const KeyValue> pairs,
                             bool integrity);

/// Decrypts every node record; the result is indexed by slot.
std::vector<PlainNode> decrypt_nodes(const Key128& tree_key, const EncryptedIndex& index);

/// Reassembles the logical tree (indexed by node id) from the container.
PlainTree decrypt_tree(const Key128& tree_key, const EncryptedIndex& index);

struct RangeToken {
  std::optional<ClientId> client_id;
  Ciphertext ct;

  std::size_t wire_size() const { return 1 + (client_id ? 4 : 0) + ct.wire_size(); }
  Bytes serialize() const;
  static RangeToken parse(ByteView bytes);
};

/// Encrypts lo || hi (little-endian) under the tree key. The client id, when
/// present, is bound as associated data.
RangeToken make_token(const Key128& tree_key, SearchKey lo, SearchKey hi, std::optional<ClientId> client_id = {});
KeyRange decode_token(const Aead& tree_aead, const RangeToken& token);
KeyRange decode_token(const Key128& tree_key, const RangeToken& token);

/// Throws AuthFailure on the first blob that fails to decrypt.
std::vector<Bytes> decrypt_results(const Key128& value_key, std::span<const Ciphertext> ciphers);

/// Message covered by the result MAC: label || lo || hi || multiset state.
Bytes result_mac_message(KeyRange range, const MultisetHash& result_values);

/// Recomputes the multiset hash over the plaintext values and compares
/// the MAC the enclave produced.
bool verify_result_mac(const Key128& tree_key, KeyRange range, std::span<const Bytes> values, const Mac& mac);

/// Client-side handle around a SecretKey.
class Client {
 public:
  explicit Client(SecretKey sk, std::optional<ClientId> id = {}) : sk_(sk), id_(id) {}

  const SecretKey& key() const { return sk_; }
  std::optional<ClientId> id() const { return id_; }

  RangeToken make_token(KeyRange range) const { return hsbt::make_token(sk_.tree, range.lo, range.hi, id_); }
  std::vector<Bytes> decrypt(std::span<const Ciphertext> ciphers) const { return decrypt_results(sk_.value, ciphers); }
  bool verify(KeyRange range, std::span<const Bytes> values, const Mac& mac) const {
    return verify_result_mac(sk_.tree, range, values, mac);
  }

 private:
  SecretKey sk_;
  std::optional<ClientId> id_;
};

/// JSON key file: {"tree_key": hex, "value_key": hex}.
void write_key_file(const std::filesystem::path& path, const SecretKey& sk);
SecretKey read_key_file(const std::filesystem::path& path);

}  // namespace hsbt
