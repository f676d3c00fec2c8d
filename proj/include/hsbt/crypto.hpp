#pragma once

// Cryptographic building blocks: AES-128-GCM probabilistic encryption,
// an AES-based PRF, a small-domain PRP, MSet-XOR multiset hashing and
// HMAC-SHA256. Everything is backed by OpenSSL libcrypto.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsbt/error.hpp"

namespace hsbt {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;
using Block = std::array<std::uint8_t, 16>;

inline constexpr std::size_t kKeyBytes = 16;
inline constexpr std::size_t kNonceBytes = 12;
inline constexpr std::size_t kTagBytes = 16;
inline constexpr std::size_t kMacBytes = 32;

struct Key128 {
  std::array<std::uint8_t, kKeyBytes> bytes{};

  ByteView view() const { return bytes; }
  auto operator<=>(const Key128&) const = default;
};

/// The client's secret: the tree key is shared with the enclave, the value
/// key never leaves the client.
struct SecretKey {
  Key128 tree;
  Key128 value;

  /// Draws both halves from the OS CSPRNG and guarantees they differ.
  static SecretKey generate();
};

using Mac = std::array<std::uint8_t, kMacBytes>;

/// Wire layout: nonce(12) || body || tag(16).
struct Ciphertext {
  std::array<std::uint8_t, kNonceBytes> nonce{};
  Bytes body;
  std::array<std::uint8_t, kTagBytes> tag{};

  std::size_t wire_size() const { return kNonceBytes + body.size() + kTagBytes; }
  Bytes serialize() const;
  void serialize_into(std::uint8_t* out) const;
  static Ciphertext parse(ByteView wire);

  bool operator==(const Ciphertext&) const = default;
};

void random_bytes(std::span<std::uint8_t> out);

/// PSE.Gen. Only 128-bit security is supported.
Key128 pse_gen(unsigned security_bits = 128);

/// Reusable AES-128-GCM context for one key. Not thread-safe; create one
/// per thread or per query.
class Aead {
 public:
  explicit Aead(const Key128& key);
  ~Aead();
  Aead(Aead&&) noexcept;
  Aead& operator=(Aead&&) noexcept;
  Aead(const Aead&) = delete;
  Aead& operator=(const Aead&) = delete;

  Ciphertext encrypt(ByteView plaintext, ByteView aad) const;
  /// Throws AuthFailure when (key, aad, ciphertext) is not authentic.
  Bytes decrypt(const Ciphertext& c, ByteView aad) const;
  /// Decrypts a wire-format ciphertext directly from a shared region.
  Bytes decrypt_wire(ByteView wire, ByteView aad) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Ciphertext pse_enc(const Key128& key, ByteView plaintext, ByteView aad);
Bytes pse_dec(const Key128& key, const Ciphertext& c, ByteView aad);

/// Keyed PRF on top of AES-128. `eval_block` is a single block cipher call;
/// `eval` is a length-prefixed CBC-MAC, which is a PRF on variable-length
/// input. Not thread-safe.
class Prf {
 public:
  explicit Prf(const Key128& key);
  ~Prf();
  Prf(Prf&&) noexcept;
  Prf& operator=(Prf&&) noexcept;
  Prf(const Prf&) = delete;
  Prf& operator=(const Prf&) = delete;

  Block eval_block(const Block& in) const;
  Block eval(ByteView msg) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// HMAC-SHA256(key, label) truncated to 128 bits.
Key128 derive_key(const Key128& master, std::string_view label);

/// Pseudorandom permutation of [0, domain_size): 4-round Feistel on an even
/// number of bits >= ceil(log2 domain_size), cycle-walked back into range.
class SmallDomainPrp {
 public:
  SmallDomainPrp(const Key128& key, std::uint64_t domain_size);

  std::uint64_t domain_size() const { return domain_; }
  std::uint64_t apply(std::uint64_t x) const;
  std::uint64_t invert(std::uint64_t y) const;

 private:
  std::uint64_t round_value(unsigned round, std::uint64_t half) const;
  std::uint64_t permute_once(std::uint64_t x) const;
  std::uint64_t unpermute_once(std::uint64_t y) const;

  Prf prf_;
  std::uint64_t domain_;
  unsigned half_bits_ = 0;
  std::uint64_t half_mask_ = 0;
};

std::uint64_t prp_apply(const Key128& key, std::uint64_t domain_size, std::uint64_t x);

/// MSet-XOR-Hash state: XOR of PRF outputs plus an explicit element count.
struct MultisetHash {
  Block accumulator{};
  std::uint64_t count = 0;

  bool operator==(const MultisetHash&) const = default;
  /// accumulator(16) || count(8, little-endian)
  std::array<std::uint8_t, 24> serialize() const;
};

class MultisetHasher {
 public:
  explicit MultisetHasher(const Key128& key);

  MultisetHash empty() const { return {}; }
  [[nodiscard]] MultisetHash add(const MultisetHash& h, ByteView elem) const;

 private:
  Prf prf_;
};

[[nodiscard]] MultisetHash mset_add(const MultisetHasher& hasher, const MultisetHash& h, ByteView elem);
bool mset_eq(const MultisetHash& a, const MultisetHash& b);

/// HMAC-SHA256.
Mac mac(const Key128& key, ByteView msg);
bool mac_equal(const Mac& a, const Mac& b);

/// SHA-256 truncated to 128 bits; used for leaf value digests.
Block digest128(ByteView data);

std::string to_hex(ByteView data);
Bytes from_hex(std::string_view hex);

/// AES-CTR keystream generator. Seeded either from the OS or explicitly, in
/// which case its output is reproducible.
class Csprng {
 public:
  using result_type = std::uint64_t;

  Csprng();
  explicit Csprng(const Block& seed);
  explicit Csprng(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return next(); }

  std::uint64_t next();
  /// Uniform in [0, bound). bound must be nonzero.
  std::uint64_t uniform(std::uint64_t bound);
  Block next_block();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  void refill();

  Prf prf_;
  std::uint64_t counter_ = 0;
  Block buffer_{};
  std::size_t used_ = 16;
};

}  // namespace hsbt
