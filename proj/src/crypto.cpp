#include "hsbt/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <algorithm>
#include <bit>
#include <cstring>

namespace hsbt {

namespace {

struct CtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter>;

CtxPtr new_ctx() {
  CtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw Error("EVP_CIPHER_CTX_new failed");
  return ctx;
}

void store_le64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t load_le64(const std::uint8_t* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Keys and randomness

void random_bytes(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw EntropyError("RAND_bytes failed");
  }
}

Key128 pse_gen(unsigned security_bits) {
  if (security_bits != 128) throw Error("only 128-bit keys are supported");
  Key128 k;
  random_bytes(k.bytes);
  return k;
}

SecretKey SecretKey::generate() {
  SecretKey sk{pse_gen(), pse_gen()};
  while (sk.tree == sk.value) sk.value = pse_gen();
  return sk;
}

Key128 derive_key(const Key128& master, std::string_view label) {
  const Mac full = mac(master, ByteView(reinterpret_cast<const std::uint8_t*>(label.data()), label.size()));
  Key128 k;
  std::copy_n(full.begin(), kKeyBytes, k.bytes.begin());
  return k;
}

// ---------------------------------------------------------------------------
// Ciphertext wire format

Bytes Ciphertext::serialize() const {
  Bytes out(wire_size());
  serialize_into(out.data());
  return out;
}

void Ciphertext::serialize_into(std::uint8_t* out) const {
  std::memcpy(out, nonce.data(), kNonceBytes);
  if (!body.empty()) std::memcpy(out + kNonceBytes, body.data(), body.size());
  std::memcpy(out + kNonceBytes + body.size(), tag.data(), kTagBytes);
}

Ciphertext Ciphertext::parse(ByteView wire) {
  if (wire.size() < kNonceBytes + kTagBytes) throw FormatError("ciphertext shorter than nonce and tag");
  Ciphertext c;
  std::copy_n(wire.begin(), kNonceBytes, c.nonce.begin());
  c.body.assign(wire.begin() + kNonceBytes, wire.end() - kTagBytes);
  std::copy(wire.end() - kTagBytes, wire.end(), c.tag.begin());
  return c;
}

// ---------------------------------------------------------------------------
// AES-128-GCM

struct Aead::Impl {
  CtxPtr enc = new_ctx();
  CtxPtr dec = new_ctx();
};

Aead::Aead(const Key128& key) : impl_(std::make_unique<Impl>()) {
  if (EVP_EncryptInit_ex(impl_->enc.get(), EVP_aes_128_gcm(), nullptr, key.bytes.data(), nullptr) != 1 ||
      EVP_DecryptInit_ex(impl_->dec.get(), EVP_aes_128_gcm(), nullptr, key.bytes.data(), nullptr) != 1) {
    throw Error("AES-GCM key setup failed");
  }
}

Aead::~Aead() = default;
Aead::Aead(Aead&&) noexcept = default;
Aead& Aead::operator=(Aead&&) noexcept = default;

Ciphertext Aead::encrypt(ByteView plaintext, ByteView aad) const {
  Ciphertext c;
  random_bytes(c.nonce);
  c.body.resize(plaintext.size());
  EVP_CIPHER_CTX* ctx = impl_->enc.get();
  int len = 0;
  bool ok = EVP_EncryptInit_ex(ctx, nullptr, nullptr, nullptr, c.nonce.data()) == 1;
  if (ok && !aad.empty()) ok = EVP_EncryptUpdate(ctx, nullptr, &len, aad.data(), static_cast<int>(aad.size())) == 1;
  if (ok && !plaintext.empty()) {
    ok = EVP_EncryptUpdate(ctx, c.body.data(), &len, plaintext.data(), static_cast<int>(plaintext.size())) == 1;
  }
  if (ok) ok = EVP_EncryptFinal_ex(ctx, c.body.data() + c.body.size(), &len) == 1;
  if (ok) ok = EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_GET_TAG, static_cast<int>(kTagBytes), c.tag.data()) == 1;
  if (!ok) throw Error("AES-GCM encryption failed");
  return c;
}

Bytes Aead::decrypt_wire(ByteView wire, ByteView aad) const {
  if (wire.size() < kNonceBytes + kTagBytes) throw AuthFailure("ciphertext too short");
  const std::size_t body_len = wire.size() - kNonceBytes - kTagBytes;
  const std::uint8_t* body = wire.data() + kNonceBytes;
  std::array<std::uint8_t, kTagBytes> tag;
  std::memcpy(tag.data(), body + body_len, kTagBytes);

  Bytes out(body_len);
  EVP_CIPHER_CTX* ctx = impl_->dec.get();
  int len = 0;
  bool ok = EVP_DecryptInit_ex(ctx, nullptr, nullptr, nullptr, wire.data()) == 1;
  if (ok && !aad.empty()) ok = EVP_DecryptUpdate(ctx, nullptr, &len, aad.data(), static_cast<int>(aad.size())) == 1;
  if (ok && body_len > 0) ok = EVP_DecryptUpdate(ctx, out.data(), &len, body, static_cast<int>(body_len)) == 1;
  if (ok) ok = EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_TAG, static_cast<int>(kTagBytes), tag.data()) == 1;
  if (ok) ok = EVP_DecryptFinal_ex(ctx, out.data() + body_len, &len) == 1;
  if (!ok) throw AuthFailure("authentication failed");
  return out;
}

Bytes Aead::decrypt(const Ciphertext& c, ByteView aad) const {
  return decrypt_wire(c.serialize(), aad);
}

Ciphertext pse_enc(const Key128& key, ByteView plaintext, ByteView aad) {
  return Aead(key).encrypt(plaintext, aad);
}

Bytes pse_dec(const Key128& key, const Ciphertext& c, ByteView aad) {
  return Aead(key).decrypt(c, aad);
}

// ---------------------------------------------------------------------------
// PRF

struct Prf::Impl {
  CtxPtr ctx = new_ctx();
};

Prf::Prf(const Key128& key) : impl_(std::make_unique<Impl>()) {
  if (EVP_EncryptInit_ex(impl_->ctx.get(), EVP_aes_128_ecb(), nullptr, key.bytes.data(), nullptr) != 1) {
    throw Error("AES key setup failed");
  }
  EVP_CIPHER_CTX_set_padding(impl_->ctx.get(), 0);
}

Prf::~Prf() = default;
Prf::Prf(Prf&&) noexcept = default;
Prf& Prf::operator=(Prf&&) noexcept = default;

Block Prf::eval_block(const Block& in) const {
  Block out;
  int len = 0;
  if (EVP_EncryptUpdate(impl_->ctx.get(), out.data(), &len, in.data(), 16) != 1 || len != 16) {
    throw Error("AES block evaluation failed");
  }
  return out;
}

Block Prf::eval(ByteView msg) const {
  // Length prefix makes raw CBC-MAC secure across message lengths.
  Block state{};
  std::uint8_t prefix[8];
  store_le64(prefix, msg.size());
  std::size_t fill = 0;
  auto absorb = [&](std::uint8_t byte) {
    state[fill++] ^= byte;
    if (fill == 16) {
      state = eval_block(state);
      fill = 0;
    }
  };
  for (std::uint8_t b : prefix) absorb(b);
  for (std::uint8_t b : msg) absorb(b);
  if (fill != 0) state = eval_block(state);
  return state;
}

// ---------------------------------------------------------------------------
// Small-domain PRP

SmallDomainPrp::SmallDomainPrp(const Key128& key, std::uint64_t domain_size)
    : prf_(derive_key(key, "hsbt/prp")), domain_(domain_size) {
  if (domain_size == 0) throw DomainError("PRP domain must be non-empty");
  unsigned bits = domain_size <= 1 ? 0 : static_cast<unsigned>(std::bit_width(domain_size - 1));
  if (bits < 2) bits = 2;
  if (bits % 2 != 0) ++bits;
  half_bits_ = bits / 2;
  half_mask_ = (std::uint64_t{1} << half_bits_) - 1;
}

std::uint64_t SmallDomainPrp::round_value(unsigned round, std::uint64_t half) const {
  Block in{};
  in[0] = 'F';
  in[1] = static_cast<std::uint8_t>(round);
  store_le64(in.data() + 2, domain_);
  for (int i = 0; i < 6; ++i) in[10 + i] = static_cast<std::uint8_t>(half >> (8 * i));
  return load_le64(prf_.eval_block(in).data()) & half_mask_;
}

std::uint64_t SmallDomainPrp::permute_once(std::uint64_t x) const {
  std::uint64_t left = x >> half_bits_;
  std::uint64_t right = x & half_mask_;
  for (unsigned r = 0; r < 4; ++r) {
    const std::uint64_t next = left ^ round_value(r, right);
    left = right;
    right = next;
  }
  return (left << half_bits_) | right;
}

std::uint64_t SmallDomainPrp::unpermute_once(std::uint64_t y) const {
  std::uint64_t left = y >> half_bits_;
  std::uint64_t right = y & half_mask_;
  for (unsigned r = 4; r-- > 0;) {
    const std::uint64_t prev = right ^ round_value(r, left);
    right = left;
    left = prev;
  }
  return (left << half_bits_) | right;
}

std::uint64_t SmallDomainPrp::apply(std::uint64_t x) const {
  if (x >= domain_) throw DomainError("PRP input outside domain");
  if (domain_ == 1) return 0;
  std::uint64_t y = permute_once(x);
  while (y >= domain_) y = permute_once(y);
  return y;
}

std::uint64_t SmallDomainPrp::invert(std::uint64_t y) const {
  if (y >= domain_) throw DomainError("PRP input outside domain");
  if (domain_ == 1) return 0;
  std::uint64_t x = unpermute_once(y);
  while (x >= domain_) x = unpermute_once(x);
  return x;
}

std::uint64_t prp_apply(const Key128& key, std::uint64_t domain_size, std::uint64_t x) {
  return SmallDomainPrp(key, domain_size).apply(x);
}

// ---------------------------------------------------------------------------
// Multiset hash

std::array<std::uint8_t, 24> MultisetHash::serialize() const {
  std::array<std::uint8_t, 24> out{};
  std::copy(accumulator.begin(), accumulator.end(), out.begin());
  store_le64(out.data() + 16, count);
  return out;
}

MultisetHasher::MultisetHasher(const Key128& key) : prf_(derive_key(key, "hsbt/mset")) {}

MultisetHash MultisetHasher::add(const MultisetHash& h, ByteView elem) const {
  MultisetHash out = h;
  const Block v = prf_.eval(elem);
  for (std::size_t i = 0; i < v.size(); ++i) out.accumulator[i] ^= v[i];
  ++out.count;
  return out;
}

MultisetHash mset_add(const MultisetHasher& hasher, const MultisetHash& h, ByteView elem) {
  return hasher.add(h, elem);
}

bool mset_eq(const MultisetHash& a, const MultisetHash& b) { return a == b; }

// ---------------------------------------------------------------------------
// MAC and digests

Mac mac(const Key128& key, ByteView msg) {
  Mac out{};
  unsigned int len = 0;
  if (HMAC(EVP_sha256(), key.bytes.data(), static_cast<int>(key.bytes.size()), msg.data(), msg.size(), out.data(),
           &len) == nullptr ||
      len != kMacBytes) {
    throw Error("HMAC failed");
  }
  return out;
}

bool mac_equal(const Mac& a, const Mac& b) {
  std::uint8_t diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff |= static_cast<std::uint8_t>(a[i] ^ b[i]);
  return diff == 0;
}

Block digest128(ByteView data) {
  std::array<std::uint8_t, SHA256_DIGEST_LENGTH> full;
  SHA256(data.data(), data.size(), full.data());
  Block out;
  std::copy_n(full.begin(), out.size(), out.begin());
  return out;
}

std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (std::uint8_t b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw FormatError("odd-length hex string");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw FormatError("invalid hex digit");
  };
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSPRNG

namespace {

Key128 key_from_block(const Block& b) {
  Key128 k;
  std::copy(b.begin(), b.end(), k.bytes.begin());
  return k;
}

Block os_seed() {
  Block b;
  random_bytes(b);
  return b;
}

Block seed_block(std::uint64_t seed) {
  Block b{};
  b[0] = 'S';
  store_le64(b.data() + 8, seed);
  return b;
}

}  // namespace

Csprng::Csprng() : Csprng(os_seed()) {}
Csprng::Csprng(const Block& seed) : prf_(key_from_block(seed)) {}
Csprng::Csprng(std::uint64_t seed) : Csprng(seed_block(seed)) {}

void Csprng::refill() {
  Block ctr{};
  store_le64(ctr.data(), counter_++);
  buffer_ = prf_.eval_block(ctr);
  used_ = 0;
}

std::uint64_t Csprng::next() {
  if (used_ + 8 > buffer_.size()) refill();
  const std::uint64_t v = load_le64(buffer_.data() + used_);
  used_ += 8;
  return v;
}

Block Csprng::next_block() {
  Block b;
  store_le64(b.data(), next());
  store_le64(b.data() + 8, next());
  return b;
}

std::uint64_t Csprng::uniform(std::uint64_t bound) {
  if (bound == 0) throw DomainError("uniform bound must be nonzero");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = max() - (max() % bound);
  std::uint64_t v;
  do {
    v = next();
  } while (v >= limit);
  return v % bound;
}

}  // namespace hsbt
