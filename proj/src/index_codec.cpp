#include "hsbt/index_codec.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace hsbt {

namespace {

class Writer {
 public:
  explicit Writer(Bytes& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void bytes(ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes& out_;
};

class Reader {
 public:
  explicit Reader(ByteView in) : in_(in) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  ByteView bytes(std::size_t n) {
    need(n);
    ByteView v = in_.subspan(pos_, n);
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("truncated input");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  ByteView in_;
  std::size_t pos_ = 0;
};

}  // namespace

// ---------------------------------------------------------------------------
// Node records

std::size_t node_plain_size(std::uint32_t b, bool integrity) {
  std::size_t size = 4 + 1 + 2 + 4 * std::size_t{b - 1} + 4 * std::size_t{b};
  // child ids (4b) and value hashes (16(b-1)) share one region; for b >= 3
  // the hash layout is the larger one.
  if (integrity) size += std::max(4 * std::size_t{b}, 16 * std::size_t{b - 1});
  return size;
}

std::size_t node_record_size(std::uint32_t b, bool integrity) {
  return kNonceBytes + node_plain_size(b, integrity) + kTagBytes;
}

Bytes serialize_node(const PlainNode& node, std::uint32_t b, bool integrity) {
  if (node.keys.size() != b - 1 || node.pointers.size() != b) throw FormatError("node not padded to branching");
  Bytes out;
  out.reserve(node_plain_size(b, integrity));
  Writer w(out);
  w.u32(node.id);
  w.u8(node.is_leaf ? node_flags::kLeaf : 0);
  w.u16(node.key_count);
  for (SearchKey k : node.keys) w.u32(k);
  for (std::uint32_t p : node.pointers) w.u32(p);
  if (integrity) {
    const std::size_t region_start = out.size();
    if (node.is_leaf) {
      if (node.value_hashes.size() != b - 1) throw FormatError("leaf lacks value hashes");
      for (const Block& h : node.value_hashes) w.bytes(h);
    } else {
      if (node.child_ids.size() != b) throw FormatError("inner node lacks child ids");
      for (NodeId c : node.child_ids) w.u32(c);
    }
    out.resize(region_start + (node_plain_size(b, true) - node_plain_size(b, false)), 0);
  }
  return out;
}

PlainNode parse_node(ByteView bytes, std::uint32_t b, bool integrity) {
  if (bytes.size() != node_plain_size(b, integrity)) throw FormatError("node record has wrong size");
  Reader r(bytes);
  PlainNode n;
  n.id = r.u32();
  n.is_leaf = (r.u8() & node_flags::kLeaf) != 0;
  n.key_count = r.u16();
  if (n.key_count > b - 1) throw FormatError("node key count exceeds branching");
  n.keys.resize(b - 1);
  for (SearchKey& k : n.keys) k = r.u32();
  n.pointers.resize(b);
  for (std::uint32_t& p : n.pointers) p = r.u32();
  if (integrity) {
    if (n.is_leaf) {
      n.value_hashes.resize(b - 1);
      for (Block& h : n.value_hashes) {
        ByteView v = r.bytes(16);
        std::copy(v.begin(), v.end(), h.begin());
      }
    } else {
      n.child_ids.resize(b);
      for (NodeId& c : n.child_ids) c = r.u32();
    }
  }
  return n;
}

std::array<std::uint8_t, 4> slot_aad(std::uint32_t slot) {
  return {static_cast<std::uint8_t>(slot), static_cast<std::uint8_t>(slot >> 8), static_cast<std::uint8_t>(slot >> 16),
          static_cast<std::uint8_t>(slot >> 24)};
}

std::vector<std::uint32_t> node_slots(const Key128& tree_key, std::uint32_t node_count) {
  const SmallDomainPrp prp(tree_key, node_count);
  std::vector<std::uint32_t> slots(node_count);
  for (std::uint32_t id = 0; id < node_count; ++id) slots[id] = static_cast<std::uint32_t>(prp.apply(id));
  return slots;
}

// ---------------------------------------------------------------------------
// Container

ByteView EncryptedIndex::node_record(std::uint32_t slot) const {
  if (slot >= header.node_count) throw FormatError("node slot out of range");
  return ByteView(node_region).subspan(std::size_t{slot} * header.node_record_size, header.node_record_size);
}

std::span<std::uint8_t> EncryptedIndex::mutable_node_record(std::uint32_t slot) {
  if (slot >= header.node_count) throw FormatError("node slot out of range");
  return std::span<std::uint8_t>(node_region).subspan(std::size_t{slot} * header.node_record_size,
                                                      header.node_record_size);
}

EncryptedIndex encrypt_index(const SecretKey& sk, const PlainTree& tree, std::span<const KeyValue> pairs,
                             bool integrity) {
  if (pairs.size() != tree.value_slot.size()) throw DomainError("pair count does not match tree");
  const std::uint32_t b = tree.branching;
  const auto node_count = static_cast<std::uint32_t>(tree.nodes.size());
  const std::vector<std::uint32_t> slots = node_slots(sk.tree, node_count);

  EncryptedIndex index;
  IndexHeader& h = index.header;
  h.branching = b;
  h.value_count = static_cast<std::uint32_t>(pairs.size());
  h.node_count = node_count;
  h.integrity = integrity;
  h.node_record_size = static_cast<std::uint32_t>(node_record_size(b, integrity));
  h.root_slot = slots[tree.root_id];

  index.node_region.assign(std::size_t{node_count} * h.node_record_size, 0);
  const Aead node_aead(sk.tree);
  for (const PlainNode& node : tree.nodes) {
    PlainNode placed = node;
    if (!placed.is_leaf) {
      for (std::size_t i = 0; i <= placed.key_count; ++i) placed.pointers[i] = slots[placed.child_ids[i]];
    }
    const std::uint32_t slot = slots[node.id];
    const Ciphertext c = node_aead.encrypt(serialize_node(placed, b, integrity), slot_aad(slot));
    c.serialize_into(index.mutable_node_record(slot).data());
  }

  index.values.resize(pairs.size());
  const Aead value_aead(sk.value);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    index.values[tree.value_slot[i]] = value_aead.encrypt(pairs[i].value, {});
  }
  return index;
}

std::vector<PlainNode> decrypt_nodes(const Key128& tree_key, const EncryptedIndex& index) {
  const Aead aead(tree_key);
  const IndexHeader& h = index.header;
  std::vector<PlainNode> out;
  out.reserve(h.node_count);
  for (std::uint32_t slot = 0; slot < h.node_count; ++slot) {
    out.push_back(parse_node(aead.decrypt_wire(index.node_record(slot), slot_aad(slot)), h.branching, h.integrity));
  }
  return out;
}

PlainTree decrypt_tree(const Key128& tree_key, const EncryptedIndex& index) {
  const IndexHeader& h = index.header;
  std::vector<PlainNode> by_slot = decrypt_nodes(tree_key, index);
  PlainTree tree;
  tree.branching = h.branching;
  tree.nodes.resize(h.node_count);
  std::vector<NodeId> id_of_slot(h.node_count);
  for (std::uint32_t slot = 0; slot < h.node_count; ++slot) {
    const NodeId id = by_slot[slot].id;
    if (id >= h.node_count) throw FormatError("node id out of range");
    id_of_slot[slot] = id;
  }
  tree.root_id = id_of_slot[h.root_slot];
  for (std::uint32_t slot = 0; slot < h.node_count; ++slot) {
    PlainNode& n = by_slot[slot];
    if (!n.is_leaf) {
      n.child_ids.assign(h.branching, kDummyPointer);
      for (std::size_t i = 0; i <= n.key_count; ++i) n.child_ids[i] = id_of_slot.at(n.pointers[i]);
      std::fill(n.pointers.begin(), n.pointers.end(), kDummyPointer);
    }
    tree.nodes[n.id] = std::move(n);
  }
  std::uint32_t height = 1;
  for (NodeId id = tree.root_id; !tree.nodes[id].is_leaf; id = tree.nodes[id].child_ids[0]) ++height;
  tree.height = height;
  return tree;
}

Bytes EncryptedIndex::serialize() const {
  Bytes out;
  out.reserve(kHeaderBytes + node_region.size() + values.size() * 64);
  Writer w(out);
  for (char c : kIndexMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(header.version);
  w.u32(header.branching);
  w.u32(header.value_count);
  w.u32(header.node_count);
  w.u8(header.key_width);
  w.u8(header.integrity ? 1 : 0);
  w.u32(header.node_record_size);
  w.u32(header.root_slot);
  w.bytes(node_region);
  for (const Ciphertext& c : values) {
    w.u32(static_cast<std::uint32_t>(c.wire_size()));
    w.bytes(c.serialize());
  }
  return out;
}

EncryptedIndex EncryptedIndex::parse(ByteView bytes) {
  Reader r(bytes);
  ByteView magic = r.bytes(sizeof(kIndexMagic));
  if (!std::equal(magic.begin(), magic.end(), reinterpret_cast<const std::uint8_t*>(kIndexMagic))) {
    throw FormatError("bad container magic");
  }
  EncryptedIndex index;
  IndexHeader& h = index.header;
  h.version = r.u16();
  if (h.version != kIndexVersion) throw FormatError("unsupported container version");
  h.branching = r.u32();
  h.value_count = r.u32();
  h.node_count = r.u32();
  h.key_width = r.u8();
  h.integrity = r.u8() != 0;
  h.node_record_size = r.u32();
  h.root_slot = r.u32();
  if (h.key_width != 32) throw FormatError("only 32-bit keys are supported");
  if (h.branching < 3 || h.node_count == 0 || h.root_slot >= h.node_count ||
      h.node_record_size != node_record_size(h.branching, h.integrity)) {
    throw FormatError("inconsistent container header");
  }
  ByteView region = r.bytes(std::size_t{h.node_count} * h.node_record_size);
  index.node_region.assign(region.begin(), region.end());
  index.values.reserve(h.value_count);
  for (std::uint32_t i = 0; i < h.value_count; ++i) {
    const std::uint32_t len = r.u32();
    index.values.push_back(Ciphertext::parse(r.bytes(len)));
  }
  if (!r.done()) throw FormatError("trailing bytes after value region");
  return index;
}

void EncryptedIndex::write_file(const std::filesystem::path& path) const {
  const Bytes bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to " + path.string() + " failed");
}

EncryptedIndex EncryptedIndex::read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(bytes);
}

// ---------------------------------------------------------------------------
// Tokens

namespace {

Bytes token_aad(std::optional<ClientId> client_id) {
  Bytes aad;
  if (client_id) {
    Writer w(aad);
    w.u32(*client_id);
  }
  return aad;
}

}  // namespace

Bytes RangeToken::serialize() const {
  Bytes out;
  Writer w(out);
  w.u8(client_id ? 1 : 0);
  if (client_id) w.u32(*client_id);
  w.bytes(ct.serialize());
  return out;
}

RangeToken RangeToken::parse(ByteView bytes) {
  Reader r(bytes);
  RangeToken t;
  const std::uint8_t has_client = r.u8();
  if (has_client > 1) throw FormatError("bad token flag");
  if (has_client) t.client_id = r.u32();
  t.ct = Ciphertext::parse(bytes.subspan(has_client ? 5 : 1));
  return t;
}

RangeToken make_token(const Key128& tree_key, SearchKey lo, SearchKey hi, std::optional<ClientId> client_id) {
  if (lo > hi) throw DomainError("range start exceeds range end");
  Bytes plain;
  Writer w(plain);
  w.u32(lo);
  w.u32(hi);
  return RangeToken{client_id, pse_enc(tree_key, plain, token_aad(client_id))};
}

KeyRange decode_token(const Aead& tree_aead, const RangeToken& token) {
  const Bytes plain = tree_aead.decrypt(token.ct, token_aad(token.client_id));
  if (plain.size() != 8) throw FormatError("token plaintext has wrong length");
  Reader r(plain);
  KeyRange range{r.u32(), r.u32()};
  if (range.lo > range.hi) throw DomainError("token range is empty");
  return range;
}

KeyRange decode_token(const Key128& tree_key, const RangeToken& token) {
  return decode_token(Aead(tree_key), token);
}

// ---------------------------------------------------------------------------
// Client-side results

std::vector<Bytes> decrypt_results(const Key128& value_key, std::span<const Ciphertext> ciphers) {
  const Aead aead(value_key);
  std::vector<Bytes> out;
  out.reserve(ciphers.size());
  for (const Ciphertext& c : ciphers) out.push_back(aead.decrypt(c, {}));
  return out;
}

Bytes result_mac_message(KeyRange range, const MultisetHash& result_values) {
  static constexpr char kLabel[] = "hsbt/result";
  Bytes msg(kLabel, kLabel + sizeof(kLabel) - 1);
  Writer w(msg);
  w.u32(range.lo);
  w.u32(range.hi);
  w.bytes(result_values.serialize());
  return msg;
}

bool verify_result_mac(const Key128& tree_key, KeyRange range, std::span<const Bytes> values, const Mac& tag) {
  const MultisetHasher hasher(tree_key);
  MultisetHash h = hasher.empty();
  for (const Bytes& v : values) h = hasher.add(h, digest128(v));
  return mac_equal(mac(tree_key, result_mac_message(range, h)), tag);
}

// ---------------------------------------------------------------------------
// Key files

void write_key_file(const std::filesystem::path& path, const SecretKey& sk) {
  const nlohmann::json j = {{"tree_key", to_hex(sk.tree.view())}, {"value_key", to_hex(sk.value.view())}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

SecretKey read_key_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("key file: ") + e.what());
  }
  auto load = [&](const char* field) {
    if (!j.contains(field) || !j[field].is_string()) throw FormatError(std::string("key file lacks ") + field);
    const Bytes raw = from_hex(j[field].get<std::string>());
    if (raw.size() != kKeyBytes) throw FormatError(std::string("key file: ") + field + " is not 128 bits");
    Key128 k;
    std::copy(raw.begin(), raw.end(), k.bytes.begin());
    return k;
  };
  return SecretKey{load("tree_key"), load("value_key")};
}

}  // namespace hsbt
