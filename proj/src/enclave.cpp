#include "hsbt/enclave.hpp"

#include <string>

namespace hsbt {

namespace {

// Branch-free comparisons; each returns 0 or 1.
inline std::uint32_t ct_le(std::uint32_t a, std::uint32_t b) {
  return static_cast<std::uint32_t>((std::uint64_t{b} - std::uint64_t{a}) >> 63) ^ 1u;
}
inline std::uint32_t ct_lt(std::uint32_t a, std::uint32_t b) {
  return static_cast<std::uint32_t>((std::uint64_t{a} - std::uint64_t{b}) >> 63);
}
inline std::uint32_t ct_eq(std::uint32_t a, std::uint32_t b) {
  return static_cast<std::uint32_t>((std::uint64_t{a ^ b} - 1) >> 63);
}

std::array<std::uint8_t, 4> id_bytes(NodeId id) { return slot_aad(id); }

}  // namespace

std::vector<SlotMatch> oblivious_node_scan(const PlainNode& node, KeyRange range, ScanCounters* counters) {
  const std::size_t b = node.pointers.size();
  const std::uint32_t key_count = node.key_count;
  const std::uint32_t leaf = node.is_leaf ? 1u : 0u;

  std::vector<SearchKey> keys(b - 1);
  for (std::size_t j = 0; j + 1 < b; ++j) keys[j] = node.keys[j];
  if (counters) counters->key_touches += b - 1;

  std::vector<SlotMatch> out(b);
  std::size_t n = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto idx = static_cast<std::uint32_t>(i);
    const SearchKey prev = i > 0 ? keys[i - 1] : kNegInfKey;
    const SearchKey cur = i + 1 < b ? keys[i] : kPosInfKey;

    const std::uint32_t lower = ct_eq(idx, 0) | ct_le(prev, range.hi);
    const std::uint32_t upper = ct_eq(idx, key_count) | ct_lt(range.lo, cur);
    const std::uint32_t inner_match = ct_le(idx, key_count) & lower & upper;

    const std::uint32_t leaf_live = (ct_eq(idx, 0) ^ 1u) & ct_le(idx, key_count);
    const std::uint32_t leaf_match = leaf_live & ct_le(range.lo, prev) & ct_le(prev, range.hi);

    const std::uint32_t match = (leaf & leaf_match) | ((leaf ^ 1u) & inner_match);
    out[n] = SlotMatch{static_cast<std::uint16_t>(i), node.pointers[i]};
    n += match;
  }
  if (counters) counters->pointer_touches += b;
  out.resize(n);
  return out;
}

Enclave::Enclave(EnclaveConfig config) : config_(config) {}

void Enclave::provision(ClientId client, const Key128& tree_key, NodeId root_id) {
  std::unique_lock lock(keys_mu_);
  key_table_[client] = ClientEntry{tree_key, root_id};
  if (!owner_) owner_ = client;
}

Enclave::ClientEntry Enclave::client_entry(ClientId client) const {
  std::shared_lock lock(keys_mu_);
  const auto it = key_table_.find(client);
  if (it == key_table_.end()) throw NoKey("no key provisioned for client " + std::to_string(client));
  return it->second;
}

Enclave::ClientEntry Enclave::owner_entry() const {
  std::shared_lock lock(keys_mu_);
  if (!owner_) throw NoKey("enclave has not been provisioned");
  return key_table_.at(*owner_);
}

Block Enclave::next_query_seed() {
  std::lock_guard lock(rng_mu_);
  return rng_.next_block();
}

#ifdef HSBT_SEED_HOOK
void Enclave::set_shuffle_seed(std::uint64_t seed) {
  std::lock_guard lock(rng_mu_);
  rng_ = Csprng(seed);
}
#endif

std::size_t Enclave::max_amount(const IndexHeader& header) const {
  return config_.reserved_space / header.node_record_size;
}

std::uint32_t Enclave::page_of_slot(std::uint32_t slot) const {
  std::shared_lock lock(tree_mu_);
  if (!resident_) throw Error("no resident tree");
  return static_cast<std::uint32_t>(std::size_t{slot} * resident_->plain_record_size / config_.page_size);
}

std::size_t Enclave::open_sessions() const {
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

bool Enclave::tree_loaded() const {
  std::shared_lock lock(tree_mu_);
  return resident_.has_value();
}

// ---------------------------------------------------------------------------
// Construction 1

void Enclave::load_tree_c1(const EncryptedIndex& index) {
  ecalls_.fetch_add(1);
  const ClientEntry owner = owner_entry();
  const IndexHeader& h = index.header;
  const std::size_t plain = node_plain_size(h.branching, h.integrity);
  const std::size_t needed = std::size_t{h.node_count} * plain;
  if (needed > config_.memory_budget) {
    throw CapacityExceeded("tree needs " + std::to_string(needed) + " bytes, budget is " +
                           std::to_string(config_.memory_budget));
  }
  ResidentTree tree;
  tree.branching = h.branching;
  tree.root_slot = h.root_slot;
  tree.plain_record_size = plain;
  tree.by_slot.reserve(h.node_count);
  const Aead aead(owner.key);
  for (std::uint32_t slot = 0; slot < h.node_count; ++slot) {
    const Bytes bytes = aead.decrypt_wire(index.node_record(slot), slot_aad(slot));
    node_decryptions_.fetch_add(1);
    tree.by_slot.push_back(parse_node(bytes, h.branching, h.integrity));
  }
  if (tree.by_slot[h.root_slot].id != owner.root_id) throw ProtocolViolation("header root slot does not hold the root");
  std::unique_lock lock(tree_mu_);
  resident_ = std::move(tree);
}

std::vector<std::uint32_t> Enclave::search_trusted_c1(const RangeToken& token, AccessTrace* os_view) {
  ecalls_.fetch_add(1);
  const ClientEntry client = client_entry(token.client_id.value_or(kDefaultClient));
  const KeyRange range = decode_token(client.key, token);

  std::shared_lock lock(tree_mu_);
  if (!resident_) throw Error("tree not loaded");
  const ResidentTree& tree = *resident_;
  Csprng rng(next_query_seed());

  std::vector<std::uint32_t> level{tree.root_slot};
  std::vector<std::uint32_t> next;
  std::vector<std::uint32_t> results;
  while (!level.empty()) {
    for (std::uint32_t slot : level) {
      if (os_view) {
        os_view->record_page(static_cast<std::uint32_t>(std::size_t{slot} * tree.plain_record_size / config_.page_size));
      }
      const PlainNode& node = tree.by_slot[slot];
      for (const SlotMatch& m : oblivious_node_scan(node, range)) {
        (node.is_leaf ? results : next).push_back(m.pointer);
      }
    }
    rng.shuffle(next);
    level.swap(next);
    next.clear();
  }
  rng.shuffle(results);
  if (os_view) {
    std::vector<TaggedPointer> out;
    out.reserve(results.size());
    for (std::uint32_t p : results) out.push_back({true, p});
    os_view->record_pointers(std::move(out));
  }
  return results;
}

// ---------------------------------------------------------------------------
// Construction 2

BatchAnswer Enclave::search_trusted_c2(const EncryptedIndex& host, const RangeToken& token,
                                       std::span<const std::uint32_t> slots, const std::optional<Nonce>& nonce,
                                       AccessTrace* os_view) {
  ecalls_.fetch_add(1);
  const ClientId client_id = token.client_id.value_or(kDefaultClient);
  const ClientEntry client = client_entry(client_id);
  const KeyRange range = decode_token(client.key, token);
  const ClientEntry owner = owner_entry();
  const IndexHeader& h = host.header;

  const std::size_t limit = max_amount(h);
  if (limit == 0) throw CapacityExceeded("reserved space holds no node record");
  if (slots.size() > limit) throw CapacityExceeded("batch exceeds maxAmount");

  // The session leaves the map while this batch runs; any abort simply
  // drops it, which deletes the nonce.
  std::optional<Session> session;
  Nonce session_nonce{};
  if (nonce) {
    std::lock_guard lock(sessions_mu_);
    auto node = sessions_.extract(*nonce);
    if (node.empty()) throw ProtocolViolation("unknown or busy session");
    session = std::move(node.mapped());
    session_nonce = *nonce;
    if (session->client != client_id || session->range != range) {
      throw ProtocolViolation("token does not belong to this session");
    }
  } else if (slots.empty()) {
    throw ProtocolViolation("empty batch without a session");
  }

  const Aead node_aead(owner.key);
  const bool integrity = h.integrity;
  std::optional<MultisetHasher> hasher;
  if (integrity) hasher.emplace(client.key);

  std::vector<TaggedPointer> out;
  for (const std::uint32_t slot : slots) {
    if (os_view) os_view->record_fetch(slot);
    if (slot >= h.node_count) throw ProtocolViolation("slot outside node region");
    const Bytes bytes = node_aead.decrypt_wire(host.node_record(slot), slot_aad(slot));
    node_decryptions_.fetch_add(1);
    const PlainNode node = parse_node(bytes, h.branching, integrity);

    if (!session) {
      if (node.id != owner.root_id) throw ProtocolViolation("first node is not the root");
      Session s;
      s.client = client_id;
      s.range = range;
      s.integrity = integrity;
      if (integrity) {
        s.expected_nodes_amount = 1;
        s.expected_nodes_hash = hasher->add(hasher->empty(), id_bytes(node.id));
      }
      session = s;
      random_bytes(session_nonce);
    }
    if (integrity) {
      session->received_nodes_hash = hasher->add(session->received_nodes_hash, id_bytes(node.id));
      if (--session->expected_nodes_amount < 0) throw ProtocolViolation("received more nodes than requested");
    }

    for (const SlotMatch& m : oblivious_node_scan(node, range)) {
      out.push_back({node.is_leaf, m.pointer});
      if (!integrity) continue;
      if (node.is_leaf) {
        session->result_values_hash = hasher->add(session->result_values_hash, node.value_hashes[m.slot - 1]);
      } else {
        session->expected_nodes_hash = hasher->add(session->expected_nodes_hash, id_bytes(node.child_ids[m.slot]));
        ++session->expected_nodes_amount;
      }
    }
  }

  if (integrity && session->expected_nodes_amount == 0 &&
      !mset_eq(session->expected_nodes_hash, session->received_nodes_hash)) {
    throw ProtocolViolation("received nodes differ from requested nodes");
  }

  Csprng rng(next_query_seed());
  rng.shuffle(out);
  if (os_view) os_view->record_pointers(out);

  {
    std::lock_guard lock(sessions_mu_);
    sessions_.emplace(session_nonce, std::move(*session));
  }
  return BatchAnswer{std::move(out), session_nonce};
}

std::optional<Mac> Enclave::finalize_session(const Nonce& nonce) {
  ecalls_.fetch_add(1);
  Session session;
  {
    std::lock_guard lock(sessions_mu_);
    auto node = sessions_.extract(nonce);
    if (node.empty()) throw ProtocolViolation("unknown or busy session");
    session = std::move(node.mapped());
  }
  if (!session.integrity) return std::nullopt;
  if (session.expected_nodes_amount != 0) throw ProtocolViolation("requested nodes were not delivered");
  if (!mset_eq(session.expected_nodes_hash, session.received_nodes_hash)) {
    throw ProtocolViolation("received nodes differ from requested nodes");
  }
  const ClientEntry client = client_entry(session.client);
  return mac(client.key, result_mac_message(session.range, session.result_values_hash));
}

}  // namespace hsbt
