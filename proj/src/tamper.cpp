#include "hsbt/tamper.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <stdexcept>

#include "hsbt/server.hpp"

namespace hsbt {

std::string_view to_string(TamperKind kind) {
  switch (kind) {
    case TamperKind::ModifyNode: return "modify-node";
    case TamperKind::ModifyValue: return "modify-value";
    case TamperKind::SwapNodes: return "swap-nodes";
    case TamperKind::DropRequestedNode: return "drop-requested-node";
    case TamperKind::WrongFirstNode: return "wrong-first-node";
    case TamperKind::WithholdResults: return "withhold-results";
    case TamperKind::ReplayToken: return "replay-token";
  }
  return "?";
}

std::optional<TamperKind> parse_tamper_kind(std::string_view name) {
  for (TamperKind k : kAllTamperKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::EnclaveAbort: return "EnclaveAbort";
    case Outcome::ClientReject: return "ClientReject";
    case Outcome::Accepted: return "Accepted";
  }
  return "?";
}

namespace {

using BatchHook = std::function<void(std::vector<std::uint32_t>& batch, std::size_t batch_no)>;

struct DriverRun {
  std::vector<std::uint32_t> fetched;  // slots actually sent, in order
  std::vector<std::uint32_t> pointers;
  std::vector<Ciphertext> values;
  std::optional<Mac> mac;
};

// Same FIFO loop as UntrustedServer::search_c2, with a hook on each batch.
DriverRun drive(const EncryptedIndex& index, Enclave& enclave, const RangeToken& token, const BatchHook& hook) {
  const std::size_t max_amount = enclave.max_amount(index.header);
  std::deque<std::uint32_t> queue{index.header.root_slot};
  std::optional<Nonce> nonce;
  DriverRun run;
  for (std::size_t batch_no = 0; !queue.empty(); ++batch_no) {
    const std::size_t take = std::min(queue.size(), max_amount);
    std::vector<std::uint32_t> batch(queue.begin(), queue.begin() + static_cast<std::ptrdiff_t>(take));
    queue.erase(queue.begin(), queue.begin() + static_cast<std::ptrdiff_t>(take));
    if (hook) hook(batch, batch_no);
    run.fetched.insert(run.fetched.end(), batch.begin(), batch.end());

    BatchAnswer answer = enclave.search_trusted_c2(index, token, batch, nonce, nullptr);
    nonce = answer.nonce;
    for (const TaggedPointer& p : answer.pointers) {
      if (p.to_value) {
        run.pointers.push_back(p.target);
      } else {
        queue.push_back(p.target);
      }
    }
  }
  run.mac = enclave.finalize_session(*nonce);
  for (std::uint32_t p : run.pointers) run.values.push_back(index.values.at(p));
  return run;
}

TamperReport client_check(const Client& client, KeyRange range, const DriverRun& run, bool integrity) {
  TamperReport r;
  try {
    r.values = client.decrypt(run.values);
  } catch (const AuthFailure& e) {
    return TamperReport{Outcome::ClientReject, std::string("value decryption: ") + e.what(), {}};
  }
  if (integrity) {
    if (!run.mac) return TamperReport{Outcome::ClientReject, "missing result MAC", {}};
    if (!client.verify(range, r.values, *run.mac)) return TamperReport{Outcome::ClientReject, "result MAC mismatch", {}};
  }
  r.outcome = Outcome::Accepted;
  return r;
}

template <typename T>
const T& pick(const std::vector<T>& v, Csprng& rng, const char* what) {
  if (v.empty()) throw std::invalid_argument(std::string("no eligible target: ") + what);
  return v[rng.uniform(v.size())];
}

void flip_byte(std::span<std::uint8_t> bytes, Csprng& rng) {
  bytes[rng.uniform(bytes.size())] ^= static_cast<std::uint8_t>(1u + rng.uniform(255));
}

}  // namespace

TamperReport run_with_tamper(const EncryptedIndex& index, Enclave& enclave, const Client& client, KeyRange range,
                             const TamperScript& script) {
  if (!index.header.integrity) throw std::invalid_argument("tamper harness requires integrity mode");
  const RangeToken token = client.make_token(range);
  Csprng rng(script.selector);

  // Honest observation run to learn which slots and blobs the query touches.
  const DriverRun honest = drive(index, enclave, token, {});
  std::vector<std::uint32_t> non_root(honest.fetched.begin() + 1, honest.fetched.end());

  const auto attempt = [&](const EncryptedIndex& idx, const BatchHook& hook,
                           const std::function<void(DriverRun&)>& post = {}) {
    DriverRun run;
    try {
      run = drive(idx, enclave, token, hook);
    } catch (const Error& e) {
      return TamperReport{Outcome::EnclaveAbort, e.what(), {}};
    }
    if (post) post(run);
    return client_check(client, range, run, idx.header.integrity);
  };

  switch (script.kind) {
    case TamperKind::ModifyNode: {
      const std::uint32_t slot = pick(honest.fetched, rng, "fetched node");
      EncryptedIndex bad = index;
      flip_byte(bad.mutable_node_record(slot), rng);
      return attempt(bad, {});
    }
    case TamperKind::ModifyValue: {
      const std::uint32_t victim = pick(honest.pointers, rng, "result value");
      EncryptedIndex bad = index;
      Bytes wire = bad.values[victim].serialize();
      flip_byte(wire, rng);
      bad.values[victim] = Ciphertext::parse(wire);
      return attempt(bad, {});
    }
    case TamperKind::SwapNodes: {
      const PlainTree tree = decrypt_tree(client.key().tree, index);
      const std::vector<std::uint32_t> slot_of = node_slots(client.key().tree, index.header.node_count);
      const std::vector<std::uint32_t> depth = node_depths(tree);
      std::map<std::uint32_t, std::uint32_t> depth_of_slot;
      std::map<std::uint32_t, std::vector<std::uint32_t>> level;
      for (NodeId id = 0; id < tree.nodes.size(); ++id) {
        depth_of_slot[slot_of[id]] = depth[id];
        level[depth[id]].push_back(slot_of[id]);
      }
      std::vector<std::uint32_t> eligible;
      for (std::uint32_t s : non_root) {
        if (level[depth_of_slot[s]].size() > 1) eligible.push_back(s);
      }
      const std::uint32_t victim = pick(eligible, rng, "requested node with a same-level sibling");
      std::vector<std::uint32_t> others;
      for (std::uint32_t s : level[depth_of_slot[victim]]) {
        if (s != victim) others.push_back(s);
      }
      const std::uint32_t substitute = pick(others, rng, "substitute");
      return attempt(index, [=](std::vector<std::uint32_t>& batch, std::size_t) {
        std::replace(batch.begin(), batch.end(), victim, substitute);
      });
    }
    case TamperKind::DropRequestedNode: {
      const std::uint32_t victim = pick(non_root, rng, "requested non-root node");
      return attempt(index, [=](std::vector<std::uint32_t>& batch, std::size_t) {
        batch.erase(std::remove(batch.begin(), batch.end(), victim), batch.end());
      });
    }
    case TamperKind::WrongFirstNode: {
      std::vector<std::uint32_t> slots;
      for (std::uint32_t s = 0; s < index.header.node_count; ++s) {
        if (s != index.header.root_slot) slots.push_back(s);
      }
      const std::uint32_t first = pick(slots, rng, "non-root slot");
      return attempt(index, [=](std::vector<std::uint32_t>& batch, std::size_t batch_no) {
        if (batch_no == 0) batch.front() = first;
      });
    }
    case TamperKind::WithholdResults: {
      if (honest.values.empty()) throw std::invalid_argument("no eligible target: result value");
      const std::size_t drop = rng.uniform(honest.values.size());
      return attempt(index, {}, [=](DriverRun& run) {
        run.values.erase(run.values.begin() + static_cast<std::ptrdiff_t>(std::min(drop, run.values.size() - 1)));
      });
    }
    case TamperKind::ReplayToken: {
      TamperReport first = attempt(index, {});
      TamperReport second = attempt(index, {});
      if (first.outcome != Outcome::Accepted) return first;
      if (second.outcome != Outcome::Accepted) return second;
      std::sort(first.values.begin(), first.values.end());
      std::sort(second.values.begin(), second.values.end());
      if (first.values != second.values) return TamperReport{Outcome::ClientReject, "replay changed the result", {}};
      first.detail = "replay returned the same result set";
      return first;
    }
  }
  throw std::invalid_argument("unknown tamper kind");
}

}  // namespace hsbt
