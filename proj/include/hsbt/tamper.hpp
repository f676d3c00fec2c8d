#pragma once

// Scripted malicious host behaviour against Construction 2 in integrity mode.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hsbt/enclave.hpp"
#include "hsbt/index_codec.hpp"

namespace hsbt {

enum class TamperKind {
  ModifyNode,         // flip a byte of a node record on the query path
  ModifyValue,        // flip a byte of a result blob
  SwapNodes,          // deliver a same-level node instead of a requested one
  DropRequestedNode,  // never deliver one requested node
  WrongFirstNode,     // open the session with a non-root node
  WithholdResults,    // drop one result blob before the client
  ReplayToken,        // run the same token twice
};

std::string_view to_string(TamperKind kind);
std::optional<TamperKind> parse_tamper_kind(std::string_view name);
inline constexpr TamperKind kAllTamperKinds[] = {
    TamperKind::ModifyNode,        TamperKind::ModifyValue,     TamperKind::SwapNodes, TamperKind::DropRequestedNode,
    TamperKind::WrongFirstNode,    TamperKind::WithholdResults, TamperKind::ReplayToken,
};

struct TamperScript {
  TamperKind kind = TamperKind::ModifyNode;
  std::uint64_t selector = 0;  // seeds the choice of target among eligible ones
};

enum class Outcome { EnclaveAbort, ClientReject, Accepted };
std::string_view to_string(Outcome outcome);

struct TamperReport {
  Outcome outcome = Outcome::Accepted;
  std::string detail;
  std::vector<Bytes> values;  // plaintext result when Accepted
};

/// Runs one query for `range` through a malicious driver. `enclave` must be
/// provisioned for `client` and `index` must carry integrity data. Throws
/// std::invalid_argument if the script has no eligible target for this
/// query (e.g. modify-value on an empty result).
TamperReport run_with_tamper(const EncryptedIndex& index, Enclave& enclave, const Client& client, KeyRange range,
                             const TamperScript& script);

}  // namespace hsbt
