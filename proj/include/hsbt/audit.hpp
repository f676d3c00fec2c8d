#pragma once

// Runs traced queries and checks them against the leakage functions.

#include <cstdint>
#include <vector>

#include "hsbt/enclave.hpp"
#include "hsbt/leakage.hpp"
#include "hsbt/server.hpp"

namespace hsbt {

struct AuditSetup {
  const EncryptedIndex* index = nullptr;
  Enclave* enclave = nullptr;  // provisioned, and loaded if Construction 1 is audited
  PlainTree tree;              // logical tree with node ids, from decrypt_tree
  std::vector<std::uint32_t> slot_of;
  LeakageScope scope = LeakageScope::Probe;

  static AuditSetup from_index(const EncryptedIndex& index, Enclave& enclave, const Key128& tree_key);
  PageLayout layout() const;
};

/// Adds one access outside the leakage at a random position. When the
/// leakage covers all `location_count` locations the access goes one past
/// the end.
AccessTrace inject_extra_access(const AccessTrace& trace, const HwLeakage& leakage, Granularity granularity,
                                std::uint32_t location_count, Csprng& rng);

struct AuditOutcome {
  Verdict verdict;
  AccessTrace trace;
  HwLeakage leakage;
  std::size_t result_size = 0;
};

/// Executes `range` with construction 1 or 2 and audits the recorded trace.
AuditOutcome audit_one(const AuditSetup& setup, const Client& client, int construction, KeyRange range,
                       bool inject_extra, Csprng& rng);

}  // namespace hsbt
