#pragma once

// Formal leakage of both constructions and a trace auditor that accepts a
// recorded execution only if it is explained by that leakage.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hsbt/bptree.hpp"
#include "hsbt/index_codec.hpp"
#include "hsbt/trace.hpp"

namespace hsbt {

/// Static leakage: value count, value sizes, node count.
struct LeakEnc {
  std::uint64_t value_count = 0;
  std::vector<std::uint64_t> value_sizes;  // in value-region order
  std::uint32_t node_count = 0;

  bool operator==(const LeakEnc&) const = default;
};

LeakEnc leak_enc(std::span<const KeyValue> pairs, const PlainTree& tree);
/// The same quantities as observed from a container.
LeakEnc leak_enc(const EncryptedIndex& index);

/// Access tree over storage locations (node slots or page ids).
struct AccessTree {
  std::uint32_t root = 0;
  std::vector<std::uint32_t> vertices;                       // sorted, unique
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // (parent, child), sorted, unique
  std::uint64_t order_stamp = 0;                             // time parameter t

  bool has_vertex(std::uint32_t v) const;
  bool has_edge(std::uint32_t parent, std::uint32_t child) const;
};

/// Result pointers grouped by the leaf (or page) holding them.
struct ValueAccessPattern {
  std::vector<std::pair<std::uint32_t, std::vector<std::uint32_t>>> entries;
  std::uint64_t order_stamp = 0;

  std::vector<std::uint32_t> pointer_union() const;  // sorted
};

struct HwLeakage {
  AccessTree access;
  ValueAccessPattern values;
};

enum class LeakageScope {
  /// Matching leaves and their ancestors only.
  Formal,
  /// Every node whose key interval intersects the range. Adds the boundary
  /// leaves the traversal has to probe even when they hold no match, e.g. the
  /// single root-to-leaf path of a query with an empty result.
  Probe,
};

HwLeakage leak_hw_nodes(const PlainTree& tree, std::span<const std::uint32_t> slot_of_id, KeyRange range,
                        LeakageScope scope = LeakageScope::Probe, std::uint64_t order_stamp = 0);

/// Construction 1 layout: decrypted records stored contiguously by slot.
struct PageLayout {
  std::size_t record_size = 0;
  std::size_t page_size = 4096;

  std::uint32_t page_of(std::uint32_t slot) const {
    return static_cast<std::uint32_t>(std::size_t{slot} * record_size / page_size);
  }
};

/// Image of a node leakage under the page map, self-edges dropped.
HwLeakage collapse_to_pages(const HwLeakage& nodes, const PageLayout& layout);

HwLeakage leak_hw_pages(const PlainTree& tree, std::span<const std::uint32_t> slot_of_id, KeyRange range,
                        const PageLayout& layout, LeakageScope scope = LeakageScope::Probe,
                        std::uint64_t order_stamp = 0);

enum class Granularity { Node, Page };

struct Verdict {
  bool pass = true;
  std::optional<std::size_t> event_index;  // first divergent event; == trace size for a missing event
  std::string reason;
};

/// PASS iff the touched locations are exactly the leakage vertices (each
/// node fetched once), every access follows a leakage edge from an earlier
/// access, and the emitted value pointers equal the leakage pointer union.
Verdict audit_query(const AccessTrace& trace, const HwLeakage& leakage, Granularity granularity);

/// Line format: "root <v>", "vertex <v>", "edge <p> <c>", "delta <loc> : <ptr>...".
std::string to_text(const HwLeakage& leakage);

}  // namespace hsbt
