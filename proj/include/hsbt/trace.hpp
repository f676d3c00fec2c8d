#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

namespace hsbt {

/// A pointer leaving the enclave. `to_value` marks a value-region index
/// emitted by a leaf; otherwise `target` is the slot of a node to fetch.
struct TaggedPointer {
  bool to_value = false;
  std::uint32_t target = 0;

  bool operator==(const TaggedPointer&) const = default;
  auto operator<=>(const TaggedPointer&) const = default;
};

enum class TraceEventKind { NodeFetch, PageTouch, PointerOut };

struct TraceEvent {
  TraceEventKind kind = TraceEventKind::NodeFetch;
  std::uint32_t location = 0;          // slot for NodeFetch, page id for PageTouch
  std::vector<TaggedPointer> pointers;  // PointerOut only

  bool operator==(const TraceEvent&) const = default;
};

/// What the untrusted host observes at the boundary during one query.
/// Append-only; recording is serialized so a trace can be shared by
/// concurrent batches of one query.
class AccessTrace {
 public:
  AccessTrace() = default;
  AccessTrace(const AccessTrace& other);
  AccessTrace& operator=(const AccessTrace& other);

  void record_fetch(std::uint32_t slot);
  void record_page(std::uint32_t page);
  void record_pointers(std::vector<TaggedPointer> pointers);

  const std::vector<TraceEvent>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  std::size_t fetch_count() const;
  /// Number of PointerOut events, i.e. enclave answers carrying pointers.
  std::size_t answer_count() const;

  /// Test hook for the auditor: insert an event at position `at`.
  void inject(std::size_t at, TraceEvent event);

  /// One event per line: "fetch <slot>", "page <id>", "out v:<i> n:<slot> ...".
  std::string to_text() const;
  static AccessTrace from_text(const std::string& text);

 private:
  mutable std::mutex mu_;
  std::vector<TraceEvent> events_;
};

}  // namespace hsbt
