#include "hsbt/leakage.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace hsbt {

LeakEnc leak_enc(std::span<const KeyValue> pairs, const PlainTree& tree) {
  LeakEnc l;
  l.value_count = pairs.size();
  l.value_sizes.assign(pairs.size(), 0);
  for (std::size_t i = 0; i < pairs.size(); ++i) l.value_sizes[tree.value_slot.at(i)] = pairs[i].value.size();
  l.node_count = static_cast<std::uint32_t>(tree.nodes.size());
  return l;
}

LeakEnc leak_enc(const EncryptedIndex& index) {
  LeakEnc l;
  l.value_count = index.values.size();
  for (const Ciphertext& c : index.values) l.value_sizes.push_back(c.body.size());
  l.node_count = index.header.node_count;
  return l;
}

bool AccessTree::has_vertex(std::uint32_t v) const { return std::binary_search(vertices.begin(), vertices.end(), v); }

bool AccessTree::has_edge(std::uint32_t parent, std::uint32_t child) const {
  return std::binary_search(edges.begin(), edges.end(), std::make_pair(parent, child));
}

std::vector<std::uint32_t> ValueAccessPattern::pointer_union() const {
  std::vector<std::uint32_t> out;
  for (const auto& [loc, ptrs] : entries) out.insert(out.end(), ptrs.begin(), ptrs.end());
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

template <typename T>
void sort_unique(std::vector<T>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

bool leaf_has_match(const PlainNode& leaf, KeyRange range) {
  for (std::size_t j = 0; j < leaf.key_count; ++j) {
    if (range.contains(leaf.keys[j])) return true;
  }
  return false;
}

// Collects node ids whose covering interval [lo, hi) intersects the range.
void probe(const PlainTree& tree, NodeId id, KeyRange range, std::vector<bool>& touched) {
  touched[id] = true;
  const PlainNode& n = tree.nodes[id];
  if (n.is_leaf) return;
  for (std::size_t i = 0; i <= n.key_count; ++i) {
    const bool below_hi = i == 0 || n.keys[i - 1] <= range.hi;
    const bool above_lo = i == n.key_count || range.lo < n.keys[i];
    if (below_hi && above_lo) probe(tree, n.child_ids[i], range, touched);
  }
}

}  // namespace

HwLeakage leak_hw_nodes(const PlainTree& tree, std::span<const std::uint32_t> slot_of_id, KeyRange range,
                        LeakageScope scope, std::uint64_t order_stamp) {
  const std::vector<NodeId> parent = parent_ids(tree);
  std::vector<bool> in_x(tree.nodes.size(), false);

  if (scope == LeakageScope::Probe) {
    probe(tree, tree.root_id, range, in_x);
  }
  // M and its ancestors. Under Probe these are already included.
  for (const PlainNode& n : tree.nodes) {
    if (!n.is_leaf || !leaf_has_match(n, range)) continue;
    for (NodeId v = n.id;; v = parent[v]) {
      in_x[v] = true;
      if (v == tree.root_id) break;
    }
  }

  HwLeakage leak;
  leak.access.root = slot_of_id[tree.root_id];
  leak.access.order_stamp = order_stamp;
  leak.values.order_stamp = order_stamp;
  for (const PlainNode& n : tree.nodes) {
    if (!in_x[n.id]) continue;
    leak.access.vertices.push_back(slot_of_id[n.id]);
    if (n.id != tree.root_id) leak.access.edges.emplace_back(slot_of_id[parent[n.id]], slot_of_id[n.id]);
    if (n.is_leaf && leaf_has_match(n, range)) {
      std::vector<std::uint32_t> ptrs;
      for (std::size_t j = 0; j < n.key_count; ++j) {
        if (range.contains(n.keys[j])) ptrs.push_back(n.pointers[j + 1]);
      }
      std::sort(ptrs.begin(), ptrs.end());
      leak.values.entries.emplace_back(slot_of_id[n.id], std::move(ptrs));
    }
  }
  sort_unique(leak.access.vertices);
  sort_unique(leak.access.edges);
  std::sort(leak.values.entries.begin(), leak.values.entries.end());
  return leak;
}

HwLeakage collapse_to_pages(const HwLeakage& nodes, const PageLayout& layout) {
  HwLeakage pages;
  pages.access.root = layout.page_of(nodes.access.root);
  pages.access.order_stamp = nodes.access.order_stamp;
  pages.values.order_stamp = nodes.values.order_stamp;
  for (std::uint32_t v : nodes.access.vertices) pages.access.vertices.push_back(layout.page_of(v));
  for (const auto& [p, c] : nodes.access.edges) {
    const std::uint32_t pp = layout.page_of(p);
    const std::uint32_t pc = layout.page_of(c);
    if (pp != pc) pages.access.edges.emplace_back(pp, pc);
  }
  sort_unique(pages.access.vertices);
  sort_unique(pages.access.edges);

  std::map<std::uint32_t, std::vector<std::uint32_t>> by_page;
  for (const auto& [leaf, ptrs] : nodes.values.entries) {
    auto& dst = by_page[layout.page_of(leaf)];
    dst.insert(dst.end(), ptrs.begin(), ptrs.end());
  }
  for (auto& [page, ptrs] : by_page) {
    std::sort(ptrs.begin(), ptrs.end());
    pages.values.entries.emplace_back(page, std::move(ptrs));
  }
  return pages;
}

HwLeakage leak_hw_pages(const PlainTree& tree, std::span<const std::uint32_t> slot_of_id, KeyRange range,
                        const PageLayout& layout, LeakageScope scope, std::uint64_t order_stamp) {
  return collapse_to_pages(leak_hw_nodes(tree, slot_of_id, range, scope, order_stamp), layout);
}

// ---------------------------------------------------------------------------
// Auditor

namespace {

Verdict fail_at(std::size_t i, std::string reason) { return Verdict{false, i, std::move(reason)}; }

// Value pointers must form exactly the leakage union.
class ValueCheck {
 public:
  explicit ValueCheck(const ValueAccessPattern& values) {
    for (std::uint32_t p : values.pointer_union()) ++remaining_[p];
  }
  bool take(std::uint32_t p) {
    auto it = remaining_.find(p);
    if (it == remaining_.end() || it->second == 0) return false;
    --it->second;
    return true;
  }
  bool exhausted() const {
    return std::all_of(remaining_.begin(), remaining_.end(), [](const auto& kv) { return kv.second == 0; });
  }

 private:
  std::map<std::uint32_t, std::size_t> remaining_;
};

Verdict audit_nodes(const AccessTrace& trace, const HwLeakage& leak) {
  const AccessTree& x = leak.access;
  std::map<std::uint32_t, std::uint32_t> parent_of;
  for (const auto& [p, c] : x.edges) parent_of[c] = p;

  std::map<std::uint32_t, std::size_t> fetched_in;  // slot -> batch
  std::multiset<std::uint32_t> requested;
  ValueCheck values(leak.values);
  std::size_t batch = 0;

  const auto& events = trace.events();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const TraceEvent& e = events[i];
    switch (e.kind) {
      case TraceEventKind::PageTouch:
        return fail_at(i, "page event in a node-granular trace");
      case TraceEventKind::NodeFetch: {
        const std::uint32_t slot = e.location;
        if (!x.has_vertex(slot)) return fail_at(i, "fetch of slot " + std::to_string(slot) + " outside leakage");
        if (fetched_in.count(slot)) return fail_at(i, "slot " + std::to_string(slot) + " fetched twice");
        if (fetched_in.empty()) {
          if (slot != x.root) return fail_at(i, "first fetch is not the root");
        } else {
          const auto parent = parent_of.find(slot);
          if (parent == parent_of.end()) return fail_at(i, "fetch without leakage parent");
          const auto pf = fetched_in.find(parent->second);
          if (pf == fetched_in.end() || pf->second >= batch) return fail_at(i, "fetch before its parent was answered");
          const auto req = requested.find(slot);
          if (req == requested.end()) return fail_at(i, "fetch of a slot the enclave never requested");
          requested.erase(req);
        }
        fetched_in[slot] = batch;
        break;
      }
      case TraceEventKind::PointerOut:
        for (const TaggedPointer& p : e.pointers) {
          if (p.to_value) {
            if (!values.take(p.target)) return fail_at(i, "value pointer outside leakage");
            continue;
          }
          const auto parent = parent_of.find(p.target);
          if (parent == parent_of.end() || !x.has_vertex(p.target)) {
            return fail_at(i, "node pointer outside leakage");
          }
          const auto pf = fetched_in.find(parent->second);
          if (pf == fetched_in.end() || pf->second != batch) return fail_at(i, "node pointer not explained by batch");
          requested.insert(p.target);
        }
        ++batch;
        break;
    }
  }
  if (fetched_in.size() != x.vertices.size()) return fail_at(events.size(), "leakage vertex never fetched");
  if (!values.exhausted()) return fail_at(events.size(), "leakage value pointer never emitted");
  return Verdict{};
}

Verdict audit_pages(const AccessTrace& trace, const HwLeakage& leak) {
  const AccessTree& p = leak.access;
  std::set<std::uint32_t> touched;
  ValueCheck values(leak.values);

  const auto& events = trace.events();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const TraceEvent& e = events[i];
    switch (e.kind) {
      case TraceEventKind::NodeFetch:
        return fail_at(i, "node fetch in a page-granular trace");
      case TraceEventKind::PageTouch: {
        const std::uint32_t page = e.location;
        if (!p.has_vertex(page)) return fail_at(i, "touch of page " + std::to_string(page) + " outside leakage");
        if (touched.empty()) {
          if (page != p.root) return fail_at(i, "first touch is not the root page");
        } else if (!touched.count(page)) {
          const bool reachable = std::any_of(touched.begin(), touched.end(),
                                             [&](std::uint32_t from) { return p.has_edge(from, page); });
          if (!reachable) return fail_at(i, "page reached without a leakage edge");
        }
        touched.insert(page);
        break;
      }
      case TraceEventKind::PointerOut:
        for (const TaggedPointer& ptr : e.pointers) {
          if (!ptr.to_value || !values.take(ptr.target)) return fail_at(i, "pointer outside leakage");
        }
        break;
    }
  }
  if (touched.size() != p.vertices.size()) return fail_at(events.size(), "leakage page never touched");
  if (!values.exhausted()) return fail_at(events.size(), "leakage value pointer never emitted");
  return Verdict{};
}

}  // namespace

Verdict audit_query(const AccessTrace& trace, const HwLeakage& leakage, Granularity granularity) {
  return granularity == Granularity::Node ? audit_nodes(trace, leakage) : audit_pages(trace, leakage);
}

std::string to_text(const HwLeakage& leakage) {
  std::ostringstream out;
  out << "root " << leakage.access.root << '\n';
  out << "t " << leakage.access.order_stamp << '\n';
  for (std::uint32_t v : leakage.access.vertices) out << "vertex " << v << '\n';
  for (const auto& [p, c] : leakage.access.edges) out << "edge " << p << ' ' << c << '\n';
  for (const auto& [loc, ptrs] : leakage.values.entries) {
    out << "delta " << loc << " :";
    for (std::uint32_t ptr : ptrs) out << ' ' << ptr;
    out << '\n';
  }
  return out.str();
}

}  // namespace hsbt
