#include "hsbt/audit.hpp"

#include <stdexcept>

namespace hsbt {

AuditSetup AuditSetup::from_index(const EncryptedIndex& index, Enclave& enclave, const Key128& tree_key) {
  AuditSetup s;
  s.index = &index;
  s.enclave = &enclave;
  s.tree = decrypt_tree(tree_key, index);
  s.slot_of = node_slots(tree_key, index.header.node_count);
  return s;
}

PageLayout AuditSetup::layout() const {
  return PageLayout{node_plain_size(index->header.branching, index->header.integrity), enclave->config().page_size};
}

AccessTrace inject_extra_access(const AccessTrace& trace, const HwLeakage& leakage, Granularity granularity,
                                std::uint32_t location_count, Csprng& rng) {
  std::vector<std::uint32_t> outside;
  for (std::uint32_t v = 0; v < location_count; ++v) {
    if (!leakage.access.has_vertex(v)) outside.push_back(v);
  }
  const std::uint32_t loc = outside.empty() ? location_count : outside[rng.uniform(outside.size())];
  TraceEvent e;
  e.kind = granularity == Granularity::Node ? TraceEventKind::NodeFetch : TraceEventKind::PageTouch;
  e.location = loc;
  AccessTrace out = trace;
  out.inject(rng.uniform(trace.size() + 1), e);
  return out;
}

AuditOutcome audit_one(const AuditSetup& setup, const Client& client, int construction, KeyRange range,
                       bool inject_extra, Csprng& rng) {
  if (construction != 1 && construction != 2) throw std::invalid_argument("construction must be 1 or 2");
  const UntrustedServer server(*setup.index, *setup.enclave);
  const RangeToken token = client.make_token(range);

  AuditOutcome out;
  SearchResult res = construction == 1 ? server.search_c1(token, &out.trace) : server.search_c2(token, &out.trace);
  out.result_size = res.values.size();

  const Granularity g = construction == 1 ? Granularity::Page : Granularity::Node;
  if (construction == 1) {
    out.leakage = leak_hw_pages(setup.tree, setup.slot_of, range, setup.layout(), setup.scope);
  } else {
    out.leakage = leak_hw_nodes(setup.tree, setup.slot_of, range, setup.scope);
  }
  std::uint32_t locations = setup.index->header.node_count;
  if (construction == 1) locations = setup.layout().page_of(locations - 1) + 1;
  if (inject_extra) out.trace = inject_extra_access(out.trace, out.leakage, g, locations, rng);
  out.verdict = audit_query(out.trace, out.leakage, g);
  return out;
}

}  // namespace hsbt
