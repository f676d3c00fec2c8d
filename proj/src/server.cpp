#include "hsbt/server.hpp"

#include <deque>
#include <sstream>

namespace hsbt {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kPointerWireBytes = 5;  // flag + 32-bit pointer

QueryStats base_stats(int construction, const IndexHeader& h, std::optional<KeyRange> range) {
  QueryStats s;
  s.construction = construction;
  s.branching = h.branching;
  s.value_count = h.value_count;
  if (range) s.range_size = std::uint64_t{range->hi} - range->lo + 1;
  return s;
}

}  // namespace

std::string QueryStats::csv_header() {
  return "construction,b,n,range_size,result_size,crossings,nodes,bytes_in,bytes_out,micros";
}

std::string QueryStats::csv_row() const {
  std::ostringstream out;
  out << construction << ',' << branching << ',' << value_count << ',' << range_size << ',' << result_size << ','
      << boundary_crossings << ',' << nodes_transferred << ',' << bytes_in << ',' << bytes_out << ','
      << std::chrono::duration<double, std::micro>(wall_time).count();
  return out.str();
}

std::vector<Ciphertext> UntrustedServer::fetch_values(std::span<const std::uint32_t> pointers) const {
  std::vector<Ciphertext> out;
  out.reserve(pointers.size());
  for (const std::uint32_t p : pointers) {
    if (p >= index_.values.size()) throw ProtocolViolation("value pointer outside value region");
    out.push_back(index_.values[p]);
  }
  return out;
}

SearchResult UntrustedServer::search_c1(const RangeToken& token, AccessTrace* os_view,
                                        std::optional<KeyRange> range_hint) const {
  const auto start = Clock::now();
  SearchResult r;
  r.stats = base_stats(1, index_.header, range_hint);

  const std::vector<std::uint32_t> pointers = enclave_.search_trusted_c1(token, os_view);
  r.stats.boundary_crossings = 1;
  r.stats.bytes_in = token.wire_size();
  r.stats.bytes_out = pointers.size() * 4;
  r.values = fetch_values(pointers);
  r.stats.result_size = r.values.size();
  r.stats.wall_time = Clock::now() - start;
  return r;
}

SearchResult UntrustedServer::search_c2(const RangeToken& token, AccessTrace* os_view,
                                        std::optional<KeyRange> range_hint) const {
  const auto start = Clock::now();
  SearchResult r;
  r.stats = base_stats(2, index_.header, range_hint);
  const std::size_t max_amount = enclave_.max_amount(index_.header);
  if (max_amount == 0) throw CapacityExceeded("reserved space holds no node record");

  std::deque<std::uint32_t> queue{index_.header.root_slot};
  std::vector<std::uint32_t> result_pointers;
  std::vector<std::uint32_t> batch;
  std::optional<Nonce> nonce;
  while (!queue.empty()) {
    const std::size_t take = std::min(queue.size(), max_amount);
    batch.assign(queue.begin(), queue.begin() + static_cast<std::ptrdiff_t>(take));
    queue.erase(queue.begin(), queue.begin() + static_cast<std::ptrdiff_t>(take));

    BatchAnswer answer = enclave_.search_trusted_c2(index_, token, batch, nonce, os_view);
    nonce = answer.nonce;
    ++r.stats.boundary_crossings;
    r.stats.nodes_transferred += batch.size();
    r.stats.bytes_in += token.wire_size() + batch.size() * index_.header.node_record_size;
    r.stats.bytes_out += answer.pointers.size() * kPointerWireBytes + answer.nonce.size();

    for (const TaggedPointer& p : answer.pointers) {
      if (p.to_value) {
        result_pointers.push_back(p.target);
      } else {
        queue.push_back(p.target);
      }
    }
  }
  r.mac = enclave_.finalize_session(*nonce);
  ++r.stats.boundary_crossings;
  if (r.mac) r.stats.bytes_out += r.mac->size();

  r.values = fetch_values(result_pointers);
  r.stats.result_size = r.values.size();
  r.stats.wall_time = Clock::now() - start;
  return r;
}

}  // namespace hsbt
