#include "hsbt/bench.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace hsbt {

std::vector<KeyValue> synthetic_pairs(std::size_t n, std::uint64_t seed, std::size_t value_bytes) {
  Csprng rng(seed);
  std::unordered_set<SearchKey> seen;
  seen.reserve(n * 2);
  std::vector<KeyValue> pairs;
  pairs.reserve(n);
  while (pairs.size() < n) {
    const auto k = static_cast<SearchKey>(kMinDomainKey + rng.uniform(std::uint64_t{kMaxDomainKey} - kMinDomainKey + 1));
    if (!seen.insert(k).second) continue;
    Bytes v(value_bytes);
    for (auto& byte : v) byte = static_cast<std::uint8_t>(rng.next());
    pairs.push_back({k, std::move(v)});
  }
  return pairs;
}

KeyRange pick_window(std::span<const SearchKey> sorted_keys, std::size_t result_size, Csprng& rng) {
  if (sorted_keys.empty()) throw std::invalid_argument("no keys");
  if (result_size == 0) {
    // Empty result: a point just above a key with no neighbour at key+1.
    for (int attempt = 0; attempt < 64; ++attempt) {
      const std::size_t i = rng.uniform(sorted_keys.size());
      const SearchKey above = sorted_keys[i] + 1;
      const bool free = above <= kMaxDomainKey && (i + 1 == sorted_keys.size() || sorted_keys[i + 1] != above);
      if (free) return KeyRange{above, above};
    }
    throw std::invalid_argument("could not find an empty range");
  }
  const std::size_t r = std::min(result_size, sorted_keys.size());
  const std::size_t start = rng.uniform(sorted_keys.size() - r + 1);
  return KeyRange{sorted_keys[start], sorted_keys[start + r - 1]};
}

std::unique_ptr<BenchFixture> BenchFixture::create(std::size_t n, std::uint32_t branching, bool integrity,
                                                   std::uint64_t seed, EnclaveConfig config) {
  auto fx = std::make_unique<BenchFixture>();
  fx->pairs = synthetic_pairs(n, seed);
  for (const KeyValue& kv : fx->pairs) fx->sorted_keys.push_back(kv.key);
  std::sort(fx->sorted_keys.begin(), fx->sorted_keys.end());
  fx->sk = SecretKey::generate();
  fx->tree = build_tree(fx->pairs, branching, seed ^ 0x5eedULL);
  fx->index = encrypt_index(fx->sk, fx->tree, fx->pairs, integrity);
  fx->enclave = std::make_unique<Enclave>(config);
  fx->enclave->provision(kDefaultClient, fx->sk.tree, fx->tree.root_id);
  fx->enclave->load_tree_c1(fx->index);
  fx->server = std::make_unique<UntrustedServer>(fx->index, *fx->enclave);
  return fx;
}

double median(std::vector<double> xs) {
  if (xs.empty()) return 0;
  const std::size_t mid = xs.size() / 2;
  std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
  if (xs.size() % 2 == 1) return xs[mid];
  const double hi = xs[mid];
  const double lo = *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lo + hi) / 2;
}

std::string CellReport::csv_header() {
  return "construction,b,n,result_size,integrity,reps,median_micros,median_crossings,median_nodes,"
         "median_bytes_in,median_bytes_out,mismatches";
}

std::string CellReport::csv_row() const {
  std::ostringstream out;
  out << construction << ',' << branching << ',' << n << ',' << result_size << ',' << (integrity ? "on" : "off") << ','
      << reps << ',' << median_micros << ',' << median_crossings << ',' << median_nodes << ',' << median_bytes_in << ','
      << median_bytes_out << ',' << mismatches;
  return out.str();
}

CellReport run_cell(BenchFixture& fx, int construction, std::size_t result_size, std::size_t reps, Csprng& rng) {
  if (construction != 1 && construction != 2) throw std::invalid_argument("construction must be 1 or 2");
  CellReport rep;
  rep.construction = construction;
  rep.branching = fx.index.header.branching;
  rep.n = fx.pairs.size();
  rep.result_size = result_size;
  rep.integrity = fx.index.header.integrity;
  rep.reps = reps;

  const Client client = fx.client();
  std::vector<double> micros, crossings, nodes, bytes_in, bytes_out;
  for (std::size_t q = 0; q < reps; ++q) {
    const KeyRange range = pick_window(fx.sorted_keys, result_size, rng);
    const RangeToken token = client.make_token(range);
    const SearchResult res =
        construction == 1 ? fx.server->search_c1(token, nullptr, range) : fx.server->search_c2(token, nullptr, range);
    micros.push_back(std::chrono::duration<double, std::micro>(res.stats.wall_time).count());
    crossings.push_back(static_cast<double>(res.stats.boundary_crossings));
    nodes.push_back(static_cast<double>(res.stats.nodes_transferred));
    bytes_in.push_back(static_cast<double>(res.stats.bytes_in));
    bytes_out.push_back(static_cast<double>(res.stats.bytes_out));

    std::vector<Bytes> got = client.decrypt(res.values);
    std::sort(got.begin(), got.end());
    if (got != scan_oracle(fx.pairs, range)) ++rep.mismatches;
  }
  rep.median_micros = median(micros);
  rep.median_crossings = median(crossings);
  rep.median_nodes = median(nodes);
  rep.median_bytes_in = median(bytes_in);
  rep.median_bytes_out = median(bytes_out);
  return rep;
}

}  // namespace hsbt
