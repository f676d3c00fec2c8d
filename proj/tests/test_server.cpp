#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "test_support.hpp"

using namespace hsbt;
using namespace hsbt::test;

TEST_CASE("Construction 1 end to end") {
  const auto pairs = random_pairs(5000, 21);
  Fixture fx(pairs, 10, false);
  fx.enclave->load_tree_c1(fx.index);
  const UntrustedServer server(fx.index, *fx.enclave);
  const Client client = fx.client();

  SUBCASE("full range returns every blob") {
    const SearchResult r = server.search_c1(client.make_token({kNegInfKey, kPosInfKey}));
    CHECK(r.values.size() == pairs.size());
  }
  SUBCASE("empty range: no blobs, one enclave call") {
    const std::uint64_t before = fx.enclave->ecalls();
    const SearchResult r = server.search_c1(client.make_token({kMaxDomainKey, kMaxDomainKey}));
    CHECK(r.values.empty());
    CHECK(r.stats.boundary_crossings == 1);
    CHECK(fx.enclave->ecalls() - before == 1);
    CHECK_FALSE(r.mac);
  }
  SUBCASE("random ranges decrypt to the oracle answer") {
    Csprng rng(4);
    for (int q = 0; q < 300; ++q) {
      const KeyRange range = random_range(rng);
      const SearchResult r = server.search_c1(client.make_token(range), nullptr, range);
      REQUIRE(sorted(client.decrypt(r.values)) == scan_oracle(pairs, range));
      CHECK(r.stats.result_size == r.values.size());
      CHECK(r.stats.range_size == std::uint64_t{range.hi} - range.lo + 1);
    }
  }
}

TEST_CASE("Construction 2 end to end") {
  for (bool integrity : {false, true}) {
    CAPTURE(integrity);
    const auto pairs = random_pairs(5000, 22);
    Fixture fx(pairs, 10, integrity);
    const UntrustedServer server(fx.index, *fx.enclave);
    const Client client = fx.client();
    Csprng rng(5);
    for (int q = 0; q < 300; ++q) {
      const KeyRange range = random_range(rng);
      AccessTrace tr;
      const SearchResult r = server.search_c2(client.make_token(range), &tr, range);
      const std::vector<Bytes> values = client.decrypt(r.values);
      REQUIRE(sorted(values) == scan_oracle(pairs, range));
      CHECK(r.mac.has_value() == integrity);
      if (integrity) CHECK(client.verify(range, values, *r.mac));
      CHECK(r.stats.nodes_transferred == tr.fetch_count());
      CHECK(r.stats.boundary_crossings == tr.answer_count() + 1);
    }
    CHECK(fx.enclave->open_sessions() == 0);
  }
}

TEST_CASE("Construction 2 on a one-node tree is a single batch") {
  const std::vector<KeyValue> pairs{{3, Bytes{1}}, {4, Bytes{2}}};
  Fixture fx(pairs, 4, true);
  const UntrustedServer server(fx.index, *fx.enclave);
  AccessTrace tr;
  const SearchResult r = server.search_c2(fx.client().make_token({1, 10}), &tr);
  CHECK(tr.answer_count() == 1);
  CHECK(tr.fetch_count() == 1);
  CHECK(r.stats.boundary_crossings == 2);
  CHECK(r.values.size() == 2);
}

TEST_CASE("maxAmount = 1: one call per touched node plus finalize") {
  const auto pairs = random_pairs(2000, 23);
  EnclaveConfig cfg;
  cfg.reserved_space = node_record_size(5, true);
  Fixture fx(pairs, 5, true, cfg);
  REQUIRE(fx.enclave->max_amount(fx.index.header) == 1);
  REQUIRE(fx.tree.height >= 4);
  const UntrustedServer server(fx.index, *fx.enclave);
  Csprng rng(6);
  for (int q = 0; q < 50; ++q) {
    const KeyRange range = random_range(rng);
    AccessTrace tr;
    const SearchResult r = server.search_c2(fx.client().make_token(range), &tr);
    CHECK(r.stats.boundary_crossings == tr.fetch_count() + 1);
    CHECK(tr.answer_count() == tr.fetch_count());
    CHECK(fx.client().verify(range, fx.client().decrypt(r.values), *r.mac));
  }
}

TEST_CASE("bytes crossing the boundary") {
  const auto pairs = random_pairs(1000, 24);
  Fixture fx(pairs, 8, false);
  fx.enclave->load_tree_c1(fx.index);
  const UntrustedServer server(fx.index, *fx.enclave);
  const RangeToken tok = fx.client().make_token({1, 1u << 23});
  const SearchResult r1 = server.search_c1(tok);
  CHECK(r1.stats.bytes_in == tok.wire_size());
  CHECK(r1.stats.bytes_out == 4 * r1.values.size());
  CHECK(r1.stats.nodes_transferred == 0);

  const SearchResult r2 = server.search_c2(tok);
  CHECK(r2.stats.bytes_in ==
        r2.stats.nodes_transferred * fx.index.header.node_record_size + (r2.stats.boundary_crossings - 1) * tok.wire_size());
  CHECK(r2.stats.bytes_out > 5 * r2.values.size());
}

TEST_CASE("fetch_values") {
  const auto pairs = random_pairs(50, 25);
  Fixture fx(pairs, 4, false);
  const UntrustedServer server(fx.index, *fx.enclave);
  const std::vector<std::uint32_t> zero{0};
  CHECK(server.fetch_values(zero) == std::vector<Ciphertext>{fx.index.values[0]});
  CHECK(server.fetch_values(std::vector<std::uint32_t>{}).empty());

  std::vector<std::uint32_t> ptrs(20);
  std::iota(ptrs.begin(), ptrs.end(), 5u);
  std::vector<std::uint32_t> shuffled = ptrs;
  Csprng(1).shuffle(shuffled);
  auto a = fx.client().decrypt(server.fetch_values(ptrs));
  auto b = fx.client().decrypt(server.fetch_values(shuffled));
  CHECK(sorted(a) == sorted(b));

  const std::vector<std::uint32_t> bad{50};
  CHECK_THROWS_AS(server.fetch_values(bad), ProtocolViolation);
}

TEST_CASE("QueryStats CSV") {
  QueryStats s;
  s.construction = 2;
  s.branching = 10;
  s.value_count = 100;
  s.result_size = 3;
  s.wall_time = std::chrono::microseconds(12);
  const std::string header = QueryStats::csv_header();
  const std::string row = s.csv_row();
  CHECK(std::count(header.begin(), header.end(), ',') == 9);
  CHECK(std::count(row.begin(), row.end(), ',') == 9);
  CHECK(row.rfind("2,10,100,0,3,", 0) == 0);
  CHECK(row.substr(row.rfind(',') + 1) == "12");
}
