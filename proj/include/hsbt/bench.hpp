#pragma once

// Synthetic workloads and per-cell median measurements.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hsbt/bptree.hpp"
#include "hsbt/enclave.hpp"
#include "hsbt/index_codec.hpp"
#include "hsbt/server.hpp"

namespace hsbt {

/// n pairs with distinct uniformly random domain keys and random values.
std::vector<KeyValue> synthetic_pairs(std::size_t n, std::uint64_t seed, std::size_t value_bytes = 16);

/// Range covering a uniformly random window of `result_size` consecutive
/// sorted keys. `sorted_keys` must be sorted and distinct.
KeyRange pick_window(std::span<const SearchKey> sorted_keys, std::size_t result_size, Csprng& rng);

/// One encrypted index with its enclave and host, loaded for both
/// constructions.
struct BenchFixture {
  std::vector<KeyValue> pairs;
  std::vector<SearchKey> sorted_keys;
  SecretKey sk;
  PlainTree tree;
  EncryptedIndex index;
  std::unique_ptr<Enclave> enclave;
  std::unique_ptr<UntrustedServer> server;

  static std::unique_ptr<BenchFixture> create(std::size_t n, std::uint32_t branching, bool integrity,
                                              std::uint64_t seed, EnclaveConfig config = {});
  Client client() const { return Client(sk); }
};

struct CellReport {
  int construction = 0;
  std::uint32_t branching = 0;
  std::size_t n = 0;
  std::size_t result_size = 0;
  bool integrity = false;
  std::size_t reps = 0;
  double median_micros = 0;
  double median_crossings = 0;
  double median_nodes = 0;
  double median_bytes_in = 0;
  double median_bytes_out = 0;
  std::size_t mismatches = 0;  // queries whose decrypted result differed from the scan oracle

  static std::string csv_header();
  std::string csv_row() const;
};

/// `reps` queries of width `result_size` against one construction. Each
/// result is decrypted and checked against the scan oracle outside the
/// timed section.
CellReport run_cell(BenchFixture& fx, int construction, std::size_t result_size, std::size_t reps, Csprng& rng);

double median(std::vector<double> xs);

}  // namespace hsbt
