#include "hsbt/cli_commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "hsbt/audit.hpp"
#include "hsbt/bench.hpp"
#include "hsbt/enclave.hpp"
#include "hsbt/server.hpp"
#include "hsbt/tamper.hpp"

namespace hsbt {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint32_t read_u32(std::istream& in) {
  std::uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw UsageError("truncated binary input");
  return std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 | std::uint32_t{b[3]} << 24;
}

SecretKey load_or_create_keys(const std::filesystem::path& path, std::ostream& err) {
  if (std::filesystem::exists(path)) return read_key_file(path);
  SecretKey sk = SecretKey::generate();
  write_key_file(path, sk);
  err << "wrote new keys to " << path.string() << '\n';
  return sk;
}

// Owner-side provisioning: the root id is read from the root record.
NodeId root_id_of(const EncryptedIndex& index, const Key128& tree_key) {
  const Aead aead(tree_key);
  const std::uint32_t slot = index.header.root_slot;
  const Bytes plain = aead.decrypt_wire(index.node_record(slot), slot_aad(slot));
  return parse_node(plain, index.header.branching, index.header.integrity).id;
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "verification failure: " << e.what() << '\n';
    return kExitVerify;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return kExitVerify;
  }
}

}  // namespace

std::vector<KeyValue> read_pairs(const std::filesystem::path& path, InputFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  std::vector<KeyValue> pairs;
  if (format == InputFormat::Text) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const std::size_t sp = line.find(' ');
      const std::string key_text = line.substr(0, sp);
      std::uint64_t key = 0;
      try {
        std::size_t used = 0;
        key = std::stoull(key_text, &used);
        if (used != key_text.size()) throw std::invalid_argument(key_text);
      } catch (const std::exception&) {
        throw UsageError("line " + std::to_string(lineno) + ": bad key '" + key_text + "'");
      }
      if (key < kMinDomainKey || key > kMaxDomainKey) {
        throw UsageError("line " + std::to_string(lineno) + ": key outside the domain");
      }
      const std::string value = sp == std::string::npos ? std::string() : line.substr(sp + 1);
      pairs.push_back({static_cast<SearchKey>(key), Bytes(value.begin(), value.end())});
    }
  } else {
    while (in.peek() != std::char_traits<char>::eof()) {
      const std::uint32_t key = read_u32(in);
      const std::uint32_t len = read_u32(in);
      Bytes v(len);
      in.read(reinterpret_cast<char*>(v.data()), len);
      if (static_cast<std::uint32_t>(in.gcount()) != len) throw UsageError("truncated binary input");
      pairs.push_back({key, std::move(v)});
    }
  }
  if (pairs.empty()) throw UsageError("input holds no pairs");
  return pairs;
}

KeyRange parse_range(const std::string& text) {
  const std::size_t colon = text.find(':');
  if (colon == std::string::npos) throw UsageError("range must be A:B");
  const auto bound = [](const std::string& s) -> SearchKey {
    if (s == "-inf") return kNegInfKey;
    if (s == "inf" || s == "+inf") return kPosInfKey;
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) throw UsageError("bad bound '" + s + "'");
    const std::uint64_t v = std::stoull(s);
    if (v > kPosInfKey) throw UsageError("bound out of range");
    return static_cast<SearchKey>(v);
  };
  const KeyRange r{bound(text.substr(0, colon)), bound(text.substr(colon + 1))};
  if (r.lo > r.hi) throw UsageError("range lower bound exceeds upper bound");
  return r;
}

int cmd_build(const BuildOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const std::vector<KeyValue> pairs = read_pairs(opt.input, opt.format);
    const SecretKey sk = load_or_create_keys(opt.keys, err);
    const PlainTree tree = build_tree(pairs, opt.branching, opt.seed);
    const EncryptedIndex index = encrypt_index(sk, tree, pairs, opt.integrity);
    index.write_file(opt.out);

    const LeakEnc leak = leak_enc(index);
    std::uint64_t total = 0;
    for (std::uint64_t s : leak.value_sizes) total += s;
    out << "values " << leak.value_count << '\n'
        << "nodes " << leak.node_count << '\n'
        << "value_bytes " << total << '\n'
        << "node_record_size " << index.header.node_record_size << '\n';
    return kExitOk;
  });
}

int cmd_query(const QueryOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opt.construction != 1 && opt.construction != 2) throw UsageError("construction must be 1 or 2");
    const EncryptedIndex index = EncryptedIndex::read_file(opt.index);
    const SecretKey sk = read_key_file(opt.keys);
    const Client client(sk);

    EnclaveConfig cfg;
    cfg.reserved_space = opt.reserved_space;
    Enclave enclave(cfg);
    enclave.provision(kDefaultClient, sk.tree, root_id_of(index, sk.tree));
    if (opt.construction == 1) enclave.load_tree_c1(index);
    const UntrustedServer server(index, enclave);

    const RangeToken token = client.make_token(opt.range);
    const SearchResult res =
        opt.construction == 1 ? server.search_c1(token, nullptr, opt.range) : server.search_c2(token, nullptr, opt.range);
    const std::vector<Bytes> values = client.decrypt(res.values);
    if (index.header.integrity && opt.construction == 2) {
      if (!res.mac || !client.verify(opt.range, values, *res.mac)) {
        err << "verification failure: result MAC does not verify\n";
        return kExitVerify;
      }
    }
    for (const Bytes& v : values) {
      if (opt.hex) {
        out << to_hex(v) << '\n';
      } else {
        out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
        out << '\n';
      }
    }
    err << QueryStats::csv_header() << '\n' << res.stats.csv_row() << '\n';
    return kExitOk;
  });
}

int cmd_bench(const BenchOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::ofstream file;
    if (opt.out) {
      file.open(*opt.out);
      if (!file) throw UsageError("cannot write " + opt.out->string());
    }
    std::ostream& csv = opt.out ? static_cast<std::ostream&>(file) : out;
    csv << CellReport::csv_header() << '\n';

    EnclaveConfig cfg;
    cfg.reserved_space = opt.reserved_space;
    Csprng rng(opt.seed);
    std::size_t mismatches = 0;
    for (std::size_t n : opt.n) {
      for (std::uint32_t b : opt.branching) {
        auto fx = BenchFixture::create(n, b, opt.integrity, opt.seed, cfg);
        std::map<std::size_t, std::map<int, double>> med;  // result size -> construction -> micros
        for (std::size_t r : opt.result_sizes) {
          for (int c : opt.constructions) {
            const CellReport rep = run_cell(*fx, c, r, opt.reps, rng);
            csv << rep.csv_row() << '\n';
            med[r][c] = rep.median_micros;
            mismatches += rep.mismatches;
          }
        }
        if (med.empty() || med.begin()->second.size() < 2) continue;
        std::optional<double> prev;
        bool decreasing = true;
        for (const auto& [r, by_c] : med) {
          const double ratio = by_c.at(2) / by_c.at(1);
          err << "n=" << n << " b=" << b << " result_size=" << r << " ratio_c2_c1=" << ratio << '\n';
          if (prev && ratio >= *prev) decreasing = false;
          prev = ratio;
        }
        err << "n=" << n << " b=" << b << " ratio trend: " << (decreasing ? "decreasing" : "not monotone") << '\n';
      }
    }
    if (mismatches) {
      err << "verification failure: " << mismatches << " results differ from the scan oracle\n";
      return kExitVerify;
    }
    return kExitOk;
  });
}

int cmd_audit(const AuditOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const EncryptedIndex index = EncryptedIndex::read_file(opt.index);
    const SecretKey sk = read_key_file(opt.keys);
    const Client client(sk);
    Enclave enclave;
    enclave.provision(kDefaultClient, sk.tree, root_id_of(index, sk.tree));
#ifdef HSBT_SEED_HOOK
    enclave.set_shuffle_seed(opt.seed);
#endif
    if (std::find(opt.constructions.begin(), opt.constructions.end(), 1) != opt.constructions.end()) {
      enclave.load_tree_c1(index);
    }
    AuditSetup setup = AuditSetup::from_index(index, enclave, sk.tree);
    setup.scope = opt.scope;

    std::vector<SearchKey> keys;
    for (const PlainNode& n : setup.tree.nodes) {
      if (n.is_leaf) keys.insert(keys.end(), n.keys.begin(), n.keys.begin() + n.key_count);
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

    Csprng rng(opt.seed);
    std::size_t total_fail = 0;
    for (int c : opt.constructions) {
      std::size_t pass = 0;
      for (std::size_t q = 0; q < opt.queries; ++q) {
        const KeyRange range = pick_window(keys, rng.uniform(65), rng);
        const AuditOutcome o = audit_one(setup, client, c, range, opt.inject_extra_fetch, rng);
        if (o.verdict.pass) {
          ++pass;
        } else if (opt.queries <= 10 || total_fail < 3) {
          err << "construction " << c << " query " << q << " [" << range.lo << ',' << range.hi << "]: FAIL at event "
              << o.verdict.event_index.value_or(0) << ": " << o.verdict.reason << '\n';
        }
        total_fail += !o.verdict.pass;
      }
      out << "construction " << c << ": " << pass << '/' << opt.queries << " PASS, " << opt.queries - pass
          << " FAIL\n";
    }
    return total_fail ? kExitVerify : kExitOk;
  });
}

int cmd_tamper(const TamperOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::vector<TamperKind> kinds;
    if (opt.kinds.empty()) kinds.assign(std::begin(kAllTamperKinds), std::end(kAllTamperKinds));
    for (const std::string& name : opt.kinds) {
      const auto k = parse_tamper_kind(name);
      if (!k) throw UsageError("unknown tamper kind '" + name + "'");
      kinds.push_back(*k);
    }
    auto fx = BenchFixture::create(opt.n, opt.branching, true, opt.seed);
    const Client client = fx->client();
    Csprng rng(opt.seed);
    bool all_ok = true;
    for (TamperKind kind : kinds) {
      std::map<Outcome, std::size_t> counts;
      for (std::size_t t = 0; t < opt.targets; ++t) {
        for (int attempt = 0;; ++attempt) {
          const KeyRange range = pick_window(fx->sorted_keys, 1 + rng.uniform(64), rng);
          try {
            const TamperReport rep = run_with_tamper(fx->index, *fx->enclave, client, range, {kind, rng.next()});
            ++counts[rep.outcome];
            break;
          } catch (const std::invalid_argument&) {
            if (attempt > 100) throw;
          }
        }
      }
      const std::size_t accepted = counts[Outcome::Accepted];
      const bool ok = kind == TamperKind::ReplayToken ? accepted == opt.targets : accepted == 0;
      all_ok = all_ok && ok;
      out << to_string(kind) << ": EnclaveAbort=" << counts[Outcome::EnclaveAbort]
          << " ClientReject=" << counts[Outcome::ClientReject] << " Accepted=" << accepted << ' '
          << (ok ? "OK" : "UNDETECTED") << '\n';
    }
    return all_ok ? kExitOk : kExitVerify;
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Encrypted B+-tree range index with a simulated enclave"};
  app.require_subcommand(1);
  const std::map<std::string, bool> on_off{{"on", true}, {"off", false}};

  BuildOptions b;
  auto* build = app.add_subcommand("build", "encrypt key/value pairs into an index container");
  build->add_option("--input", b.input, "input file")->required();
  build->add_option("--format", b.format, "text or binary")
      ->transform(CLI::CheckedTransformer(std::map<std::string, InputFormat>{{"text", InputFormat::Text},
                                                                              {"binary", InputFormat::Binary}}));
  build->add_option("--b", b.branching, "branching factor")->check(CLI::Range(3u, 65535u));
  build->add_option("--integrity", b.integrity, "on or off")->transform(CLI::CheckedTransformer(on_off));
  build->add_option("--seed", b.seed, "value-order seed");
  build->add_option("--out", b.out, "container path")->required();
  build->add_option("--keys", b.keys, "key file (created if missing)")->required();

  QueryOptions q;
  std::string q_range;
  auto* query = app.add_subcommand("query", "run one range query");
  query->add_option("--index", q.index)->required();
  query->add_option("--keys", q.keys)->required();
  query->add_option("--construction", q.construction)->check(CLI::IsMember({1, 2}));
  query->add_option("--range", q_range, "A:B, bounds may be -inf or inf")->required();
  query->add_flag("--hex", q.hex, "print values as hex");
  query->add_option("--reserved-space", q.reserved_space, "enclave streaming buffer in bytes");

  BenchOptions bo;
  auto* bench = app.add_subcommand("bench", "median latency per workload cell (CSV)");
  bench->add_option("--n", bo.n, "tree sizes")->delimiter(',');
  bench->add_option("--b", bo.branching, "branching factors")->delimiter(',');
  bench->add_option("--result-size", bo.result_sizes, "result sizes")->delimiter(',');
  bench->add_option("--construction", bo.constructions)->delimiter(',')->check(CLI::IsMember({1, 2}));
  bench->add_option("--reps", bo.reps, "queries per cell");
  bench->add_option("--integrity", bo.integrity)->transform(CLI::CheckedTransformer(on_off));
  bench->add_option("--seed", bo.seed);
  bench->add_option("--reserved-space", bo.reserved_space);
  std::string bench_out;
  bench->add_option("--out", bench_out, "CSV path (default stdout)");

  AuditOptions ao;
  auto* audit = app.add_subcommand("audit", "check traces against the leakage functions");
  audit->add_option("--index", ao.index)->required();
  audit->add_option("--keys", ao.keys)->required();
  audit->add_option("--construction", ao.constructions)->delimiter(',')->check(CLI::IsMember({1, 2}));
  audit->add_option("--queries", ao.queries);
  audit->add_option("--seed", ao.seed);
  audit->add_flag("--inject-extra-fetch", ao.inject_extra_fetch, "add one out-of-leakage access per trace");
  audit->add_option("--scope", ao.scope, "probe or formal")
      ->transform(CLI::CheckedTransformer(std::map<std::string, LeakageScope>{{"probe", LeakageScope::Probe},
                                                                               {"formal", LeakageScope::Formal}}));

  TamperOptions to;
  auto* tamper = app.add_subcommand("tamper", "run malicious-host scripts in integrity mode");
  tamper->add_option("--kind", to.kinds, "script names (default all)")->delimiter(',');
  tamper->add_option("--n", to.n);
  tamper->add_option("--b", to.branching)->check(CLI::Range(3u, 65535u));
  tamper->add_option("--targets", to.targets);
  tamper->add_option("--seed", to.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  if (*build) return cmd_build(b, out, err);
  if (*query) {
    try {
      q.range = parse_range(q_range);
    } catch (const UsageError& e) {
      err << "usage error: " << e.what() << '\n';
      return kExitUsage;
    }
    return cmd_query(q, out, err);
  }
  if (*bench) {
    if (!bench_out.empty()) bo.out = bench_out;
    return cmd_bench(bo, out, err);
  }
  if (*audit) return cmd_audit(ao, out, err);
  if (*tamper) return cmd_tamper(to, out, err);
  return kExitUsage;
}

}  // namespace hsbt
