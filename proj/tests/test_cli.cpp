#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "hsbt/cli_commands.hpp"
#include "test_support.hpp"

using namespace hsbt;
using namespace hsbt::test;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hsbt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("hsbt_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::vector<KeyValue> write_text_pairs(const std::string& file, std::size_t n, std::uint64_t seed) {
  Csprng rng(seed);
  std::vector<KeyValue> pairs;
  std::vector<bool> used(1u << 20, false);
  std::ofstream out(file);
  while (pairs.size() < n) {
    const auto k = static_cast<SearchKey>(1 + rng.uniform((1u << 20) - 1));
    if (used[k]) continue;
    used[k] = true;
    std::string v = "v" + std::to_string(rng.uniform(1000000));
    out << k << ' ' << v << '\n';
    pairs.push_back({k, Bytes(v.begin(), v.end())});
  }
  return pairs;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("build then query agrees with the oracle") {
  TempDir dir;
  const auto pairs = write_text_pairs(dir / "in.txt", 1000, 51);
  const Run b = cli({"build", "--input", dir / "in.txt", "--b", "10", "--integrity", "on", "--out", dir / "x.idx",
                     "--keys", dir / "x.keys"});
  REQUIRE(b.code == kExitOk);
  CHECK(b.out.find("values 1000") != std::string::npos);

  Csprng rng(3);
  for (int c : {1, 2}) {
    for (int q = 0; q < 25; ++q) {
      const KeyRange r = random_range(rng, 1u << 20);
      const Run res = cli({"query", "--index", dir / "x.idx", "--keys", dir / "x.keys", "--construction",
                           std::to_string(c), "--range", std::to_string(r.lo) + ":" + std::to_string(r.hi)});
      REQUIRE(res.code == kExitOk);
      std::vector<std::string> got = lines(res.out);
      std::sort(got.begin(), got.end());
      std::vector<std::string> want;
      for (const Bytes& v : scan_oracle(pairs, r)) want.emplace_back(v.begin(), v.end());
      std::sort(want.begin(), want.end());
      CHECK(got == want);
    }
  }

  SUBCASE("open bounds") {
    const Run all = cli({"query", "--index", dir / "x.idx", "--keys", dir / "x.keys", "--range", "-inf:inf"});
    CHECK(all.code == kExitOk);
    CHECK(lines(all.out).size() == 1000);
  }
  SUBCASE("empty range prints nothing") {
    const Run e = cli({"query", "--index", dir / "x.idx", "--keys", dir / "x.keys", "--range", "2000000:2000001"});
    CHECK(e.code == kExitOk);
    CHECK(e.out.empty());
  }
  SUBCASE("wrong key file is a verification failure") {
    write_key_file(dir / "other.keys", SecretKey::generate());
    const Run w = cli({"query", "--index", dir / "x.idx", "--keys", dir / "other.keys", "--range", "1:100"});
    CHECK(w.code == kExitVerify);
  }
  SUBCASE("audit passes, injected fetches fail") {
    const Run a = cli({"audit", "--index", dir / "x.idx", "--keys", dir / "x.keys", "--queries", "30"});
    CHECK(a.code == kExitOk);
    CHECK(a.out.find("construction 1: 30/30 PASS, 0 FAIL") != std::string::npos);
    CHECK(a.out.find("construction 2: 30/30 PASS, 0 FAIL") != std::string::npos);
    const Run bad =
        cli({"audit", "--index", dir / "x.idx", "--keys", dir / "x.keys", "--queries", "10", "--inject-extra-fetch"});
    CHECK(bad.code == kExitVerify);
    CHECK(bad.out.find("0/10 PASS") != std::string::npos);
  }
}

TEST_CASE("binary input") {
  TempDir dir;
  {
    std::ofstream out(dir / "in.bin", std::ios::binary);
    for (std::uint32_t k = 1; k <= 50; ++k) {
      const std::uint32_t len = 3;
      const char v[3] = {'a', static_cast<char>('a' + k % 26), 'z'};
      out.write(reinterpret_cast<const char*>(&k), 4);
      out.write(reinterpret_cast<const char*>(&len), 4);
      out.write(v, 3);
    }
  }
  const auto pairs = read_pairs(dir / "in.bin", InputFormat::Binary);
  REQUIRE(pairs.size() == 50);
  CHECK(pairs[1].key == 2);
  CHECK(pairs[1].value == Bytes{'a', 'c', 'z'});
  const Run b = cli({"build", "--input", dir / "in.bin", "--format", "binary", "--out", dir / "x.idx", "--keys",
                     dir / "x.keys"});
  CHECK(b.code == kExitOk);
  const Run q = cli({"query", "--index", dir / "x.idx", "--keys", dir / "x.keys", "--range", "2:3", "--hex"});
  CHECK(q.code == kExitOk);
  std::vector<std::string> got = lines(q.out);
  std::sort(got.begin(), got.end());
  CHECK(got == std::vector<std::string>{"61637a", "61647a"});
}

TEST_CASE("same seed and key file give the same container up to nonces") {
  TempDir dir;
  write_text_pairs(dir / "in.txt", 300, 52);
  for (const char* out : {"a.idx", "b.idx"}) {
    REQUIRE(cli({"build", "--input", dir / "in.txt", "--seed", "5", "--out", dir / out, "--keys", dir / "k.keys"})
                .code == kExitOk);
  }
  const EncryptedIndex a = EncryptedIndex::read_file(dir / "a.idx");
  const EncryptedIndex b = EncryptedIndex::read_file(dir / "b.idx");
  const SecretKey sk = read_key_file(dir / "k.keys");
  CHECK(a.header == b.header);
  CHECK(a.serialize() != b.serialize());
  CHECK(decrypt_nodes(sk.tree, a) == decrypt_nodes(sk.tree, b));
  CHECK(decrypt_results(sk.value, a.values) == decrypt_results(sk.value, b.values));
}

TEST_CASE("input errors") {
  TempDir dir;
  { std::ofstream(dir / "empty.txt"); }
  CHECK(cli({"build", "--input", dir / "empty.txt", "--out", dir / "x.idx", "--keys", dir / "k"}).code ==
        kExitUsage);
  {
    std::ofstream bad(dir / "dup.txt");
    bad << "0 zero\n";
  }
  CHECK(cli({"build", "--input", dir / "dup.txt", "--out", dir / "x.idx", "--keys", dir / "k"}).code == kExitUsage);
  CHECK(cli({"build", "--input", dir / "missing.txt", "--out", dir / "x.idx", "--keys", dir / "k"}).code != kExitOk);
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"query", "--index", dir / "x.idx"}).code == kExitUsage);
  CHECK_THROWS(parse_range("5:3"));
  CHECK_THROWS(parse_range("abc"));
  CHECK(parse_range("-inf:7") == KeyRange{kNegInfKey, 7});
  CHECK(parse_range("3:+inf") == KeyRange{3, kPosInfKey});
}

TEST_CASE("bench writes well-formed rows") {
  TempDir dir;
  const Run r = cli({"bench", "--n", "2000", "--b", "10", "--result-size", "1,16", "--reps", "20", "--out",
                     dir / "bench.csv"});
  REQUIRE(r.code == kExitOk);
  std::ifstream in(dir / "bench.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  const auto rows = lines(ss.str());
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == CellReport::csv_header());
  const std::size_t columns = std::count(rows[0].begin(), rows[0].end(), ',');
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(std::count(rows[i].begin(), rows[i].end(), ',') == columns);
    CHECK(rows[i].find(",2000,") != std::string::npos);
  }
  CHECK(r.err.find("ratio_c2_c1=") != std::string::npos);
}

TEST_CASE("tamper command") {
  const Run r = cli({"tamper", "--n", "2000", "--targets", "5"});
  CHECK(r.code == kExitOk);
  CHECK(lines(r.out).size() == 7);
  CHECK(r.out.find("UNDETECTED") == std::string::npos);
  CHECK(cli({"tamper", "--kind", "nonsense"}).code == kExitUsage);
}

TEST_CASE("installed binary") {
  const char* bin = std::getenv("HSBT_CLI");
  if (!bin) return;
  const std::string cmd = std::string(bin) + " tamper --kind replay-token --n 500 --targets 2 > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(std::system((std::string(bin) + " bogus 2> /dev/null").c_str()) != 0);
}
