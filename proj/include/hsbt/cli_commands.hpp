#pragma once

// Command implementations behind the `hsbt` tool.
// Exit codes: 0 ok, 1 verification failure, 2 usage or input error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hsbt/bptree.hpp"
#include "hsbt/leakage.hpp"

namespace hsbt {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerify = 1;
inline constexpr int kExitUsage = 2;

enum class InputFormat { Text, Binary };

struct BuildOptions {
  std::filesystem::path input;
  InputFormat format = InputFormat::Text;
  std::uint32_t branching = 10;
  bool integrity = false;
  std::uint64_t seed = 1;
  std::filesystem::path out;
  std::filesystem::path keys;  // read if present, otherwise generated and written
};

struct QueryOptions {
  std::filesystem::path index;
  std::filesystem::path keys;
  int construction = 2;
  KeyRange range;
  bool hex = false;
  std::size_t reserved_space = 64 * 1024;
};

struct BenchOptions {
  std::vector<std::size_t> n{100000};
  std::vector<std::uint32_t> branching{10};
  std::vector<std::size_t> result_sizes{1, 16, 256, 4096};
  std::vector<int> constructions{1, 2};
  std::size_t reps = 1000;
  bool integrity = false;
  std::uint64_t seed = 1;
  std::size_t reserved_space = 64 * 1024;
  std::optional<std::filesystem::path> out;
};

struct AuditOptions {
  std::filesystem::path index;
  std::filesystem::path keys;
  std::vector<int> constructions{1, 2};
  std::size_t queries = 100;
  std::uint64_t seed = 1;
  bool inject_extra_fetch = false;
  LeakageScope scope = LeakageScope::Probe;
};

struct TamperOptions {
  std::vector<std::string> kinds;  // empty = all
  std::size_t n = 10000;
  std::uint32_t branching = 10;
  std::size_t targets = 50;
  std::uint64_t seed = 1;
};

/// "key value" per line (value = rest of the line), or binary records of
/// u32 key, u32 length, bytes (little-endian).
std::vector<KeyValue> read_pairs(const std::filesystem::path& path, InputFormat format);

/// "A:B" with decimal bounds; "-inf" and "inf" map to the open sentinels.
KeyRange parse_range(const std::string& text);

int cmd_build(const BuildOptions& opt, std::ostream& out, std::ostream& err);
int cmd_query(const QueryOptions& opt, std::ostream& out, std::ostream& err);
int cmd_bench(const BenchOptions& opt, std::ostream& out, std::ostream& err);
int cmd_audit(const AuditOptions& opt, std::ostream& out, std::ostream& err);
int cmd_tamper(const TamperOptions& opt, std::ostream& out, std::ostream& err);

/// Parses argv (subcommand first) and dispatches.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hsbt
