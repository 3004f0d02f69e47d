#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace rlsta {

using json = nlohmann::json;

// Stable 64-bit FNV-1a. std::hash is not stable across builds, this is.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

// SplitMix64 finalizer; used to mix seeds.
std::uint64_t mix64(std::uint64_t x);

// request_seed = hash(run_seed, problem_id, sample_index)
std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view problem_id,
                          std::uint64_t index);

std::string hex64(std::uint64_t value);

// Git blob hash ("blob <len>\0" + content), hex SHA-1.
std::string git_blob_hash(std::string_view content);

// Deterministic random source. The standard distributions are not portable across
// library implementations, so sampling goes through uniform() only.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Index drawn from unnormalized non-negative weights.
  std::size_t categorical(const std::vector<double>& weights);

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool contains(std::string_view haystack, std::string_view needle);

// Python str.format-style rendering: {name} substituted, {{ and }} unescaped.
// Unknown placeholder names are an error.
std::string format_template(std::string_view tmpl,
                            const std::vector<std::pair<std::string, std::string>>& values);

// Extracts a JSON value from free-form model output: strips markdown fences and
// surrounding prose, tolerates trailing commas. Returns nullopt when nothing parses.
std::optional<json> parse_lenient_json(std::string_view text);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view content);

double log_sum_exp(const std::vector<double>& values);

}  // namespace rlsta
