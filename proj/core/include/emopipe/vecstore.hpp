#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emopipe/dataset.hpp"

namespace emopipe {

// Digits after the decimal point in a canonical key component.
inline constexpr int kKeyDigits = 6;

struct KeyedVector {
  std::string key;
  std::vector<double> values;

  bool operator==(const KeyedVector&) const = default;
};

// Fixed-point, 6 fractional digits, round-half-to-even on the exact binary
// value, "-0.000000" folded to "0.000000", comma-joined. Throws DomainError on
// non-finite input.
std::string canonical_key(std::span<const double> values);

KeyedVector make_keyed(std::vector<double> values);

std::vector<KeyedVector> vectorize(const std::vector<RawRecord>& records);

// Vector file: `key<TAB>v1,...,vC` per line. Values use the shortest
// round-trip decimal form, so read_vectors(write_vectors(s)) == s.
std::string format_vector_line(const KeyedVector& kv);
void write_vectors(const std::filesystem::path& path, std::span<const KeyedVector> vectors);

// Throws ParseError on malformed lines, on dimension mismatch (against
// `expected_dim` or, if absent, the first line), and on keys that disagree
// with their values.
std::vector<KeyedVector> read_vectors(const std::filesystem::path& path,
                                      std::optional<std::size_t> expected_dim = std::nullopt);

// Parses one vector-file line; returns nullopt when malformed.
std::optional<KeyedVector> parse_vector_line(std::string_view line);

}  // namespace emopipe
