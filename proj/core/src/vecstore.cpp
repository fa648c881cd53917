#include "emopipe/vecstore.hpp"

#include <charconv>
#include <cmath>

#include "emopipe/error.hpp"
#include "emopipe/io.hpp"
#include "emopipe/text.hpp"

namespace emopipe {

std::string canonical_key(std::span<const double> values) {
  std::string key;
  key.reserve(values.size() * 10);
  char buf[512];
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = values[i];
    if (!std::isfinite(x)) {
      throw DomainError("non-finite component at index " + std::to_string(i));
    }
    // std::to_chars with an explicit precision is exact and ties to even.
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::fixed, kKeyDigits);
    std::string_view digits(buf, static_cast<std::size_t>(end - buf));
    if (digits == "-0.000000") digits.remove_prefix(1);
    if (i) key.push_back(',');
    key.append(digits);
  }
  return key;
}

KeyedVector make_keyed(std::vector<double> values) {
  KeyedVector kv;
  kv.key = canonical_key(values);
  kv.values = std::move(values);
  return kv;
}

std::vector<KeyedVector> vectorize(const std::vector<RawRecord>& records) {
  std::vector<KeyedVector> out;
  out.reserve(records.size());
  for (const auto& rec : records) out.push_back(make_keyed(rec.channels));
  return out;
}

std::string format_vector_line(const KeyedVector& kv) {
  std::string line = kv.key;
  line.push_back('\t');
  text::append_csv_doubles(line, kv.values);
  return line;
}

void write_vectors(const std::filesystem::path& path, std::span<const KeyedVector> vectors) {
  io::LineWriter out(path);
  for (const auto& kv : vectors) out.write(format_vector_line(kv));
  out.close();
}

std::optional<KeyedVector> parse_vector_line(std::string_view line) {
  const auto tab = line.find('\t');
  if (tab == std::string_view::npos) return std::nullopt;
  auto values = text::parse_csv_doubles(line.substr(tab + 1));
  if (!values || values->empty()) return std::nullopt;
  return KeyedVector{std::string(line.substr(0, tab)), std::move(*values)};
}

std::vector<KeyedVector> read_vectors(const std::filesystem::path& path,
                                      std::optional<std::size_t> expected_dim) {
  io::LineReader reader(path);
  std::vector<KeyedVector> out;
  std::string line;
  while (reader.next(line)) {
    auto kv = parse_vector_line(line);
    if (!kv) throw ParseError(reader.name(), reader.line_number(), "malformed vector line");
    if (!expected_dim) expected_dim = kv->values.size();
    if (kv->values.size() != *expected_dim) {
      throw ParseError(reader.name(), reader.line_number(),
                       "expected " + std::to_string(*expected_dim) + " components, got " +
                           std::to_string(kv->values.size()));
    }
    if (kv->key != canonical_key(kv->values)) {
      throw ParseError(reader.name(), reader.line_number(), "key does not match values");
    }
    out.push_back(std::move(*kv));
  }
  return out;
}

}  // namespace emopipe
