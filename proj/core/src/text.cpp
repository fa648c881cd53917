#include "emopipe/text.hpp"

#include <cmath>

namespace emopipe::text {

std::optional<std::vector<double>> parse_csv_doubles(std::string_view s) {
  std::vector<double> values;
  if (s.empty()) return values;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(',', start);
    const auto token = s.substr(start, pos == std::string_view::npos ? s.npos : pos - start);
    auto v = parse_double(token);
    if (!v || !std::isfinite(*v)) return std::nullopt;
    values.push_back(*v);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return values;
}

void append_csv_doubles(std::string& out, const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out.push_back(',');
    append_double(out, values[i]);
  }
}

}  // namespace emopipe::text
