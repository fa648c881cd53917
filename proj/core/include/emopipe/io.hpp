#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace emopipe::io {

// Sequential reader over newline-terminated text. Strips a trailing '\r'.
class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path);

  bool next(std::string& line);
  std::size_t line_number() const noexcept { return line_number_; }
  const std::string& name() const noexcept { return name_; }

 private:
  std::ifstream in_;
  std::string name_;
  std::size_t line_number_ = 0;
  std::vector<char> buffer_;
};

class LineWriter {
 public:
  explicit LineWriter(const std::filesystem::path& path);
  ~LineWriter();

  LineWriter(const LineWriter&) = delete;
  LineWriter& operator=(const LineWriter&) = delete;

  void write(std::string_view line);
  // Flushes and reports failure as IoError; the destructor closes silently.
  void close();

 private:
  std::ofstream out_;
  std::string name_;
  std::vector<char> buffer_;
  bool closed_ = false;
};

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace emopipe::io
