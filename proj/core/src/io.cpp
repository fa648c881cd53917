#include "emopipe/io.hpp"

#include <sstream>

#include "emopipe/error.hpp"

namespace emopipe::io {

namespace {
constexpr std::size_t kBufferSize = 1 << 16;
}

LineReader::LineReader(const std::filesystem::path& path)
    : name_(path.string()), buffer_(kBufferSize) {
  in_.rdbuf()->pubsetbuf(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  in_.open(path, std::ios::binary);
  if (!in_) throw IoError("cannot open for reading: " + name_);
}

bool LineReader::next(std::string& line) {
  if (!std::getline(in_, line)) {
    if (in_.bad()) throw IoError("read failure: " + name_);
    return false;
  }
  ++line_number_;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

LineWriter::LineWriter(const std::filesystem::path& path)
    : name_(path.string()), buffer_(kBufferSize) {
  out_.rdbuf()->pubsetbuf(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open for writing: " + name_);
}

LineWriter::~LineWriter() {
  if (!closed_) out_.close();
}

void LineWriter::write(std::string_view line) {
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.put('\n');
}

void LineWriter::close() {
  if (closed_) return;
  closed_ = true;
  out_.close();
  if (!out_) throw IoError("write failure: " + name_);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  LineReader reader(path);
  std::vector<std::string> lines;
  std::string line;
  while (reader.next(line)) lines.push_back(line);
  return lines;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  LineWriter writer(path);
  for (const auto& line : lines) writer.write(line);
  writer.close();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  out.close();
  if (!out) throw IoError("write failure: " + path.string());
}

}  // namespace emopipe::io
