#include "emopipe/gridrun.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <queue>

#include "emopipe/error.hpp"
#include "emopipe/io.hpp"
#include "emopipe/parallel.hpp"

namespace emopipe::gridrun {

namespace fs = std::filesystem;

Partitioner::Partitioner(std::size_t partitions) : partitions_(partitions) {
  if (partitions == 0) throw ConfigError("partition count must be >= 1");
}

std::filesystem::path default_scratch_dir() {
  if (const char* env = std::getenv("EMOPIPE_SCRATCH"); env && *env) return fs::path(env);
  return fs::temp_directory_path();
}

std::string part_name(std::size_t partition) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "part-%05zu", partition);
  return buf;
}

void concat_files(std::span<const fs::path> parts, const fs::path& dest) {
  std::ofstream out(dest, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + dest.string());
  for (const auto& p : parts) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + p.string());
    if (fs::file_size(p) > 0) out << in.rdbuf();
  }
  out.close();
  if (!out) throw IoError("write failure: " + dest.string());
}

namespace {

std::string truncate_for_message(std::string_view s) {
  constexpr std::size_t kMax = 120;
  if (s.size() <= kMax) return std::string(s);
  return std::string(s.substr(0, kMax)) + "...";
}

// ---------------------------------------------------------------------------
// Input splits

struct Split {
  std::size_t shard = 0;
  std::uint64_t offset = 0;
  std::uint64_t first_line = 1;
  std::uint64_t lines = 0;
};

void plan_splits(const fs::path& path, std::size_t shard, std::size_t split_bytes,
                 std::vector<Split>& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input shard: " + path.string());
  std::vector<char> block(1 << 20);
  std::uint64_t pos = 0;
  Split cur{shard, 0, 1, 0};
  bool partial = false;
  while (in) {
    in.read(block.data(), static_cast<std::streamsize>(block.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) break;
    const char* base = block.data();
    const char* p = base;
    const char* end = base + got;
    while (p < end) {
      const char* nl = static_cast<const char*>(std::memchr(p, '\n', static_cast<std::size_t>(end - p)));
      if (!nl) {
        partial = true;
        break;
      }
      partial = false;
      ++cur.lines;
      const std::uint64_t next_start = pos + static_cast<std::uint64_t>(nl - base) + 1;
      if (next_start - cur.offset >= split_bytes) {
        out.push_back(cur);
        cur = Split{shard, next_start, cur.first_line + cur.lines, 0};
      }
      p = nl + 1;
    }
    if (p < end) partial = true;
    pos += got;
  }
  if (partial) ++cur.lines;
  if (cur.lines > 0) out.push_back(cur);
}

// ---------------------------------------------------------------------------
// Map side

struct Entry {
  std::string data;  // key '\t' value
  std::uint32_t key_len = 0;

  std::string_view key() const { return std::string_view(data).substr(0, key_len); }
  std::string_view value() const { return std::string_view(data).substr(key_len + 1); }
};

bool entry_less(const Entry& a, const Entry& b) {
  const int c = a.key().compare(b.key());
  if (c != 0) return c < 0;
  return a.value() < b.value();
}

void merge_counters(Counters& into, const Counters& from) {
  for (const auto& [name, v] : from) into[name] += v;
}

class MapTask final : public Emitter {
 public:
  MapTask(std::size_t task, const JobSpec& spec, const Partitioner& partitioner, const fs::path& scratch)
      : task_(task), spec_(spec), partitioner_(partitioner), scratch_(scratch),
        buffers_(partitioner.partitions()), runs_(partitioner.partitions()) {}

  void emit(std::string_view key, std::string_view value) override {
    if (key.find_first_of("\t\n") != std::string_view::npos) {
      throw JobError("emitted key contains tab or newline: '" + truncate_for_message(key) + "'");
    }
    if (value.find('\n') != std::string_view::npos) {
      throw JobError("emitted value contains newline for key '" + truncate_for_message(key) + "'");
    }
    Entry e;
    e.data.reserve(key.size() + value.size() + 1);
    e.data.append(key);
    e.data.push_back('\t');
    e.data.append(value);
    e.key_len = static_cast<std::uint32_t>(key.size());
    buffered_bytes_ += e.data.size() + sizeof(Entry);
    buffers_[partitioner_(key)].push_back(std::move(e));
    ++output_records_;
    if (buffered_bytes_ >= spec_.spill_bytes) spill();
  }

  void increment(std::string_view counter, std::int64_t delta) override {
    auto it = counters_.find(counter);
    if (it == counters_.end()) it = counters_.emplace(std::string(counter), 0).first;
    it->second += delta;
  }

  void run(const Split& split) {
    const fs::path& path = spec_.inputs[split.shard];
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open input shard: " + path.string());
    in.seekg(static_cast<std::streamoff>(split.offset));
    std::string line;
    MapContext ctx{split.shard, 0, &path};
    for (std::uint64_t i = 0; i < split.lines; ++i) {
      if (!std::getline(in, line)) throw IoError("input shard changed during job: " + path.string());
      if (!line.empty() && line.back() == '\r') line.pop_back();
      ctx.line = static_cast<std::size_t>(split.first_line + i);
      ++input_records_;
      try {
        spec_.mapper(ctx, line, *this);
      } catch (const std::exception& e) {
        throw JobError("job '" + spec_.name + "': mapper failed on " + path.string() + ":" +
                       std::to_string(ctx.line) + " record '" + truncate_for_message(line) +
                       "': " + e.what());
      }
    }
    spill();
  }

  std::vector<std::vector<fs::path>>& runs() { return runs_; }
  const Counters& counters() const { return counters_; }
  std::uint64_t input_records() const { return input_records_; }
  std::uint64_t output_records() const { return output_records_; }
  std::uint64_t spill_count() const { return spill_count_; }

 private:
  void spill() {
    for (std::size_t p = 0; p < buffers_.size(); ++p) {
      auto& buf = buffers_[p];
      if (buf.empty()) continue;
      std::sort(buf.begin(), buf.end(), entry_less);
      char name[64];
      std::snprintf(name, sizeof(name), "m%06zu-s%04zu-p%05zu.run", task_, spill_index_, p);
      const fs::path run = scratch_ / name;
      io::LineWriter out(run);
      for (const auto& e : buf) out.write(e.data);
      out.close();
      runs_[p].push_back(run);
      ++spill_count_;
      buf.clear();
      buf.shrink_to_fit();
    }
    ++spill_index_;
    buffered_bytes_ = 0;
  }

  std::size_t task_;
  const JobSpec& spec_;
  const Partitioner& partitioner_;
  fs::path scratch_;
  std::vector<std::vector<Entry>> buffers_;
  std::vector<std::vector<fs::path>> runs_;
  Counters counters_;
  std::size_t buffered_bytes_ = 0;
  std::size_t spill_index_ = 0;
  std::uint64_t input_records_ = 0;
  std::uint64_t output_records_ = 0;
  std::uint64_t spill_count_ = 0;
};

// ---------------------------------------------------------------------------
// Reduce side

class RunCursor {
 public:
  explicit RunCursor(const fs::path& path) : reader_(path) { advance(); }

  bool valid() const { return valid_; }
  std::string_view key() const { return std::string_view(line_).substr(0, tab_); }
  std::string_view value() const { return std::string_view(line_).substr(tab_ + 1); }
  const std::string& line() const { return line_; }

  void advance() {
    valid_ = reader_.next(line_);
    if (valid_) {
      tab_ = line_.find('\t');
      if (tab_ == std::string::npos) throw IoError("corrupt spill run: " + reader_.name());
    }
  }

 private:
  io::LineReader reader_;
  std::string line_;
  std::size_t tab_ = 0;
  bool valid_ = false;
};

// Streams the (key, value)-ordered union of `runs` into `sink`.
template <typename Sink>
void merge_runs(const std::vector<fs::path>& runs, Sink&& sink) {
  std::vector<std::unique_ptr<RunCursor>> cursors;
  cursors.reserve(runs.size());
  for (const auto& r : runs) cursors.push_back(std::make_unique<RunCursor>(r));
  auto greater = [&cursors](std::size_t a, std::size_t b) {
    const auto& x = *cursors[a];
    const auto& y = *cursors[b];
    const int c = x.key().compare(y.key());
    if (c != 0) return c > 0;
    const int d = x.value().compare(y.value());
    if (d != 0) return d > 0;
    return a > b;
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(greater)> heap(greater);
  for (std::size_t i = 0; i < cursors.size(); ++i) {
    if (cursors[i]->valid()) heap.push(i);
  }
  while (!heap.empty()) {
    const std::size_t i = heap.top();
    heap.pop();
    sink(*cursors[i]);
    cursors[i]->advance();
    if (cursors[i]->valid()) heap.push(i);
  }
}

class ReduceTask final : public ReduceOutput {
 public:
  ReduceTask(std::size_t partition, const JobSpec& spec, const fs::path& scratch, const fs::path& output)
      : partition_(partition), spec_(spec), scratch_(scratch), output_(output) {}

  void write(std::string_view line) override {
    if (line.find('\n') != std::string_view::npos) {
      throw JobError("reducer output line contains a newline");
    }
    out_->write(line);
  }

  void increment(std::string_view counter, std::int64_t delta) override {
    auto it = counters_.find(counter);
    if (it == counters_.end()) it = counters_.emplace(std::string(counter), 0).first;
    it->second += delta;
  }

  void run(std::vector<fs::path> runs) {
    // Reduce the fan-in with intermediate merge passes if needed.
    std::size_t pass = 0;
    const std::size_t fanin = std::max<std::size_t>(2, spec_.merge_fanin);
    while (runs.size() > fanin) {
      std::vector<fs::path> next;
      for (std::size_t start = 0; start < runs.size(); start += fanin) {
        const std::size_t stop = std::min(runs.size(), start + fanin);
        std::vector<fs::path> group(runs.begin() + static_cast<std::ptrdiff_t>(start),
                                    runs.begin() + static_cast<std::ptrdiff_t>(stop));
        char name[64];
        std::snprintf(name, sizeof(name), "r%05zu-pass%03zu-%06zu.run", partition_, pass, start);
        const fs::path merged = scratch_ / name;
        io::LineWriter w(merged);
        merge_runs(group, [&w](const RunCursor& c) { w.write(c.line()); });
        w.close();
        for (const auto& g : group) fs::remove(g);
        next.push_back(merged);
      }
      runs = std::move(next);
      ++pass;
    }

    out_.emplace(output_);
    std::string current;
    std::vector<std::string> values;
    bool have = false;
    auto flush = [&] {
      if (!have) return;
      ++groups_;
      try {
        spec_.reducer(current, values, *this);
      } catch (const JobError&) {
        throw;
      } catch (const std::exception& e) {
        throw JobError("job '" + spec_.name + "': reducer failed on key '" +
                       truncate_for_message(current) + "': " + e.what());
      }
      values.clear();
    };
    merge_runs(runs, [&](const RunCursor& c) {
      if (!have || c.key() != current) {
        flush();
        current.assign(c.key());
        have = true;
      }
      values.emplace_back(c.value());
    });
    flush();
    out_->close();
  }

  const Counters& counters() const { return counters_; }
  std::uint64_t groups() const { return groups_; }

 private:
  std::size_t partition_;
  const JobSpec& spec_;
  fs::path scratch_;
  fs::path output_;
  std::optional<io::LineWriter> out_;
  Counters counters_;
  std::uint64_t groups_ = 0;
};

}  // namespace

ScratchDir::ScratchDir(const fs::path& root, const std::string& label) {
  static std::atomic<std::uint64_t> seq{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  std::string name = "emopipe-" + label + "-" + std::to_string(::getpid()) + "-" +
                     std::to_string(seq.fetch_add(1)) + "-" + std::to_string(stamp);
  for (char& c : name) {
    if (c == '/' || c == '\\') c = '_';
  }
  path_ = (root.empty() ? default_scratch_dir() : root) / name;
  std::error_code ec;
  fs::create_directories(path_, ec);
  if (ec) throw IoError("cannot create scratch directory " + path_.string() + ": " + ec.message());
}

ScratchDir::~ScratchDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

JobResult run_job(const JobSpec& spec) {
  if (!spec.mapper || !spec.reducer) throw ConfigError("job '" + spec.name + "': mapper and reducer required");
  if (spec.workers == 0) throw ConfigError("job '" + spec.name + "': workers must be >= 1");
  if (spec.output_dir.empty()) throw ConfigError("job '" + spec.name + "': output_dir required");
  if (spec.split_bytes == 0) throw ConfigError("job '" + spec.name + "': split_bytes must be >= 1");
  const Partitioner partitioner(spec.partitions);

  std::vector<Split> splits;
  for (std::size_t i = 0; i < spec.inputs.size(); ++i) {
    if (!fs::exists(spec.inputs[i])) throw IoError("input shard does not exist: " + spec.inputs[i].string());
    plan_splits(spec.inputs[i], i, spec.split_bytes, splits);
  }

  std::error_code ec;
  fs::create_directories(spec.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + spec.output_dir.string() + ": " + ec.message());
  ScratchDir scratch(spec.scratch_dir, spec.name);

  JobResult result;
  result.map_tasks = splits.size();

  std::vector<std::unique_ptr<MapTask>> maps(splits.size());
  parallel_for(splits.size(), spec.workers, [&](std::size_t t) {
    auto task = std::make_unique<MapTask>(t, spec, partitioner, scratch.path());
    task->run(splits[t]);
    maps[t] = std::move(task);
  });

  // Shuffle barrier: collect runs per partition in task order.
  std::vector<std::vector<fs::path>> runs(spec.partitions);
  for (auto& task : maps) {
    for (std::size_t p = 0; p < spec.partitions; ++p) {
      auto& r = task->runs()[p];
      runs[p].insert(runs[p].end(), r.begin(), r.end());
    }
    merge_counters(result.counters, task->counters());
    result.map_input_records += task->input_records();
    result.map_output_records += task->output_records();
    result.spill_runs += task->spill_count();
  }
  maps.clear();

  result.outputs.resize(spec.partitions);
  for (std::size_t p = 0; p < spec.partitions; ++p) result.outputs[p] = spec.output_dir / part_name(p);

  std::vector<std::unique_ptr<ReduceTask>> reduces(spec.partitions);
  parallel_for(spec.partitions, spec.workers, [&](std::size_t p) {
    auto task = std::make_unique<ReduceTask>(p, spec, scratch.path(), result.outputs[p]);
    task->run(std::move(runs[p]));
    reduces[p] = std::move(task);
  });
  for (auto& task : reduces) {
    merge_counters(result.counters, task->counters());
    result.reduce_groups += task->groups();
  }
  return result;
}

}  // namespace emopipe::gridrun
