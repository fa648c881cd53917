#include "emopipe/dataset.hpp"

#include <cmath>
#include <set>
#include <string>
#include <tuple>

#include "emopipe/error.hpp"
#include "emopipe/io.hpp"
#include "emopipe/random.hpp"
#include "emopipe/text.hpp"

namespace emopipe {

ClassId::ClassId(int id) : id_(id) {
  if (id < 1 || id > kClassCount) {
    throw DomainError("class id " + std::to_string(id) + " outside 1.." +
                      std::to_string(kClassCount));
  }
}

void DatasetConfig::validate() const {
  if (subjects < 1 || videos < 1 || samples_per_video < 1 || channels < 1) {
    throw ConfigError("dataset counts must all be >= 1");
  }
  if (!(class_separation >= 0.0) || !std::isfinite(class_separation)) {
    throw ConfigError("class_separation must be a finite nonnegative number");
  }
  if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("noise_sigma must be a finite positive number");
  }
}

std::vector<double> synthetic_class_mean(ClassId id, std::size_t channels, double separation) {
  std::vector<double> mean(channels);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    mean[ch] = separation * static_cast<double>((id.index() + ch) % kClassCount);
  }
  return mean;
}

namespace {

RatingTriple draw_ratings(Rng& rng, const LabelBits& bits) {
  // Bit 1 draws from [5, 9), bit 0 from [1, 4.5), so thresholding recovers it.
  auto axis = [&rng](bool high) {
    const double u = rng.uniform01();
    return high ? 5.0 + 4.0 * u : kRatingMin + (kRatingThreshold - kRatingMin) * u;
  };
  RatingTriple r;
  r.valence = axis(bits.valence);
  r.arousal = axis(bits.arousal);
  r.dominance = axis(bits.dominance);
  return r;
}

}  // namespace

Dataset generate_synthetic(const DatasetConfig& config) {
  config.validate();
  Rng rng(config.seed);
  Dataset out;
  out.channels = static_cast<std::size_t>(config.channels);
  out.records.reserve(static_cast<std::size_t>(config.subjects) *
                      static_cast<std::size_t>(config.videos) *
                      static_cast<std::size_t>(config.samples_per_video));
  for (int s = 1; s <= config.subjects; ++s) {
    for (int v = 1; v <= config.videos; ++v) {
      const ClassId cls(static_cast<int>(rng.uniform_index(kClassCount)) + 1);
      out.ratings[{s, v}] = draw_ratings(rng, decode_label(cls));
      const auto mean = synthetic_class_mean(cls, out.channels, config.class_separation);
      for (int p = 0; p < config.samples_per_video; ++p) {
        RawRecord rec{s, v, p, std::vector<double>(out.channels)};
        for (std::size_t ch = 0; ch < out.channels; ++ch) {
          rec.channels[ch] = mean[ch] + config.noise_sigma * rng.normal();
        }
        out.records.push_back(std::move(rec));
      }
    }
  }
  return out;
}

std::vector<RawRecord> normalize(const std::vector<RawRecord>& records) {
  if (records.empty()) return {};
  const std::size_t channels = records.front().channels.size();
  std::map<int, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].channels.size() != channels) {
      throw DomainError("record " + std::to_string(i) + " has " +
                        std::to_string(records[i].channels.size()) + " channels, expected " +
                        std::to_string(channels));
    }
    by_subject[records[i].subject].push_back(i);
  }

  std::vector<RawRecord> out = records;
  for (const auto& [subject, rows] : by_subject) {
    const double n = static_cast<double>(rows.size());
    for (std::size_t ch = 0; ch < channels; ++ch) {
      if (rows.size() < 2) {
        throw DegenerateChannelError(subject, ch, "fewer than 2 samples");
      }
      const double first = records[rows.front()].channels[ch];
      bool constant = true;
      double sum = 0.0;
      for (std::size_t r : rows) {
        const double x = records[r].channels[ch];
        if (!std::isfinite(x)) throw DomainError("non-finite reading for subject " + std::to_string(subject));
        constant = constant && x == first;
        sum += x;
      }
      if (constant) throw DegenerateChannelError(subject, ch, "constant values");
      const double mean = sum / n;
      double ss = 0.0;
      for (std::size_t r : rows) {
        const double d = records[r].channels[ch] - mean;
        ss += d * d;
      }
      const double sd = std::sqrt(ss / (n - 1.0));
      if (!(sd > 0.0)) throw DegenerateChannelError(subject, ch, "zero variance");
      for (std::size_t r : rows) {
        out[r].channels[ch] = (records[r].channels[ch] - mean) / sd;
      }
    }
  }
  return out;
}

void validate_rating(const RatingTriple& r) {
  for (double x : {r.valence, r.arousal, r.dominance}) {
    if (!(x >= kRatingMin && x <= kRatingMax)) {
      throw DomainError("rating " + text::format_double(x) + " outside [1, 9]");
    }
  }
}

LabelBits threshold_bits(const RatingTriple& r) {
  return {r.valence > kRatingThreshold, r.arousal > kRatingThreshold,
          r.dominance > kRatingThreshold};
}

ClassId encode_bits(const LabelBits& bits) {
  return ClassId(4 * int(bits.valence) + 2 * int(bits.arousal) + int(bits.dominance) + 1);
}

ClassId encode_label(const RatingTriple& rating) {
  validate_rating(rating);
  return encode_bits(threshold_bits(rating));
}

LabelBits decode_label(ClassId id) {
  const int code = id.value() - 1;
  return {(code & 4) != 0, (code & 2) != 0, (code & 1) != 0};
}

// ---------------------------------------------------------------------------
// CSV I/O

std::vector<RawRecord> read_signals(const std::filesystem::path& path, std::size_t* channels_out) {
  io::LineReader reader(path);
  std::string line;
  if (!reader.next(line)) throw ParseError(reader.name(), 1, "missing header");
  const auto header = text::split(line, ',');
  if (header.size() < 4 || header[0] != "subject" || header[1] != "video" || header[2] != "sample") {
    throw ParseError(reader.name(), 1, "expected header subject,video,sample,ch1,...");
  }
  const std::size_t channels = header.size() - 3;
  for (std::size_t c = 0; c < channels; ++c) {
    if (header[3 + c] != "ch" + std::to_string(c + 1)) {
      throw ParseError(reader.name(), 1, "expected column ch" + std::to_string(c + 1));
    }
  }

  std::vector<RawRecord> records;
  std::set<std::tuple<int, int, int>> seen;
  while (reader.next(line)) {
    const auto fields = text::split(line, ',');
    if (fields.size() != channels + 3) {
      throw ParseError(reader.name(), reader.line_number(),
                       "expected " + std::to_string(channels + 3) + " columns, got " +
                           std::to_string(fields.size()));
    }
    auto subject = text::parse_int<int>(fields[0]);
    auto video = text::parse_int<int>(fields[1]);
    auto sample = text::parse_int<int>(fields[2]);
    if (!subject || !video || !sample || *subject < 1 || *video < 1 || *sample < 0) {
      throw ParseError(reader.name(), reader.line_number(), "bad subject/video/sample id");
    }
    RawRecord rec{*subject, *video, *sample, std::vector<double>(channels)};
    for (std::size_t c = 0; c < channels; ++c) {
      auto v = text::parse_double(fields[3 + c]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError(reader.name(), reader.line_number(),
                         "bad reading in column ch" + std::to_string(c + 1));
      }
      rec.channels[c] = *v;
    }
    if (!seen.emplace(rec.subject, rec.video, rec.sample).second) {
      throw ParseError(reader.name(), reader.line_number(), "duplicate (subject, video, sample)");
    }
    records.push_back(std::move(rec));
  }
  if (channels_out) *channels_out = channels;
  return records;
}

RatingsTable read_ratings(const std::filesystem::path& path) {
  io::LineReader reader(path);
  std::string line;
  if (!reader.next(line) || line != "subject,video,valence,arousal,dominance") {
    throw ParseError(reader.name(), 1, "expected header subject,video,valence,arousal,dominance");
  }
  RatingsTable table;
  while (reader.next(line)) {
    const auto f = text::split(line, ',');
    if (f.size() != 5) {
      throw ParseError(reader.name(), reader.line_number(), "expected 5 columns");
    }
    auto subject = text::parse_int<int>(f[0]);
    auto video = text::parse_int<int>(f[1]);
    auto va = text::parse_double(f[2]);
    auto ar = text::parse_double(f[3]);
    auto dom = text::parse_double(f[4]);
    if (!subject || !video || !va || !ar || !dom) {
      throw ParseError(reader.name(), reader.line_number(), "malformed rating row");
    }
    RatingTriple r{*va, *ar, *dom};
    try {
      validate_rating(r);
    } catch (const DomainError& e) {
      throw ParseError(reader.name(), reader.line_number(), e.what());
    }
    if (!table.emplace(SubjectVideo{*subject, *video}, r).second) {
      throw ParseError(reader.name(), reader.line_number(), "duplicate (subject, video)");
    }
  }
  return table;
}

Dataset load_raw(const std::filesystem::path& signals, const std::filesystem::path& ratings) {
  Dataset ds;
  ds.records = read_signals(signals, &ds.channels);
  ds.ratings = read_ratings(ratings);
  for (const auto& rec : ds.records) {
    if (!ds.ratings.count({rec.subject, rec.video})) {
      throw ReferentialError("no rating for subject " + std::to_string(rec.subject) + ", video " +
                             std::to_string(rec.video));
    }
  }
  return ds;
}

void write_signals(const std::filesystem::path& path, const std::vector<RawRecord>& records,
                   std::size_t channels) {
  io::LineWriter out(path);
  std::string line = "subject,video,sample";
  for (std::size_t c = 0; c < channels; ++c) line += ",ch" + std::to_string(c + 1);
  out.write(line);
  for (const auto& rec : records) {
    if (rec.channels.size() != channels) throw DomainError("record channel count mismatch");
    line.clear();
    line += std::to_string(rec.subject);
    line += ',';
    line += std::to_string(rec.video);
    line += ',';
    line += std::to_string(rec.sample);
    for (double x : rec.channels) {
      line += ',';
      text::append_double(line, x);
    }
    out.write(line);
  }
  out.close();
}

void write_ratings(const std::filesystem::path& path, const RatingsTable& ratings) {
  io::LineWriter out(path);
  out.write("subject,video,valence,arousal,dominance");
  for (const auto& [sv, r] : ratings) {
    out.write(std::to_string(sv.subject) + "," + std::to_string(sv.video) + "," +
              text::format_double(r.valence) + "," + text::format_double(r.arousal) + "," +
              text::format_double(r.dominance));
  }
  out.close();
}

}  // namespace emopipe
