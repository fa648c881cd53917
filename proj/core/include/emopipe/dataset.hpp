#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

namespace emopipe {

inline constexpr int kClassCount = 8;
inline constexpr double kRatingMin = 1.0;
inline constexpr double kRatingMax = 9.0;
// A rating sets its axis bit only when strictly above this threshold.
inline constexpr double kRatingThreshold = 4.5;

struct RawRecord {
  int subject = 0;
  int video = 0;
  int sample = 0;
  std::vector<double> channels;

  bool operator==(const RawRecord&) const = default;
};

struct RatingTriple {
  double valence = kRatingMin;
  double arousal = kRatingMin;
  double dominance = kRatingMin;

  bool operator==(const RatingTriple&) const = default;
};

// One of the eight emotion classes, numbered 1..8.
class ClassId {
 public:
  // Throws DomainError outside 1..8.
  explicit ClassId(int id);

  int value() const noexcept { return id_; }
  // 0-based position for array indexing.
  std::size_t index() const noexcept { return static_cast<std::size_t>(id_ - 1); }

  auto operator<=>(const ClassId&) const = default;

 private:
  int id_;
};

struct LabelBits {
  bool valence = false;
  bool arousal = false;
  bool dominance = false;

  bool operator==(const LabelBits&) const = default;
};

struct SubjectVideo {
  int subject = 0;
  int video = 0;

  auto operator<=>(const SubjectVideo&) const = default;
};

using RatingsTable = std::map<SubjectVideo, RatingTriple>;

struct DatasetConfig {
  int subjects = 32;
  int videos = 40;
  int samples_per_video = 8064;
  int channels = 40;
  double class_separation = 10.0;
  double noise_sigma = 0.5;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

struct Dataset {
  std::size_t channels = 0;
  std::vector<RawRecord> records;
  RatingsTable ratings;
};

// Deterministic synthetic stand-in for the real recordings. Every
// (subject, video) gets a uniformly drawn class; its ratings encode to that
// class and its samples are Gaussian around a class-specific mean. Class means
// differ by at least class_separation on every channel.
Dataset generate_synthetic(const DatasetConfig& config);

// Mean vector of class `id` for the synthetic generator.
std::vector<double> synthetic_class_mean(ClassId id, std::size_t channels, double separation);

// Standardizes each (subject, channel) group to zero mean and unit sample
// standard deviation. Record identity and order are preserved. Throws
// DegenerateChannelError for groups with fewer than two samples or zero
// variance.
std::vector<RawRecord> normalize(const std::vector<RawRecord>& records);

ClassId encode_label(const RatingTriple& rating);
ClassId encode_bits(const LabelBits& bits);
LabelBits decode_label(ClassId id);
LabelBits threshold_bits(const RatingTriple& rating);
void validate_rating(const RatingTriple& rating);

// CSV I/O. Signals: `subject,video,sample,ch1,...,chC`. Ratings:
// `subject,video,valence,arousal,dominance`.
Dataset load_raw(const std::filesystem::path& signals, const std::filesystem::path& ratings);
std::vector<RawRecord> read_signals(const std::filesystem::path& path, std::size_t* channels = nullptr);
RatingsTable read_ratings(const std::filesystem::path& path);
void write_signals(const std::filesystem::path& path, const std::vector<RawRecord>& records,
                   std::size_t channels);
void write_ratings(const std::filesystem::path& path, const RatingsTable& ratings);

}  // namespace emopipe
