#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "lpa/geometry.hpp"

namespace lpa {

enum class Provenance { Init, Acquired, Baseline, Test, Node, Other };

struct LabeledSample {
  ParamVector params;
  FrequencyId frequency = FrequencyId::Blue;
  std::complex<double> t;
  double solver_seconds = 0.0;
  Provenance source = Provenance::Other;
  int iteration = 0;  // acquisition round for Provenance::Acquired
};

bool same_point(const LabeledSample& a, const LabeledSample& b);

// Ordered rows with no duplicate (params, frequency) pairs.
class LabeledSet {
 public:
  LabeledSet() = default;

  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const LabeledSample& operator[](std::size_t i) const { return rows_[i]; }
  const std::vector<LabeledSample>& rows() const { return rows_; }
  auto begin() const { return rows_.begin(); }
  auto end() const { return rows_.end(); }

  bool contains(const ParamVector& p, FrequencyId f) const;
  const LabeledSample* find(const ParamVector& p, FrequencyId f) const;
  // Throws ValidationError on a duplicate row.
  void add(LabeledSample s);
  bool intersects(const LabeledSet& other) const;

 private:
  std::vector<LabeledSample> rows_;
  std::unordered_multimap<std::uint64_t, std::size_t> index_;
};

std::uint64_t point_hash(const ParamVector& p, FrequencyId f);

// Shortest text form of a double that parses back to the same value.
std::string format_double(double v);

// CSV with header w1..wL, wavelength_nm, re_t, im_t, solver_seconds.
void write_csv(std::ostream& out, const LabeledSet& set, int layer_count);
void write_csv(const std::filesystem::path& path, const LabeledSet& set, int layer_count);
std::string to_csv(const LabeledSet& set, int layer_count);
LabeledSet read_csv(std::istream& in, Provenance source = Provenance::Other);
LabeledSet read_csv(const std::filesystem::path& path, Provenance source = Provenance::Other);

// FNV-1a 64 over bytes, hex encoded.
std::string fingerprint(const std::string& bytes);

// Appends rows to an existing CSV (writing the header first if the file is
// empty); used to keep partial datasets on disk.
class CsvAppender {
 public:
  CsvAppender(std::filesystem::path path, int layer_count);
  void append(const LabeledSample& s);

 private:
  std::filesystem::path path_;
  int layer_count_;
};

}  // namespace lpa
