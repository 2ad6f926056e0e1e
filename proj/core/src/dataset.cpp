#include "lpa/dataset.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lpa/error.hpp"

namespace lpa {

bool same_point(const LabeledSample& a, const LabeledSample& b) {
  return a.frequency == b.frequency && a.params == b.params;
}

std::uint64_t point_hash(const ParamVector& p, FrequencyId f) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  const int fi = static_cast<int>(f);
  mix(&fi, sizeof fi);
  for (double w : p.widths) {
    const double v = w == 0.0 ? 0.0 : w;  // fold -0
    mix(&v, sizeof v);
  }
  return h;
}

const LabeledSample* LabeledSet::find(const ParamVector& p, FrequencyId f) const {
  const auto [lo, hi] = index_.equal_range(point_hash(p, f));
  for (auto it = lo; it != hi; ++it) {
    const LabeledSample& r = rows_[it->second];
    if (r.frequency == f && r.params == p) return &r;
  }
  return nullptr;
}

bool LabeledSet::contains(const ParamVector& p, FrequencyId f) const {
  return find(p, f) != nullptr;
}

void LabeledSet::add(LabeledSample s) {
  if (contains(s.params, s.frequency))
    throw ValidationError("duplicate labeled row (params, frequency)");
  index_.emplace(point_hash(s.params, s.frequency), rows_.size());
  rows_.push_back(std::move(s));
}

bool LabeledSet::intersects(const LabeledSet& other) const {
  const LabeledSet& small = size() <= other.size() ? *this : other;
  const LabeledSet& large = size() <= other.size() ? other : *this;
  for (const auto& r : small)
    if (large.contains(r.params, r.frequency)) return true;
  return false;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

void write_header(std::ostream& out, int layer_count) {
  for (int k = 1; k <= layer_count; ++k) out << 'w' << k << ',';
  out << "wavelength_nm,re_t,im_t,solver_seconds\n";
}

void write_row(std::ostream& out, const LabeledSample& s, int layer_count) {
  if (static_cast<int>(s.params.size()) != layer_count)
    throw ConfigError("dataset row has the wrong number of widths");
  for (double w : s.params.widths) out << format_double(w) << ',';
  out << format_double(wavelength_nm(s.frequency)) << ',' << format_double(s.t.real()) << ','
      << format_double(s.t.imag()) << ',' << format_double(s.solver_seconds) << '\n';
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw ConfigError("dataset line " + std::to_string(line_no) + ": bad number '" + s + "'");
  return v;
}

}  // namespace

void write_csv(std::ostream& out, const LabeledSet& set, int layer_count) {
  write_header(out, layer_count);
  for (const auto& s : set) write_row(out, s, layer_count);
}

void write_csv(const std::filesystem::path& path, const LabeledSet& set, int layer_count) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_csv(out, set, layer_count);
}

std::string to_csv(const LabeledSet& set, int layer_count) {
  std::ostringstream out;
  write_csv(out, set, layer_count);
  return out.str();
}

LabeledSet read_csv(std::istream& in, Provenance source) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset: missing header row");
  const auto header = split(line);
  const std::size_t tail = 4;
  if (header.size() < tail + 1) throw ConfigError("dataset: header too short");
  const std::size_t layers = header.size() - tail;
  for (std::size_t k = 0; k < layers; ++k)
    if (header[k] != "w" + std::to_string(k + 1))
      throw ConfigError("dataset: unexpected header column '" + header[k] + "'");
  const char* expected[] = {"wavelength_nm", "re_t", "im_t", "solver_seconds"};
  for (std::size_t k = 0; k < tail; ++k)
    if (header[layers + k] != expected[k])
      throw ConfigError("dataset: unexpected header column '" + header[layers + k] + "'");
  LabeledSet set;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw ConfigError("dataset line " + std::to_string(line_no) + ": wrong column count");
    LabeledSample s;
    s.params.widths.resize(layers);
    for (std::size_t k = 0; k < layers; ++k) s.params.widths[k] = parse_double(cells[k], line_no);
    s.frequency = frequency_from_wavelength(parse_double(cells[layers], line_no));
    s.t = {parse_double(cells[layers + 1], line_no), parse_double(cells[layers + 2], line_no)};
    s.solver_seconds = parse_double(cells[layers + 3], line_no);
    s.source = source;
    set.add(std::move(s));
  }
  return set;
}

LabeledSet read_csv(const std::filesystem::path& path, Provenance source) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  return read_csv(in, source);
}

std::string fingerprint(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

CsvAppender::CsvAppender(std::filesystem::path path, int layer_count)
    : path_(std::move(path)), layer_count_(layer_count) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path_) || std::filesystem::file_size(path_, ec) == 0;
  if (fresh) {
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path_.string());
    write_header(out, layer_count_);
  }
}

void CsvAppender::append(const LabeledSample& s) {
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw ConfigError("cannot append to " + path_.string());
  write_row(out, s, layer_count_);
}

}  // namespace lpa
