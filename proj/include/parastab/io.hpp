#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "parastab/errors.hpp"

namespace parastab {

/// Least-squares exponential fit |y(t)| ~ prefactor * exp(-rate t) through
/// log-norms; `rate` is the negated slope (positive = decaying).
struct DecayFit {
  double prefactor = 0.0;
  double rate = 0.0;
};

DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& norms);

/// Deterministic CSV emission: header row, %.17g doubles.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void row(const std::vector<double>& values);

 private:
  std::FILE* file_ = nullptr;
  std::size_t columns_ = 0;
};

/// Flat key-value configuration. Reads a minimal TOML subset
/// (key = value lines, [section] prefixes, # comments) or JSON (nested
/// objects flattened into dotted keys).
class Config {
 public:
  static Config from_file(const std::filesystem::path& path);
  static Config from_toml(const std::string& text);
  static Config from_json(const std::string& text);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  std::string str_or(const std::string& key, const std::string& fallback) const;
  bool flag_or(const std::string& key, bool fallback) const;
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  void set_number(const std::string& key, double value);

  /// Merge other on top of this (other wins).
  void merge(const Config& other);

  /// Sorted key=value lines; the manifest hash input.
  std::string canonical() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

std::uint64_t fnv1a_hash(const std::string& data);

/// Reproducibility record for one experiment run.
struct RunManifest {
  std::string experiment;
  Config config;
  std::uint64_t content_hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> outputs;  // label -> path
  std::map<std::string, double> stats;
  double wall_seconds = 0.0;

  void finalize_hash();
  std::string to_json() const;
  void write(const std::filesystem::path& path) const;
};

}  // namespace parastab
