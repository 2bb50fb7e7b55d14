#include "parastab/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace parastab {

DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& norms) {
  if (t.size() != norms.size()) throw DataError("fit_decay: length mismatch");
  const int n = static_cast<int>(t.size());
  if (n < 10) throw DataError("fit_decay: need at least 10 samples");
  double st = 0, sv = 0, stt = 0, stv = 0;
  for (int i = 0; i < n; ++i) {
    if (!(norms[i] > 0.0)) throw DataError("fit_decay: nonpositive norm sample");
    const double lv = std::log(norms[i]);
    st += t[i];
    sv += lv;
    stt += t[i] * t[i];
    stv += t[i] * lv;
  }
  const double denom = n * stt - st * st;
  if (denom == 0.0) throw DataError("fit_decay: degenerate time grid");
  const double slope = (n * stv - st * sv) / denom;
  const double intercept = (sv - slope * st) / n;
  return {std::exp(intercept), -slope};
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
    : columns_(columns.size()) {
  if (columns.empty()) throw DataError("CsvWriter: no columns");
  file_ = std::fopen(path.string().c_str(), "w");
  if (!file_) throw DataError("CsvWriter: cannot open " + path.string());
  for (std::size_t i = 0; i < columns.size(); ++i)
    std::fprintf(file_, "%s%s", columns[i].c_str(), i + 1 < columns.size() ? "," : "\n");
}

CsvWriter::~CsvWriter() {
  if (file_) std::fclose(file_);
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != columns_) throw DataError("CsvWriter: column count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i)
    std::fprintf(file_, "%.17g%s", values[i], i + 1 < values.size() ? "," : "\n");
}

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string strip_quotes(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

void flatten_json(const nlohmann::json& j, const std::string& prefix,
                  std::map<std::string, std::string>& out) {
  if (j.is_object()) {
    for (const auto& [key, value] : j.items())
      flatten_json(value, prefix.empty() ? key : prefix + "." + key, out);
  } else if (j.is_string()) {
    out[prefix] = j.get<std::string>();
  } else {
    out[prefix] = j.dump();
  }
}
}  // namespace

Config Config::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("Config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (path.extension() == ".json") return from_json(text);
  if (path.extension() == ".toml") return from_toml(text);
  // fall back on content sniffing
  const std::string t = trim(text);
  if (!t.empty() && t.front() == '{') return from_json(text);
  return from_toml(text);
}

Config Config::from_toml(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw DataError("Config: malformed section at line " + std::to_string(line_no));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("Config: expected key = value at line " + std::to_string(line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = strip_quotes(trim(line.substr(eq + 1)));
    if (key.empty()) throw DataError("Config: empty key at line " + std::to_string(line_no));
    cfg.entries_[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

Config Config::from_json(const std::string& text) {
  Config cfg;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("Config: JSON parse failure: ") + e.what());
  }
  flatten_json(j, "", cfg.entries_);
  return cfg;
}

double Config::number(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("Config: missing key " + key);
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used == 0) throw std::invalid_argument("empty");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("Config: key " + key + " is not a number: " + it->second);
  }
}

double Config::number_or(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

std::string Config::str_or(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

bool Config::flag_or(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  return it->second == "true" || it->second == "1" || it->second == "yes";
}

void Config::set_number(const std::string& key, double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  entries_[key] = buf;
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

std::uint64_t fnv1a_hash(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void RunManifest::finalize_hash() {
  content_hash = fnv1a_hash(experiment + "\n" + config.canonical());
}

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["experiment"] = experiment;
  char hex[19];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(content_hash));
  j["content_hash"] = hex;
  j["seed"] = seed;
  j["wall_seconds"] = wall_seconds;
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [k, v] : config.entries()) cfg[k] = v;
  j["config"] = cfg;
  nlohmann::json outs = nlohmann::json::object();
  for (const auto& [label, path] : outputs) outs[label] = path;
  j["outputs"] = outs;
  nlohmann::json st = nlohmann::json::object();
  for (const auto& [k, v] : stats) st[k] = v;
  j["stats"] = st;
  return j.dump(2);
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("RunManifest: cannot open " + path.string());
  out << to_json() << "\n";
}

}  // namespace parastab
