#include "xprobe/cache.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "xprobe/error.hpp"

namespace xprobe {

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, 16);
  return std::string(buf, ptr);
}

std::uint64_t parse_hex(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("cache: bad hex field '" + s + "'");
  }
  return v;
}

}  // namespace

std::size_t CacheKeyHash::operator()(const CacheKey& k) const noexcept {
  std::uint64_t h = mix64(k.oracle);
  h = mix64(h ^ k.image);
  h = mix64(h ^ k.baseline);
  h = mix64(h ^ k.grid);
  h = mix64(h ^ k.bits);
  h = mix64(h ^ k.label);
  return static_cast<std::size_t>(h);
}

std::uint64_t hash_string(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::optional<double> ConfidenceCache::find(const CacheKey& key) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    misses_.fetch_add(1, std::memory_order_relaxed);
    return std::nullopt;
  }
  hits_.fetch_add(1, std::memory_order_relaxed);
  return it->second;
}

double ConfidenceCache::insert(const CacheKey& key, double confidence) {
  std::unique_lock lock(mutex_);
  return entries_.try_emplace(key, confidence).first->second;
}

void ConfidenceCache::evict_image(std::uint64_t image_hash) {
  std::unique_lock lock(mutex_);
  std::erase_if(entries_, [image_hash](const auto& kv) { return kv.first.image == image_hash; });
}

void ConfidenceCache::clear() {
  std::unique_lock lock(mutex_);
  entries_.clear();
}

std::size_t ConfidenceCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

void ConfidenceCache::save_jsonl(const std::filesystem::path& path) const {
  std::vector<std::pair<CacheKey, double>> rows;
  {
    std::shared_lock lock(mutex_);
    rows.assign(entries_.begin(), entries_.end());
  }
  auto as_tuple = [](const CacheKey& k) {
    return std::tie(k.oracle, k.image, k.baseline, k.grid, k.bits, k.label);
  };
  std::sort(rows.begin(), rows.end(),
            [&](const auto& a, const auto& b) { return as_tuple(a.first) < as_tuple(b.first); });
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cache: cannot write '" + tmp + "'");
    for (const auto& [k, v] : rows) {
      nlohmann::json j{{"oracle", hex(k.oracle)}, {"image", hex(k.image)},
                       {"baseline", hex(k.baseline)}, {"grid", k.grid},
                       {"bits", hex(k.bits)},     {"label", k.label},
                       {"confidence", v}};
      out << j.dump() << '\n';
    }
  }
  std::filesystem::rename(tmp, path);
}

void ConfidenceCache::load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CacheKey k;
      k.oracle = parse_hex(j.at("oracle").get<std::string>());
      k.image = parse_hex(j.at("image").get<std::string>());
      k.baseline = parse_hex(j.at("baseline").get<std::string>());
      k.grid = j.at("grid").get<std::uint32_t>();
      k.bits = parse_hex(j.at("bits").get<std::string>());
      k.label = j.at("label").get<std::uint32_t>();
      insert(k, j.at("confidence").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("cache: " + path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace xprobe
