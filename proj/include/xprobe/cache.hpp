#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <string_view>
#include <unordered_map>

namespace xprobe {

// Identity of one oracle evaluation: which model, which source image, which
// baseline, which patch subset of which grid, which class.
struct CacheKey {
  std::uint64_t oracle = 0;
  std::uint64_t image = 0;
  std::uint64_t baseline = 0;
  std::uint32_t grid = 0;  // rows << 16 | cols; 0 for non-grid images
  std::uint64_t bits = 0;
  std::uint32_t label = 0;

  friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

struct CacheKeyHash {
  std::size_t operator()(const CacheKey& k) const noexcept;
};

std::uint64_t hash_string(std::string_view text);

/// Memo of oracle confidences, shared by every computation on a model.
///
/// Concurrent reads; insertion is first-writer-wins per key so a reader
/// always sees the value that was stored.
class ConfidenceCache {
 public:
  ConfidenceCache() = default;
  ConfidenceCache(const ConfidenceCache&) = delete;
  ConfidenceCache& operator=(const ConfidenceCache&) = delete;

  std::optional<double> find(const CacheKey& key) const;
  // Returns the stored value (the existing one if the key was present).
  double insert(const CacheKey& key, double confidence);

  // Drops every entry of one source image.
  void evict_image(std::uint64_t image_hash);
  void clear();

  std::size_t size() const;
  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }

  // JSONL persistence; one entry per line, written in key order.
  void save_jsonl(const std::filesystem::path& path) const;
  void load_jsonl(const std::filesystem::path& path);

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<CacheKey, double, CacheKeyHash> entries_;
  mutable std::atomic<std::size_t> hits_{0};
  mutable std::atomic<std::size_t> misses_{0};
};

}  // namespace xprobe
