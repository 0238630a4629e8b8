#pragma once
// Append-only JSONL inference cache keyed by content digest. Entries survive
// process restarts; later duplicates of a digest win on load (harmless, since
// entries for one digest are identical by construction).

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "promptstab/domain.hpp"

namespace promptstab::backend {

class PredictionCache {
 public:
  // Creates dir if needed and loads any existing entries from cache.jsonl.
  explicit PredictionCache(const std::filesystem::path& dir);

  std::optional<Prediction> get(const std::string& digest) const;

  // Persists immediately; flushed line-by-line so an interrupted run keeps
  // every completed entry.
  void put(const std::string& digest, const Prediction& prediction);

  std::size_t size() const;

 private:
  std::filesystem::path file_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, Prediction> entries_;
  std::ofstream out_;
};

}  // namespace promptstab::backend
