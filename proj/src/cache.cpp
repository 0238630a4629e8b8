#include "promptstab/cache.hpp"

#include <json.hpp>

#include "promptstab/util.hpp"

namespace promptstab::backend {

using nlohmann::json;

PredictionCache::PredictionCache(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  file_ = dir / "cache.jsonl";

  if (std::filesystem::exists(file_)) {
    const std::string content = util::read_file(file_.string());
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= content.size()) {
      const std::size_t end = content.find('\n', start);
      const std::string line =
          content.substr(start, end == std::string::npos ? std::string::npos : end - start);
      ++line_no;
      start = end == std::string::npos ? content.size() + 1 : end + 1;
      if (util::trim_copy(line).empty()) continue;
      try {
        const json j = json::parse(line);
        entries_[j.at("digest").get<std::string>()] = j.at("prediction").get<Prediction>();
      } catch (const std::exception& e) {
        throw std::runtime_error("cache " + file_.string() + " line " + std::to_string(line_no) +
                                 ": " + e.what());
      }
    }
  }

  out_.open(file_, std::ios::app);
  if (!out_) {
    throw std::runtime_error("cache: cannot open " + file_.string() + " for append");
  }
}

std::optional<Prediction> PredictionCache::get(const std::string& digest) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find(digest);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void PredictionCache::put(const std::string& digest, const Prediction& prediction) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto [it, inserted] = entries_.emplace(digest, prediction);
  if (!inserted) return;
  json j{{"digest", digest}, {"prediction", prediction}};
  out_ << j.dump() << '\n';
  out_.flush();
}

std::size_t PredictionCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.size();
}

}  // namespace promptstab::backend
