#pragma once
// Shared fixtures for the test binaries.

#include <atomic>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <unistd.h>

#include "promptstab/domain.hpp"

namespace testutil {

using namespace promptstab;

inline Task abc_task() {
  Task task;
  task.id = "demo";
  task.label_set = {"alpha", "beta", "gamma"};
  task.input_fields = {"text"};
  return task;
}

inline Task binary_task() {
  Task task;
  task.id = "binary";
  task.label_set = {"yes", "no"};
  task.input_fields = {"text"};
  return task;
}

inline Example make_example(std::string id, std::string text, std::string gold) {
  Example example;
  example.id = std::move(id);
  example.inputs["text"] = std::move(text);
  example.gold_label = std::move(gold);
  return example;
}

// Probabilities given in label_set order.
inline Prediction probs_of(const Task& task, const std::vector<double>& values) {
  std::map<std::string, double> probs;
  for (size_t i = 0; i < task.label_set.size(); ++i) probs[task.label_set[i]] = values[i];
  return Prediction::from_probs(task, std::move(probs), "");
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("promptstab-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testutil
