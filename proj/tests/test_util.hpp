#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "frame/corpus.hpp"

namespace frame::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "frame") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string fixture(const std::string& rel) { return std::string(FRAME_FIXTURES) + "/" + rel; }

inline TaskInstance closed_instance(std::string id, std::string input, std::string gold,
                                    std::vector<std::string> choices = {"entailment", "neutral", "contradiction"}) {
  TaskInstance inst;
  inst.id = std::move(id);
  inst.input_text = std::move(input);
  inst.task_kind = TaskKind::closed_set;
  inst.choices = std::move(choices);
  inst.gold_label = std::move(gold);
  return inst;
}

}  // namespace frame::testing
