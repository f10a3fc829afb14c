#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "embench/common.hpp"
#include "embench/embedstore.hpp"

namespace testutil {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("embench_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
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

inline std::vector<std::string> make_ids(std::size_t n, const std::string& prefix = "s") {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(1000 + i));
  return ids;
}

inline embench::EmbeddingSet random_set(embench::CounterRng& rng, std::size_t n, std::size_t d,
                                        const std::string& prefix = "s") {
  std::vector<float> data(n * d);
  for (auto& v : data) v = static_cast<float>(rng.normal());
  return embench::EmbeddingSet(make_ids(n, prefix), d, std::move(data));
}

inline std::vector<int> random_labels(embench::CounterRng& rng, std::size_t n, int classes) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  return y;
}

}  // namespace testutil
