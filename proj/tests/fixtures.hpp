#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include <lsl/data_model.hpp>
#include <lsl/random.hpp>

namespace lsl::testing {

inline EmbeddingBundle random_bundle(const std::string& id, std::uint32_t L, std::uint32_t T, std::uint32_t d,
                                     Rng& rng) {
  EmbeddingBundle b;
  b.sentence_id = id;
  b.num_layers = L;
  b.num_tokens = T;
  b.dim = d;
  b.values.resize(b.expected_size());
  for (auto& v : b.values) v = static_cast<float>(normal(rng));
  return b;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh per-test scratch directory under the system temp dir.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lsl-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace lsl::testing
